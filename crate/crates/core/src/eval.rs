//! Grasp-point evaluation: square-region IoU, point matching, recall and the
//! key-part confusion matrix.

use std::fmt::Write as _;

use thiserror::Error;

use crate::descriptors::GarmentLabel;
use crate::geometry::Pixel;
use crate::io::annotations::AnnotationRecord;

/// Side of the square evaluated around every grasp point.
pub const REGION_SIDE: usize = 51;
/// A point counts as correct above this IoU.
pub const CORRECT_IOU: f64 = 0.5;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EvalError {
    #[error("no ground-truth points")]
    NoTruth,
    #[error("record {index}: detection id `{detected}` does not match annotation id `{expected}`")]
    IdMismatch { index: usize, detected: String, expected: String },
    #[error("{detections} detections for {annotations} annotations")]
    LengthMismatch { detections: usize, annotations: usize },
}

/// Axis-aligned square around `center`, clipped to a `width x height` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub center: Pixel,
    pub side: usize,
    pub width: usize,
    pub height: usize,
}

impl Rect {
    pub fn new(center: Pixel, side: usize, width: usize, height: usize) -> Self {
        assert!(side >= 1, "rect side must be at least 1");
        Self { center, side, width, height }
    }

    /// Inclusive clipped corners `(x0, y0, x1, y1)`, or `None` when nothing
    /// of the square is inside the image.
    pub fn corners(&self) -> Option<(i64, i64, i64, i64)> {
        let lo = (self.side as i64 - 1) / 2;
        let hi = self.side as i64 - 1 - lo;
        let (cx, cy) = (i64::from(self.center.x), i64::from(self.center.y));
        let x0 = (cx - lo).max(0);
        let y0 = (cy - lo).max(0);
        let x1 = (cx + hi).min(self.width as i64 - 1);
        let y1 = (cy + hi).min(self.height as i64 - 1);
        (x0 <= x1 && y0 <= y1).then_some((x0, y0, x1, y1))
    }

    pub fn area(&self) -> i64 {
        self.corners().map_or(0, |(x0, y0, x1, y1)| (x1 - x0 + 1) * (y1 - y0 + 1))
    }
}

/// Pixel-count intersection over union; 0 when the union is empty.
pub fn iou(a: &Rect, b: &Rect) -> f64 {
    let inter = match (a.corners(), b.corners()) {
        (Some((ax0, ay0, ax1, ay1)), Some((bx0, by0, bx1, by1))) => {
            let w = ax1.min(bx1) - ax0.max(bx0) + 1;
            let h = ay1.min(by1) - ay0.max(by0) + 1;
            if w > 0 && h > 0 {
                w * h
            } else {
                0
            }
        }
        _ => 0,
    };
    let union = a.area() + b.area() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Result of pairing detections with ground truth in one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMatch {
    /// IoU of each truth point with its assigned detection (0 if none).
    pub per_truth: Vec<f64>,
    pub best: f64,
    /// Mean over truth points.
    pub mean: f64,
}

impl PointMatch {
    pub fn correct(&self) -> usize {
        self.per_truth.iter().filter(|&&v| v > CORRECT_IOU).count()
    }
}

/// Assignment of detected to truth points maximizing the summed IoU. The
/// first assignment in enumeration order wins ties.
pub fn match_points(
    detected: &[Pixel],
    truth: &[Pixel],
    side: usize,
    width: usize,
    height: usize,
) -> Result<PointMatch, EvalError> {
    if truth.is_empty() {
        return Err(EvalError::NoTruth);
    }
    let rect = |p: Pixel| Rect::new(p, side, width, height);
    let scores: Vec<Vec<f64>> =
        truth.iter().map(|&t| detected.iter().map(|&d| iou(&rect(t), &rect(d))).collect()).collect();
    let mut best_assign: Vec<Option<usize>> = vec![None; truth.len()];
    let mut best_sum = -1.0;
    let mut current = vec![None; truth.len()];
    fn search(
        ti: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        scores: &[Vec<f64>],
        best_sum: &mut f64,
        best_assign: &mut Vec<Option<usize>>,
    ) {
        if ti == current.len() {
            let s: f64 = current.iter().enumerate().map(|(t, d)| d.map_or(0.0, |d| scores[t][d])).sum();
            if s > *best_sum {
                *best_sum = s;
                best_assign.clone_from(current);
            }
            return;
        }
        for d in 0..used.len() {
            if !used[d] {
                used[d] = true;
                current[ti] = Some(d);
                search(ti + 1, used, current, scores, best_sum, best_assign);
                used[d] = false;
            }
        }
        // Leaving this truth point unmatched is only needed when detections
        // run out.
        if used.iter().filter(|u| !**u).count() < current.len() - ti {
            current[ti] = None;
            search(ti + 1, used, current, scores, best_sum, best_assign);
        }
    }
    search(0, &mut vec![false; detected.len()], &mut current, &scores, &mut best_sum, &mut best_assign);
    let per_truth: Vec<f64> = best_assign.iter().enumerate().map(|(t, d)| d.map_or(0.0, |d| scores[t][d])).collect();
    let best = per_truth.iter().copied().fold(0.0, f64::max);
    let mean = per_truth.iter().sum::<f64>() / truth.len() as f64;
    Ok(PointMatch { per_truth, best, mean })
}

/// What the detector reported for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageDetection {
    pub id: String,
    /// `NoDetection` when nothing was found.
    pub label: GarmentLabel,
    pub points: Vec<Pixel>,
}

/// Rows are truth labels, columns predictions, both in [`GarmentLabel::ALL`]
/// order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub counts: [[usize; 4]; 4],
}

impl ConfusionMatrix {
    pub fn add(&mut self, truth: GarmentLabel, predicted: GarmentLabel) {
        self.counts[truth.index()][predicted.index()] += 1;
    }

    /// Row-normalized percentages; empty rows stay zero.
    pub fn percentages(&self) -> [[f64; 4]; 4] {
        let mut out = [[0.0; 4]; 4];
        for (r, row) in self.counts.iter().enumerate() {
            let total: usize = row.iter().sum();
            if total > 0 {
                for c in 0..4 {
                    out[r][c] = 100.0 * row[c] as f64 / total as f64;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ClassStats {
    pub images: usize,
    /// Mean over images of the per-image mean IoU.
    pub mean_iou: f64,
    /// Mean over images of the per-image best-point IoU.
    pub best_iou: f64,
    /// Percent of images with at least one correct point.
    pub recall_one: f64,
    /// Percent of images with two correct points.
    pub recall_two: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageDiagnostics {
    pub id: String,
    pub truth: GarmentLabel,
    pub predicted: GarmentLabel,
    pub matched: Option<PointMatch>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    /// Indexed like [`GarmentLabel::ALL`]; the ND entry stays empty.
    pub per_class: [ClassStats; 4],
    pub confusion: ConfusionMatrix,
    pub images: Vec<ImageDiagnostics>,
}

/// Scores aligned detection and annotation lists.
pub fn evaluate(
    detections: &[ImageDetection],
    annotations: &[AnnotationRecord],
    width: usize,
    height: usize,
) -> Result<EvalReport, EvalError> {
    if detections.len() != annotations.len() {
        return Err(EvalError::LengthMismatch { detections: detections.len(), annotations: annotations.len() });
    }
    let mut confusion = ConfusionMatrix::default();
    let mut sums = [[0.0f64; 4]; 4];
    let mut counts = [0usize; 4];
    let mut images = Vec::with_capacity(detections.len());
    for (index, (d, a)) in detections.iter().zip(annotations).enumerate() {
        if d.id != a.id {
            return Err(EvalError::IdMismatch { index, detected: d.id.clone(), expected: a.id.clone() });
        }
        confusion.add(a.label, d.label);
        let matched = if a.grasp_points.is_empty() {
            None
        } else {
            Some(match_points(&d.points, &a.grasp_points, REGION_SIDE, width, height)?)
        };
        if let (true, Some(m)) = (a.label.is_key_part(), &matched) {
            let c = a.label.index();
            counts[c] += 1;
            sums[c][0] += m.mean;
            sums[c][1] += m.best;
            sums[c][2] += f64::from(u8::from(m.correct() >= 1));
            sums[c][3] += f64::from(u8::from(m.correct() >= 2));
        }
        images.push(ImageDiagnostics { id: a.id.clone(), truth: a.label, predicted: d.label, matched });
    }
    let per_class = std::array::from_fn(|c| {
        let n = counts[c];
        if n == 0 {
            return ClassStats::default();
        }
        let f = n as f64;
        ClassStats {
            images: n,
            mean_iou: sums[c][0] / f,
            best_iou: sums[c][1] / f,
            recall_one: 100.0 * sums[c][2] / f,
            recall_two: 100.0 * sums[c][3] / f,
        }
    });
    Ok(EvalReport { per_class, confusion, images })
}

impl EvalReport {
    /// `key = value` lines, six decimals throughout.
    pub fn to_structured(&self) -> String {
        let mut out = String::from("# grasp evaluation report\n");
        for label in &GarmentLabel::ALL[..3] {
            let s = &self.per_class[label.index()];
            let code = label.code();
            let _ = writeln!(out, "class.{code}.images = {}", s.images);
            let _ = writeln!(out, "class.{code}.mean_iou = {:.6}", s.mean_iou);
            let _ = writeln!(out, "class.{code}.best_iou = {:.6}", s.best_iou);
            let _ = writeln!(out, "class.{code}.recall_1 = {:.6}", s.recall_one);
            let _ = writeln!(out, "class.{code}.recall_2 = {:.6}", s.recall_two);
        }
        for truth in GarmentLabel::ALL {
            for pred in GarmentLabel::ALL {
                let _ = writeln!(
                    out,
                    "confusion.{}.{} = {}",
                    truth.code(),
                    pred.code(),
                    self.confusion.counts[truth.index()][pred.index()]
                );
            }
        }
        for img in &self.images {
            let (best, mean) = img.matched.as_ref().map_or((0.0, 0.0), |m| (m.best, m.mean));
            let _ = writeln!(
                out,
                "image.{} = truth {} predicted {} best_iou {best:.6} mean_iou {mean:.6}",
                img.id, img.truth, img.predicted
            );
        }
        out
    }

    /// Human-readable confusion matrix and grasp-point tables.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        out.push_str("Key-part recognition (% of truth row)\n");
        out.push_str("truth\\pred        NS         NTS          W          ND\n");
        let pct = self.confusion.percentages();
        for truth in GarmentLabel::ALL {
            let _ = write!(out, "{:<10}", truth.code());
            for v in pct[truth.index()] {
                let _ = write!(out, " {v:>10.6}");
            }
            out.push('\n');
        }
        out.push_str(
            "\nGrasp points\nclass  images    mean_iou    best_iou  recall_1%%  recall_2%%\n"
                .replace("%%", "%")
                .as_str(),
        );
        for label in &GarmentLabel::ALL[..3] {
            let s = &self.per_class[label.index()];
            let _ = writeln!(
                out,
                "{:<5} {:>7} {:>11.6} {:>11.6} {:>10.6} {:>10.6}",
                label.code(),
                s.images,
                s.mean_iou,
                s.best_iou,
                s.recall_one,
                s.recall_two
            );
        }
        out
    }
}
