//! Key-part recognition and grasp-point selection.
//!
//! Recognition seeds a snake at every entropy peak, describes the enclosed
//! region with a VFH and votes with the k-NN model. Grasp points are then
//! picked among vesselness peaks: around the neck for shirts, inside the
//! waist for pants.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::Point2;
use thiserror::Error;

use crate::contours::{self, Contour, ContourError, EdgeField, Mask, SnakeParams};
use crate::descriptors::{self, Classification, DescriptorError, GarmentLabel, KnnModel, RegionConfig};
use crate::geometry::{self, DepthImage, GeometryError, Pixel};
use crate::wrinkle::{self, PeakList, Threshold, VesselnessMap, VesselnessParams, WrinkleError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("image has no valid depth")]
    EmptyImage,
    #[error("model has no entries")]
    UntrainedModel,
    #[error("no key part found")]
    NoKeyPart,
    #[error("key part {label} found but no grasp candidates survived")]
    NoGraspCandidates { label: GarmentLabel },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Wrinkle(#[from] WrinkleError),
    #[error(transparent)]
    Contour(#[from] ContourError),
    #[error(transparent)]
    Descriptor(#[from] DescriptorError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub region: RegionConfig,
    /// Normal radius for the entropy map, meters.
    pub entropy_normal_radius: f64,
    /// Side of the entropy window, pixels.
    pub entropy_window: usize,
    pub entropy_peak_radius: usize,
    pub entropy_threshold: Threshold,
    /// Strongest entropy peaks evaluated per image.
    pub max_candidates: usize,
    pub snake: SnakeParams,
    /// Square region used when a snake collapses or loses its seed.
    pub fallback_window: usize,
    pub k: usize,
    pub vesselness: VesselnessParams,
    pub vessel_peak_radius: usize,
    pub vessel_threshold: Threshold,
    pub dilation_radius: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            region: RegionConfig::default(),
            entropy_normal_radius: 0.02,
            entropy_window: 21,
            entropy_peak_radius: 11,
            entropy_threshold: Threshold::Percentile(0.6),
            max_candidates: 40,
            // Wider start and stronger edge pull than the bare snake defaults:
            // seeds land anywhere inside a collar or waist opening.
            snake: SnakeParams {
                gamma: 10.0,
                kappa: 10.0,
                init_radius: 70.0,
                max_iters: 1000,
                ..SnakeParams::default()
            },
            fallback_window: 61,
            k: 10,
            vesselness: VesselnessParams::default(),
            // Band crests are narrow; coarser suppression drops one side.
            vessel_peak_radius: 6,
            vessel_threshold: Threshold::Percentile(0.5),
            dilation_radius: 7,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KeyPartDetection {
    pub label: GarmentLabel,
    pub contour: Contour,
    pub mask: Mask,
    pub seed_peak: Pixel,
    pub classification: Classification,
    /// True when the fixed window replaced a degenerate snake.
    pub fallback_region: bool,
}

/// Outcome of a pair-selection rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PointSelection {
    Pair {
        a: Pixel,
        b: Pixel,
        score: f64,
    },
    /// Only one candidate survived filtering.
    Single(Pixel),
    NoCandidates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GraspResult {
    pub detection: KeyPartDetection,
    /// Lower-confidence detections, for diagnostics.
    pub others: Vec<KeyPartDetection>,
    pub point_a: Pixel,
    pub point_b: Pixel,
    /// Vesselness peaks the points were chosen from.
    pub candidates: PeakList,
    /// Line-to-center distance (neck) or summed endpoint distance (waist).
    pub selection_score: f64,
    /// Set when only one candidate survived; then `point_a == point_b`.
    pub degraded: bool,
}

/// Perpendicular distance from `p` to the line through `a` and `b`, or the
/// distance to `a` when the line is degenerate.
pub fn point_to_line_distance(p: Pixel, a: Pixel, b: Pixel) -> f64 {
    if a == b {
        return p.distance(a);
    }
    let (dx, dy) = (f64::from(b.x - a.x), f64::from(b.y - a.y));
    let cross = dx * f64::from(p.y - a.y) - dy * f64::from(p.x - a.x);
    cross.abs() / dx.hypot(dy)
}

/// First pair `(i, j)`, `i < j`, with the smallest score.
fn best_pair(candidates: &[Pixel], score: impl Fn(Pixel, Pixel) -> f64) -> PointSelection {
    match candidates.len() {
        0 => return PointSelection::NoCandidates,
        1 => return PointSelection::Single(candidates[0]),
        _ => {}
    }
    let mut best = (0, 1, f64::INFINITY);
    for i in 0..candidates.len() {
        for j in i + 1..candidates.len() {
            let s = score(candidates[i], candidates[j]);
            if s < best.2 {
                best = (i, j, s);
            }
        }
    }
    PointSelection::Pair { a: candidates[best.0], b: candidates[best.1], score: best.2 }
}

/// Neck rule: among peaks in the ring just outside the key-part mask, the
/// pair whose line passes closest to the mask center.
pub fn select_points_neck(
    mask: &Mask,
    peaks: &PeakList,
    dilation_radius: usize,
) -> Result<PointSelection, ContourError> {
    let center = contours::mask_center(mask)?;
    let ring = contours::dilate_mask(mask, dilation_radius.max(1)).and_not(mask);
    let candidates: Vec<Pixel> = peaks.pixels().filter(|p| ring.contains(*p)).collect();
    Ok(best_pair(&candidates, |a, b| point_to_line_distance(center, a, b)))
}

/// Waist rule: among peaks inside the mask, the pair closest to the mask's
/// two extreme points. `a` is the point matched with the first extreme.
pub fn select_points_waist(mask: &Mask, peaks: &PeakList) -> Result<PointSelection, ContourError> {
    let (e1, e2) = contours::extreme_points(mask)?;
    let candidates: Vec<Pixel> = peaks.pixels().filter(|p| mask.contains(*p)).collect();
    let sel = best_pair(&candidates, |a, b| (a.distance(e1) + b.distance(e2)).min(a.distance(e2) + b.distance(e1)));
    Ok(match sel {
        PointSelection::Pair { a, b, score } if b.distance(e1) + a.distance(e2) < a.distance(e1) + b.distance(e2) => {
            PointSelection::Pair { a: b, b: a, score }
        }
        other => other,
    })
}

fn square_contour(center: Pixel, side: usize, width: usize, height: usize) -> Result<Contour, ContourError> {
    let half = (side as f64 - 1.0) / 2.0;
    let (xmax, ymax) = ((width - 1) as f64, (height - 1) as f64);
    let (cx, cy) = (f64::from(center.x), f64::from(center.y));
    let (x0, x1) = ((cx - half).max(0.0), (cx + half).min(xmax));
    let (y0, y1) = ((cy - half).max(0.0), (cy + half).min(ymax));
    Contour::new(vec![Point2::new(x0, y0), Point2::new(x1, y0), Point2::new(x1, y1), Point2::new(x0, y1)])
}

/// Snake region around `seed`, or the fixed window when the snake collapses
/// below 3 px² or no longer encloses the seed.
fn local_region(field: &EdgeField, seed: Pixel, cfg: &PipelineConfig) -> Result<(Contour, Mask, bool), DetectError> {
    let (w, h) = (field.width(), field.height());
    let trace = contours::evolve_snake_traced(field, seed, &cfg.snake)?;
    if trace.contour.area() >= 3.0 {
        let mask = contours::contour_to_mask(&trace.contour, w, h);
        if mask.contains(seed) {
            return Ok((trace.contour, mask, false));
        }
    }
    let contour = square_contour(seed, cfg.fallback_window, w, h)?;
    let mask = contours::contour_to_mask(&contour, w, h);
    Ok((contour, mask, true))
}

fn no_detection() -> Classification {
    Classification {
        label: GarmentLabel::NoDetection,
        votes: BTreeMap::new(),
        summed_distance: BTreeMap::new(),
        neighbors: Vec::new(),
    }
}

/// Entropy peaks that seed recognition, strongest first.
pub fn entropy_peaks(img: &DepthImage, cfg: &PipelineConfig) -> Result<(wrinkle::EntropyMap, PeakList), DetectError> {
    let cloud = geometry::depth_to_cloud(img, &cfg.region.intrinsics)?;
    let normals = geometry::estimate_normals(&cloud, cfg.entropy_normal_radius)?;
    let entropy = wrinkle::entropy_filter(&normals, cfg.entropy_window)?;
    let threshold = cfg.entropy_threshold.resolve(&entropy.map);
    let peaks =
        wrinkle::find_local_maxima(&entropy.map, cfg.entropy_peak_radius, threshold).truncated(cfg.max_candidates);
    Ok((entropy, peaks))
}

/// Key-part recognition over precomputed entropy peaks.
pub fn recognize_from_peaks(
    img: &DepthImage,
    model: &KnnModel,
    peaks: &PeakList,
    cfg: &PipelineConfig,
) -> Result<Vec<KeyPartDetection>, DetectError> {
    if model.is_empty() {
        return Err(DetectError::UntrainedModel);
    }
    let field = EdgeField::new(img, cfg.snake.edge_sigma);
    let mut all = Vec::with_capacity(peaks.len());
    for seed in peaks.pixels() {
        let (contour, mask, fallback_region) = local_region(&field, seed, cfg)?;
        let classification = match descriptors::describe_region(img, &mask, &cfg.region) {
            Ok(d) => descriptors::knn_classify(model, &d, cfg.k)?,
            Err(DescriptorError::TooFewPoints { .. } | DescriptorError::Degenerate(_)) => no_detection(),
            Err(e) => return Err(e.into()),
        };
        all.push(KeyPartDetection {
            label: classification.label,
            contour,
            mask,
            seed_peak: seed,
            classification,
            fallback_region,
        });
    }
    Ok(select_labels(all))
}

/// Keeps the most confident detection per label and sorts the survivors by
/// confidence; `NoDetection` entries go last.
pub fn select_labels(all: Vec<KeyPartDetection>) -> Vec<KeyPartDetection> {
    let mut best: BTreeMap<GarmentLabel, KeyPartDetection> = BTreeMap::new();
    for d in all {
        match best.get(&d.label) {
            Some(cur) if d.classification.confidence_cmp(&cur.classification) != Ordering::Less => {}
            _ => {
                best.insert(d.label, d);
            }
        }
    }
    let mut out: Vec<KeyPartDetection> = best.into_values().collect();
    out.sort_by(|a, b| {
        a.label
            .is_key_part()
            .cmp(&b.label.is_key_part())
            .reverse()
            .then_with(|| a.classification.confidence_cmp(&b.classification))
    });
    out
}

/// Candidate key parts, most confident first.
pub fn recognize_garment_part(
    img: &DepthImage,
    model: &KnnModel,
    cfg: &PipelineConfig,
) -> Result<Vec<KeyPartDetection>, DetectError> {
    if model.is_empty() {
        return Err(DetectError::UntrainedModel);
    }
    if img.valid_count() == 0 {
        return Err(DetectError::EmptyImage);
    }
    let (_, peaks) = entropy_peaks(img, cfg)?;
    recognize_from_peaks(img, model, &peaks, cfg)
}

/// Vesselness map and its peaks.
pub fn vesselness_peaks(img: &DepthImage, cfg: &PipelineConfig) -> Result<(VesselnessMap, PeakList), DetectError> {
    let vmap = wrinkle::multiscale_vesselness(img, &cfg.vesselness)?;
    let threshold = cfg.vessel_threshold.resolve(&vmap.map);
    let peaks = wrinkle::find_local_maxima(&vmap.map, cfg.vessel_peak_radius, threshold);
    Ok((vmap, peaks))
}

/// Applies the class-specific rule to a recognized key part.
pub fn select_for_label(
    detection: &KeyPartDetection,
    peaks: &PeakList,
    cfg: &PipelineConfig,
) -> Result<PointSelection, DetectError> {
    Ok(match detection.label {
        GarmentLabel::NeckShirt | GarmentLabel::NeckTShirt => {
            select_points_neck(&detection.mask, peaks, cfg.dilation_radius)?
        }
        GarmentLabel::WaistPant => select_points_waist(&detection.mask, peaks)?,
        GarmentLabel::NoDetection => PointSelection::NoCandidates,
    })
}

/// Full detection: recognition, then grasp selection on the top key part.
pub fn detect_grasp_points(
    img: &DepthImage,
    model: &KnnModel,
    cfg: &PipelineConfig,
) -> Result<GraspResult, DetectError> {
    let mut detections = recognize_garment_part(img, model, cfg)?;
    if !detections.first().is_some_and(|d| d.label.is_key_part()) {
        return Err(DetectError::NoKeyPart);
    }
    let detection = detections.remove(0);
    let (_, candidates) = vesselness_peaks(img, cfg)?;
    let (point_a, point_b, selection_score, degraded) = match select_for_label(&detection, &candidates, cfg)? {
        PointSelection::Pair { a, b, score } => (a, b, score, false),
        PointSelection::Single(p) => (p, p, 0.0, true),
        PointSelection::NoCandidates => return Err(DetectError::NoGraspCandidates { label: detection.label }),
    };
    Ok(GraspResult { detection, others: detections, point_a, point_b, candidates, selection_score, degraded })
}
