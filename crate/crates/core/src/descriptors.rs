//! Viewpoint feature histograms and the k-NN key-part classifier.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Point3, Vector3};
use thiserror::Error;

use crate::contours::Mask;
use crate::geometry::{self, CameraIntrinsics, DepthImage, GeometryError, NormalMap, PointCloud, INVALID_DEPTH};

pub const SHAPE_BINS: usize = 45;
pub const VIEWPOINT_BINS: usize = 128;
pub const VFH_BINS: usize = 4 * SHAPE_BINS + VIEWPOINT_BINS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("region has {0} usable points, need at least 2")]
    Degenerate(usize),
    #[error("region has {found} points after voxel filtering, need {required}")]
    TooFewPoints { found: usize, required: usize },
    #[error("descriptor must have {VFH_BINS} bins, got {0}")]
    BinCount(usize),
    #[error("descriptor bin {index} is negative or not finite: {value}")]
    BadBin { index: usize, value: f64 },
    #[error("cloud and normal map sizes differ ({0} vs {1})")]
    SizeMismatch(usize, usize),
    #[error("model is empty")]
    EmptyModel,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("no usable training samples ({skipped} skipped)")]
    NoUsableSamples { skipped: usize },
    #[error("model line {line}: {message}")]
    ModelFormat { line: usize, message: String },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// 308-bin VFH: three 45-bin angle histograms, a 45-bin centroid-distance
/// histogram and a 128-bin viewpoint histogram, each normalized to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct VfhDescriptor {
    bins: Vec<f64>,
}

impl VfhDescriptor {
    pub fn new(bins: Vec<f64>) -> Result<Self, DescriptorError> {
        if bins.len() != VFH_BINS {
            return Err(DescriptorError::BinCount(bins.len()));
        }
        if let Some((index, &value)) = bins.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
            return Err(DescriptorError::BadBin { index, value });
        }
        Ok(Self { bins })
    }

    pub fn bins(&self) -> &[f64] {
        &self.bins
    }

    /// Block `i` in 0..5; block 4 is the viewpoint histogram.
    pub fn block(&self, i: usize) -> &[f64] {
        assert!(i < 5, "VFH has five blocks");
        if i < 4 {
            &self.bins[i * SHAPE_BINS..(i + 1) * SHAPE_BINS]
        } else {
            &self.bins[4 * SHAPE_BINS..]
        }
    }
}

/// Key-part classes. `NoDetection` never appears in a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GarmentLabel {
    NeckShirt,
    NeckTShirt,
    WaistPant,
    NoDetection,
}

impl GarmentLabel {
    /// Row/column order of the confusion matrix.
    pub const ALL: [GarmentLabel; 4] =
        [GarmentLabel::NeckShirt, GarmentLabel::NeckTShirt, GarmentLabel::WaistPant, GarmentLabel::NoDetection];

    pub fn code(self) -> &'static str {
        match self {
            GarmentLabel::NeckShirt => "NS",
            GarmentLabel::NeckTShirt => "NTS",
            GarmentLabel::WaistPant => "W",
            GarmentLabel::NoDetection => "ND",
        }
    }

    pub fn index(self) -> usize {
        Self::ALL.iter().position(|&l| l == self).unwrap()
    }

    pub fn is_key_part(self) -> bool {
        self != GarmentLabel::NoDetection
    }
}

// Labels order lexicographically by code, which is the final tie-break of
// the k-NN vote.
impl Ord for GarmentLabel {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.code().cmp(other.code())
    }
}

impl PartialOrd for GarmentLabel {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for GarmentLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("unknown garment label `{0}`")]
pub struct UnknownLabel(pub String);

impl FromStr for GarmentLabel {
    type Err = UnknownLabel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL.iter().copied().find(|l| l.code() == s).ok_or_else(|| UnknownLabel(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceMetric {
    #[default]
    ChiSquare,
    Euclidean,
}

impl DistanceMetric {
    pub fn distance(self, a: &VfhDescriptor, b: &VfhDescriptor) -> f64 {
        match self {
            DistanceMetric::ChiSquare => chi_square(a.bins(), b.bins()),
            DistanceMetric::Euclidean => {
                a.bins().iter().zip(b.bins()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
            }
        }
    }
}

/// `sum (a - b)^2 / (a + b)` over bins where `a + b > 0`.
pub fn chi_square(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let s = x + y;
            if s > 0.0 {
                (x - y) * (x - y) / s
            } else {
                0.0
            }
        })
        .sum()
}

#[inline]
fn bin_of(value: f64, lo: f64, hi: f64, bins: usize) -> usize {
    let t = ((value - lo) / (hi - lo) * bins as f64).floor();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

/// Darboux-frame features of `(p1, n1)` against `(p2, n2)`: the signed
/// in-plane angle, two cosines, or `None` when the frame is undefined.
fn pair_features(p1: &Point3<f64>, n1: &Vector3<f64>, p2: &Point3<f64>, n2: &Vector3<f64>) -> Option<[f64; 3]> {
    let mut dp = p2 - p1;
    let len = dp.norm();
    if len == 0.0 {
        return None;
    }
    let (mut u, mut n_other) = (n1, n2);
    let a1 = n1.dot(&dp) / len;
    let a2 = n2.dot(&dp) / len;
    // Use the point whose normal is closer to the connecting line as source.
    let f3 = if a1.abs().acos() > a2.abs().acos() {
        u = n2;
        n_other = n1;
        dp = -dp;
        -a2
    } else {
        a1
    };
    let v = dp.cross(u);
    let v_norm = v.norm();
    if v_norm == 0.0 {
        return None;
    }
    let v = v / v_norm;
    let w = u.cross(&v);
    let f2 = v.dot(n_other);
    let f1 = w.dot(n_other).atan2(u.dot(n_other));
    Some([f1, f2, f3])
}

fn normalize_block(block: &mut [f64]) {
    let total: f64 = block.iter().sum();
    if total > 0.0 {
        block.iter_mut().for_each(|v| *v /= total);
    }
}

/// Builds the VFH of the valid points of `cloud` seen from `viewpoint`.
///
/// Shape features pair every point with the centroid and the mean normal;
/// the viewpoint block bins the angle between each normal and the unit
/// vector from `viewpoint` to the centroid over `[0, pi]`.
pub fn compute_vfh(
    cloud: &PointCloud,
    normals: &NormalMap,
    viewpoint: &Point3<f64>,
) -> Result<VfhDescriptor, DescriptorError> {
    if cloud.len() != normals.len() {
        return Err(DescriptorError::SizeMismatch(cloud.len(), normals.len()));
    }
    // Sorted by coordinates so the result does not depend on point order.
    let mut pts: Vec<(Point3<f64>, Vector3<f64>)> = (0..cloud.len())
        .filter(|&i| cloud.valid[i] && normals.valid[i])
        .map(|i| (cloud.points[i], normals.normals[i]))
        .collect();
    if pts.len() < 2 {
        return Err(DescriptorError::Degenerate(pts.len()));
    }
    pts.sort_by(|a, b| {
        let ka = [a.0.x, a.0.y, a.0.z, a.1.x, a.1.y, a.1.z];
        let kb = [b.0.x, b.0.y, b.0.z, b.1.x, b.1.y, b.1.z];
        ka.iter().zip(&kb).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
    });
    let n = pts.len() as f64;
    let centroid = Point3::from(pts.iter().fold(Vector3::zeros(), |acc, (p, _)| acc + p.coords) / n);
    let normal_sum = pts.iter().fold(Vector3::zeros(), |acc, (_, nrm)| acc + nrm);
    let mean_normal = if normal_sum.norm() > 1e-12 { normal_sum.normalize() } else { pts[0].1 };

    let mut bins = vec![0.0; VFH_BINS];
    let max_dist = pts.iter().map(|(p, _)| (p - centroid).norm()).fold(0.0, f64::max);
    for (p, nrm) in &pts {
        if let Some([f1, f2, f3]) = pair_features(&centroid, &mean_normal, p, nrm) {
            bins[bin_of(f1, -std::f64::consts::PI, std::f64::consts::PI, SHAPE_BINS)] += 1.0;
            bins[SHAPE_BINS + bin_of(f2, -1.0, 1.0, SHAPE_BINS)] += 1.0;
            bins[2 * SHAPE_BINS + bin_of(f3, -1.0, 1.0, SHAPE_BINS)] += 1.0;
        }
        if max_dist > 0.0 {
            bins[3 * SHAPE_BINS + bin_of((p - centroid).norm() / max_dist, 0.0, 1.0, SHAPE_BINS)] += 1.0;
        }
    }
    let view = centroid - viewpoint;
    if view.norm() > 0.0 {
        let view = view.normalize();
        for (_, nrm) in &pts {
            let angle = nrm.dot(&view).clamp(-1.0, 1.0).acos();
            bins[4 * SHAPE_BINS + bin_of(angle, 0.0, std::f64::consts::PI, VIEWPOINT_BINS)] += 1.0;
        }
    }
    for b in 0..4 {
        normalize_block(&mut bins[b * SHAPE_BINS..(b + 1) * SHAPE_BINS]);
    }
    normalize_block(&mut bins[4 * SHAPE_BINS..]);
    VfhDescriptor::new(bins)
}

/// Outcome of one k-NN query.
#[derive(Debug, Clone, PartialEq)]
pub struct Classification {
    pub label: GarmentLabel,
    pub votes: BTreeMap<GarmentLabel, usize>,
    pub summed_distance: BTreeMap<GarmentLabel, f64>,
    /// `(entry index, distance)` of the neighbors, nearest first.
    pub neighbors: Vec<(usize, f64)>,
}

impl Classification {
    pub fn winning_votes(&self) -> usize {
        self.votes.get(&self.label).copied().unwrap_or(0)
    }

    pub fn winning_distance(&self) -> f64 {
        self.summed_distance.get(&self.label).copied().unwrap_or(f64::INFINITY)
    }

    /// Higher votes first, then smaller summed distance, then label order.
    pub fn confidence_cmp(&self, other: &Classification) -> std::cmp::Ordering {
        other
            .winning_votes()
            .cmp(&self.winning_votes())
            .then(self.winning_distance().total_cmp(&other.winning_distance()))
            .then(self.label.cmp(&other.label))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnnModel {
    pub entries: Vec<(VfhDescriptor, GarmentLabel)>,
    pub metric: DistanceMetric,
    /// Free-form `key=value` training parameters, saved as comment lines.
    pub metadata: Vec<(String, String)>,
}

const MODEL_MAGIC: &str = "vfh-knn v1";

impl KnnModel {
    pub fn new(entries: Vec<(VfhDescriptor, GarmentLabel)>) -> Self {
        Self { entries, metric: DistanceMetric::default(), metadata: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Text form: header `vfh-knn v1 <count>`, optional `# key=value`
    /// metadata lines, then `<label> <308 bins>` per entry.
    pub fn to_text(&self) -> String {
        let mut out = format!("{MODEL_MAGIC} {}\n", self.entries.len());
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}={v}\n"));
        }
        for (d, label) in &self.entries {
            out.push_str(label.code());
            for b in d.bins() {
                // Shortest round-trip representation.
                out.push(' ');
                out.push_str(&format!("{b:?}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, DescriptorError> {
        let err = |line: usize, message: String| DescriptorError::ModelFormat { line, message };
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| err(1, "missing header".into()))?;
        let count: usize = header
            .strip_prefix(MODEL_MAGIC)
            .and_then(|rest| rest.trim().parse().ok())
            .ok_or_else(|| err(1, format!("expected `{MODEL_MAGIC} <count>`, got `{header}`")))?;
        let mut model = KnnModel::new(Vec::with_capacity(count));
        for (i, line) in lines {
            let lineno = i + 1;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(meta) = line.strip_prefix('#') {
                if let Some((k, v)) = meta.trim().split_once('=') {
                    if k == "metric" {
                        model.metric = match v {
                            "chi-square" => DistanceMetric::ChiSquare,
                            "euclidean" => DistanceMetric::Euclidean,
                            other => return Err(err(lineno, format!("unknown metric `{other}`"))),
                        };
                    }
                    model.metadata.push((k.to_string(), v.to_string()));
                }
                continue;
            }
            let mut fields = line.split_ascii_whitespace();
            let label: GarmentLabel =
                fields.next().unwrap_or("").parse().map_err(|e: UnknownLabel| err(lineno, e.to_string()))?;
            if !label.is_key_part() {
                return Err(err(lineno, "ND entries are not allowed in a model".into()));
            }
            let bins = fields
                .map(|f| f.parse::<f64>().map_err(|_| err(lineno, format!("bad number `{f}`"))))
                .collect::<Result<Vec<_>, _>>()?;
            let d = VfhDescriptor::new(bins).map_err(|e| err(lineno, e.to_string()))?;
            model.entries.push((d, label));
        }
        if model.entries.len() != count {
            return Err(err(1, format!("header declares {count} entries, found {}", model.entries.len())));
        }
        Ok(model)
    }
}

/// k-nearest-neighbor vote. Neighbors are ranked by distance, then entry
/// index. The label with most votes wins; vote ties go to the smallest summed
/// neighbor distance, then to the lexicographically smallest label code.
pub fn knn_classify(model: &KnnModel, d: &VfhDescriptor, k: usize) -> Result<Classification, DescriptorError> {
    if model.is_empty() {
        return Err(DescriptorError::EmptyModel);
    }
    if k == 0 {
        return Err(DescriptorError::ZeroK);
    }
    let mut dists: Vec<(usize, f64)> =
        model.entries.iter().enumerate().map(|(i, (e, _))| (i, model.metric.distance(e, d))).collect();
    dists.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    dists.truncate(k.min(model.len()));

    let mut votes: BTreeMap<GarmentLabel, usize> = BTreeMap::new();
    let mut summed: BTreeMap<GarmentLabel, f64> = BTreeMap::new();
    for &(i, dist) in &dists {
        let label = model.entries[i].1;
        *votes.entry(label).or_insert(0) += 1;
        *summed.entry(label).or_insert(0.0) += dist;
    }
    // BTreeMap iterates in label order, so `min_by` keeps the smallest label
    // on a full tie.
    let label = votes
        .iter()
        .min_by(|a, b| b.1.cmp(a.1).then(summed[a.0].total_cmp(&summed[b.0])))
        .map(|(l, _)| *l)
        .expect("at least one neighbor");
    Ok(Classification { label, votes, summed_distance: summed, neighbors: dists })
}

/// How a pixel region becomes a descriptor.
#[derive(Debug, Clone, PartialEq)]
pub struct RegionConfig {
    pub intrinsics: CameraIntrinsics,
    /// Voxel-grid leaf size in meters.
    pub voxel_leaf: f64,
    /// Normal-estimation radius in meters.
    pub normal_radius: f64,
    /// Fewest points allowed after voxel filtering.
    pub min_points: usize,
}

impl Default for RegionConfig {
    fn default() -> Self {
        Self { intrinsics: CameraIntrinsics::default(), voxel_leaf: 0.004, normal_radius: 0.015, min_points: 50 }
    }
}

/// Crops `mask` from `img`, back-projects, voxel-filters, estimates normals
/// and computes the VFH seen from the camera origin.
pub fn describe_region(img: &DepthImage, mask: &Mask, cfg: &RegionConfig) -> Result<VfhDescriptor, DescriptorError> {
    let mut points = Vec::new();
    for p in mask.pixels() {
        let (x, y) = (p.x as usize, p.y as usize);
        if x < img.width() && y < img.height() {
            let d = img.get(x, y);
            if d > INVALID_DEPTH {
                points.push(cfg.intrinsics.back_project(x as f64, y as f64, d));
            }
        }
    }
    if points.len() < 2 {
        return Err(DescriptorError::Degenerate(points.len()));
    }
    let cloud = geometry::voxel_downsample(&PointCloud::from_points(points), cfg.voxel_leaf);
    if cloud.len() < cfg.min_points {
        return Err(DescriptorError::TooFewPoints { found: cloud.len(), required: cfg.min_points });
    }
    let normals = geometry::estimate_normals(&cloud, cfg.normal_radius)?;
    compute_vfh(&cloud, &normals, &cloud.viewpoint)
}

/// One annotated training region.
#[derive(Debug, Clone)]
pub struct TrainingSample {
    pub depth: DepthImage,
    pub region: Mask,
    pub label: GarmentLabel,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrainReport {
    pub used: usize,
    /// Samples whose region was degenerate or too sparse.
    pub skipped: usize,
}

/// One model entry per usable sample.
pub fn train_model(samples: &[TrainingSample], cfg: &RegionConfig) -> Result<(KnnModel, TrainReport), DescriptorError> {
    let mut entries = Vec::with_capacity(samples.len());
    let mut report = TrainReport::default();
    for (i, s) in samples.iter().enumerate() {
        if !s.label.is_key_part() {
            log::warn!("sample {i}: ND label skipped");
            report.skipped += 1;
            continue;
        }
        match describe_region(&s.depth, &s.region, cfg) {
            Ok(d) => {
                entries.push((d, s.label));
                report.used += 1;
            }
            Err(e @ (DescriptorError::Degenerate(_) | DescriptorError::TooFewPoints { .. })) => {
                log::warn!("sample {i}: {e}");
                report.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if entries.is_empty() {
        return Err(DescriptorError::NoUsableSamples { skipped: report.skipped });
    }
    let mut model = KnnModel::new(entries);
    model.metadata = vec![
        ("metric".into(), "chi-square".into()),
        ("voxel_leaf".into(), format!("{:.6}", cfg.voxel_leaf)),
        ("normal_radius".into(), format!("{:.6}", cfg.normal_radius)),
        ("min_points".into(), cfg.min_points.to_string()),
    ];
    Ok((model, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{seq::SliceRandom, Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_cloud(n: usize, z: f64) -> (PointCloud, NormalMap) {
        let mut pts = Vec::new();
        for i in 0..n {
            for j in 0..n {
                pts.push(Point3::new(-0.05 + 0.1 * i as f64 / n as f64, -0.05 + 0.1 * j as f64 / n as f64, z));
            }
        }
        let cloud = PointCloud::from_points(pts);
        let normals = NormalMap {
            normals: vec![Vector3::new(0.0, 0.0, -1.0); cloud.len()],
            valid: vec![true; cloud.len()],
            organized: None,
        };
        (cloud, normals)
    }

    fn bumpy_cloud(rng: &mut impl Rng, n: usize) -> (PointCloud, NormalMap) {
        let (a, b) = (rng.gen_range(-20.0..20.0), rng.gen_range(-20.0..20.0));
        let mut pts = Vec::new();
        let mut nrm = Vec::new();
        for _ in 0..n {
            let (x, y) = (rng.gen_range(-0.05..0.05), rng.gen_range(-0.05..0.05));
            pts.push(Point3::new(x, y, 1.0 + a * x * x + b * x * y));
            nrm.push(Vector3::new(2.0 * a * x + b * y, b * x, -1.0).normalize());
        }
        let cloud = PointCloud::from_points(pts);
        let len = cloud.len();
        (cloud, NormalMap { normals: nrm, valid: vec![true; len], organized: None })
    }

    fn random_descriptor(rng: &mut impl Rng) -> VfhDescriptor {
        let mut bins: Vec<f64> = (0..VFH_BINS).map(|_| if rng.gen_bool(0.3) { rng.gen() } else { 0.0 }).collect();
        for b in 0..4 {
            normalize_block(&mut bins[b * SHAPE_BINS..(b + 1) * SHAPE_BINS]);
        }
        normalize_block(&mut bins[4 * SHAPE_BINS..]);
        VfhDescriptor::new(bins).unwrap()
    }

    fn block_sums_ok(d: &VfhDescriptor) -> bool {
        (0..5).all(|b| {
            let s: f64 = d.block(b).iter().sum();
            s == 0.0 || (s - 1.0).abs() < 1e-9
        })
    }

    #[test]
    fn head_on_plane_concentrates_viewpoint_block() {
        let (cloud, normals) = plane_cloud(20, 1.0);
        let d = compute_vfh(&cloud, &normals, &Point3::origin()).unwrap();
        assert_eq!(d.bins().len(), VFH_BINS);
        assert!(block_sums_ok(&d));
        let vp = d.block(4);
        let used: Vec<usize> = (0..VIEWPOINT_BINS).filter(|&i| vp[i] > 0.0).collect();
        assert!(used.len() <= 3 && used.last().unwrap() - used[0] + 1 == used.len());
        // Normals face the camera: the angle to the view ray is near pi.
        assert_eq!(*used.last().unwrap(), VIEWPOINT_BINS - 1);
    }

    #[test]
    fn identical_and_shuffled_clouds() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (cloud, normals) = bumpy_cloud(&mut rng, 300);
        let a = compute_vfh(&cloud, &normals, &Point3::origin()).unwrap();
        let b = compute_vfh(&cloud, &normals, &Point3::origin()).unwrap();
        assert_eq!(DistanceMetric::ChiSquare.distance(&a, &b), 0.0);
        let mut order: Vec<usize> = (0..cloud.len()).collect();
        order.shuffle(&mut rng);
        let shuffled = PointCloud::from_points(order.iter().map(|&i| cloud.points[i]).collect());
        let sn = NormalMap {
            normals: order.iter().map(|&i| normals.normals[i]).collect(),
            valid: vec![true; order.len()],
            organized: None,
        };
        let c = compute_vfh(&shuffled, &sn, &Point3::origin()).unwrap();
        for (x, y) in a.bins().iter().zip(c.bins()) {
            assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn degenerate_region_rejected() {
        let cloud = PointCloud::from_points(vec![Point3::new(0.0, 0.0, 1.0)]);
        let normals = NormalMap::uniform(1, 1, Vector3::new(0.0, 0.0, -1.0));
        assert_eq!(compute_vfh(&cloud, &normals, &Point3::origin()), Err(DescriptorError::Degenerate(1)));
    }

    #[test]
    fn scaled_cloud_keeps_shape_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let (cloud, normals) = bumpy_cloud(&mut rng, 200);
        let a = compute_vfh(&cloud, &normals, &Point3::origin()).unwrap();
        let c = Point3::from(cloud.points.iter().fold(Vector3::zeros(), |s, p| s + p.coords) / cloud.len() as f64);
        let scaled = PointCloud::from_points(cloud.points.iter().map(|p| c + (p - c) * 2.0).collect());
        let b = compute_vfh(&scaled, &normals, &Point3::origin()).unwrap();
        for blk in 0..4 {
            for (x, y) in a.block(blk).iter().zip(b.block(blk)) {
                assert!((x - y).abs() < 1e-9, "block {blk}");
            }
        }
    }

    fn constant_descriptor(level: f64) -> VfhDescriptor {
        let mut bins = vec![0.0; VFH_BINS];
        bins[0] = level;
        bins[1] = 1.0 - level;
        VfhDescriptor::new(bins).unwrap()
    }

    /// Independent vote oracle: explicit per-label scan.
    fn oracle(model: &KnnModel, q: &VfhDescriptor, k: usize) -> GarmentLabel {
        let mut all: Vec<(f64, usize)> =
            model.entries.iter().enumerate().map(|(i, (e, _))| (model.metric.distance(e, q), i)).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let near = &all[..k.min(all.len())];
        let labels = [GarmentLabel::NeckShirt, GarmentLabel::NeckTShirt, GarmentLabel::WaistPant];
        let mut best: Option<(usize, f64, &str, GarmentLabel)> = None;
        for l in labels {
            let v = near.iter().filter(|(_, i)| model.entries[*i].1 == l).count();
            if v == 0 {
                continue;
            }
            let s: f64 = near.iter().filter(|(_, i)| model.entries[*i].1 == l).map(|(d, _)| d).sum();
            let better = match best {
                None => true,
                Some((bv, bs, bc, _)) => v > bv || (v == bv && (s < bs || (s == bs && l.code() < bc))),
            };
            if better {
                best = Some((v, s, l.code(), l));
            }
        }
        best.unwrap().3
    }

    #[test]
    fn vote_tie_goes_to_smaller_distance() {
        // Query at bins (0.5, 0.5); Euclidean distance to (l, 1-l) is
        // sqrt(2)*|l - 0.5|.
        let q = constant_descriptor(0.5);
        let at = |dist: f64| constant_descriptor(0.5 + dist / 2f64.sqrt());
        let mut model = KnnModel::new(vec![
            (at(0.3), GarmentLabel::NeckShirt),
            (at(0.5), GarmentLabel::NeckShirt),
            (at(0.45), GarmentLabel::WaistPant),
            (at(0.65), GarmentLabel::WaistPant),
            (at(0.7), GarmentLabel::NeckTShirt),
        ]);
        model.metric = DistanceMetric::Euclidean;
        let c = knn_classify(&model, &q, 4).unwrap();
        assert_eq!(c.votes[&GarmentLabel::NeckShirt], 2);
        assert_eq!(c.votes[&GarmentLabel::WaistPant], 2);
        assert!((c.summed_distance[&GarmentLabel::NeckShirt] - 0.8).abs() < 1e-12);
        assert!((c.summed_distance[&GarmentLabel::WaistPant] - 1.1).abs() < 1e-12);
        assert_eq!(c.label, GarmentLabel::NeckShirt);
        assert_eq!(oracle(&model, &q, 4), GarmentLabel::NeckShirt);
    }

    #[test]
    fn single_class_and_exact_match() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let entries: Vec<_> = (0..12).map(|_| (random_descriptor(&mut rng), GarmentLabel::WaistPant)).collect();
        let model = KnnModel::new(entries);
        let c = knn_classify(&model, &random_descriptor(&mut rng), 10).unwrap();
        assert_eq!(c.label, GarmentLabel::WaistPant);
        assert_eq!(c.votes[&GarmentLabel::WaistPant], 10);

        let q = model.entries[5].0.clone();
        let c = knn_classify(&model, &q, 1).unwrap();
        assert_eq!(c.neighbors, vec![(5, 0.0)]);
        assert_eq!(knn_classify(&KnnModel::new(vec![]), &q, 3), Err(DescriptorError::EmptyModel));
    }

    #[test]
    fn full_tie_goes_to_lexicographic_label() {
        let q = constant_descriptor(0.5);
        let e = constant_descriptor(0.7);
        let model = KnnModel::new(vec![(e.clone(), GarmentLabel::WaistPant), (e, GarmentLabel::NeckTShirt)]);
        assert_eq!(knn_classify(&model, &q, 2).unwrap().label, GarmentLabel::NeckTShirt);
    }

    #[test]
    fn knn_matches_linear_scan_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let labels = [GarmentLabel::NeckShirt, GarmentLabel::NeckTShirt, GarmentLabel::WaistPant];
        for _ in 0..100 {
            let n = rng.gen_range(1..30);
            let model =
                KnnModel::new((0..n).map(|_| (random_descriptor(&mut rng), labels[rng.gen_range(0..3)])).collect());
            let q = random_descriptor(&mut rng);
            for k in [1, 10] {
                assert_eq!(knn_classify(&model, &q, k).unwrap().label, oracle(&model, &q, k));
            }
        }
    }

    #[test]
    fn model_text_round_trip_and_rejects_bad_bins() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut model = KnnModel::new(vec![
            (random_descriptor(&mut rng), GarmentLabel::NeckShirt),
            (random_descriptor(&mut rng), GarmentLabel::WaistPant),
        ]);
        model.metadata.push(("created".into(), "0".into()));
        let back = KnnModel::from_text(&model.to_text()).unwrap();
        assert_eq!(back, model);

        let short = format!("vfh-knn v1 1\nW{}\n", " 0.0".repeat(307));
        assert!(matches!(KnnModel::from_text(&short), Err(DescriptorError::ModelFormat { line: 2, .. })));
        let wrong_count = format!("vfh-knn v1 2\nW{}\n", " 0.0".repeat(308));
        assert!(KnnModel::from_text(&wrong_count).is_err());
    }

    #[test]
    fn training_skips_empty_regions() {
        let depth = DepthImage::from_fn(80, 60, |x, _| if x < 40 { 1.0 } else { 0.0 }).unwrap();
        let cfg = RegionConfig { min_points: 5, ..Default::default() };
        let region = |x0: usize| Mask::from_fn(80, 60, move |x, y| (x0..x0 + 30).contains(&x) && (10..50).contains(&y));
        let samples = vec![
            TrainingSample { depth: depth.clone(), region: region(5), label: GarmentLabel::WaistPant },
            TrainingSample { depth: depth.clone(), region: region(45), label: GarmentLabel::NeckShirt },
        ];
        let (model, report) = train_model(&samples, &cfg).unwrap();
        assert_eq!(model.len(), 1);
        assert_eq!(report, TrainReport { used: 1, skipped: 1 });
        assert!(matches!(train_model(&samples[1..], &cfg), Err(DescriptorError::NoUsableSamples { skipped: 1 })));
    }

    proptest! {
        #[test]
        fn descriptor_contract(seed in 0u64..300, n in 2usize..200) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (cloud, normals) = bumpy_cloud(&mut rng, n);
            let d = compute_vfh(&cloud, &normals, &Point3::origin()).unwrap();
            prop_assert_eq!(d.bins().len(), VFH_BINS);
            prop_assert!(block_sums_ok(&d));
        }

        #[test]
        fn vote_ties_pick_min_distance(seed in 0u64..300) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // Two labels with equal counts among exactly k entries.
            let per = rng.gen_range(1..5);
            let (la, lb) = (GarmentLabel::NeckShirt, GarmentLabel::WaistPant);
            let mut entries = Vec::new();
            for _ in 0..per {
                entries.push((random_descriptor(&mut rng), la));
                entries.push((random_descriptor(&mut rng), lb));
            }
            let model = KnnModel::new(entries);
            let c = knn_classify(&model, &random_descriptor(&mut rng), 2 * per).unwrap();
            let (sa, sb) = (c.summed_distance[&la], c.summed_distance[&lb]);
            prop_assert_eq!(c.label, if sb < sa { lb } else { la });
        }
    }
}
