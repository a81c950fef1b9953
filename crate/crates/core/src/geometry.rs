//! Depth-image and point-cloud primitives.
//!
//! Depth is stored in meters with `0.0` as the missing-sample sentinel. Points
//! live in the camera frame (x right, y down, z forward) and the sensor sits
//! at the origin unless a cloud says otherwise.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap};

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};
use thiserror::Error;

/// Depth value marking a missing sample.
pub const INVALID_DEPTH: f64 = 0.0;

/// Tolerance on the norm of vectors passed to [`to_spherical`].
pub const UNIT_TOLERANCE: f64 = 1e-6;

/// Below this horizontal magnitude a unit normal is treated as lying on the
/// pole and its azimuth is reported as zero.
pub const POLE_EPSILON: f64 = 1e-12;

/// Largest pixel half-window searched for normal-estimation neighbors.
const MAX_NEIGHBOR_HALF_WINDOW: usize = 24;

/// Lattice samples per side of the neighbor window before it is strided.
const MAX_NEIGHBOR_SAMPLES_PER_SIDE: usize = 13;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("image has zero size ({width}x{height})")]
    EmptyImage { width: usize, height: usize },
    #[error("data length {len} does not match {width}x{height}")]
    ShapeMismatch { width: usize, height: usize, len: usize },
    #[error("depth value {value} at index {index} is negative")]
    NegativeDepth { index: usize, value: f64 },
    #[error("invalid camera intrinsics: {0}")]
    Intrinsics(String),
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("search radius must be positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("vector norm {0} is not unit length")]
    NonUnit(f64),
    #[error("point cloud is not organized")]
    Unorganized,
}

/// Integer pixel coordinate. Ordered row-major (by `y`, then `x`).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Pixel {
    pub x: i32,
    pub y: i32,
}

impl Pixel {
    pub const fn new(x: i32, y: i32) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Pixel) -> f64 {
        let dx = f64::from(self.x - other.x);
        let dy = f64::from(self.y - other.y);
        dx.hypot(dy)
    }

    pub fn in_bounds(self, width: usize, height: usize) -> bool {
        self.x >= 0 && self.y >= 0 && (self.x as usize) < width && (self.y as usize) < height
    }
}

impl Ord for Pixel {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.y, self.x).cmp(&(other.y, other.x))
    }
}

impl PartialOrd for Pixel {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Row-major grid of range samples in meters.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    /// Builds an image, mapping non-finite samples to the sentinel.
    pub fn new(width: usize, height: usize, mut data: Vec<f64>) -> Result<Self, GeometryError> {
        if width == 0 || height == 0 {
            return Err(GeometryError::EmptyImage { width, height });
        }
        if data.len() != width * height {
            return Err(GeometryError::ShapeMismatch { width, height, len: data.len() });
        }
        for (index, v) in data.iter_mut().enumerate() {
            if !v.is_finite() {
                *v = INVALID_DEPTH;
            } else if *v < 0.0 {
                return Err(GeometryError::NegativeDepth { index, value: *v });
            }
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, depth: f64) -> Result<Self, GeometryError> {
        Self::new(width, height, vec![depth; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self, GeometryError> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn is_valid_at(&self, x: usize, y: usize) -> bool {
        self.get(x, y) > INVALID_DEPTH
    }

    pub fn valid_count(&self) -> usize {
        self.data.iter().filter(|&&d| d > INVALID_DEPTH).count()
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.in_bounds(self.width, self.height)
    }

    /// Returns a copy with `offset` added to every valid sample.
    pub fn offset(&self, offset: f64) -> Result<Self, GeometryError> {
        let data = self.data.iter().map(|&d| if d > INVALID_DEPTH { d + offset } else { d }).collect();
        Self::new(self.width, self.height, data)
    }

    /// Rotates the image by 90 degrees counter-clockwise: output pixel
    /// `(x', y') = (y, W - 1 - x)`.
    pub fn rotated_ccw(&self) -> Self {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0; w * h];
        for y in 0..h {
            for x in 0..w {
                let (nx, ny) = (y, w - 1 - x);
                data[ny * h + nx] = self.get(x, y);
            }
        }
        Self { width: h, height: w, data }
    }
}

/// Pinhole camera model in pixel units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraIntrinsics {
    /// Structured-light sensor defaults for a 640x480 frame.
    fn default() -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5 }
    }
}

impl CameraIntrinsics {
    /// Default focal lengths with the principal point at the image center.
    pub fn centered(width: usize, height: usize) -> Self {
        Self { cx: (width as f64 - 1.0) / 2.0, cy: (height as f64 - 1.0) / 2.0, ..Self::default() }
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<(), GeometryError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(GeometryError::Intrinsics(format!(
                "focal lengths must be positive (fx={}, fy={})",
                self.fx, self.fy
            )));
        }
        if !(self.cx >= 0.0 && self.cx < width as f64 && self.cy >= 0.0 && self.cy < height as f64) {
            return Err(GeometryError::Intrinsics(format!(
                "principal point ({}, {}) outside {}x{}",
                self.cx, self.cy, width, height
            )));
        }
        Ok(())
    }

    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> Point3<f64> {
        Point3::new((u - self.cx) * depth / self.fx, (v - self.cy) * depth / self.fy, depth)
    }

    /// Perspective projection to subpixel `(u, v)`.
    pub fn project(&self, p: &Point3<f64>) -> (f64, f64) {
        (p.x * self.fx / p.z + self.cx, p.y * self.fy / p.z + self.cy)
    }
}

/// Set of 3D points in meters, optionally laid out on the sensor's pixel grid.
///
/// Missing samples are kept (at the origin) and flagged invalid so organized
/// clouds stay pixel-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Point3<f64>>,
    pub valid: Vec<bool>,
    pub organized: Option<(usize, usize)>,
    pub viewpoint: Point3<f64>,
}

impl PointCloud {
    /// Unorganized cloud where every point is valid.
    pub fn from_points(points: Vec<Point3<f64>>) -> Self {
        let valid = vec![true; points.len()];
        Self { points, valid, organized: None, viewpoint: Point3::origin() }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn valid_points(&self) -> impl Iterator<Item = &Point3<f64>> {
        self.points.iter().zip(&self.valid).filter(|(_, &v)| v).map(|(p, _)| p)
    }

    /// Keeps only valid points and drops the pixel layout.
    pub fn compacted(&self) -> Self {
        let points: Vec<_> = self.valid_points().copied().collect();
        Self { viewpoint: self.viewpoint, ..Self::from_points(points) }
    }
}

/// Per-point unit normals oriented toward the viewpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalMap {
    pub normals: Vec<Vector3<f64>>,
    pub valid: Vec<bool>,
    pub organized: Option<(usize, usize)>,
}

impl NormalMap {
    pub fn len(&self) -> usize {
        self.normals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.normals.is_empty()
    }

    /// Organized map with the same normal everywhere.
    pub fn uniform(width: usize, height: usize, normal: Vector3<f64>) -> Self {
        Self {
            normals: vec![normal; width * height],
            valid: vec![true; width * height],
            organized: Some((width, height)),
        }
    }
}

/// Inclination/azimuth view of a unit vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SphericalNormal {
    /// Angle from +z, in `[0, pi]`.
    pub inclination: f64,
    /// Angle in the xy-plane from +x, in `(-pi, pi]`.
    pub azimuth: f64,
}

impl SphericalNormal {
    pub fn to_unit(self) -> Vector3<f64> {
        let (s, c) = self.inclination.sin_cos();
        Vector3::new(s * self.azimuth.cos(), s * self.azimuth.sin(), c)
    }
}

/// Converts a unit vector to inclination/azimuth angles.
///
/// The azimuth is zero on the pole, where it is otherwise undefined.
pub fn to_spherical(n: &Vector3<f64>) -> Result<SphericalNormal, GeometryError> {
    let r = n.norm();
    if (r - 1.0).abs() > UNIT_TOLERANCE || !r.is_finite() {
        return Err(GeometryError::NonUnit(r));
    }
    Ok(spherical_unchecked(n))
}

#[inline]
pub(crate) fn spherical_unchecked(n: &Vector3<f64>) -> SphericalNormal {
    let inclination = n.z.clamp(-1.0, 1.0).acos();
    let azimuth = if n.x.hypot(n.y) < POLE_EPSILON {
        0.0
    } else {
        let a = n.y.atan2(n.x);
        // atan2 may return exactly -pi; the azimuth range is half-open at -pi.
        if a <= -std::f64::consts::PI {
            std::f64::consts::PI
        } else {
            a
        }
    };
    SphericalNormal { inclination, azimuth }
}

/// Back-projects every pixel; sentinel pixels become invalid points.
pub fn depth_to_cloud(img: &DepthImage, k: &CameraIntrinsics) -> Result<PointCloud, GeometryError> {
    if img.width() == 0 || img.height() == 0 {
        return Err(GeometryError::EmptyImage { width: img.width(), height: img.height() });
    }
    k.validate(img.width(), img.height())?;
    let n = img.width() * img.height();
    let mut points = Vec::with_capacity(n);
    let mut valid = Vec::with_capacity(n);
    for v in 0..img.height() {
        for u in 0..img.width() {
            let d = img.get(u, v);
            if d > INVALID_DEPTH {
                points.push(k.back_project(u as f64, v as f64, d));
                valid.push(true);
            } else {
                points.push(Point3::origin());
                valid.push(false);
            }
        }
    }
    Ok(PointCloud { points, valid, organized: Some((img.width(), img.height())), viewpoint: Point3::origin() })
}

/// Voxel-grid downsampling: one centroid per occupied cell of side `leaf`,
/// with cells anchored at the coordinate origin and emitted in lexicographic
/// cell order. Invalid points are ignored.
pub fn voxel_downsample(cloud: &PointCloud, leaf: f64) -> PointCloud {
    assert!(leaf > 0.0, "voxel leaf size must be positive");
    let mut cells: BTreeMap<[i64; 3], (Vector3<f64>, usize)> = BTreeMap::new();
    for p in cloud.valid_points() {
        let key = voxel_key(p, leaf);
        let entry = cells.entry(key).or_insert((Vector3::zeros(), 0));
        entry.0 += p.coords;
        entry.1 += 1;
    }
    let points = cells.into_values().map(|(sum, n)| Point3::from(sum / n as f64)).collect();
    PointCloud { viewpoint: cloud.viewpoint, ..PointCloud::from_points(points) }
}

#[inline]
pub fn voxel_key(p: &Point3<f64>, leaf: f64) -> [i64; 3] {
    [(p.x / leaf).floor() as i64, (p.y / leaf).floor() as i64, (p.z / leaf).floor() as i64]
}

/// Surface normals from the covariance of each point's metric-radius
/// neighborhood: the eigenvector of the smallest eigenvalue, flipped to face
/// the viewpoint. Points with fewer than three neighbors (self included) are
/// flagged invalid.
///
/// Organized clouds search a pixel window sized from the local sampling
/// density; unorganized clouds use a hash grid with cell size `radius`.
pub fn estimate_normals(cloud: &PointCloud, radius: f64) -> Result<NormalMap, GeometryError> {
    if cloud.is_empty() || cloud.valid_count() == 0 {
        return Err(GeometryError::EmptyCloud);
    }
    if !(radius > 0.0) {
        return Err(GeometryError::NonPositiveRadius(radius));
    }
    let (normals, valid) = match cloud.organized {
        Some((w, h)) => organized_normals(cloud, w, h, radius),
        None => unorganized_normals(cloud, radius),
    };
    Ok(NormalMap { normals, valid, organized: cloud.organized })
}

struct CovarianceAccumulator {
    origin: Vector3<f64>,
    n: usize,
    sum: Vector3<f64>,
    outer: Matrix3<f64>,
}

impl CovarianceAccumulator {
    fn new(origin: Vector3<f64>) -> Self {
        Self { origin, n: 0, sum: Vector3::zeros(), outer: Matrix3::zeros() }
    }

    #[inline]
    fn add(&mut self, p: &Vector3<f64>) {
        // Shifted by the query point for numerical stability.
        let d = p - self.origin;
        self.n += 1;
        self.sum += d;
        self.outer += d * d.transpose();
    }

    fn normal(&self, point: &Point3<f64>, viewpoint: &Point3<f64>) -> Option<Vector3<f64>> {
        if self.n < 3 {
            return None;
        }
        let n = self.n as f64;
        let mean = self.sum / n;
        let cov = self.outer / n - mean * mean.transpose();
        let normal = smallest_eigenvector(&cov)?;
        Some(orient_toward(normal, point, viewpoint))
    }
}

fn smallest_eigenvector(cov: &Matrix3<f64>) -> Option<Vector3<f64>> {
    let eig = SymmetricEigen::new(*cov);
    let (idx, _) = eig.eigenvalues.iter().enumerate().min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(Ordering::Equal))?;
    let v: Vector3<f64> = eig.eigenvectors.column(idx).into_owned();
    let norm = v.norm();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    let mut v = v / norm;
    // Flush round-off so exactly planar neighborhoods give exact axis normals.
    for c in v.iter_mut() {
        if c.abs() < 1e-15 {
            *c = 0.0;
        }
    }
    Some(v.normalize())
}

#[inline]
fn orient_toward(n: Vector3<f64>, p: &Point3<f64>, viewpoint: &Point3<f64>) -> Vector3<f64> {
    if n.dot(&(viewpoint - p)) < 0.0 {
        -n
    } else {
        n
    }
}

/// Median angular pixel pitch (spacing between horizontally adjacent points
/// divided by range), used to turn a metric radius into a pixel window.
fn angular_pitch(cloud: &PointCloud, w: usize, h: usize) -> Option<f64> {
    let mut ratios = Vec::new();
    let step = ((w * h) / 20_000).max(1);
    let mut i = 0;
    while i < w * h {
        let x = i % w;
        if x + 1 < w && cloud.valid[i] && cloud.valid[i + 1] {
            let (a, b) = (&cloud.points[i], &cloud.points[i + 1]);
            let z = a.z.abs().max(1e-9);
            if (a.z - b.z).abs() < 0.05 * z {
                ratios.push((b - a).norm() / z);
            }
        }
        i += step;
    }
    if ratios.is_empty() {
        return None;
    }
    ratios.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    Some(ratios[ratios.len() / 2]).filter(|r| *r > 0.0)
}

fn organized_normals(cloud: &PointCloud, w: usize, h: usize, radius: f64) -> (Vec<Vector3<f64>>, Vec<bool>) {
    let n = w * h;
    let mut normals = vec![Vector3::zeros(); n];
    let mut valid = vec![false; n];
    let pitch = angular_pitch(cloud, w, h);
    let r2 = radius * radius;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            if !cloud.valid[i] {
                continue;
            }
            let p = &cloud.points[i];
            let half = match pitch {
                Some(pitch) => {
                    ((radius / (pitch * p.z.abs().max(1e-9))).ceil() as usize).clamp(1, MAX_NEIGHBOR_HALF_WINDOW)
                }
                None => 1,
            };
            let stride = half.div_ceil(MAX_NEIGHBOR_SAMPLES_PER_SIDE / 2).max(1);
            let mut acc = CovarianceAccumulator::new(p.coords);
            let y0 = y.saturating_sub(half);
            let y1 = (y + half).min(h - 1);
            let x0 = x.saturating_sub(half);
            let x1 = (x + half).min(w - 1);
            // Stride from the center pixel so the lattice stays symmetric.
            let ys = (y - (y - y0) / stride * stride..=y1).step_by(stride);
            for yy in ys {
                let xs = (x - (x - x0) / stride * stride..=x1).step_by(stride);
                for xx in xs {
                    let j = yy * w + xx;
                    if cloud.valid[j] && (cloud.points[j] - p).norm_squared() <= r2 {
                        acc.add(&cloud.points[j].coords);
                    }
                }
            }
            if let Some(normal) = acc.normal(p, &cloud.viewpoint) {
                normals[i] = normal;
                valid[i] = true;
            }
        }
    }
    (normals, valid)
}

fn unorganized_normals(cloud: &PointCloud, radius: f64) -> (Vec<Vector3<f64>>, Vec<bool>) {
    let mut grid: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    for (i, p) in cloud.points.iter().enumerate() {
        if cloud.valid[i] {
            grid.entry(voxel_key(p, radius)).or_default().push(i);
        }
    }
    let r2 = radius * radius;
    let mut normals = vec![Vector3::zeros(); cloud.len()];
    let mut valid = vec![false; cloud.len()];
    for (i, p) in cloud.points.iter().enumerate() {
        if !cloud.valid[i] {
            continue;
        }
        let key = voxel_key(p, radius);
        let mut acc = CovarianceAccumulator::new(p.coords);
        for dz in -1..=1 {
            for dy in -1..=1 {
                for dx in -1..=1 {
                    let cell = [key[0] + dx, key[1] + dy, key[2] + dz];
                    if let Some(members) = grid.get(&cell) {
                        for &j in members {
                            if (cloud.points[j] - p).norm_squared() <= r2 {
                                acc.add(&cloud.points[j].coords);
                            }
                        }
                    }
                }
            }
        }
        if let Some(normal) = acc.normal(p, &cloud.viewpoint) {
            normals[i] = normal;
            valid[i] = true;
        }
    }
    (normals, valid)
}
