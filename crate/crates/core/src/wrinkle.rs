//! Wrinkle analysis on depth images.
//!
//! Two complementary responses are computed here. The orientation entropy
//! measures how spread out the surface normals are around each pixel (flat
//! cloth scores zero, crumpled cloth scores high). The multiscale vesselness
//! treats the depth image as a grayscale field and scores tube-like ridges
//! from the eigenvalues of its scale-normalized Hessian; cloth wrinkles bulge
//! toward the sensor, so by default only depth minima across the ridge are
//! accepted.

use thiserror::Error;

use crate::contours::Mask;
use crate::filter::{self, GaussianKernels};
use crate::geometry::{spherical_unchecked, DepthImage, NormalMap, Pixel, INVALID_DEPTH};

/// Bins per angle in the orientation histogram.
pub const ORIENTATION_BINS: usize = 64;

/// Bins of the response histogram used by the entropy roughness index.
pub const ROUGHNESS_BINS: usize = 64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WrinkleError {
    #[error("normal map is not organized on a pixel grid")]
    Unorganized,
    #[error("window must be odd and at least 3, got {0}")]
    BadWindow(usize),
    #[error("pixel ({}, {}) is outside the {width}x{height} image", .pixel.x, .pixel.y)]
    OutOfBounds { pixel: Pixel, width: usize, height: usize },
    #[error("mask has no pixels inside the map")]
    EmptyMask,
    #[error("mask is {mask_w}x{mask_h} but map is {map_w}x{map_h}")]
    MaskShape { mask_w: usize, mask_h: usize, map_w: usize, map_h: usize },
    #[error("invalid vesselness parameters: {0}")]
    BadParams(String),
}

/// Per-pixel scalar response with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
    pub valid: Vec<bool>,
}

impl ScalarMap {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), width * height, "map data does not match its shape");
        let valid = vec![true; values.len()];
        Self { width, height, values, valid }
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self::new(width, height, vec![0.0; width * height])
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn at(&self, p: Pixel) -> Option<f64> {
        if p.in_bounds(self.width, self.height) && self.is_valid(p.x as usize, p.y as usize) {
            Some(self.get(p.x as usize, p.y as usize))
        } else {
            None
        }
    }

    pub fn max_valid(&self) -> f64 {
        self.values.iter().zip(&self.valid).filter(|(_, &v)| v).map(|(x, _)| *x).fold(0.0, f64::max)
    }

    /// Bilinear sample with clamping at the borders; invalid pixels count as 0.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let v = |xx: usize, yy: usize| if self.is_valid(xx, yy) { self.get(xx, yy) } else { 0.0 };
        let top = v(x0, y0) * (1.0 - fx) + v(x1, y0) * fx;
        let bottom = v(x0, y1) * (1.0 - fx) + v(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }
}

/// Per-pixel Shannon entropy (bits) of local normal orientations.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyMap {
    pub map: ScalarMap,
}

/// Per-pixel maximum vesselness over scales.
#[derive(Debug, Clone, PartialEq)]
pub struct VesselnessMap {
    pub map: ScalarMap,
    /// Scale (pixels) attaining the maximum; the smallest scale on ties.
    pub best_scale: Vec<f64>,
    /// Direction (radians) of the across-ridge eigenvector at the best scale.
    pub across: Vec<f64>,
}

/// Sign convention for accepted ridges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    /// Ridges that are local minima of the field across their axis
    /// (positive large eigenvalue). On depth images these are crests that
    /// bulge toward the sensor.
    Dark,
    /// Ridges that are local maxima of the field (negative large eigenvalue).
    Bright,
}

/// How the structureness sensitivity `c` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StructureScale {
    /// `c` equals this fraction of the largest Frobenius norm found at each
    /// scale in the image.
    RelativeToMax(f64),
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VesselnessParams {
    /// Gaussian scales (pixels).
    pub scales: Vec<f64>,
    /// Blobness sensitivity.
    pub beta: f64,
    pub c: StructureScale,
    pub polarity: Polarity,
    /// Pixels whose Hessian Frobenius norm does not exceed this are zero.
    pub min_structure: f64,
}

impl Default for VesselnessParams {
    fn default() -> Self {
        Self {
            scales: vec![1.0, 2.0, 4.0, 8.0],
            beta: 0.5,
            c: StructureScale::RelativeToMax(0.5),
            polarity: Polarity::Dark,
            min_structure: 1e-9,
        }
    }
}

impl VesselnessParams {
    pub fn validate(&self) -> Result<(), WrinkleError> {
        if self.scales.is_empty() || self.scales.iter().any(|s| !(*s > 0.0)) {
            return Err(WrinkleError::BadParams("scales must be nonempty and positive".into()));
        }
        if !(self.beta > 0.0) {
            return Err(WrinkleError::BadParams("beta must be positive".into()));
        }
        match self.c {
            StructureScale::RelativeToMax(f) | StructureScale::Fixed(f) if !(f > 0.0) => {
                Err(WrinkleError::BadParams("c must be positive".into()))
            }
            _ => Ok(()),
        }
    }
}

/// Eigen-decomposition of a 2x2 Hessian with `|lambda1| <= |lambda2|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianEigen {
    pub lambda1: f64,
    pub lambda2: f64,
    pub e1: [f64; 2],
    pub e2: [f64; 2],
    /// False when more than half of the smoothing window had no depth.
    pub valid: bool,
}

impl HessianEigen {
    /// Decomposes `[[xx, xy], [xy, yy]]`.
    pub fn from_components(xx: f64, xy: f64, yy: f64) -> Self {
        let mean = 0.5 * (xx + yy);
        let half_diff = 0.5 * (xx - yy);
        let radius = half_diff.hypot(xy);
        let (hi, lo) = (mean + radius, mean - radius);
        // Eigenvector of `hi`, picking the better-conditioned formula.
        let v_hi = if radius == 0.0 {
            [1.0, 0.0]
        } else if half_diff >= 0.0 {
            let (a, b) = (half_diff + radius, xy);
            let n = a.hypot(b);
            [a / n, b / n]
        } else {
            let (a, b) = (xy, radius - half_diff);
            let n = a.hypot(b);
            [a / n, b / n]
        };
        let v_lo = [-v_hi[1], v_hi[0]];
        // Near-ties (saddles) resolve to lambda2 = hi so rounding noise
        // cannot flip the sign test in `vesselness`.
        let (lambda1, e1, lambda2, e2) =
            if lo.abs() <= hi.abs() * (1.0 + 1e-9) { (lo, v_lo, hi, v_hi) } else { (hi, v_hi, lo, v_lo) };
        Self { lambda1, lambda2, e1, e2, valid: true }
    }

    pub fn frobenius(&self) -> f64 {
        self.lambda1.hypot(self.lambda2)
    }

    /// Frangi's 2D vesselness for a given structureness sensitivity `c`.
    pub fn vesselness(&self, beta: f64, c: f64, polarity: Polarity, min_structure: f64) -> f64 {
        let accepted = match polarity {
            Polarity::Dark => self.lambda2 > 0.0,
            Polarity::Bright => self.lambda2 < 0.0,
        };
        let s = self.frobenius();
        if !self.valid || !accepted || s <= min_structure {
            return 0.0;
        }
        let rb = self.lambda1.abs() / self.lambda2.abs();
        (-rb * rb / (2.0 * beta * beta)).exp() * (1.0 - (-s * s / (2.0 * c * c)).exp())
    }
}

// ---------------------------------------------------------------------------
// Orientation entropy
// ---------------------------------------------------------------------------

/// Normalized 64x64 histogram over (inclination, azimuth).
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationHistogram {
    /// Row-major `[inclination_bin * 64 + azimuth_bin]`.
    pub bins: Vec<f64>,
    pub count: usize,
}

impl OrientationHistogram {
    pub fn get(&self, inclination_bin: usize, azimuth_bin: usize) -> f64 {
        self.bins[inclination_bin * ORIENTATION_BINS + azimuth_bin]
    }

    /// Shannon entropy in bits, with `0 log 0 = 0`.
    pub fn entropy(&self) -> f64 {
        shannon_bits(&self.bins)
    }
}

/// Entropy in bits of a probability vector.
pub fn shannon_bits(p: &[f64]) -> f64 {
    -p.iter().filter(|&&v| v > 0.0).map(|&v| v * v.log2()).sum::<f64>()
}

/// Histogram bin of a unit normal: inclination over `[0, pi]`, azimuth
/// over `(-pi, pi]`, 64 bins each.
#[inline]
pub fn orientation_bin(n: &nalgebra::Vector3<f64>) -> usize {
    use std::f64::consts::PI;
    let s = spherical_unchecked(n);
    let nb = ORIENTATION_BINS as f64;
    let bi = ((s.inclination / PI * nb) as usize).min(ORIENTATION_BINS - 1);
    let ba = (((s.azimuth + PI) / (2.0 * PI) * nb) as usize).min(ORIENTATION_BINS - 1);
    bi * ORIENTATION_BINS + ba
}

fn check_window(window: usize) -> Result<usize, WrinkleError> {
    if window < 3 || window % 2 == 0 {
        return Err(WrinkleError::BadWindow(window));
    }
    Ok(window / 2)
}

fn organized_shape(nmap: &NormalMap) -> Result<(usize, usize), WrinkleError> {
    nmap.organized.ok_or(WrinkleError::Unorganized)
}

/// Histogram of valid normals in the `window`-sized square around `center`
/// (clipped to the image), normalized to sum 1. All zeros if the window holds
/// no valid normal.
pub fn orientation_histogram(
    nmap: &NormalMap,
    center: Pixel,
    window: usize,
) -> Result<OrientationHistogram, WrinkleError> {
    let half = check_window(window)?;
    let (w, h) = organized_shape(nmap)?;
    if !center.in_bounds(w, h) {
        return Err(WrinkleError::OutOfBounds { pixel: center, width: w, height: h });
    }
    let (cx, cy) = (center.x as usize, center.y as usize);
    let mut bins = vec![0.0; ORIENTATION_BINS * ORIENTATION_BINS];
    let mut count = 0usize;
    for y in cy.saturating_sub(half)..=(cy + half).min(h - 1) {
        for x in cx.saturating_sub(half)..=(cx + half).min(w - 1) {
            let i = y * w + x;
            if nmap.valid[i] {
                bins[orientation_bin(&nmap.normals[i])] += 1.0;
                count += 1;
            }
        }
    }
    if count > 0 {
        let n = count as f64;
        bins.iter_mut().for_each(|b| *b /= n);
    }
    Ok(OrientationHistogram { bins, count })
}

/// Running histogram whose entropy is updated in O(1) per sample.
struct RunningEntropy<'a> {
    counts: Vec<u32>,
    n: u32,
    /// Sum over bins of `c log2 c`.
    clogc: f64,
    table: &'a [f64],
}

impl<'a> RunningEntropy<'a> {
    fn new(table: &'a [f64]) -> Self {
        Self { counts: vec![0; ORIENTATION_BINS * ORIENTATION_BINS], n: 0, clogc: 0.0, table }
    }

    #[inline]
    fn add(&mut self, bin: usize) {
        let c = self.counts[bin] as usize;
        self.clogc += self.table[c + 1] - self.table[c];
        self.counts[bin] += 1;
        self.n += 1;
    }

    #[inline]
    fn remove(&mut self, bin: usize) {
        let c = self.counts[bin] as usize;
        self.clogc += self.table[c - 1] - self.table[c];
        self.counts[bin] -= 1;
        self.n -= 1;
    }

    fn entropy(&self) -> Option<f64> {
        if self.n == 0 {
            return None;
        }
        let n = self.n as f64;
        // Nonzero entropies of at most a few hundred samples are far above
        // this; anything smaller is drift from the incremental updates.
        let e = n.log2() - self.clogc / n;
        Some(if e < 1e-9 { 0.0 } else { e })
    }
}

/// Orientation entropy at every pixel with a valid normal.
pub fn entropy_filter(nmap: &NormalMap, window: usize) -> Result<EntropyMap, WrinkleError> {
    let half = check_window(window)?;
    let (w, h) = organized_shape(nmap)?;
    let bins: Vec<Option<usize>> =
        nmap.normals.iter().zip(&nmap.valid).map(|(n, &v)| v.then(|| orientation_bin(n))).collect();
    let table: Vec<f64> =
        (0..=window * window + 1).map(|c| if c == 0 { 0.0 } else { c as f64 * (c as f64).log2() }).collect();

    let mut values = vec![0.0; w * h];
    let mut valid = vec![false; w * h];
    let mut running = RunningEntropy::new(&table);
    for y in 0..h {
        let (y0, y1) = (y.saturating_sub(half), (y + half).min(h - 1));
        running.counts.iter_mut().for_each(|c| *c = 0);
        running.n = 0;
        running.clogc = 0.0;
        for x in 0..=half.min(w - 1) {
            for yy in y0..=y1 {
                if let Some(b) = bins[yy * w + x] {
                    running.add(b);
                }
            }
        }
        for x in 0..w {
            if x > 0 {
                if x > half {
                    let out = x - half - 1;
                    for yy in y0..=y1 {
                        if let Some(b) = bins[yy * w + out] {
                            running.remove(b);
                        }
                    }
                }
                let incoming = x + half;
                if incoming < w {
                    for yy in y0..=y1 {
                        if let Some(b) = bins[yy * w + incoming] {
                            running.add(b);
                        }
                    }
                }
            }
            let i = y * w + x;
            if bins[i].is_some() {
                if let Some(e) = running.entropy() {
                    values[i] = e;
                    valid[i] = true;
                }
            }
        }
    }
    Ok(EntropyMap { map: ScalarMap { width: w, height: h, values, valid } })
}

// ---------------------------------------------------------------------------
// Hessian and vesselness
// ---------------------------------------------------------------------------

/// Scale-normalized Hessian components of a depth image at one scale.
#[derive(Debug, Clone)]
pub struct HessianField {
    pub width: usize,
    pub height: usize,
    pub sigma: f64,
    pub xx: Vec<f64>,
    pub xy: Vec<f64>,
    pub yy: Vec<f64>,
    pub valid: Vec<bool>,
}

impl HessianField {
    /// Gaussian-derivative Hessian multiplied by `sigma^2`. Missing depth is
    /// filled by normalized convolution first; pixels whose window is more
    /// than half missing are flagged invalid.
    pub fn compute(img: &DepthImage, sigma: f64) -> Self {
        let (w, h) = (img.width(), img.height());
        let present: Vec<bool> = img.data().iter().map(|&d| d > INVALID_DEPTH).collect();
        let (filled, coverage) = filter::fill_invalid(img.data(), &present, w, h, sigma);
        let k = GaussianKernels::new(sigma);
        let s2 = sigma * sigma;
        let scale = |v: Vec<f64>| v.into_iter().map(|x| x * s2).collect::<Vec<_>>();
        let xx = scale(filter::separable(&filled, w, h, &k.g2, &k.g0));
        let yy = scale(filter::separable(&filled, w, h, &k.g0, &k.g2));
        let xy = scale(filter::separable(&filled, w, h, &k.g1, &k.g1));
        let valid = coverage.iter().map(|&c| c >= 0.5).collect();
        Self { width: w, height: h, sigma, xx, xy, yy, valid }
    }

    pub fn eigen(&self, i: usize) -> HessianEigen {
        let mut e = HessianEigen::from_components(self.xx[i], self.xy[i], self.yy[i]);
        e.valid = self.valid[i];
        e
    }
}

/// Hessian eigen-decomposition at a single pixel.
pub fn hessian_at_scale(img: &DepthImage, p: Pixel, sigma: f64) -> Result<HessianEigen, WrinkleError> {
    let (w, h) = (img.width(), img.height());
    if !img.contains(p) {
        return Err(WrinkleError::OutOfBounds { pixel: p, width: w, height: h });
    }
    if !(sigma > 0.0) {
        return Err(WrinkleError::BadParams(format!("sigma must be positive, got {sigma}")));
    }
    let present: Vec<bool> = img.data().iter().map(|&d| d > INVALID_DEPTH).collect();
    let (filled, coverage) = filter::fill_invalid(img.data(), &present, w, h, sigma);
    let k = GaussianKernels::new(sigma);
    let (x, y) = (p.x as usize, p.y as usize);
    let s2 = sigma * sigma;
    let xx = point_convolve(&filled, w, h, x, y, &k.g2, &k.g0) * s2;
    let yy = point_convolve(&filled, w, h, x, y, &k.g0, &k.g2) * s2;
    let xy = point_convolve(&filled, w, h, x, y, &k.g1, &k.g1) * s2;
    let mut e = HessianEigen::from_components(xx, xy, yy);
    e.valid = coverage[y * w + x] >= 0.5;
    Ok(e)
}

/// Separable convolution evaluated at one pixel, with the same odd-reflection
/// borders as the full-image filter.
fn point_convolve(data: &[f64], w: usize, h: usize, x: usize, y: usize, kx: &[f64], ky: &[f64]) -> f64 {
    let row_value = |row: usize| -> f64 {
        let line = &data[row * w..(row + 1) * w];
        let r = (kx.len() / 2) as isize;
        kx.iter()
            .enumerate()
            .map(|(k, hk)| filter::odd_extend(line.len(), x as isize + r - k as isize, |i| line[i]) * hk)
            .sum()
    };
    let r = (ky.len() / 2) as isize;
    ky.iter().enumerate().map(|(k, hk)| filter::odd_extend(h, y as isize + r - k as isize, row_value) * hk).sum()
}

fn resolve_c(field: &HessianField, params: &VesselnessParams) -> f64 {
    match params.c {
        StructureScale::Fixed(c) => c,
        StructureScale::RelativeToMax(fraction) => {
            let max_s =
                (0..field.xx.len()).filter(|&i| field.valid[i]).map(|i| field.eigen(i).frobenius()).fold(0.0, f64::max);
            (fraction * max_s).max(params.min_structure)
        }
    }
}

struct ScaleResponse {
    values: Vec<f64>,
    across: Vec<f64>,
    valid: Vec<bool>,
}

fn scale_response(img: &DepthImage, sigma: f64, params: &VesselnessParams) -> ScaleResponse {
    let field = HessianField::compute(img, sigma);
    let c = resolve_c(&field, params);
    let n = field.xx.len();
    let mut values = vec![0.0; n];
    let mut across = vec![0.0; n];
    for i in 0..n {
        let e = field.eigen(i);
        values[i] = e.vesselness(params.beta, c, params.polarity, params.min_structure);
        across[i] = e.e2[1].atan2(e.e2[0]);
    }
    ScaleResponse { values, across, valid: field.valid }
}

/// Vesselness at a single scale.
pub fn vesselness_at_scale(
    img: &DepthImage,
    sigma: f64,
    params: &VesselnessParams,
) -> Result<VesselnessMap, WrinkleError> {
    let single = VesselnessParams { scales: vec![sigma], ..params.clone() };
    multiscale_vesselness(img, &single)
}

/// Per-pixel maximum vesselness over `params.scales`.
pub fn multiscale_vesselness(img: &DepthImage, params: &VesselnessParams) -> Result<VesselnessMap, WrinkleError> {
    params.validate()?;
    let (w, h) = (img.width(), img.height());
    let n = w * h;
    let mut values = vec![0.0; n];
    let mut best_scale = vec![params.scales[0]; n];
    let mut across = vec![0.0; n];
    let mut valid = vec![false; n];
    for (k, &sigma) in params.scales.iter().enumerate() {
        let r = scale_response(img, sigma, params);
        for i in 0..n {
            if k == 0 {
                across[i] = r.across[i];
            }
            if r.valid[i] {
                valid[i] = true;
                if r.values[i] > values[i] {
                    values[i] = r.values[i];
                    best_scale[i] = sigma;
                    across[i] = r.across[i];
                }
            }
        }
    }
    Ok(VesselnessMap { map: ScalarMap { width: w, height: h, values, valid }, best_scale, across })
}

// ---------------------------------------------------------------------------
// Peaks
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Peak {
    pub pixel: Pixel,
    pub value: f64,
}

/// Peaks sorted by descending response.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
}

impl PeakList {
    pub fn len(&self) -> usize {
        self.peaks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.peaks.is_empty()
    }

    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.peaks.iter().map(|p| p.pixel)
    }

    pub fn truncated(mut self, n: usize) -> Self {
        self.peaks.truncate(n);
        self
    }
}

/// Response threshold for peak extraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    /// Quantile in `[0, 1]` of the strictly positive valid responses.
    Percentile(f64),
}

impl Threshold {
    pub fn resolve(&self, map: &ScalarMap) -> f64 {
        match *self {
            Threshold::Absolute(t) => t,
            Threshold::Percentile(q) => {
                let mut positive: Vec<f64> =
                    map.values.iter().zip(&map.valid).filter(|(v, &ok)| ok && **v > 0.0).map(|(v, _)| *v).collect();
                if positive.is_empty() {
                    return f64::INFINITY;
                }
                positive.sort_by(f64::total_cmp);
                let idx = ((q.clamp(0.0, 1.0) * (positive.len() - 1) as f64).floor()) as usize;
                positive[idx]
            }
        }
    }
}

/// Pixels strictly greater than every valid neighbor within a disk of
/// `radius` and at least `threshold`, suppressed greedily in descending
/// response order (row-major order breaks ties).
pub fn find_local_maxima(map: &ScalarMap, radius: usize, threshold: f64) -> PeakList {
    assert!(radius >= 1, "peak radius must be at least 1");
    let (w, h) = (map.width, map.height);
    let r = radius as isize;
    let offsets: Vec<(isize, isize)> = (-r..=r)
        .flat_map(|dy| (-r..=r).map(move |dx| (dx, dy)))
        .filter(|&(dx, dy)| (dx, dy) != (0, 0) && dx * dx + dy * dy <= r * r)
        .collect();

    let mut found = Vec::new();
    for y in 0..h {
        'pixel: for x in 0..w {
            let i = y * w + x;
            let v = map.values[i];
            if !map.valid[i] || !(v >= threshold) {
                continue;
            }
            for &(dx, dy) in &offsets {
                let (nx, ny) = (x as isize + dx, y as isize + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if map.valid[j] && map.values[j] >= v {
                    continue 'pixel;
                }
            }
            found.push(Peak { pixel: Pixel::new(x as i32, y as i32), value: v });
        }
    }
    // Stable sort keeps row-major order among equal responses.
    found.sort_by(|a, b| b.value.total_cmp(&a.value));
    let mut peaks: Vec<Peak> = Vec::with_capacity(found.len());
    for cand in found {
        if peaks.iter().all(|p| p.pixel.distance(cand.pixel) >= radius as f64) {
            peaks.push(cand);
        }
    }
    PeakList { peaks }
}

/// Ridge-crest pixels: responses at least `threshold` that are maximal
/// across the ridge, i.e. along the across-ridge eigenvector direction
/// (neighbors sampled bilinearly one pixel away on either side).
pub fn ridge_crests(vmap: &VesselnessMap, threshold: f64) -> Vec<Pixel> {
    let m = &vmap.map;
    let mut out = Vec::new();
    for y in 0..m.height {
        for x in 0..m.width {
            let i = y * m.width + x;
            let v = m.values[i];
            if !m.valid[i] || !(v >= threshold) || v <= 0.0 {
                continue;
            }
            let (s, c) = vmap.across[i].sin_cos();
            let ahead = m.sample(x as f64 + c, y as f64 + s);
            let behind = m.sample(x as f64 - c, y as f64 - s);
            if v > behind && v >= ahead {
                out.push(Pixel::new(x as i32, y as i32));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Roughness
// ---------------------------------------------------------------------------

/// Garment-wide summaries of a wrinkle response.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoughnessIndex {
    /// Mean response over the garment.
    pub mean: f64,
    /// Entropy (bits) of the 64-bin response histogram over `[0, max]`.
    pub entropy: f64,
}

pub fn roughness_index(map: &ScalarMap, garment: &Mask) -> Result<RoughnessIndex, WrinkleError> {
    if garment.width != map.width || garment.height != map.height {
        return Err(WrinkleError::MaskShape {
            mask_w: garment.width,
            mask_h: garment.height,
            map_w: map.width,
            map_h: map.height,
        });
    }
    let samples: Vec<f64> =
        (0..map.values.len()).filter(|&i| garment.bits[i] && map.valid[i]).map(|i| map.values[i]).collect();
    if samples.is_empty() {
        return Err(WrinkleError::EmptyMask);
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let max = samples.iter().copied().fold(0.0, f64::max);
    let mut hist = vec![0.0; ROUGHNESS_BINS];
    for v in &samples {
        let b = if max > 0.0 { ((v / max * ROUGHNESS_BINS as f64) as usize).min(ROUGHNESS_BINS - 1) } else { 0 };
        hist[b] += 1.0 / n;
    }
    Ok(RoughnessIndex { mean, entropy: shannon_bits(&hist) })
}
