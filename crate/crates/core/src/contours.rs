//! Active contours and pixel-mask geometry.

use nalgebra::{DMatrix, Point2};
use thiserror::Error;

use crate::filter::{self, GaussianKernels};
use crate::geometry::{DepthImage, Pixel, INVALID_DEPTH};
use crate::wrinkle::ScalarMap;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContourError {
    #[error("contour needs at least 3 distinct vertices, got {0}")]
    TooFewVertices(usize),
    #[error("seed ({}, {}) is outside the {width}x{height} image", .seed.x, .seed.y)]
    SeedOutOfBounds { seed: Pixel, width: usize, height: usize },
    #[error("seed ({}, {}) has no depth", .0.x, .0.y)]
    SeedInvalidDepth(Pixel),
    #[error("invalid snake parameters: {0}")]
    BadParams(String),
    #[error("mask is empty")]
    EmptyMask,
    #[error("mask needs at least 2 pixels, has {0}")]
    TooFewPixels(usize),
}

/// Closed polyline in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    vertices: Vec<Point2<f64>>,
}

impl Contour {
    /// Drops consecutive duplicates (including last-to-first) and requires
    /// at least three vertices to remain.
    pub fn new(vertices: Vec<Point2<f64>>) -> Result<Self, ContourError> {
        let mut out: Vec<Point2<f64>> = Vec::with_capacity(vertices.len());
        for v in vertices {
            if out.last() != Some(&v) {
                out.push(v);
            }
        }
        while out.len() > 1 && out.first() == out.last() {
            out.pop();
        }
        if out.len() < 3 {
            return Err(ContourError::TooFewVertices(out.len()));
        }
        Ok(Self { vertices: out })
    }

    pub fn from_pixels(pixels: &[Pixel]) -> Result<Self, ContourError> {
        Self::new(pixels.iter().map(|p| Point2::new(f64::from(p.x), f64::from(p.y))).collect())
    }

    pub fn vertices(&self) -> &[Point2<f64>] {
        &self.vertices
    }

    fn edges(&self) -> impl Iterator<Item = (&Point2<f64>, &Point2<f64>)> {
        let n = self.vertices.len();
        (0..n).map(move |i| (&self.vertices[i], &self.vertices[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| (b - a).norm()).sum()
    }

    /// Absolute shoelace area.
    pub fn area(&self) -> f64 {
        0.5 * self.edges().map(|(a, b)| a.x * b.y - b.x * a.y).sum::<f64>().abs()
    }

    pub fn centroid(&self) -> Point2<f64> {
        let sum = self.vertices.iter().fold(nalgebra::Vector2::zeros(), |acc, v| acc + v.coords);
        Point2::from(sum / self.vertices.len() as f64)
    }
}

/// Binary pixel mask.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub bits: Vec<bool>,
}

impl Mask {
    /// Empty mask.
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![false; width * height] }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self { width, height, bits: vec![true; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut m = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.bits[y * width + x] = f(x, y);
            }
        }
        m
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.bits[y * self.width + x]
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.in_bounds(self.width, self.height) && self.get(p.x as usize, p.y as usize)
    }

    pub fn set(&mut self, p: Pixel) {
        if p.in_bounds(self.width, self.height) {
            self.bits[p.y as usize * self.width + p.x as usize] = true;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.bits.iter().any(|&b| b)
    }

    /// Set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(move |(i, _)| Pixel::new((i % self.width) as i32, (i / self.width) as i32))
    }

    /// Set pixels with an unset 4-neighbor or on the image border; together
    /// they form the mask's 8-connected outline.
    pub fn boundary(&self) -> Vec<Pixel> {
        let (w, h) = (self.width, self.height);
        self.pixels()
            .filter(|p| {
                let (x, y) = (p.x as usize, p.y as usize);
                x == 0
                    || y == 0
                    || x + 1 == w
                    || y + 1 == h
                    || !self.get(x - 1, y)
                    || !self.get(x + 1, y)
                    || !self.get(x, y - 1)
                    || !self.get(x, y + 1)
            })
            .collect()
    }

    pub fn and_not(&self, other: &Mask) -> Mask {
        let bits = self.bits.iter().zip(&other.bits).map(|(&a, &b)| a && !b).collect();
        Mask { width: self.width, height: self.height, bits }
    }

    /// Copy shifted by `(dx, dy)`; pixels leaving the image are dropped.
    pub fn translated(&self, dx: i32, dy: i32) -> Mask {
        let mut out = Mask::new(self.width, self.height);
        for p in self.pixels() {
            out.set(Pixel::new(p.x + dx, p.y + dy));
        }
        out
    }
}

/// Even-odd rasterization of a closed contour. A pixel is set when its
/// center lies inside the polygon or on one of its edges.
pub fn contour_to_mask(c: &Contour, width: usize, height: usize) -> Mask {
    let mut mask = Mask::new(width, height);
    if width == 0 || height == 0 {
        return mask;
    }
    let mut xs: Vec<f64> = Vec::new();
    for y in 0..height {
        let yc = y as f64;
        xs.clear();
        for (p, q) in c.edges() {
            // Half-open in y so shared vertices are counted once.
            if (p.y <= yc && q.y > yc) || (q.y <= yc && p.y > yc) {
                xs.push(p.x + (yc - p.y) * (q.x - p.x) / (q.y - p.y));
            }
        }
        xs.sort_by(f64::total_cmp);
        for pair in xs.chunks_exact(2) {
            let lo = pair[0].ceil().max(0.0);
            let hi = pair[1].floor().min((width - 1) as f64);
            if lo <= hi {
                for x in lo as usize..=hi as usize {
                    mask.bits[y * width + x] = true;
                }
            }
        }
    }
    const EPS: f64 = 1e-9;
    for (p, q) in c.edges() {
        if (p.y - q.y).abs() < EPS {
            let yr = p.y.round();
            if (p.y - yr).abs() < EPS {
                let (lo, hi) = (p.x.min(q.x).ceil(), p.x.max(q.x).floor());
                let mut x = lo;
                while x <= hi {
                    mask.set(Pixel::new(x as i32, yr as i32));
                    x += 1.0;
                }
            }
            continue;
        }
        let (lo, hi) = (p.y.min(q.y).ceil(), p.y.max(q.y).floor());
        let mut y = lo;
        while y <= hi {
            let x = p.x + (y - p.y) * (q.x - p.x) / (q.y - p.y);
            let xr = x.round();
            if (x - xr).abs() < EPS {
                mask.set(Pixel::new(xr as i32, y as i32));
            }
            y += 1.0;
        }
    }
    mask
}

/// Centroid of the set pixels, rounded to the nearest pixel.
pub fn mask_center(m: &Mask) -> Result<Pixel, ContourError> {
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for p in m.pixels() {
        sx += f64::from(p.x);
        sy += f64::from(p.y);
        n += 1;
    }
    if n == 0 {
        return Err(ContourError::EmptyMask);
    }
    Ok(Pixel::new((sx / n as f64).round() as i32, (sy / n as f64).round() as i32))
}

/// Dilation by the disk `dx^2 + dy^2 <= radius^2`.
pub fn dilate_mask(m: &Mask, radius: usize) -> Mask {
    let (w, h) = (m.width, m.height);
    let r = radius as i64;
    let spans: Vec<(i64, i64)> = (-r..=r)
        .map(|dy| {
            let half = ((r * r - dy * dy) as f64).sqrt().floor() as i64;
            (dy, half)
        })
        .collect();
    let mut out = Mask::new(w, h);
    for p in m.pixels() {
        for &(dy, half) in &spans {
            let y = i64::from(p.y) + dy;
            if y < 0 || y >= h as i64 {
                continue;
            }
            let x0 = (i64::from(p.x) - half).max(0) as usize;
            let x1 = (i64::from(p.x) + half).min(w as i64 - 1) as usize;
            let row = y as usize * w;
            out.bits[row + x0..=row + x1].iter_mut().for_each(|b| *b = true);
        }
    }
    out
}

/// The two outline pixels at maximum Euclidean separation. Ties go to the
/// row-major-first pair.
pub fn extreme_points(m: &Mask) -> Result<(Pixel, Pixel), ContourError> {
    let count = m.count();
    if count < 2 {
        return Err(ContourError::TooFewPixels(count));
    }
    let outline = m.boundary();
    let mut best = (outline[0], outline[1]);
    let mut best_d2 = -1i64;
    for (i, a) in outline.iter().enumerate() {
        for b in &outline[i + 1..] {
            let d2 = i64::from(a.x - b.x).pow(2) + i64::from(a.y - b.y).pow(2);
            if d2 > best_d2 {
                best_d2 = d2;
                best = (*a, *b);
            }
        }
    }
    Ok(best)
}

// ---------------------------------------------------------------------------
// Snakes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct SnakeParams {
    /// Elasticity weight.
    pub alpha: f64,
    /// Bending weight.
    pub beta_rigidity: f64,
    /// Step size.
    pub gamma: f64,
    /// External (edge attraction) weight.
    pub kappa: f64,
    pub max_iters: usize,
    /// Stop once the mean vertex displacement drops below this (pixels).
    pub convergence_eps: f64,
    pub init_radius: f64,
    pub n_vertices: usize,
    /// Smoothing applied to depth before taking its gradient magnitude.
    pub edge_sigma: f64,
}

impl Default for SnakeParams {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            beta_rigidity: 0.05,
            gamma: 1.0,
            kappa: 2.0,
            max_iters: 500,
            convergence_eps: 0.05,
            init_radius: 25.0,
            n_vertices: 64,
            edge_sigma: 2.0,
        }
    }
}

impl SnakeParams {
    pub fn validate(&self) -> Result<(), ContourError> {
        let weights = [self.alpha, self.beta_rigidity, self.kappa];
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(ContourError::BadParams("weights must be non-negative".into()));
        }
        if !(self.gamma > 0.0) || !(self.init_radius > 0.0) || !(self.edge_sigma > 0.0) {
            return Err(ContourError::BadParams("gamma, init_radius and edge_sigma must be positive".into()));
        }
        if self.max_iters < 1 || self.n_vertices < 8 {
            return Err(ContourError::BadParams("need max_iters >= 1 and n_vertices >= 8".into()));
        }
        Ok(())
    }
}

/// Edge-attraction field shared by every snake on one image: the gradient
/// magnitude of the smoothed depth, scaled to a maximum of 1.
#[derive(Debug, Clone)]
pub struct EdgeField {
    pub magnitude: ScalarMap,
    depth_valid: Vec<bool>,
}

impl EdgeField {
    pub fn new(img: &DepthImage, sigma: f64) -> Self {
        let (w, h) = (img.width(), img.height());
        let present: Vec<bool> = img.data().iter().map(|&d| d > INVALID_DEPTH).collect();
        let (filled, _) = filter::fill_invalid(img.data(), &present, w, h, sigma);
        let k = GaussianKernels::new(sigma);
        let dx = filter::separable(&filled, w, h, &k.g1, &k.g0);
        let dy = filter::separable(&filled, w, h, &k.g0, &k.g1);
        let mut mag: Vec<f64> = dx.iter().zip(&dy).map(|(a, b)| a.hypot(*b)).collect();
        let max = mag.iter().copied().fold(0.0, f64::max);
        if max > 1e-12 {
            mag.iter_mut().for_each(|v| *v /= max);
        } else {
            mag.iter_mut().for_each(|v| *v = 0.0);
        }
        Self { magnitude: ScalarMap::new(w, h, mag), depth_valid: present }
    }

    pub fn width(&self) -> usize {
        self.magnitude.width
    }

    /// Cubic-convolution sample of the magnitude and its exact gradient.
    /// The interpolant is C1, so small enough steps along the resulting force
    /// always lower the sampled energy.
    pub fn sample(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let m = &self.magnitude;
        let (xmax, ymax) = ((m.width - 1) as f64, (m.height - 1) as f64);
        let (x, y) = (x.clamp(0.0, xmax), y.clamp(0.0, ymax));
        let (x0, y0) = (x.floor(), y.floor());
        let (wx, dwx) = keys_weights(x - x0);
        let (wy, dwy) = keys_weights(y - y0);
        let (mut v, mut gx, mut gy) = (0.0, 0.0, 0.0);
        for j in 0..4 {
            let yy = (y0 as i64 + j as i64 - 1).clamp(0, ymax as i64) as usize;
            let (mut row, mut drow) = (0.0, 0.0);
            for i in 0..4 {
                let xx = (x0 as i64 + i as i64 - 1).clamp(0, xmax as i64) as usize;
                let g = m.values[yy * m.width + xx];
                row += wx[i] * g;
                drow += dwx[i] * g;
            }
            v += wy[j] * row;
            gx += wy[j] * drow;
            gy += dwy[j] * row;
        }
        (v, gx, gy)
    }

    pub fn height(&self) -> usize {
        self.magnitude.height
    }
}

/// Per-iteration record of a snake run.
#[derive(Debug, Clone, PartialEq)]
pub struct SnakeTrace {
    pub contour: Contour,
    /// Total energy before the first iteration and after each accepted one.
    pub energies: Vec<f64>,
    /// Perimeter before the first iteration and after each accepted one.
    pub perimeters: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

/// Internal-energy stiffness matrix of a closed snake.
fn stiffness(n: usize, alpha: f64, beta: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    let row = [2.0 * beta, -2.0 * alpha - 8.0 * beta, 4.0 * alpha + 12.0 * beta, -2.0 * alpha - 8.0 * beta, 2.0 * beta];
    for i in 0..n {
        for (k, v) in row.iter().enumerate() {
            let j = (i + n + k - 2) % n;
            a[(i, j)] += v;
        }
    }
    a
}

/// Keys cubic-convolution weights (a = -1/2) for taps at -1, 0, 1, 2 and
/// their derivatives with respect to `t`.
fn keys_weights(t: f64) -> ([f64; 4], [f64; 4]) {
    let (t2, t3) = (t * t, t * t * t);
    (
        [-0.5 * t3 + t2 - 0.5 * t, 1.5 * t3 - 2.5 * t2 + 1.0, -1.5 * t3 + 2.0 * t2 + 0.5 * t, 0.5 * t3 - 0.5 * t2],
        [-1.5 * t2 + 2.0 * t - 0.5, 4.5 * t2 - 5.0 * t, -4.5 * t2 + 4.0 * t + 0.5, 1.5 * t2 - t],
    )
}

fn snake_energy(xs: &[f64], ys: &[f64], params: &SnakeParams, field: &EdgeField) -> f64 {
    let n = xs.len();
    let mut e = 0.0;
    for i in 0..n {
        let (p, q) = ((i + n - 1) % n, (i + 1) % n);
        let (dx, dy) = (xs[i] - xs[p], ys[i] - ys[p]);
        let (bx, by) = (xs[p] - 2.0 * xs[i] + xs[q], ys[p] - 2.0 * ys[i] + ys[q]);
        e += params.alpha * (dx * dx + dy * dy) + params.beta_rigidity * (bx * bx + by * by);
        e -= params.kappa * field.sample(xs[i], ys[i]).0;
    }
    e
}

fn polygon_perimeter(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len();
    (0..n).map(|i| (xs[(i + 1) % n] - xs[i]).hypot(ys[(i + 1) % n] - ys[i])).sum()
}

/// Evolves a snake from a circle around `seed` on a precomputed edge field.
///
/// Each iteration takes a semi-implicit step `(I + gamma A) x' = x + gamma f`
/// where `A` is the internal-energy stiffness and `f` the edge force. A step
/// that would raise the total energy is retried with half the step size, so
/// the recorded energies never increase.
pub fn evolve_snake_traced(field: &EdgeField, seed: Pixel, params: &SnakeParams) -> Result<SnakeTrace, ContourError> {
    params.validate()?;
    let (w, h) = (field.width(), field.height());
    if !seed.in_bounds(w, h) {
        return Err(ContourError::SeedOutOfBounds { seed, width: w, height: h });
    }
    if !field.depth_valid[seed.y as usize * w + seed.x as usize] {
        return Err(ContourError::SeedInvalidDepth(seed));
    }
    let n = params.n_vertices;
    let (xmax, ymax) = ((w - 1) as f64, (h - 1) as f64);
    let mut xs: Vec<f64> = Vec::with_capacity(n);
    let mut ys: Vec<f64> = Vec::with_capacity(n);
    for i in 0..n {
        let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
        xs.push((f64::from(seed.x) + params.init_radius * t.cos()).clamp(0.0, xmax));
        ys.push((f64::from(seed.y) + params.init_radius * t.sin()).clamp(0.0, ymax));
    }

    let a = stiffness(n, params.alpha, params.beta_rigidity);
    // Inverse of (I + gamma A) per halving level, built on first use.
    let mut inverses: Vec<DMatrix<f64>> = Vec::new();
    let mut level = 0usize;
    let mut gamma = params.gamma;
    let mut energy = snake_energy(&xs, &ys, params, field);
    let mut energies = vec![energy];
    let mut perimeters = vec![polygon_perimeter(&xs, &ys)];
    let mut converged = false;
    let mut iterations = 0;
    let min_gamma = params.gamma * 1e-6;

    let mut rhs_x = nalgebra::DVector::zeros(n);
    let mut rhs_y = nalgebra::DVector::zeros(n);
    'outer: while iterations < params.max_iters {
        let (fx, fy): (Vec<f64>, Vec<f64>) = (0..n)
            .map(|i| {
                let (_, gx, gy) = field.sample(xs[i], ys[i]);
                (params.kappa * gx, params.kappa * gy)
            })
            .unzip();
        loop {
            for i in 0..n {
                rhs_x[i] = xs[i] + gamma * fx[i];
                rhs_y[i] = ys[i] + gamma * fy[i];
            }
            while inverses.len() <= level {
                let g = params.gamma * 0.5f64.powi(inverses.len() as i32);
                let m = DMatrix::identity(n, n) + &a * g;
                inverses.push(m.try_inverse().expect("I + gamma A is positive definite"));
            }
            let nx = &inverses[level] * &rhs_x;
            let ny = &inverses[level] * &rhs_y;
            let cand_x: Vec<f64> = nx.iter().map(|v| v.clamp(0.0, xmax)).collect();
            let cand_y: Vec<f64> = ny.iter().map(|v| v.clamp(0.0, ymax)).collect();
            let cand_e = snake_energy(&cand_x, &cand_y, params, field);
            if cand_e <= energy {
                let disp = (0..n).map(|i| (cand_x[i] - xs[i]).hypot(cand_y[i] - ys[i])).sum::<f64>() / n as f64;
                xs = cand_x;
                ys = cand_y;
                energy = cand_e;
                iterations += 1;
                energies.push(energy);
                perimeters.push(polygon_perimeter(&xs, &ys));
                if disp < params.convergence_eps && level == 0 {
                    converged = true;
                    break 'outer;
                }
                // Recover the step after a successful move.
                level = level.saturating_sub(1);
                gamma = params.gamma * 0.5f64.powi(level as i32);
                break;
            }
            level += 1;
            gamma = params.gamma * 0.5f64.powi(level as i32);
            if gamma < min_gamma {
                // No descent step left at any useful size.
                converged = true;
                break 'outer;
            }
        }
    }
    let vertices = xs.iter().zip(&ys).map(|(&x, &y)| Point2::new(x, y)).collect();
    let contour = match Contour::new(vertices) {
        Ok(c) => c,
        Err(_) => {
            // Fully collapsed: report a minimal triangle at the seed.
            let (sx, sy) = (f64::from(seed.x), f64::from(seed.y));
            Contour::new(vec![
                Point2::new(sx, sy),
                Point2::new((sx + 1.0).min(xmax), sy),
                Point2::new(sx, (sy + 1.0).min(ymax)),
            ])?
        }
    };
    Ok(SnakeTrace { contour, energies, perimeters, iterations, converged })
}

/// Evolves a snake seeded at `seed` on `img`.
pub fn evolve_snake(img: &DepthImage, seed: Pixel, params: &SnakeParams) -> Result<Contour, ContourError> {
    params.validate()?;
    if !img.contains(seed) {
        return Err(ContourError::SeedOutOfBounds { seed, width: img.width(), height: img.height() });
    }
    let field = EdgeField::new(img, params.edge_sigma);
    evolve_snake_traced(&field, seed, params).map(|t| t.contour)
}
