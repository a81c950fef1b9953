//! Separable Gaussian filtering on row-major `f64` grids.
//!
//! Borders use point (odd) reflection, `f(-k) = 2 f(0) - f(k)`, which
//! reproduces affine signals exactly so ramps carry no spurious curvature.

/// Sampled Gaussian derivative kernels of one scale.
#[derive(Debug, Clone)]
pub(crate) struct GaussianKernels {
    pub g0: Vec<f64>,
    pub g1: Vec<f64>,
    pub g2: Vec<f64>,
}

impl GaussianKernels {
    /// Kernels truncated at `ceil(4 sigma)` and moment-corrected so that the
    /// smoothing kernel preserves constants, the first-derivative kernel maps
    /// `x` to 1 and the second-derivative kernel maps `x^2 / 2` to 1.
    pub fn new(sigma: f64) -> Self {
        assert!(sigma > 0.0, "sigma must be positive");
        let radius = ((4.0 * sigma).ceil() as usize).max(1);
        let xs: Vec<f64> = (0..=2 * radius).map(|i| i as f64 - radius as f64).collect();
        let s2 = sigma * sigma;
        let mut g0: Vec<f64> = xs.iter().map(|x| (-x * x / (2.0 * s2)).exp()).collect();
        let sum: f64 = g0.iter().sum();
        g0.iter_mut().for_each(|v| *v /= sum);

        // Convolution kernels are applied as sum_k f(x - k) h(k).
        let mut g1: Vec<f64> = xs.iter().zip(&g0).map(|(x, g)| -x / s2 * g).collect();
        let m1: f64 = xs.iter().zip(&g1).map(|(x, h)| x * h).sum();
        g1.iter_mut().for_each(|v| *v /= -m1);

        let mut g2: Vec<f64> = xs.iter().zip(&g0).map(|(x, g)| (x * x / s2 - 1.0) / s2 * g).collect();
        // Remove the DC leak of the truncated kernel with a Gaussian-weighted
        // correction so the shape stays smooth.
        let leak: f64 = g2.iter().sum();
        for (v, g) in g2.iter_mut().zip(&g0) {
            *v -= leak * g;
        }
        let m2: f64 = xs.iter().zip(&g2).map(|(x, h)| x * x * h).sum();
        g2.iter_mut().for_each(|v| *v *= 2.0 / m2);

        Self { g0, g1, g2 }
    }
}

/// Value at signed index `i` of `line` under odd reflection.
#[inline]
fn reflect_odd(line: &[f64], i: isize) -> f64 {
    odd_extend(line.len(), i, |j| line[j])
}

/// Odd extension of `f` over `0..n`, folding repeatedly when `i` lies more
/// than one period outside, so affine signals extend exactly at any offset.
pub(crate) fn odd_extend(n: usize, i: isize, f: impl Fn(usize) -> f64) -> f64 {
    let last = n as isize - 1;
    if last == 0 {
        return f(0);
    }
    let (mut i, mut sign, mut acc) = (i, 1.0, 0.0);
    loop {
        if i < 0 {
            acc += sign * 2.0 * f(0);
            sign = -sign;
            i = -i;
        } else if i > last {
            acc += sign * 2.0 * f(last as usize);
            sign = -sign;
            i = 2 * last - i;
        } else {
            return acc + sign * f(i as usize);
        }
    }
}

fn convolve_line(line: &[f64], kernel: &[f64], out: &mut [f64]) {
    let r = (kernel.len() / 2) as isize;
    let n = line.len() as isize;
    for x in 0..n {
        let mut acc = 0.0;
        if x - r >= 0 && x + r < n {
            let base = (x + r) as usize;
            for (k, h) in kernel.iter().enumerate() {
                acc += line[base - k] * h;
            }
        } else {
            for (k, h) in kernel.iter().enumerate() {
                acc += reflect_odd(line, x + r - k as isize) * h;
            }
        }
        out[x as usize] = acc;
    }
}

/// Applies `kx` along rows and then `ky` along columns.
pub(crate) fn separable(data: &[f64], width: usize, height: usize, kx: &[f64], ky: &[f64]) -> Vec<f64> {
    let mut tmp = vec![0.0; width * height];
    for y in 0..height {
        let row = &data[y * width..(y + 1) * width];
        convolve_line(row, kx, &mut tmp[y * width..(y + 1) * width]);
    }
    let mut out = vec![0.0; width * height];
    let mut col = vec![0.0; height];
    let mut col_out = vec![0.0; height];
    for x in 0..width {
        for y in 0..height {
            col[y] = tmp[y * width + x];
        }
        convolve_line(&col, ky, &mut col_out);
        for y in 0..height {
            out[y * width + x] = col_out[y];
        }
    }
    out
}

/// Gaussian smoothing that ignores invalid samples (normalized convolution).
///
/// Returns the smoothed field, with invalid samples filled from their
/// neighborhood, and the per-pixel fraction of valid weight in the window.
pub(crate) fn masked_smooth(
    data: &[f64],
    valid: &[bool],
    width: usize,
    height: usize,
    kernel: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let weights: Vec<f64> = valid.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
    let masked: Vec<f64> = data.iter().zip(&weights).map(|(d, w)| d * w).collect();
    let num = separable(&masked, width, height, kernel, kernel);
    let den = separable(&weights, width, height, kernel, kernel);
    let out = num.iter().zip(&den).map(|(n, d)| if *d > 1e-12 { n / d } else { 0.0 }).collect();
    let coverage = den.into_iter().map(|d| d.clamp(0.0, 1.0)).collect();
    (out, coverage)
}

/// Replaces invalid samples with a Gaussian-weighted average of valid ones
/// and reports the valid-weight fraction. Valid samples are left untouched.
pub(crate) fn fill_invalid(
    data: &[f64],
    valid: &[bool],
    width: usize,
    height: usize,
    sigma: f64,
) -> (Vec<f64>, Vec<f64>) {
    if valid.iter().all(|&v| v) {
        return (data.to_vec(), vec![1.0; data.len()]);
    }
    let k = GaussianKernels::new(sigma);
    let (smooth, coverage) = masked_smooth(data, valid, width, height, &k.g0);
    let filled = data.iter().zip(valid).zip(&smooth).map(|((d, &v), s)| if v { *d } else { *s }).collect();
    (filled, coverage)
}
