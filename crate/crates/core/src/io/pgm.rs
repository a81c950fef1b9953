//! Binary PGM (P5) images: 16-bit depth in millimeters and 8-bit masks.

use thiserror::Error;

use crate::contours::Mask;
use crate::geometry::{DepthImage, GeometryError, Pixel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PgmError {
    #[error("not a binary PGM (magic `{0}`)")]
    BadMagic(String),
    #[error("malformed PGM header: {0}")]
    Header(String),
    #[error("PGM payload truncated: need {need} bytes, have {have}")]
    Truncated { need: usize, have: usize },
    #[error("depth PGM must be 16-bit, maxval is {0}")]
    NotSixteenBit(u16),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Decoded grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub data: Vec<u16>,
}

impl Pgm {
    pub fn parse(bytes: &[u8]) -> Result<Self, PgmError> {
        let mut pos = 0;
        let mut tokens = Vec::with_capacity(4);
        while tokens.len() < 4 {
            while pos < bytes.len() && (bytes[pos].is_ascii_whitespace() || bytes[pos] == b'#') {
                if bytes[pos] == b'#' {
                    while pos < bytes.len() && bytes[pos] != b'\n' {
                        pos += 1;
                    }
                } else {
                    pos += 1;
                }
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(PgmError::Header("unexpected end of header".into()));
            }
            tokens.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        if tokens[0] != "P5" {
            return Err(PgmError::BadMagic(tokens[0].clone()));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| PgmError::Header(format!("bad number `{s}`")));
        let (width, height, maxval) = (num(&tokens[1])?, num(&tokens[2])?, num(&tokens[3])?);
        if maxval == 0 || maxval > 65535 {
            return Err(PgmError::Header(format!("maxval {maxval} out of range")));
        }
        // Exactly one whitespace byte separates the header from the payload.
        pos += 1;
        let bpp = if maxval > 255 { 2 } else { 1 };
        let need = width * height * bpp;
        let have = bytes.len().saturating_sub(pos);
        if have < need {
            return Err(PgmError::Truncated { need, have });
        }
        let payload = &bytes[pos..pos + need];
        let data = if bpp == 2 {
            payload.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
        } else {
            payload.iter().map(|&b| u16::from(b)).collect()
        };
        Ok(Self { width, height, maxval: maxval as u16, data })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n{}\n", self.width, self.height, self.maxval).into_bytes();
        if self.maxval > 255 {
            for v in &self.data {
                out.extend_from_slice(&v.to_be_bytes());
            }
        } else {
            out.extend(self.data.iter().map(|&v| v.min(255) as u8));
        }
        out
    }
}

/// Depth in whole millimeters, 0 for missing samples.
pub fn depth_to_pgm(img: &DepthImage) -> Pgm {
    let data = img.data().iter().map(|&d| (d * 1000.0).round().clamp(0.0, 65535.0) as u16).collect();
    Pgm { width: img.width(), height: img.height(), maxval: 65535, data }
}

pub fn depth_from_pgm(pgm: &Pgm) -> Result<DepthImage, PgmError> {
    if pgm.maxval <= 255 {
        return Err(PgmError::NotSixteenBit(pgm.maxval));
    }
    let data = pgm.data.iter().map(|&v| f64::from(v) / 1000.0).collect();
    Ok(DepthImage::new(pgm.width, pgm.height, data)?)
}

pub fn mask_to_pgm(mask: &Mask) -> Pgm {
    let data = mask.bits.iter().map(|&b| if b { 255 } else { 0 }).collect();
    Pgm { width: mask.width, height: mask.height, maxval: 255, data }
}

/// Any nonzero sample is set.
pub fn mask_from_pgm(pgm: &Pgm) -> Mask {
    Mask { width: pgm.width, height: pgm.height, bits: pgm.data.iter().map(|&v| v != 0).collect() }
}

/// Scales `values` to 16 bits over `[0, max]` for inspection.
pub fn scalar_to_pgm(width: usize, height: usize, values: &[f64]) -> Pgm {
    let max = values.iter().copied().filter(|v| v.is_finite()).fold(0.0, f64::max);
    let data = values
        .iter()
        .map(|&v| if max > 0.0 && v.is_finite() { (v / max * 65535.0).round().clamp(0.0, 65535.0) as u16 } else { 0 })
        .collect();
    Pgm { width, height, maxval: 65535, data }
}

/// Marks `points` as 5x5 white squares on a dimmed copy of `base`.
pub fn overlay(base: &Pgm, points: &[Pixel]) -> Pgm {
    let mut out = base.clone();
    out.data.iter_mut().for_each(|v| *v = (u32::from(*v) * 3 / 4) as u16);
    for p in points {
        for dy in -2..=2 {
            for dx in -2..=2 {
                let q = Pixel::new(p.x + dx, p.y + dy);
                if q.in_bounds(out.width, out.height) {
                    out.data[q.y as usize * out.width + q.x as usize] = out.maxval;
                }
            }
        }
    }
    out
}
