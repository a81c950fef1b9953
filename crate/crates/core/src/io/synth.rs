//! Deterministic synthetic scenes: one garment lying on a flat table.
//!
//! Each garment is a coarse silhouette raised above the table. Its key part
//! is an opening at the top edge, surrounded by a raised band (waistband or
//! collar), through which the creased back panel shows. The ground-truth
//! grasp points are the band's two outer ends on the top edge. Wrinkles are
//! a low sinusoidal undulation plus `wrinkle_count` fold ridges, faded out
//! around the key part.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::contours::Mask;
use crate::descriptors::GarmentLabel;
use crate::geometry::{DepthImage, Pixel};
use crate::io::annotations::AnnotationRecord;

/// Garment height above the table, meters.
const THICKNESS: f64 = 0.010;

/// Height of the back panel seen through the opening, meters.
const BACK_PANEL: f64 = 0.004;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum GarmentClass {
    Pant,
    Shirt,
    TShirt,
}

impl GarmentClass {
    pub const ALL: [GarmentClass; 3] = [GarmentClass::Pant, GarmentClass::Shirt, GarmentClass::TShirt];

    pub fn label(self) -> GarmentLabel {
        match self {
            GarmentClass::Pant => GarmentLabel::WaistPant,
            GarmentClass::Shirt => GarmentLabel::NeckShirt,
            GarmentClass::TShirt => GarmentLabel::NeckTShirt,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            GarmentClass::Pant => "pant",
            GarmentClass::Shirt => "shirt",
            GarmentClass::TShirt => "tshirt",
        }
    }
}

impl fmt::Display for GarmentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for GarmentClass {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown garment class `{s}` (expected pant, shirt or tshirt)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSceneSpec {
    pub class: GarmentClass,
    pub width: usize,
    pub height: usize,
    /// Table distance from the camera, meters.
    pub table_depth: f64,
    pub wrinkle_count: usize,
    /// Fold height, meters.
    pub amplitude: f64,
    /// Fold spacing, pixels.
    pub wavelength: f64,
    pub seed: u64,
}

impl SyntheticSceneSpec {
    pub fn new(class: GarmentClass, seed: u64) -> Self {
        Self {
            class,
            width: 640,
            height: 480,
            table_depth: 1.0,
            wrinkle_count: 6,
            amplitude: 0.004,
            wavelength: 40.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.amplitude > 0.0) {
            return Err(format!("amplitude must be positive, got {}", self.amplitude));
        }
        if !(self.wavelength > 2.0) {
            return Err(format!("wavelength must exceed 2 px, got {}", self.wavelength));
        }
        if !(self.table_depth > THICKNESS + 3.0 * self.amplitude) {
            return Err("table too close for the garment relief".into());
        }
        if self.width < 400 || self.height < 400 {
            return Err("scenes need at least 400x400 pixels".into());
        }
        Ok(())
    }

    pub fn scene_id(&self) -> String {
        format!("{}-{:05}", self.class, self.seed)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticScene {
    pub depth: DepthImage,
    pub annotation: AnnotationRecord,
    /// Garment silhouette.
    pub mask: Mask,
}

/// Notch opening and surrounding band, in the garment frame: origin at the
/// middle of the notch on the top edge, `u` to the right, `v` down.
#[derive(Debug, Clone, Copy)]
enum KeyPart {
    /// Half-ellipse notch with semi-axes `(a, b)` and band width `band`.
    Arc { a: f64, b: f64, band: f64, raise: f64 },
    /// V-shaped notch of half-width `a` and depth `b`.
    Vee { a: f64, b: f64, band: f64, raise: f64 },
}

impl KeyPart {
    fn for_class(class: GarmentClass, rng: &mut impl Rng) -> Self {
        match class {
            GarmentClass::Pant => {
                let r = rng.gen_range(24.0..28.0);
                KeyPart::Arc { a: r, b: r, band: 14.0, raise: 0.018 }
            }
            GarmentClass::TShirt => {
                KeyPart::Arc { a: rng.gen_range(30.0..34.0), b: rng.gen_range(24.0..28.0), band: 9.0, raise: 0.008 }
            }
            GarmentClass::Shirt => {
                KeyPart::Vee { a: rng.gen_range(26.0..30.0), b: rng.gen_range(38.0..44.0), band: 7.0, raise: 0.004 }
            }
        }
    }

    fn in_notch(&self, u: f64, v: f64) -> bool {
        if v < 0.0 {
            return false;
        }
        match *self {
            KeyPart::Arc { a, b, .. } => (u / a).powi(2) + (v / b).powi(2) < 1.0,
            KeyPart::Vee { a, b, .. } => v < b && u.abs() < a * (1.0 - v / b),
        }
    }

    fn in_outline(&self, u: f64, v: f64) -> bool {
        if v < 0.0 {
            return false;
        }
        match *self {
            KeyPart::Arc { a, b, band, .. } => (u / (a + band)).powi(2) + (v / (b + band)).powi(2) <= 1.0,
            KeyPart::Vee { a, b, band, .. } => {
                let (a, b) = (a + band, b + band * b / a);
                v <= b && u.abs() <= a * (1.0 - v / b)
            }
        }
    }

    fn raise(&self) -> f64 {
        match *self {
            KeyPart::Arc { raise, .. } | KeyPart::Vee { raise, .. } => raise,
        }
    }

    /// Half-width of the outline on the top edge.
    fn half_span(&self) -> f64 {
        match *self {
            KeyPart::Arc { a, band, .. } | KeyPart::Vee { a, band, .. } => a + band,
        }
    }

    fn radius(&self) -> f64 {
        match *self {
            KeyPart::Arc { a, b, band, .. } => a.max(b) + band,
            KeyPart::Vee { a, b, band, .. } => (a + band).max(b + band * b / a),
        }
    }

    /// Outline vertices in the garment frame, counter-clockwise on screen.
    fn outline(&self) -> Vec<(f64, f64)> {
        match *self {
            KeyPart::Arc { a, b, band, .. } => (0..=16)
                .map(|i| {
                    let t = PI * i as f64 / 16.0;
                    ((a + band) * t.cos(), (b + band) * t.sin())
                })
                .collect(),
            KeyPart::Vee { a, b, band, .. } => {
                let (a, b) = (a + band, b + band * b / a);
                vec![(a, 0.0), (0.0, b), (-a, 0.0)]
            }
        }
    }
}

fn in_silhouette(class: GarmentClass, u: f64, v: f64) -> bool {
    if v < 0.0 {
        return false;
    }
    match class {
        GarmentClass::Pant => {
            if v <= 130.0 {
                u.abs() <= 90.0 + 15.0 * v / 130.0
            } else if v <= 330.0 {
                let t = v - 130.0;
                u.abs() <= 105.0 - 0.1 * t && u.abs() >= 6.0 + 0.05 * t
            } else {
                false
            }
        }
        GarmentClass::TShirt => {
            let body = u.abs() <= 95.0 && v <= 300.0;
            let s = u.abs() - 95.0;
            let sleeve = (0.0..=70.0).contains(&s) && v >= 0.4 * s && v <= 0.4 * s + 60.0;
            body || sleeve
        }
        GarmentClass::Shirt => {
            let body = u.abs() <= 100.0 && v <= 320.0;
            // Long sleeve hanging down-outward from the shoulder.
            let s = u.abs() - 100.0;
            let sleeve = (0.0..=60.0).contains(&s) && v >= 3.0 * s && v <= 3.0 * s + 55.0 && v <= 240.0;
            body || sleeve
        }
    }
}

struct Fold {
    cx: f64,
    cy: f64,
    dir: (f64, f64),
    half_len: f64,
    half_width: f64,
    amp: f64,
}

impl Fold {
    fn height(&self, u: f64, v: f64) -> f64 {
        let (du, dv) = (u - self.cx, v - self.cy);
        let along = du * self.dir.0 + dv * self.dir.1;
        let across = -du * self.dir.1 + dv * self.dir.0;
        if along.abs() >= self.half_len || across.abs() >= self.half_width {
            return 0.0;
        }
        let c = (0.5 * PI * across / self.half_width).cos();
        let t = (0.5 * PI * along / self.half_len).cos();
        self.amp * c * c * t.sqrt()
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Renders one scene. Identical specs give bit-identical scenes.
pub fn generate_scene(spec: &SyntheticSceneSpec) -> Result<SyntheticScene, String> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ (spec.class as u64) << 56);
    let key = KeyPart::for_class(spec.class, &mut rng);
    let rot = rng.gen_range(-8.0f64..8.0).to_radians();
    let origin = (spec.width as f64 / 2.0 + rng.gen_range(-25.0..25.0), 100.0 + rng.gen_range(-10.0..15.0));
    let (sin, cos) = rot.sin_cos();
    let to_local = |x: f64, y: f64| {
        let (dx, dy) = (x - origin.0, y - origin.1);
        (cos * dx + sin * dy, -sin * dx + cos * dy)
    };
    let to_image = |u: f64, v: f64| (origin.0 + cos * u - sin * v, origin.1 + sin * u + cos * v);

    let body_top = 30.0 + key.radius();
    let wave_dir = rng.gen_range(0.0..PI);
    let wave_phase = rng.gen_range(0.0..2.0 * PI);
    let folds: Vec<Fold> = (0..spec.wrinkle_count)
        .map(|_| {
            let ang = rng.gen_range(0.0..PI);
            Fold {
                cx: rng.gen_range(-90.0..90.0),
                cy: rng.gen_range(body_top..290.0),
                dir: (ang.cos(), ang.sin()),
                half_len: rng.gen_range(30.0..80.0),
                half_width: spec.wavelength / 4.0,
                amp: spec.amplitude * rng.gen_range(0.6..1.0),
            }
        })
        .collect();
    let k = 2.0 * PI / (2.0 * spec.wavelength);
    let fade_start = key.radius() + 10.0;
    // Three short-period crease trains texture the back panel seen through the opening.
    let crease = match spec.class {
        GarmentClass::Pant => 0.0015,
        GarmentClass::TShirt => 0.003,
        GarmentClass::Shirt => 0.0015,
    };
    let creases: Vec<(f64, f64, f64)> =
        (0..3).map(|_| (rng.gen_range(0.0..PI), rng.gen_range(7.0..11.0), rng.gen_range(0.0..2.0 * PI))).collect();

    let (w, h) = (spec.width, spec.height);
    let mut depth = vec![spec.table_depth; w * h];
    let mut mask = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = to_local(x as f64, y as f64);
            if !in_silhouette(spec.class, u, v) {
                continue;
            }
            let i = y * w + x;
            mask.bits[i] = true;
            let mut lift = THICKNESS;
            if key.in_notch(u, v) {
                lift = BACK_PANEL
                    + creases
                        .iter()
                        .map(|&(dir, period, phase)| {
                            let s = u * dir.cos() + v * dir.sin();
                            crease / 3.0 * (2.0 * PI * s / period + phase).sin()
                        })
                        .sum::<f64>();
            } else if key.in_outline(u, v) {
                lift += key.raise();
            } else {
                let fade = smoothstep((u.hypot(v) - fade_start) / 30.0);
                let s = u * wave_dir.cos() + v * wave_dir.sin();
                let mut relief = spec.amplitude / 3.0 * 0.5 * (1.0 + (k * s + wave_phase).sin());
                relief += folds.iter().map(|f| f.height(u, v)).sum::<f64>();
                lift += fade * relief;
            }
            depth[i] = spec.table_depth - lift;
        }
    }

    let round = |(x, y): (f64, f64)| Pixel::new(x.round() as i32, y.round() as i32);
    let polygon: Vec<Pixel> = key.outline().into_iter().map(|(u, v)| round(to_image(u, v))).collect();
    let half = key.half_span();
    // Nudged half a pixel inward so rounding keeps them on the garment.
    let grasp_points = vec![round(to_image(-half + 0.5, 0.5)), round(to_image(half - 0.5, 0.5))];
    let id = spec.scene_id();
    let annotation =
        AnnotationRecord { mask_path: format!("{id}-mask.pgm"), id, label: spec.class.label(), polygon, grasp_points };
    let depth = DepthImage::new(w, h, depth).map_err(|e| e.to_string())?;
    Ok(SyntheticScene { depth, annotation, mask })
}
