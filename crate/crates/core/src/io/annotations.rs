//! Key-part annotation files.
//!
//! ```text
//! grasp-annot v1
//! scene-0001 | W | 120,80 160,80 160,120 | 121,80;159,80 | scene-0001-mask.pgm
//! ```

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::descriptors::GarmentLabel;
use crate::geometry::Pixel;

pub const ANNOTATION_HEADER: &str = "grasp-annot v1";

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("annotation id `{0}` contains `|` or a line break")]
    BadId(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationRecord {
    pub id: String,
    pub label: GarmentLabel,
    /// Closed, boundary-inclusive key-part outline.
    pub polygon: Vec<Pixel>,
    /// Up to two ground-truth grasp points.
    pub grasp_points: Vec<Pixel>,
    pub mask_path: String,
}

fn parse_pixel(s: &str) -> Option<Pixel> {
    let (x, y) = s.split_once(',')?;
    let (x, y) = (x.trim().parse().ok()?, y.trim().parse().ok()?);
    (x >= 0 && y >= 0).then_some(Pixel::new(x, y))
}

pub fn parse_annotations(text: &str) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    let schema = |line: usize, message: String| AnnotationError::Schema { line, message };
    let mut lines = text.lines().enumerate();
    let Some((_, header)) = lines.find(|(_, l)| !l.trim().is_empty()) else {
        return Ok(Vec::new());
    };
    if header.trim() != ANNOTATION_HEADER {
        return Err(schema(1, format!("expected header `{ANNOTATION_HEADER}`")));
    }
    let mut out = Vec::new();
    for (i, raw) in lines {
        let line = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = raw.split('|').map(str::trim).collect();
        if cols.len() != 5 {
            return Err(schema(line, format!("expected 5 `|`-separated fields, got {}", cols.len())));
        }
        if cols[0].is_empty() {
            return Err(schema(line, "empty id".into()));
        }
        let label = cols[1].parse::<GarmentLabel>().map_err(|e| schema(line, e.to_string()))?;
        let polygon = cols[2]
            .split_ascii_whitespace()
            .map(|t| parse_pixel(t).ok_or_else(|| schema(line, format!("bad polygon vertex `{t}`"))))
            .collect::<Result<Vec<_>, _>>()?;
        if polygon.len() < 3 {
            return Err(schema(line, format!("polygon needs at least 3 vertices, got {}", polygon.len())));
        }
        let grasp_points = if cols[3].is_empty() {
            Vec::new()
        } else {
            cols[3]
                .split(';')
                .map(|t| parse_pixel(t).ok_or_else(|| schema(line, format!("bad grasp point `{t}`"))))
                .collect::<Result<Vec<_>, _>>()?
        };
        if grasp_points.len() > 2 {
            return Err(schema(line, format!("at most 2 grasp points, got {}", grasp_points.len())));
        }
        out.push(AnnotationRecord {
            id: cols[0].to_string(),
            label,
            polygon,
            grasp_points,
            mask_path: cols[4].to_string(),
        });
    }
    Ok(out)
}

pub fn format_annotations(records: &[AnnotationRecord]) -> Result<String, AnnotationError> {
    let mut out = format!("{ANNOTATION_HEADER}\n");
    for r in records {
        for field in [&r.id, &r.mask_path] {
            if field.contains(['|', '\n', '\r']) {
                return Err(AnnotationError::BadId(field.clone()));
            }
        }
        let poly: Vec<String> = r.polygon.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
        let grasp: Vec<String> = r.grasp_points.iter().map(|p| format!("{},{}", p.x, p.y)).collect();
        let _ = writeln!(out, "{} | {} | {} | {} | {}", r.id, r.label, poly.join(" "), grasp.join(";"), r.mask_path);
    }
    Ok(out)
}

pub fn load_annotations(path: &Path) -> Result<Vec<AnnotationRecord>, AnnotationError> {
    parse_annotations(&std::fs::read_to_string(path)?)
}

pub fn save_annotations(path: &Path, records: &[AnnotationRecord]) -> Result<(), AnnotationError> {
    std::fs::write(path, format_annotations(records)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn empty_file_is_empty_list() {
        assert!(parse_annotations("").unwrap().is_empty());
    }

    #[test]
    fn short_polygon_names_line() {
        let text = "grasp-annot v1\na | W | 1,1 2,2 3,1 | 1,1 | m.pgm\nb | NS | 1,1 2,2 | | m.pgm\n";
        match parse_annotations(text) {
            Err(AnnotationError::Schema { line, message }) => {
                assert_eq!(line, 3);
                assert!(message.contains("3 vertices"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn random_records_round_trip() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(10);
        let records: Vec<AnnotationRecord> = (0..10)
            .map(|i| AnnotationRecord {
                id: format!("scene-{i:03}"),
                label: GarmentLabel::ALL[rng.gen_range(0..4)],
                polygon: (0..rng.gen_range(3..12))
                    .map(|_| Pixel::new(rng.gen_range(0..640), rng.gen_range(0..480)))
                    .collect(),
                grasp_points: (0..rng.gen_range(0..3))
                    .map(|_| Pixel::new(rng.gen_range(0..640), rng.gen_range(0..480)))
                    .collect(),
                mask_path: format!("masks/{i}.pgm"),
            })
            .collect();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("annot.txt");
        save_annotations(&path, &records).unwrap();
        assert_eq!(load_annotations(&path).unwrap(), records);
    }

    #[test]
    fn rejects_bad_rows() {
        for bad in [
            "grasp-annot v2\n",
            "grasp-annot v1\nx | Q | 1,1 2,2 3,3 | | m\n",
            "grasp-annot v1\nx | W | 1,1 2,2 3,3 | 1,1;2,2;3,3 | m\n",
            "grasp-annot v1\nx | W | 1,1 2,2 -3,3 | | m\n",
            "grasp-annot v1\nx | W | 1,1 2,2 3,3 | m\n",
        ] {
            assert!(parse_annotations(bad).is_err(), "{bad}");
        }
    }
}
