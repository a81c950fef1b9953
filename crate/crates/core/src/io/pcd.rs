//! PCD 0.7 reader and writer (`DATA ascii` and `DATA binary`).

use std::fmt::Write as _;

use nalgebra::Point3;
use thiserror::Error;

use crate::geometry::PointCloud;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PcdErrorKind {
    MalformedHeader(String),
    UnsupportedVersion(String),
    UnsupportedData(String),
    FieldMismatch(String),
    /// Fewer points than declared; `row` is the first missing point.
    Truncated {
        row: usize,
        declared: usize,
    },
    BadValue(String),
}

/// Parse failure with the byte offset where it was detected.
#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("PCD error at byte {offset}: {kind:?}")]
pub struct PcdError {
    pub kind: PcdErrorKind,
    pub offset: usize,
}

impl PcdError {
    fn new(kind: PcdErrorKind, offset: usize) -> Self {
        Self { kind, offset }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcdData {
    Ascii,
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Scalar {
    F32,
    F64,
    I8,
    I16,
    I32,
    I64,
    U8,
    U16,
    U32,
    U64,
}

impl Scalar {
    fn new(ty: &str, size: usize) -> Option<Self> {
        Some(match (ty, size) {
            ("F", 4) => Scalar::F32,
            ("F", 8) => Scalar::F64,
            ("I", 1) => Scalar::I8,
            ("I", 2) => Scalar::I16,
            ("I", 4) => Scalar::I32,
            ("I", 8) => Scalar::I64,
            ("U", 1) => Scalar::U8,
            ("U", 2) => Scalar::U16,
            ("U", 4) => Scalar::U32,
            ("U", 8) => Scalar::U64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::F32 | Scalar::I32 | Scalar::U32 => 4,
            Scalar::F64 | Scalar::I64 | Scalar::U64 => 8,
        }
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            Scalar::F32 => f64::from(f32::from_le_bytes(b.try_into().unwrap())),
            Scalar::F64 => f64::from_le_bytes(b.try_into().unwrap()),
            Scalar::I8 => f64::from(b[0] as i8),
            Scalar::I16 => f64::from(i16::from_le_bytes(b.try_into().unwrap())),
            Scalar::I32 => f64::from(i32::from_le_bytes(b.try_into().unwrap())),
            Scalar::I64 => i64::from_le_bytes(b.try_into().unwrap()) as f64,
            Scalar::U8 => f64::from(b[0]),
            Scalar::U16 => f64::from(u16::from_le_bytes(b.try_into().unwrap())),
            Scalar::U32 => f64::from(u32::from_le_bytes(b.try_into().unwrap())),
            Scalar::U64 => u64::from_le_bytes(b.try_into().unwrap()) as f64,
        }
    }

    fn parse_ascii(self, s: &str) -> Option<f64> {
        match self {
            Scalar::F32 => s.parse::<f32>().ok().map(f64::from),
            Scalar::F64 => s.parse::<f64>().ok(),
            _ => s.parse::<i64>().ok().map(|v| v as f64).or_else(|| s.parse::<u64>().ok().map(|v| v as f64)),
        }
    }
}

#[derive(Debug)]
struct Header {
    fields: Vec<String>,
    types: Vec<Scalar>,
    counts: Vec<usize>,
    width: usize,
    height: usize,
    viewpoint: [f64; 3],
    points: usize,
    data: PcdData,
    /// Byte offset of the first payload byte.
    data_start: usize,
}

impl Header {
    /// Index of the first value of `name` within a point's value list.
    fn value_index(&self, name: &str) -> Option<usize> {
        let pos = self.fields.iter().position(|f| f == name)?;
        Some(self.counts[..pos].iter().sum())
    }

    fn byte_offset(&self, name: &str) -> Option<(usize, Scalar)> {
        let pos = self.fields.iter().position(|f| f == name)?;
        let off = (0..pos).map(|i| self.types[i].size() * self.counts[i]).sum();
        Some((off, self.types[pos]))
    }

    fn values_per_point(&self) -> usize {
        self.counts.iter().sum()
    }

    fn point_stride(&self) -> usize {
        self.types.iter().zip(&self.counts).map(|(t, c)| t.size() * c).sum()
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header, PcdError> {
    let malformed = |msg: String, off: usize| PcdError::new(PcdErrorKind::MalformedHeader(msg), off);
    let mismatch = |msg: String, off: usize| PcdError::new(PcdErrorKind::FieldMismatch(msg), off);

    let mut pos = 0usize;
    let mut fields: Option<Vec<String>> = None;
    let mut sizes: Option<(Vec<usize>, usize)> = None;
    let mut types: Option<(Vec<String>, usize)> = None;
    let mut counts: Option<(Vec<usize>, usize)> = None;
    let mut width = None;
    let mut height = None;
    let mut viewpoint = [0.0; 3];
    let mut points = None;

    loop {
        if pos >= bytes.len() {
            return Err(malformed("missing DATA line".into(), pos));
        }
        let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| pos + i);
        let line_start = pos;
        let line = std::str::from_utf8(&bytes[pos..end])
            .map_err(|_| malformed("header is not UTF-8".into(), line_start))?
            .trim();
        pos = (end + 1).min(bytes.len());
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut parts = line.split_ascii_whitespace();
        let key = parts.next().unwrap().to_ascii_uppercase();
        let rest: Vec<&str> = parts.collect();
        let parse_usize =
            |s: &str| s.parse::<usize>().map_err(|_| malformed(format!("bad number `{s}` in {key}"), line_start));
        match key.as_str() {
            "VERSION" => {
                let v = rest.first().copied().unwrap_or("");
                if !matches!(v, "0.7" | ".7" | "0.7.0") {
                    return Err(PcdError::new(PcdErrorKind::UnsupportedVersion(v.to_string()), line_start));
                }
            }
            "FIELDS" => fields = Some(rest.iter().map(|s| s.to_string()).collect()),
            "SIZE" => sizes = Some((rest.iter().map(|s| parse_usize(s)).collect::<Result<_, _>>()?, line_start)),
            "TYPE" => types = Some((rest.iter().map(|s| s.to_ascii_uppercase()).collect(), line_start)),
            "COUNT" => counts = Some((rest.iter().map(|s| parse_usize(s)).collect::<Result<_, _>>()?, line_start)),
            "WIDTH" => width = Some(parse_usize(rest.first().copied().unwrap_or(""))?),
            "HEIGHT" => height = Some(parse_usize(rest.first().copied().unwrap_or(""))?),
            "POINTS" => points = Some(parse_usize(rest.first().copied().unwrap_or(""))?),
            "VIEWPOINT" => {
                if rest.len() != 7 {
                    return Err(malformed(format!("VIEWPOINT needs 7 values, got {}", rest.len()), line_start));
                }
                for (i, v) in rest[..3].iter().enumerate() {
                    viewpoint[i] =
                        v.parse().map_err(|_| malformed(format!("bad VIEWPOINT value `{v}`"), line_start))?;
                }
            }
            "DATA" => {
                let mode = match rest.first().copied() {
                    Some("ascii") => PcdData::Ascii,
                    Some("binary") => PcdData::Binary,
                    other => {
                        return Err(PcdError::new(
                            PcdErrorKind::UnsupportedData(other.unwrap_or("").to_string()),
                            line_start,
                        ))
                    }
                };
                let fields = fields.ok_or_else(|| malformed("missing FIELDS".into(), line_start))?;
                let (sizes, size_off) = sizes.ok_or_else(|| malformed("missing SIZE".into(), line_start))?;
                let (type_names, type_off) = types.ok_or_else(|| malformed("missing TYPE".into(), line_start))?;
                let (counts, count_off) = counts.unwrap_or((vec![1; fields.len()], line_start));
                if sizes.len() != fields.len() {
                    return Err(mismatch(
                        format!("{} FIELDS but {} SIZE entries", fields.len(), sizes.len()),
                        size_off,
                    ));
                }
                if type_names.len() != fields.len() {
                    return Err(mismatch(
                        format!("{} FIELDS but {} TYPE entries", fields.len(), type_names.len()),
                        type_off,
                    ));
                }
                if counts.len() != fields.len() {
                    return Err(mismatch(
                        format!("{} FIELDS but {} COUNT entries", fields.len(), counts.len()),
                        count_off,
                    ));
                }
                let mut scalar = Vec::with_capacity(fields.len());
                for i in 0..fields.len() {
                    scalar.push(Scalar::new(&type_names[i], sizes[i]).ok_or_else(|| {
                        mismatch(
                            format!("field {} has TYPE {} with SIZE {}", fields[i], type_names[i], sizes[i]),
                            type_off,
                        )
                    })?);
                }
                for axis in ["x", "y", "z"] {
                    match fields.iter().position(|f| f == axis) {
                        Some(i) if counts[i] == 1 => {}
                        Some(_) => return Err(mismatch(format!("field {axis} must have COUNT 1"), count_off)),
                        None => return Err(mismatch(format!("missing field {axis}"), line_start)),
                    }
                }
                let width = width.ok_or_else(|| malformed("missing WIDTH".into(), line_start))?;
                let height = height.ok_or_else(|| malformed("missing HEIGHT".into(), line_start))?;
                let points = points.unwrap_or(width * height);
                if points != width * height {
                    return Err(malformed(format!("POINTS {points} != WIDTH*HEIGHT {}", width * height), line_start));
                }
                return Ok(Header {
                    fields,
                    types: scalar,
                    counts,
                    width,
                    height,
                    viewpoint,
                    points,
                    data: mode,
                    data_start: pos,
                });
            }
            _ => return Err(malformed(format!("unknown header key `{key}`"), line_start)),
        }
    }
}

/// Parses a PCD file. Clouds with `HEIGHT > 1` keep their pixel layout;
/// points with a non-finite coordinate are flagged invalid.
pub fn parse_pcd(bytes: &[u8]) -> Result<PointCloud, PcdError> {
    let h = parse_header(bytes)?;
    let mut points = Vec::with_capacity(h.points);
    let mut valid = Vec::with_capacity(h.points);
    let mut push = |x: f64, y: f64, z: f64| {
        let ok = x.is_finite() && y.is_finite() && z.is_finite();
        points.push(if ok { Point3::new(x, y, z) } else { Point3::origin() });
        valid.push(ok);
    };
    match h.data {
        PcdData::Ascii => {
            let idx = [h.value_index("x").unwrap(), h.value_index("y").unwrap(), h.value_index("z").unwrap()];
            let xyz_types = ["x", "y", "z"].map(|f| h.types[h.fields.iter().position(|n| n == f).unwrap()]);
            let per_point = h.values_per_point();
            let mut pos = h.data_start;
            let mut row = 0;
            while row < h.points {
                if pos >= bytes.len() {
                    return Err(PcdError::new(PcdErrorKind::Truncated { row, declared: h.points }, pos));
                }
                let end = bytes[pos..].iter().position(|&b| b == b'\n').map_or(bytes.len(), |i| pos + i);
                let line_start = pos;
                pos = (end + 1).min(bytes.len());
                let line = std::str::from_utf8(&bytes[line_start..end])
                    .map_err(|_| PcdError::new(PcdErrorKind::BadValue("row is not UTF-8".into()), line_start))?
                    .trim();
                if line.is_empty() {
                    continue;
                }
                let vals: Vec<&str> = line.split_ascii_whitespace().collect();
                if vals.len() != per_point {
                    return Err(PcdError::new(
                        PcdErrorKind::FieldMismatch(format!(
                            "row {row} has {} values, expected {per_point}",
                            vals.len()
                        )),
                        line_start,
                    ));
                }
                let mut xyz = [0.0; 3];
                for k in 0..3 {
                    let s = vals[idx[k]];
                    xyz[k] = if s.eq_ignore_ascii_case("nan") {
                        f64::NAN
                    } else {
                        xyz_types[k].parse_ascii(s).ok_or_else(|| {
                            PcdError::new(PcdErrorKind::BadValue(format!("row {row}: `{s}`")), line_start)
                        })?
                    };
                }
                push(xyz[0], xyz[1], xyz[2]);
                row += 1;
            }
        }
        PcdData::Binary => {
            let stride = h.point_stride();
            let offs = ["x", "y", "z"].map(|f| h.byte_offset(f).unwrap());
            for row in 0..h.points {
                let start = h.data_start + row * stride;
                if start + stride > bytes.len() {
                    return Err(PcdError::new(
                        PcdErrorKind::Truncated { row, declared: h.points },
                        start.min(bytes.len()),
                    ));
                }
                let rec = &bytes[start..start + stride];
                let [x, y, z] = offs.map(|(off, ty)| ty.read_le(&rec[off..off + ty.size()]));
                push(x, y, z);
            }
        }
    }
    let organized = if h.height > 1 { Some((h.width, h.height)) } else { None };
    Ok(PointCloud { points, valid, organized, viewpoint: Point3::from(h.viewpoint) })
}

/// Writes `x y z` as 32-bit floats; invalid points are written as NaN.
pub fn write_pcd(cloud: &PointCloud, data: PcdData) -> Vec<u8> {
    let (w, h) = cloud.organized.unwrap_or((cloud.len(), 1));
    let vp = cloud.viewpoint;
    let mut header = String::new();
    header.push_str(
        "# .PCD v0.7 - Point Cloud Data file format\nVERSION 0.7\nFIELDS x y z\nSIZE 4 4 4\nTYPE F F F\nCOUNT 1 1 1\n",
    );
    let _ = writeln!(header, "WIDTH {w}\nHEIGHT {h}");
    let _ = writeln!(header, "VIEWPOINT {} {} {} 1 0 0 0", vp.x as f32, vp.y as f32, vp.z as f32);
    let _ = writeln!(header, "POINTS {}", cloud.len());
    let coords = |i: usize| -> [f32; 3] {
        if cloud.valid[i] {
            let p = cloud.points[i];
            [p.x as f32, p.y as f32, p.z as f32]
        } else {
            [f32::NAN; 3]
        }
    };
    match data {
        PcdData::Ascii => {
            header.push_str("DATA ascii\n");
            for i in 0..cloud.len() {
                let [x, y, z] = coords(i);
                let _ = writeln!(header, "{x} {y} {z}");
            }
            header.into_bytes()
        }
        PcdData::Binary => {
            header.push_str("DATA binary\n");
            let mut out = header.into_bytes();
            out.reserve(cloud.len() * 12);
            for i in 0..cloud.len() {
                for v in coords(i) {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            out
        }
    }
}
