//! Cloud, keypoint, descriptor, transform and debug-image files.
//!
//! Clouds: PLY (ascii or binary little-endian; `x y z`, optional
//! `nx ny nz` and `intensity`) and whitespace-separated XYZ text
//! (`x y z [intensity]`, `#` comments). Unknown PLY vertex properties are
//! skipped with a warning.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::cloud::{Point3, PointCloud, Vector3};
use crate::descriptors::{DescriptorKind, FeatureVector};
use crate::detectors::{DetectorKind, Keypoint};
use crate::error::{Error, Result};
use crate::range_image::RangeImage;
use crate::transform::RigidTransform;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    Xyz,
}

impl CloudFormat {
    /// `.ply` → binary PLY, anything else → XYZ text.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase) {
            Some(e) if e == "ply" => CloudFormat::PlyBinaryLe,
            _ => CloudFormat::Xyz,
        }
    }
}

impl FromStr for CloudFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ply_ascii" | "ascii" => Ok(CloudFormat::PlyAscii),
            "ply_binary_le" | "ply" | "binary" => Ok(CloudFormat::PlyBinaryLe),
            "xyz_text" | "xyz" | "txt" => Ok(CloudFormat::Xyz),
            other => Err(Error::InvalidParameter(format!("unknown cloud format `{other}`"))),
        }
    }
}

fn parse_err(location: String, message: impl Into<String>) -> Error {
    Error::Parse {
        location,
        message: message.into(),
    }
}

/// Reads a cloud; PLY files are recognized by their magic line, whatever the
/// extension.
pub fn read_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path)?;
    parse_cloud(&bytes)
}

pub fn parse_cloud(bytes: &[u8]) -> Result<PointCloud> {
    if bytes.starts_with(b"ply") {
        parse_ply(bytes)
    } else {
        let text = std::str::from_utf8(bytes).map_err(|e| parse_err(format!("byte {}", e.valid_up_to()), "not UTF-8"))?;
        parse_xyz(text)
    }
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    fs::write(path, encode_cloud(cloud, format))?;
    Ok(())
}

pub fn encode_cloud(cloud: &PointCloud, format: CloudFormat) -> Vec<u8> {
    match format {
        CloudFormat::Xyz => encode_xyz(cloud).into_bytes(),
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => encode_ply(cloud, format == CloudFormat::PlyBinaryLe),
    }
}

/// 17 significant digits, enough to round-trip any f64.
fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

// ---- XYZ ----

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut scalar = Vec::new();
    let mut width = None;
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let loc = || format!("line {}", n + 1);
        let v: Vec<f64> = line
            .split(|c: char| c.is_whitespace() || c == ',')
            .filter(|w| !w.is_empty())
            .map(|w| w.parse::<f64>().map_err(|_| parse_err(loc(), format!("bad number `{w}`"))))
            .collect::<Result<_>>()?;
        if v.len() != 3 && v.len() != 4 {
            return Err(parse_err(loc(), format!("expected 3 or 4 values, got {}", v.len())));
        }
        if *width.get_or_insert(v.len()) != v.len() {
            return Err(parse_err(loc(), "inconsistent column count"));
        }
        points.push(Point3::new(v[0], v[1], v[2]));
        if v.len() == 4 {
            scalar.push(v[3]);
        }
    }
    let cloud = PointCloud::new(points)?;
    if width == Some(4) {
        cloud.with_scalar(scalar)
    } else {
        Ok(cloud)
    }
}

fn encode_xyz(cloud: &PointCloud) -> String {
    let mut s = String::with_capacity(cloud.len() * 72);
    for (i, p) in cloud.points().iter().enumerate() {
        let _ = write!(s, "{} {} {}", fmt_f64(p.x), fmt_f64(p.y), fmt_f64(p.z));
        if let Some(sc) = cloud.scalar() {
            let _ = write!(s, " {}", fmt_f64(sc[i]));
        }
        s.push('\n');
    }
    s
}

// ---- PLY ----

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scalar {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl Scalar {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => Scalar::I8,
            "uchar" | "uint8" => Scalar::U8,
            "short" | "int16" => Scalar::I16,
            "ushort" | "uint16" => Scalar::U16,
            "int" | "int32" => Scalar::I32,
            "uint" | "uint32" => Scalar::U32,
            "float" | "float32" => Scalar::F32,
            "double" | "float64" => Scalar::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Scalar::I8 | Scalar::U8 => 1,
            Scalar::I16 | Scalar::U16 => 2,
            Scalar::I32 | Scalar::U32 | Scalar::F32 => 4,
            Scalar::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Field {
    X,
    Y,
    Z,
    Nx,
    Ny,
    Nz,
    Intensity,
    Skip,
}

struct Header {
    binary: bool,
    vertices: usize,
    props: Vec<(Scalar, Field)>,
    /// Byte offset of the body.
    body: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut pos = 0;
    let mut binary = None;
    let mut vertices = None;
    let mut props = Vec::new();
    let mut in_vertex = false;
    let mut line_no = 0;
    loop {
        let end = bytes[pos..]
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| parse_err(format!("byte {pos}"), "unterminated PLY header"))?;
        let line = std::str::from_utf8(&bytes[pos..pos + end])
            .map_err(|_| parse_err(format!("byte {pos}"), "header is not UTF-8"))?
            .trim();
        let loc = format!("header line {}", line_no + 1);
        pos += end + 1;
        line_no += 1;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["ply"] if line_no == 1 => {}
            _ if line_no == 1 => return Err(parse_err(loc, "missing `ply` magic")),
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(parse_err(loc, format!("unsupported format `{other}`"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                let n = n.parse().map_err(|_| parse_err(loc.clone(), "bad vertex count"))?;
                vertices = Some(n);
                in_vertex = true;
            }
            ["element", ..] => {
                if vertices.is_none() {
                    return Err(parse_err(loc, "elements before `vertex` are not supported"));
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(parse_err(loc, "list properties on vertices are not supported"));
            }
            ["property", ty, name] if in_vertex => {
                let ty = Scalar::parse(ty).ok_or_else(|| parse_err(loc.clone(), format!("unknown type `{ty}`")))?;
                let field = match *name {
                    "x" => Field::X,
                    "y" => Field::Y,
                    "z" => Field::Z,
                    "nx" => Field::Nx,
                    "ny" => Field::Ny,
                    "nz" => Field::Nz,
                    "intensity" | "scalar" | "scalar_intensity" => Field::Intensity,
                    other => {
                        log::warn!("skipping unsupported PLY property `{other}`");
                        Field::Skip
                    }
                };
                props.push((ty, field));
            }
            ["property", ..] => {}
            ["end_header"] => break,
            _ => return Err(parse_err(loc, format!("unexpected header line `{line}`"))),
        }
    }
    let binary = binary.ok_or_else(|| parse_err("header".into(), "missing format line"))?;
    let vertices = vertices.ok_or_else(|| parse_err("header".into(), "missing vertex element"))?;
    for f in [Field::X, Field::Y, Field::Z] {
        if !props.iter().any(|p| p.1 == f) {
            return Err(parse_err("header".into(), format!("missing property {f:?}")));
        }
    }
    Ok(Header {
        binary,
        vertices,
        props,
        body: pos,
    })
}

fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let h = parse_header(bytes)?;
    let has = |f: Field| h.props.iter().any(|p| p.1 == f);
    let has_normals = has(Field::Nx) && has(Field::Ny) && has(Field::Nz);
    let has_scalar = has(Field::Intensity);
    let mut points = Vec::with_capacity(h.vertices);
    let mut normals = Vec::new();
    let mut scalar = Vec::new();
    let mut store = |vals: &[f64; 7]| {
        points.push(Point3::new(vals[0], vals[1], vals[2]));
        if has_normals {
            normals.push(Vector3::new(vals[3], vals[4], vals[5]));
        }
        if has_scalar {
            scalar.push(vals[6]);
        }
    };
    let slot = |f: Field| match f {
        Field::X => Some(0),
        Field::Y => Some(1),
        Field::Z => Some(2),
        Field::Nx => Some(3),
        Field::Ny => Some(4),
        Field::Nz => Some(5),
        Field::Intensity => Some(6),
        Field::Skip => None,
    };
    if h.binary {
        let stride: usize = h.props.iter().map(|p| p.0.size()).sum();
        let mut pos = h.body;
        for v in 0..h.vertices {
            if pos + stride > bytes.len() {
                return Err(parse_err(
                    format!("byte {}", bytes.len()),
                    format!("truncated body: vertex {v} of {} needs bytes {pos}..{}", h.vertices, pos + stride),
                ));
            }
            let mut vals = [0.0; 7];
            for &(ty, field) in &h.props {
                if let Some(s) = slot(field) {
                    vals[s] = ty.read(&bytes[pos..]);
                }
                pos += ty.size();
            }
            store(&vals);
        }
    } else {
        let text = std::str::from_utf8(&bytes[h.body..])
            .map_err(|e| parse_err(format!("byte {}", h.body + e.valid_up_to()), "body is not UTF-8"))?;
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        for v in 0..h.vertices {
            let loc = || format!("vertex {v}");
            let line = lines.next().ok_or_else(|| parse_err(loc(), "truncated body"))?;
            let words: Vec<&str> = line.split_whitespace().collect();
            if words.len() < h.props.len() {
                return Err(parse_err(loc(), "too few values"));
            }
            let mut vals = [0.0; 7];
            for (&(_, field), w) in h.props.iter().zip(&words) {
                if let Some(s) = slot(field) {
                    vals[s] = w.parse().map_err(|_| parse_err(loc(), format!("bad number `{w}`")))?;
                }
            }
            store(&vals);
        }
    }
    let mut cloud = PointCloud::new(points)?;
    if has_normals {
        cloud = cloud.with_normals(normals)?;
    }
    if has_scalar {
        cloud = cloud.with_scalar(scalar)?;
    }
    Ok(cloud)
}

fn encode_ply(cloud: &PointCloud, binary: bool) -> Vec<u8> {
    let mut head = String::from("ply\n");
    head += if binary {
        "format binary_little_endian 1.0\n"
    } else {
        "format ascii 1.0\n"
    };
    let _ = writeln!(head, "element vertex {}", cloud.len());
    head += "property double x\nproperty double y\nproperty double z\n";
    if cloud.normals().is_some() {
        head += "property double nx\nproperty double ny\nproperty double nz\n";
    }
    if cloud.scalar().is_some() {
        head += "property double intensity\n";
    }
    head += "end_header\n";
    let mut out = head.into_bytes();
    for (i, p) in cloud.points().iter().enumerate() {
        let mut vals = vec![p.x, p.y, p.z];
        if let Some(n) = cloud.normals() {
            vals.extend([n[i].x, n[i].y, n[i].z]);
        }
        if let Some(s) = cloud.scalar() {
            vals.push(s[i]);
        }
        if binary {
            for v in vals {
                out.extend_from_slice(&v.to_le_bytes());
            }
        } else {
            let line: Vec<String> = vals.into_iter().map(fmt_f64).collect();
            out.extend_from_slice(line.join(" ").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

// ---- keypoints and descriptors ----

const KEYPOINT_HEADER: &str = "id,x,y,z,source_index,saliency,scale,detector";

pub fn keypoints_csv(keypoints: &[Keypoint]) -> String {
    let mut s = format!("{KEYPOINT_HEADER}\n");
    for (i, k) in keypoints.iter().enumerate() {
        let src = k.source_index.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{i},{},{},{},{src},{},{},{}",
            fmt_f64(k.position.x),
            fmt_f64(k.position.y),
            fmt_f64(k.position.z),
            fmt_f64(k.saliency),
            fmt_f64(k.scale),
            k.detector
        );
    }
    s
}

pub fn parse_keypoints_csv(text: &str) -> Result<Vec<Keypoint>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("id")) {
            continue;
        }
        let loc = || format!("line {}", n + 1);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 8 {
            return Err(parse_err(loc(), format!("expected 8 fields, got {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| parse_err(loc(), format!("bad number `{s}`")));
        let source_index = match f[4].trim() {
            "" => None,
            s => Some(s.parse().map_err(|_| parse_err(loc(), format!("bad index `{s}`")))?),
        };
        out.push(Keypoint {
            position: Point3::new(num(f[1])?, num(f[2])?, num(f[3])?),
            source_index,
            saliency: num(f[5])?,
            scale: num(f[6])?,
            detector: f[7].trim().parse::<DetectorKind>().map_err(|e| parse_err(loc(), e.to_string()))?,
        });
    }
    Ok(out)
}

pub fn descriptors_csv(features: &[FeatureVector]) -> String {
    let mut s = String::new();
    let width = features.first().map_or(0, |f| f.len());
    s += "keypoint,method";
    for j in 0..width {
        let _ = write!(s, ",v{j}");
    }
    s.push('\n');
    for f in features {
        let _ = write!(s, "{},{}", f.keypoint, f.method);
        for v in f.values() {
            let _ = write!(s, ",{}", fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

pub fn parse_descriptors_csv(text: &str) -> Result<Vec<FeatureVector>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (n == 0 && line.starts_with("keypoint")) {
            continue;
        }
        let loc = || format!("line {}", n + 1);
        let f: Vec<&str> = line.split(',').collect();
        if f.len() < 2 {
            return Err(parse_err(loc(), "too few fields"));
        }
        let keypoint = f[0].trim().parse().map_err(|_| parse_err(loc(), "bad keypoint id"))?;
        let method: DescriptorKind = f[1].trim().parse().map_err(|e: Error| parse_err(loc(), e.to_string()))?;
        let values: Vec<f64> = f[2..]
            .iter()
            .map(|s| s.trim().parse().map_err(|_| parse_err(loc(), format!("bad number `{s}`"))))
            .collect::<Result<_>>()?;
        let len = values.len();
        out.push(FeatureVector::new(method, keypoint, values, len).map_err(|e| parse_err(loc(), e.to_string()))?);
    }
    Ok(out)
}

// ---- transforms ----

/// Four rows of four numbers.
pub fn transform_text(t: &RigidTransform) -> String {
    let m = t.to_homogeneous();
    let mut s = String::new();
    for row in m {
        let cells: Vec<String> = row.iter().map(|v| fmt_f64(*v)).collect();
        s += &cells.join(" ");
        s.push('\n');
    }
    s
}

pub fn parse_transform(text: &str) -> Result<RigidTransform> {
    let v: Vec<f64> = text
        .split_whitespace()
        .map(|w| w.parse::<f64>().map_err(|_| parse_err("transform".into(), format!("bad number `{w}`"))))
        .collect::<Result<_>>()?;
    if v.len() != 16 {
        return Err(parse_err("transform".into(), format!("expected 16 numbers, got {}", v.len())));
    }
    let mut m = [[0.0; 4]; 4];
    for (i, x) in v.into_iter().enumerate() {
        m[i / 4][i % 4] = x;
    }
    RigidTransform::from_homogeneous(&m)
}

// ---- debug image ----

/// 8-bit binary PGM: empty pixels black, ranges mapped near-bright to
/// far-dark over `1..=255`.
pub fn range_image_pgm(img: &RangeImage) -> Vec<u8> {
    let (lo, hi) = img
        .filled()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| (lo.min(f.range), hi.max(f.range)));
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut out = format!("P5\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    out.extend((0..img.pixel_count()).map(|px| {
        if img.is_filled(px) {
            let t = (img.range(px) - lo) / span;
            (255.0 - 254.0 * t).round() as u8
        } else {
            0
        }
    }));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn format_names() {
        assert_eq!("ply_ascii".parse::<CloudFormat>().unwrap(), CloudFormat::PlyAscii);
        assert_eq!(CloudFormat::from_path(Path::new("a.PLY")), CloudFormat::PlyBinaryLe);
        assert_eq!(CloudFormat::from_path(Path::new("a.txt")), CloudFormat::Xyz);
        assert!("las".parse::<CloudFormat>().is_err());
    }

    #[test]
    fn float_text_round_trips_exactly() {
        for v in [0.1, 1.0 / 3.0, -2.5e-300, 123456.789012345678] {
            assert_eq!(fmt_f64(v).parse::<f64>().unwrap(), v);
        }
    }
}
