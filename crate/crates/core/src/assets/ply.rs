//! Binary little-endian PLY in the layout used by Gaussian-splat trainers.
//!
//! Canonical vertex property order written by [`save_ply`]:
//! `x y z f_dc_0 f_dc_1 f_dc_2 f_rest_0 .. f_rest_{n-1} opacity scale_0 scale_1 rot_0 .. rot_3`,
//! all `float`. Opacity is stored as a logit; scales as logs; `rot_0` is the
//! quaternion's scalar part. The loader accepts any property order and extra
//! scalar properties (normals, a third scale), which it ignores.

use std::io::Write;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use thiserror::Error;

use super::{sh_coeff_count, AssetError, Primitive2D, SplatAsset, MAX_SH_DEGREE};

/// Opacities that cannot be written as a finite logit are clamped into this range.
pub const OPACITY_CLAMP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum PlyError {
    #[error("header line {line}: {message}")]
    Header { line: usize, message: String },
    #[error("unsupported PLY format {0:?}; only binary_little_endian 1.0 is supported")]
    UnsupportedFormat(String),
    #[error("missing required vertex property {0:?}")]
    MissingProperty(String),
    #[error(
        "element {element:?} truncated: header declares {declared} entries ({needed} bytes) but only {available} bytes follow the header at offset {offset}"
    )]
    ElementCountMismatch { element: String, declared: usize, needed: usize, available: usize, offset: usize },
    #[error("non-finite value in vertex {vertex}, property {property:?}")]
    NonFinite { vertex: usize, property: String },
    #[error("{0} f_rest properties is not of the form 3(L+1)^2 - 3 with L in [0, 3]")]
    BadRestCount(usize),
    #[error("vertex {0} has a zero-length rotation quaternion")]
    DegenerateRotation(usize),
    #[error(transparent)]
    Asset(#[from] AssetError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
            "char" | "int8" => Self::I8,
            "uchar" | "uint8" => Self::U8,
            "short" | "int16" => Self::I16,
            "ushort" | "uint16" => Self::U16,
            "int" | "int32" => Self::I32,
            "uint" | "uint32" => Self::U32,
            "float" | "float32" => Self::F32,
            "double" | "float64" => Self::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            Self::I8 | Self::U8 => 1,
            Self::I16 | Self::U16 => 2,
            Self::I32 | Self::U32 | Self::F32 => 4,
            Self::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            Self::I8 => b[0] as i8 as f64,
            Self::U8 => b[0] as f64,
            Self::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Self::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Self::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Property {
    name: String,
    ty: ScalarType,
    offset: usize,
}

struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
    stride: usize,
}

struct Header {
    elements: Vec<Element>,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let mut pos = 0usize;
    let mut line_no = 0usize;
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    let err = |line: usize, message: String| PlyError::Header { line, message };
    loop {
        let rest = &bytes[pos..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| err(line_no + 1, "unterminated header (no end_header)".into()))?;
        line_no += 1;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| err(line_no, "header is not valid UTF-8".into()))?
            .trim_end_matches('\r');
        pos += nl + 1;
        let mut words = line.split_whitespace();
        let keyword = words.next().unwrap_or("");
        if line_no == 1 {
            if line != "ply" {
                return Err(err(1, "missing \"ply\" magic".into()));
            }
            continue;
        }
        match keyword {
            "format" => {
                let fmt: Vec<&str> = words.collect();
                if fmt != ["binary_little_endian", "1.0"] {
                    return Err(PlyError::UnsupportedFormat(fmt.join(" ")));
                }
                saw_format = true;
            }
            "comment" | "obj_info" | "" => {}
            "element" => {
                let name = words.next().ok_or_else(|| err(line_no, "element without name".into()))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| err(line_no, format!("element {name:?} has no valid count")))?;
                elements.push(Element { name: name.to_string(), count, properties: Vec::new(), stride: 0 });
            }
            "property" => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| err(line_no, "property before any element".into()))?;
                let ty_name = words.next().unwrap_or("");
                if ty_name == "list" {
                    return Err(err(line_no, format!("list property in element {:?} is not supported", element.name)));
                }
                let ty = ScalarType::parse(ty_name)
                    .ok_or_else(|| err(line_no, format!("unknown property type {ty_name:?}")))?;
                let name = words.next().ok_or_else(|| err(line_no, "property without name".into()))?;
                element.properties.push(Property { name: name.to_string(), ty, offset: element.stride });
                element.stride += ty.size();
            }
            "end_header" => break,
            other => return Err(err(line_no, format!("unexpected keyword {other:?}"))),
        }
    }
    if !saw_format {
        return Err(err(line_no, "missing format line".into()));
    }
    Ok(Header { elements, data_offset: pos })
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(a: f64) -> f64 {
    (a / (1.0 - a)).ln()
}

fn rest_count_to_degree(n: usize) -> Option<u8> {
    if n % 3 != 0 {
        return None;
    }
    let per_channel = n / 3 + 1;
    (0..=MAX_SH_DEGREE).find(|&l| sh_coeff_count(l) == per_channel)
}

/// Parses a splat PLY and returns activated values (opacity in `(0, 1)`,
/// normalized rotation). The asset name is left as `"asset"`.
pub fn load_ply(bytes: &[u8]) -> Result<SplatAsset, PlyError> {
    let header = parse_header(bytes)?;
    let mut offset = header.data_offset;
    let mut vertex = None;
    for element in &header.elements {
        let needed = element.count * element.stride;
        let available = bytes.len().saturating_sub(offset);
        if element.name == "vertex" {
            if needed > available {
                return Err(PlyError::ElementCountMismatch {
                    element: element.name.clone(),
                    declared: element.count,
                    needed,
                    available,
                    offset,
                });
            }
            vertex = Some((element, offset));
            break;
        }
        if needed > available {
            return Err(PlyError::ElementCountMismatch {
                element: element.name.clone(),
                declared: element.count,
                needed,
                available,
                offset,
            });
        }
        offset += needed;
    }
    let (element, data_start) = vertex.ok_or_else(|| PlyError::MissingProperty("element vertex".into()))?;

    let find = |name: &str| -> Result<&Property, PlyError> {
        element
            .properties
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| PlyError::MissingProperty(name.to_string()))
    };
    let rest_count = element.properties.iter().filter(|p| p.name.starts_with("f_rest_")).count();
    let degree = rest_count_to_degree(rest_count).ok_or(PlyError::BadRestCount(rest_count))?;
    let coeffs = sh_coeff_count(degree);

    let mut columns: Vec<&Property> = Vec::new();
    for name in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "rot_0", "rot_1", "rot_2", "rot_3"] {
        columns.push(find(name)?);
    }
    let rest: Vec<&Property> = (0..rest_count)
        .map(|i| find(&format!("f_rest_{i}")))
        .collect::<Result<_, _>>()?;
    let per_channel_rest = coeffs - 1;

    let mut primitives = Vec::with_capacity(element.count);
    let mut values = [0.0f64; 13];
    for v in 0..element.count {
        let row = &bytes[data_start + v * element.stride..data_start + (v + 1) * element.stride];
        for (slot, prop) in values.iter_mut().zip(&columns) {
            *slot = prop.ty.read(&row[prop.offset..]);
            if !slot.is_finite() {
                return Err(PlyError::NonFinite { vertex: v, property: prop.name.clone() });
            }
        }
        let mut sh = vec![[0.0; 3]; coeffs];
        sh[0] = [values[3], values[4], values[5]];
        for (i, prop) in rest.iter().enumerate() {
            let x = prop.ty.read(&row[prop.offset..]);
            if !x.is_finite() {
                return Err(PlyError::NonFinite { vertex: v, property: prop.name.clone() });
            }
            // f_rest is channel-major: all red coefficients, then green, then blue.
            sh[1 + i % per_channel_rest][i / per_channel_rest] = x;
        }
        let q = Quaternion::new(values[9], values[10], values[11], values[12]);
        let norm = q.norm();
        if norm < 1e-12 {
            return Err(PlyError::DegenerateRotation(v));
        }
        // Already-unit quaternions are kept verbatim so load/save is byte-stable.
        let rotation = if (norm - 1.0).abs() <= 1e-6 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::new_normalize(q)
        };
        let mut opacity = sigmoid(values[6]);
        if opacity <= 0.0 || opacity >= 1.0 {
            log::warn!("vertex {v}: opacity logit {} saturates; clamping", values[6]);
            opacity = opacity.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
        }
        primitives.push(Primitive2D {
            center: Vector3::new(values[0], values[1], values[2]),
            rotation,
            log_scales: [values[7], values[8]],
            opacity,
            sh,
        });
    }
    Ok(SplatAsset::new("asset", degree, primitives)?)
}

/// Reads a PLY file, naming the asset after the file stem.
pub fn read_ply_file(path: impl AsRef<Path>) -> Result<SplatAsset, PlyError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path)?;
    let mut asset = load_ply(&bytes)?;
    if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
        asset.name = stem.to_string();
    }
    Ok(asset)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct PlyWriteReport {
    pub vertices: usize,
    /// Number of opacities clamped because their logit was undefined.
    pub clamped_opacities: usize,
}

/// Writes the canonical layout to `out`.
pub fn write_ply(asset: &SplatAsset, mut out: impl Write) -> std::io::Result<PlyWriteReport> {
    let coeffs = sh_coeff_count(asset.sh_degree());
    let rest = 3 * (coeffs - 1);
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", asset.len()));
    for name in ["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"] {
        header.push_str(&format!("property float {name}\n"));
    }
    for i in 0..rest {
        header.push_str(&format!("property float f_rest_{i}\n"));
    }
    for name in ["opacity", "scale_0", "scale_1", "rot_0", "rot_1", "rot_2", "rot_3"] {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    let mut report = PlyWriteReport { vertices: asset.len(), clamped_opacities: 0 };
    let mut row: Vec<u8> = Vec::with_capacity(4 * (13 + rest));
    for p in asset.primitives() {
        row.clear();
        let mut put = |x: f64| row.extend_from_slice(&(x as f32).to_le_bytes());
        put(p.center.x);
        put(p.center.y);
        put(p.center.z);
        for c in 0..3 {
            put(p.sh[0][c]);
        }
        for c in 0..3 {
            for k in 1..coeffs {
                put(p.sh[k][c]);
            }
        }
        let mut alpha = p.opacity;
        if alpha <= 0.0 || alpha >= 1.0 {
            alpha = alpha.clamp(OPACITY_CLAMP, 1.0 - OPACITY_CLAMP);
            report.clamped_opacities += 1;
        }
        put(logit(alpha));
        put(p.log_scales[0]);
        put(p.log_scales[1]);
        let q = p.rotation.quaternion();
        put(q.w);
        put(q.i);
        put(q.j);
        put(q.k);
        out.write_all(&row)?;
    }
    if report.clamped_opacities > 0 {
        log::warn!(
            "asset {:?}: clamped {} opacities to [{OPACITY_CLAMP}, 1 - {OPACITY_CLAMP}] before writing logits",
            asset.name,
            report.clamped_opacities
        );
    }
    Ok(report)
}

/// Serializes an asset to PLY bytes.
pub fn save_ply(asset: &SplatAsset) -> Vec<u8> {
    let mut bytes = Vec::new();
    write_ply(asset, &mut bytes).expect("writing to a Vec cannot fail");
    bytes
}

pub fn write_ply_file(asset: &SplatAsset, path: impl AsRef<Path>) -> Result<PlyWriteReport, PlyError> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    let report = write_ply(asset, &mut writer)?;
    writer.flush()?;
    Ok(report)
}
