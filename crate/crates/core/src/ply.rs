//! Binary little-endian 3DGS PLY reading and writing.
//!
//! Required vertex properties: `x y z f_dc_0..2 opacity scale_0..2 rot_0..3`.
//! Anything else (normals, `f_rest_*`) is skipped. Colors are DC-only: the
//! stored SH coefficient maps to linear RGB as `0.5 + C0 · f_dc`.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use nalgebra::{Quaternion, Vector3};

use crate::error::{Error, Result};
use crate::gaussian::{Gaussian3D, GaussianCloud};

/// Zeroth-order spherical harmonic normalization.
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2", "rot_0",
    "rot_1", "rot_2", "rot_3",
];

#[derive(Debug, Clone, Copy)]
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Element {
    name: String,
    count: usize,
    props: Vec<(String, Scalar)>,
}

impl Element {
    fn stride(&self) -> usize {
        self.props.iter().map(|(_, s)| s.size()).sum()
    }
}

fn parse_header(data: &[u8]) -> Result<(Vec<Element>, usize)> {
    let marker = b"end_header";
    let pos = data
        .windows(marker.len())
        .position(|w| w == marker)
        .ok_or_else(|| Error::Ply("missing end_header".into()))?;
    let mut body = pos + marker.len();
    if data.get(body) == Some(&b'\r') {
        body += 1;
    }
    if data.get(body) != Some(&b'\n') {
        return Err(Error::Ply("end_header not followed by newline".into()));
    }
    body += 1;
    let header = std::str::from_utf8(&data[..pos]).map_err(|_| Error::Ply("header is not UTF-8".into()))?;

    let mut lines = header.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(Error::Ply("missing 'ply' magic".into()));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut format_ok = false;
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, ..] => {
                return Err(Error::Ply(format!("unsupported format '{other}', need binary_little_endian")))
            }
            ["comment", ..] | ["obj_info", ..] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::Ply(format!("bad element count '{count}'")))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => return Err(Error::Ply("list properties are not supported".into())),
            ["property", ty, name] => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| Error::Ply("property before any element".into()))?;
                let scalar = Scalar::parse(ty).ok_or_else(|| Error::Ply(format!("unknown type '{ty}'")))?;
                el.props.push((name.to_string(), scalar));
            }
            _ => return Err(Error::Ply(format!("unrecognized header line '{line}'"))),
        }
    }
    if !format_ok {
        return Err(Error::Ply("missing format line".into()));
    }
    Ok((elements, body))
}

/// Parses a 3DGS PLY from memory.
pub fn parse_ply(data: &[u8], label: &str) -> Result<GaussianCloud> {
    let (elements, mut offset) = parse_header(data)?;
    let mut vertex = None;
    for el in &elements {
        if el.name == "vertex" {
            vertex = Some(el);
            break;
        }
        offset += el.count * el.stride();
    }
    let vertex = vertex.ok_or_else(|| Error::Ply("no vertex element".into()))?;

    let mut layout: HashMap<&str, (usize, Scalar)> = HashMap::new();
    let mut at = 0;
    for (name, ty) in &vertex.props {
        layout.insert(name.as_str(), (at, *ty));
        at += ty.size();
    }
    let stride = at;
    let fields: Vec<(usize, Scalar)> = REQUIRED
        .iter()
        .map(|name| {
            layout
                .get(name)
                .copied()
                .ok_or_else(|| Error::Ply(format!("missing vertex property '{name}'")))
        })
        .collect::<Result<_>>()?;

    let needed = vertex.count * stride;
    if data.len() < offset + needed {
        return Err(Error::Ply(format!(
            "truncated body: need {needed} bytes for {} vertices, have {}",
            vertex.count,
            data.len().saturating_sub(offset)
        )));
    }

    let mut gaussians = Vec::with_capacity(vertex.count);
    let mut v = [0.0f64; 14];
    for i in 0..vertex.count {
        let rec = &data[offset + i * stride..offset + (i + 1) * stride];
        for (slot, (off, ty)) in v.iter_mut().zip(&fields) {
            *slot = ty.read(&rec[*off..]);
        }
        let color = Vector3::new(v[3], v[4], v[5]).map(|dc| (0.5 + SH_C0 * dc).clamp(0.0, 1.0));
        let g = Gaussian3D::new(
            Vector3::new(v[0], v[1], v[2]),
            Vector3::new(v[7], v[8], v[9]),
            // rot_0 is the scalar part
            Quaternion::new(v[10], v[11], v[12], v[13]),
            v[6],
            color,
        )
        .map_err(|e| Error::Ply(format!("vertex {i}: {e}")))?;
        gaussians.push(g);
    }
    Ok(GaussianCloud::new(label, gaussians))
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|e| Error::io(path, e))?;
    let label = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_ply(&data, &label)
}

/// Serializes with float32 properties in the standard order.
pub fn encode_ply(cloud: &GaussianCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(256 + cloud.len() * REQUIRED.len() * 4);
    out.extend_from_slice(b"ply\nformat binary_little_endian 1.0\n");
    out.extend_from_slice(format!("element vertex {}\n", cloud.len()).as_bytes());
    for name in REQUIRED {
        out.extend_from_slice(format!("property float {name}\n").as_bytes());
    }
    out.extend_from_slice(b"end_header\n");
    for g in &cloud.gaussians {
        let q = g.rotation.quaternion();
        let dc = g.color.map(|c| (c - 0.5) / SH_C0);
        let vals = [
            g.position.x,
            g.position.y,
            g.position.z,
            dc.x,
            dc.y,
            dc.z,
            g.opacity_logit,
            g.log_scale.x,
            g.log_scale.y,
            g.log_scale.z,
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        for v in vals {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn write_ply(path: impl AsRef<Path>, cloud: &GaussianCloud) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ply(cloud)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::UnitQuaternion;

    fn sample() -> GaussianCloud {
        let gs = (0..5)
            .map(|i| {
                let f = i as f64;
                Gaussian3D {
                    position: Vector3::new(f, -f * 0.5, 2.0 + f),
                    log_scale: Vector3::new(-2.0, -1.5 + 0.1 * f, -1.0),
                    rotation: UnitQuaternion::from_euler_angles(0.1 * f, 0.2, -0.3),
                    opacity_logit: -1.0 + f,
                    color: Vector3::new(0.1 * f, 0.5, 1.0 - 0.1 * f),
                }
            })
            .collect();
        GaussianCloud::new("sample", gs)
    }

    #[test]
    fn roundtrip_preserves_fields_to_f32_precision() {
        let c = sample();
        let back = parse_ply(&encode_ply(&c), "sample").unwrap();
        assert_eq!(back.len(), c.len());
        for (a, b) in c.gaussians.iter().zip(&back.gaussians) {
            assert!((a.position - b.position).norm() < 1e-5);
            assert!((a.log_scale - b.log_scale).norm() < 1e-5);
            assert!((a.color - b.color).norm() < 1e-5);
            assert!((a.opacity_logit - b.opacity_logit).abs() < 1e-5);
            assert!(a.rotation.angle_to(&b.rotation) < 1e-5);
        }
    }

    fn handmade(props: &[&str], rows: &[Vec<f32>]) -> Vec<u8> {
        let mut out = format!("ply\nformat binary_little_endian 1.0\ncomment test\nelement vertex {}\n", rows.len());
        for p in props {
            out.push_str(&format!("property float {p}\n"));
        }
        out.push_str("end_header\n");
        let mut bytes = out.into_bytes();
        for r in rows {
            for v in r {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        bytes
    }

    #[test]
    fn extra_properties_are_ignored_and_order_is_free() {
        let mut props = vec!["nx", "ny", "nz"];
        props.extend(["rot_0", "rot_1", "rot_2", "rot_3"]);
        props.extend(["x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2"]);
        props.extend(["f_rest_0", "f_rest_1"]);
        props.extend(["opacity", "scale_0", "scale_1", "scale_2"]);
        let row = vec![
            9.0, 9.0, 9.0, // normals
            2.0, 0.0, 0.0, 0.0, // unnormalized identity rotation
            1.0, 2.0, 3.0, // position
            0.0, 0.0, 0.0, // dc -> 0.5 grey
            7.0, 7.0, // rest
            0.0, -1.0, -2.0, -3.0,
        ];
        let cloud = parse_ply(&handmade(&props, &[row]), "t").unwrap();
        let g = &cloud.gaussians[0];
        assert_eq!(g.position, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(g.color, Vector3::repeat(0.5));
        assert!((g.rotation.norm() - 1.0).abs() < 1e-6);
        assert_eq!(g.log_scale, Vector3::new(-1.0, -2.0, -3.0));
    }

    #[test]
    fn missing_property_and_ascii_are_rejected() {
        let bytes = handmade(&["x", "y", "z"], &[vec![0.0, 0.0, 0.0]]);
        assert!(matches!(parse_ply(&bytes, "t"), Err(Error::Ply(m)) if m.contains("f_dc_0")));
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 0\nend_header\n";
        assert!(parse_ply(ascii, "t").is_err());
    }

    #[test]
    fn truncated_body_is_rejected() {
        let mut bytes = encode_ply(&sample());
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(parse_ply(&bytes, "t"), Err(Error::Ply(m)) if m.contains("truncated")));
    }
}
