//! Binary little-endian 3DGS PLY reader/writer.
//!
//! Only the degree-0 color terms are used; any extra per-vertex properties
//! (normals, higher-order SH coefficients) are skipped.

use std::fs;
use std::io::{BufRead, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{Ellipsoid, GaussianCloud};
use crate::error::{Error, Result};
use crate::Rgb;

/// Zeroth spherical-harmonic basis constant, 1 / (2·√π).
pub const SH_C0: f64 = 0.282_094_791_773_878_14;

const REQUIRED: [&str; 14] = [
    "x", "y", "z", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1", "scale_2",
    "rot_0", "rot_1", "rot_2", "rot_3",
];

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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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
            Self::I32 => i32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::U32 => u32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F32 => f32::from_le_bytes(b[..4].try_into().unwrap()) as f64,
            Self::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

struct Property {
    name: String,
    ty: ScalarType,
    offset: usize,
}

struct Header {
    vertex_count: usize,
    stride: usize,
    properties: Vec<Property>,
    data_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut cursor = std::io::Cursor::new(bytes);
    let mut line = String::new();
    let mut read_line = |line: &mut String| -> Result<()> {
        line.clear();
        let n = cursor
            .read_line(line)
            .map_err(|e| Error::Format(format!("unreadable PLY header: {e}")))?;
        if n == 0 {
            return Err(Error::Format("PLY header is missing end_header".into()));
        }
        Ok(())
    };

    read_line(&mut line)?;
    if line.trim_end() != "ply" {
        return Err(Error::Format("missing 'ply' magic line".into()));
    }

    let mut format_ok = false;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut seen_other_before_vertex = false;
    let mut properties = Vec::new();
    let mut stride = 0;
    loop {
        read_line(&mut line)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "binary_little_endian", "1.0"] => format_ok = true,
            ["format", other, ..] => {
                return Err(Error::Format(format!(
                    "unsupported PLY format '{other}', expected binary_little_endian"
                )))
            }
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", "vertex", n] => {
                let n: usize = n
                    .parse()
                    .map_err(|_| Error::Format(format!("bad vertex count '{n}'")))?;
                if seen_other_before_vertex {
                    return Err(Error::Format(
                        "elements before 'vertex' are not supported".into(),
                    ));
                }
                vertex_count = Some(n);
                in_vertex = true;
            }
            ["element", ..] => {
                if vertex_count.is_none() {
                    seen_other_before_vertex = true;
                }
                in_vertex = false;
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Format("list properties on vertices are not supported".into()))
            }
            ["property", ty, name] if in_vertex => {
                let ty = ScalarType::parse(ty)
                    .ok_or_else(|| Error::Format(format!("unknown property type '{ty}'")))?;
                properties.push(Property {
                    name: name.to_string(),
                    ty,
                    offset: stride,
                });
                stride += ty.size();
            }
            ["property", ..] => {}
            _ => return Err(Error::Format(format!("unexpected header line '{}'", line.trim_end()))),
        }
    }
    if !format_ok {
        return Err(Error::Format("missing 'format binary_little_endian 1.0' line".into()));
    }
    let vertex_count =
        vertex_count.ok_or_else(|| Error::Format("missing 'element vertex' declaration".into()))?;
    Ok(Header {
        vertex_count,
        stride,
        properties,
        data_offset: cursor.position() as usize,
    })
}

/// Parses a 3DGS PLY from memory.
pub fn read_ply(bytes: &[u8]) -> Result<GaussianCloud> {
    let header = parse_header(bytes)?;
    let mut lookup = Vec::with_capacity(REQUIRED.len());
    for name in REQUIRED {
        let prop = header
            .properties
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| Error::Format(format!("missing vertex property '{name}'")))?;
        lookup.push((prop.offset, prop.ty));
    }
    if header.vertex_count == 0 {
        return Err(Error::EmptyModel("PLY declares zero vertices".into()));
    }
    let body = &bytes[header.data_offset..];
    let needed = header.vertex_count * header.stride;
    if body.len() < needed {
        return Err(Error::Format(format!(
            "truncated vertex data: expected {needed} bytes, found {}",
            body.len()
        )));
    }

    let mut ellipsoids = Vec::with_capacity(header.vertex_count);
    let mut vals = [0.0f64; REQUIRED.len()];
    for (i, rec) in body[..needed].chunks_exact(header.stride).enumerate() {
        for (v, (off, ty)) in vals.iter_mut().zip(&lookup) {
            *v = ty.read(&rec[*off..]);
        }
        let [x, y, z, dc0, dc1, dc2, op, s0, s1, s2, qw, qx, qy, qz] = vals;
        let q = Quaternion::new(qw, qx, qy, qz);
        if !(q.norm() > 0.0) {
            return Err(Error::Format(format!("vertex {i}: zero-length rotation quaternion")));
        }
        let color = Rgb::new(dc0, dc1, dc2).map(|c| (0.5 + SH_C0 * c).clamp(0.0, 1.0));
        let e = Ellipsoid {
            center: Vector3::new(x, y, z),
            rotation: if (q.norm() - 1.0).abs() < 1e-6 {
                UnitQuaternion::new_unchecked(q)
            } else {
                UnitQuaternion::from_quaternion(q)
            },
            scale: Vector3::new(s0.exp(), s1.exp(), s2.exp()),
            opacity: sigmoid(op),
            color,
        };
        e.validate()
            .map_err(|err| Error::Format(format!("vertex {i}: {err}")))?;
        ellipsoids.push(e);
    }
    GaussianCloud::new(ellipsoids)
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<GaussianCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    read_ply(&bytes)
}

/// Serializes in the standard 3DGS layout (degree-0 SH only).
pub fn write_ply<W: Write>(cloud: &GaussianCloud, mut out: W) -> std::io::Result<()> {
    let props = [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0",
        "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    ];
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    for p in props {
        header.push_str(&format!("property float {p}\n"));
    }
    header.push_str("end_header\n");
    out.write_all(header.as_bytes())?;

    let mut buf = Vec::with_capacity(cloud.len() * props.len() * 4);
    for e in &cloud.ellipsoids {
        let q = e.rotation.quaternion();
        let dc = e.color.map(|c| (c - 0.5) / SH_C0);
        let rec = [
            e.center.x,
            e.center.y,
            e.center.z,
            0.0,
            0.0,
            0.0,
            dc.x,
            dc.y,
            dc.z,
            logit(e.opacity),
            e.scale.x.ln(),
            e.scale.y.ln(),
            e.scale.z.ln(),
            q.w,
            q.i,
            q.j,
            q.k,
        ];
        for v in rec {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.write_all(&buf)
}

pub fn save_ply(cloud: &GaussianCloud, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = std::io::BufWriter::new(file);
    write_ply(cloud, &mut w).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ply_bytes(props: &[&str], rows: &[Vec<f32>]) -> Vec<u8> {
        let mut s = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", rows.len());
        for p in props {
            s.push_str(&format!("property float {p}\n"));
        }
        s.push_str("end_header\n");
        let mut b = s.into_bytes();
        for r in rows {
            for v in r {
                b.extend_from_slice(&v.to_le_bytes());
            }
        }
        b
    }

    fn row(rot: [f32; 4]) -> Vec<f32> {
        // x y z dc0 dc1 dc2 opacity s0 s1 s2 rot0..3
        let mut r = vec![0.0; 10];
        r.extend_from_slice(&rot);
        r
    }

    #[test]
    fn decodes_activations() {
        let b = ply_bytes(&REQUIRED, &[row([1.0, 0.0, 0.0, 0.0])]);
        let cloud = read_ply(&b).unwrap();
        let e = &cloud.ellipsoids[0];
        assert_eq!(e.scale, Vector3::new(1.0, 1.0, 1.0));
        assert_eq!(e.opacity, 0.5);
        assert_eq!(e.color, Rgb::new(0.5, 0.5, 0.5));
    }

    #[test]
    fn normalizes_quaternion() {
        let b = ply_bytes(&REQUIRED, &[row([2.0, 0.0, 0.0, 0.0])]);
        let q = read_ply(&b).unwrap().ellipsoids[0].rotation;
        assert_eq!(q.quaternion().coords.as_slice(), &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn missing_property_is_named() {
        let props: Vec<&str> = REQUIRED.iter().copied().filter(|p| *p != "scale_1").collect();
        let b = ply_bytes(&props, &[vec![0.0; 13]]);
        let err = read_ply(&b).unwrap_err().to_string();
        assert!(err.contains("scale_1"), "{err}");
    }

    #[test]
    fn zero_vertices_is_empty_model() {
        let b = ply_bytes(&REQUIRED, &[]);
        assert!(matches!(read_ply(&b), Err(Error::EmptyModel(_))));
    }

    #[test]
    fn rejects_ascii_and_garbage() {
        let ascii = b"ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nend_header\n0\n";
        assert!(matches!(read_ply(ascii), Err(Error::Format(_))));
        assert!(matches!(read_ply(b"not a ply"), Err(Error::Format(_))));
        let mut b = ply_bytes(&REQUIRED, &[row([1.0, 0.0, 0.0, 0.0])]);
        b.truncate(b.len() - 3);
        assert!(read_ply(&b).unwrap_err().to_string().contains("truncated"));
    }

    #[test]
    fn skips_extra_properties() {
        let mut props = vec!["nx", "ny", "nz"];
        props.extend(REQUIRED);
        props.push("f_rest_0");
        let mut r = vec![9.0, 9.0, 9.0];
        r.extend(row([1.0, 0.0, 0.0, 0.0]));
        r[3] = 0.25; // x
        r.push(7.0);
        let cloud = read_ply(&ply_bytes(&props, &[r])).unwrap();
        assert_eq!(cloud.ellipsoids[0].center.x, 0.25);
        assert_eq!(cloud.ellipsoids[0].scale.x, 1.0);
    }

    #[test]
    fn color_is_clamped() {
        let mut r = row([1.0, 0.0, 0.0, 0.0]);
        r[3] = 100.0;
        r[4] = -100.0;
        let e = &read_ply(&ply_bytes(&REQUIRED, &[r])).unwrap().ellipsoids[0];
        assert_eq!(e.color.x, 1.0);
        assert_eq!(e.color.y, 0.0);
    }
}
