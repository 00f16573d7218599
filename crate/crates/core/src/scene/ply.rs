//! Binary little-endian PLY in the layout written by reference 3DGS trainers:
//! `x y z nx ny nz f_dc_0..2 f_rest_0..44 opacity scale_0..2 rot_0..3`, all
//! `float`. Normals are written as zero and ignored on load.

use std::path::Path;

use super::{ColorSource, GaussianSet, SH_BASIS, SH_COEFFS};
use crate::error::{Error, Result};

const REST_PER_CHANNEL: usize = SH_BASIS - 1;

fn property_names() -> Vec<String> {
    let mut names: Vec<String> = ["x", "y", "z", "nx", "ny", "nz"].iter().map(|s| s.to_string()).collect();
    names.extend((0..3).map(|i| format!("f_dc_{i}")));
    names.extend((0..3 * REST_PER_CHANNEL).map(|i| format!("f_rest_{i}")));
    names.push("opacity".into());
    names.extend((0..3).map(|i| format!("scale_{i}")));
    names.extend((0..4).map(|i| format!("rot_{i}")));
    names
}

#[derive(Clone, Copy, Debug)]
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
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }
}

struct Header {
    vertex_count: usize,
    /// (name, type, byte offset within a vertex record)
    properties: Vec<(String, ScalarType, usize)>,
    stride: usize,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    const END: &[u8] = b"end_header\n";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::Format("missing `end_header`".into()))?;
    let text = std::str::from_utf8(&bytes[..end]).map_err(|_| Error::Format("header is not ASCII".into()))?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(Error::Format("missing `ply` magic".into()));
    }
    let mut format_ok = false;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut seen_vertex = false;
    let mut properties = Vec::new();
    let mut stride = 0;
    for line in lines {
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "binary_little_endian", _] => format_ok = true,
            ["format", other, ..] => {
                return Err(Error::Format(format!("unsupported PLY format `{other}`")));
            }
            ["element", name, count] => {
                if seen_vertex && in_vertex {
                    in_vertex = false;
                }
                if *name == "vertex" {
                    if seen_vertex {
                        return Err(Error::Format("duplicate vertex element".into()));
                    }
                    if !properties.is_empty() {
                        return Err(Error::Format("vertex must be the first element".into()));
                    }
                    seen_vertex = true;
                    in_vertex = true;
                    vertex_count = Some(
                        count
                            .parse::<usize>()
                            .map_err(|_| Error::Format(format!("bad vertex count `{count}`")))?,
                    );
                } else if !seen_vertex {
                    return Err(Error::Format("vertex must be the first element".into()));
                }
            }
            ["property", "list", ..] if in_vertex => {
                return Err(Error::Format("list properties are not supported".into()));
            }
            ["property", ty, name] if in_vertex => {
                let ty = ScalarType::parse(ty).ok_or_else(|| Error::Format(format!("unknown property type `{ty}`")))?;
                properties.push((name.to_string(), ty, stride));
                stride += ty.size();
            }
            ["property", ..] => {}
            _ => return Err(Error::Format(format!("unrecognized header line `{line}`"))),
        }
    }
    if !format_ok {
        return Err(Error::Format("missing `format binary_little_endian 1.0`".into()));
    }
    let vertex_count = vertex_count.ok_or_else(|| Error::Format("missing vertex element".into()))?;
    Ok(Header {
        vertex_count,
        properties,
        stride,
        body_offset: end + END.len(),
    })
}

/// Parses a PLY byte buffer. Pre-activation values are kept unchanged.
pub fn read_ply(bytes: &[u8]) -> Result<GaussianSet> {
    let header = parse_header(bytes)?;
    let names = property_names();
    let mut columns = Vec::with_capacity(names.len());
    for name in &names {
        if name.starts_with('n') && name.len() == 2 {
            continue;
        }
        let prop = header
            .properties
            .iter()
            .find(|(n, _, _)| n == name)
            .ok_or_else(|| Error::Format(format!("missing property `{name}`")))?;
        columns.push((prop.1, prop.2));
    }
    let body = &bytes[header.body_offset..];
    let expected = header.vertex_count * header.stride;
    if body.len() < expected {
        return Err(Error::Truncated {
            expected,
            found: body.len(),
        });
    }

    let n = header.vertex_count;
    let mut g = GaussianSet {
        positions: Vec::with_capacity(n),
        opacity_logits: Vec::with_capacity(n),
        log_scales: Vec::with_capacity(n),
        rotations: Vec::with_capacity(n),
        color: ColorSource::Sh(Vec::with_capacity(n)),
    };
    let ColorSource::Sh(sh) = &mut g.color else { unreachable!() };
    let mut values = vec![0.0; columns.len()];
    for record in body[..expected].chunks_exact(header.stride) {
        for (v, (ty, off)) in values.iter_mut().zip(&columns) {
            *v = ty.read(&record[*off..]);
        }
        g.positions.push([values[0], values[1], values[2]]);
        let mut h = [0.0; SH_COEFFS];
        for c in 0..3 {
            h[c] = values[3 + c];
            for k in 0..REST_PER_CHANNEL {
                h[(k + 1) * 3 + c] = values[6 + c * REST_PER_CHANNEL + k];
            }
        }
        sh.push(h);
        let base = 6 + 3 * REST_PER_CHANNEL;
        g.opacity_logits.push(values[base]);
        g.log_scales.push([values[base + 1], values[base + 2], values[base + 3]]);
        g.rotations
            .push([values[base + 4], values[base + 5], values[base + 6], values[base + 7]]);
    }
    Ok(g)
}

/// Serializes an SH-colored set. Values are written as binary32.
pub fn write_ply(g: &GaussianSet) -> Result<Vec<u8>> {
    g.validate()?;
    let sh = g.sh().ok_or(Error::ShSourceRequired)?;
    let names = property_names();
    let mut out = format!("ply\nformat binary_little_endian 1.0\nelement vertex {}\n", g.len());
    for name in &names {
        out.push_str(&format!("property float {name}\n"));
    }
    out.push_str("end_header\n");
    let mut bytes = out.into_bytes();
    bytes.reserve(g.len() * names.len() * 4);
    let mut put = |v: f64| bytes.extend_from_slice(&(v as f32).to_le_bytes());
    for n in 0..g.len() {
        g.positions[n].iter().for_each(|&v| put(v));
        (0..3).for_each(|_| put(0.0));
        (0..3).for_each(|c| put(sh[n][c]));
        for c in 0..3 {
            for k in 0..REST_PER_CHANNEL {
                put(sh[n][(k + 1) * 3 + c]);
            }
        }
        put(g.opacity_logits[n]);
        g.log_scales[n].iter().for_each(|&v| put(v));
        g.rotations[n].iter().for_each(|&v| put(v));
    }
    Ok(bytes)
}

pub fn load_ply(path: &Path) -> Result<GaussianSet> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    read_ply(&bytes)
}

pub fn save_ply(g: &GaussianSet, path: &Path) -> Result<()> {
    let bytes = write_ply(g)?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
