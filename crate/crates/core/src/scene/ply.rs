//! Binary little-endian PLY reader/writer for the standard 3D-Gaussian vertex
//! layout (`x y z`, `scale_*` logs, `rot_*` quaternion, `opacity` logit).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::{GaussianRecord, SceneError};

const REQUIRED: [&str; 11] = [
    "x", "y", "z", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3", "opacity",
];

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
            Scalar::F64 => f64::from_le_bytes([b[0], b[1], b[2], b[3], b[4], b[5], b[6], b[7]]),
        }
    }
}

#[derive(Debug)]
struct Property {
    name: String,
    kind: Scalar,
    offset: usize,
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
    stride: usize,
    has_list: bool,
}

impl Element {
    fn find(&self, name: &str) -> Option<&Property> {
        self.props.iter().find(|p| p.name == name)
    }
}

fn parse_err(offset: usize, msg: impl Into<String>) -> SceneError {
    SceneError::Parse {
        offset,
        msg: msg.into(),
    }
}

/// Returns the elements declared in the header and the payload start offset.
fn parse_header(data: &[u8]) -> Result<(Vec<Element>, usize), SceneError> {
    let mut pos = 0usize;
    let next_line = |pos: &mut usize| -> Result<(usize, String), SceneError> {
        let start = *pos;
        let rel = data[start..]
            .iter()
            .position(|&c| c == b'\n')
            .ok_or_else(|| parse_err(start, "unterminated header line"))?;
        let raw = &data[start..start + rel];
        *pos = start + rel + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| parse_err(start, "header is not valid UTF-8"))?
            .trim_end_matches('\r')
            .to_string();
        Ok((start, line))
    };

    let (off, magic) = next_line(&mut pos)?;
    if magic.trim() != "ply" {
        return Err(parse_err(off, "missing 'ply' magic"));
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    loop {
        let (off, line) = next_line(&mut pos)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("format") => {
                let fmt = words.next().unwrap_or("");
                if fmt != "binary_little_endian" {
                    return Err(SceneError::Schema(format!(
                        "unsupported PLY format '{fmt}', binary_little_endian required"
                    )));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") => {}
            Some("element") => {
                let name = words.next().ok_or_else(|| parse_err(off, "element without name"))?;
                let count = words
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(off, "element count is not an integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    props: Vec::new(),
                    stride: 0,
                    has_list: false,
                });
            }
            Some("property") => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(off, "property before any element"))?;
                let ty = words.next().ok_or_else(|| parse_err(off, "property without type"))?;
                if ty == "list" {
                    elem.has_list = true;
                    continue;
                }
                let kind =
                    Scalar::parse(ty).ok_or_else(|| parse_err(off, format!("unknown property type '{ty}'")))?;
                let name = words.next().ok_or_else(|| parse_err(off, "property without name"))?;
                elem.props.push(Property {
                    name: name.to_string(),
                    kind,
                    offset: elem.stride,
                });
                elem.stride += kind.size();
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_err(off, format!("unexpected header keyword '{other}'"))),
            None => return Err(parse_err(off, "empty header line")),
        }
    }
    if !saw_format {
        return Err(parse_err(pos, "header has no format line"));
    }
    Ok((elements, pos))
}

/// Parses a Gaussian-splat PLY image already in memory.
pub fn parse_ply(data: &[u8]) -> Result<Vec<GaussianRecord>, SceneError> {
    let (elements, mut payload) = parse_header(data)?;
    let mut vertex = None;
    for elem in &elements {
        if elem.name == "vertex" {
            vertex = Some(elem);
            break;
        }
        if elem.has_list {
            return Err(SceneError::Schema(format!(
                "list-valued element '{}' precedes the vertex element",
                elem.name
            )));
        }
        payload += elem.count * elem.stride;
    }
    let vertex = vertex.ok_or_else(|| SceneError::Schema("no 'vertex' element".into()))?;
    if vertex.has_list {
        return Err(SceneError::Schema("list properties on 'vertex' are not supported".into()));
    }
    let mut cols = Vec::with_capacity(REQUIRED.len());
    for name in REQUIRED {
        let p = vertex
            .find(name)
            .ok_or_else(|| SceneError::Schema(format!("missing required vertex property '{name}'")))?;
        cols.push((p.offset, p.kind));
    }
    let dc: Option<Vec<(usize, Scalar)>> = ["f_dc_0", "f_dc_1", "f_dc_2"]
        .iter()
        .map(|n| vertex.find(n).map(|p| (p.offset, p.kind)))
        .collect();

    let needed = payload + vertex.count * vertex.stride;
    if data.len() < needed {
        return Err(SceneError::Io(std::io::Error::new(
            std::io::ErrorKind::UnexpectedEof,
            format!("truncated payload: need {needed} bytes, file has {}", data.len()),
        )));
    }

    let mut out = Vec::with_capacity(vertex.count);
    for i in 0..vertex.count {
        let row = &data[payload + i * vertex.stride..payload + (i + 1) * vertex.stride];
        let v: Vec<f64> = cols.iter().map(|&(o, k)| k.read(&row[o..])).collect();
        out.push(GaussianRecord {
            mean: [v[0], v[1], v[2]],
            log_scale: [v[3], v[4], v[5]],
            quaternion: [v[6], v[7], v[8], v[9]],
            opacity_logit: v[10],
            color_dc: dc
                .as_ref()
                .map(|d| [d[0].1.read(&row[d[0].0..]), d[1].1.read(&row[d[1].0..]), d[2].1.read(&row[d[2].0..])]),
        });
    }
    Ok(out)
}

pub fn load_ply(path: impl AsRef<Path>) -> Result<Vec<GaussianRecord>, SceneError> {
    let mut data = Vec::new();
    File::open(path.as_ref())?.read_to_end(&mut data)?;
    parse_ply(&data)
}

/// Serializes records with the standard property order
/// (`x y z nx ny nz f_dc_0..2 opacity scale_0..2 rot_0..3`, all `float`).
pub fn write_ply_to<W: Write>(mut w: W, records: &[GaussianRecord]) -> std::io::Result<()> {
    let mut header = String::from("ply\nformat binary_little_endian 1.0\n");
    header.push_str(&format!("element vertex {}\n", records.len()));
    for name in [
        "x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2", "opacity", "scale_0", "scale_1",
        "scale_2", "rot_0", "rot_1", "rot_2", "rot_3",
    ] {
        header.push_str(&format!("property float {name}\n"));
    }
    header.push_str("end_header\n");
    w.write_all(header.as_bytes())?;
    let mut buf = Vec::with_capacity(17 * 4);
    for r in records {
        buf.clear();
        let dc = r.color_dc.unwrap_or([0.0; 3]);
        let vals = [
            r.mean[0],
            r.mean[1],
            r.mean[2],
            0.0,
            0.0,
            0.0,
            dc[0],
            dc[1],
            dc[2],
            r.opacity_logit,
            r.log_scale[0],
            r.log_scale[1],
            r.log_scale[2],
            r.quaternion[0],
            r.quaternion[1],
            r.quaternion[2],
            r.quaternion[3],
        ];
        for v in vals {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        w.write_all(&buf)?;
    }
    Ok(())
}

pub fn write_ply(path: impl AsRef<Path>, records: &[GaussianRecord]) -> Result<(), SceneError> {
    let f = File::create(path.as_ref())?;
    let mut w = BufWriter::new(f);
    write_ply_to(&mut w, records)?;
    w.flush()?;
    Ok(())
}
