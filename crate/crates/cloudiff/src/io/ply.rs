//! PLY point clouds.
//!
//! Output is always `binary_little_endian` with `double` x/y/z so clouds
//! round-trip exactly. Input accepts ASCII and binary little-endian files
//! whose vertex element has scalar `x`, `y`, `z` properties; other vertex
//! properties are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use cloudiff_core::{Point3, PointCloud};

use super::FormatError;

pub fn write_ply(path: &Path, cloud: &PointCloud) -> Result<(), FormatError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ply_to(&mut w, cloud)?;
    w.flush()?;
    Ok(())
}

pub fn write_ply_to<W: Write>(w: &mut W, cloud: &PointCloud) -> std::io::Result<()> {
    write!(w, "ply\nformat binary_little_endian 1.0\n")?;
    if !cloud.frame_id().is_empty() {
        writeln!(w, "comment frame {}", cloud.frame_id())?;
    }
    write!(
        w,
        "element vertex {}\nproperty double x\nproperty double y\nproperty double z\nend_header\n",
        cloud.len()
    )?;
    for p in cloud.iter() {
        for v in [p.x, p.y, p.z] {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_ply(path: &Path) -> Result<PointCloud, FormatError> {
    read_ply_from(&mut BufReader::new(File::open(path)?))
}

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

    fn decode(self, b: &[u8]) -> f64 {
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

struct Element {
    name: String,
    count: usize,
    /// `None` marks a list property.
    props: Vec<(String, Option<Scalar>)>,
}

pub fn read_ply_from<R: BufRead>(r: &mut R) -> Result<PointCloud, FormatError> {
    let bad = |m: String| FormatError::Invalid(m);
    let mut line = String::new();
    let next_line = |r: &mut R, line: &mut String| -> Result<(), FormatError> {
        line.clear();
        if r.read_line(line)? == 0 {
            return Err(FormatError::Invalid("unexpected end of PLY header".into()));
        }
        Ok(())
    };
    next_line(r, &mut line)?;
    if line.trim_end() != "ply" {
        return Err(bad("missing PLY magic".into()));
    }
    let mut binary = None;
    let mut frame = String::from("world");
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(r, &mut line)?;
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(bad(format!("unsupported PLY format {other}"))),
            ["comment", "frame", id] => frame = id.to_string(),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad(format!("bad element count {count}")))?,
                props: Vec::new(),
            }),
            ["property", "list", ..] => {
                let name = words.last().unwrap().to_string();
                let e = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                e.props.push((name, None));
            }
            ["property", ty, name] => {
                let s = Scalar::parse(ty).ok_or_else(|| bad(format!("unknown property type {ty}")))?;
                let e = elements.last_mut().ok_or_else(|| bad("property before element".into()))?;
                e.props.push((name.to_string(), Some(s)));
            }
            _ => return Err(bad(format!("unrecognized header line: {}", line.trim_end()))),
        }
    }
    let binary = binary.ok_or_else(|| bad("missing format line".into()))?;

    let mut points = Vec::new();
    for e in &elements {
        if e.name != "vertex" {
            skip_element(r, e, binary)?;
            continue;
        }
        if e.props.iter().any(|(_, s)| s.is_none()) {
            return Err(bad("list properties in the vertex element are not supported".into()));
        }
        let find = |axis: &str| {
            e.props.iter().position(|(n, _)| n == axis).ok_or_else(|| bad(format!("vertex has no {axis} property")))
        };
        let idx = [find("x")?, find("y")?, find("z")?];
        let scalars: Vec<Scalar> = e.props.iter().map(|(_, s)| s.unwrap()).collect();
        let row: usize = scalars.iter().map(|s| s.size()).sum();
        let offsets: Vec<usize> =
            scalars.iter().scan(0, |acc, s| { let o = *acc; *acc += s.size(); Some(o) }).collect();
        points.reserve(e.count);
        let mut buf = vec![0u8; row];
        let mut text = String::new();
        for i in 0..e.count {
            let values: [f64; 3] = if binary {
                r.read_exact(&mut buf)?;
                idx.map(|k| scalars[k].decode(&buf[offsets[k]..]))
            } else {
                text.clear();
                r.read_line(&mut text)?;
                let fields: Vec<&str> = text.split_whitespace().collect();
                if fields.len() < scalars.len() {
                    return Err(bad(format!("vertex {i} has {} fields", fields.len())));
                }
                let mut out = [0.0; 3];
                for (o, &k) in out.iter_mut().zip(&idx) {
                    *o = fields[k].parse().map_err(|_| bad(format!("vertex {i}: bad number {}", fields[k])))?;
                }
                out
            };
            points.push(Point3::new(values[0], values[1], values[2]));
        }
        return PointCloud::from_points(points, frame).map_err(|e| bad(e.to_string()));
    }
    Err(bad("no vertex element".into()))
}

fn skip_element<R: BufRead>(r: &mut R, e: &Element, binary: bool) -> Result<(), FormatError> {
    if !binary {
        let mut s = String::new();
        for _ in 0..e.count {
            s.clear();
            r.read_line(&mut s)?;
        }
        return Ok(());
    }
    let mut row = 0;
    for (name, s) in &e.props {
        row += s.ok_or_else(|| FormatError::Invalid(format!("cannot skip list property {name} before vertices")))?.size();
    }
    std::io::copy(&mut r.take((row * e.count) as u64), &mut std::io::sink())?;
    Ok(())
}
