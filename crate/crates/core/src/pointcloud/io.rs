//! PLY (ascii / binary little-endian) and XYZ text readers and writers.
//!
//! Only vertex positions are read; every other property and element is
//! skipped. Writers always emit `x`, `y`, `z` as 32-bit floats for PLY and
//! shortest round-trip decimal text for XYZ.

use std::path::Path;

use super::{Point, PointCloud};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    PlyAscii,
    PlyBinary,
    Xyz,
}

impl Format {
    /// Picks a format from the file extension (`.ply` writes binary).
    pub fn from_path(path: &Path) -> Option<Format> {
        let ext = path.extension()?.to_str()?.to_ascii_lowercase();
        match ext.as_str() {
            "ply" => Some(Format::PlyBinary),
            "xyz" | "txt" => Some(Format::Xyz),
            _ => None,
        }
    }
}

pub fn read_points(bytes: &[u8], format: Format) -> Result<PointCloud> {
    match format {
        Format::PlyAscii | Format::PlyBinary => read_ply(bytes),
        Format::Xyz => read_xyz(bytes),
    }
}

pub fn write_points(cloud: &PointCloud, format: Format) -> Vec<u8> {
    match format {
        Format::PlyAscii => write_ply(cloud, false),
        Format::PlyBinary => write_ply(cloud, true),
        Format::Xyz => write_xyz(cloud),
    }
}

pub fn read_points_file(path: &Path) -> Result<PointCloud> {
    let format = Format::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown point cloud extension: {}", path.display()))
    })?;
    let bytes = std::fs::read(path)?;
    read_points(&bytes, format)
}

pub fn write_points_file(path: &Path, cloud: &PointCloud) -> Result<()> {
    let format = Format::from_path(path).ok_or_else(|| {
        Error::InvalidArgument(format!("unknown point cloud extension: {}", path.display()))
    })?;
    std::fs::write(path, write_points(cloud, format))?;
    Ok(())
}

fn read_xyz(bytes: &[u8]) -> Result<PointCloud> {
    let text =
        std::str::from_utf8(bytes).map_err(|e| Error::parse(e.valid_up_to(), "invalid UTF-8"))?;
    let mut points = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let mut p = [0.0; 3];
        let mut fields = body.split_whitespace();
        for v in p.iter_mut() {
            let tok = fields
                .next()
                .ok_or_else(|| Error::parse(start, "expected three coordinates"))?;
            *v = parse_coord(tok, start)?;
        }
        points.push(p);
    }
    Ok(PointCloud::new(points))
}

fn parse_coord(tok: &str, offset: usize) -> Result<f64> {
    let v: f64 = tok
        .parse()
        .map_err(|_| Error::parse(offset, format!("invalid number {tok:?}")))?;
    if !v.is_finite() {
        return Err(Error::parse(offset, "non-finite coordinate"));
    }
    Ok(v)
}

fn write_xyz(cloud: &PointCloud) -> Vec<u8> {
    let mut out = String::with_capacity(cloud.len() * 32);
    for p in &cloud.points {
        out.push_str(&format!("{} {} {}\n", p[0], p[1], p[2]));
    }
    out.into_bytes()
}

fn write_ply(cloud: &PointCloud, binary: bool) -> Vec<u8> {
    let encoding = if binary {
        "binary_little_endian"
    } else {
        "ascii"
    };
    let mut out = format!(
        "ply\nformat {encoding} 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nend_header\n",
        cloud.len()
    )
    .into_bytes();
    for p in &cloud.points {
        if binary {
            for v in p {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        } else {
            let line = format!("{} {} {}\n", p[0] as f32, p[1] as f32, p[2] as f32);
            out.extend_from_slice(line.as_bytes());
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
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
    fn parse(name: &str) -> Option<Scalar> {
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

    fn read_le(self, b: &[u8]) -> f64 {
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

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

struct Header {
    binary: bool,
    elements: Vec<Element>,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0;
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    let mut first = true;
    loop {
        let rest = &bytes[offset..];
        let nl = rest
            .iter()
            .position(|&b| b == b'\n')
            .ok_or_else(|| Error::parse(offset, "header not terminated by end_header"))?;
        let line = std::str::from_utf8(&rest[..nl])
            .map_err(|_| Error::parse(offset, "header is not valid text"))?
            .trim_end_matches('\r');
        let line_start = offset;
        offset += nl + 1;
        let mut words = line.split_whitespace();
        let Some(keyword) = words.next() else {
            continue;
        };
        if first {
            if keyword != "ply" {
                return Err(Error::parse(0, "missing 'ply' magic"));
            }
            first = false;
            continue;
        }
        match keyword {
            "format" => {
                binary = Some(match words.next() {
                    Some("ascii") => false,
                    Some("binary_little_endian") => true,
                    other => {
                        return Err(Error::parse(
                            line_start,
                            format!("unsupported PLY format {other:?}"),
                        ))
                    }
                });
            }
            "comment" | "obj_info" => {}
            "element" => {
                let name = words.next().unwrap_or_default().to_string();
                let count = words
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| Error::parse(line_start, "malformed element line"))?;
                elements.push(Element {
                    name,
                    count,
                    props: Vec::new(),
                });
            }
            "property" => {
                let elem = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(line_start, "property before element"))?;
                let ty = words.next().unwrap_or_default();
                let prop = if ty == "list" {
                    let count = words.next().and_then(Scalar::parse);
                    let item = words.next().and_then(Scalar::parse);
                    match (count, item) {
                        (Some(count), Some(item)) => Property::List { count, item },
                        _ => return Err(Error::parse(line_start, "malformed list property")),
                    }
                } else {
                    let ty = Scalar::parse(ty).ok_or_else(|| {
                        Error::parse(line_start, format!("unknown property type {ty:?}"))
                    })?;
                    let name = words
                        .next()
                        .ok_or_else(|| Error::parse(line_start, "property without a name"))?;
                    Property::Scalar {
                        name: name.to_string(),
                        ty,
                    }
                };
                elem.props.push(prop);
            }
            "end_header" => break,
            other => {
                return Err(Error::parse(
                    line_start,
                    format!("unexpected header keyword {other:?}"),
                ))
            }
        }
    }
    let binary = binary.ok_or_else(|| Error::parse(0, "missing format line"))?;
    Ok(Header {
        binary,
        elements,
        body_offset: offset,
    })
}

fn xyz_slots(elem: &Element, offset: usize) -> Result<[usize; 3]> {
    let mut slots = [usize::MAX; 3];
    for (i, p) in elem.props.iter().enumerate() {
        if let Property::Scalar { name, .. } = p {
            match name.as_str() {
                "x" => slots[0] = i,
                "y" => slots[1] = i,
                "z" => slots[2] = i,
                _ => {}
            }
        }
    }
    if slots.contains(&usize::MAX) {
        return Err(Error::parse(offset, "vertex element lacks x/y/z"));
    }
    Ok(slots)
}

fn read_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vertex_idx = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(0, "no vertex element"))?;
    let slots = xyz_slots(&header.elements[vertex_idx], 0)?;
    if header.binary {
        read_ply_binary(bytes, &header, vertex_idx, slots)
    } else {
        read_ply_ascii(bytes, &header, vertex_idx, slots)
    }
}

fn read_ply_binary(
    bytes: &[u8],
    header: &Header,
    vertex_idx: usize,
    slots: [usize; 3],
) -> Result<PointCloud> {
    let mut pos = header.body_offset;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        let end = *pos + n;
        if end > bytes.len() {
            return Err(Error::parse(*pos, "truncated payload"));
        }
        let s = &bytes[*pos..end];
        *pos = end;
        Ok(s)
    };
    let mut points = Vec::new();
    for (ei, elem) in header.elements.iter().enumerate().take(vertex_idx + 1) {
        let is_vertex = ei == vertex_idx;
        if is_vertex {
            points.reserve(elem.count);
        }
        for _ in 0..elem.count {
            let mut p: Point = [0.0; 3];
            let start = pos;
            for (pi, prop) in elem.props.iter().enumerate() {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let v = ty.read_le(take(&mut pos, ty.size())?);
                        if is_vertex {
                            if let Some(axis) = slots.iter().position(|&s| s == pi) {
                                p[axis] = v;
                            }
                        }
                    }
                    Property::List { count, item } => {
                        let n = count.read_le(take(&mut pos, count.size())?);
                        if n < 0.0 {
                            return Err(Error::parse(pos, "negative list length"));
                        }
                        take(&mut pos, n as usize * item.size())?;
                    }
                }
            }
            if is_vertex {
                if p.iter().any(|v| !v.is_finite()) {
                    return Err(Error::parse(start, "non-finite coordinate"));
                }
                points.push(p);
            }
        }
    }
    Ok(PointCloud::new(points))
}

fn read_ply_ascii(
    bytes: &[u8],
    header: &Header,
    vertex_idx: usize,
    slots: [usize; 3],
) -> Result<PointCloud> {
    let body = &bytes[header.body_offset..];
    let mut tokens = Tokens {
        bytes: body,
        pos: 0,
        base: header.body_offset,
    };
    let mut points = Vec::new();
    for (ei, elem) in header.elements.iter().enumerate().take(vertex_idx + 1) {
        let is_vertex = ei == vertex_idx;
        for _ in 0..elem.count {
            let mut p: Point = [0.0; 3];
            for (pi, prop) in elem.props.iter().enumerate() {
                match prop {
                    Property::Scalar { .. } => {
                        let (tok, at) = tokens.next_token()?;
                        if is_vertex {
                            if let Some(axis) = slots.iter().position(|&s| s == pi) {
                                p[axis] = parse_coord(tok, at)?;
                            }
                        }
                    }
                    Property::List { .. } => {
                        let (tok, at) = tokens.next_token()?;
                        let n: usize = tok
                            .parse()
                            .map_err(|_| Error::parse(at, "invalid list length"))?;
                        for _ in 0..n {
                            tokens.next_token()?;
                        }
                    }
                }
            }
            if is_vertex {
                points.push(p);
            }
        }
    }
    Ok(PointCloud::new(points))
}

struct Tokens<'a> {
    bytes: &'a [u8],
    pos: usize,
    base: usize,
}

impl<'a> Tokens<'a> {
    fn next_token(&mut self) -> Result<(&'a str, usize)> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if self.pos >= self.bytes.len() {
            return Err(Error::parse(self.base + self.pos, "truncated payload"));
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let tok = std::str::from_utf8(&self.bytes[start..self.pos])
            .map_err(|_| Error::parse(self.base + start, "invalid text"))?;
        Ok((tok, self.base + start))
    }
}
