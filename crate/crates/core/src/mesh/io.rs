//! OBJ (ASCII) and PLY (binary little-endian) readers and writers.
//!
//! Normals, texture coordinates, groups and materials in OBJ files are ignored.
//! Writers emit vertices and faces in stored order; output bytes depend only on
//! the mesh.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::{Point3, TriMesh};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MeshFormat {
    Obj,
    Ply,
}

impl MeshFormat {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("obj") => Ok(MeshFormat::Obj),
            Some("ply") => Ok(MeshFormat::Ply),
            _ => Err(Error::InvalidArgument(format!(
                "cannot infer mesh format from {}",
                path.display()
            ))),
        }
    }
}

pub fn load_mesh(path: &Path, format: MeshFormat) -> Result<TriMesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match format {
        MeshFormat::Obj => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|e| Error::parse(format!("byte {}", e.valid_up_to()), "invalid UTF-8"))?;
            parse_obj(text)
        }
        MeshFormat::Ply => parse_ply(&bytes),
    }
}

/// Loads a mesh, picking the format from the file extension.
pub fn read_mesh(path: &Path) -> Result<TriMesh> {
    load_mesh(path, MeshFormat::from_path(path)?)
}

pub fn save_mesh(path: &Path, mesh: &TriMesh, format: MeshFormat) -> Result<()> {
    let bytes = match format {
        MeshFormat::Obj => to_obj(mesh).into_bytes(),
        MeshFormat::Ply => to_ply(mesh),
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn write_mesh(path: &Path, mesh: &TriMesh) -> Result<()> {
    save_mesh(path, mesh, MeshFormat::from_path(path)?)
}

pub fn parse_obj(text: &str) -> Result<TriMesh> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let location = || format!("line {line_no}");
        let line = line.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut xyz = [0.0; 3];
                for slot in &mut xyz {
                    let tok = tokens
                        .next()
                        .ok_or_else(|| Error::parse(location(), "vertex needs 3 coordinates"))?;
                    *slot = tok
                        .parse()
                        .map_err(|_| Error::parse(location(), format!("bad coordinate {tok:?}")))?;
                }
                vertices.push(Point3::from(xyz));
            }
            Some("f") => {
                let corners: Vec<&str> = tokens.collect();
                if corners.len() != 3 {
                    return Err(Error::parse(
                        location(),
                        format!("only triangles are supported, got {} corners", corners.len()),
                    ));
                }
                let mut tri = [0usize; 3];
                for (slot, corner) in tri.iter_mut().zip(&corners) {
                    let index_tok = corner.split('/').next().unwrap_or("");
                    let index: i64 = index_tok.parse().map_err(|_| {
                        Error::parse(location(), format!("bad face index {corner:?}"))
                    })?;
                    // OBJ is 1-based; negative indices count back from the last vertex.
                    let resolved = match index {
                        0 => return Err(Error::parse(location(), "face index 0 is invalid in OBJ")),
                        i if i > 0 => i - 1,
                        i => vertices.len() as i64 + i,
                    };
                    if resolved < 0 {
                        return Err(Error::parse(location(), format!("face index {index} out of range")));
                    }
                    *slot = resolved as usize;
                }
                faces.push(tri);
            }
            _ => {}
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn to_obj(mesh: &TriMesh) -> String {
    let mut out = String::with_capacity(32 * (mesh.vertex_count() + mesh.face_count()));
    for v in mesh.vertices() {
        // `{:?}` on f64 is the shortest representation that round-trips exactly.
        let _ = writeln!(out, "v {:?} {:?} {:?}", v.x, v.y, v.z);
    }
    for [a, b, c] in mesh.faces() {
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    out
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

    fn read(self, bytes: &[u8]) -> f64 {
        let mut buf = [0u8; 8];
        buf[..self.size()].copy_from_slice(&bytes[..self.size()]);
        match self {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        }
    }
}

#[derive(Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Debug)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(Error::parse(
                format!("byte {}", self.pos),
                format!("unexpected end of file reading {what}"),
            ));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn scalar(&mut self, ty: Scalar, what: &str) -> Result<f64> {
        Ok(ty.read(self.take(ty.size(), what)?))
    }
}

fn parse_ply_header(bytes: &[u8]) -> Result<(Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| Error::parse("byte 0", "missing end_header"))?;
    let mut body = end + END.len();
    // end_header is followed by a single line terminator.
    if bytes.get(body) == Some(&b'\r') {
        body += 1;
    }
    if bytes.get(body) != Some(&b'\n') {
        return Err(Error::parse(format!("byte {body}"), "expected newline after end_header"));
    }
    body += 1;

    let header = std::str::from_utf8(&bytes[..end])
        .map_err(|_| Error::parse("byte 0", "header is not valid UTF-8"))?;
    let mut lines = header.lines().enumerate();
    match lines.next() {
        Some((_, l)) if l.trim() == "ply" => {}
        _ => return Err(Error::parse("line 1", "missing 'ply' magic")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    for (i, line) in lines {
        let loc = format!("line {}", i + 1);
        let tokens: Vec<&str> = line.split_whitespace().collect();
        match tokens.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", "binary_little_endian", _] => saw_format = true,
            ["format", other, ..] => {
                return Err(Error::parse(loc, format!("unsupported PLY format {other:?}")))
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count
                    .parse()
                    .map_err(|_| Error::parse(&loc, format!("bad element count {count:?}")))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(&loc, "property before element"))?;
                let count = Scalar::parse(count)
                    .ok_or_else(|| Error::parse(&loc, format!("bad list count type {count:?}")))?;
                let item = Scalar::parse(item)
                    .ok_or_else(|| Error::parse(&loc, format!("bad list item type {item:?}")))?;
                element.properties.push(Property::List {
                    name: name.to_string(),
                    count,
                    item,
                });
            }
            ["property", ty, name] => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse(&loc, "property before element"))?;
                let ty = Scalar::parse(ty)
                    .ok_or_else(|| Error::parse(&loc, format!("bad property type {ty:?}")))?;
                element.properties.push(Property::Scalar {
                    name: name.to_string(),
                    ty,
                });
            }
            _ => return Err(Error::parse(loc, format!("unrecognized header line {line:?}"))),
        }
    }
    if !saw_format {
        return Err(Error::parse("line 2", "missing format line"));
    }
    Ok((elements, body))
}

pub fn parse_ply(bytes: &[u8]) -> Result<TriMesh> {
    let (elements, body) = parse_ply_header(bytes)?;
    let mut cur = Cursor { bytes, pos: body };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for element in &elements {
        match element.name.as_str() {
            "vertex" => {
                let slot = |axis: &str| {
                    element.properties.iter().position(
                        |p| matches!(p, Property::Scalar { name, .. } if name == axis),
                    )
                };
                let (Some(ix), Some(iy), Some(iz)) = (slot("x"), slot("y"), slot("z")) else {
                    return Err(Error::parse("header", "vertex element lacks x/y/z"));
                };
                vertices.reserve(element.count);
                for _ in 0..element.count {
                    let mut values = vec![0.0; element.properties.len()];
                    for (value, prop) in values.iter_mut().zip(&element.properties) {
                        match prop {
                            Property::Scalar { ty, .. } => *value = cur.scalar(*ty, "vertex")?,
                            Property::List { count, item, .. } => {
                                let n = cur.scalar(*count, "vertex list")? as usize;
                                cur.take(n * item.size(), "vertex list")?;
                            }
                        }
                    }
                    vertices.push(Point3::new(values[ix], values[iy], values[iz]));
                }
            }
            "face" => {
                faces.reserve(element.count);
                for _ in 0..element.count {
                    let mut tri = None;
                    for prop in &element.properties {
                        match prop {
                            Property::List { name, count, item }
                                if name == "vertex_indices" || name == "vertex_index" =>
                            {
                                let at = cur.pos;
                                let n = cur.scalar(*count, "face")? as usize;
                                if n != 3 {
                                    return Err(Error::parse(
                                        format!("byte {at}"),
                                        format!("only triangles are supported, got {n} corners"),
                                    ));
                                }
                                let mut t = [0usize; 3];
                                for slot in &mut t {
                                    let at = cur.pos;
                                    let idx = cur.scalar(*item, "face index")?;
                                    if idx < 0.0 {
                                        return Err(Error::parse(
                                            format!("byte {at}"),
                                            format!("negative face index {idx}"),
                                        ));
                                    }
                                    *slot = idx as usize;
                                }
                                tri = Some(t);
                            }
                            Property::List { count, item, .. } => {
                                let n = cur.scalar(*count, "face list")? as usize;
                                cur.take(n * item.size(), "face list")?;
                            }
                            Property::Scalar { ty, .. } => {
                                cur.take(ty.size(), "face property")?;
                            }
                        }
                    }
                    faces.push(tri.ok_or_else(|| {
                        Error::parse("header", "face element lacks vertex_indices")
                    })?);
                }
            }
            _ => {
                for _ in 0..element.count {
                    for prop in &element.properties {
                        match prop {
                            Property::Scalar { ty, .. } => {
                                cur.take(ty.size(), &element.name)?;
                            }
                            Property::List { count, item, .. } => {
                                let n = cur.scalar(*count, &element.name)? as usize;
                                cur.take(n * item.size(), &element.name)?;
                            }
                        }
                    }
                }
            }
        }
    }
    TriMesh::new(vertices, faces)
}

pub fn to_ply(mesh: &TriMesh) -> Vec<u8> {
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty double x\nproperty double y\nproperty double z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.vertex_count(),
        mesh.face_count()
    );
    let mut out = header.into_bytes();
    out.reserve(mesh.vertex_count() * 24 + mesh.face_count() * 13);
    for v in mesh.vertices() {
        for c in [v.x, v.y, v.z] {
            out.extend_from_slice(&c.to_le_bytes());
        }
    }
    for tri in mesh.faces() {
        out.push(3);
        for &i in tri {
            out.extend_from_slice(&(i as i32).to_le_bytes());
        }
    }
    out
}
