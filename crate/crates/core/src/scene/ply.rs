//! Minimal binary little-endian PLY codec for the fixed vertex layouts used
//! by splat inputs and checkpoints.

use std::io::{BufRead, Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::error::Error;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ScalarType {
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
    pub(crate) fn parse(s: &str) -> Option<ScalarType> {
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

}

#[derive(Debug, Clone)]
pub(crate) struct PlyProperty {
    pub name: String,
    pub ty: ScalarType,
}

#[derive(Debug, Clone)]
pub(crate) struct PlyHeader {
    pub vertex_count: usize,
    pub properties: Vec<PlyProperty>,
    pub comments: Vec<String>,
}

impl PlyHeader {
    pub(crate) fn property_index(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| p.name == name)
    }

    pub(crate) fn require(&self, name: &str) -> Result<usize> {
        self.property_index(name)
            .ok_or_else(|| Error::Ply(format!("missing required property {name:?}")))
    }
}

fn read_header_line(reader: &mut impl BufRead) -> Result<String> {
    let mut line = String::new();
    let n = reader.read_line(&mut line)?;
    if n == 0 {
        return Err(Error::Ply("unexpected end of file in header".into()));
    }
    Ok(line.trim_end_matches(['\r', '\n']).to_string())
}

/// Parses a binary little-endian PLY header with a single vertex element.
pub(crate) fn parse_header(reader: &mut impl BufRead) -> Result<PlyHeader> {
    let magic = read_header_line(reader)?;
    if magic.trim() != "ply" {
        return Err(Error::Ply("not a PLY file (missing 'ply' magic)".into()));
    }
    let format = read_header_line(reader)?;
    if format.trim() != "format binary_little_endian 1.0" {
        return Err(Error::Ply(format!(
            "unsupported format line {format:?} (need binary_little_endian 1.0)"
        )));
    }

    let mut vertex_count: Option<usize> = None;
    let mut properties = Vec::new();
    let mut comments = Vec::new();
    let mut in_vertex_element = false;

    loop {
        let line = read_header_line(reader)?;
        let mut words = line.split_whitespace();
        match words.next() {
            Some("end_header") => break,
            Some("comment") => {
                comments.push(line.trim_start_matches("comment").trim().to_string());
            }
            Some("element") => {
                let kind = words
                    .next()
                    .ok_or_else(|| Error::Ply("malformed element line".into()))?;
                let count: usize = words
                    .next()
                    .and_then(|w| w.parse().ok())
                    .ok_or_else(|| Error::Ply("malformed element count".into()))?;
                if kind == "vertex" {
                    if vertex_count.is_some() {
                        return Err(Error::Ply("duplicate vertex element".into()));
                    }
                    vertex_count = Some(count);
                    in_vertex_element = true;
                } else {
                    if vertex_count.is_none() {
                        return Err(Error::Ply(format!(
                            "element {kind:?} precedes the vertex element"
                        )));
                    }
                    if count != 0 {
                        return Err(Error::Ply(format!(
                            "unsupported non-empty element {kind:?}"
                        )));
                    }
                    in_vertex_element = false;
                }
            }
            Some("property") => {
                if !in_vertex_element {
                    return Err(Error::Ply("property outside the vertex element".into()));
                }
                let ty_word = words
                    .next()
                    .ok_or_else(|| Error::Ply("malformed property line".into()))?;
                if ty_word == "list" {
                    return Err(Error::Ply("list properties are not supported".into()));
                }
                let ty = ScalarType::parse(ty_word)
                    .ok_or_else(|| Error::Ply(format!("unknown property type {ty_word:?}")))?;
                let name = words
                    .next()
                    .ok_or_else(|| Error::Ply("property without a name".into()))?;
                properties.push(PlyProperty {
                    name: name.to_string(),
                    ty,
                });
            }
            Some("obj_info") => {}
            Some(other) => {
                return Err(Error::Ply(format!("unexpected header token {other:?}")));
            }
            None => {}
        }
    }

    let vertex_count =
        vertex_count.ok_or_else(|| Error::Ply("header has no vertex element".into()))?;
    if properties.is_empty() && vertex_count > 0 {
        return Err(Error::Ply("vertex element has no properties".into()));
    }
    Ok(PlyHeader {
        vertex_count,
        properties,
        comments,
    })
}

/// Reads all vertex payload values as f64, vertex-major.
pub(crate) fn read_vertices(reader: &mut impl Read, header: &PlyHeader) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(header.vertex_count * header.properties.len());
    for _ in 0..header.vertex_count {
        for prop in &header.properties {
            let v = match prop.ty {
                ScalarType::I8 => reader.read_i8()? as f64,
                ScalarType::U8 => reader.read_u8()? as f64,
                ScalarType::I16 => reader.read_i16::<LittleEndian>()? as f64,
                ScalarType::U16 => reader.read_u16::<LittleEndian>()? as f64,
                ScalarType::I32 => reader.read_i32::<LittleEndian>()? as f64,
                ScalarType::U32 => reader.read_u32::<LittleEndian>()? as f64,
                ScalarType::F32 => reader.read_f32::<LittleEndian>()? as f64,
                ScalarType::F64 => reader.read_f64::<LittleEndian>()?,
            };
            values.push(v);
        }
    }
    Ok(values)
}

pub(crate) fn write_header(
    w: &mut impl Write,
    comments: &[String],
    vertex_count: usize,
    properties: &[(String, ScalarType)],
) -> Result<()> {
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    for c in comments {
        writeln!(w, "comment {c}")?;
    }
    writeln!(w, "element vertex {vertex_count}")?;
    for (name, ty) in properties {
        let ty_name = match ty {
            ScalarType::F32 => "float",
            ScalarType::F64 => "double",
            _ => unreachable!("only float properties are written"),
        };
        writeln!(w, "property {ty_name} {name}")?;
    }
    writeln!(w, "end_header")?;
    Ok(())
}

pub(crate) fn write_f32(w: &mut impl Write, v: f32) -> Result<()> {
    w.write_f32::<LittleEndian>(v)?;
    Ok(())
}

pub(crate) fn write_f64(w: &mut impl Write, v: f64) -> Result<()> {
    w.write_f64::<LittleEndian>(v)?;
    Ok(())
}
