//! PLY point clouds: ASCII and binary little-endian, x/y/z plus an
//! optional `confidence` property. Extra properties and elements are
//! tolerated and skipped.

use std::path::Path;

use scenefit_core::cloud::PointCloud;
use scenefit_core::math::Pt3;

use crate::error::IoError;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
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
    fn parse(token: &str) -> Option<ScalarType> {
        Some(match token {
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

    fn size(&self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn read_le(&self, bytes: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => bytes[0] as i8 as f64,
            ScalarType::U8 => bytes[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([bytes[0], bytes[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::U32 => u32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F32 => f32::from_le_bytes(bytes[..4].try_into().unwrap()) as f64,
            ScalarType::F64 => f64::from_le_bytes(bytes[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

pub fn save_cloud(path: &Path, cloud: &PointCloud, format: PlyFormat) -> Result<()> {
    let has_conf = cloud.confidence().is_some();
    let mut header = String::from("ply\n");
    header.push_str(match format {
        PlyFormat::Ascii => "format ascii 1.0\n",
        PlyFormat::BinaryLittleEndian => "format binary_little_endian 1.0\n",
    });
    header.push_str(&format!("element vertex {}\n", cloud.len()));
    header.push_str("property float x\nproperty float y\nproperty float z\n");
    if has_conf {
        header.push_str("property float confidence\n");
    }
    header.push_str("end_header\n");

    let mut out: Vec<u8> = header.into_bytes();
    match format {
        PlyFormat::Ascii => {
            for (i, p) in cloud.points().iter().enumerate() {
                let mut line = format!("{} {} {}", p.x as f32, p.y as f32, p.z as f32);
                if let Some(conf) = cloud.confidence() {
                    line.push_str(&format!(" {}", conf[i] as f32));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
        }
        PlyFormat::BinaryLittleEndian => {
            for (i, p) in cloud.points().iter().enumerate() {
                out.extend_from_slice(&(p.x as f32).to_le_bytes());
                out.extend_from_slice(&(p.y as f32).to_le_bytes());
                out.extend_from_slice(&(p.z as f32).to_le_bytes());
                if let Some(conf) = cloud.confidence() {
                    out.extend_from_slice(&(conf[i] as f32).to_le_bytes());
                }
            }
        }
    }
    crate::atomic_write(path, &out)
}

pub fn load_cloud(path: &Path) -> Result<PointCloud> {
    let bytes = std::fs::read(path)?;
    // The header is ASCII delimited by "end_header".
    let header_end = find_header_end(&bytes)
        .ok_or_else(|| IoError::parse(path, 0, "missing end_header"))?;
    let header_text = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| IoError::parse(path, 0, "header is not valid ascii"))?;

    let mut lines = header_text.lines().enumerate();
    let (_, magic) = lines
        .next()
        .ok_or_else(|| IoError::parse(path, 1, "empty file"))?;
    if magic.trim() != "ply" {
        return Err(IoError::parse(path, 1, "not a ply file"));
    }

    let mut format: Option<PlyFormat> = None;
    let mut elements: Vec<Element> = Vec::new();
    for (lineno, raw) in lines {
        let line = raw.trim();
        let lineno = lineno + 1;
        if line.is_empty() || line.starts_with("comment") || line.starts_with("obj_info") {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("format") => {
                format = Some(match parts.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some(other) => {
                        return Err(IoError::UnsupportedVariant(format!(
                            "ply format {other}"
                        )))
                    }
                    None => return Err(IoError::parse(path, lineno, "format without kind")),
                });
            }
            Some("element") => {
                let name = parts
                    .next()
                    .ok_or_else(|| IoError::parse(path, lineno, "element without name"))?;
                let count: usize = parts
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| IoError::parse(path, lineno, "element without count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| IoError::parse(path, lineno, "property before element"))?;
                let first = parts
                    .next()
                    .ok_or_else(|| IoError::parse(path, lineno, "property without type"))?;
                if first == "list" {
                    let count_ty = parts.next().and_then(ScalarType::parse).ok_or_else(|| {
                        IoError::parse(path, lineno, "list property without count type")
                    })?;
                    let item_ty = parts.next().and_then(ScalarType::parse).ok_or_else(|| {
                        IoError::parse(path, lineno, "list property without item type")
                    })?;
                    element.properties.push(Property::List {
                        count: count_ty,
                        item: item_ty,
                    });
                } else {
                    let ty = ScalarType::parse(first).ok_or_else(|| {
                        IoError::UnsupportedVariant(format!("ply property type {first}"))
                    })?;
                    let name = parts
                        .next()
                        .ok_or_else(|| IoError::parse(path, lineno, "property without name"))?;
                    element.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(IoError::parse(
                    path,
                    lineno,
                    format!("unknown header directive {other}"),
                ))
            }
            None => {}
        }
    }
    let format = format.ok_or_else(|| IoError::parse(path, 0, "missing format line"))?;
    let body = &bytes[header_end..];

    match format {
        PlyFormat::Ascii => parse_ascii(path, body, &elements),
        PlyFormat::BinaryLittleEndian => parse_binary(path, body, &elements),
    }
}

fn find_header_end(bytes: &[u8]) -> Option<usize> {
    let needle = b"end_header";
    let pos = bytes
        .windows(needle.len())
        .position(|w| w == needle)?;
    // Skip to just past the newline terminating the end_header line.
    let rest = &bytes[pos..];
    let nl = rest.iter().position(|b| *b == b'\n')?;
    Some(pos + nl + 1)
}

struct VertexColumns {
    x: usize,
    y: usize,
    z: usize,
    confidence: Option<usize>,
}

fn vertex_columns(path: &Path, element: &Element) -> Result<VertexColumns> {
    let find = |name: &str| {
        element.properties.iter().position(|p| match p {
            Property::Scalar { name: n, .. } => n == name,
            Property::List { .. } => false,
        })
    };
    Ok(VertexColumns {
        x: find("x").ok_or_else(|| IoError::parse(path, 0, "vertex element missing x"))?,
        y: find("y").ok_or_else(|| IoError::parse(path, 0, "vertex element missing y"))?,
        z: find("z").ok_or_else(|| IoError::parse(path, 0, "vertex element missing z"))?,
        confidence: find("confidence"),
    })
}

fn parse_ascii(path: &Path, body: &[u8], elements: &[Element]) -> Result<PointCloud> {
    let text = std::str::from_utf8(body)
        .map_err(|_| IoError::parse(path, 0, "ascii body is not valid utf-8"))?;
    let mut lines = text.lines();
    let mut points = Vec::new();
    let mut confidence = Vec::new();
    let mut want_conf = false;

    for element in elements {
        if element.name == "vertex" {
            let cols = vertex_columns(path, element)?;
            want_conf = cols.confidence.is_some();
            for row in 0..element.count {
                let line = lines.next().ok_or(IoError::TruncatedPayload {
                    needed: element.count,
                    got: row,
                })?;
                let mut tokens = line.split_whitespace();
                let mut values: Vec<Option<f64>> = Vec::with_capacity(element.properties.len());
                for prop in &element.properties {
                    match prop {
                        Property::Scalar { ty, .. } => {
                            let tok = tokens.next().ok_or_else(|| {
                                IoError::parse(path, row + 1, "vertex row too short")
                            })?;
                            // Parse at the declared width so float32 data
                            // widens exactly as the binary path does.
                            let parsed = if *ty == ScalarType::F32 {
                                tok.parse::<f32>().map(|v| v as f64).ok()
                            } else {
                                tok.parse::<f64>().ok()
                            };
                            values.push(Some(parsed.ok_or_else(|| {
                                IoError::parse(path, row + 1, format!("bad number {tok:?}"))
                            })?));
                        }
                        Property::List { .. } => {
                            let n: usize = tokens
                                .next()
                                .and_then(|t| t.parse().ok())
                                .ok_or_else(|| {
                                    IoError::parse(path, row + 1, "bad list count")
                                })?;
                            for _ in 0..n {
                                tokens.next();
                            }
                            values.push(None);
                        }
                    }
                }
                let get = |i: usize| {
                    values[i].ok_or_else(|| IoError::parse(path, row + 1, "list where scalar expected"))
                };
                points.push(Pt3::new(get(cols.x)?, get(cols.y)?, get(cols.z)?));
                if let Some(ci) = cols.confidence {
                    confidence.push(get(ci)?.clamp(0.0, 1.0));
                }
            }
        } else {
            // One line per row regardless of property layout.
            for row in 0..element.count {
                lines.next().ok_or(IoError::TruncatedPayload {
                    needed: element.count,
                    got: row,
                })?;
            }
        }
    }
    PointCloud::with_confidence(points, want_conf.then_some(confidence)).map_err(IoError::from)
}

fn parse_binary(path: &Path, body: &[u8], elements: &[Element]) -> Result<PointCloud> {
    let mut offset = 0usize;
    let mut points = Vec::new();
    let mut confidence = Vec::new();
    let mut want_conf = false;

    let take = |offset: &mut usize, n: usize| -> Result<usize> {
        if *offset + n > body.len() {
            return Err(IoError::TruncatedPayload {
                needed: *offset + n,
                got: body.len(),
            });
        }
        let at = *offset;
        *offset += n;
        Ok(at)
    };

    for element in elements {
        let cols = if element.name == "vertex" {
            let c = vertex_columns(path, element)?;
            want_conf = c.confidence.is_some();
            Some(c)
        } else {
            None
        };
        for _ in 0..element.count {
            let mut values: Vec<Option<f64>> = Vec::with_capacity(element.properties.len());
            for prop in &element.properties {
                match prop {
                    Property::Scalar { ty, .. } => {
                        let at = take(&mut offset, ty.size())?;
                        values.push(Some(ty.read_le(&body[at..])));
                    }
                    Property::List { count, item } => {
                        let at = take(&mut offset, count.size())?;
                        let n = count.read_le(&body[at..]) as usize;
                        take(&mut offset, n * item.size())?;
                        values.push(None);
                    }
                }
            }
            if let Some(cols) = &cols {
                let get = |i: usize| values[i].expect("scalar column");
                points.push(Pt3::new(get(cols.x), get(cols.y), get(cols.z)));
                if let Some(ci) = cols.confidence {
                    confidence.push(get(ci).clamp(0.0, 1.0));
                }
            }
        }
    }
    PointCloud::with_confidence(points, want_conf.then_some(confidence)).map_err(IoError::from)
}
