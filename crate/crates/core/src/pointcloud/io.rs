//! Point-cloud files: whitespace `xyz` text and PLY (ascii or binary
//! little-endian).
//!
//! Text output uses 9 significant digits. Binary PLY output stores `double`
//! coordinates, so binary round trips are bit-exact.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::PointCloud;
use crate::error::Location;
use crate::{Error, Point3, Result, Vec3};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    Xyz,
    PlyAscii,
    PlyBinary,
}

impl CloudFormat {
    /// Guesses from the file extension; `.ply` maps to binary.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "xyz" | "txt" | "pts" => Some(CloudFormat::Xyz),
            "ply" => Some(CloudFormat::PlyBinary),
            _ => None,
        }
    }

    pub fn is_ply(self) -> bool {
        matches!(self, CloudFormat::PlyAscii | CloudFormat::PlyBinary)
    }
}

/// Rounds to 9 significant digits and prints the shortest representation of
/// the rounded value.
pub fn format_sig9(v: f64) -> String {
    let rounded: f64 = format!("{v:.8e}").parse().unwrap_or(v);
    format!("{rounded}")
}

/// Reads a cloud. For PLY files the ascii/binary variant is taken from the
/// header regardless of which PLY variant `format` names.
pub fn read_cloud(path: impl AsRef<Path>, format: CloudFormat) -> Result<PointCloud> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let cloud = match format {
        CloudFormat::Xyz => read_xyz(&mut reader, path)?,
        CloudFormat::PlyAscii | CloudFormat::PlyBinary => read_ply(&mut reader, path)?.0,
    };
    cloud
        .validate()
        .map_err(|e| Error::parse(path, Location::Line(0), e.to_string()))?;
    Ok(cloud)
}

/// Reads a PLY cloud together with its optional `generated` vertex flag.
pub fn read_ply_tagged(path: impl AsRef<Path>) -> Result<(PointCloud, Option<Vec<bool>>)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_ply(&mut BufReader::new(file), path)
}

pub fn write_cloud(path: impl AsRef<Path>, cloud: &PointCloud, format: CloudFormat) -> Result<()> {
    write_cloud_tagged(path, cloud, format, None)
}

/// Writes a cloud; `generated` adds a uchar `generated` vertex property to PLY
/// output and is ignored for xyz.
pub fn write_cloud_tagged(
    path: impl AsRef<Path>,
    cloud: &PointCloud,
    format: CloudFormat,
    generated: Option<&[bool]>,
) -> Result<()> {
    let path = path.as_ref();
    if let Some(g) = generated {
        if g.len() != cloud.len() {
            return Err(Error::InvalidParameter(format!(
                "{} generated flags for {} points",
                g.len(),
                cloud.len()
            )));
        }
    }
    let mut buf = Vec::new();
    match format {
        CloudFormat::Xyz => write_xyz(&mut buf, cloud),
        CloudFormat::PlyAscii => write_ply(&mut buf, cloud, generated, false),
        CloudFormat::PlyBinary => write_ply(&mut buf, cloud, generated, true),
    }
    .map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn read_xyz(reader: &mut impl BufRead, path: &Path) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut with_normals: Option<bool> = None;
    for (lineno, line) in reader.lines().enumerate() {
        let lineno = lineno + 1;
        let line = line.map_err(|e| Error::io(path, e))?;
        let content = line.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let fields: Vec<f64> = content
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::parse(path, Location::Line(lineno), format!("bad number {t:?}")))
            })
            .collect::<Result<_>>()?;
        let has_normal = match fields.len() {
            3 => false,
            6 => true,
            n => {
                return Err(Error::parse(
                    path,
                    Location::Line(lineno),
                    format!("expected 3 or 6 fields, found {n}"),
                ))
            }
        };
        match with_normals {
            None => with_normals = Some(has_normal),
            Some(prev) if prev != has_normal => {
                return Err(Error::parse(
                    path,
                    Location::Line(lineno),
                    "mixed 3- and 6-field records",
                ))
            }
            _ => {}
        }
        points.push(Point3::new(fields[0], fields[1], fields[2]));
        if has_normal {
            normals.push(Vec3::new(fields[3], fields[4], fields[5]));
        }
    }
    Ok(PointCloud {
        points,
        normals: with_normals.unwrap_or(false).then_some(normals),
    })
}

fn write_xyz(out: &mut Vec<u8>, cloud: &PointCloud) -> std::io::Result<()> {
    for (i, p) in cloud.points.iter().enumerate() {
        write!(out, "{} {} {}", format_sig9(p.x), format_sig9(p.y), format_sig9(p.z))?;
        if let Some(n) = &cloud.normals {
            let n = n[i];
            write!(out, " {} {} {}", format_sig9(n.x), format_sig9(n.y), format_sig9(n.z))?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn write_ply(out: &mut Vec<u8>, cloud: &PointCloud, generated: Option<&[bool]>, binary: bool) -> std::io::Result<()> {
    writeln!(out, "ply")?;
    if binary {
        writeln!(out, "format binary_little_endian 1.0")?;
    } else {
        writeln!(out, "format ascii 1.0")?;
    }
    writeln!(out, "element vertex {}", cloud.len())?;
    for name in ["x", "y", "z"] {
        writeln!(out, "property double {name}")?;
    }
    if cloud.normals.is_some() {
        for name in ["nx", "ny", "nz"] {
            writeln!(out, "property double {name}")?;
        }
    }
    if generated.is_some() {
        writeln!(out, "property uchar generated")?;
    }
    writeln!(out, "end_header")?;
    for (i, p) in cloud.points.iter().enumerate() {
        let mut values = vec![p.x, p.y, p.z];
        if let Some(n) = &cloud.normals {
            values.extend_from_slice(&[n[i].x, n[i].y, n[i].z]);
        }
        let flag = generated.map(|g| g[i] as u8);
        if binary {
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
            if let Some(f) = flag {
                out.push(f);
            }
        } else {
            let text: Vec<String> = values.into_iter().map(format_sig9).collect();
            write!(out, "{}", text.join(" "))?;
            if let Some(f) = flag {
                write!(out, " {f}")?;
            }
            writeln!(out)?;
        }
    }
    Ok(())
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

    fn decode(self, b: &[u8]) -> f64 {
        match self {
            Scalar::I8 => b[0] as i8 as f64,
            Scalar::U8 => b[0] as f64,
            Scalar::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(b[..8].try_into().expect("8 bytes")),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { count: Scalar, item: Scalar },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

fn read_ply(reader: &mut impl BufRead, path: &Path) -> Result<(PointCloud, Option<Vec<bool>>)> {
    let mut line = String::new();
    let mut lineno = 0;
    let mut offset = 0u64;
    let mut next_line = |line: &mut String, lineno: &mut usize, offset: &mut u64| -> Result<()> {
        line.clear();
        let n = reader.read_line(line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::parse(
                path,
                Location::Line(*lineno + 1),
                "unexpected end of header",
            ));
        }
        *lineno += 1;
        *offset += n as u64;
        Ok(())
    };

    next_line(&mut line, &mut lineno, &mut offset)?;
    if line.trim_end() != "ply" {
        return Err(Error::parse(path, Location::Line(1), "missing 'ply' magic"));
    }
    let mut binary = None;
    let mut elements: Vec<Element> = Vec::new();
    loop {
        next_line(&mut line, &mut lineno, &mut offset)?;
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let bad = |msg: &str| Error::parse(path, Location::Line(lineno), msg.to_string());
        match tokens.as_slice() {
            ["end_header"] => break,
            ["format", "ascii", _] => binary = Some(false),
            ["format", "binary_little_endian", _] => binary = Some(true),
            ["format", other, _] => return Err(bad(&format!("unsupported PLY format {other}"))),
            ["comment", ..] | ["obj_info", ..] | [] => {}
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| bad("bad element count"))?,
                properties: Vec::new(),
            }),
            ["property", "list", count, item, _name] => {
                let prop = Property::List {
                    count: Scalar::parse(count).ok_or_else(|| bad("bad list count type"))?,
                    item: Scalar::parse(item).ok_or_else(|| bad("bad list item type"))?,
                };
                elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?
                    .properties
                    .push(prop);
            }
            ["property", ty, name] => {
                let prop = Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| bad(&format!("unknown type {ty}")))?,
                };
                elements
                    .last_mut()
                    .ok_or_else(|| bad("property before element"))?
                    .properties
                    .push(prop);
            }
            _ => return Err(bad(&format!("unrecognized header line {:?}", line.trim_end()))),
        }
    }
    let binary = binary.ok_or_else(|| Error::parse(path, Location::Line(lineno), "missing format line"))?;
    let vertex_pos = elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse(path, Location::Line(lineno), "no vertex element"))?;
    let vertex = &elements[vertex_pos];
    let find = |name: &str| {
        vertex
            .properties
            .iter()
            .position(|p| matches!(p, Property::Scalar { name: n, .. } if n == name))
    };
    let (Some(ix), Some(iy), Some(iz)) = (find("x"), find("y"), find("z")) else {
        return Err(Error::parse(
            path,
            Location::Line(lineno),
            "vertex lacks x/y/z properties",
        ));
    };
    let normal_idx = match (find("nx"), find("ny"), find("nz")) {
        (Some(a), Some(b), Some(c)) => Some([a, b, c]),
        _ => None,
    };
    let generated_idx = find("generated");
    if vertex.properties.iter().any(|p| matches!(p, Property::List { .. })) {
        return Err(Error::parse(
            path,
            Location::Line(lineno),
            "list properties on vertex are not supported",
        ));
    }

    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(vertex.count);
    if binary {
        let mut rest = Vec::new();
        reader.read_to_end(&mut rest).map_err(|e| Error::io(path, e))?;
        let mut cursor = 0usize;
        let eof = |at: usize| Error::parse(path, Location::Byte(offset + at as u64), "unexpected end of data");
        for (ei, element) in elements.iter().enumerate() {
            for _ in 0..element.count {
                let mut row = Vec::new();
                for prop in &element.properties {
                    match *prop {
                        Property::Scalar { ty, .. } => {
                            let end = cursor + ty.size();
                            let bytes = rest.get(cursor..end).ok_or_else(|| eof(cursor))?;
                            row.push(ty.decode(bytes));
                            cursor = end;
                        }
                        Property::List { count, item } => {
                            let end = cursor + count.size();
                            let n = count.decode(rest.get(cursor..end).ok_or_else(|| eof(cursor))?) as usize;
                            cursor = end + n * item.size();
                            if cursor > rest.len() {
                                return Err(eof(end));
                            }
                        }
                    }
                }
                if ei == vertex_pos {
                    rows.push(row);
                }
            }
            if ei == vertex_pos {
                break;
            }
        }
    } else {
        let mut remaining = elements[..=vertex_pos].iter().map(|e| e.count).collect::<Vec<_>>();
        let mut ei = 0;
        while ei <= vertex_pos {
            if remaining[ei] == 0 {
                ei += 1;
                continue;
            }
            line.clear();
            let n = reader.read_line(&mut line).map_err(|e| Error::io(path, e))?;
            lineno += 1;
            if n == 0 {
                return Err(Error::parse(path, Location::Line(lineno), "unexpected end of data"));
            }
            if line.trim().is_empty() {
                continue;
            }
            remaining[ei] -= 1;
            if ei != vertex_pos {
                continue;
            }
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .map_err(|_| Error::parse(path, Location::Line(lineno), format!("bad number {t:?}")))
                })
                .collect::<Result<_>>()?;
            if row.len() != vertex.properties.len() {
                return Err(Error::parse(
                    path,
                    Location::Line(lineno),
                    format!("expected {} values, found {}", vertex.properties.len(), row.len()),
                ));
            }
            rows.push(row);
        }
    }

    let points = rows.iter().map(|r| Point3::new(r[ix], r[iy], r[iz])).collect();
    let normals = normal_idx.map(|[a, b, c]| rows.iter().map(|r| Vec3::new(r[a], r[b], r[c])).collect());
    let generated = generated_idx.map(|g| rows.iter().map(|r| r[g] != 0.0).collect());
    Ok((PointCloud { points, normals }, generated))
}
