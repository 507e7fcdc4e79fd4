//! PLY (ASCII and binary little-endian) and XYZ reading and writing.
//!
//! The reader understands arbitrary PLY headers: every element and property
//! is parsed (lists included) so that files carrying faces, colors or other
//! attributes load correctly. Only the `vertex` element's scalar properties
//! are kept; `x`, `y`, `z` become positions and an optional `anomaly`
//! property becomes the mask.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::cloud::{Point3, PointCloud};
use crate::error::{GlfmError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloudFormat {
    PlyAscii,
    PlyBinaryLe,
    Xyz,
}

impl CloudFormat {
    /// Guess from the file extension. `.ply` maps to binary; the reader
    /// accepts either PLY encoding regardless.
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()?.to_ascii_lowercase().as_str() {
            "ply" => Some(CloudFormat::PlyBinaryLe),
            "xyz" | "txt" => Some(CloudFormat::Xyz),
            _ => None,
        }
    }
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
    fn parse(name: &str) -> Option<Self> {
        Some(match name {
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

    fn is_integer(self) -> bool {
        !matches!(self, ScalarType::F32 | ScalarType::F64)
    }

    fn decode_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
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

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLe,
}

struct Header {
    encoding: Encoding,
    elements: Vec<Element>,
    body_offset: usize,
    body_line: usize,
}

/// Scalar vertex properties of a PLY file, one column per property.
#[derive(Debug, Clone, Default)]
pub struct VertexTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
    integer: Vec<bool>,
}

impl VertexTable {
    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();

    loop {
        let rest = &bytes[offset..];
        let Some(nl) = rest.iter().position(|&b| b == b'\n') else {
            return Err(GlfmError::parse_byte(offset, "header not terminated by end_header"));
        };
        line_no += 1;
        let raw = std::str::from_utf8(&rest[..nl])
            .map_err(|_| GlfmError::parse_line(line_no, "header is not valid UTF-8"))?;
        let line = raw.trim_end_matches('\r').trim();
        offset += nl + 1;

        if line_no == 1 {
            if line != "ply" {
                return Err(GlfmError::parse_line(1, "missing 'ply' magic"));
            }
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            None | Some("comment") | Some("obj_info") => {}
            Some("format") => {
                let fmt = tok.next().unwrap_or("");
                let version = tok.next().unwrap_or("");
                if version != "1.0" {
                    return Err(GlfmError::parse_line(line_no, format!("unsupported PLY version '{version}'")));
                }
                encoding = Some(match fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    other => {
                        return Err(GlfmError::parse_line(line_no, format!("unsupported PLY format '{other}'")))
                    }
                });
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| GlfmError::parse_line(line_no, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| GlfmError::parse_line(line_no, "element without valid count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| GlfmError::parse_line(line_no, "property before any element"))?;
                let first = tok
                    .next()
                    .ok_or_else(|| GlfmError::parse_line(line_no, "property without type"))?;
                let bad_type = |t: &str| GlfmError::parse_line(line_no, format!("unknown property type '{t}'"));
                if first == "list" {
                    let c = tok.next().unwrap_or("");
                    let i = tok.next().unwrap_or("");
                    let count = ScalarType::parse(c).ok_or_else(|| bad_type(c))?;
                    let item = ScalarType::parse(i).ok_or_else(|| bad_type(i))?;
                    if !count.is_integer() {
                        return Err(GlfmError::parse_line(line_no, "list count type must be an integer"));
                    }
                    el.properties.push(Property::List { count, item });
                } else {
                    let ty = ScalarType::parse(first).ok_or_else(|| bad_type(first))?;
                    let name = tok
                        .next()
                        .ok_or_else(|| GlfmError::parse_line(line_no, "property without name"))?;
                    el.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(GlfmError::parse_line(line_no, format!("unexpected header keyword '{other}'")));
            }
        }
    }

    let encoding = encoding.ok_or_else(|| GlfmError::parse_line(line_no, "missing format line"))?;
    Ok(Header {
        encoding,
        elements,
        body_offset: offset,
        body_line: line_no,
    })
}

fn empty_table(el: &Element) -> VertexTable {
    let mut t = VertexTable::default();
    for p in &el.properties {
        if let Property::Scalar { name, ty } = p {
            t.names.push(name.clone());
            t.columns.push(Vec::with_capacity(el.count));
            t.integer.push(ty.is_integer());
        }
    }
    t
}

fn read_ascii_body(bytes: &[u8], header: &Header) -> Result<VertexTable> {
    let text = std::str::from_utf8(&bytes[header.body_offset..])
        .map_err(|_| GlfmError::parse_byte(header.body_offset, "ASCII body is not valid UTF-8"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header.body_line + 1 + i, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let mut table = None;

    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let mut t = if is_vertex { Some(empty_table(el)) } else { None };
        for row in 0..el.count {
            let (line_no, line) = lines.next().ok_or_else(|| {
                GlfmError::parse_line(
                    header.body_line + 1,
                    format!("element '{}' declares {} rows, found {}", el.name, el.count, row),
                )
            })?;
            let mut tok = line.split_whitespace();
            let mut col = 0;
            let mut next_num = |what: &str| -> Result<f64> {
                let s = tok
                    .next()
                    .ok_or_else(|| GlfmError::parse_line(line_no, format!("missing value for {what}")))?;
                s.parse::<f64>()
                    .map_err(|_| GlfmError::parse_line(line_no, format!("invalid number '{s}' for {what}")))
            };
            for p in &el.properties {
                match p {
                    Property::Scalar { name, .. } => {
                        let v = next_num(name)?;
                        if let Some(t) = t.as_mut() {
                            t.columns[col].push(v);
                        }
                        col += 1;
                    }
                    Property::List { .. } => {
                        let n = next_num("list count")?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(GlfmError::parse_line(line_no, "invalid list count"));
                        }
                        for _ in 0..n as usize {
                            next_num("list item")?;
                        }
                    }
                }
            }
        }
        if is_vertex && table.is_none() {
            table = t;
        }
    }
    if let Some((line_no, _)) = lines.next() {
        return Err(GlfmError::parse_line(line_no, "data beyond the declared element counts"));
    }
    table.ok_or_else(|| GlfmError::parse_line(header.body_line, "no vertex element"))
}

fn read_binary_body(bytes: &[u8], header: &Header) -> Result<VertexTable> {
    let mut pos = header.body_offset;
    let mut table = None;
    let take = |pos: &mut usize, n: usize, what: &str| -> Result<usize> {
        if *pos + n > bytes.len() {
            return Err(GlfmError::parse_byte(*pos, format!("unexpected end of file reading {what}")));
        }
        let start = *pos;
        *pos += n;
        Ok(start)
    };

    for el in &header.elements {
        let is_vertex = el.name == "vertex";
        let mut t = if is_vertex { Some(empty_table(el)) } else { None };
        for _ in 0..el.count {
            let mut col = 0;
            for p in &el.properties {
                match p {
                    Property::Scalar { name, ty } => {
                        let at = take(&mut pos, ty.size(), name)?;
                        if let Some(t) = t.as_mut() {
                            t.columns[col].push(ty.decode_le(&bytes[at..]));
                        }
                        col += 1;
                    }
                    Property::List { count, item } => {
                        let at = take(&mut pos, count.size(), "list count")?;
                        let n = count.decode_le(&bytes[at..]);
                        if n < 0.0 {
                            return Err(GlfmError::parse_byte(at, "negative list count"));
                        }
                        take(&mut pos, n as usize * item.size(), "list items")?;
                    }
                }
            }
        }
        if is_vertex && table.is_none() {
            table = t;
        }
    }
    if pos != bytes.len() {
        return Err(GlfmError::parse_byte(pos, "data beyond the declared element counts"));
    }
    table.ok_or_else(|| GlfmError::parse_byte(header.body_offset, "no vertex element"))
}

/// Parses a PLY file and returns all scalar vertex properties.
pub fn read_ply_vertices(path: &Path) -> Result<VertexTable> {
    let bytes = fs::read(path).map_err(|e| GlfmError::io(path, e))?;
    parse_ply_vertices(&bytes)
}

pub fn parse_ply_vertices(bytes: &[u8]) -> Result<VertexTable> {
    let header = parse_header(bytes)?;
    let table = match header.encoding {
        Encoding::Ascii => read_ascii_body(bytes, &header)?,
        Encoding::BinaryLe => read_binary_body(bytes, &header)?,
    };
    // Non-finite check is per value so the error can name the row.
    for name in ["x", "y", "z"] {
        let col = table
            .column(name)
            .ok_or_else(|| GlfmError::parse_line(header.body_line, format!("vertex element lacks property '{name}'")))?;
        if let Some(row) = col.iter().position(|v| !v.is_finite()) {
            let loc = match header.encoding {
                Encoding::Ascii => GlfmError::parse_line(
                    header.body_line + 1 + row,
                    format!("non-finite coordinate '{name}' in vertex {row}"),
                ),
                Encoding::BinaryLe => GlfmError::parse_byte(
                    header.body_offset + row * vertex_stride(&header),
                    format!("non-finite coordinate '{name}' in vertex {row}"),
                ),
            };
            return Err(loc);
        }
    }
    Ok(table)
}

// Only meaningful when the vertex element is first and has no lists; used for
// error locations.
fn vertex_stride(header: &Header) -> usize {
    header
        .elements
        .iter()
        .find(|e| e.name == "vertex")
        .map(|e| {
            e.properties
                .iter()
                .map(|p| match p {
                    Property::Scalar { ty, .. } => ty.size(),
                    Property::List { count, .. } => count.size(),
                })
                .sum()
        })
        .unwrap_or(0)
}

fn table_to_cloud(id: String, table: &VertexTable) -> Result<PointCloud> {
    let x = table.column("x").unwrap();
    let y = table.column("y").unwrap();
    let z = table.column("z").unwrap();
    let points: Vec<Point3> = (0..x.len()).map(|i| [x[i], y[i], z[i]]).collect();
    let mask = match table.names.iter().position(|n| n == "anomaly") {
        Some(i) if table.integer[i] => Some(table.columns[i].iter().map(|&v| v != 0.0).collect()),
        Some(_) => None,
        None => None,
    };
    PointCloud::new(id, points, mask)
}

/// Parses PLY bytes into a cloud named `id`.
pub fn parse_ply_cloud(id: impl Into<String>, bytes: &[u8]) -> Result<PointCloud> {
    table_to_cloud(id.into(), &parse_ply_vertices(bytes)?)
}

fn id_from_path(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default()
}

/// Reads a cloud. `format` selects PLY or XYZ; PLY files are accepted in
/// either encoding, whatever the declared variant.
pub fn read_cloud(path: &Path, format: CloudFormat) -> Result<PointCloud> {
    match format {
        CloudFormat::PlyAscii | CloudFormat::PlyBinaryLe => {
            let table = read_ply_vertices(path)?;
            table_to_cloud(id_from_path(path), &table)
        }
        CloudFormat::Xyz => {
            let text = fs::read_to_string(path).map_err(|e| GlfmError::io(path, e))?;
            parse_xyz(id_from_path(path), &text)
        }
    }
}

/// Reads a cloud with the format inferred from the extension.
pub fn read_cloud_auto(path: &Path) -> Result<PointCloud> {
    let fmt = CloudFormat::from_path(path)
        .ok_or_else(|| GlfmError::InvalidInput(format!("unknown cloud extension: {}", path.display())))?;
    read_cloud(path, fmt)
}

pub fn parse_xyz(id: String, text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut mask = Vec::new();
    let mut has_mask = None;
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<&str> = line.split_whitespace().collect();
        if vals.len() != 3 && vals.len() != 4 {
            return Err(GlfmError::parse_line(line_no, format!("expected 3 or 4 columns, found {}", vals.len())));
        }
        let mut p = [0.0; 3];
        for k in 0..3 {
            p[k] = vals[k]
                .parse::<f64>()
                .map_err(|_| GlfmError::parse_line(line_no, format!("invalid number '{}'", vals[k])))?;
            if !p[k].is_finite() {
                return Err(GlfmError::parse_line(line_no, "non-finite coordinate"));
            }
        }
        let row_has_mask = vals.len() == 4;
        if *has_mask.get_or_insert(row_has_mask) != row_has_mask {
            return Err(GlfmError::parse_line(line_no, "inconsistent column count"));
        }
        if row_has_mask {
            let m = vals[3]
                .parse::<f64>()
                .map_err(|_| GlfmError::parse_line(line_no, format!("invalid mask value '{}'", vals[3])))?;
            mask.push(m != 0.0);
        }
        points.push(p);
    }
    let mask = if has_mask == Some(true) { Some(mask) } else { None };
    PointCloud::new(id, points, mask)
}

/// Extra float vertex property written alongside positions.
pub struct ExtraProperty<'a> {
    pub name: &'a str,
    pub values: &'a [f64],
}

/// Serializes a cloud to PLY bytes. Positions are doubles so binary output
/// round-trips exactly. The mask, when present, becomes a `uchar anomaly`
/// property; extras are written as `float`.
pub fn encode_ply(
    cloud: &PointCloud,
    binary: bool,
    extras: &[ExtraProperty<'_>],
    comments: &[String],
) -> Result<Vec<u8>> {
    for e in extras {
        if e.values.len() != cloud.len() {
            return Err(GlfmError::InvalidInput(format!(
                "property '{}' has {} values for {} points",
                e.name,
                e.values.len(),
                cloud.len()
            )));
        }
    }
    let mut out = Vec::with_capacity(cloud.len() * 32 + 256);
    out.extend_from_slice(b"ply\n");
    out.extend_from_slice(if binary {
        b"format binary_little_endian 1.0\n".as_slice()
    } else {
        b"format ascii 1.0\n".as_slice()
    });
    for c in comments {
        writeln!(out, "comment {}", c.replace('\n', " ")).unwrap();
    }
    writeln!(out, "element vertex {}", cloud.len()).unwrap();
    out.extend_from_slice(b"property double x\nproperty double y\nproperty double z\n");
    if cloud.mask().is_some() {
        out.extend_from_slice(b"property uchar anomaly\n");
    }
    for e in extras {
        writeln!(out, "property float {}", e.name).unwrap();
    }
    out.extend_from_slice(b"end_header\n");

    let mask = cloud.mask();
    for (i, p) in cloud.points().iter().enumerate() {
        if binary {
            for c in p {
                out.extend_from_slice(&c.to_le_bytes());
            }
            if let Some(m) = mask {
                out.push(m[i] as u8);
            }
            for e in extras {
                out.extend_from_slice(&(e.values[i] as f32).to_le_bytes());
            }
        } else {
            write!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
            if let Some(m) = mask {
                write!(out, " {}", m[i] as u8).unwrap();
            }
            for e in extras {
                write!(out, " {}", e.values[i] as f32).unwrap();
            }
            out.push(b'\n');
        }
    }
    Ok(out)
}

pub fn encode_xyz(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 32);
    for (i, p) in cloud.points().iter().enumerate() {
        write!(out, "{} {} {}", p[0], p[1], p[2]).unwrap();
        if let Some(m) = cloud.mask() {
            write!(out, " {}", m[i] as u8).unwrap();
        }
        out.push(b'\n');
    }
    out
}

pub fn write_cloud(cloud: &PointCloud, path: &Path, format: CloudFormat) -> Result<()> {
    let bytes = match format {
        CloudFormat::PlyAscii => encode_ply(cloud, false, &[], &[])?,
        CloudFormat::PlyBinaryLe => encode_ply(cloud, true, &[], &[])?,
        CloudFormat::Xyz => encode_xyz(cloud),
    };
    fs::write(path, bytes).map_err(|e| GlfmError::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ply(header_body: &str) -> Vec<u8> {
        header_body.as_bytes().to_vec()
    }

    #[test]
    fn reads_three_vertex_ascii() {
        let b = ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 0 0\n0 1 0\n");
        let t = parse_ply_vertices(&b).unwrap();
        let c = table_to_cloud("t".into(), &t).unwrap();
        assert_eq!(c.points(), &[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]);
        assert!(c.mask().is_none());
    }

    #[test]
    fn ignores_extra_properties_and_faces() {
        let b = ply("ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nproperty uchar red\nproperty int anomaly\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0 255 0\n1 2 3 0 1\n3 0 1 1\n");
        let t = parse_ply_vertices(&b).unwrap();
        let c = table_to_cloud("t".into(), &t).unwrap();
        assert_eq!(c.points()[1], [1.0, 2.0, 3.0]);
        assert_eq!(c.mask().unwrap(), &[false, true]);
    }

    #[test]
    fn count_mismatch_is_an_error() {
        let short = ply("ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n");
        assert!(matches!(parse_ply_vertices(&short), Err(GlfmError::Parse { .. })));
        let long = ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 1 1\n");
        let err = parse_ply_vertices(&long).unwrap_err().to_string();
        assert!(err.contains("line 9"), "{err}");
    }

    #[test]
    fn malformed_header_is_an_error() {
        assert!(parse_ply_vertices(b"plx\n").is_err());
        assert!(parse_ply_vertices(b"ply\nformat ascii 1.0\nelement vertex 1\n").is_err());
        assert!(parse_ply_vertices(b"ply\nformat binary_big_endian 1.0\nend_header\n").is_err());
        let no_z = ply("ply\nformat ascii 1.0\nelement vertex 1\nproperty float x\nproperty float y\nend_header\n0 0\n");
        assert!(parse_ply_vertices(&no_z).is_err());
    }

    #[test]
    fn non_finite_names_the_line() {
        let b = ply("ply\nformat ascii 1.0\nelement vertex 2\nproperty float x\nproperty float y\nproperty float z\nend_header\n0 0 0\n1 nan 0\n");
        let err = parse_ply_vertices(&b).unwrap_err().to_string();
        assert!(err.contains("line 9"), "{err}");
    }

    #[test]
    fn truncated_binary_names_the_byte() {
        let c = PointCloud::from_points("c", vec![[1.0, 2.0, 3.0], [4.0, 5.0, 6.0]]).unwrap();
        let mut b = encode_ply(&c, true, &[], &[]).unwrap();
        let full = b.len();
        b.truncate(full - 4);
        let err = parse_ply_vertices(&b).unwrap_err().to_string();
        assert!(err.contains(&format!("byte {}", full - 8)), "{err}");
    }

    #[test]
    fn xyz_with_and_without_mask() {
        let c = parse_xyz("a".into(), "0 0 0\n1 2 3").unwrap();
        assert_eq!(c.points(), &[[0.0; 3], [1.0, 2.0, 3.0]]);
        let m = parse_xyz("a".into(), "0 0 0 1\n1 2 3 0\n").unwrap();
        assert_eq!(m.mask().unwrap(), &[true, false]);
        assert!(parse_xyz("a".into(), "0 0 0 1\n1 2 3\n").is_err());
        assert!(parse_xyz("a".into(), "0 0\n").is_err());
    }

    #[test]
    fn empty_and_single_point_files() {
        let dir = tempfile::tempdir().unwrap();
        let empty = PointCloud::from_points("e", vec![]).unwrap();
        for fmt in [CloudFormat::PlyAscii, CloudFormat::PlyBinaryLe] {
            let p = dir.path().join("e.ply");
            write_cloud(&empty, &p, fmt).unwrap();
            let text = fs::read(&p).unwrap();
            assert!(String::from_utf8_lossy(&text).contains("element vertex 0"));
            assert_eq!(read_cloud(&p, fmt).unwrap().len(), 0);
        }
        let one = PointCloud::from_points("one", vec![[0.25, -1.5, 3.0]]).unwrap();
        let p = dir.path().join("one.ply");
        write_cloud(&one, &p, CloudFormat::PlyAscii).unwrap();
        assert_eq!(read_cloud(&p, CloudFormat::PlyAscii).unwrap().points(), one.points());
    }

    #[test]
    fn extras_are_written_as_float_properties() {
        let c = PointCloud::new("c", vec![[0.0; 3], [1.0; 3]], Some(vec![false, true])).unwrap();
        let scores = [0.5, 2.0];
        let b = encode_ply(&c, true, &[ExtraProperty { name: "score", values: &scores }], &["seed=1".into()]).unwrap();
        let t = parse_ply_vertices(&b).unwrap();
        assert_eq!(t.column("score").unwrap(), &[0.5, 2.0]);
        assert_eq!(t.column("anomaly").unwrap(), &[0.0, 1.0]);
    }
}
