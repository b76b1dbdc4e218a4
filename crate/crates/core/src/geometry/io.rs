//! Triangle-mesh readers (PLY ascii/binary, OBJ) and a binary PLY writer.
//!
//! Only vertex positions and face connectivity are read. Polygons with more
//! than three corners are fan-triangulated.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Mesh;

pub fn load_mesh(path: &Path) -> Result<Mesh> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let ext = path
        .extension()
        .map(|e| e.to_string_lossy().to_ascii_lowercase())
        .unwrap_or_default();
    let (vertices, faces) = if bytes.starts_with(b"ply") {
        parse_ply(&bytes)?
    } else if ext == "obj" {
        let text = std::str::from_utf8(&bytes)
            .map_err(|_| Error::UnsupportedFormat(format!("{}: OBJ is not UTF-8", path.display())))?;
        parse_obj(text)?
    } else {
        return Err(Error::UnsupportedFormat(format!(
            "{}: not a PLY or OBJ mesh",
            path.display()
        )));
    };
    let mesh = Mesh::new(name, vertices, faces)?;
    log::debug!(
        "loaded {}: {} vertices, {} faces",
        path.display(),
        mesh.vertices.len(),
        mesh.faces.len()
    );
    Ok(mesh)
}

/// Vertex count of a mesh file without reading its faces: the PLY header
/// for PLY files, `v` records for OBJ.
pub fn vertex_count(path: &Path) -> Result<usize> {
    use std::io::Read;
    let mut file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = Vec::new();
    (&mut file)
        .take(1 << 16)
        .read_to_end(&mut head)
        .map_err(|e| Error::io(path, e))?;
    if head.starts_with(b"ply") {
        let (_, elements, _) = parse_header(&head)?;
        return elements
            .iter()
            .find(|e| e.name == "vertex")
            .map(|e| e.count)
            .ok_or_else(|| header_error("no vertex element"));
    }
    let mut text = String::from_utf8(head)
        .map_err(|_| Error::UnsupportedFormat(format!("{}: not a PLY or OBJ mesh", path.display())))?;
    file.read_to_string(&mut text).map_err(|e| Error::io(path, e))?;
    Ok(text
        .lines()
        .filter(|l| l.split_whitespace().next() == Some("v"))
        .count())
}

type Geometry = (Vec<[f64; 3]>, Vec<[u32; 3]>);

fn push_polygon(faces: &mut Vec<[u32; 3]>, poly: &[u32]) {
    for i in 1..poly.len().saturating_sub(1) {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
}

pub fn parse_obj(text: &str) -> Result<Geometry> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut poly = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("v") => {
                let mut p = [0.0; 3];
                for c in &mut p {
                    *c = tok
                        .next()
                        .and_then(|t| t.parse().ok())
                        .ok_or_else(|| Error::UnsupportedFormat(format!("OBJ line {}: bad vertex", lineno + 1)))?;
                }
                vertices.push(p);
            }
            Some("f") => {
                poly.clear();
                for t in tok {
                    let idx: i64 = t
                        .split('/')
                        .next()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| Error::UnsupportedFormat(format!("OBJ line {}: bad face", lineno + 1)))?;
                    // 1-based; negative indices count back from the latest vertex.
                    let resolved = if idx > 0 {
                        idx - 1
                    } else {
                        vertices.len() as i64 + idx
                    };
                    if resolved < 0 || idx == 0 {
                        return Err(Error::InvalidMesh(format!("OBJ line {}: bad index {idx}", lineno + 1)));
                    }
                    poly.push(resolved as u32);
                }
                push_polygon(&mut faces, &poly);
            }
            _ => {}
        }
    }
    Ok((vertices, faces))
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Encoding {
    Ascii,
    BinaryLe,
    BinaryBe,
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
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
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
}

#[derive(Clone, Debug)]
enum Property {
    Scalar { name: String, ty: Scalar },
    List { name: String, count: Scalar, item: Scalar },
}

#[derive(Clone, Debug)]
struct Element {
    name: String,
    count: usize,
    props: Vec<Property>,
}

fn header_error(msg: &str) -> Error {
    Error::UnsupportedFormat(format!("PLY header: {msg}"))
}

fn parse_header(bytes: &[u8]) -> Result<(Encoding, Vec<Element>, usize)> {
    const END: &[u8] = b"end_header";
    let end = bytes
        .windows(END.len())
        .position(|w| w == END)
        .ok_or_else(|| header_error("missing end_header"))?;
    let mut body = end + END.len();
    while body < bytes.len() && bytes[body] != b'\n' {
        body += 1;
    }
    body += 1;
    let header = std::str::from_utf8(&bytes[..end]).map_err(|_| header_error("not ASCII"))?;

    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(header_error("missing magic"));
    }
    let mut encoding = None;
    let mut elements: Vec<Element> = Vec::new();
    for line in lines {
        let tok: Vec<&str> = line.split_whitespace().collect();
        match tok.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                encoding = Some(match *fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLe,
                    "binary_big_endian" => Encoding::BinaryBe,
                    other => return Err(header_error(&format!("unknown format {other}"))),
                });
            }
            ["element", name, count] => elements.push(Element {
                name: name.to_string(),
                count: count.parse().map_err(|_| header_error("bad element count"))?,
                props: Vec::new(),
            }),
            ["property", "list", count, item, name] => {
                let el = elements.last_mut().ok_or_else(|| header_error("property before element"))?;
                el.props.push(Property::List {
                    name: name.to_string(),
                    count: Scalar::parse(count).ok_or_else(|| header_error("bad list count type"))?,
                    item: Scalar::parse(item).ok_or_else(|| header_error("bad list item type"))?,
                });
            }
            ["property", ty, name] => {
                let el = elements.last_mut().ok_or_else(|| header_error("property before element"))?;
                el.props.push(Property::Scalar {
                    name: name.to_string(),
                    ty: Scalar::parse(ty).ok_or_else(|| header_error("bad property type"))?,
                });
            }
            _ => return Err(header_error(&format!("unrecognized line {line:?}"))),
        }
    }
    let encoding = encoding.ok_or_else(|| header_error("missing format line"))?;
    Ok((encoding, elements, body))
}

/// Sequential reader over the PLY body in any of the three encodings.
struct BodyReader<'a> {
    bytes: &'a [u8],
    pos: usize,
    encoding: Encoding,
}

impl BodyReader<'_> {
    fn truncated() -> Error {
        Error::UnsupportedFormat("PLY body is truncated or malformed".into())
    }

    fn next_token(&mut self) -> Result<&str> {
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(Self::truncated());
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).map_err(|_| Self::truncated())
    }

    fn read(&mut self, ty: Scalar) -> Result<f64> {
        if self.encoding == Encoding::Ascii {
            return self.next_token()?.parse::<f64>().map_err(|_| Self::truncated());
        }
        let n = ty.size();
        let raw = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(Self::truncated)?;
        self.pos += n;
        let mut buf = [0u8; 8];
        buf[..n].copy_from_slice(raw);
        if self.encoding == Encoding::BinaryBe {
            buf[..n].reverse();
        }
        Ok(match ty {
            Scalar::I8 => buf[0] as i8 as f64,
            Scalar::U8 => buf[0] as f64,
            Scalar::I16 => i16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::U16 => u16::from_le_bytes([buf[0], buf[1]]) as f64,
            Scalar::I32 => i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::U32 => u32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F32 => f32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) as f64,
            Scalar::F64 => f64::from_le_bytes(buf),
        })
    }
}

pub fn parse_ply(bytes: &[u8]) -> Result<Geometry> {
    let (encoding, elements, body) = parse_header(bytes)?;
    let mut reader = BodyReader {
        bytes,
        pos: body,
        encoding,
    };
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    let mut poly = Vec::new();
    for el in &elements {
        match el.name.as_str() {
            "vertex" => {
                let axis = |name: &str| match name {
                    "x" => Some(0),
                    "y" => Some(1),
                    "z" => Some(2),
                    _ => None,
                };
                let mut seen = [false; 3];
                for p in &el.props {
                    if let Property::Scalar { name, .. } = p {
                        if let Some(a) = axis(name) {
                            seen[a] = true;
                        }
                    }
                }
                if seen != [true; 3] {
                    return Err(header_error("vertex element lacks x/y/z"));
                }
                vertices.reserve(el.count);
                for _ in 0..el.count {
                    let mut v = [0.0; 3];
                    for p in &el.props {
                        match p {
                            Property::Scalar { name, ty } => {
                                let value = reader.read(*ty)?;
                                if let Some(a) = axis(name) {
                                    v[a] = value;
                                }
                            }
                            Property::List { count, item, .. } => {
                                let n = reader.read(*count)? as usize;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                            }
                        }
                    }
                    vertices.push(v);
                }
            }
            "face" => {
                faces.reserve(el.count);
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::List { name, count, item }
                                if name == "vertex_indices" || name == "vertex_index" =>
                            {
                                let n = reader.read(*count)? as usize;
                                poly.clear();
                                for _ in 0..n {
                                    let idx = reader.read(*item)?;
                                    if idx < 0.0 {
                                        return Err(Error::InvalidMesh(format!("negative face index {idx}")));
                                    }
                                    poly.push(idx as u32);
                                }
                                push_polygon(&mut faces, &poly);
                            }
                            Property::List { count, item, .. } => {
                                let n = reader.read(*count)? as usize;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                            }
                            Property::Scalar { ty, .. } => {
                                reader.read(*ty)?;
                            }
                        }
                    }
                }
            }
            _ => {
                for _ in 0..el.count {
                    for p in &el.props {
                        match p {
                            Property::Scalar { ty, .. } => {
                                reader.read(*ty)?;
                            }
                            Property::List { count, item, .. } => {
                                let n = reader.read(*count)? as usize;
                                for _ in 0..n {
                                    reader.read(*item)?;
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    Ok((vertices, faces))
}

/// Writes a binary little-endian PLY with float vertices and int indices.
pub fn write_ply(path: &Path, mesh: &Mesh) -> Result<()> {
    let mut out = Vec::with_capacity(64 + mesh.vertices.len() * 12 + mesh.faces.len() * 13);
    write!(
        out,
        "ply\nformat binary_little_endian 1.0\ncomment {}\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nelement face {}\nproperty list uchar int vertex_indices\nend_header\n",
        mesh.name,
        mesh.vertices.len(),
        mesh.faces.len()
    )
    .expect("write to Vec");
    for v in &mesh.vertices {
        for c in v {
            out.extend_from_slice(&(*c as f32).to_le_bytes());
        }
    }
    for f in &mesh.faces {
        out.push(3);
        for i in f {
            out.extend_from_slice(&(*i as i32).to_le_bytes());
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    const TRI_ASCII: &str = "ply\nformat ascii 1.0\nelement vertex 3\nproperty float x\nproperty float y\nproperty float z\nelement face 1\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n3 0 1 2\n";

    #[test]
    fn ascii_single_triangle() {
        let (v, f) = parse_ply(TRI_ASCII.as_bytes()).unwrap();
        assert_eq!(v.len(), 3);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn degenerate_face_removed_on_load() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("two.ply");
        let text = "ply\nformat ascii 1.0\nelement vertex 4\nproperty float x\nproperty float y\nproperty float z\nelement face 2\nproperty list uchar int vertex_indices\nend_header\n0 0 0\n1 0 0\n0 1 0\n2 0 0\n3 0 1 3\n3 0 1 2\n";
        fs::write(&path, text).unwrap();
        let m = load_mesh(&path).unwrap();
        assert_eq!(m.faces.len(), 1);
        assert_eq!(m.name, "two");
    }

    #[test]
    fn corrupted_header_is_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ply");
        fs::write(&path, "ply\nformat weird 1.0\nend_header\n").unwrap();
        assert!(matches!(load_mesh(&path), Err(Error::UnsupportedFormat(_))));
        let path = dir.path().join("bad.stl");
        fs::write(&path, "solid x").unwrap();
        assert!(matches!(load_mesh(&path), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn binary_round_trip_through_writer() {
        let m = Mesh::new(
            "quad",
            vec![[0., 0., 0.], [1., 0., 0.], [1., 1., 0.5], [0., 1., 0.]],
            vec![[0, 1, 2], [0, 2, 3]],
        )
        .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("quad.ply");
        write_ply(&path, &m).unwrap();
        let back = load_mesh(&path).unwrap();
        assert_eq!(back.vertices, m.vertices);
        assert_eq!(back.faces, m.faces);
        assert_eq!(vertex_count(&path).unwrap(), 4);
        let obj = dir.path().join("tri.obj");
        std::fs::write(&obj, "v 0 0 0\nv 1 0 0\nvn 0 0 1\nv 0 1 0\nf 1 2 3\n").unwrap();
        assert_eq!(vertex_count(&obj).unwrap(), 3);
    }

    #[test]
    fn big_endian_with_extra_properties() {
        let mut bytes = b"ply\nformat binary_big_endian 1.0\nelement vertex 3\nproperty double x\nproperty double y\nproperty double z\nproperty uchar red\nelement face 1\nproperty list uchar uint vertex_indices\nproperty float quality\nend_header\n".to_vec();
        for v in [[0.0f64, 0., 0.], [1., 0., 0.], [0., 0., 1.]] {
            for c in v {
                bytes.extend_from_slice(&c.to_be_bytes());
            }
            bytes.push(200);
        }
        bytes.push(3);
        for i in [0u32, 1, 2] {
            bytes.extend_from_slice(&i.to_be_bytes());
        }
        bytes.extend_from_slice(&1.5f32.to_be_bytes());
        let (v, f) = parse_ply(&bytes).unwrap();
        assert_eq!(v[2], [0., 0., 1.]);
        assert_eq!(f, vec![[0, 1, 2]]);
    }

    #[test]
    fn truncated_body_is_an_error() {
        let text = &TRI_ASCII[..TRI_ASCII.len() - 8];
        assert!(parse_ply(text.as_bytes()).is_err());
    }

    #[test]
    fn obj_with_slashes_quads_and_negative_indices() {
        let text = "# quad\nv 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nvn 0 0 1\nf 1//1 2//1 3//1 4//1\nf -4 -3 -2\n";
        let (v, f) = parse_obj(text).unwrap();
        assert_eq!(v.len(), 4);
        assert_eq!(f, vec![[0, 1, 2], [0, 2, 3], [0, 1, 2]]);
    }
}
