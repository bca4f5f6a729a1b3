//! ASCII PLY reading and writing (triangles only).

use std::fmt::Write as _;
use std::path::Path;

use super::TriangleMesh;
use crate::error::{Error, Result};
use crate::geometry::Vec3;

struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

enum Property {
    Scalar(String),
    List,
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path)?;
    parse_ply(&text)
}

/// Parses an ASCII PLY document with `vertex` (x, y, z, optional nx, ny, nz)
/// and `face` elements. Non-triangular faces are rejected; other elements are skipped.
pub fn parse_ply(text: &str) -> Result<TriangleMesh> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err(parse_err(1, "missing 'ply' magic")),
    }
    let mut elements: Vec<Element> = Vec::new();
    let mut saw_format = false;
    loop {
        let (ln, line) = lines.next().ok_or_else(|| parse_err(0, "unexpected end of header"))?;
        let mut tok = line.split_whitespace();
        match tok.next() {
            Some("format") => {
                if tok.next() != Some("ascii") {
                    return Err(parse_err(ln, "only ASCII PLY is supported"));
                }
                saw_format = true;
            }
            Some("comment") | Some("obj_info") | None => {}
            Some("element") => {
                let name = tok.next().ok_or_else(|| parse_err(ln, "element without name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| parse_err(ln, "element without count"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| parse_err(ln, "property before any element"))?;
                let kind = tok.next().ok_or_else(|| parse_err(ln, "property without type"))?;
                if kind == "list" {
                    tok.nth(2).ok_or_else(|| parse_err(ln, "list property without name"))?;
                    el.properties.push(Property::List);
                } else {
                    let name = tok.next().ok_or_else(|| parse_err(ln, "property without name"))?;
                    el.properties.push(Property::Scalar(name.to_string()));
                }
            }
            Some("end_header") => break,
            Some(other) => return Err(parse_err(ln, format!("unknown header keyword '{other}'"))),
        }
    }
    if !saw_format {
        return Err(parse_err(0, "missing format line"));
    }

    let mut vertices = Vec::new();
    let mut normals: Vec<Vec3> = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        let scalar_index = |name: &str| {
            el.properties
                .iter()
                .position(|p| matches!(p, Property::Scalar(n) if n == name))
        };
        for _ in 0..el.count {
            let (ln, line) = lines
                .by_ref()
                .find(|(_, l)| !l.is_empty())
                .ok_or_else(|| parse_err(0, format!("missing '{}' rows", el.name)))?;
            let values: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let get = |idx: Option<usize>| -> Result<Option<f64>> {
                        match idx {
                            None => Ok(None),
                            Some(i) => values
                                .get(i)
                                .and_then(|v| v.parse::<f64>().ok())
                                .map(Some)
                                .ok_or_else(|| parse_err(ln, "bad vertex value")),
                        }
                    };
                    let (x, y, z) = match (get(scalar_index("x"))?, get(scalar_index("y"))?, get(scalar_index("z"))?) {
                        (Some(x), Some(y), Some(z)) => (x, y, z),
                        _ => return Err(parse_err(ln, "vertex element needs x, y, z")),
                    };
                    vertices.push(Vec3::new(x, y, z));
                    if let (Some(nx), Some(ny), Some(nz)) =
                        (get(scalar_index("nx"))?, get(scalar_index("ny"))?, get(scalar_index("nz"))?)
                    {
                        normals.push(Vec3::new(nx, ny, nz));
                    }
                }
                "face" => {
                    let n: usize = values
                        .first()
                        .and_then(|v| v.parse().ok())
                        .ok_or_else(|| parse_err(ln, "bad face row"))?;
                    if n != 3 {
                        return Err(parse_err(ln, format!("only triangular faces are supported, found {n}-gon")));
                    }
                    let mut tri = [0usize; 3];
                    for (k, slot) in tri.iter_mut().enumerate() {
                        *slot = values
                            .get(k + 1)
                            .and_then(|v| v.parse().ok())
                            .ok_or_else(|| parse_err(ln, "bad face index"))?;
                    }
                    triangles.push(tri);
                }
                _ => {}
            }
        }
    }
    if normals.len() == vertices.len() && !normals.is_empty() {
        TriangleMesh::with_normals(vertices, triangles, normals)
    } else {
        TriangleMesh::new(vertices, triangles)
    }
}

pub fn to_ply_string(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    s.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(s, "element vertex {}", mesh.vertex_count());
    s.push_str("property double x\nproperty double y\nproperty double z\n");
    s.push_str("property double nx\nproperty double ny\nproperty double nz\n");
    let _ = writeln!(s, "element face {}", mesh.triangle_count());
    s.push_str("property list uchar int vertex_indices\nend_header\n");
    for (v, n) in mesh.vertices().iter().zip(mesh.vertex_normals()) {
        let _ = writeln!(s, "{} {} {} {} {} {}", v.x, v.y, v.z, n.x, n.y, n.z);
    }
    for t in mesh.triangles() {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

pub fn write_ply(mesh: &TriangleMesh, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_ply_string(mesh))?;
    Ok(())
}
