//! Minimal Wavefront OBJ support: `v` and `f` statements only.

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

use crate::mesh::{MeshError, TriangleMesh, MIN_TRIANGLE_AREA};
use crate::Vec3;

#[derive(Debug, Error)]
pub enum ObjError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh: {0}")]
    Mesh(#[from] MeshError),
}

/// Counts gathered while loading.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ObjSummary {
    pub vertices: usize,
    /// Polygon statements read.
    pub faces: usize,
    /// Triangles after fan triangulation.
    pub triangles: usize,
    /// Zero-area triangles dropped.
    pub degenerate: usize,
}

// Statements that carry no geometry we use.
const IGNORED: &[&str] = &["vn", "vt", "vp", "o", "g", "s", "usemtl", "mtllib"];

pub fn load_obj(path: impl AsRef<Path>) -> Result<(TriangleMesh, ObjSummary), ObjError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ObjError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_obj(&text)
}

/// Parses OBJ text. Polygons are fan-triangulated from their first vertex;
/// indices are 1-based, negative indices count back from the last vertex.
pub fn parse_obj(text: &str) -> Result<(TriangleMesh, ObjSummary), ObjError> {
    let mut vertices = Vec::new();
    let mut triangles = Vec::new();
    let mut summary = ObjSummary::default();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        let mut words = content.split_whitespace();
        let Some(keyword) = words.next() else { continue };
        let err = |message: String| ObjError::Parse { line, message };
        match keyword {
            "v" => {
                let coords: Vec<f64> = words
                    .map(|w| w.parse::<f64>().map_err(|_| err(format!("bad coordinate `{w}`"))))
                    .collect::<Result<_, _>>()?;
                if !(3..=4).contains(&coords.len()) || coords.iter().any(|c| !c.is_finite()) {
                    return Err(err(format!("vertex needs 3 finite coordinates, got `{content}`")));
                }
                vertices.push(Vec3::new(coords[0], coords[1], coords[2]));
            }
            "f" => {
                let mut polygon = Vec::new();
                for word in words {
                    let index_text = word.split('/').next().unwrap_or("");
                    let index: i64 = index_text
                        .parse()
                        .map_err(|_| err(format!("bad vertex reference `{word}`")))?;
                    let resolved = match index {
                        i if i > 0 => i - 1,
                        i if i < 0 => vertices.len() as i64 + i,
                        _ => return Err(err("vertex index 0 is invalid".into())),
                    };
                    if resolved < 0 || resolved >= vertices.len() as i64 {
                        return Err(err(format!("vertex index {index} out of range")));
                    }
                    polygon.push(resolved as u32);
                }
                if polygon.len() < 3 {
                    return Err(err(format!("face needs at least 3 vertices, got {}", polygon.len())));
                }
                summary.faces += 1;
                for k in 1..polygon.len() - 1 {
                    let t = [polygon[0], polygon[k], polygon[k + 1]];
                    let v0 = vertices[t[0] as usize];
                    let area = 0.5
                        * (vertices[t[1] as usize] - v0)
                            .cross(&(vertices[t[2] as usize] - v0))
                            .norm();
                    if area > MIN_TRIANGLE_AREA {
                        triangles.push(t);
                    } else {
                        summary.degenerate += 1;
                    }
                }
            }
            k if IGNORED.contains(&k) => {}
            other => return Err(err(format!("unsupported statement `{other}`"))),
        }
    }
    summary.vertices = vertices.len();
    summary.triangles = triangles.len();
    Ok((TriangleMesh::new(vertices, triangles)?, summary))
}

pub fn write_obj(mesh: &TriangleMesh, path: impl AsRef<Path>) -> std::io::Result<()> {
    let mut out = String::with_capacity(32 * (mesh.vertices.len() + mesh.triangles.len()));
    for v in &mesh.vertices {
        let _ = writeln!(out, "v {:.9} {:.9} {:.9}", v.x, v.y, v.z);
    }
    for t in &mesh.triangles {
        let _ = writeln!(out, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
    }
    std::fs::write(path, out)
}
