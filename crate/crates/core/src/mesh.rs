//! Cloth and obstacle meshes.

use std::collections::{HashMap, HashSet};

use nalgebra::{Isometry3, Point3, RealField, Vector3};
use thiserror::Error;

use crate::Vec3;

/// Triangles with an area at or below this are rejected as degenerate.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

/// Subdivision level whose icosphere is closest to the small sphere-class
/// obstacle (a few hundred vertices, about a thousand triangles).
pub const SPHERE_CLASS_SUBDIVISIONS: u32 = 3;

pub const MAX_ICOSPHERE_SUBDIVISIONS: u32 = 6;

#[derive(Debug, Error, PartialEq)]
pub enum MeshError {
    #[error("cloth grid must be at least 2x2, got {nx}x{ny}")]
    GridTooSmall { nx: usize, ny: usize },
    #[error("{name} must be positive and finite, got {value}")]
    NonPositive { name: &'static str, value: f64 },
    #[error("cloth grid of {nx}x{ny} nodes does not fit 32-bit indices")]
    GridTooLarge { nx: usize, ny: usize },
    #[error("pinned row {row} is outside a grid with {ny} rows")]
    PinnedRowOutOfRange { row: usize, ny: usize },
    #[error("triangle {triangle} references vertex {index} but the mesh has {count} vertices")]
    IndexOutOfRange {
        triangle: usize,
        index: u32,
        count: usize,
    },
    #[error("triangle {triangle} is degenerate (area {area:e})")]
    DegenerateTriangle { triangle: usize, area: f64 },
    #[error("icosphere subdivisions must be in 0..={MAX_ICOSPHERE_SUBDIVISIONS}, got {0}")]
    InvalidSubdivisions(u32),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Node {
    pub position: Vec3,
    pub velocity: Vec3,
    /// Kilograms, strictly positive.
    pub mass: f64,
    pub pinned: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SpringKind {
    /// Grid 4-neighbours.
    Structural,
    /// Diagonal neighbours.
    Shear,
    /// Neighbours two apart along a row or column.
    Bend,
}

impl SpringKind {
    pub const ALL: [SpringKind; 3] = [SpringKind::Structural, SpringKind::Shear, SpringKind::Bend];

    pub fn index(self) -> usize {
        match self {
            SpringKind::Structural => 0,
            SpringKind::Shear => 1,
            SpringKind::Bend => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spring {
    pub a: u32,
    pub b: u32,
    pub rest_length: f64,
    pub kind: SpringKind,
}

/// Which grid rows are pinned in place.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PinnedRows {
    #[default]
    None,
    /// Row 0, which becomes the top edge of a hanging cloth.
    Top,
    Rows(Vec<usize>),
}

impl PinnedRows {
    fn resolve(&self, ny: usize) -> Result<Vec<bool>, MeshError> {
        let mut rows = vec![false; ny];
        match self {
            PinnedRows::None => {}
            PinnedRows::Top => rows[0] = true,
            PinnedRows::Rows(list) => {
                for &row in list {
                    if row >= ny {
                        return Err(MeshError::PinnedRowOutOfRange { row, ny });
                    }
                    rows[row] = true;
                }
            }
        }
        Ok(rows)
    }
}

/// Spring totals per kind for an `nx` x `ny` grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpringCounts {
    pub structural: usize,
    pub shear: usize,
    pub bend: usize,
}

impl SpringCounts {
    pub fn total(&self) -> usize {
        self.structural + self.shear + self.bend
    }
}

/// Closed-form spring counts of [`generate_cloth_grid`].
pub fn spring_count_formula(nx: usize, ny: usize) -> SpringCounts {
    SpringCounts {
        structural: nx * (ny - 1) + ny * (nx - 1),
        shear: 2 * (nx - 1) * (ny - 1),
        bend: nx * ny.saturating_sub(2) + ny * nx.saturating_sub(2),
    }
}

/// Simulation-ready cloth. Node `(i, j)` (column `i`, row `j`) lives at
/// index `j * nx + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ClothMesh {
    pub nodes: Vec<Node>,
    pub springs: Vec<Spring>,
    pub triangles: Vec<[u32; 3]>,
    pub nx: usize,
    pub ny: usize,
}

/// Builds a flat `nx` x `ny` cloth in the xz-plane centred on the origin.
///
/// Columns run along +x over `width`, rows along +z over `height`. Face
/// normals of the generated triangles point to +y.
pub fn generate_cloth_grid(
    nx: usize,
    ny: usize,
    width: f64,
    height: f64,
    total_mass: f64,
    pinned: &PinnedRows,
) -> Result<ClothMesh, MeshError> {
    if nx < 2 || ny < 2 {
        return Err(MeshError::GridTooSmall { nx, ny });
    }
    for (name, value) in [("width", width), ("height", height), ("total mass", total_mass)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(MeshError::NonPositive { name, value });
        }
    }
    if nx.checked_mul(ny).is_none_or(|n| n > u32::MAX as usize) {
        return Err(MeshError::GridTooLarge { nx, ny });
    }
    let pinned_rows = pinned.resolve(ny)?;

    let mass = total_mass / (nx * ny) as f64;
    let dx = width / (nx - 1) as f64;
    let dz = height / (ny - 1) as f64;
    let mut nodes = Vec::with_capacity(nx * ny);
    for (j, &row_pinned) in pinned_rows.iter().enumerate() {
        for i in 0..nx {
            nodes.push(Node {
                position: Vec3::new(-0.5 * width + i as f64 * dx, 0.0, -0.5 * height + j as f64 * dz),
                velocity: Vec3::zeros(),
                mass,
                pinned: row_pinned,
            });
        }
    }

    let id = |i: usize, j: usize| (j * nx + i) as u32;
    let counts = spring_count_formula(nx, ny);
    let mut springs = Vec::with_capacity(counts.total());
    let mut push = |a: u32, b: u32, kind| {
        let rest_length = (nodes[b as usize].position - nodes[a as usize].position).norm();
        springs.push(Spring { a, b, rest_length, kind });
    };
    for j in 0..ny {
        for i in 0..nx {
            if i + 1 < nx {
                push(id(i, j), id(i + 1, j), SpringKind::Structural);
            }
            if j + 1 < ny {
                push(id(i, j), id(i, j + 1), SpringKind::Structural);
            }
        }
    }
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            push(id(i, j), id(i + 1, j + 1), SpringKind::Shear);
            push(id(i + 1, j), id(i, j + 1), SpringKind::Shear);
        }
    }
    for j in 0..ny {
        for i in 0..nx {
            if i + 2 < nx {
                push(id(i, j), id(i + 2, j), SpringKind::Bend);
            }
            if j + 2 < ny {
                push(id(i, j), id(i, j + 2), SpringKind::Bend);
            }
        }
    }

    let mut triangles = Vec::with_capacity(2 * (nx - 1) * (ny - 1));
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let (a, b, c, d) = (id(i, j), id(i + 1, j), id(i, j + 1), id(i + 1, j + 1));
            triangles.push([a, c, b]);
            triangles.push([b, c, d]);
        }
    }

    Ok(ClothMesh {
        nodes,
        springs,
        triangles,
        nx,
        ny,
    })
}

impl ClothMesh {
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn positions(&self) -> Vec<Vec3> {
        self.nodes.iter().map(|n| n.position).collect()
    }

    /// Applies a rigid motion to every node. Rest lengths are unaffected.
    pub fn rigid_transform(&mut self, iso: &Isometry3<f64>) {
        for node in &mut self.nodes {
            node.position = iso.transform_point(&Point3::from(node.position)).coords;
            node.velocity = iso.transform_vector(&node.velocity);
        }
    }

    pub fn translate(&mut self, offset: Vec3) {
        for node in &mut self.nodes {
            node.position += offset;
        }
    }

    pub fn spring_counts(&self) -> SpringCounts {
        let mut counts = SpringCounts {
            structural: 0,
            shear: 0,
            bend: 0,
        };
        for s in &self.springs {
            match s.kind {
                SpringKind::Structural => counts.structural += 1,
                SpringKind::Shear => counts.shear += 1,
                SpringKind::Bend => counts.bend += 1,
            }
        }
        counts
    }

    /// Largest number of springs incident to any node.
    pub fn max_node_degree(&self) -> usize {
        let mut degree = vec![0usize; self.nodes.len()];
        for s in &self.springs {
            degree[s.a as usize] += 1;
            degree[s.b as usize] += 1;
        }
        degree.into_iter().max().unwrap_or(0)
    }

    /// Checks the structural invariants; returns a description of the first
    /// violation.
    pub fn validate(&self) -> Result<(), String> {
        let n = self.nodes.len();
        if n != self.nx * self.ny {
            return Err(format!("{} nodes for a {}x{} grid", n, self.nx, self.ny));
        }
        if let Some(i) = self.nodes.iter().position(|node| !(node.mass > 0.0)) {
            return Err(format!("node {i} has non-positive mass"));
        }
        let mut seen = HashSet::new();
        for (k, s) in self.springs.iter().enumerate() {
            if s.a == s.b || s.a as usize >= n || s.b as usize >= n {
                return Err(format!("spring {k} has invalid endpoints {}-{}", s.a, s.b));
            }
            let key = (s.a.min(s.b), s.a.max(s.b), s.kind);
            if !seen.insert(key) {
                return Err(format!("spring {k} duplicates {key:?}"));
            }
        }
        for (k, t) in self.triangles.iter().enumerate() {
            if t.iter().any(|&v| v as usize >= n) || t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
                return Err(format!("triangle {k} has invalid indices {t:?}"));
            }
        }
        Ok(())
    }
}

/// Static obstacle surface.
#[derive(Debug, Clone, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    pub face_normals: Vec<Vec3>,
}

impl TriangleMesh {
    /// Validates indices, rejects degenerate triangles and computes the face
    /// normals from the counter-clockwise winding.
    pub fn new(vertices: Vec<Vec3>, triangles: Vec<[u32; 3]>) -> Result<Self, MeshError> {
        let mut face_normals = Vec::with_capacity(triangles.len());
        for (k, t) in triangles.iter().enumerate() {
            if let Some(&index) = t.iter().find(|&&v| v as usize >= vertices.len()) {
                return Err(MeshError::IndexOutOfRange {
                    triangle: k,
                    index,
                    count: vertices.len(),
                });
            }
            let cross = triangle_cross(&vertices, t);
            let area = 0.5 * cross.norm();
            if !(area > MIN_TRIANGLE_AREA) {
                return Err(MeshError::DegenerateTriangle { triangle: k, area });
            }
            face_normals.push(cross.normalize());
        }
        Ok(Self {
            vertices,
            triangles,
            face_normals,
        })
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            triangles: Vec::new(),
            face_normals: Vec::new(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }

    pub fn transformed(&self, iso: &Isometry3<f64>, scale: f64) -> Self {
        let vertices = self
            .vertices
            .iter()
            .map(|v| iso.transform_point(&Point3::from(v * scale)).coords)
            .collect();
        let face_normals = self.face_normals.iter().map(|n| iso.transform_vector(n)).collect();
        Self {
            vertices,
            triangles: self.triangles.clone(),
            face_normals,
        }
    }

    /// Axis-aligned bounds `(min, max)`; `None` for a mesh without vertices.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = *self.vertices.first()?;
        Some(self.vertices.iter().fold((first, first), |(lo, hi), v| (lo.inf(v), hi.sup(v))))
    }

    /// True when the triangles close up into a consistently wound surface
    /// (every directed edge appears once, its reverse once) enclosing a
    /// positive volume, so the face normals point outward.
    pub fn is_closed_outward(&self) -> bool {
        if self.triangles.is_empty() {
            return false;
        }
        let mut directed = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                *directed.entry((t[k], t[(k + 1) % 3])).or_insert(0u32) += 1;
            }
        }
        let paired = directed
            .iter()
            .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1));
        // Six times the signed volume, from the divergence theorem.
        let volume: f64 = self
            .triangles
            .iter()
            .map(|t| {
                let [a, b, c] = t.map(|v| self.vertices[v as usize]);
                a.dot(&b.cross(&c))
            })
            .sum();
        paired && volume > 0.0
    }

    /// Each undirected edge paired with the number of triangles using it.
    pub fn edge_use_counts(&self) -> HashMap<(u32, u32), usize> {
        let mut counts = HashMap::new();
        for t in &self.triangles {
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                *counts.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        counts
    }
}

fn triangle_cross(vertices: &[Vec3], t: &[u32; 3]) -> Vec3 {
    let v0 = vertices[t[0] as usize];
    (vertices[t[1] as usize] - v0).cross(&(vertices[t[2] as usize] - v0))
}

/// Watertight icosphere of the given radius centred on the origin, with
/// outward-facing triangles.
pub fn generate_icosphere(subdivisions: u32, radius: f64) -> Result<TriangleMesh, MeshError> {
    if subdivisions > MAX_ICOSPHERE_SUBDIVISIONS {
        return Err(MeshError::InvalidSubdivisions(subdivisions));
    }
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(MeshError::NonPositive {
            name: "radius",
            value: radius,
        });
    }
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let mut vertices: Vec<Vec3> = [
        (-1.0, phi, 0.0),
        (1.0, phi, 0.0),
        (-1.0, -phi, 0.0),
        (1.0, -phi, 0.0),
        (0.0, -1.0, phi),
        (0.0, 1.0, phi),
        (0.0, -1.0, -phi),
        (0.0, 1.0, -phi),
        (phi, 0.0, -1.0),
        (phi, 0.0, 1.0),
        (-phi, 0.0, -1.0),
        (-phi, 0.0, 1.0),
    ]
    .iter()
    .map(|&(x, y, z)| Vec3::new(x, y, z).normalize())
    .collect();
    let mut triangles: Vec<[u32; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];

    for _ in 0..subdivisions {
        let mut midpoints: HashMap<(u32, u32), u32> = HashMap::new();
        let mut midpoint = |a: u32, b: u32, vertices: &mut Vec<Vec3>| {
            *midpoints.entry((a.min(b), a.max(b))).or_insert_with(|| {
                let m = (vertices[a as usize] + vertices[b as usize]).normalize();
                vertices.push(m);
                (vertices.len() - 1) as u32
            })
        };
        let mut next = Vec::with_capacity(triangles.len() * 4);
        for [a, b, c] in triangles {
            let ab = midpoint(a, b, &mut vertices);
            let bc = midpoint(b, c, &mut vertices);
            let ca = midpoint(c, a, &mut vertices);
            next.extend_from_slice(&[[a, ab, ca], [b, bc, ab], [c, ca, bc], [ab, bc, ca]]);
        }
        triangles = next;
    }

    for v in &mut vertices {
        *v *= radius;
    }
    TriangleMesh::new(vertices, triangles)
}

/// Per-vertex normals: the normalized sum of unit normals of incident faces.
/// Vertices whose sum vanishes get `+y`.
pub fn compute_vertex_normals<T: RealField + Copy>(
    positions: &[Vector3<T>],
    triangles: &[[u32; 3]],
) -> Vec<Vector3<T>> {
    let mut sums = vec![Vector3::zeros(); positions.len()];
    for t in triangles {
        let v0 = positions[t[0] as usize];
        let cross = (positions[t[1] as usize] - v0).cross(&(positions[t[2] as usize] - v0));
        if let Some(n) = cross.try_normalize(T::zero()) {
            for &v in t {
                sums[v as usize] += n;
            }
        }
    }
    sums.into_iter()
        .map(|s| s.try_normalize(T::zero()).unwrap_or_else(Vector3::y))
        .collect()
}

/// Marks which edges of each triangle it "owns": bit `k` covers edge
/// `(t[k], t[(k + 1) % 3])` and is set on exactly one triangle per distinct
/// undirected edge (the first in index order).
pub fn edge_owner_masks(triangles: &[[u32; 3]]) -> Vec<u8> {
    let mut seen = HashSet::new();
    triangles
        .iter()
        .map(|t| {
            let mut mask = 0u8;
            for k in 0..3 {
                let (a, b) = (t[k], t[(k + 1) % 3]);
                if seen.insert((a.min(b), a.max(b))) {
                    mask |= 1 << k;
                }
            }
            mask
        })
        .collect()
}

/// Compressed vertex-to-triangle adjacency: triangles incident to vertex `v`
/// are `list[offsets[v]..offsets[v + 1]]`.
pub fn vertex_triangle_adjacency(vertex_count: usize, triangles: &[[u32; 3]]) -> (Vec<u32>, Vec<u32>) {
    let mut offsets = vec![0u32; vertex_count + 1];
    for t in triangles {
        for &v in t {
            offsets[v as usize + 1] += 1;
        }
    }
    for i in 0..vertex_count {
        offsets[i + 1] += offsets[i];
    }
    let mut cursor = offsets.clone();
    let mut list = vec![0u32; 3 * triangles.len()];
    for (k, t) in triangles.iter().enumerate() {
        for &v in t {
            list[cursor[v as usize] as usize] = k as u32;
            cursor[v as usize] += 1;
        }
    }
    (offsets, list)
}
