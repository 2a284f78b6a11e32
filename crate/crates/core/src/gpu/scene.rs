//! Host-side images of the engine's buffers.

use bytemuck::{Pod, Zeroable};
use nalgebra::Vector3;

use crate::collision::Collider;
use crate::mesh::{vertex_triangle_adjacency, ClothMesh, Spring, TriangleMesh};
use crate::params::{Integrator, ResponseMode, SimParams};

use super::layout::SceneCounts;

pub const PARAMS_UNIFORM_SIZE: u64 = std::mem::size_of::<ParamsUniform>() as u64;

pub const FLAG_PINNED: u32 = 1;
pub const FLAG_EXTERNAL: u32 = 2;

/// Uniform block. Field order and padding match `Params` in the shader.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Pod, Zeroable)]
pub struct ParamsUniform {
    /// xyz gravity, w = substep dt.
    pub gravity_dt: [f32; 4],
    /// xyz external acceleration for flagged nodes.
    pub external: [f32; 4],
    /// Structural, shear and bend stiffness, then damping.
    pub stiffness_damping: [f32; 4],
    /// Edge-test epsilon, response margin, fixed-point scale, padding.
    pub collision: [f32; 4],
    /// Nodes, springs, cloth triangles, obstacle triangles.
    pub counts: [u32; 4],
    /// Integrator (0 semi-implicit, 1 explicit), response mode (0 averaged,
    /// 1 raw sum), pair culling (0 off, 1 on), obstacle is a closed solid
    /// with outward normals (0 no, 1 yes).
    pub modes: [u32; 4],
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Pod, Zeroable)]
pub struct NodeAttr {
    pub mass: f32,
    pub flags: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Pod, Zeroable)]
pub struct GpuSpring {
    pub a: u32,
    pub b: u32,
    pub rest_length: f32,
    pub kind: u32,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Pod, Zeroable)]
pub struct GpuObstacleTriangle {
    /// Vertex indices and owned-edge mask.
    pub indices: [u32; 4],
    /// Unit normal, w unused.
    pub normal: [f32; 4],
}

/// Everything uploaded when an engine is built.
#[derive(Debug, Clone)]
pub struct SceneData {
    pub params: ParamsUniform,
    pub positions: Vec<f32>,
    pub velocities: Vec<f32>,
    pub node_attrs: Vec<NodeAttr>,
    pub springs: Vec<GpuSpring>,
    /// Cloth triangle indices with the owned-edge mask in the fourth slot.
    pub cloth_triangles: Vec<[u32; 4]>,
    pub tri_offsets: Vec<u32>,
    pub tri_list: Vec<u32>,
    pub obstacle_vertices: Vec<f32>,
    pub obstacle_triangles: Vec<GpuObstacleTriangle>,
}

fn flat(v: impl IntoIterator<Item = crate::Vec3>) -> Vec<f32> {
    v.into_iter().flat_map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect()
}

/// Rest length as the kernels will see it. A spring already at rest in the
/// uploaded geometry gets the single-precision length of its rounded
/// endpoints, so a rest cloth produces exactly zero force on the device
/// instead of a few quanta of rounding noise.
fn device_rest_length(mesh: &ClothMesh, spring: &Spring) -> f32 {
    let (a, b) = (mesh.nodes[spring.a as usize].position, mesh.nodes[spring.b as usize].position);
    let length = (b - a).norm();
    if (length - spring.rest_length).abs() <= 1e-9 * spring.rest_length {
        let (a, b): (Vector3<f32>, Vector3<f32>) = (a.cast(), b.cast());
        (b - a).norm()
    } else {
        spring.rest_length as f32
    }
}

impl SceneData {
    pub fn new(mesh: &ClothMesh, obstacle: &TriangleMesh, params: &SimParams) -> Self {
        let mut external = [0.0f32; 4];
        let mut flags: Vec<u32> = mesh.nodes.iter().map(|n| if n.pinned { FLAG_PINNED } else { 0 }).collect();
        if let Some(ext) = &params.external {
            external = [ext.acceleration.x as f32, ext.acceleration.y as f32, ext.acceleration.z as f32, 0.0];
            for &i in &ext.nodes {
                flags[i as usize] |= FLAG_EXTERNAL;
            }
        }
        let g = params.gravity;
        let k = params.stiffness;
        let scale = params.fixed_point_scale as f32;
        let collider = Collider::new(mesh, obstacle);
        let uniform = ParamsUniform {
            gravity_dt: [g.x as f32, g.y as f32, g.z as f32, params.step_dt() as f32],
            external,
            stiffness_damping: [k.structural as f32, k.shear as f32, k.bend as f32, params.damping as f32],
            collision: [params.epsilon as f32, params.response_margin as f32, scale, 0.0],
            counts: [
                mesh.nodes.len() as u32,
                mesh.springs.len() as u32,
                mesh.triangles.len() as u32,
                obstacle.triangles.len() as u32,
            ],
            modes: [
                match params.integrator {
                    Integrator::SemiImplicitEuler => 0,
                    Integrator::ExplicitEuler => 1,
                },
                match params.response_mode {
                    ResponseMode::Averaged => 0,
                    ResponseMode::RawSum => 1,
                },
                params.cull_pairs as u32,
                collider.obstacle_solid as u32,
            ],
        };

        let (tri_offsets, tri_list) = vertex_triangle_adjacency(mesh.nodes.len(), &mesh.triangles);
        Self {
            params: uniform,
            positions: flat(mesh.nodes.iter().map(|n| n.position)),
            velocities: flat(
                mesh.nodes
                    .iter()
                    .map(|n| if n.pinned { crate::Vec3::zeros() } else { n.velocity }),
            ),
            node_attrs: mesh
                .nodes
                .iter()
                .zip(flags)
                .map(|(n, flags)| NodeAttr {
                    mass: n.mass as f32,
                    flags,
                })
                .collect(),
            springs: mesh
                .springs
                .iter()
                .map(|s| GpuSpring {
                    a: s.a,
                    b: s.b,
                    rest_length: device_rest_length(mesh, s),
                    kind: s.kind.index() as u32,
                })
                .collect(),
            cloth_triangles: mesh
                .triangles
                .iter()
                .zip(&collider.cloth_edge_masks)
                .map(|(t, m)| [t[0], t[1], t[2], *m as u32])
                .collect(),
            tri_offsets,
            tri_list,
            obstacle_vertices: flat(obstacle.vertices.iter().copied()),
            obstacle_triangles: obstacle
                .triangles
                .iter()
                .zip(&obstacle.face_normals)
                .zip(&collider.obstacle_edge_masks)
                .map(|((t, n), m)| GpuObstacleTriangle {
                    indices: [t[0], t[1], t[2], *m as u32],
                    normal: [n.x as f32, n.y as f32, n.z as f32, 0.0],
                })
                .collect(),
        }
    }

    pub fn counts(&self) -> SceneCounts {
        SceneCounts {
            nodes: self.node_attrs.len() as u64,
            springs: self.springs.len() as u64,
            cloth_triangles: self.cloth_triangles.len() as u64,
            obstacle_vertices: (self.obstacle_vertices.len() / 3) as u64,
            obstacle_triangles: self.obstacle_triangles.len() as u64,
        }
    }
}
