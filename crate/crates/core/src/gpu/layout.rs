//! Storage-buffer layout shared by every compute backend.
//!
//! Binding table (group 0):
//!
//! | binding | role                    | element                         | stride |
//! |---------|-------------------------|---------------------------------|--------|
//! | 0       | params (uniform)        | `Params`                        | 96     |
//! | 1       | positions               | 3 x f32                         | 12     |
//! | 2       | previous positions      | 3 x f32                         | 12     |
//! | 3       | velocities              | 3 x f32                         | 12     |
//! | 4       | forces (fixed point)    | 3 x atomic i32                  | 12     |
//! | 5       | node attributes         | mass f32, flags u32             | 8      |
//! | 6       | spring table            | a, b u32, rest f32, kind u32    | 16     |
//! | 7       | cloth triangles         | 3 x u32 + owned-edge mask       | 16     |
//! | 8       | obstacle vertices       | 3 x f32                         | 12     |
//! | 9       | obstacle triangles      | 3 x u32 + mask, normal 4 x f32  | 32     |
//! | 10      | response accumulator    | 3 x atomic i32                  | 12     |
//! | 11      | response count          | atomic i32 (+1 hit counter)     | 4      |
//! | 12      | vertex normals          | 3 x f32                         | 12     |
//! | 13      | vertex->triangle offsets| u32 (nodes + 1)                 | 4      |
//! | 14      | vertex->triangle list   | u32 (3 per triangle)            | 4      |
//!
//! Three-component arrays are flat `array<f32>` / `array<atomic<i32>>`
//! so their stride is 12 bytes with 4-byte alignment; WGSL `vec3` would
//! pad to 16.

use std::fmt;

use super::scene::PARAMS_UNIFORM_SIZE;
use super::DeviceLimits;
use crate::mesh::spring_count_formula;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BufferRole {
    Params,
    Positions,
    PreviousPositions,
    Velocities,
    ForcesFixedPoint,
    NodeAttributes,
    SpringTable,
    TriangleTable,
    ObstacleVertices,
    ObstacleTriangles,
    ResponseAccumulator,
    ResponseCount,
    Normals,
    VertexTriangleOffsets,
    VertexTriangleList,
}

impl BufferRole {
    pub const ALL: [BufferRole; 15] = [
        BufferRole::Params,
        BufferRole::Positions,
        BufferRole::PreviousPositions,
        BufferRole::Velocities,
        BufferRole::ForcesFixedPoint,
        BufferRole::NodeAttributes,
        BufferRole::SpringTable,
        BufferRole::TriangleTable,
        BufferRole::ObstacleVertices,
        BufferRole::ObstacleTriangles,
        BufferRole::ResponseAccumulator,
        BufferRole::ResponseCount,
        BufferRole::Normals,
        BufferRole::VertexTriangleOffsets,
        BufferRole::VertexTriangleList,
    ];

    pub fn binding(self) -> u32 {
        self as u32
    }

    pub fn stride(self) -> u64 {
        match self {
            BufferRole::Params => PARAMS_UNIFORM_SIZE,
            BufferRole::NodeAttributes => 8,
            BufferRole::SpringTable | BufferRole::TriangleTable => 16,
            BufferRole::ObstacleTriangles => 32,
            BufferRole::ResponseCount | BufferRole::VertexTriangleOffsets | BufferRole::VertexTriangleList => 4,
            _ => 12,
        }
    }

    pub fn is_uniform(self) -> bool {
        self == BufferRole::Params
    }
}

impl fmt::Display for BufferRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            BufferRole::Params => "params",
            BufferRole::Positions => "positions",
            BufferRole::PreviousPositions => "previous_positions",
            BufferRole::Velocities => "velocities",
            BufferRole::ForcesFixedPoint => "forces_fixed_point",
            BufferRole::NodeAttributes => "node_attributes",
            BufferRole::SpringTable => "spring_table",
            BufferRole::TriangleTable => "triangle_table",
            BufferRole::ObstacleVertices => "obstacle_vertices",
            BufferRole::ObstacleTriangles => "obstacle_triangles",
            BufferRole::ResponseAccumulator => "response_accumulator",
            BufferRole::ResponseCount => "response_count",
            BufferRole::Normals => "normals",
            BufferRole::VertexTriangleOffsets => "vertex_triangle_offsets",
            BufferRole::VertexTriangleList => "vertex_triangle_list",
        };
        f.write_str(name)
    }
}

/// Element counts that determine every buffer size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SceneCounts {
    pub nodes: u64,
    pub springs: u64,
    pub cloth_triangles: u64,
    pub obstacle_vertices: u64,
    pub obstacle_triangles: u64,
}

impl SceneCounts {
    /// Counts for an `nx` x `ny` generated cloth grid.
    pub fn for_grid(nx: usize, ny: usize, obstacle_vertices: usize, obstacle_triangles: usize) -> Self {
        Self {
            nodes: (nx * ny) as u64,
            springs: spring_count_formula(nx, ny).total() as u64,
            cloth_triangles: (2 * (nx - 1) * (ny - 1)) as u64,
            obstacle_vertices: obstacle_vertices as u64,
            obstacle_triangles: obstacle_triangles as u64,
        }
    }

    pub fn element_count(&self, role: BufferRole) -> u64 {
        match role {
            BufferRole::Params => 1,
            BufferRole::SpringTable => self.springs,
            BufferRole::TriangleTable => self.cloth_triangles,
            BufferRole::VertexTriangleList => 3 * self.cloth_triangles,
            BufferRole::ObstacleVertices => self.obstacle_vertices,
            BufferRole::ObstacleTriangles => self.obstacle_triangles,
            BufferRole::ResponseCount | BufferRole::VertexTriangleOffsets => self.nodes + 1,
            _ => self.nodes,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferDesc {
    pub role: BufferRole,
    pub stride: u64,
    pub count: u64,
    /// `stride * count`.
    pub size: u64,
}

impl BufferDesc {
    /// Bytes actually allocated: empty buffers still get one 16-byte block
    /// because zero-sized bindings are not allowed.
    pub fn allocation_size(&self) -> u64 {
        self.size.max(16).next_multiple_of(4)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GpuBufferLayout {
    pub counts: SceneCounts,
    pub buffers: Vec<BufferDesc>,
}

/// Which limit a layout broke.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LimitViolation {
    pub role: BufferRole,
    pub required: u64,
    pub limit: u64,
}

impl GpuBufferLayout {
    pub fn new(counts: SceneCounts) -> Self {
        let buffers = BufferRole::ALL
            .iter()
            .map(|&role| {
                let stride = role.stride();
                let count = counts.element_count(role);
                BufferDesc {
                    role,
                    stride,
                    count,
                    size: stride * count,
                }
            })
            .collect();
        Self { counts, buffers }
    }

    pub fn desc(&self, role: BufferRole) -> &BufferDesc {
        &self.buffers[role as usize]
    }

    pub fn total_size(&self) -> u64 {
        self.buffers.iter().map(BufferDesc::allocation_size).sum()
    }

    /// The storage buffer with the largest binding.
    pub fn largest_storage(&self) -> &BufferDesc {
        self.buffers
            .iter()
            .filter(|b| !b.role.is_uniform())
            .max_by_key(|b| b.size)
            .expect("layout has storage buffers")
    }

    /// First buffer exceeding its binding or allocation limit.
    pub fn check(&self, limits: &DeviceLimits) -> Result<(), LimitViolation> {
        for b in &self.buffers {
            let limit = if b.role.is_uniform() {
                limits.max_uniform_buffer_binding_size
            } else {
                limits.max_storage_buffer_binding_size
            }
            .min(limits.max_buffer_size);
            if b.allocation_size() > limit {
                return Err(LimitViolation {
                    role: b.role,
                    required: b.allocation_size(),
                    limit,
                });
            }
        }
        Ok(())
    }
}

/// Outcome of [`max_nodes_probe`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProbeReport {
    /// Node count of the largest square grid that fits; 0 if none does.
    pub max_nodes: u64,
    pub grid_side: u64,
    /// Binding that fails first when the grid grows by one row and column.
    pub limiting_role: Option<BufferRole>,
    /// Sum of all allocations at the reported grid.
    pub total_bytes: u64,
    pub limits: DeviceLimits,
}

/// Largest square cloth grid whose buffers fit `limits` next to an obstacle
/// with the given vertex and triangle counts (binary search on the side).
pub fn max_nodes_probe(limits: &DeviceLimits, obstacle_vertices: usize, obstacle_triangles: usize) -> ProbeReport {
    let layout = |n: u64| {
        GpuBufferLayout::new(SceneCounts::for_grid(
            n as usize,
            n as usize,
            obstacle_vertices,
            obstacle_triangles,
        ))
    };
    let fits = |n: u64| layout(n).check(limits).is_ok();

    if !fits(2) {
        return ProbeReport {
            max_nodes: 0,
            grid_side: 0,
            limiting_role: layout(2).check(limits).err().map(|v| v.role),
            total_bytes: 0,
            limits: *limits,
        };
    }
    let mut lo = 2u64;
    let mut hi = 4u64;
    while fits(hi) {
        lo = hi;
        hi *= 2;
    }
    // Invariant: fits(lo) && !fits(hi).
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if fits(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    ProbeReport {
        max_nodes: lo * lo,
        grid_side: lo,
        limiting_role: layout(hi).check(limits).err().map(|v| v.role),
        total_bytes: layout(lo).total_size(),
        limits: *limits,
    }
}
