//! Compute engine following the WebGPU compute model.
//!
//! The frame is a sequence of compute passes over storage buffers,
//! separated by barriers:
//!
//! ```text
//! zero-forces -> spring-force -> integrate -> collision-detect -> collision-respond   (per substep)
//! normal-update                                                                      (per frame)
//! ```
//!
//! Forces and collision responses are summed with 32-bit integer atomics in
//! fixed point, so results do not depend on invocation order. The kernels
//! are written in WGSL ([`SHADER_SOURCE`]); [`GpuDevice`] executes them on
//! the host, one invocation at a time within a workgroup and optionally
//! with workgroups spread over threads.

mod layout;
mod scene;
mod software;

use std::fmt;
use std::time::Instant;

use thiserror::Error;

pub use layout::{max_nodes_probe, BufferRole, BufferDesc, GpuBufferLayout, LimitViolation, ProbeReport, SceneCounts};
pub use scene::{GpuObstacleTriangle, GpuSpring, NodeAttr, ParamsUniform, SceneData, PARAMS_UNIFORM_SIZE};

use crate::fixed::FixedPointVec3;
use crate::io::{Backend, FrameStats};
use crate::mesh::{ClothMesh, TriangleMesh};
use crate::params::{ParamError, SimParams};
use crate::Vec3;
use software::{dispatch, Buffers};

/// WGSL source of the six entry points.
pub const SHADER_SOURCE: &str = include_str!("kernels.wgsl");

/// Environment variable choosing the adapter: `auto`, `software` or `hardware`.
pub const ADAPTER_ENV: &str = "CLOTH_GPU_ADAPTER";

/// Device limits relevant to the engine, named as in WebGPU.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceLimits {
    pub max_storage_buffer_binding_size: u64,
    pub max_uniform_buffer_binding_size: u64,
    pub max_buffer_size: u64,
    pub max_storage_buffers_per_shader_stage: u32,
    pub max_compute_workgroups_per_dimension: u32,
    pub max_compute_invocations_per_workgroup: u32,
    pub max_compute_workgroup_size_x: u32,
}

impl DeviceLimits {
    /// Default limits every WebGPU implementation must support.
    pub const fn webgpu_default() -> Self {
        Self {
            max_storage_buffer_binding_size: 128 << 20,
            max_uniform_buffer_binding_size: 64 << 10,
            max_buffer_size: 256 << 20,
            max_storage_buffers_per_shader_stage: 8,
            max_compute_workgroups_per_dimension: 65535,
            max_compute_invocations_per_workgroup: 256,
            max_compute_workgroup_size_x: 256,
        }
    }
}

impl Default for DeviceLimits {
    fn default() -> Self {
        Self::webgpu_default()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DeviceSelection {
    /// Hardware adapter if one exists, otherwise the software device.
    #[default]
    Auto,
    Software,
    Hardware,
}

impl DeviceSelection {
    pub fn parse(text: &str) -> Result<Self, GpuError> {
        match text.trim().to_ascii_lowercase().as_str() {
            "" | "auto" => Ok(Self::Auto),
            "software" | "cpu" => Ok(Self::Software),
            "hardware" => Ok(Self::Hardware),
            other => Err(GpuError::InvalidSelection(other.to_owned())),
        }
    }

    /// Reads [`ADAPTER_ENV`]; unset means [`DeviceSelection::Auto`].
    pub fn from_env() -> Result<Self, GpuError> {
        std::env::var(ADAPTER_ENV).map_or(Ok(Self::Auto), |v| Self::parse(&v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdapterKind {
    Hardware,
    Software,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AdapterInfo {
    pub name: String,
    pub kind: AdapterKind,
    /// Worker threads available to run workgroups concurrently.
    pub threads: usize,
}

impl fmt::Display for AdapterInfo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match self.kind {
            AdapterKind::Hardware => "hardware",
            AdapterKind::Software => "software",
        };
        write!(f, "{} ({kind}, {} threads)", self.name, self.threads)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GpuError {
    #[error("no {0} compute adapter available")]
    NoAdapter(&'static str),
    #[error("unknown adapter selection `{0}` (expected auto, software or hardware)")]
    InvalidSelection(String),
    #[error(
        "{role} needs {required} bytes but the device allows {limit}; \
         at most {max_nodes} cloth nodes fit next to this obstacle"
    )]
    Capacity {
        role: BufferRole,
        required: u64,
        limit: u64,
        max_nodes: u64,
    },
    #[error("workgroup size {size} is outside 1..={max}")]
    InvalidWorkgroupSize { size: u32, max: u32 },
    #[error("dispatch of {needed} workgroups exceeds {max} per dimension")]
    DispatchTooLarge { needed: u64, max: u32 },
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid cloth mesh: {0}")]
    InvalidMesh(String),
    #[error("{role} is not writable from the host")]
    ReadOnly { role: BufferRole },
    #[error("{role} holds {expected} words, got {actual}")]
    LengthMismatch { role: BufferRole, expected: usize, actual: usize },
    #[error("verification failed after frame {frame}: {message}")]
    Verification { frame: u64, message: String },
}

/// One compute pass of the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Pass {
    ZeroForces,
    SpringForce,
    Integrate,
    CollisionDetect,
    CollisionRespond,
    UpdateNormals,
}

impl Pass {
    pub const ALL: [Pass; 6] = [
        Pass::ZeroForces,
        Pass::SpringForce,
        Pass::Integrate,
        Pass::CollisionDetect,
        Pass::CollisionRespond,
        Pass::UpdateNormals,
    ];

    /// Entry point name in [`SHADER_SOURCE`].
    pub fn entry_point(self) -> &'static str {
        match self {
            Pass::ZeroForces => "zero_forces",
            Pass::SpringForce => "spring_force",
            Pass::Integrate => "integrate",
            Pass::CollisionDetect => "collision_detect",
            Pass::CollisionRespond => "collision_respond",
            Pass::UpdateNormals => "update_normals",
        }
    }

    /// Storage bindings the entry point uses, besides the uniform.
    pub fn bindings(self) -> &'static [BufferRole] {
        use BufferRole::*;
        match self {
            Pass::ZeroForces => &[ForcesFixedPoint],
            Pass::SpringForce => &[Positions, Velocities, ForcesFixedPoint, SpringTable],
            Pass::Integrate => &[Positions, PreviousPositions, Velocities, ForcesFixedPoint, NodeAttributes],
            Pass::CollisionDetect => &[
                Positions,
                PreviousPositions,
                TriangleTable,
                ObstacleVertices,
                ObstacleTriangles,
                ResponseAccumulator,
                ResponseCount,
            ],
            Pass::CollisionRespond => &[Positions, Velocities, NodeAttributes, ResponseAccumulator, ResponseCount],
            Pass::UpdateNormals => &[Positions, TriangleTable, Normals, VertexTriangleOffsets, VertexTriangleList],
        }
    }
}

/// A compute device: adapter description, limits and execution policy.
#[derive(Debug, Clone)]
pub struct GpuDevice {
    pub info: AdapterInfo,
    pub limits: DeviceLimits,
    parallel: bool,
}

impl GpuDevice {
    /// Opens the adapter requested by `selection`. This build has no driver
    /// for hardware adapters, so `Hardware` fails with
    /// [`GpuError::NoAdapter`] and `Auto` resolves to the software device.
    pub fn open(selection: DeviceSelection) -> Result<Self, GpuError> {
        match selection {
            DeviceSelection::Hardware => Err(GpuError::NoAdapter("hardware")),
            DeviceSelection::Auto | DeviceSelection::Software => Ok(Self::software(DeviceLimits::webgpu_default())),
        }
    }

    /// Software device reporting `limits`.
    pub fn software(limits: DeviceLimits) -> Self {
        Self {
            info: AdapterInfo {
                name: "software compute device".into(),
                kind: AdapterKind::Software,
                threads: rayon::current_num_threads(),
            },
            limits,
            parallel: true,
        }
    }

    /// Runs workgroups one after another on the calling thread.
    pub fn serial(mut self) -> Self {
        self.parallel = false;
        self.info.threads = 1;
        self
    }

    pub fn is_hardware(&self) -> bool {
        self.info.kind == AdapterKind::Hardware
    }
}

/// Built pipeline: uploaded buffers plus dispatch shapes for every pass.
#[derive(Debug)]
pub struct GpuEngine {
    device: GpuDevice,
    layout: GpuBufferLayout,
    buffers: Buffers,
    params: ParamsUniform,
    substeps: u32,
    workgroup_size: u32,
    frame: u64,
    hits_seen: u32,
    verify: bool,
    passes_checked: u64,
}

fn words<T: bytemuck::Pod>(data: &[T]) -> &[u32] {
    bytemuck::cast_slice(data)
}

impl GpuEngine {
    /// Checks the scene against the device, allocates and uploads every
    /// buffer and prepares the passes. With an empty obstacle the two
    /// collision passes are no-ops.
    pub fn build(
        device: GpuDevice,
        mesh: &ClothMesh,
        obstacle: &TriangleMesh,
        params: &SimParams,
    ) -> Result<Self, GpuError> {
        params.validate()?;
        mesh.validate().map_err(GpuError::InvalidMesh)?;
        let max_wg = device
            .limits
            .max_compute_invocations_per_workgroup
            .min(device.limits.max_compute_workgroup_size_x);
        if params.workgroup_size == 0 || params.workgroup_size > max_wg {
            return Err(GpuError::InvalidWorkgroupSize {
                size: params.workgroup_size,
                max: max_wg,
            });
        }
        let scene = SceneData::new(mesh, obstacle, params);
        let layout = GpuBufferLayout::new(scene.counts());
        if let Err(v) = layout.check(&device.limits) {
            let probe = max_nodes_probe(&device.limits, obstacle.vertices.len(), obstacle.triangles.len());
            return Err(GpuError::Capacity {
                role: v.role,
                required: v.required,
                limit: v.limit,
                max_nodes: probe.max_nodes,
            });
        }

        let buffers = Buffers::allocate(layout.buffers.iter().map(|b| (b.role, b.allocation_size())));
        let upload: [(BufferRole, &[u32]); 10] = [
            (BufferRole::Params, words(std::slice::from_ref(&scene.params))),
            (BufferRole::Positions, words(&scene.positions)),
            (BufferRole::PreviousPositions, words(&scene.positions)),
            (BufferRole::Velocities, words(&scene.velocities)),
            (BufferRole::NodeAttributes, words(&scene.node_attrs)),
            (BufferRole::SpringTable, words(&scene.springs)),
            (BufferRole::TriangleTable, words(&scene.cloth_triangles)),
            (BufferRole::ObstacleVertices, words(&scene.obstacle_vertices)),
            (BufferRole::ObstacleTriangles, words(&scene.obstacle_triangles)),
            (BufferRole::VertexTriangleOffsets, words(&scene.tri_offsets)),
        ];
        for (role, data) in upload {
            buffers.get(role).write(0, data);
        }
        buffers.get(BufferRole::VertexTriangleList).write(0, &scene.tri_list);

        let engine = Self {
            device,
            layout,
            buffers,
            params: scene.params,
            substeps: params.substeps,
            workgroup_size: params.workgroup_size,
            frame: 0,
            hits_seen: 0,
            verify: false,
            passes_checked: 0,
        };
        for pass in Pass::ALL {
            if !engine.is_noop(pass) {
                engine.workgroups(pass)?;
            }
        }
        engine.run_pass(Pass::UpdateNormals)?;
        Ok(engine)
    }

    pub fn device(&self) -> &GpuDevice {
        &self.device
    }

    pub fn layout(&self) -> &GpuBufferLayout {
        &self.layout
    }

    pub fn node_count(&self) -> usize {
        self.params.counts[0] as usize
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    /// Reads buffers back during every frame: forces after clearing,
    /// accumulators after the response pass, positions at the end. Any
    /// violation fails the step.
    pub fn set_verify(&mut self, on: bool) {
        self.verify = on;
    }

    pub fn collision_enabled(&self) -> bool {
        self.params.counts[2] > 0 && self.params.counts[3] > 0
    }

    /// Whether `pass` does no work for this scene.
    pub fn is_noop(&self, pass: Pass) -> bool {
        matches!(pass, Pass::CollisionDetect | Pass::CollisionRespond) && !self.collision_enabled()
    }

    fn one_dimensional(&self, items: u64) -> Result<[u32; 3], GpuError> {
        let max = self.device.limits.max_compute_workgroups_per_dimension as u64;
        let groups = items.div_ceil(self.workgroup_size as u64).max(1);
        let x = groups.min(max);
        let y = groups.div_ceil(x);
        if y > max {
            return Err(GpuError::DispatchTooLarge { needed: groups, max: max as u32 });
        }
        Ok([x as u32, y as u32, 1])
    }

    /// Workgroup grid for `pass`.
    pub fn workgroups(&self, pass: Pass) -> Result<[u32; 3], GpuError> {
        let c = self.params.counts;
        match pass {
            Pass::SpringForce => self.one_dimensional(c[1] as u64),
            Pass::CollisionDetect => {
                let max = self.device.limits.max_compute_workgroups_per_dimension as u64;
                let x = (c[2] as u64).div_ceil(self.workgroup_size as u64).max(1);
                let obstacle = (c[3] as u64).max(1);
                let y = obstacle.min(max);
                let z = obstacle.div_ceil(y);
                if x > max || z > max {
                    return Err(GpuError::DispatchTooLarge { needed: x.max(z), max: max as u32 });
                }
                Ok([x as u32, y as u32, z as u32])
            }
            _ => self.one_dimensional(c[0] as u64),
        }
    }

    /// Runs one pass to completion.
    pub fn run_pass(&self, pass: Pass) -> Result<(), GpuError> {
        if self.is_noop(pass) {
            return Ok(());
        }
        let groups = self.workgroups(pass)?;
        let b = &self.buffers;
        let p = &self.params;
        let (ws, par) = (self.workgroup_size, self.device.parallel);
        match pass {
            Pass::ZeroForces => dispatch(groups, ws, par, |inv| software::zero_forces(b, p, inv)),
            Pass::SpringForce => dispatch(groups, ws, par, |inv| software::spring_force_pass(b, p, inv)),
            Pass::Integrate => dispatch(groups, ws, par, |inv| software::integrate(b, p, inv)),
            Pass::CollisionDetect => dispatch(groups, ws, par, |inv| software::collision_detect(b, p, inv)),
            Pass::CollisionRespond => dispatch(groups, ws, par, |inv| software::collision_respond(b, p, inv)),
            Pass::UpdateNormals => dispatch(groups, ws, par, |inv| software::update_normals(b, p, inv)),
        }
        Ok(())
    }

    /// Submits one frame and waits for it. The collision-hit total is read
    /// after the clock stops.
    pub fn step(&mut self) -> Result<FrameStats, GpuError> {
        let started = Instant::now();
        for _ in 0..self.substeps {
            for pass in &Pass::ALL[..5] {
                self.run_pass(*pass)?;
                if self.verify {
                    self.check_pass(*pass)?;
                }
            }
        }
        self.run_pass(Pass::UpdateNormals)?;
        let elapsed = started.elapsed();
        self.frame += 1;

        let total = self.buffers.get(BufferRole::ResponseCount).load(self.node_count());
        let hits = total.wrapping_sub(self.hits_seen);
        self.hits_seen = total;
        if self.verify {
            if let Some(i) = self.positions().iter().position(|p| !p.iter().all(|c| c.is_finite())) {
                return Err(GpuError::Verification {
                    frame: self.frame,
                    message: format!("node {i} has a non-finite position"),
                });
            }
        }
        Ok(FrameStats::new(
            self.frame,
            elapsed,
            Backend::Gpu,
            self.node_count(),
            self.params.counts[1] as usize,
            self.params.counts[3] as usize,
            hits as u64,
        ))
    }

    /// Mid-frame readback: forces must be zero once cleared, and both
    /// collision accumulators must be zero once the response has run.
    fn check_pass(&mut self, pass: Pass) -> Result<(), GpuError> {
        let n = self.node_count();
        let dirty = match pass {
            Pass::ZeroForces => self.read_words(BufferRole::ForcesFixedPoint)[..3 * n]
                .iter()
                .any(|&w| w != 0)
                .then_some("force buffer not cleared before the spring pass"),
            Pass::CollisionRespond if !self.is_noop(pass) => {
                let sums = self.read_words(BufferRole::ResponseAccumulator)[..3 * n].iter().any(|&w| w != 0);
                let counts = self.read_words(BufferRole::ResponseCount)[..n].iter().any(|&w| w != 0);
                (sums || counts).then_some("collision accumulators not reset by the response pass")
            }
            _ => None,
        };
        if let Some(message) = dirty {
            return Err(GpuError::Verification {
                frame: self.frame + 1,
                message: message.to_string(),
            });
        }
        self.passes_checked += 1;
        Ok(())
    }

    /// Number of passes whose buffers were checked in verify mode.
    pub fn passes_checked(&self) -> u64 {
        self.passes_checked
    }

    /// Copies a whole buffer to the host as 32-bit words.
    pub fn read_words(&self, role: BufferRole) -> Vec<u32> {
        let desc = self.layout.desc(role);
        let mut out = vec![0u32; (desc.size / 4) as usize];
        self.buffers.get(role).read(&mut out);
        out
    }

    /// Overwrites a dynamic buffer from the host. Static tables and the
    /// uniform are fixed once the engine is built.
    pub fn write_words(&mut self, role: BufferRole, data: &[u32]) -> Result<(), GpuError> {
        use BufferRole::*;
        if !matches!(
            role,
            Positions | PreviousPositions | Velocities | ForcesFixedPoint | ResponseAccumulator | ResponseCount | Normals
        ) {
            return Err(GpuError::ReadOnly { role });
        }
        let expected = (self.layout.desc(role).size / 4) as usize;
        if data.len() != expected {
            return Err(GpuError::LengthMismatch {
                role,
                expected,
                actual: data.len(),
            });
        }
        self.buffers.get(role).write(0, data);
        Ok(())
    }

    fn read_vec3(&self, role: BufferRole) -> Vec<[f32; 3]> {
        self.read_words(role)
            .chunks_exact(3)
            .map(|c| [f32::from_bits(c[0]), f32::from_bits(c[1]), f32::from_bits(c[2])])
            .collect()
    }

    fn write_vec3(&mut self, role: BufferRole, data: &[[f32; 3]]) -> Result<(), GpuError> {
        let w: Vec<u32> = data.iter().flatten().map(|x| x.to_bits()).collect();
        self.write_words(role, &w)
    }

    pub fn positions(&self) -> Vec<[f32; 3]> {
        self.read_vec3(BufferRole::Positions)
    }

    pub fn positions_f64(&self) -> Vec<Vec3> {
        self.positions()
            .iter()
            .map(|p| Vec3::new(p[0] as f64, p[1] as f64, p[2] as f64))
            .collect()
    }

    pub fn set_positions(&mut self, data: &[[f32; 3]]) -> Result<(), GpuError> {
        self.write_vec3(BufferRole::Positions, data)
    }

    pub fn previous_positions(&self) -> Vec<[f32; 3]> {
        self.read_vec3(BufferRole::PreviousPositions)
    }

    pub fn set_previous_positions(&mut self, data: &[[f32; 3]]) -> Result<(), GpuError> {
        self.write_vec3(BufferRole::PreviousPositions, data)
    }

    pub fn velocities(&self) -> Vec<[f32; 3]> {
        self.read_vec3(BufferRole::Velocities)
    }

    pub fn set_velocities(&mut self, data: &[[f32; 3]]) -> Result<(), GpuError> {
        self.write_vec3(BufferRole::Velocities, data)
    }

    pub fn normals(&self) -> Vec<[f32; 3]> {
        self.read_vec3(BufferRole::Normals)
    }

    fn read_fixed(&self, role: BufferRole) -> Vec<FixedPointVec3> {
        bytemuck::cast_slice(&self.read_words(role)).to_vec()
    }

    /// Raw fixed-point force accumulator.
    pub fn forces_fixed(&self) -> Vec<FixedPointVec3> {
        self.read_fixed(BufferRole::ForcesFixedPoint)
    }

    /// Raw fixed-point collision response sums.
    pub fn response_accumulator(&self) -> Vec<FixedPointVec3> {
        self.read_fixed(BufferRole::ResponseAccumulator)
    }

    /// Per-node contact counts (without the trailing hit counter).
    pub fn response_counts(&self) -> Vec<i32> {
        let mut w = self.read_words(BufferRole::ResponseCount);
        w.pop();
        w.into_iter().map(|x| x as i32).collect()
    }

    /// Cumulative edge hits since the engine was built.
    pub fn total_hits(&self) -> u32 {
        self.buffers.get(BufferRole::ResponseCount).load(self.node_count())
    }

    pub fn set_response(&mut self, sums: &[FixedPointVec3], counts: &[i32]) -> Result<(), GpuError> {
        self.write_words(BufferRole::ResponseAccumulator, bytemuck::cast_slice(sums))?;
        let mut w: Vec<u32> = counts.iter().map(|&c| c as u32).collect();
        w.push(self.total_hits());
        self.write_words(BufferRole::ResponseCount, &w)
    }

    pub fn fixed_point_scale(&self) -> f32 {
        self.params.collision[2]
    }
}
