use std::fmt::Write as _;

use cloth_core::gpu::{max_nodes_probe, BufferRole, DeviceLimits, DeviceSelection, GpuBufferLayout, GpuDevice, ProbeReport, SceneCounts};

use crate::CliError;

/// Storage-binding ceiling every WebGPU device supports.
pub const BASELINE_BINDING_LIMIT: u64 = 128 << 20;

#[derive(Debug, Clone)]
pub struct ProbeOutput {
    pub adapter: String,
    pub limits: DeviceLimits,
    pub report: ProbeReport,
    /// Same probe at [`BASELINE_BINDING_LIMIT`], for comparison.
    pub baseline: ProbeReport,
    pub obstacle_vertices: usize,
    pub obstacle_triangles: usize,
}

/// Layout arithmetic in words; `n` is the side of a square grid.
pub const LAYOUT_FORMULA: &str = "\
per node: positions, previous positions, velocities, forces, response sums, normals 12 B each; \
node attributes 8 B; response count and vertex->triangle offsets 4 B each (n^2 + 1 entries)
per spring: 16 B, springs = 2n(n-1) + 2(n-1)^2 + 2n(n-2)
per cloth triangle: 16 B in the triangle table and 12 B in the vertex->triangle list, triangles = 2(n-1)^2
obstacle: 12 B per vertex, 32 B per triangle
every binding must fit max_storage_buffer_binding_size and max_buffer_size";

/// Opens the selected adapter, optionally lowers its storage-binding limit,
/// and finds the largest square cloth that fits next to the obstacle.
pub fn probe_limits(
    selection: DeviceSelection,
    binding_limit: Option<u64>,
    obstacle_vertices: usize,
    obstacle_triangles: usize,
) -> Result<ProbeOutput, CliError> {
    let device = GpuDevice::open(selection)?;
    let mut limits = device.limits;
    if let Some(limit) = binding_limit {
        limits.max_storage_buffer_binding_size = limit;
    }
    let baseline_limits = DeviceLimits {
        max_storage_buffer_binding_size: BASELINE_BINDING_LIMIT,
        max_buffer_size: limits.max_buffer_size.max(BASELINE_BINDING_LIMIT),
        ..limits
    };
    Ok(ProbeOutput {
        adapter: device.info.to_string(),
        report: max_nodes_probe(&limits, obstacle_vertices, obstacle_triangles),
        baseline: max_nodes_probe(&baseline_limits, obstacle_vertices, obstacle_triangles),
        limits,
        obstacle_vertices,
        obstacle_triangles,
    })
}

impl ProbeOutput {
    pub fn render(&self) -> String {
        let l = &self.limits;
        let mut out = String::new();
        let _ = writeln!(out, "adapter: {}", self.adapter);
        let _ = writeln!(out, "max_storage_buffer_binding_size: {}", l.max_storage_buffer_binding_size);
        let _ = writeln!(out, "max_buffer_size: {}", l.max_buffer_size);
        let _ = writeln!(out, "max_uniform_buffer_binding_size: {}", l.max_uniform_buffer_binding_size);
        let _ = writeln!(out, "max_storage_buffers_per_shader_stage: {}", l.max_storage_buffers_per_shader_stage);
        let _ = writeln!(out, "max_compute_workgroups_per_dimension: {}", l.max_compute_workgroups_per_dimension);
        let _ = writeln!(out, "max_compute_invocations_per_workgroup: {}", l.max_compute_invocations_per_workgroup);
        let _ = writeln!(
            out,
            "obstacle: {} vertices, {} triangles",
            self.obstacle_vertices, self.obstacle_triangles
        );
        let r = &self.report;
        let _ = writeln!(out, "max nodes: {} ({}x{} grid)", r.max_nodes, r.grid_side, r.grid_side);
        if let Some(role) = r.limiting_role {
            let _ = writeln!(out, "limiting binding: {role}");
        }
        if r.grid_side >= 2 {
            let layout = GpuBufferLayout::new(SceneCounts::for_grid(
                r.grid_side as usize,
                r.grid_side as usize,
                self.obstacle_vertices,
                self.obstacle_triangles,
            ));
            let _ = writeln!(out, "buffers at the maximum grid ({} bytes in total):", layout.total_size());
            for role in BufferRole::ALL {
                let b = layout.desc(role);
                let _ = writeln!(out, "  {:>2} {:<24} {:>4} B x {:>9} = {:>11} B", role.binding(), role.to_string(), b.stride, b.count, b.size);
            }
        }
        let _ = writeln!(out, "layout:\n{LAYOUT_FORMULA}");
        let _ = writeln!(
            out,
            "at the 128 MiB baseline binding ceiling: {} nodes ({}x{} grid)",
            self.baseline.max_nodes, self.baseline.grid_side, self.baseline.grid_side
        );
        out
    }
}
