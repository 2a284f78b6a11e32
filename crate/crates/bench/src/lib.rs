//! Fixtures shared by the benchmarks.

use cloth_core::gpu::{DeviceSelection, GpuDevice};
use cloth_core::mesh::generate_icosphere;
use cloth_core::scene::{self, Scene};
use cloth_core::{CpuSolver, GpuEngine, SimParams, TriangleMesh, Vec3};

/// Hanging cloth advanced a few frames so its springs carry load.
pub fn loaded_hanging(n: usize) -> CpuSolver {
    let s = scene::hanging(n, n, SimParams::default()).expect("valid grid");
    let mut solver = CpuSolver::new(s.mesh, None, s.params).expect("valid scene");
    for _ in 0..5 {
        solver.step().expect("stable start");
    }
    solver
}

pub fn drop_scene(n: usize) -> Scene {
    scene::drop(n, n, generate_icosphere(3, 0.25).expect("valid sphere"), SimParams::default()).expect("valid grid")
}

pub fn cpu_solver(s: &Scene) -> CpuSolver {
    CpuSolver::new(s.mesh.clone(), s.obstacle.clone(), s.params.clone()).expect("valid scene")
}

pub fn gpu_engine(s: &Scene) -> GpuEngine {
    let device = GpuDevice::open(DeviceSelection::Auto).expect("auto selection always yields a device");
    GpuEngine::build(device, &s.mesh, s.obstacle.as_ref().unwrap_or(&TriangleMesh::empty()), &s.params)
        .expect("scene fits the device")
}

/// Edge/triangle pairs on a lattice around one triangle: roughly a third
/// cross it, the rest pass beside it or stop short.
pub fn edge_pairs(count: usize) -> Vec<(Vec3, Vec3, [Vec3; 3])> {
    let tri = [Vec3::new(-1.0, -1.0, 0.0), Vec3::new(1.0, -1.0, 0.0), Vec3::new(0.0, 1.0, 0.0)];
    let side = (count as f64).sqrt().ceil() as usize;
    (0..count)
        .map(|i| {
            let x = -1.5 + 3.0 * (i % side) as f64 / side as f64;
            let y = -1.5 + 3.0 * (i / side) as f64 / side as f64;
            let reach = if i % 3 == 0 { -0.2 } else { 0.7 };
            (Vec3::new(x, y, -0.5), Vec3::new(x + 0.1, y - 0.1, reach), tri)
        })
        .collect()
}
