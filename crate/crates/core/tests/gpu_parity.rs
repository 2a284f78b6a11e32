//! The compute engine against the double-precision solver.

use cloth_core::collision::{
    detect_all, for_each_contact, ClothFace, Collider, ContactAccumulator, DetectSettings, ObstacleFace,
};
use cloth_core::cpu::accumulate_forces;
use cloth_core::fixed::FixedPointVec3;
use cloth_core::gpu::{BufferRole, GpuBufferLayout, GpuDevice, Pass, SceneCounts};
use cloth_core::mesh::{generate_cloth_grid, generate_icosphere};
use cloth_core::{
    scene, ClothMesh, CpuSolver, DeviceLimits, GpuEngine, GpuError, PinnedRows, SimParams, SolverState, Spring,
    SpringKind, Stiffness, TriangleMesh, Vec3,
};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn device() -> GpuDevice {
    GpuDevice::software(DeviceLimits::default())
}

fn engine(mesh: &ClothMesh, obstacle: Option<&TriangleMesh>, params: &SimParams) -> GpuEngine {
    GpuEngine::build(device(), mesh, obstacle.unwrap_or(&TriangleMesh::empty()), params).unwrap()
}

fn no_gravity() -> SimParams {
    SimParams {
        gravity: Vec3::zeros(),
        ..SimParams::default()
    }
}

fn run(engine: &GpuEngine, passes: &[Pass]) {
    for &p in passes {
        engine.run_pass(p).unwrap();
    }
}

fn max_deviation(cpu: &[Vec3], gpu: &[Vec3]) -> f64 {
    cpu.iter().zip(gpu).map(|(a, b)| (a - b).amax()).fold(0.0, f64::max)
}

#[test]
fn single_spring_force_matches_hand_value() {
    let mut mesh = generate_cloth_grid(2, 2, 1.0, 1.0, 4.0, &PinnedRows::None).unwrap();
    mesh.nodes[1].position = Vec3::new(2.0, 0.0, 0.0);
    mesh.nodes[0].position = Vec3::zeros();
    mesh.springs = vec![Spring {
        a: 0,
        b: 1,
        rest_length: 1.0,
        kind: SpringKind::Structural,
    }];
    let params = SimParams {
        stiffness: Stiffness::uniform(10.0),
        damping: 0.0,
        ..no_gravity()
    };
    let gpu = engine(&mesh, None, &params);
    run(&gpu, &[Pass::ZeroForces, Pass::SpringForce]);
    let scale = gpu.fixed_point_scale();
    let forces = gpu.forces_fixed();
    let a = forces[0].decode(scale);
    let b = forces[1].decode(scale);
    let quantum = 1.0 / scale;
    assert!((a[0] - 10.0).abs() <= quantum && a[1] == 0.0 && a[2] == 0.0, "{a:?}");
    assert!((b[0] + 10.0).abs() <= quantum, "{b:?}");
    assert_eq!(forces[2], FixedPointVec3::default());
}

#[test]
fn displaced_cloth_forces_match_cpu_within_degree_quanta() {
    let mut mesh = generate_cloth_grid(32, 32, 1.0, 1.0, 0.1 * 1024.0, &PinnedRows::None).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let spacing = 1.0 / 31.0;
    for node in &mut mesh.nodes {
        node.position += Vec3::new(
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
            rng.random_range(-0.2..0.2),
        ) * spacing;
        node.velocity = Vec3::new(rng.random_range(-0.1..0.1), rng.random_range(-0.1..0.1), 0.0);
    }
    let params = no_gravity();
    let gpu = engine(&mesh, None, &params);
    run(&gpu, &[Pass::ZeroForces, Pass::SpringForce]);
    let scale = gpu.fixed_point_scale();

    // Same single-precision input on both sides, so the comparison sees
    // accumulation error rather than the rounding of the upload.
    let mut rounded = mesh.clone();
    for node in &mut rounded.nodes {
        node.position = node.position.cast::<f32>().cast();
        node.velocity = node.velocity.cast::<f32>().cast();
    }
    let mut state = SolverState::from_mesh(&rounded);
    accumulate_forces(&mut state, &rounded, &params);
    let bound = mesh.max_node_degree() as f64 / scale as f64;
    let mut worst = 0.0f64;
    for (g, c) in gpu.forces_fixed().iter().zip(&state.forces) {
        let g = g.decode(scale);
        for k in 0..3 {
            worst = worst.max((g[k] as f64 - c[k]).abs());
        }
    }
    assert!(worst <= bound, "deviation {worst} above {bound}");
    assert!(state.forces.iter().any(|f| f.amax() > 1.0), "displacement too small to test anything");
}

#[test]
fn rest_cloth_has_all_zero_force_integers() {
    for s in [
        scene::hanging(32, 32, SimParams::default()).unwrap(),
        scene::drop(24, 24, generate_icosphere(1, 0.2).unwrap(), SimParams::default()).unwrap(),
    ] {
        let gpu = engine(&s.mesh, None, &s.params);
        run(&gpu, &[Pass::ZeroForces, Pass::SpringForce]);
        assert!(gpu.forces_fixed().iter().all(|f| *f == FixedPointVec3::default()));
    }
}

#[test]
fn free_flight_advances_by_velocity() {
    let mut mesh = generate_cloth_grid(4, 4, 0.3, 0.3, 1.6, &PinnedRows::None).unwrap();
    for node in &mut mesh.nodes {
        node.velocity = Vec3::new(1.0, 0.0, 0.0);
    }
    let params = no_gravity();
    let mut gpu = engine(&mesh, None, &params);
    let before = gpu.positions_f64();
    gpu.step().unwrap();
    for (a, b) in before.iter().zip(gpu.positions_f64()) {
        assert!((b - a - Vec3::new(params.dt, 0.0, 0.0)).amax() < 1e-6);
    }
}

#[test]
fn pinned_row_is_bit_unchanged() {
    let s = scene::hanging(16, 16, SimParams::default()).unwrap();
    let mut gpu = engine(&s.mesh, None, &s.params);
    let before = gpu.positions();
    for _ in 0..10 {
        gpu.step().unwrap();
    }
    let after = gpu.positions();
    for i in 0..16 {
        assert_eq!(before[i].map(f32::to_bits), after[i].map(f32::to_bits));
    }
    assert_ne!(before[16 * 15], after[16 * 15]);
}

#[test]
fn ten_frame_hanging_trajectory_matches_cpu() {
    let s = scene::hanging(16, 16, SimParams::default()).unwrap();
    let mut gpu = engine(&s.mesh, None, &s.params);
    let mut cpu = CpuSolver::new(s.mesh, None, s.params).unwrap();
    for _ in 0..10 {
        gpu.step().unwrap();
        cpu.step().unwrap();
    }
    let dev = max_deviation(&cpu.state.positions, &gpu.positions_f64());
    assert!(dev <= 1e-3, "deviation {dev}");
}

#[test]
fn equilibrium_frame_reads_back_unchanged() {
    let s = scene::drop(16, 16, generate_icosphere(0, 0.1).unwrap(), no_gravity()).unwrap();
    let mut gpu = engine(&s.mesh, None, &s.params);
    let before = gpu.positions();
    gpu.set_verify(true);
    for _ in 0..5 {
        gpu.step().unwrap();
    }
    assert_eq!(before, gpu.positions());
    assert!(gpu.velocities().iter().all(|v| *v == [0.0; 3]));
}

#[test]
fn runs_are_bit_identical() {
    let sphere = generate_icosphere(2, 0.15).unwrap();
    for s in [
        scene::hanging(24, 24, SimParams::default()).unwrap(),
        scene::drop(12, 12, sphere, SimParams::default()).unwrap(),
    ] {
        let readback = || {
            let mut gpu = engine(&s.mesh, s.obstacle.as_ref(), &s.params);
            for _ in 0..25 {
                gpu.step().unwrap();
            }
            gpu.read_words(BufferRole::Positions)
        };
        assert_eq!(readback(), readback());
    }
}

#[test]
fn serial_and_parallel_dispatch_agree() {
    let s = scene::drop(12, 12, generate_icosphere(2, 0.15).unwrap(), SimParams::default()).unwrap();
    let obstacle = s.obstacle.clone().unwrap();
    let mut a = engine(&s.mesh, Some(&obstacle), &s.params);
    let mut b = GpuEngine::build(device().serial(), &s.mesh, &obstacle, &s.params).unwrap();
    for _ in 0..20 {
        a.step().unwrap();
        b.step().unwrap();
    }
    assert_eq!(a.read_words(BufferRole::Positions), b.read_words(BufferRole::Positions));
}

#[test]
fn separated_scene_leaves_accumulators_empty() {
    let mut s = scene::drop(8, 8, generate_icosphere(2, 0.2).unwrap(), SimParams::default()).unwrap();
    s.mesh.translate(Vec3::new(0.0, 5.0, 0.0));
    let gpu = engine(&s.mesh, s.obstacle.as_ref(), &s.params);
    run(&gpu, &[Pass::ZeroForces, Pass::SpringForce, Pass::Integrate, Pass::CollisionDetect]);
    assert!(gpu.response_accumulator().iter().all(|f| *f == FixedPointVec3::default()));
    assert!(gpu.response_counts().iter().all(|&c| c == 0));
    assert_eq!(gpu.total_hits(), 0);
}

/// A 2x2 cloth quad in the y = 0 plane cut by a vertical triangle at x = 0.2.
fn pierce_scene() -> (ClothMesh, TriangleMesh) {
    let mesh = generate_cloth_grid(2, 2, 2.0, 2.0, 0.4, &PinnedRows::None).unwrap();
    let wall = TriangleMesh::new(
        vec![Vec3::new(0.2, -1.0, -2.0), Vec3::new(0.2, -1.0, 2.0), Vec3::new(0.2, 2.0, 0.0)],
        vec![[0, 1, 2]],
    )
    .unwrap();
    (mesh, wall)
}

fn cpu_detect(mesh: &ClothMesh, obstacle: &TriangleMesh, state: &SolverState, params: &SimParams) -> (u32, ContactAccumulator) {
    let mut acc = ContactAccumulator::new(mesh.node_count());
    let settings = DetectSettings {
        epsilon: params.epsilon,
        margin: params.response_margin,
        max_pairs: params.max_collision_pairs,
        cull_pairs: params.cull_pairs,
    };
    let hits = detect_all(state, mesh, obstacle, &Collider::new(mesh, obstacle), &mut acc, &settings).unwrap();
    (hits, acc)
}

#[test]
fn pierce_accumulators_match_detect_all() {
    let (mesh, wall) = pierce_scene();
    let params = no_gravity();
    let gpu = engine(&mesh, Some(&wall), &params);
    run(&gpu, &[Pass::CollisionDetect]);
    let (hits, acc) = cpu_detect(&mesh, &wall, &SolverState::from_mesh(&mesh), &params);
    // Edges 0-1, 1-2 (the shared diagonal, tested once) and 2-3 cross the wall.
    assert_eq!(hits, 3);
    assert_eq!(gpu.total_hits(), 3);
    assert_eq!(acc.count, vec![1, 2, 2, 1]);
    assert_eq!(gpu.response_counts(), vec![1, 2, 2, 1]);
    let scale = gpu.fixed_point_scale();
    for (g, c) in gpu.response_accumulator().iter().zip(&acc.sum) {
        let g = g.decode(scale);
        for k in 0..3 {
            assert!((g[k] as f64 - c[k]).abs() <= 2.0 / scale as f64);
        }
    }
}

/// Per-node contact counts from the shared pair routine evaluated on the
/// host at the device's precision, with the same edge ownership.
fn host_counts_f32(mesh: &ClothMesh, obstacle: &TriangleMesh, pos: &[[f32; 3]], prev: &[[f32; 3]]) -> (u32, Vec<u32>) {
    let collider = Collider::new(mesh, obstacle);
    let v = |p: [f32; 3]| Vector3::from(p);
    let mut counts = vec![0u32; mesh.node_count()];
    let mut hits = 0;
    for (ct, tri) in mesh.triangles.iter().enumerate() {
        let cloth = ClothFace {
            nodes: *tri,
            positions: tri.map(|i| v(pos[i as usize])),
            previous: tri.map(|i| v(prev[i as usize])),
        };
        for (ot, (t, n)) in obstacle.triangles.iter().zip(&obstacle.face_normals).enumerate() {
            let face = ObstacleFace {
                vertices: t.map(|i| obstacle.vertices[i as usize].cast::<f32>()),
                normal: n.cast::<f32>(),
                solid: collider.obstacle_solid,
            };
            hits += for_each_contact(&cloth, &face, 1e-6, 1e-3, collider.pair_mask(ct, ot), |c| {
                counts[c.node as usize] += 1
            });
        }
    }
    (hits, counts)
}

#[test]
fn sphere_contact_counts_match_host_exactly() {
    let s = scene::drop(12, 12, generate_icosphere(3, 0.25).unwrap(), SimParams::default()).unwrap();
    let obstacle = s.obstacle.clone().unwrap();
    let mut cpu = CpuSolver::new(s.mesh.clone(), Some(obstacle.clone()), s.params.clone()).unwrap();
    let mut gpu = engine(&s.mesh, Some(&obstacle), &s.params);
    let f32s = |v: &[Vec3]| v.iter().map(|p| [p.x as f32, p.y as f32, p.z as f32]).collect::<Vec<_>>();
    let mut compared = 0;
    let mut attribution = 0;
    for _ in 0..40 {
        cpu.step().unwrap();
        // Sink the settled cloth a little so it interpenetrates, then
        // detect on the same single-precision input on both sides.
        let prev = f32s(&cpu.state.positions);
        let sunk: Vec<Vec3> = cpu.state.positions.iter().map(|p| p - Vec3::new(0.0, 0.004, 0.0)).collect();
        let pos = f32s(&sunk);
        gpu.set_positions(&pos).unwrap();
        gpu.set_previous_positions(&prev).unwrap();
        gpu.set_response(&[FixedPointVec3::default(); 144], &[0; 144]).unwrap();
        let before = gpu.total_hits();
        run(&gpu, &[Pass::CollisionDetect]);
        let counts: Vec<u32> = gpu.response_counts().iter().map(|&c| c as u32).collect();
        let (host_hits, host_counts) = host_counts_f32(&s.mesh, &obstacle, &pos, &prev);
        assert_eq!(counts, host_counts);
        assert_eq!(gpu.total_hits() - before, host_hits);

        // Double precision can decide a hit lying on a shared edge
        // differently, so it only has to agree on most frames.
        let mut state = cpu.state.clone();
        state.positions = pos.iter().map(|p| Vector3::from(*p).cast()).collect();
        state.previous_positions = prev.iter().map(|p| Vector3::from(*p).cast()).collect();
        let (cpu_hits, acc) = cpu_detect(&s.mesh, &obstacle, &state, &s.params);
        attribution += (acc.count != counts || cpu_hits != host_hits) as u32;
        compared += (host_hits > 0) as u32;
    }
    assert!(compared > 10, "only {compared} frames had contacts");
    assert!(attribution <= 4, "{attribution} of 40 frames differ in double precision");
}

#[test]
fn response_pass_follows_the_hand_trace() {
    let mesh = generate_cloth_grid(2, 2, 1.0, 1.0, 4.0, &PinnedRows::None).unwrap();
    let mut gpu = engine(&mesh, Some(&generate_icosphere(0, 0.1).unwrap()), &no_gravity());
    gpu.set_velocities(&[[0.0, 0.0, 2.0], [0.0, 0.0, 3.0], [0.0; 3], [0.0; 3]]).unwrap();
    let before = gpu.positions();
    let scale = gpu.fixed_point_scale();
    let push = FixedPointVec3::encode([0.0, 0.1, 0.0], scale);
    let mut sums = vec![FixedPointVec3::default(); 4];
    sums[0] = push;
    gpu.set_response(&sums, &[1, 0, 0, 0]).unwrap();
    run(&gpu, &[Pass::CollisionRespond]);
    let v = gpu.velocities();
    assert_eq!(v[0], [0.0, 0.0, -1.0]);
    // Node without contacts is untouched.
    assert_eq!(v[1], [0.0, 0.0, 3.0]);
    let after = gpu.positions();
    let shift = push.decode(scale);
    for k in 0..3 {
        assert_eq!(after[0][k], before[0][k] + shift[k]);
    }
    assert_eq!(&after[1..], &before[1..]);
    assert!(gpu.response_accumulator().iter().all(|f| *f == FixedPointVec3::default()));
    assert!(gpu.response_counts().iter().all(|&c| c == 0));
}

#[test]
fn response_averages_identical_contributions() {
    let mesh = generate_cloth_grid(2, 2, 1.0, 1.0, 4.0, &PinnedRows::None).unwrap();
    let mut gpu = engine(&mesh, Some(&generate_icosphere(0, 0.1).unwrap()), &no_gravity());
    let before = gpu.positions();
    let scale = gpu.fixed_point_scale();
    let d = FixedPointVec3::encode([0.25, -0.5, 0.125], scale);
    let four = (0..4).fold(FixedPointVec3::default(), |acc, _| acc.wrapping_add(d));
    gpu.set_response(&[four, Default::default(), Default::default(), Default::default()], &[4, 0, 0, 0])
        .unwrap();
    run(&gpu, &[Pass::CollisionRespond]);
    let after = gpu.positions();
    assert_eq!(after[0], [before[0][0] + 0.25, before[0][1] - 0.5, before[0][2] + 0.125]);
}

#[test]
fn verify_mode_checks_every_pass() {
    let s = scene::drop(8, 8, generate_icosphere(2, 0.15).unwrap(), SimParams::default()).unwrap();
    let mut gpu = engine(&s.mesh, s.obstacle.as_ref(), &s.params);
    gpu.set_verify(true);
    for _ in 0..3 {
        gpu.step().unwrap();
    }
    // Five passes per substep.
    assert_eq!(gpu.passes_checked(), 3 * 5 * s.params.substeps as u64);
}

#[test]
fn binding_ceiling_gives_a_capacity_error() {
    let limits = DeviceLimits {
        max_storage_buffer_binding_size: 256 * 1024,
        ..DeviceLimits::default()
    };
    let small = scene::hanging(32, 32, SimParams::default()).unwrap();
    assert!(GpuEngine::build(GpuDevice::software(limits), &small.mesh, &TriangleMesh::empty(), &small.params).is_ok());
    let big = scene::hanging(64, 64, SimParams::default()).unwrap();
    match GpuEngine::build(GpuDevice::software(limits), &big.mesh, &TriangleMesh::empty(), &big.params) {
        Err(GpuError::Capacity {
            required,
            limit,
            max_nodes,
            ..
        }) => {
            assert!(required > limit);
            assert!((32 * 32..64 * 64).contains(&max_nodes), "{max_nodes}");
        }
        other => panic!("expected a capacity error, got {other:?}"),
    }
}

#[test]
fn layout_of_a_64_grid_follows_the_formula() {
    let s = scene::hanging(64, 64, SimParams::default()).unwrap();
    let gpu = engine(&s.mesh, None, &s.params);
    let expected = GpuBufferLayout::new(SceneCounts::for_grid(64, 64, 0, 0));
    assert_eq!(gpu.layout(), &expected);
    for b in &gpu.layout().buffers {
        assert_eq!(b.size, b.stride * b.count);
        assert_eq!(gpu.read_words(b.role).len() as u64 * 4, b.size);
    }
    assert_eq!(gpu.layout().desc(BufferRole::Positions).size, 12 * 4096);
    // 2·64·63 structural + 2·63² shear + 2·64·62 bend.
    assert_eq!(gpu.layout().desc(BufferRole::SpringTable).count, 23_938);
}

#[test]
fn empty_obstacle_makes_collision_passes_no_ops() {
    let s = scene::hanging(8, 8, SimParams::default()).unwrap();
    let gpu = engine(&s.mesh, None, &s.params);
    assert!(!gpu.collision_enabled());
    assert!(gpu.is_noop(Pass::CollisionDetect) && gpu.is_noop(Pass::CollisionRespond));
    assert!(!gpu.is_noop(Pass::Integrate));
}

#[test]
fn culling_does_not_change_the_trajectory() {
    let s = scene::drop(12, 12, generate_icosphere(2, 0.15).unwrap(), SimParams::default()).unwrap();
    let brute = SimParams {
        cull_pairs: false,
        ..s.params.clone()
    };
    let mut culled = engine(&s.mesh, s.obstacle.as_ref(), &s.params);
    let mut full = engine(&s.mesh, s.obstacle.as_ref(), &brute);
    let mut hits = 0;
    for _ in 0..20 {
        let a = culled.step().unwrap();
        let b = full.step().unwrap();
        assert_eq!(a.collision_hits, b.collision_hits);
        hits += a.collision_hits;
    }
    assert!(hits > 0);
    assert_eq!(culled.read_words(BufferRole::Positions), full.read_words(BufferRole::Positions));
}
