use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use cloth_core::gpu::{GpuDevice, GpuEngine};
use cloth_core::io::{snapshot_png, write_stats_csv, Camera, CSV_HEADER};
use cloth_core::scene::{Scene, SceneKind};
use cloth_core::{Backend, CpuSolver, FrameStats, TriangleMesh, Vec3};

use crate::config::{scene_name, BackendChoice, ScenarioConfig};
use crate::CliError;

/// Share of cloth nodes that must end outside `radius - margin` of an
/// analytic sphere.
pub const OUTSIDE_FRACTION: f64 = 0.99;

const SNAPSHOT_SIZE: u32 = 512;

#[derive(Debug, Clone)]
pub struct BackendRun {
    pub backend: Backend,
    pub stats: Vec<FrameStats>,
    pub final_positions: Vec<Vec3>,
    pub snapshots: Vec<PathBuf>,
    /// Why the run stopped before the last frame.
    pub failure: Option<String>,
    /// Recorded contact-free frames (CPU only, `both` mode).
    pub trace: Vec<(u64, Vec<Vec3>)>,
}

impl BackendRun {
    pub fn completed(&self, frames: u64) -> bool {
        self.failure.is_none() && self.stats.len() as u64 == frames
    }

    pub fn total_hits(&self) -> u64 {
        self.stats.iter().map(|s| s.collision_hits).sum()
    }
}

/// CPU/GPU agreement in `both` mode.
///
/// Positions are compared at recorded frames before either backend's
/// first collision hit. Contacts are decided in f64 on one side and f32 on
/// the other, so after the first contact the two trajectories separate by
/// design and only the final gap is reported.
#[derive(Debug, Clone, PartialEq)]
pub struct ParityReport {
    /// Largest per-component gap over the compared frames.
    pub max_deviation: f64,
    pub worst_node: usize,
    pub worst_frame: u64,
    pub frames_compared: usize,
    pub last_compared_frame: u64,
    /// Gap at the last frame, compared or not.
    pub final_deviation: f64,
    pub tolerance: f64,
}

impl ParityReport {
    pub fn passed(&self) -> bool {
        self.frames_compared > 0 && self.max_deviation <= self.tolerance
    }
}

/// Position entries the CPU trace may hold before it thins out frames.
const TRACE_BUDGET: u64 = 8 << 20;

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ScenarioReport {
    pub frames: u64,
    pub runs: Vec<BackendRun>,
    /// Present whenever both backends ran.
    pub parity: Option<ParityReport>,
    pub checks: Vec<Check>,
    pub csv: PathBuf,
}

impl ScenarioReport {
    /// Every frame ran, every enabled check held and parity (if any) held.
    pub fn success(&self) -> bool {
        self.runs.iter().all(|r| r.completed(self.frames))
            && self.checks.iter().all(|c| c.passed)
            && self.parity.as_ref().is_none_or(ParityReport::passed)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for run in &self.runs {
            let mean_ms = run.stats.iter().map(|s| s.wall_ms).sum::<f64>() / run.stats.len().max(1) as f64;
            let _ = writeln!(
                out,
                "{}: {}/{} frames, mean {:.3} ms/frame, {} collision hits",
                run.backend,
                run.stats.len(),
                self.frames,
                mean_ms,
                run.total_hits()
            );
            if let Some(f) = &run.failure {
                let _ = writeln!(out, "{}: stopped: {f}", run.backend);
            }
            if !run.snapshots.is_empty() {
                let _ = writeln!(out, "{}: {} snapshots", run.backend, run.snapshots.len());
            }
        }
        if let Some(p) = &self.parity {
            let _ = writeln!(out, "[parity]");
            let _ = writeln!(
                out,
                "contact-free frames compared: {} (through frame {})",
                p.frames_compared, p.last_compared_frame
            );
            let _ = writeln!(
                out,
                "max |cpu - gpu| = {:.3e} at node {}, frame {} (tolerance {:.1e}): {}",
                p.max_deviation,
                p.worst_node,
                p.worst_frame,
                p.tolerance,
                if p.passed() { "ok" } else { "FAILED" }
            );
            if p.last_compared_frame < self.frames {
                let _ = writeln!(
                    out,
                    "final frame |cpu - gpu| = {:.3e} (after contact, reported only)",
                    p.final_deviation
                );
            }
        }
        for c in &self.checks {
            let _ = writeln!(out, "check {}: {} ({})", c.name, if c.passed { "ok" } else { "FAILED" }, c.detail);
        }
        let _ = writeln!(out, "stats: {}", self.csv.display());
        out
    }
}

/// Fraction of `positions` at distance at least `radius - margin` from `centre`.
pub fn fraction_outside(positions: &[Vec3], centre: Vec3, radius: f64, margin: f64) -> f64 {
    let outside = positions.iter().filter(|p| (*p - centre).norm() >= radius - margin).count();
    outside as f64 / positions.len().max(1) as f64
}

/// Distance from `centre` to the nearest face plane.
pub fn inradius(mesh: &TriangleMesh, centre: Vec3) -> f64 {
    mesh.triangles
        .iter()
        .zip(&mesh.face_normals)
        .map(|(t, n)| (mesh.vertices[t[0] as usize] - centre).dot(n).abs())
        .fold(f64::INFINITY, f64::min)
}

fn snapshot_path(output: &Path, backend: Backend, frame: u64) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("frame");
    output.with_file_name(format!("{stem}_{backend}_{frame:05}.png"))
}

struct Snapshotter<'a> {
    every: Option<u64>,
    output: &'a Path,
    triangles: &'a [[u32; 3]],
    obstacle: &'a TriangleMesh,
    camera: Camera,
}

impl Snapshotter<'_> {
    fn maybe(&self, backend: Backend, frame: u64, positions: &[Vec3], saved: &mut Vec<PathBuf>) -> Result<(), CliError> {
        if self.every.is_some_and(|k| frame.is_multiple_of(k)) {
            let path = snapshot_path(self.output, backend, frame);
            snapshot_png(
                positions,
                self.triangles,
                &self.obstacle.vertices,
                &self.obstacle.triangles,
                &self.camera,
                &path,
            )?;
            saved.push(path);
        }
        Ok(())
    }
}

/// Every `stride`-th frame, plus the last, is recorded for parity.
fn trace_stride(frames: u64, nodes: usize) -> u64 {
    (frames * nodes as u64).div_ceil(TRACE_BUDGET).max(1)
}

fn run_cpu(scene: &Scene, frames: u64, verify: bool, trace: bool, snaps: &Snapshotter) -> Result<BackendRun, CliError> {
    let mut solver = CpuSolver::new(scene.mesh.clone(), scene.obstacle.clone(), scene.params.clone())?;
    let stride = trace_stride(frames, scene.mesh.node_count());
    let mut run = BackendRun {
        backend: Backend::Cpu,
        stats: Vec::with_capacity(frames as usize),
        final_positions: Vec::new(),
        snapshots: Vec::new(),
        failure: None,
        trace: Vec::new(),
    };
    for _ in 0..frames {
        match solver.step() {
            Ok(s) => run.stats.push(s),
            Err(e) => {
                run.failure = Some(e.to_string());
                break;
            }
        }
        let frame = solver.state.step_count;
        if trace && run.total_hits() == 0 && (frame % stride == 0 || frame == frames) {
            run.trace.push((frame, solver.state.positions.clone()));
        }
        if verify {
            if let Some(i) = solver.state.positions.iter().position(|p| !p.iter().all(|c| c.is_finite())) {
                run.failure = Some(format!("frame {frame}: node {i} has a non-finite position"));
                break;
            }
            if !solver.accumulator.is_clear() {
                run.failure = Some(format!("frame {frame}: collision accumulator not reset"));
                break;
            }
        }
        snaps.maybe(Backend::Cpu, frame, &solver.state.positions, &mut run.snapshots)?;
    }
    run.final_positions = solver.state.positions;
    Ok(run)
}

#[derive(Default)]
struct ParityTally {
    max: f64,
    node: usize,
    frame: u64,
    compared: usize,
    last: u64,
}

fn max_gap(a: &[Vec3], b: &[Vec3]) -> (usize, f64) {
    a.iter()
        .zip(b)
        .map(|(p, q)| (p - q).amax())
        .enumerate()
        .fold((0, 0.0), |best, (i, d)| if d > best.1 { (i, d) } else { best })
}

fn run_gpu(
    scene: &Scene,
    config: &ScenarioConfig,
    reference: Option<&BackendRun>,
    snaps: &Snapshotter,
) -> Result<(BackendRun, u64, Option<ParityReport>), CliError> {
    let device = GpuDevice::open(config.device)?;
    let obstacle = scene.obstacle.clone().unwrap_or_else(TriangleMesh::empty);
    let mut engine = GpuEngine::build(device, &scene.mesh, &obstacle, &scene.params)?;
    engine.set_verify(config.verify);
    let mut run = BackendRun {
        backend: Backend::Gpu,
        stats: Vec::with_capacity(config.frames as usize),
        final_positions: Vec::new(),
        snapshots: Vec::new(),
        failure: None,
        trace: Vec::new(),
    };
    let mut tally = ParityTally::default();
    let mut pending = reference.map_or(&[][..], |r| &r.trace[..]);
    for _ in 0..config.frames {
        match engine.step() {
            Ok(s) => run.stats.push(s),
            Err(e) => {
                run.failure = Some(e.to_string());
                break;
            }
        }
        let frame = engine.frame();
        if let Some(((f, cpu), rest)) = pending.split_first() {
            if *f == frame && run.total_hits() == 0 {
                let (node, gap) = max_gap(cpu, &engine.positions_f64());
                if gap > tally.max || tally.compared == 0 {
                    (tally.max, tally.node, tally.frame) = (gap, node, frame);
                }
                tally.compared += 1;
                tally.last = frame;
                pending = rest;
            }
        }
        if snaps.every.is_some() {
            snaps.maybe(Backend::Gpu, frame, &engine.positions_f64(), &mut run.snapshots)?;
        }
    }
    run.final_positions = engine.positions_f64();
    let parity = reference.map(|cpu| ParityReport {
        max_deviation: tally.max,
        worst_node: tally.node,
        worst_frame: tally.frame,
        frames_compared: tally.compared,
        last_compared_frame: tally.last,
        final_deviation: max_gap(&cpu.final_positions, &run.final_positions).1,
        tolerance: config.parity_tolerance,
    });
    Ok((run, engine.passes_checked(), parity))
}

fn write_csv(runs: &[BackendRun], path: &Path) -> Result<(), CliError> {
    let rows: Vec<FrameStats> = runs.iter().flat_map(|r| r.stats.iter().cloned()).collect();
    if rows.is_empty() {
        std::fs::write(path, format!("{CSV_HEADER}\n"))?;
    } else {
        write_stats_csv(&rows, path)?;
    }
    Ok(())
}

/// Builds the scene, steps each selected backend for `config.frames`
/// frames (CPU first, one at a time), writes every frame's statistics to
/// `config.output` and runs the enabled checks.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport, CliError> {
    config.validate()?;
    let scene = config.build_scene()?;
    let obstacle = scene.obstacle.clone().unwrap_or_else(TriangleMesh::empty);
    let mut framed: Vec<Vec3> = scene.mesh.positions();
    framed.extend(obstacle.vertices.iter().copied());
    if scene.kind == SceneKind::Hanging {
        // Leave room for the swing below the pinned row.
        framed.extend(scene.mesh.positions().iter().map(|p| p - Vec3::new(0.0, 0.5, 0.0)));
    }
    let snaps = Snapshotter {
        every: config.snapshot_every,
        output: &config.output,
        triangles: &scene.mesh.triangles,
        obstacle: &obstacle,
        camera: Camera::framing(&framed, SNAPSHOT_SIZE, SNAPSHOT_SIZE),
    };

    let mut runs = Vec::new();
    let mut checks = Vec::new();
    let mut parity = None;
    let both = config.backend == BackendChoice::Both;
    if config.backend.runs_cpu() {
        runs.push(run_cpu(&scene, config.frames, config.verify, both, &snaps)?);
    }
    if config.backend.runs_gpu() {
        let (run, passes, report) = run_gpu(&scene, config, runs.first().filter(|_| both), &snaps)?;
        parity = report;
        if config.verify {
            let expected = config.frames * config.params.substeps as u64 * 5;
            checks.push(Check {
                name: "gpu buffer readback".into(),
                passed: run.failure.is_none() && passes == expected,
                detail: format!("{passes} of {expected} passes checked"),
            });
        }
        runs.push(run);
    }
    write_csv(&runs, &config.output)?;
    for run in &mut runs {
        run.trace = Vec::new();
    }
    if config.verify && scene.kind != SceneKind::Hanging {
        for run in &runs {
            checks.push(Check {
                name: format!("{} contact", run.backend),
                passed: run.total_hits() > 0,
                detail: format!("{} collision hits", run.total_hits()),
            });
        }
        if let Some((centre, radius)) = config.obstacle.as_ref().and_then(|o| o.sphere()) {
            // A coarse icosphere's facets lie inside the analytic radius, by
            // more than the margin below level 3, so the pass mark uses the
            // polyhedron's inradius when that is smaller.
            let inradius = inradius(&obstacle, centre).min(radius);
            let margin = config.params.response_margin;
            for run in &runs {
                let analytic = fraction_outside(&run.final_positions, centre, radius, margin);
                let faceted = fraction_outside(&run.final_positions, centre, inradius, margin);
                checks.push(Check {
                    name: format!("{} outside sphere", run.backend),
                    passed: faceted >= OUTSIDE_FRACTION,
                    detail: format!(
                        "{:.2}% of nodes at distance >= radius - margin, {:.2}% >= inradius {:.5} - margin",
                        100.0 * analytic,
                        100.0 * faceted,
                        inradius
                    ),
                });
            }
        }
    }
    Ok(ScenarioReport {
        frames: config.frames,
        runs,
        parity,
        checks,
        csv: config.output.clone(),
    })
}

/// One-line description of a scenario for logs.
pub fn describe(config: &ScenarioConfig) -> String {
    let obstacle = config.obstacle.as_ref().map_or("none".to_string(), |o| o.to_string());
    format!(
        "{} {} cloth, obstacle {}, {} frames at dt {}",
        scene_name(config.scene),
        config.grid,
        obstacle,
        config.frames,
        config.params.dt
    )
}
