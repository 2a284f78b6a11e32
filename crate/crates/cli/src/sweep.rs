use std::path::Path;

use cloth_core::gpu::{GpuDevice, GpuEngine, GpuError};
use cloth_core::mesh::spring_count_formula;
use cloth_core::{Backend, CpuSolver, FrameStats, TriangleMesh};

use crate::config::{Grid, ScenarioConfig};
use crate::CliError;

/// Frames dropped from the start of every run before averaging.
pub const STEADY_STATE_SKIP: usize = 10;

/// Real-time threshold; runs below it are flagged, never failed.
pub const REALTIME_FPS: f64 = 30.0;

pub const SUMMARY_HEADER: [&str; 15] = [
    "requested",
    "grid",
    "nodes",
    "springs",
    "cpu_mean_ms",
    "cpu_mean_fps",
    "cpu_below_30fps",
    "gpu_mean_ms",
    "gpu_mean_fps",
    "gpu_below_30fps",
    "gpu_speedup",
    "first_below_30fps",
    "status",
    "reason",
    "frames",
];

/// Steady-state timing of one backend at one resolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timing {
    pub mean_ms: f64,
    /// Mean of the per-frame `1000 / wall_ms`.
    pub mean_fps: f64,
}

impl Timing {
    pub fn below_realtime(&self) -> bool {
        self.mean_fps < REALTIME_FPS
    }
}

/// Averages the frames after the first [`STEADY_STATE_SKIP`]; `None` when
/// there are none.
pub fn steady_state(stats: &[FrameStats]) -> Option<Timing> {
    let window = stats.get(STEADY_STATE_SKIP..).filter(|w| !w.is_empty())?;
    let n = window.len() as f64;
    Some(Timing {
        mean_ms: window.iter().map(|s| s.wall_ms).sum::<f64>() / n,
        mean_fps: window.iter().map(|s| s.fps).sum::<f64>() / n,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Measured(Timing),
    Failed(String),
    NotRun,
}

impl Outcome {
    pub fn timing(&self) -> Option<Timing> {
        match self {
            Outcome::Measured(t) => Some(*t),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub requested: String,
    pub grid: Grid,
    pub springs: usize,
    pub frames: u64,
    pub cpu: Outcome,
    pub gpu: Outcome,
    /// Backends whose first sub-30 fps resolution this is.
    pub first_below: Vec<Backend>,
}

impl SweepRow {
    /// CPU mean frame time over GPU mean frame time.
    pub fn gpu_speedup(&self) -> Option<f64> {
        Some(self.cpu.timing()?.mean_ms / self.gpu.timing()?.mean_ms)
    }

    pub fn failures(&self) -> Vec<String> {
        [(Backend::Cpu, &self.cpu), (Backend::Gpu, &self.gpu)]
            .into_iter()
            .filter_map(|(b, o)| match o {
                Outcome::Failed(why) => Some(format!("{b}: {why}")),
                _ => None,
            })
            .collect()
    }

    fn record(&self) -> Vec<String> {
        let ms = |o: &Outcome| o.timing().map_or(String::new(), |t| format!("{:.6}", t.mean_ms));
        let fps = |o: &Outcome| o.timing().map_or(String::new(), |t| format!("{:.3}", t.mean_fps));
        let below = |o: &Outcome| o.timing().map_or(String::new(), |t| t.below_realtime().to_string());
        let failures = self.failures();
        vec![
            self.requested.clone(),
            self.grid.to_string(),
            self.grid.nodes().to_string(),
            self.springs.to_string(),
            ms(&self.cpu),
            fps(&self.cpu),
            below(&self.cpu),
            ms(&self.gpu),
            fps(&self.gpu),
            below(&self.gpu),
            self.gpu_speedup().map_or(String::new(), |r| format!("{r:.4}")),
            self.first_below.iter().map(|b| b.to_string()).collect::<Vec<_>>().join("+"),
            if failures.is_empty() { "ok" } else { "failed" }.into(),
            failures.join("; "),
            self.frames.to_string(),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    /// True when no resolution failed on any backend that ran.
    pub fn success(&self) -> bool {
        self.rows.iter().all(|r| r.failures().is_empty())
    }

    /// Resolution at which `backend` first fell below real time.
    pub fn boundary(&self, backend: Backend) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.first_below.contains(&backend))
    }
}

fn time_cpu(config: &ScenarioConfig) -> Result<Vec<FrameStats>, String> {
    let scene = config.build_scene().map_err(|e| e.to_string())?;
    let mut solver = CpuSolver::new(scene.mesh, scene.obstacle, scene.params).map_err(|e| e.to_string())?;
    (0..config.frames).map(|_| solver.step().map_err(|e| e.to_string())).collect()
}

enum GpuFailure {
    Capacity(String),
    Other(String),
    NoAdapter(GpuError),
}

fn time_gpu(config: &ScenarioConfig) -> Result<Vec<FrameStats>, GpuFailure> {
    let scene = config.build_scene().map_err(|e| GpuFailure::Other(e.to_string()))?;
    let device = GpuDevice::open(config.device).map_err(GpuFailure::NoAdapter)?;
    let obstacle = scene.obstacle.unwrap_or_else(TriangleMesh::empty);
    let mut engine = GpuEngine::build(device, &scene.mesh, &obstacle, &scene.params).map_err(|e| match e {
        GpuError::Capacity { .. } => GpuFailure::Capacity(e.to_string()),
        other => GpuFailure::Other(other.to_string()),
    })?;
    engine.set_verify(config.verify);
    (0..config.frames)
        .map(|_| engine.step().map_err(|e| GpuFailure::Other(e.to_string())))
        .collect()
}

fn measure(stats: Result<Vec<FrameStats>, String>) -> Outcome {
    match stats {
        Ok(s) => steady_state(&s).map_or_else(
            || Outcome::Failed(format!("no frames after the first {STEADY_STATE_SKIP}")),
            Outcome::Measured,
        ),
        Err(why) => Outcome::Failed(why),
    }
}

/// Runs `base` at each resolution on the selected backends, one backend at
/// a time, and returns one row per resolution.
///
/// A failed run is recorded and the sweep moves on. After a capacity error
/// the GPU is not tried at larger resolutions; those rows say so.
pub fn run_resolution_sweep(base: &ScenarioConfig, resolutions: &[Grid]) -> Result<SweepReport, CliError> {
    base.validate()?;
    if resolutions.is_empty() {
        return Err(CliError::Usage("--sweep needs at least one resolution".into()));
    }
    if resolutions.windows(2).any(|w| w[1].nodes() <= w[0].nodes()) {
        return Err(CliError::Usage("sweep resolutions must be strictly ascending".into()));
    }
    let mut rows = Vec::with_capacity(resolutions.len());
    let mut gpu_capacity: Option<String> = None;
    let mut below_seen = Vec::new();
    for &grid in resolutions {
        let config = ScenarioConfig {
            grid,
            ..base.clone()
        };
        let cpu = if base.backend.runs_cpu() {
            measure(time_cpu(&config))
        } else {
            Outcome::NotRun
        };
        let gpu = if !base.backend.runs_gpu() {
            Outcome::NotRun
        } else if let Some(at) = &gpu_capacity {
            Outcome::Failed(format!("skipped after the capacity error at {at}"))
        } else {
            match time_gpu(&config) {
                Ok(s) => measure(Ok(s)),
                Err(GpuFailure::Capacity(why)) => {
                    gpu_capacity = Some(grid.to_string());
                    Outcome::Failed(why)
                }
                Err(GpuFailure::Other(why)) => Outcome::Failed(why),
                Err(GpuFailure::NoAdapter(e)) => return Err(e.into()),
            }
        };
        let mut first_below = Vec::new();
        for (backend, outcome) in [(Backend::Cpu, &cpu), (Backend::Gpu, &gpu)] {
            if outcome.timing().is_some_and(|t| t.below_realtime()) && !below_seen.contains(&backend) {
                below_seen.push(backend);
                first_below.push(backend);
            }
        }
        rows.push(SweepRow {
            requested: grid.to_string(),
            grid,
            springs: spring_count_formula(grid.nx, grid.ny).total(),
            frames: base.frames,
            cpu,
            gpu,
            first_below,
        });
    }
    Ok(SweepReport { rows })
}

pub fn write_sweep_csv(report: &SweepReport, path: impl AsRef<Path>) -> Result<(), CliError> {
    let mut writer = csv::Writer::from_path(path)?;
    writer.write_record(SUMMARY_HEADER)?;
    for row in &report.rows {
        writer.write_record(row.record())?;
    }
    writer.flush()?;
    Ok(())
}
