use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use cloth_core::gpu::DeviceSelection;
use cloth_core::io::load_obj;
use cloth_core::mesh::generate_icosphere;
use cloth_core::scene::{self, Scene, SceneKind, DEFAULT_PULL_ACCELERATION};
use cloth_core::{SimParams, TriangleMesh, Vec3};

use crate::CliError;

/// Radius of `icosphere:K` obstacles when none is given.
pub const DEFAULT_SPHERE_RADIUS: f64 = 0.25;

pub fn parse_scene(text: &str) -> Result<SceneKind, String> {
    match text {
        "hanging" => Ok(SceneKind::Hanging),
        "drop" => Ok(SceneKind::Drop),
        "pull" => Ok(SceneKind::Pull),
        other => Err(format!("unknown scene `{other}` (expected hanging, drop or pull)")),
    }
}

pub fn scene_name(kind: SceneKind) -> &'static str {
    match kind {
        SceneKind::Hanging => "hanging",
        SceneKind::Drop => "drop",
        SceneKind::Pull => "pull",
    }
}

/// Cloth resolution: `NXxNY`, or a node count such as `4096`, `4K` or
/// `65.5K` (K = 1000) which becomes the smallest square grid holding at
/// least that many nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn square(side: usize) -> Self {
        Self { nx: side, ny: side }
    }

    pub fn nodes(&self) -> usize {
        self.nx * self.ny
    }
}

impl fmt::Display for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.nx, self.ny)
    }
}

impl FromStr for Grid {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let bad = || format!("bad grid `{s}` (expected NXxNY or a node count like 4K)");
        let grid = if let Some((a, b)) = s.split_once(['x', 'X']) {
            Grid {
                nx: a.parse().map_err(|_| bad())?,
                ny: b.parse().map_err(|_| bad())?,
            }
        } else {
            let (number, unit) = match s.strip_suffix(['K', 'k']) {
                Some(n) => (n, 1000.0),
                None => (s, 1.0),
            };
            let count: f64 = number.parse().map_err(|_| bad())?;
            if !(count.is_finite() && count > 0.0) {
                return Err(bad());
            }
            Grid::square(((count * unit).round()).sqrt().ceil() as usize)
        };
        if grid.nx < 2 || grid.ny < 2 {
            return Err(format!("grid `{s}` needs at least 2 nodes per side"));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ObstacleSource {
    Icosphere { subdivisions: u32, radius: f64 },
    File(PathBuf),
}

impl FromStr for ObstacleSource {
    type Err = String;

    /// `icosphere:K`, `icosphere:K:R`, or a path to an OBJ file.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let Some(rest) = s.strip_prefix("icosphere:") else {
            return Ok(ObstacleSource::File(PathBuf::from(s)));
        };
        let mut parts = rest.split(':');
        let subdivisions = parts
            .next()
            .and_then(|k| k.parse().ok())
            .ok_or_else(|| format!("bad icosphere level in `{s}`"))?;
        let radius = match parts.next() {
            Some(r) => r.parse().map_err(|_| format!("bad icosphere radius in `{s}`"))?,
            None => DEFAULT_SPHERE_RADIUS,
        };
        if parts.next().is_some() {
            return Err(format!("bad obstacle `{s}`"));
        }
        Ok(ObstacleSource::Icosphere { subdivisions, radius })
    }
}

impl fmt::Display for ObstacleSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ObstacleSource::Icosphere { subdivisions, radius } => write!(f, "icosphere:{subdivisions}:{radius}"),
            ObstacleSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl ObstacleSource {
    pub fn load(&self) -> Result<TriangleMesh, CliError> {
        match self {
            ObstacleSource::Icosphere { subdivisions, radius } => Ok(generate_icosphere(*subdivisions, *radius)?),
            ObstacleSource::File(path) => Ok(load_obj(path)?.0),
        }
    }

    /// Centre and radius when the obstacle is an analytic sphere.
    pub fn sphere(&self) -> Option<(Vec3, f64)> {
        match self {
            ObstacleSource::Icosphere { radius, .. } => Some((Vec3::zeros(), *radius)),
            ObstacleSource::File(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackendChoice {
    Cpu,
    Gpu,
    Both,
}

impl FromStr for BackendChoice {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cpu" => Ok(Self::Cpu),
            "gpu" => Ok(Self::Gpu),
            "both" => Ok(Self::Both),
            other => Err(format!("unknown backend `{other}` (expected cpu, gpu or both)")),
        }
    }
}

impl BackendChoice {
    pub fn runs_cpu(self) -> bool {
        self != Self::Gpu
    }

    pub fn runs_gpu(self) -> bool {
        self != Self::Cpu
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioConfig {
    pub scene: SceneKind,
    pub grid: Grid,
    pub obstacle: Option<ObstacleSource>,
    pub backend: BackendChoice,
    pub frames: u64,
    /// Simulation parameters after command-line overrides.
    pub params: SimParams,
    pub pull_acceleration: f64,
    pub snapshot_every: Option<u64>,
    /// Per-frame CSV for scenarios, summary CSV for sweeps.
    pub output: PathBuf,
    pub verify: bool,
    /// Largest per-component CPU/GPU position gap accepted in `both` mode.
    pub parity_tolerance: f64,
    pub device: DeviceSelection,
}

impl ScenarioConfig {
    /// Defaults for `scene` at `grid`; drop and pull get a level-3 icosphere.
    pub fn new(scene: SceneKind, grid: Grid) -> Self {
        let obstacle = (scene != SceneKind::Hanging).then_some(ObstacleSource::Icosphere {
            subdivisions: 3,
            radius: DEFAULT_SPHERE_RADIUS,
        });
        Self {
            scene,
            grid,
            obstacle,
            backend: BackendChoice::Cpu,
            frames: 300,
            params: SimParams::default(),
            pull_acceleration: DEFAULT_PULL_ACCELERATION,
            snapshot_every: None,
            output: PathBuf::from("stats.csv"),
            verify: false,
            parity_tolerance: 1e-3,
            device: DeviceSelection::Auto,
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        match (self.scene, &self.obstacle) {
            (SceneKind::Hanging, Some(_)) => return usage("the hanging scene takes no obstacle".into()),
            (SceneKind::Drop | SceneKind::Pull, None) => {
                return usage(format!("the {} scene needs --obstacle", scene_name(self.scene)))
            }
            _ => {}
        }
        if self.frames == 0 {
            return usage("--frames must be positive".into());
        }
        if self.snapshot_every == Some(0) {
            return usage("--snapshot-every must be positive".into());
        }
        if self.grid.nx < 2 || self.grid.ny < 2 {
            return usage(format!("grid {} is too small", self.grid));
        }
        if !(self.parity_tolerance >= 0.0) {
            return usage("parity tolerance must be non-negative".into());
        }
        self.params.validate().map_err(|e| CliError::Usage(e.to_string()))
    }

    pub fn build_scene(&self) -> Result<Scene, CliError> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let params = self.params.clone();
        let scene = match self.scene {
            SceneKind::Hanging => scene::hanging(nx, ny, params)?,
            SceneKind::Drop => scene::drop(nx, ny, self.obstacle_mesh()?, params)?,
            SceneKind::Pull => scene::pull(nx, ny, self.obstacle_mesh()?, params, self.pull_acceleration)?,
        };
        Ok(scene)
    }

    fn obstacle_mesh(&self) -> Result<TriangleMesh, CliError> {
        self.obstacle
            .as_ref()
            .ok_or_else(|| CliError::Usage("missing obstacle".into()))?
            .load()
    }
}
