use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use cloth_cli::{
    describe, exit, parse_scene, probe_limits, run_resolution_sweep, run_scenario, write_sweep_csv, BackendChoice,
    CliError, Grid, ObstacleSource, ScenarioConfig,
};
use cloth_core::gpu::{DeviceSelection, ADAPTER_ENV};
use cloth_core::scene::SceneKind;
use cloth_core::{Backend, Stiffness};

/// Headless cloth simulation benchmark.
#[derive(Debug, Parser)]
#[command(name = "clothsim", version, after_help = format!("Adapter selection: set {ADAPTER_ENV} to auto, software or hardware."))]
struct Args {
    /// hanging, drop or pull.
    #[arg(long, default_value = "hanging", value_parser = parse_scene)]
    scene: SceneKind,
    /// Cloth nodes as NXxNY, or a node count such as 4K.
    #[arg(long, default_value = "32x32")]
    grid: Grid,
    /// OBJ file or icosphere:K[:RADIUS]. Drop and pull default to icosphere:3.
    #[arg(long)]
    obstacle: Option<ObstacleSource>,
    /// cpu, gpu or both.
    #[arg(long, default_value = "cpu")]
    backend: BackendChoice,
    #[arg(long, default_value_t = 300)]
    frames: u64,
    /// Seconds per frame.
    #[arg(long)]
    dt: Option<f64>,
    /// Physics substeps per frame.
    #[arg(long)]
    substeps: Option<u32>,
    /// Spring stiffness for all three spring classes.
    #[arg(long)]
    stiffness: Option<f64>,
    #[arg(long)]
    damping: Option<f64>,
    /// Lateral acceleration on the pulled edge.
    #[arg(long)]
    pull_accel: Option<f64>,
    /// Write a PNG snapshot every K frames next to the CSV.
    #[arg(long, value_name = "K")]
    snapshot_every: Option<u64>,
    /// Per-frame CSV, or the summary CSV with --sweep.
    #[arg(long, default_value = "stats.csv")]
    out: PathBuf,
    /// Comma-separated ascending resolutions, e.g. 4K,10K,65.5K.
    #[arg(long, value_delimiter = ',')]
    sweep: Option<Vec<Grid>>,
    /// Report device limits and the largest cloth that fits.
    #[arg(long)]
    probe_limits: bool,
    /// Override the storage-binding limit (bytes) for --probe-limits.
    #[arg(long, value_name = "BYTES")]
    binding_limit: Option<u64>,
    /// Read buffers back every frame and run the oracle checks.
    #[arg(long)]
    verify: bool,
    /// Largest accepted CPU/GPU position gap in both mode.
    #[arg(long, default_value_t = 1e-3)]
    parity_tol: f64,
}

impl Args {
    fn config(&self) -> Result<ScenarioConfig, CliError> {
        let mut c = ScenarioConfig::new(self.scene, self.grid);
        if self.obstacle.is_some() {
            c.obstacle = self.obstacle.clone();
        }
        c.backend = self.backend;
        c.frames = self.frames;
        if let Some(dt) = self.dt {
            c.params.dt = dt;
        }
        if let Some(s) = self.substeps {
            c.params.substeps = s;
        }
        if let Some(k) = self.stiffness {
            c.params.stiffness = Stiffness::uniform(k);
        }
        if let Some(d) = self.damping {
            c.params.damping = d;
        }
        if let Some(a) = self.pull_accel {
            c.pull_acceleration = a;
        }
        c.snapshot_every = self.snapshot_every;
        c.output = self.out.clone();
        c.verify = self.verify;
        c.parity_tolerance = self.parity_tol;
        c.device = DeviceSelection::from_env()?;
        Ok(c)
    }
}

fn run(args: &Args) -> Result<u8, CliError> {
    let config = args.config()?;
    if args.probe_limits {
        let obstacle = match &config.obstacle {
            Some(o) => o.load()?,
            None => cloth_core::TriangleMesh::empty(),
        };
        let out = probe_limits(config.device, args.binding_limit, obstacle.vertices.len(), obstacle.triangles.len())?;
        print!("{}", out.render());
        return Ok(exit::OK);
    }
    if let Some(resolutions) = &args.sweep {
        let report = run_resolution_sweep(&config, resolutions)?;
        write_sweep_csv(&report, &config.output)?;
        for row in &report.rows {
            let fails = row.failures();
            let speedup = row.gpu_speedup().map_or(String::new(), |r| format!(", gpu speedup {r:.3}"));
            println!(
                "{} ({} nodes): {}{speedup}",
                row.grid,
                row.grid.nodes(),
                if fails.is_empty() { "ok".to_string() } else { fails.join("; ") }
            );
        }
        for backend in [Backend::Cpu, Backend::Gpu] {
            if let Some(row) = report.boundary(backend) {
                println!("{backend} first below 30 fps at {}", row.grid);
            }
        }
        println!("summary: {}", config.output.display());
        return Ok(if report.success() { exit::OK } else { exit::FAILURE });
    }
    config.validate()?;
    println!("{}", describe(&config));
    let report = run_scenario(&config)?;
    print!("{}", report.render());
    Ok(if report.success() { exit::OK } else { exit::FAILURE })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    match run(&args) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("clothsim: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
