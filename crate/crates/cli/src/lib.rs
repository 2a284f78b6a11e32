//! Command-line harness for the cloth engine.
//!
//! [`run_scenario`] steps one scene on the CPU solver, the compute engine
//! or both and writes per-frame statistics. [`run_resolution_sweep`]
//! repeats a scene at growing cloth sizes and summarises steady-state frame
//! rates. [`probe_limits`] reports how large a cloth the device can hold.

// `!(x > y)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod probe;
mod scenario;
mod sweep;

use thiserror::Error;

pub use config::{parse_scene, scene_name, BackendChoice, Grid, ObstacleSource, ScenarioConfig, DEFAULT_SPHERE_RADIUS};
pub use probe::{probe_limits, ProbeOutput, BASELINE_BINDING_LIMIT, LAYOUT_FORMULA};
pub use scenario::{describe, fraction_outside, inradius, run_scenario, BackendRun, Check, ParityReport, ScenarioReport, OUTSIDE_FRACTION};
pub use sweep::{
    run_resolution_sweep, steady_state, write_sweep_csv, Outcome, SweepReport, SweepRow, Timing, REALTIME_FPS,
    STEADY_STATE_SKIP, SUMMARY_HEADER,
};

/// Process exit codes.
pub mod exit {
    pub const OK: u8 = 0;
    /// A frame failed, a check failed or parity was out of tolerance.
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const NO_ADAPTER: u8 = 3;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Gpu(#[from] cloth_core::GpuError),
    #[error(transparent)]
    Solver(#[from] cloth_core::SolverError),
    #[error(transparent)]
    Mesh(#[from] cloth_core::MeshError),
    #[error(transparent)]
    Obj(#[from] cloth_core::io::ObjError),
    #[error(transparent)]
    Stats(#[from] cloth_core::io::StatsError),
    #[error(transparent)]
    Snapshot(#[from] cloth_core::io::SnapshotError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Gpu(cloth_core::GpuError::InvalidSelection(_)) => exit::USAGE,
            CliError::Gpu(cloth_core::GpuError::NoAdapter(_)) => exit::NO_ADAPTER,
            _ => exit::FAILURE,
        }
    }
}
