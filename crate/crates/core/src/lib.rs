//! Mass-spring cloth simulation.
//!
//! The crate is split along the per-frame pipeline:
//!
//! * [`mesh`] builds cloth grids, icospheres and the shared data types.
//! * [`cpu`] is the serial reference solver (spring forces, semi-implicit
//!   Euler, collision handling, normal update).
//! * [`collision`] holds the edge/triangle intersection test and the
//!   response rule shared by both backends.
//! * [`gpu`] runs the same pipeline as compute kernels with fixed-point
//!   atomic accumulation.
//! * [`io`] reads OBJ obstacles, writes frame statistics and PNG snapshots.
//! * [`scene`] builds the hanging, drop and pull setups.

// `!(x > y)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collision;
pub mod cpu;
pub mod fixed;
pub mod gpu;
pub mod io;
pub mod mesh;
pub mod params;
pub mod scene;

pub use collision::{ContactAccumulator, EdgeTriangleHit};
pub use cpu::{CpuSolver, SolverError, SolverState};
pub use fixed::FixedPointVec3;
pub use gpu::{DeviceLimits, DeviceSelection, GpuBufferLayout, GpuEngine, GpuError};
pub use io::{Backend, FrameStats};
pub use mesh::{ClothMesh, MeshError, Node, PinnedRows, Spring, SpringKind, TriangleMesh};
pub use params::{ExternalForce, Integrator, ResponseMode, SimParams, Stiffness};

/// Double precision 3-vector used by the reference solver.
pub type Vec3 = nalgebra::Vector3<f64>;
