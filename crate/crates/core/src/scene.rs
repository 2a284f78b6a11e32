//! Ready-made experiment scenes.
//!
//! All cloths share the same node spacing, so a finer grid is a larger
//! cloth rather than a denser one. Node mass is [`DEFAULT_NODE_MASS`].

use nalgebra::Isometry3;

use crate::mesh::{generate_cloth_grid, ClothMesh, MeshError, PinnedRows, TriangleMesh};
use crate::params::{ExternalForce, SimParams, DEFAULT_NODE_MASS};
use crate::Vec3;

/// Distance between neighbouring cloth nodes; a 32-node row is one unit wide.
pub const NODE_SPACING: f64 = 1.0 / 31.0;

/// Height of the cloth above the obstacle's top at the start of a drop.
pub const DROP_CLEARANCE: f64 = 0.05;

/// Lateral acceleration on the pulled edge when none is given.
pub const DEFAULT_PULL_ACCELERATION: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SceneKind {
    /// Vertical cloth pinned along its top row, gravity only.
    Hanging,
    /// Horizontal cloth falling onto an obstacle.
    Drop,
    /// Drop with one edge pulled sideways.
    Pull,
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub kind: SceneKind,
    pub mesh: ClothMesh,
    pub obstacle: Option<TriangleMesh>,
    pub params: SimParams,
}

fn flat_cloth(nx: usize, ny: usize, pinned: &PinnedRows) -> Result<ClothMesh, MeshError> {
    generate_cloth_grid(
        nx,
        ny,
        (nx.max(2) - 1) as f64 * NODE_SPACING,
        (ny.max(2) - 1) as f64 * NODE_SPACING,
        DEFAULT_NODE_MASS * (nx * ny) as f64,
        pinned,
    )
}

/// Cloth hanging in the xy-plane with row 0 pinned at the top, centred on
/// the origin.
pub fn hanging(nx: usize, ny: usize, params: SimParams) -> Result<Scene, MeshError> {
    let mut mesh = flat_cloth(nx, ny, &PinnedRows::Top)?;
    // Row 0 sits at z = -h/2; a quarter turn about x lifts it to y = +h/2.
    mesh.rigid_transform(&Isometry3::rotation(Vec3::x() * std::f64::consts::FRAC_PI_2));
    Ok(Scene {
        kind: SceneKind::Hanging,
        mesh,
        obstacle: None,
        params,
    })
}

/// Horizontal cloth centred over the obstacle, [`DROP_CLEARANCE`] above it.
pub fn drop(nx: usize, ny: usize, obstacle: TriangleMesh, params: SimParams) -> Result<Scene, MeshError> {
    let mut mesh = flat_cloth(nx, ny, &PinnedRows::None)?;
    let (lo, hi) = obstacle.bounds().unwrap_or((Vec3::zeros(), Vec3::zeros()));
    let centre = (lo + hi) * 0.5;
    mesh.translate(Vec3::new(centre.x, hi.y + DROP_CLEARANCE, centre.z));
    Ok(Scene {
        kind: SceneKind::Drop,
        mesh,
        obstacle: Some(obstacle),
        params,
    })
}

/// Drop scene whose last column (the +x edge) accelerates along +x.
pub fn pull(
    nx: usize,
    ny: usize,
    obstacle: TriangleMesh,
    params: SimParams,
    acceleration: f64,
) -> Result<Scene, MeshError> {
    let mut scene = drop(nx, ny, obstacle, params)?;
    scene.kind = SceneKind::Pull;
    scene.params.external = Some(ExternalForce {
        nodes: (0..ny).map(|j| (j * nx + nx - 1) as u32).collect(),
        acceleration: Vec3::new(acceleration, 0.0, 0.0),
    });
    Ok(scene)
}
