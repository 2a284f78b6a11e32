//! Serial reference solver.
//!
//! Every frame runs: clear forces, accumulate spring forces and gravity,
//! integrate, detect collisions, respond, recompute vertex normals. The
//! solver is deterministic and runs in double precision, which makes it
//! the oracle for the compute engine.

use std::time::Instant;

use nalgebra::{RealField, Vector3};
use thiserror::Error;

use crate::collision::{
    apply_collision_response, detect_all, CollisionError, Collider, ContactAccumulator, DetectSettings,
};
use crate::io::{Backend, FrameStats};
use crate::mesh::{compute_vertex_normals, ClothMesh, TriangleMesh};
use crate::params::{Integrator, ParamError, SimParams};
use crate::Vec3;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("numerical divergence at node {node}: non-finite force")]
    Divergence { node: usize },
    #[error(transparent)]
    Collision(#[from] CollisionError),
    #[error(transparent)]
    Params(#[from] ParamError),
    #[error("invalid cloth mesh: {0}")]
    InvalidMesh(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub positions: Vec<Vec3>,
    pub previous_positions: Vec<Vec3>,
    pub velocities: Vec<Vec3>,
    pub forces: Vec<Vec3>,
    pub normals: Vec<Vec3>,
    pub step_count: u64,
    /// Springs skipped because their endpoints coincided.
    pub degenerate_springs: u64,
}

impl SolverState {
    pub fn from_mesh(mesh: &ClothMesh) -> Self {
        let positions = mesh.positions();
        let n = positions.len();
        Self {
            previous_positions: positions.clone(),
            normals: compute_vertex_normals(&positions, &mesh.triangles),
            positions,
            velocities: mesh
                .nodes
                .iter()
                .map(|node| if node.pinned { Vec3::zeros() } else { node.velocity })
                .collect(),
            forces: vec![Vec3::zeros(); n],
            step_count: 0,
            degenerate_springs: 0,
        }
    }

    pub fn kinetic_energy(&self, mesh: &ClothMesh) -> f64 {
        self.velocities
            .iter()
            .zip(&mesh.nodes)
            .map(|(v, n)| 0.5 * n.mass * v.norm_squared())
            .sum()
    }

    pub fn momentum(&self, mesh: &ClothMesh) -> Vec3 {
        self.velocities.iter().zip(&mesh.nodes).map(|(v, n)| v * n.mass).sum()
    }
}

/// Force on node A of a damped spring between A and B (node B receives the
/// negation). `None` when the endpoints coincide.
pub fn spring_force<T: RealField + Copy>(
    pos_a: Vector3<T>,
    pos_b: Vector3<T>,
    vel_a: Vector3<T>,
    vel_b: Vector3<T>,
    rest_length: T,
    stiffness: T,
    damping: T,
) -> Option<Vector3<T>> {
    let delta = pos_b - pos_a;
    let length = delta.norm();
    if !(length > nalgebra::convert(1e-12)) {
        return None;
    }
    let dir = delta / length;
    let spring = stiffness * (length - rest_length);
    let damper = damping * (vel_b.dot(&dir) - vel_a.dot(&dir));
    Some(dir * (spring + damper))
}

/// Adds spring, gravity and external forces into `state.forces`, which must
/// already be zero. Pinned nodes end with zero force.
pub fn accumulate_forces(state: &mut SolverState, mesh: &ClothMesh, params: &SimParams) {
    for s in &mesh.springs {
        let (a, b) = (s.a as usize, s.b as usize);
        let force = spring_force(
            state.positions[a],
            state.positions[b],
            state.velocities[a],
            state.velocities[b],
            s.rest_length,
            params.stiffness.get(s.kind),
            params.damping,
        );
        match force {
            Some(f) => {
                state.forces[a] += f;
                state.forces[b] -= f;
            }
            None => state.degenerate_springs += 1,
        }
    }
    for (force, node) in state.forces.iter_mut().zip(&mesh.nodes) {
        *force += params.gravity * node.mass;
    }
    if let Some(ext) = &params.external {
        for &i in &ext.nodes {
            let i = i as usize;
            state.forces[i] += ext.acceleration * mesh.nodes[i].mass;
        }
    }
    for (force, node) in state.forces.iter_mut().zip(&mesh.nodes) {
        if node.pinned {
            *force = Vec3::zeros();
        }
    }
}

/// Advances positions and velocities by `dt` from the accumulated forces.
/// `previous_positions` receives the pre-step positions.
pub fn integrate(state: &mut SolverState, mesh: &ClothMesh, params: &SimParams, dt: f64) -> Result<(), SolverError> {
    if let Some(node) = state.forces.iter().position(|f| !f.iter().all(|c| c.is_finite())) {
        return Err(SolverError::Divergence { node });
    }
    state.previous_positions.copy_from_slice(&state.positions);
    for (i, node) in mesh.nodes.iter().enumerate() {
        if node.pinned {
            continue;
        }
        let accel = state.forces[i] / node.mass;
        match params.integrator {
            Integrator::SemiImplicitEuler => {
                state.velocities[i] += accel * dt;
                state.positions[i] += state.velocities[i] * dt;
            }
            Integrator::ExplicitEuler => {
                state.positions[i] += state.velocities[i] * dt;
                state.velocities[i] += accel * dt;
            }
        }
    }
    Ok(())
}

/// Owns a cloth, an optional obstacle and the solver state.
#[derive(Debug, Clone)]
pub struct CpuSolver {
    pub mesh: ClothMesh,
    pub obstacle: TriangleMesh,
    pub params: SimParams,
    pub state: SolverState,
    pub accumulator: ContactAccumulator,
    collider: Collider,
}

impl CpuSolver {
    pub fn new(mesh: ClothMesh, obstacle: Option<TriangleMesh>, params: SimParams) -> Result<Self, SolverError> {
        params.validate()?;
        mesh.validate().map_err(SolverError::InvalidMesh)?;
        let obstacle = obstacle.unwrap_or_else(TriangleMesh::empty);
        let state = SolverState::from_mesh(&mesh);
        Ok(Self {
            accumulator: ContactAccumulator::new(mesh.node_count()),
            collider: Collider::new(&mesh, &obstacle),
            mesh,
            obstacle,
            params,
            state,
        })
    }

    /// One frame of the pipeline. Returns the frame's statistics.
    pub fn step(&mut self) -> Result<FrameStats, SolverError> {
        let started = Instant::now();
        let dt = self.params.step_dt();
        let settings = DetectSettings {
            epsilon: self.params.epsilon,
            margin: self.params.response_margin,
            max_pairs: self.params.max_collision_pairs,
            cull_pairs: self.params.cull_pairs,
        };
        let mut hits = 0;
        for _ in 0..self.params.substeps {
            self.state.forces.fill(Vec3::zeros());
            accumulate_forces(&mut self.state, &self.mesh, &self.params);
            integrate(&mut self.state, &self.mesh, &self.params, dt)?;
            if !self.obstacle.is_empty() {
                hits += detect_all(
                    &self.state,
                    &self.mesh,
                    &self.obstacle,
                    &self.collider,
                    &mut self.accumulator,
                    &settings,
                )?;
                apply_collision_response(
                    &mut self.state,
                    &self.mesh,
                    &mut self.accumulator,
                    self.params.response_mode,
                );
            }
        }
        self.state.normals = compute_vertex_normals(&self.state.positions, &self.mesh.triangles);
        self.state.step_count += 1;
        Ok(FrameStats::new(
            self.state.step_count,
            started.elapsed(),
            Backend::Cpu,
            self.mesh.node_count(),
            self.mesh.springs.len(),
            self.obstacle.triangles.len(),
            hits as u64,
        ))
    }
}
