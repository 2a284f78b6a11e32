use thiserror::Error;

use crate::mesh::SpringKind;
use crate::Vec3;

/// Default fixed-point scale: 2^16 integer units per force or displacement unit.
pub const DEFAULT_FIXED_POINT_SCALE: f64 = 65536.0;

/// Workgroup width used by every compute kernel unless overridden.
pub const DEFAULT_WORKGROUP_SIZE: u32 = 256;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stiffness {
    pub structural: f64,
    pub shear: f64,
    pub bend: f64,
}

impl Stiffness {
    pub fn uniform(k: f64) -> Self {
        Self {
            structural: k,
            shear: k,
            bend: k,
        }
    }

    pub fn get(&self, kind: SpringKind) -> f64 {
        match kind {
            SpringKind::Structural => self.structural,
            SpringKind::Shear => self.shear,
            SpringKind::Bend => self.bend,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Integrator {
    /// Velocity first, then position from the new velocity.
    #[default]
    SemiImplicitEuler,
    /// Position from the old velocity. Unstable for stiff springs; kept for comparison.
    ExplicitEuler,
}

/// How accumulated collision responses move a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseMode {
    /// Displacement is the mean of the contributions.
    #[default]
    Averaged,
    /// Displacement is the plain sum of the contributions.
    RawSum,
}

/// Constant acceleration applied to a subset of nodes (e.g. pulling one edge).
#[derive(Debug, Clone, PartialEq)]
pub struct ExternalForce {
    pub nodes: Vec<u32>,
    pub acceleration: Vec3,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimParams {
    /// Seconds per frame.
    pub dt: f64,
    /// Physics steps per frame; each advances `dt / substeps`.
    pub substeps: u32,
    pub gravity: Vec3,
    pub stiffness: Stiffness,
    pub damping: f64,
    /// Tolerance of the edge/triangle test (model units).
    pub epsilon: f64,
    /// Extra push beyond the penetration depth (model units).
    pub response_margin: f64,
    /// Integer units per force (or displacement) unit on the compute engine.
    pub fixed_point_scale: f64,
    pub workgroup_size: u32,
    pub integrator: Integrator,
    pub response_mode: ResponseMode,
    /// Upper bound on cloth x obstacle triangle pairs tested per frame.
    pub max_collision_pairs: u64,
    /// Skip triangle pairs whose bounding boxes are apart by more than
    /// `epsilon` before running the edge tests.
    pub cull_pairs: bool,
    pub external: Option<ExternalForce>,
}

/// Node mass the defaults are tuned for; see [`SimParams::default`].
pub const DEFAULT_NODE_MASS: f64 = 0.1;

impl Default for SimParams {
    /// Stiffness, damping and substep count keep a 64 x 64 hanging cloth
    /// with node mass [`DEFAULT_NODE_MASS`] stable at `dt = 0.016`. Only the
    /// ratios `k / m` and `c / m` matter for the motion; heavier nodes keep
    /// forces far above the fixed-point quantum.
    fn default() -> Self {
        Self {
            dt: 0.016,
            substeps: 16,
            gravity: Vec3::new(0.0, -9.81, 0.0),
            stiffness: Stiffness::uniform(2000.0),
            damping: 10.0,
            epsilon: 1e-6,
            response_margin: 1e-3,
            fixed_point_scale: DEFAULT_FIXED_POINT_SCALE,
            workgroup_size: DEFAULT_WORKGROUP_SIZE,
            integrator: Integrator::default(),
            response_mode: ResponseMode::default(),
            max_collision_pairs: 1 << 34,
            cull_pairs: true,
            external: None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum ParamError {
    #[error("{name} is invalid: {value}")]
    Invalid { name: &'static str, value: f64 },
    #[error("workgroup size must be positive")]
    ZeroWorkgroup,
    #[error("substep count must be positive")]
    ZeroSubsteps,
}

impl SimParams {
    pub fn validate(&self) -> Result<(), ParamError> {
        let checks = [
            ("dt", self.dt, self.dt > 0.0),
            ("structural stiffness", self.stiffness.structural, self.stiffness.structural >= 0.0),
            ("shear stiffness", self.stiffness.shear, self.stiffness.shear >= 0.0),
            ("bend stiffness", self.stiffness.bend, self.stiffness.bend >= 0.0),
            ("damping", self.damping, self.damping >= 0.0),
            ("epsilon", self.epsilon, self.epsilon > 0.0),
            ("response margin", self.response_margin, self.response_margin >= 0.0),
            ("fixed-point scale", self.fixed_point_scale, self.fixed_point_scale >= 1.0),
        ];
        for (name, value, ok) in checks {
            if !ok || !value.is_finite() {
                return Err(ParamError::Invalid { name, value });
            }
        }
        if self.workgroup_size == 0 {
            return Err(ParamError::ZeroWorkgroup);
        }
        if self.substeps == 0 {
            return Err(ParamError::ZeroSubsteps);
        }
        Ok(())
    }

    /// Duration of one physics substep.
    pub fn step_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }
}
