//! Fixed-point vectors for integer atomic accumulation.
//!
//! Compute kernels can only add integers atomically, so forces and
//! collision displacements are accumulated as `round(value * scale)` in
//! `i32`. Integer addition is associative, which makes the accumulated
//! result independent of thread scheduling.

use bytemuck::{Pod, Zeroable};

/// Largest f32 strictly below 2^31; encoding clamps to `±` this before
/// converting so out-of-range values saturate instead of wrapping.
pub const ENCODE_LIMIT: f32 = 2_147_483_520.0;

/// Encodes one component. Ties round to even, matching the shading
/// language's `round`.
#[inline]
pub fn encode(value: f32, scale: f32) -> i32 {
    (value * scale).round_ties_even().clamp(-ENCODE_LIMIT, ENCODE_LIMIT) as i32
}

#[inline]
pub fn decode(value: i32, scale: f32) -> f32 {
    value as f32 / scale
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Pod, Zeroable)]
pub struct FixedPointVec3 {
    pub x: i32,
    pub y: i32,
    pub z: i32,
}

impl FixedPointVec3 {
    pub fn encode(v: [f32; 3], scale: f32) -> Self {
        Self {
            x: encode(v[0], scale),
            y: encode(v[1], scale),
            z: encode(v[2], scale),
        }
    }

    pub fn decode(self, scale: f32) -> [f32; 3] {
        [decode(self.x, scale), decode(self.y, scale), decode(self.z, scale)]
    }

    /// Wrapping component-wise sum, as a 32-bit atomic add behaves.
    pub fn wrapping_add(self, other: Self) -> Self {
        Self {
            x: self.x.wrapping_add(other.x),
            y: self.y.wrapping_add(other.y),
            z: self.z.wrapping_add(other.z),
        }
    }
}

/// Largest per-spring force magnitude whose accumulation over
/// `max_incident` springs cannot overflow an `i32` at `scale`.
pub fn max_safe_force(scale: f64, max_incident: usize) -> f64 {
    (i32::MAX as f64) / (scale * max_incident.max(1) as f64)
}
