//! Software compute device.
//!
//! Buffers are arrays of 32-bit words with atomic access; a dispatch runs
//! every invocation of every workgroup, optionally spreading workgroups
//! across threads. Kernels follow the shader in `kernels.wgsl` line for
//! line and compute in `f32`.

use std::sync::atomic::{AtomicU32, Ordering::Relaxed};

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::collision::{bounds_overlap, for_each_contact, ClothFace, ObstacleFace};
use crate::cpu::spring_force;
use crate::fixed::{decode, encode};

use super::layout::BufferRole;
use super::scene::{ParamsUniform, FLAG_EXTERNAL, FLAG_PINNED};

type V3 = Vector3<f32>;

/// One storage or uniform buffer.
#[derive(Debug)]
pub struct Storage {
    words: Vec<AtomicU32>,
}

impl Storage {
    pub fn zeroed(words: usize) -> Self {
        Self {
            words: (0..words).map(|_| AtomicU32::new(0)).collect(),
        }
    }

    #[inline]
    pub fn load(&self, i: usize) -> u32 {
        self.words[i].load(Relaxed)
    }

    #[inline]
    pub fn store(&self, i: usize, v: u32) {
        self.words[i].store(v, Relaxed)
    }

    #[inline]
    fn f32(&self, i: usize) -> f32 {
        f32::from_bits(self.load(i))
    }

    #[inline]
    fn i32(&self, i: usize) -> i32 {
        self.load(i) as i32
    }

    #[inline]
    fn vec3(&self, element: usize) -> V3 {
        V3::new(self.f32(3 * element), self.f32(3 * element + 1), self.f32(3 * element + 2))
    }

    #[inline]
    fn set_vec3(&self, element: usize, v: V3) {
        for k in 0..3 {
            self.store(3 * element + k, v[k].to_bits());
        }
    }

    /// `atomicAdd` on an `i32` word; two's complement wraps like the device.
    #[inline]
    fn atomic_add_i32(&self, i: usize, v: i32) {
        self.words[i].fetch_add(v as u32, Relaxed);
    }

    #[inline]
    fn fixed_vec3(&self, element: usize, scale: f32) -> V3 {
        V3::new(
            decode(self.i32(3 * element), scale),
            decode(self.i32(3 * element + 1), scale),
            decode(self.i32(3 * element + 2), scale),
        )
    }

    #[inline]
    fn add_fixed_vec3(&self, element: usize, v: V3, scale: f32) {
        for k in 0..3 {
            self.atomic_add_i32(3 * element + k, encode(v[k], scale));
        }
    }

    pub fn read(&self, out: &mut [u32]) {
        for (o, w) in out.iter_mut().zip(&self.words) {
            *o = w.load(Relaxed);
        }
    }

    pub fn write(&self, offset: usize, data: &[u32]) {
        for (w, &d) in self.words[offset..].iter().zip(data) {
            w.store(d, Relaxed);
        }
    }
}

/// All bindings of the engine, indexed by [`BufferRole`].
#[derive(Debug)]
pub struct Buffers {
    storage: Vec<Storage>,
}

impl Buffers {
    /// Allocates each role with the given number of bytes.
    pub fn allocate(sizes: impl IntoIterator<Item = (BufferRole, u64)>) -> Self {
        let mut storage: Vec<Storage> = BufferRole::ALL.iter().map(|_| Storage::zeroed(0)).collect();
        for (role, bytes) in sizes {
            storage[role as usize] = Storage::zeroed((bytes / 4) as usize);
        }
        Self { storage }
    }

    pub fn get(&self, role: BufferRole) -> &Storage {
        &self.storage[role as usize]
    }
}

/// Built-in values a kernel sees.
#[derive(Debug, Clone, Copy)]
pub struct Invocation {
    pub global_id: [u32; 3],
    pub num_workgroups: [u32; 3],
    pub workgroup_size: u32,
}

impl Invocation {
    /// Flat index for one-dimensional passes folded into x and y.
    #[inline]
    pub fn linear(&self) -> usize {
        self.global_id[0] as usize
            + self.global_id[1] as usize * self.num_workgroups[0] as usize * self.workgroup_size as usize
    }
}

/// Runs `kernel` for every invocation of a `(x, y, z)` workgroup grid with
/// workgroup size `(workgroup_size, 1, 1)`. Workgroups may run concurrently
/// and in any order; kernels may only communicate through atomics.
pub fn dispatch(workgroups: [u32; 3], workgroup_size: u32, parallel: bool, kernel: impl Fn(Invocation) + Sync) {
    let [x, y, z] = workgroups;
    let total = x as u64 * y as u64 * z as u64;
    let run = |w: u64| {
        let wid = [(w % x as u64) as u32, ((w / x as u64) % y as u64) as u32, (w / (x as u64 * y as u64)) as u32];
        for local in 0..workgroup_size {
            kernel(Invocation {
                global_id: [wid[0] * workgroup_size + local, wid[1], wid[2]],
                num_workgroups: workgroups,
                workgroup_size,
            });
        }
    };
    if parallel && total > 1 {
        (0..total).into_par_iter().for_each(run);
    } else {
        (0..total).for_each(run);
    }
}

fn node_count(p: &ParamsUniform) -> usize {
    p.counts[0] as usize
}

pub fn zero_forces(b: &Buffers, p: &ParamsUniform, inv: Invocation) {
    let i = inv.linear();
    if i >= node_count(p) {
        return;
    }
    let forces = b.get(BufferRole::ForcesFixedPoint);
    for k in 0..3 {
        forces.store(3 * i + k, 0);
    }
}

pub fn spring_force_pass(b: &Buffers, p: &ParamsUniform, inv: Invocation) {
    let i = inv.linear();
    if i >= p.counts[1] as usize {
        return;
    }
    let springs = b.get(BufferRole::SpringTable);
    let (a, bn) = (springs.load(4 * i) as usize, springs.load(4 * i + 1) as usize);
    let rest = springs.f32(4 * i + 2);
    let kind = springs.load(4 * i + 3) as usize;
    let pos = b.get(BufferRole::Positions);
    let vel = b.get(BufferRole::Velocities);
    let force = spring_force(
        pos.vec3(a),
        pos.vec3(bn),
        vel.vec3(a),
        vel.vec3(bn),
        rest,
        p.stiffness_damping[kind],
        p.stiffness_damping[3],
    );
    if let Some(f) = force {
        let scale = p.collision[2];
        let forces = b.get(BufferRole::ForcesFixedPoint);
        forces.add_fixed_vec3(a, f, scale);
        forces.add_fixed_vec3(bn, -f, scale);
    }
}

pub fn integrate(b: &Buffers, p: &ParamsUniform, inv: Invocation) {
    let i = inv.linear();
    if i >= node_count(p) {
        return;
    }
    let pos = b.get(BufferRole::Positions);
    let prev = b.get(BufferRole::PreviousPositions);
    let vel = b.get(BufferRole::Velocities);
    let attrs = b.get(BufferRole::NodeAttributes);
    let mass = attrs.f32(2 * i);
    let flags = attrs.load(2 * i + 1);
    let x = pos.vec3(i);
    prev.set_vec3(i, x);
    if flags & FLAG_PINNED != 0 {
        return;
    }
    let gravity = V3::new(p.gravity_dt[0], p.gravity_dt[1], p.gravity_dt[2]);
    let dt = p.gravity_dt[3];
    let mut force = b.get(BufferRole::ForcesFixedPoint).fixed_vec3(i, p.collision[2]) + gravity * mass;
    if flags & FLAG_EXTERNAL != 0 {
        force += V3::new(p.external[0], p.external[1], p.external[2]) * mass;
    }
    let accel = force / mass;
    let v = vel.vec3(i);
    if p.modes[0] == 0 {
        let v_new = v + accel * dt;
        vel.set_vec3(i, v_new);
        pos.set_vec3(i, x + v_new * dt);
    } else {
        pos.set_vec3(i, x + v * dt);
        vel.set_vec3(i, v + accel * dt);
    }
}

/// One invocation per (cloth triangle, obstacle triangle) pair: `x` walks
/// cloth triangles, `y` and `z` together walk obstacle triangles.
pub fn collision_detect(b: &Buffers, p: &ParamsUniform, inv: Invocation) {
    let ct = inv.global_id[0] as usize;
    let ot = inv.global_id[1] as usize + inv.global_id[2] as usize * inv.num_workgroups[1] as usize;
    if ct >= p.counts[2] as usize || ot >= p.counts[3] as usize {
        return;
    }
    let tris = b.get(BufferRole::TriangleTable);
    let nodes = [tris.load(4 * ct), tris.load(4 * ct + 1), tris.load(4 * ct + 2)];
    let cloth_mask = tris.load(4 * ct + 3);
    let pos = b.get(BufferRole::Positions);
    let positions = [pos.vec3(nodes[0] as usize), pos.vec3(nodes[1] as usize), pos.vec3(nodes[2] as usize)];
    let otris = b.get(BufferRole::ObstacleTriangles);
    let overts = b.get(BufferRole::ObstacleVertices);
    let base = 8 * ot;
    let vertices = [
        overts.vec3(otris.load(base) as usize),
        overts.vec3(otris.load(base + 1) as usize),
        overts.vec3(otris.load(base + 2) as usize),
    ];
    if p.modes[2] != 0 && !bounds_overlap(&positions, &vertices, p.collision[0]) {
        return;
    }
    let prev = b.get(BufferRole::PreviousPositions);
    let cloth = ClothFace {
        nodes,
        positions,
        previous: [prev.vec3(nodes[0] as usize), prev.vec3(nodes[1] as usize), prev.vec3(nodes[2] as usize)],
    };
    let obstacle = ObstacleFace {
        vertices,
        normal: V3::new(otris.f32(base + 4), otris.f32(base + 5), otris.f32(base + 6)),
        solid: p.modes[3] != 0,
    };
    let mask = (cloth_mask | (otris.load(base + 3) << 3)) as u8;
    let scale = p.collision[2];
    let acc = b.get(BufferRole::ResponseAccumulator);
    let count = b.get(BufferRole::ResponseCount);
    let hits = for_each_contact(&cloth, &obstacle, p.collision[0], p.collision[1], mask, |c| {
        acc.add_fixed_vec3(c.node as usize, c.direction, scale);
        count.atomic_add_i32(c.node as usize, 1);
    });
    if hits > 0 {
        count.atomic_add_i32(node_count(p), hits as i32);
    }
}

pub fn collision_respond(b: &Buffers, p: &ParamsUniform, inv: Invocation) {
    let i = inv.linear();
    if i >= node_count(p) {
        return;
    }
    let acc = b.get(BufferRole::ResponseAccumulator);
    let count = b.get(BufferRole::ResponseCount);
    let n = count.i32(i);
    let pinned = b.get(BufferRole::NodeAttributes).load(2 * i + 1) & FLAG_PINNED != 0;
    if n > 0 && !pinned {
        let vel = b.get(BufferRole::Velocities);
        let pos = b.get(BufferRole::Positions);
        let sum = acc.fixed_vec3(i, p.collision[2]);
        let shift = if p.modes[1] == 0 { sum / n as f32 } else { sum };
        vel.set_vec3(i, vel.vec3(i) * -0.5);
        pos.set_vec3(i, pos.vec3(i) + shift);
    }
    for k in 0..3 {
        acc.store(3 * i + k, 0);
    }
    count.store(i, 0);
}

pub fn update_normals(b: &Buffers, p: &ParamsUniform, inv: Invocation) {
    let i = inv.linear();
    if i >= node_count(p) {
        return;
    }
    let offsets = b.get(BufferRole::VertexTriangleOffsets);
    let list = b.get(BufferRole::VertexTriangleList);
    let tris = b.get(BufferRole::TriangleTable);
    let pos = b.get(BufferRole::Positions);
    let mut sum = V3::zeros();
    for k in offsets.load(i) as usize..offsets.load(i + 1) as usize {
        let t = list.load(k) as usize;
        let v0 = pos.vec3(tris.load(4 * t) as usize);
        let v1 = pos.vec3(tris.load(4 * t + 1) as usize);
        let v2 = pos.vec3(tris.load(4 * t + 2) as usize);
        if let Some(n) = (v1 - v0).cross(&(v2 - v0)).try_normalize(0.0) {
            sum += n;
        }
    }
    let normal = sum.try_normalize(0.0).unwrap_or_else(V3::y);
    b.get(BufferRole::Normals).set_vec3(i, normal);
}
