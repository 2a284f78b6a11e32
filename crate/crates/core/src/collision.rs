//! Narrow-phase collision between the cloth and a static obstacle.
//!
//! A cloth/obstacle triangle pair is tested edge by edge: each cloth edge
//! against the obstacle triangle and each obstacle edge against the cloth
//! triangle, using a Möller–Trumbore test bounded to the edge segment.
//! Hits push the affected cloth nodes along the obstacle face normal.

use nalgebra::{RealField, Vector3};
use thiserror::Error;

use crate::cpu::SolverState;
use crate::mesh::{edge_owner_masks, ClothMesh, TriangleMesh};
use crate::params::ResponseMode;
use crate::Vec3;

/// Mask bits selecting the three cloth edges (low bits) and the three
/// obstacle edges (high bits) of a triangle pair.
pub const CLOTH_EDGES: u8 = 0b000_111;
pub const OBSTACLE_EDGES: u8 = 0b111_000;
pub const ALL_EDGES: u8 = CLOTH_EDGES | OBSTACLE_EDGES;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EdgeTriangleHit<T: RealField + Copy> {
    /// Distance from the edge start along the normalized edge direction.
    pub t: T,
    pub u: T,
    pub v: T,
    pub point: Vector3<T>,
}

/// Intersects the segment `start..end` with triangle `(v0, v1, v2)`.
///
/// Returns a hit only when the segment is not parallel to the plane
/// (`|a| >= epsilon`), the barycentrics satisfy `u in [0, 1]`, `v >= 0`,
/// `u + v <= 1`, and the crossing lies strictly inside the edge,
/// `epsilon < t < |end - start|`.
pub fn edge_triangle_intersect<T: RealField + Copy>(
    start: Vector3<T>,
    end: Vector3<T>,
    v0: Vector3<T>,
    v1: Vector3<T>,
    v2: Vector3<T>,
    epsilon: T,
) -> Option<EdgeTriangleHit<T>> {
    let d = end - start;
    let length = d.norm();
    if !(length > epsilon) {
        return None;
    }
    let r = d / length;
    let e1 = v1 - v0;
    let e2 = v2 - v0;
    let h = r.cross(&e2);
    let a = e1.dot(&h);
    // Written so that NaN falls through to "no hit".
    if !(a.abs() >= epsilon) {
        return None;
    }
    let f = T::one() / a;
    let s = start - v0;
    let u = f * s.dot(&h);
    if !(u >= T::zero() && u <= T::one()) {
        return None;
    }
    let q = s.cross(&e1);
    let v = f * r.dot(&q);
    if !(v >= T::zero() && u + v <= T::one()) {
        return None;
    }
    let t = f * e2.dot(&q);
    if !(t > epsilon && t < length) {
        return None;
    }
    Some(EdgeTriangleHit {
        t,
        u,
        v,
        point: start + r * t,
    })
}

/// A cloth triangle with its current and start-of-step node positions.
#[derive(Debug, Clone, Copy)]
pub struct ClothFace<T: RealField + Copy> {
    pub nodes: [u32; 3],
    pub positions: [Vector3<T>; 3],
    pub previous: [Vector3<T>; 3],
}

#[derive(Debug, Clone, Copy)]
pub struct ObstacleFace<T: RealField + Copy> {
    pub vertices: [Vector3<T>; 3],
    /// Unit face normal.
    pub normal: Vector3<T>,
    /// The face bounds a closed solid and `normal` points out of it.
    pub solid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Contact<T: RealField + Copy> {
    pub node: u32,
    pub direction: Vector3<T>,
}

/// Displacement that moves a node to the free side of the obstacle plane:
/// the face normal oriented toward that side, scaled by the current
/// penetration depth (clamped at zero) plus `margin`.
///
/// For a solid the free side is always outside. For an open surface it is
/// the side the node occupied at the start of the step.
pub fn response_direction<T: RealField + Copy>(
    position: Vector3<T>,
    previous: Vector3<T>,
    face: &ObstacleFace<T>,
    margin: T,
) -> Vector3<T> {
    let origin = face.vertices[0];
    let normal = if face.solid || (previous - origin).dot(&face.normal) >= T::zero() {
        face.normal
    } else {
        -face.normal
    };
    let depth = (-(position - origin).dot(&normal)).max(T::zero());
    normal * (depth + margin)
}

/// Runs the edge tests selected by `edge_mask` on one triangle pair and
/// reports every contact through `emit`. Returns the number of edge hits.
///
/// A cloth-edge hit affects the two endpoint nodes; an obstacle-edge hit
/// affects all three nodes of the cloth triangle. Cloth edges run from the
/// lower node index to the higher one.
pub fn for_each_contact<T: RealField + Copy>(
    cloth: &ClothFace<T>,
    obstacle: &ObstacleFace<T>,
    epsilon: T,
    margin: T,
    edge_mask: u8,
    mut emit: impl FnMut(Contact<T>),
) -> u32 {
    let mut hits = 0;
    let mut push = |k: usize| {
        emit(Contact {
            node: cloth.nodes[k],
            direction: response_direction(cloth.positions[k], cloth.previous[k], obstacle, margin),
        })
    };
    let [o0, o1, o2] = obstacle.vertices;
    for k in 0..3 {
        if edge_mask & (1 << k) == 0 {
            continue;
        }
        let j = (k + 1) % 3;
        // Lower node index first, so the verdict does not depend on which
        // triangle owns the edge or how it is wound.
        let (s, e) = if cloth.nodes[k] < cloth.nodes[j] { (k, j) } else { (j, k) };
        if edge_triangle_intersect(cloth.positions[s], cloth.positions[e], o0, o1, o2, epsilon).is_some() {
            hits += 1;
            push(k);
            push(j);
        }
    }
    let [c0, c1, c2] = cloth.positions;
    for k in 0..3 {
        if edge_mask & (8 << k) == 0 {
            continue;
        }
        let (a, b) = (obstacle.vertices[k], obstacle.vertices[(k + 1) % 3]);
        if edge_triangle_intersect(a, b, c0, c1, c2, epsilon).is_some() {
            hits += 1;
            for n in 0..3 {
                push(n);
            }
        }
    }
    hits
}

/// Whether the axis-aligned boxes of two triangles, grown by `pad`,
/// overlap. Disjoint boxes rule out every edge/triangle hit between them.
pub fn bounds_overlap<T: RealField + Copy>(a: &[Vector3<T>; 3], b: &[Vector3<T>; 3], pad: T) -> bool {
    for k in 0..3 {
        let a_min = a[0][k].min(a[1][k]).min(a[2][k]);
        let a_max = a[0][k].max(a[1][k]).max(a[2][k]);
        let b_min = b[0][k].min(b[1][k]).min(b[2][k]);
        let b_max = b[0][k].max(b[1][k]).max(b[2][k]);
        if a_min > b_max + pad || b_min > a_max + pad {
            return false;
        }
    }
    true
}

/// All six edge/triangle combinations of a pair, collected into a list.
pub fn triangle_triangle_contacts<T: RealField + Copy>(
    cloth: &ClothFace<T>,
    obstacle: &ObstacleFace<T>,
    epsilon: T,
    margin: T,
) -> Vec<Contact<T>> {
    let mut contacts = Vec::new();
    for_each_contact(cloth, obstacle, epsilon, margin, ALL_EDGES, |c| contacts.push(c));
    contacts
}

/// Per-node sums of response directions and contact counts for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactAccumulator {
    pub sum: Vec<Vec3>,
    pub count: Vec<u32>,
}

impl ContactAccumulator {
    pub fn new(nodes: usize) -> Self {
        Self {
            sum: vec![Vec3::zeros(); nodes],
            count: vec![0; nodes],
        }
    }

    pub fn add(&mut self, contact: Contact<f64>) {
        let i = contact.node as usize;
        self.sum[i] += contact.direction;
        self.count[i] += 1;
    }

    pub fn is_clear(&self) -> bool {
        self.count.iter().all(|&c| c == 0) && self.sum.iter().all(|s| *s == Vec3::zeros())
    }

    pub fn reset(&mut self) {
        self.sum.fill(Vec3::zeros());
        self.count.fill(0);
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum CollisionError {
    #[error("{pairs} triangle pairs per frame exceed the budget of {budget}")]
    BudgetExceeded { pairs: u64, budget: u64 },
}

/// Which edge tests each triangle pair runs.
///
/// A cloth edge shared by two cloth triangles is tested once, by its owner.
/// Obstacle edges are tested from both adjacent faces, so a crossing of a
/// shared obstacle edge is pushed along both face normals rather than along
/// whichever face happens to own the edge.
#[derive(Debug, Clone)]
pub struct Collider {
    pub cloth_edge_masks: Vec<u8>,
    pub obstacle_edge_masks: Vec<u8>,
    pub obstacle_solid: bool,
}

impl Collider {
    pub fn new(cloth: &ClothMesh, obstacle: &TriangleMesh) -> Self {
        Self {
            cloth_edge_masks: edge_owner_masks(&cloth.triangles),
            obstacle_edge_masks: vec![0b111; obstacle.triangles.len()],
            obstacle_solid: obstacle.is_closed_outward(),
        }
    }

    /// Mask passed to [`for_each_contact`] for the pair `(cloth_tri, obstacle_tri)`.
    pub fn pair_mask(&self, cloth_tri: usize, obstacle_tri: usize) -> u8 {
        self.cloth_edge_masks[cloth_tri] | (self.obstacle_edge_masks[obstacle_tri] << 3)
    }
}

pub struct DetectSettings {
    pub epsilon: f64,
    pub margin: f64,
    pub max_pairs: u64,
    pub cull_pairs: bool,
}

/// Tests every cloth triangle against every obstacle triangle and
/// accumulates the contacts. Returns the number of edge hits.
pub fn detect_all(
    state: &SolverState,
    cloth: &ClothMesh,
    obstacle: &TriangleMesh,
    collider: &Collider,
    accumulator: &mut ContactAccumulator,
    settings: &DetectSettings,
) -> Result<u32, CollisionError> {
    let pairs = cloth.triangles.len() as u64 * obstacle.triangles.len() as u64;
    if pairs > settings.max_pairs {
        return Err(CollisionError::BudgetExceeded {
            pairs,
            budget: settings.max_pairs,
        });
    }
    let faces: Vec<ObstacleFace<f64>> = obstacle
        .triangles
        .iter()
        .zip(&obstacle.face_normals)
        .map(|(t, n)| ObstacleFace {
            vertices: t.map(|v| obstacle.vertices[v as usize]),
            normal: *n,
            solid: collider.obstacle_solid,
        })
        .collect();
    let mut hits = 0;
    for (ct, tri) in cloth.triangles.iter().enumerate() {
        let face = ClothFace {
            nodes: *tri,
            positions: tri.map(|v| state.positions[v as usize]),
            previous: tri.map(|v| state.previous_positions[v as usize]),
        };
        for (ot, obstacle_face) in faces.iter().enumerate() {
            if settings.cull_pairs && !bounds_overlap(&face.positions, &obstacle_face.vertices, settings.epsilon) {
                continue;
            }
            hits += for_each_contact(
                &face,
                obstacle_face,
                settings.epsilon,
                settings.margin,
                collider.pair_mask(ct, ot),
                |c| accumulator.add(c),
            );
        }
    }
    Ok(hits)
}

/// Applies the accumulated responses and clears the accumulator.
///
/// A node with at least one contact has its velocity inverted and halved
/// and is displaced by the mean (or, in [`ResponseMode::RawSum`], the sum)
/// of its response directions. Pinned nodes never move.
pub fn apply_collision_response(
    state: &mut SolverState,
    cloth: &ClothMesh,
    accumulator: &mut ContactAccumulator,
    mode: ResponseMode,
) {
    for (i, node) in cloth.nodes.iter().enumerate() {
        let count = accumulator.count[i];
        if count > 0 && !node.pinned {
            state.velocities[i] *= -0.5;
            state.positions[i] += match mode {
                ResponseMode::Averaged => accumulator.sum[i] / count as f64,
                ResponseMode::RawSum => accumulator.sum[i],
            };
        }
    }
    accumulator.reset();
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{generate_cloth_grid, PinnedRows};

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    fn tri() -> [Vec3; 3] {
        [v(-1.0, -1.0, 0.0), v(1.0, -1.0, 0.0), v(0.0, 1.0, 0.0)]
    }

    #[test]
    fn perpendicular_crossing_hits_origin() {
        let [a, b, c] = tri();
        let hit = edge_triangle_intersect(v(0.0, 0.0, -1.0), v(0.0, 0.0, 1.0), a, b, c, 1e-6).unwrap();
        assert!((hit.t - 1.0).abs() < 1e-12);
        assert!(hit.point.norm() < 1e-12);
    }

    #[test]
    fn parallel_edge_misses() {
        let [a, b, c] = tri();
        assert!(edge_triangle_intersect(v(0.0, 0.0, 1.0), v(1.0, 0.0, 1.0), a, b, c, 1e-6).is_none());
    }

    #[test]
    fn segment_bounds_are_exclusive() {
        let [a, b, c] = tri();
        // Ends short of the plane.
        assert!(edge_triangle_intersect(v(0.0, 0.0, -1.0), v(0.0, 0.0, -0.1), a, b, c, 1e-6).is_none());
        // Starts on the plane: t = 0 is not inside the edge.
        assert!(edge_triangle_intersect(v(0.0, 0.0, 0.0), v(0.0, 0.0, 1.0), a, b, c, 1e-6).is_none());
        // Ends on the plane: t = |d| is not inside the edge either.
        assert!(edge_triangle_intersect(v(0.0, 0.0, -1.0), v(0.0, 0.0, 0.0), a, b, c, 1e-6).is_none());
        // Outside the triangle.
        assert!(edge_triangle_intersect(v(3.0, 0.0, -1.0), v(3.0, 0.0, 1.0), a, b, c, 1e-6).is_none());
    }

    #[test]
    fn degenerate_inputs_never_hit() {
        let s = v(0.0, 0.0, -1.0);
        let e = v(0.0, 0.0, 1.0);
        assert!(edge_triangle_intersect(s, e, Vec3::zeros(), v(1.0, 0.0, 0.0), v(2.0, 0.0, 0.0), 1e-6).is_none());
        let [a, b, c] = tri();
        assert!(edge_triangle_intersect(s, s, a, b, c, 1e-6).is_none());
        let nan = v(f64::NAN, 0.0, 0.0);
        assert!(edge_triangle_intersect(nan, e, a, b, c, 1e-6).is_none());
    }

    #[test]
    fn reversed_edge_agrees() {
        let [a, b, c] = tri();
        let (s, e) = (v(0.2, 0.1, -0.7), v(-0.1, 0.3, 1.3));
        let fwd = edge_triangle_intersect(s, e, a, b, c, 1e-6).unwrap();
        let back = edge_triangle_intersect(e, s, a, b, c, 1e-6).unwrap();
        assert!((fwd.t + back.t - (e - s).norm()).abs() < 1e-12);
        assert!((fwd.point - back.point).norm() < 1e-12);
    }

    fn obstacle() -> ObstacleFace<f64> {
        ObstacleFace {
            vertices: tri(),
            normal: v(0.0, 0.0, 1.0),
            solid: false,
        }
    }

    #[test]
    fn disjoint_pair_has_no_contacts() {
        let cloth = ClothFace {
            nodes: [0, 1, 2],
            positions: [v(10.0, 0.0, 5.0), v(11.0, 0.0, 5.0), v(10.0, 1.0, 5.0)],
            previous: [v(10.0, 0.0, 5.0), v(11.0, 0.0, 5.0), v(10.0, 1.0, 5.0)],
        };
        assert!(triangle_triangle_contacts(&cloth, &obstacle(), 1e-6, 1e-3).is_empty());
    }

    #[test]
    fn piercing_edge_reports_both_endpoints() {
        // Cloth edge 0-1 runs through the obstacle centroid along the normal.
        let centroid = tri().iter().sum::<Vec3>() / 3.0;
        let p = [centroid + v(0.0, 0.0, 0.3), centroid - v(0.0, 0.0, 0.2), centroid + v(5.0, 5.0, 0.3)];
        let cloth = ClothFace {
            nodes: [4, 7, 9],
            positions: p,
            previous: [p[0], centroid + v(0.0, 0.0, 0.1), p[2]],
        };
        let mut contacts = Vec::new();
        let hits = for_each_contact(&cloth, &obstacle(), 1e-6, 1e-3, 0b001, |c| contacts.push(c));
        assert_eq!(hits, 1);
        let nodes: Vec<u32> = contacts.iter().map(|c| c.node).collect();
        assert_eq!(nodes, vec![4, 7]);
        for c in &contacts {
            assert!(c.direction.x.abs() < 1e-15 && c.direction.y.abs() < 1e-15);
            assert!(c.direction.z > 0.0);
        }
        // Node 7 sank 0.2 below the plane: pushed out by depth plus margin.
        assert!((contacts[1].direction.z - 0.201).abs() < 1e-12);
        assert!((contacts[0].direction.z - 0.001).abs() < 1e-12);
        // The cut through the cloth leaves the obstacle across an obstacle
        // edge, so the full pair test also pushes the third node.
        let all = triangle_triangle_contacts(&cloth, &obstacle(), 1e-6, 1e-3);
        assert!(all.iter().any(|c| c.node == 9));
    }

    #[test]
    fn obstacle_edge_through_cloth_pushes_whole_triangle() {
        // A small obstacle spike whose edge crosses a large cloth triangle.
        let spike = ObstacleFace {
            vertices: [v(0.0, 0.0, -0.5), v(0.0, 0.0, 0.5), v(0.5, 0.0, 0.0)],
            normal: v(0.0, -1.0, 0.0),
            solid: false,
        };
        let p = [v(-1.0, -1.0, 0.0), v(1.0, -1.0, 0.0), v(0.0, 1.0, 0.0)];
        let cloth = ClothFace {
            nodes: [0, 1, 2],
            positions: p,
            previous: p,
        };
        let mut hits = 0;
        let mut nodes = Vec::new();
        let edges = for_each_contact(&cloth, &spike, 1e-6, 1e-3, OBSTACLE_EDGES, |c| {
            hits += 1;
            nodes.push(c.node)
        });
        // Only the spike edge along z crosses the cloth plane.
        assert_eq!(edges, 1);
        assert_eq!(nodes, vec![0, 1, 2]);
    }

    #[test]
    fn response_depth_is_clamped_on_the_safe_side() {
        let face = obstacle();
        let d = response_direction(v(0.0, 0.0, 0.5), v(0.0, 0.0, 0.6), &face, 0.01);
        assert!((d - v(0.0, 0.0, 0.01)).norm() < 1e-15);
        // Came from below: pushed downward.
        let d = response_direction(v(0.0, 0.0, 0.25), v(0.0, 0.0, -0.1), &face, 0.01);
        assert!((d - v(0.0, 0.0, -0.26)).norm() < 1e-15);
        // A solid always pushes outward, however the node got inside.
        let solid = ObstacleFace { solid: true, ..face };
        let d = response_direction(v(0.0, 0.0, -0.25), v(0.0, 0.0, -0.1), &solid, 0.01);
        assert!((d - v(0.0, 0.0, 0.26)).norm() < 1e-15);
    }

    fn single_node_state() -> (ClothMesh, SolverState) {
        let mesh = generate_cloth_grid(2, 2, 1.0, 1.0, 4.0, &PinnedRows::None).unwrap();
        let state = SolverState::from_mesh(&mesh);
        (mesh, state)
    }

    #[test]
    fn response_trace_single_node() {
        let (mesh, mut state) = single_node_state();
        state.velocities[0] = v(0.0, 0.0, 2.0);
        let before = state.positions[0];
        let mut acc = ContactAccumulator::new(4);
        acc.add(Contact {
            node: 0,
            direction: v(0.0, 0.1, 0.0),
        });
        apply_collision_response(&mut state, &mesh, &mut acc, ResponseMode::Averaged);
        assert_eq!(state.velocities[0], v(0.0, 0.0, -1.0));
        assert_eq!(state.positions[0], before + v(0.0, 0.1, 0.0));
        assert!(acc.is_clear());
        // Untouched nodes keep their state.
        assert_eq!(state.positions[1], mesh.nodes[1].position);
    }

    #[test]
    fn identical_contributions_average_to_themselves() {
        let (mesh, mut state) = single_node_state();
        let d = v(0.03, -0.02, 0.5);
        let mut acc = ContactAccumulator::new(4);
        for _ in 0..4 {
            acc.add(Contact { node: 2, direction: d });
        }
        let before = state.positions[2];
        apply_collision_response(&mut state, &mesh, &mut acc, ResponseMode::Averaged);
        assert!((state.positions[2] - (before + d)).norm() < 1e-15);

        for _ in 0..4 {
            acc.add(Contact { node: 2, direction: d });
        }
        let before = state.positions[2];
        apply_collision_response(&mut state, &mesh, &mut acc, ResponseMode::RawSum);
        assert!((state.positions[2] - (before + 4.0 * d)).norm() < 1e-15);
    }

    #[test]
    fn budget_is_enforced() {
        let mesh = generate_cloth_grid(3, 3, 1.0, 1.0, 1.0, &PinnedRows::None).unwrap();
        let sphere = crate::mesh::generate_icosphere(1, 1.0).unwrap();
        let state = SolverState::from_mesh(&mesh);
        let collider = Collider::new(&mesh, &sphere);
        let mut acc = ContactAccumulator::new(9);
        let err = detect_all(
            &state,
            &mesh,
            &sphere,
            &collider,
            &mut acc,
            &DetectSettings {
                epsilon: 1e-6,
                margin: 1e-3,
                max_pairs: 100,
                cull_pairs: true,
            },
        )
        .unwrap_err();
        assert_eq!(err, CollisionError::BudgetExceeded { pairs: 8 * 80, budget: 100 });
    }
}
