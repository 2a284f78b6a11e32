mod support;

use cloth_core::collision::{
    edge_triangle_intersect, triangle_triangle_contacts, ClothFace, ObstacleFace, ALL_EDGES,
};
use nalgebra::Vector3;
use proptest::prelude::*;
use support::oracle::{self, Case, P};

const EPS: f64 = 1e-6;

/// Seed and size of the frozen corpus.
const SEED: u64 = 0x0c10_7a11;
const CORPUS: usize = 10_000;
/// Oracle hit count on that corpus, frozen from the oracle alone.
const FROZEN_HITS: usize = 3615;

fn implementation(case: &Case) -> Option<f64> {
    let [a, b, c] = case.tri;
    edge_triangle_intersect(case.start, case.end, a, b, c, EPS).map(|h| h.t)
}

#[test]
fn oracle_reproduces_the_worked_cases() {
    let tri = [P::new(-1.0, -1.0, 0.0), P::new(1.0, -1.0, 0.0), P::new(0.0, 1.0, 0.0)];
    let through = Case {
        start: P::new(0.0, 0.0, -1.0),
        end: P::new(0.0, 0.0, 1.0),
        tri,
    };
    let verdict = oracle::classify(&through, EPS);
    assert!(verdict.hit);
    assert!((verdict.t.unwrap() - 1.0).abs() < 1e-12);
    let parallel = Case {
        start: P::new(0.0, 0.0, 1.0),
        end: P::new(1.0, 0.0, 1.0),
        tri,
    };
    assert!(!oracle::classify(&parallel, EPS).hit);
}

#[test]
fn seeded_corpus_agrees_with_the_sampling_oracle() {
    let cases = oracle::corpus(SEED, CORPUS);
    let mut hits = 0;
    let mut band = 0;
    let mut unexplained = Vec::new();
    for (i, case) in cases.iter().enumerate() {
        let verdict = oracle::classify(case, EPS);
        let ours = implementation(case);
        hits += verdict.hit as usize;
        band += verdict.boundary as usize;
        if ours.is_some() != verdict.hit && !verdict.boundary {
            unexplained.push(i);
        }
        if let (Some(t), true) = (ours, verdict.hit) {
            assert!((t - verdict.t.unwrap()).abs() < 1e-9, "case {i}: t {t} vs {:?}", verdict.t);
        }
    }
    println!("{hits} hits, {band} boundary-band cases in {CORPUS}");
    assert!(unexplained.is_empty(), "disagreements off the boundary band: {unexplained:?}");
    assert!(band * 200 <= CORPUS, "{band} boundary-band cases");
    // Enough of both outcomes that agreement means something.
    assert!(hits > CORPUS / 5 && hits < CORPUS * 4 / 5, "{hits} hits");
    assert_eq!(hits, FROZEN_HITS);
}

fn v3() -> impl Strategy<Value = P> {
    (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64).prop_map(|(x, y, z)| P::new(x, y, z))
}

fn triangle() -> impl Strategy<Value = [P; 3]> {
    [v3(), v3(), v3()].prop_filter("degenerate", |t| (t[1] - t[0]).cross(&(t[2] - t[0])).norm() > 1e-2)
}

/// Barycentrics of `x` from area ratios, independent of the tested algebra.
fn barycentric(x: P, tri: &[P; 3]) -> (f64, f64) {
    let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0]));
    let n2 = n.norm_squared();
    let p = x - tri[0];
    (p.cross(&(tri[2] - tri[0])).dot(&n) / n2, (tri[1] - tri[0]).cross(&p).dot(&n) / n2)
}

fn sorted(mut v: Vec<u32>) -> Vec<u32> {
    v.sort_unstable();
    v
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn hits_satisfy_every_bound(s in v3(), e in v3(), tri in triangle()) {
        if let Some(hit) = edge_triangle_intersect(s, e, tri[0], tri[1], tri[2], EPS) {
            let length = (e - s).norm();
            prop_assert!(hit.t > EPS && hit.t < length);
            prop_assert!(hit.u >= 0.0 && hit.v >= 0.0 && hit.u + hit.v <= 1.0);
            let (u, v) = barycentric(hit.point, &tri);
            prop_assert!(u >= -1e-9 && v >= -1e-9 && u + v <= 1.0 + 1e-9);
            prop_assert!((u - hit.u).abs() < 1e-8 && (v - hit.v).abs() < 1e-8);
            let n = (tri[1] - tri[0]).cross(&(tri[2] - tri[0])).normalize();
            prop_assert!((hit.point - tri[0]).dot(&n).abs() <= 1e-5);
            prop_assert!((hit.point - (s + (e - s) * (hit.t / length))).norm() < 1e-12);
        }
    }

    #[test]
    fn reversing_the_edge_keeps_the_verdict(s in v3(), e in v3(), tri in triangle()) {
        let fwd = edge_triangle_intersect(s, e, tri[0], tri[1], tri[2], EPS);
        let back = edge_triangle_intersect(e, s, tri[0], tri[1], tri[2], EPS);
        prop_assert_eq!(fwd.is_some(), back.is_some());
        if let (Some(a), Some(b)) = (fwd, back) {
            prop_assert!((a.t + b.t - (e - s).norm()).abs() <= 1e-6);
        }
    }

    #[test]
    fn random_pairs_match_the_oracle(s in v3(), e in v3(), tri in triangle()) {
        let case = Case { start: s, end: e, tri };
        let verdict = oracle::classify(&case, EPS);
        if !verdict.boundary {
            prop_assert_eq!(implementation(&case).is_some(), verdict.hit);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Contacts of a pair equal a direct enumeration of its six edge tests.
    #[test]
    fn pair_contacts_match_direct_enumeration(
        cloth in triangle(),
        obstacle in triangle(),
        previous in [v3(), v3(), v3()],
    ) {
        let nodes = [11u32, 5, 8];
        let normal = (obstacle[1] - obstacle[0]).cross(&(obstacle[2] - obstacle[0])).normalize();
        let face = ObstacleFace { vertices: obstacle, normal, solid: false };
        let cloth_face = ClothFace { nodes, positions: cloth, previous };
        let margin = 1e-3;

        let mut expected = Vec::new();
        for k in 0..3 {
            let j = (k + 1) % 3;
            let (s, e) = if nodes[k] < nodes[j] { (k, j) } else { (j, k) };
            if edge_triangle_intersect(cloth[s], cloth[e], obstacle[0], obstacle[1], obstacle[2], EPS).is_some() {
                expected.extend([nodes[k], nodes[j]]);
            }
            let (a, b) = (obstacle[k], obstacle[j]);
            if edge_triangle_intersect(a, b, cloth[0], cloth[1], cloth[2], EPS).is_some() {
                expected.extend(nodes);
            }
        }
        let contacts = triangle_triangle_contacts(&cloth_face, &face, EPS, margin);
        prop_assert_eq!(sorted(contacts.iter().map(|c| c.node).collect()), sorted(expected));

        for c in &contacts {
            let k = nodes.iter().position(|&n| n == c.node).unwrap();
            // Along the normal, toward the node's start side, at least the margin long.
            prop_assert!(c.direction.cross(&normal).norm() < 1e-12);
            prop_assert!(c.direction.norm() >= margin - 1e-15);
            let side = (previous[k] - obstacle[0]).dot(&normal);
            prop_assert!(side == 0.0 || c.direction.dot(&normal).signum() == side.signum());
        }
    }
}

#[test]
fn far_apart_pair_is_empty_for_every_mask() {
    let tri = [P::new(0.0, 0.0, 0.0), P::new(1.0, 0.0, 0.0), P::new(0.0, 1.0, 0.0)];
    let far: [Vector3<f64>; 3] = tri.map(|p| p + P::new(0.0, 0.0, 50.0));
    let face = ObstacleFace {
        vertices: tri,
        normal: P::z(),
        solid: true,
    };
    let cloth = ClothFace {
        nodes: [0, 1, 2],
        positions: far,
        previous: far,
    };
    assert!(triangle_triangle_contacts(&cloth, &face, EPS, 1e-3).is_empty());
    assert_eq!(
        cloth_core::collision::for_each_contact(&cloth, &face, EPS, 1e-3, ALL_EDGES, |_| ()),
        0
    );
}
