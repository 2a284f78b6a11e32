//! Reference edge/triangle predicate that shares no code with the solver.
//!
//! The segment is sampled densely, the first sign change of the signed
//! plane distance is refined by bisection, and the crossing is tested
//! against the triangle with edge functions. Nothing here uses the
//! Möller–Trumbore algebra.

#![allow(dead_code)]

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub type P = Vector3<f64>;

/// Segment samples before bisection.
pub const SAMPLES: usize = 1024;

/// Disagreements are tolerated within this many epsilons of a boundary.
pub const BAND: f64 = 10.0;

#[derive(Debug, Clone, Copy)]
pub struct Case {
    pub start: P,
    pub end: P,
    pub tri: [P; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub hit: bool,
    /// Crossing distance along the segment, when the segment crosses the plane.
    pub t: Option<f64>,
    /// Some analytic quantity lies within `BAND * epsilon` of the edge of
    /// its accepted range, so either answer is defensible.
    pub boundary: bool,
}

/// Dense-sampling verdict for one case.
pub fn classify(case: &Case, epsilon: f64) -> Verdict {
    let [v0, v1, v2] = case.tri;
    let normal = (v1 - v0).cross(&(v2 - v0));
    let area2 = normal.norm();
    let d = case.end - case.start;
    let length = d.norm();
    if area2 == 0.0 || length == 0.0 {
        return Verdict {
            hit: false,
            t: None,
            boundary: false,
        };
    }
    let unit = normal / area2;
    let dist = |p: P| (p - v0).dot(&unit);
    let at = |lambda: f64| case.start + d * lambda;

    // Sampled sign change, then bisection.
    let mut crossing = None;
    let mut prev = dist(case.start);
    for k in 1..=SAMPLES {
        let lambda = k as f64 / SAMPLES as f64;
        let cur = dist(at(lambda));
        if prev == 0.0 {
            crossing = Some((k - 1) as f64 / SAMPLES as f64);
            break;
        }
        if (prev < 0.0) != (cur < 0.0) || cur == 0.0 {
            let (mut lo, mut hi) = ((k - 1) as f64 / SAMPLES as f64, lambda);
            let lo_sign = prev < 0.0;
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if (dist(at(mid)) < 0.0) == lo_sign {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            crossing = Some(0.5 * (lo + hi));
            break;
        }
        prev = cur;
    }

    let inside = |x: P| {
        let corners = [v0, v1, v2];
        (0..3).all(|i| {
            let (a, b) = (corners[i], corners[(i + 1) % 3]);
            (b - a).cross(&(x - a)).dot(&unit) >= 0.0
        })
    };
    let hit = crossing.is_some_and(|lambda| {
        let t = lambda * length;
        t > epsilon && t < length && inside(at(lambda))
    });

    // Analytic line/plane crossing for the boundary band.
    let band = BAND * epsilon;
    let (ds, de) = (dist(case.start), dist(case.end));
    let r = d / length;
    let slope = r.dot(&normal).abs();
    let mut boundary = (slope - epsilon).abs() <= band;
    if ds != de {
        let lambda = ds / (ds - de);
        let t = lambda * length;
        let x = at(lambda) - v0;
        let n2 = area2 * area2;
        let u = x.cross(&(v2 - v0)).dot(&normal) / n2;
        let v = (v1 - v0).cross(&x).dot(&normal) / n2;
        let near = |value: f64, edge: f64| (value - edge).abs() <= band;
        boundary |= near(u, 0.0) || near(u, 1.0) || near(v, 0.0) || near(u + v, 1.0);
        boundary |= near(t, epsilon) || near(t, length);
    }
    Verdict {
        hit,
        t: crossing.map(|lambda| lambda * length),
        boundary,
    }
}

fn point(rng: &mut ChaCha8Rng, half: f64) -> P {
    P::new(
        rng.random_range(-half..half),
        rng.random_range(-half..half),
        rng.random_range(-half..half),
    )
}

fn unit(rng: &mut ChaCha8Rng) -> P {
    loop {
        let p = point(rng, 1.0);
        let n = p.norm();
        if n > 0.1 && n <= 1.0 {
            return p / n;
        }
    }
}

/// Seeded mix of segments aimed at or near the triangle, segments that stop
/// short of the plane, near-parallel segments and unconstrained ones.
pub fn corpus(seed: u64, len: usize) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(len);
    while out.len() < len {
        let tri = [point(&mut rng, 1.0), point(&mut rng, 1.0), point(&mut rng, 1.0)];
        let (e1, e2) = (tri[1] - tri[0], tri[2] - tri[0]);
        let normal = e1.cross(&e2);
        if normal.norm() < 1e-2 {
            continue;
        }
        let target = tri[0] + e1 * rng.random_range(-0.1..0.9) + e2 * rng.random_range(-0.1..0.9);
        let case = match out.len() % 4 {
            0 => {
                let dir = unit(&mut rng);
                Case {
                    start: target - dir * rng.random_range(0.01..1.0),
                    end: target + dir * rng.random_range(0.01..1.0),
                    tri,
                }
            }
            1 => Case {
                start: point(&mut rng, 1.5),
                end: point(&mut rng, 1.5),
                tri,
            },
            2 => {
                // Both ends on one side, or crossing near an end.
                let dir = unit(&mut rng);
                let a = rng.random_range(0.01..1.0);
                let b = rng.random_range(-0.2..1.0);
                Case {
                    start: target - dir * a,
                    end: target + dir * (b * a),
                    tri,
                }
            }
            _ => {
                let n = normal.normalize();
                let w = unit(&mut rng);
                let Some(in_plane) = (w - n * n.dot(&w)).try_normalize(1e-3) else {
                    continue;
                };
                let dir = (in_plane + n * rng.random_range(-0.05..0.05)).normalize();
                let lead = rng.random_range(0.01..1.0);
                Case {
                    start: target - dir * lead,
                    end: target + dir * rng.random_range(0.01..1.0),
                    tri,
                }
            }
        };
        if (case.end - case.start).norm() > 1e-3 {
            out.push(case);
        }
    }
    out
}
