//! Brute-force verifiers used to check the planner's safety claims.
//!
//! Nothing here calls into the corridor or spline construction code; the
//! trajectory check only borrows the point-vs-ellipsoid K test.

use nalgebra::SymmetricEigen;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::collide::test_sphere_segment;
use crate::corridor::Corridor;
use crate::geometry::{Aabb, Ellipsoid, Mat3, Polytope, Segment, SphereBody, Vec3};
use crate::rng;
use crate::scene::Scene;
use crate::spline::Trajectory;

/// Iterations of the K test used when reporting clearance.
pub const ORACLE_ITERS: usize = 30;
pub const DEFAULT_SURFACE_SAMPLES: usize = 100_000;

/// Smallest value of `(x - a.mu)^T Sigma_a^{-1} (x - a.mu)` over `x` in `b`.
///
/// In coordinates where `a` is the unit ball, `b` becomes an ellipsoid with
/// center `c` and covariance `G`; the closest point satisfies the secular
/// equation `sum_i g_i c_i^2 / (g_i + nu)^2 = 1` in `G`'s eigenbasis.
pub fn pair_min_mahalanobis(a: &Ellipsoid, b: &Ellipsoid) -> f64 {
    let whiten = Mat3::from_diagonal(&a.semi_axes.map(|s| 1.0 / s)) * a.rot.transpose();
    let c = whiten * (b.mu - a.mu);
    let f = whiten * b.rot * Mat3::from_diagonal(&b.semi_axes);
    let g = f * f.transpose();
    let eig = SymmetricEigen::new((g + g.transpose()) * 0.5);
    let ct = eig.eigenvectors.transpose() * c;
    let gi = eig.eigenvalues.map(|v| v.max(0.0));

    // center of a inside b
    let inside: f64 = (0..3).map(|i| if gi[i] > 0.0 { ct[i] * ct[i] / gi[i] } else { f64::INFINITY }).sum();
    if inside <= 1.0 {
        return 0.0;
    }
    let secular = |nu: f64| -> f64 { (0..3).map(|i| gi[i] * ct[i] * ct[i] / ((gi[i] + nu) * (gi[i] + nu))).sum::<f64>() - 1.0 };
    let mut lo = 0.0;
    let mut hi = (0..3).map(|i| gi[i] * ct[i] * ct[i]).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    while secular(hi) > 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if secular(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let nu = 0.5 * (lo + hi);
    (0..3).map(|i| (nu * ct[i] / (gi[i] + nu)).powi(2)).sum()
}

/// True iff the solid ellipsoids share at least one point.
pub fn exact_pair_test(a: &Ellipsoid, b: &Ellipsoid) -> bool {
    pair_min_mahalanobis(a, b) <= 1.0
}

/// Uniform unit vector.
pub fn random_direction<R: Rng>(rng: &mut R) -> Vec3 {
    loop {
        let v = Vec3::new(rng.sample(StandardNormal), rng.sample(StandardNormal), rng.sample(StandardNormal));
        let n = v.norm();
        if n > 1e-12 {
            return v / n;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PolytopeCheck {
    pub clear: bool,
    /// Smallest, over samples, of the largest facet signed distance.
    pub margin: f64,
    pub violations: usize,
}

/// Point on the boundary of `e` grown by `kappa`, in direction `u` of the
/// unit sphere.
fn inflated_surface_point(e: &Ellipsoid, kappa: f64, u: &Vec3) -> Vec3 {
    let local = u.component_mul(&e.semi_axes);
    let normal = e.rot * u.component_div(&e.semi_axes);
    e.mu + e.rot * local + normal * (kappa / normal.norm())
}

fn facet_margin(poly: &Polytope, x: &Vec3) -> f64 {
    poly.halfspaces
        .iter()
        .map(|h| (h.a.dot(x) - h.b) / h.a.norm())
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Samples the `body`-inflated boundary of `e` along the given unit
/// directions; clear iff every sample, and the center, lies strictly
/// outside some facet.
pub fn polytope_clear_along(poly: &Polytope, e: &Ellipsoid, body: &SphereBody, directions: &[Vec3]) -> PolytopeCheck {
    // the center catches polytopes swallowed whole by the obstacle
    let mut margin = facet_margin(poly, &e.mu);
    let mut violations = usize::from(margin <= 0.0);
    for u in directions {
        let m = facet_margin(poly, &inflated_surface_point(e, body.kappa, u));
        if m <= 0.0 {
            violations += 1;
        }
        margin = margin.min(m);
    }
    PolytopeCheck {
        clear: violations == 0,
        margin,
        violations,
    }
}

/// [`polytope_clear_along`] with `n` directions drawn from `seed`.
pub fn polytope_clear(poly: &Polytope, e: &Ellipsoid, body: &SphereBody, n: usize, seed: u64) -> PolytopeCheck {
    let mut r = rng::stream(seed, "oracle-surface", 0);
    let dirs: Vec<Vec3> = (0..n.max(1)).map(|_| random_direction(&mut r)).collect();
    polytope_clear_along(poly, e, body, &dirs)
}

/// Bounding box of a bounded polytope from its vertices; `None` when fewer
/// than four vertices exist.
pub fn polytope_bounds(poly: &Polytope) -> Option<Aabb> {
    let hs = &poly.halfspaces;
    let scale = hs.iter().map(|h| h.b.abs()).fold(1.0, f64::max);
    let mut bounds = Aabb::empty();
    let mut count = 0;
    for i in 0..hs.len() {
        for j in i + 1..hs.len() {
            for k in j + 1..hs.len() {
                let m = Mat3::from_rows(&[hs[i].a.transpose(), hs[j].a.transpose(), hs[k].a.transpose()]);
                let Some(inv) = m.try_inverse() else { continue };
                let x = inv * Vec3::new(hs[i].b, hs[j].b, hs[k].b);
                if x.iter().all(|v| v.is_finite()) && poly.max_violation(&x) <= 1e-9 * scale {
                    bounds.grow(&x);
                    count += 1;
                }
            }
        }
    }
    (count >= 4).then_some(bounds)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorridorCheck {
    pub pairs_checked: usize,
    /// `(polytope, ellipsoid, margin)` for every failed pair.
    pub failures: Vec<(usize, usize, f64)>,
}

/// Surface-sampling check of every polytope against every scene ellipsoid
/// whose inflated bounding box meets the polytope's.
pub fn corridor_clear(corridor: &Corridor, scene: &Scene, body: &SphereBody, n: usize, seed: u64) -> CorridorCheck {
    let mut r = rng::stream(seed, "oracle-corridor", 0);
    let dirs: Vec<Vec3> = (0..n.max(1)).map(|_| random_direction(&mut r)).collect();
    let per_poly: Vec<(usize, Vec<(usize, usize, f64)>)> = corridor
        .polytopes
        .par_iter()
        .enumerate()
        .map(|(p, poly)| {
            let bounds = polytope_bounds(poly);
            let mut checked = 0;
            let mut failures = Vec::new();
            for (i, e) in scene.ellipsoids().iter().enumerate() {
                if let Some(b) = &bounds {
                    let eb = e.aabb().padded(body.kappa);
                    let overlap = (0..3).all(|a| eb.min[a] <= b.max[a] && eb.max[a] >= b.min[a]);
                    if !overlap {
                        continue;
                    }
                }
                checked += 1;
                let check = polytope_clear_along(poly, e, body, &dirs);
                if !check.clear {
                    failures.push((p, i, check.margin));
                }
            }
            (checked, failures)
        })
        .collect();
    CorridorCheck {
        pairs_checked: per_poly.iter().map(|(c, _)| c).sum(),
        failures: per_poly.into_iter().flat_map(|(_, f)| f).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClearanceViolation {
    pub piece: usize,
    pub time: f64,
    pub ellipsoid: usize,
    pub k_star: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClearanceReport {
    /// `+inf` when no ellipsoid is near the trajectory.
    pub min_k_star: f64,
    pub argmin: Option<ClearanceViolation>,
    pub violations: Vec<ClearanceViolation>,
    pub samples: usize,
}

impl ClearanceReport {
    pub fn is_clear(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_json(&self) -> serde_json::Value {
        let v = |c: &ClearanceViolation| {
            serde_json::json!({"piece": c.piece, "time": c.time, "ellipsoid": c.ellipsoid, "k_star": c.k_star})
        };
        serde_json::json!({
            "clear": self.is_clear(),
            "min_k_star": if self.min_k_star.is_finite() { serde_json::json!(self.min_k_star) } else { serde_json::json!("inf") },
            "argmin": self.argmin.as_ref().map(v),
            "violations": self.violations.iter().map(v).collect::<Vec<_>>(),
            "samples": self.samples,
        })
    }
}

/// Uniform bucket grid over inflated ellipsoid boxes.
struct Buckets {
    origin: Vec3,
    size: f64,
    dims: [usize; 3],
    cells: Vec<Vec<usize>>,
}

impl Buckets {
    fn new(boxes: &[Aabb]) -> Self {
        let mut all = Aabb::empty();
        let mut mean_extent = 0.0;
        for b in boxes {
            all = all.union(b);
            mean_extent += b.extent().max();
        }
        mean_extent /= boxes.len().max(1) as f64;
        let span = all.extent();
        let mut size = (2.0 * mean_extent).max(1e-9);
        // keep the table bounded
        while (0..3).map(|a| (span[a] / size).ceil().max(1.0)).product::<f64>() > 4e6 {
            size *= 2.0;
        }
        let dims = [0, 1, 2].map(|a| ((span[a] / size).ceil() as usize).max(1));
        let mut cells = vec![Vec::new(); dims[0] * dims[1] * dims[2]];
        let mut out = Self {
            origin: all.min,
            size,
            dims,
            cells: Vec::new(),
        };
        for (i, b) in boxes.iter().enumerate() {
            let lo = out.cell(&b.min);
            let hi = out.cell(&b.max);
            for x in lo[0]..=hi[0] {
                for y in lo[1]..=hi[1] {
                    for z in lo[2]..=hi[2] {
                        cells[(x * dims[1] + y) * dims[2] + z].push(i);
                    }
                }
            }
        }
        out.cells = cells;
        out
    }

    fn cell(&self, p: &Vec3) -> [usize; 3] {
        [0, 1, 2].map(|a| (((p[a] - self.origin[a]) / self.size).floor().max(0.0) as usize).min(self.dims[a] - 1))
    }

    fn candidates(&self, p: &Vec3) -> &[usize] {
        let c = self.cell(p);
        &self.cells[(c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]]
    }
}

/// K test of every sample point against every ellipsoid whose inflated box
/// contains it; pairs outside that box are disjoint by construction.
pub fn trajectory_clearance(traj: &Trajectory, scene: &Scene, body: &SphereBody, samples_per_piece: usize) -> ClearanceReport {
    let n = samples_per_piece.max(2);
    let boxes: Vec<Aabb> = scene.ellipsoids().iter().map(|e| e.aabb().padded(body.kappa)).collect();
    let buckets = Buckets::new(&boxes);
    let points: Vec<(usize, f64)> = (0..traj.pieces.len())
        .flat_map(|p| (0..n).map(move |k| (p, k as f64 / (n - 1) as f64)))
        .collect();
    let per_sample: Vec<(Option<ClearanceViolation>, Vec<ClearanceViolation>)> = points
        .par_iter()
        .map(|&(piece, u)| {
            let s = traj.sample_piece(piece, u);
            let mut best: Option<ClearanceViolation> = None;
            let mut bad = Vec::new();
            if boxes.is_empty() {
                return (None, bad);
            }
            for &i in buckets.candidates(&s.position) {
                if !boxes[i].contains(&s.position) {
                    continue;
                }
                let e = &scene.ellipsoids()[i];
                let r = test_sphere_segment(body, &Segment::point(s.position), e, ORACLE_ITERS);
                let v = ClearanceViolation {
                    piece,
                    time: s.t,
                    ellipsoid: i,
                    k_star: r.k_star,
                };
                if best.is_none_or(|b| (v.k_star, v.ellipsoid) < (b.k_star, b.ellipsoid)) {
                    best = Some(v);
                }
                if r.k_star <= 1.0 {
                    bad.push(v);
                }
            }
            bad.sort_by_key(|v| v.ellipsoid);
            (best, bad)
        })
        .collect();
    let mut argmin: Option<ClearanceViolation> = None;
    let mut violations = Vec::new();
    for (best, bad) in per_sample {
        if let Some(b) = best {
            if argmin.is_none_or(|a| b.k_star < a.k_star) {
                argmin = Some(b);
            }
        }
        violations.extend(bad);
    }
    ClearanceReport {
        min_k_star: argmin.map_or(f64::INFINITY, |a| a.k_star),
        argmin,
        violations,
        samples: points.len(),
    }
}
