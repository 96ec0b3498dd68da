//! Safe convex corridors around a seed path: each polytope is an oriented
//! box around a seed segment cut by supporting hyperplanes that separate the
//! segment from every nearby ellipsoid inflated by the robot radius.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collide::{test_sphere_segment, SharedBasis, DEFAULT_ITERS};
use crate::geometry::{Ellipsoid, Halfspace, Mat3, Polytope, Segment, SphereBody, Vec3};
use crate::scene::Scene;
use crate::voxgrid::SeedPath;

/// Default hyperplane buffer.
pub const DEFAULT_EPS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CorridorError {
    #[error("segment is not separated from ellipsoid {index} (k* = {k_star:.6})")]
    NotDisjoint { index: usize, k_star: f64 },
    #[error("seed segment {segment} collides with ellipsoid {ellipsoid} (k* = {k_star:.6})")]
    UnsafeSegment { segment: usize, ellipsoid: usize, k_star: f64 },
    #[error("polytopes {0} and {1} share no seed waypoint")]
    Disconnected(usize, usize),
    #[error("invalid corridor parameters: {0}")]
    Params(String),
    #[error("seed path is empty")]
    EmptySeed,
    #[error("JSON error: {0}")]
    Json(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorridorParams {
    pub vmax: f64,
    pub amax: f64,
    pub iters: usize,
    pub eps: f64,
}

impl Default for CorridorParams {
    fn default() -> Self {
        Self {
            vmax: 0.1,
            amax: 0.1,
            iters: DEFAULT_ITERS,
            eps: DEFAULT_EPS,
        }
    }
}

impl CorridorParams {
    pub fn validate(&self) -> Result<(), CorridorError> {
        if !(self.vmax > 0.0 && self.vmax.is_finite()) || !(self.amax > 0.0 && self.amax.is_finite()) {
            return Err(CorridorError::Params("vmax and amax must be positive".into()));
        }
        if !(self.eps >= 0.0) {
            return Err(CorridorError::Params("eps must be nonnegative".into()));
        }
        if self.iters == 0 {
            return Err(CorridorError::Params("iters must be at least 1".into()));
        }
        Ok(())
    }

    /// Distance needed to stop from `vmax` at deceleration `amax`.
    pub fn stopping_distance(&self) -> f64 {
        self.vmax * self.vmax / (2.0 * self.amax)
    }
}

/// Orthonormal frame whose first column is the segment direction. Zero-length
/// segments reuse `previous`, or world axes if there is none.
pub fn segment_frame(seg: &Segment, previous: Option<&Mat3>) -> Mat3 {
    let d = seg.delta();
    let len = d.norm();
    if !(len > 0.0) {
        return previous.copied().unwrap_or_else(Mat3::identity);
    }
    let u = d / len;
    let helper = if u.x.abs() <= u.y.abs() && u.x.abs() <= u.z.abs() {
        Vec3::x()
    } else if u.y.abs() <= u.z.abs() {
        Vec3::y()
    } else {
        Vec3::z()
    };
    let v = u.cross(&helper).normalize();
    let w = u.cross(&v);
    Mat3::from_columns(&[u, v, w])
}

/// Six-facet box around `seg` whose faces lie `r_s + kappa` beyond the
/// segment, with `r_s = vmax^2 / (2 amax)`.
pub fn segment_bbox(seg: &Segment, body: &SphereBody, vmax: f64, amax: f64) -> Polytope {
    segment_bbox_in_frame(seg, body, vmax, amax, &segment_frame(seg, None))
}

pub fn segment_bbox_in_frame(seg: &Segment, body: &SphereBody, vmax: f64, amax: f64, frame: &Mat3) -> Polytope {
    let margin = vmax * vmax / (2.0 * amax) + body.kappa;
    let center = seg.midpoint();
    let half_len = 0.5 * seg.length();
    let mut halfspaces = Vec::with_capacity(6);
    for axis in 0..3 {
        let n: Vec3 = frame.column(axis).into();
        let half = if axis == 0 { half_len + margin } else { margin };
        let c = n.dot(&center);
        halfspaces.push(Halfspace::new(n, c + half));
        halfspaces.push(Halfspace::new(-n, -c + half));
    }
    Polytope {
        halfspaces,
        seed_segment: *seg,
    }
}

/// Whether some point of `e` satisfies `h`, i.e.
/// `a . mu - |S R^T a| <= b`.
pub fn ellipsoid_reaches_halfspace(e: &Ellipsoid, h: &Halfspace) -> bool {
    let reach = (e.shape().transpose() * h.a).norm();
    h.a.dot(&e.mu) - reach <= h.b
}

/// Ellipsoids reaching every facet of `bbox`; a superset of those meeting
/// the box.
pub fn collision_set(scene: &Scene, bbox: &Polytope) -> Vec<usize> {
    let ells = scene.ellipsoids();
    let (center, radius) = bounding_ball(bbox);
    let candidates = scene.centers_within(&center, radius + scene.max_semi_axis());
    candidates
        .into_iter()
        .filter(|&i| bbox.halfspaces.iter().all(|h| ellipsoid_reaches_halfspace(&ells[i], h)))
        .collect()
}

/// Ball around an oriented box given as three pairs of opposite facets.
fn bounding_ball(bbox: &Polytope) -> (Vec3, f64) {
    let mut center = Vec3::zeros();
    let mut r2 = 0.0;
    for pair in bbox.halfspaces.chunks(2) {
        let n = pair[0].a.normalize();
        let hi = pair[0].b / pair[0].a.norm();
        let lo = -pair[1].b / pair[1].a.norm();
        center += n * (0.5 * (hi + lo));
        r2 += (0.5 * (hi - lo)).powi(2);
    }
    (center, r2.sqrt())
}

/// Plane separating the swept body from `e`: with `x* = x0 + t* delta`,
/// `Delta = x* - mu` and `M` the inverse combined covariance at `s*`, the
/// robot side is `(M Delta) . x >= (1 + eps) sqrt(K*) + (M Delta) . mu`,
/// returned as `-(M Delta) . x <= -(...)`. The whole segment satisfies it
/// when `sqrt(K*) > 1 + eps`.
pub fn support_hyperplane(
    seg: &Segment,
    body: &SphereBody,
    e: &Ellipsoid,
    iters: usize,
    eps: f64,
) -> Result<Halfspace, CorridorError> {
    let r = test_sphere_segment(body, seg, e, iters);
    plane_from_result(seg, body, e, r.s_star, r.k_star, eps).ok_or(CorridorError::NotDisjoint {
        index: 0,
        k_star: r.k_star,
    })
}

fn plane_from_result(seg: &Segment, body: &SphereBody, e: &Ellipsoid, s: f64, k_star: f64, eps: f64) -> Option<Halfspace> {
    let k = k_star.sqrt();
    if !(k > 1.0 + eps) {
        return None;
    }
    let basis = SharedBasis::sphere(e, body);
    let (p, q) = basis.project(seg, &e.mu);
    let (w, _) = basis.weights(s);
    let (_, _, t) = basis.evaluate(s, &p, &q);
    let m_delta = basis.phi * (p + q * t).component_mul(&w);
    Some(Halfspace::new(-m_delta, -(1.0 + eps) * k - m_delta.dot(&e.mu)))
}

/// Greedy polytope for one seed segment: the box deflated by `kappa`, then
/// one supporting hyperplane per remaining collision-set ellipsoid taken in
/// order of increasing `K*`, pruning ellipsoids that the new facet already
/// keeps at least `kappa` away.
pub fn build_polytope(
    seg: &Segment,
    body: &SphereBody,
    scene: &Scene,
    bbox: &Polytope,
    iters: usize,
    eps: f64,
) -> Result<Polytope, CorridorError> {
    let ells = scene.ellipsoids();
    let set = collision_set(scene, bbox);
    let tested: Vec<(usize, f64, f64)> = set
        .par_iter()
        .map(|&i| {
            let r = test_sphere_segment(body, seg, &ells[i], iters);
            (i, r.k_star, r.s_star)
        })
        .collect();
    if let Some(&(index, k_star, _)) = tested.iter().find(|(_, k, _)| !(k.sqrt() > 1.0 + eps)) {
        return Err(CorridorError::NotDisjoint { index, k_star });
    }
    let mut order: Vec<usize> = (0..tested.len()).collect();
    order.sort_by(|&a, &b| tested[a].1.total_cmp(&tested[b].1).then(tested[a].0.cmp(&tested[b].0)));

    let mut halfspaces: Vec<Halfspace> = bbox.halfspaces.iter().map(|h| h.expanded(-body.kappa)).collect();
    let mut alive = vec![true; tested.len()];
    let mut remaining = tested.len();
    for &slot in &order {
        if !alive[slot] {
            continue;
        }
        let (index, k_star, s) = tested[slot];
        let e = &ells[index];
        let h = plane_from_result(seg, body, e, s, k_star, eps).ok_or(CorridorError::NotDisjoint { index, k_star })?;
        alive[slot] = false;
        remaining -= 1;
        halfspaces.push(h);
        let guard = h.expanded(body.kappa);
        for (other, flag) in alive.iter_mut().enumerate() {
            if *flag && !ellipsoid_reaches_halfspace(&ells[tested[other].0], &guard) {
                *flag = false;
                remaining -= 1;
            }
        }
        if remaining == 0 {
            break;
        }
    }
    Ok(Polytope {
        halfspaces,
        seed_segment: *seg,
    })
}

/// Ordered chain of polytopes covering a seed path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub polytopes: Vec<Polytope>,
    /// Handoff point between polytope `i` and `i + 1`.
    pub transition_points: Vec<Vec3>,
    /// Seed waypoint index of each transition point.
    pub transition_indices: Vec<usize>,
    /// Seed arc length assigned to each polytope.
    pub seed_lengths: Vec<f64>,
}

impl Corridor {
    pub fn len(&self) -> usize {
        self.polytopes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.polytopes.is_empty()
    }

    pub fn num_facets(&self) -> usize {
        self.polytopes.iter().map(|p| p.num_facets()).sum()
    }

    /// JSON list of `{A, b, seed}` with the handoff point to the next
    /// polytope as `transition`.
    pub fn to_json(&self) -> serde_json::Value {
        let items: Vec<serde_json::Value> = self
            .polytopes
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let a: Vec<[f64; 3]> = p.halfspaces.iter().map(|h| [h.a.x, h.a.y, h.a.z]).collect();
                let b: Vec<f64> = p.halfspaces.iter().map(|h| h.b).collect();
                let s = p.seed_segment;
                let mut obj = serde_json::json!({
                    "A": a,
                    "b": b,
                    "seed": [[s.x0.x, s.x0.y, s.x0.z], [s.x1.x, s.x1.y, s.x1.z]],
                });
                if let Some(t) = self.transition_points.get(i) {
                    obj["transition"] = serde_json::json!([t.x, t.y, t.z]);
                    obj["transition_index"] = serde_json::json!(self.transition_indices[i]);
                }
                obj["seed_length"] = serde_json::json!(self.seed_lengths[i]);
                obj
            })
            .collect();
        serde_json::Value::Array(items)
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, CorridorError> {
        #[derive(Deserialize)]
        struct Item {
            #[serde(rename = "A")]
            a: Vec<[f64; 3]>,
            b: Vec<f64>,
            seed: [[f64; 3]; 2],
            transition: Option<[f64; 3]>,
            transition_index: Option<usize>,
            seed_length: Option<f64>,
        }
        let items: Vec<Item> =
            serde_json::from_value(value.clone()).map_err(|e| CorridorError::Json(e.to_string()))?;
        let mut c = Corridor {
            polytopes: Vec::new(),
            transition_points: Vec::new(),
            transition_indices: Vec::new(),
            seed_lengths: Vec::new(),
        };
        for (i, it) in items.iter().enumerate() {
            if it.a.len() != it.b.len() {
                return Err(CorridorError::Json(format!("polytope {i}: A and b lengths differ")));
            }
            let seg = Segment::new(Vec3::from(it.seed[0]), Vec3::from(it.seed[1]));
            c.polytopes.push(Polytope {
                halfspaces: it.a.iter().zip(&it.b).map(|(a, &b)| Halfspace { a: Vec3::from(*a), b }).collect(),
                seed_segment: seg,
            });
            c.seed_lengths.push(it.seed_length.unwrap_or_else(|| seg.length()));
            if i + 1 < items.len() {
                let t = it
                    .transition
                    .ok_or_else(|| CorridorError::Json(format!("polytope {i}: missing transition")))?;
                c.transition_points.push(Vec3::from(t));
                c.transition_indices.push(it.transition_index.unwrap_or(0));
            }
        }
        Ok(c)
    }
}

/// Chains polytopes along `seed`, skipping segments already inside the
/// current polytope.
pub fn build_corridor(
    seed: &SeedPath,
    scene: &Scene,
    body: &SphereBody,
    params: &CorridorParams,
) -> Result<Corridor, CorridorError> {
    params.validate()?;
    let wps = &seed.waypoints;
    if wps.is_empty() {
        return Err(CorridorError::EmptySeed);
    }
    let segments: Vec<Segment> = if wps.len() == 1 {
        vec![Segment::point(wps[0])]
    } else {
        wps.windows(2).map(|w| Segment::new(w[0], w[1])).collect()
    };
    let arc: Vec<f64> = std::iter::once(0.0)
        .chain(segments.iter().scan(0.0, |acc, s| {
            *acc += s.length();
            Some(*acc)
        }))
        .collect();

    let mut polytopes: Vec<Polytope> = Vec::new();
    let mut transitions: Vec<usize> = Vec::new();
    let mut frame: Option<Mat3> = None;
    for (i, seg) in segments.iter().enumerate() {
        let f = segment_frame(seg, frame.as_ref());
        frame = Some(f);
        if let Some(cur) = polytopes.last() {
            if cur.contains_segment(seg, 0.0) {
                continue;
            }
        }
        let bbox = segment_bbox_in_frame(seg, body, params.vmax, params.amax, &f);
        let poly = build_polytope(seg, body, scene, &bbox, params.iters, params.eps).map_err(|e| match e {
            CorridorError::NotDisjoint { index, k_star } => CorridorError::UnsafeSegment {
                segment: i,
                ellipsoid: index,
                k_star,
            },
            other => other,
        })?;
        if let Some(prev) = polytopes.last() {
            let lower = transitions.last().map_or(0, |&t| t + 1);
            let j = (lower..=i)
                .find(|&j| prev.contains(&wps[j], 0.0) && poly.contains(&wps[j], 0.0))
                .ok_or(CorridorError::Disconnected(polytopes.len() - 1, polytopes.len()))?;
            transitions.push(j);
        }
        polytopes.push(poly);
    }

    let mut bounds = vec![0usize];
    bounds.extend(&transitions);
    bounds.push(wps.len() - 1);
    let seed_lengths = bounds.windows(2).map(|w| arc[w[1]] - arc[w[0]]).collect();
    Ok(Corridor {
        polytopes,
        transition_points: transitions.iter().map(|&j| wps[j]).collect(),
        transition_indices: transitions,
        seed_lengths,
    })
}
