//! Shared geometric primitives: ellipsoids, spherical robot bodies,
//! segments, halfspaces and polytopes.

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;

/// Orthonormality tolerance for rotation matrices.
pub const ROTATION_TOL: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("rotation is not orthonormal with determinant +1 (deviation {0:.3e})")]
    InvalidRotation(f64),
    #[error("semi-axes must be strictly positive and finite, got {0:?}")]
    InvalidSemiAxes([f64; 3]),
    #[error("quaternion has zero norm")]
    ZeroQuaternion,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("sphere radius must be positive, got {0}")]
    InvalidRadius(f64),
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aabb {
    pub min: Vec3,
    pub max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Self {
        Self { min, max }
    }

    pub fn empty() -> Self {
        Self {
            min: Vec3::repeat(f64::INFINITY),
            max: Vec3::repeat(f64::NEG_INFINITY),
        }
    }

    pub fn is_empty(&self) -> bool {
        (0..3).any(|i| self.min[i] > self.max[i])
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb {
            min: self.min.inf(&other.min),
            max: self.max.sup(&other.max),
        }
    }

    pub fn grow(&mut self, p: &Vec3) {
        self.min = self.min.inf(p);
        self.max = self.max.sup(p);
    }

    pub fn contains(&self, p: &Vec3) -> bool {
        (0..3).all(|i| p[i] >= self.min[i] && p[i] <= self.max[i])
    }

    pub fn contains_box(&self, other: &Aabb) -> bool {
        self.contains(&other.min) && self.contains(&other.max)
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extent(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn padded(&self, pad: f64) -> Aabb {
        Aabb {
            min: self.min.add_scalar(-pad),
            max: self.max.add_scalar(pad),
        }
    }

    /// Euclidean distance from `p` to the box (zero inside).
    pub fn distance(&self, p: &Vec3) -> f64 {
        let mut d2 = 0.0;
        for i in 0..3 {
            let d = (self.min[i] - p[i]).max(p[i] - self.max[i]).max(0.0);
            d2 += d * d;
        }
        d2.sqrt()
    }
}

/// A solid ellipsoid `{x : (x - mu)^T (R S^2 R^T)^{-1} (x - mu) <= 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ellipsoid {
    pub mu: Vec3,
    pub rot: Mat3,
    pub semi_axes: Vec3,
}

impl Ellipsoid {
    pub fn new(mu: Vec3, rot: Mat3, semi_axes: Vec3) -> Result<Self, GeometryError> {
        if !mu.iter().all(|v| v.is_finite()) {
            return Err(GeometryError::NonFinite("ellipsoid center"));
        }
        if !semi_axes.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(GeometryError::InvalidSemiAxes([
                semi_axes.x,
                semi_axes.y,
                semi_axes.z,
            ]));
        }
        let dev = rotation_deviation(&rot);
        if !(dev <= ROTATION_TOL) {
            return Err(GeometryError::InvalidRotation(dev));
        }
        Ok(Self { mu, rot, semi_axes })
    }

    /// Builds an ellipsoid from an unnormalized `(w, x, y, z)` quaternion.
    pub fn from_quaternion(mu: Vec3, quat: [f64; 4], semi_axes: Vec3) -> Result<Self, GeometryError> {
        let rot = quaternion_to_matrix(quat)?;
        Self::new(mu, rot, semi_axes)
    }

    pub fn sphere(center: Vec3, radius: f64) -> Self {
        Self {
            mu: center,
            rot: Mat3::identity(),
            semi_axes: Vec3::repeat(radius),
        }
    }

    /// `R S`, the linear part of the map from the unit ball onto the ellipsoid.
    pub fn shape(&self) -> Mat3 {
        self.rot * Mat3::from_diagonal(&self.semi_axes)
    }

    /// `R S^2 R^T`.
    pub fn covariance(&self) -> Mat3 {
        let sq = self.semi_axes.component_mul(&self.semi_axes);
        self.rot * Mat3::from_diagonal(&sq) * self.rot.transpose()
    }

    pub fn precision(&self) -> Mat3 {
        let inv = self.semi_axes.map(|a| 1.0 / (a * a));
        self.rot * Mat3::from_diagonal(&inv) * self.rot.transpose()
    }

    /// Per-axis half extents of the tight axis-aligned box: `sqrt(Sigma_ii)`.
    pub fn aabb_half_extents(&self) -> Vec3 {
        let sq = self.semi_axes.component_mul(&self.semi_axes);
        Vec3::from_fn(|i, _| {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += self.rot[(i, k)] * self.rot[(i, k)] * sq[k];
            }
            acc.sqrt()
        })
    }

    pub fn aabb(&self) -> Aabb {
        let h = self.aabb_half_extents();
        Aabb::new(self.mu - h, self.mu + h)
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.semi_axes.max()
    }

    /// Support function `max_{x in E} n . x`.
    pub fn support(&self, n: &Vec3) -> f64 {
        n.dot(&self.mu) + (self.shape().transpose() * n).norm()
    }

    pub fn mahalanobis_sq(&self, x: &Vec3) -> f64 {
        let local = self.rot.transpose() * (x - self.mu);
        local.component_div(&self.semi_axes).norm_squared()
    }

    /// Image of a unit vector `u` on the boundary.
    pub fn surface_point(&self, u: &Vec3) -> Vec3 {
        self.mu + self.shape() * u
    }

    /// Unit outward normal at `surface_point(u)`.
    pub fn surface_normal(&self, u: &Vec3) -> Vec3 {
        let n = self.rot * u.component_div(&self.semi_axes);
        n.normalize()
    }

    /// Applies `x -> rot * x + trans`.
    pub fn transformed(&self, rot: &Mat3, trans: &Vec3) -> Self {
        Self {
            mu: rot * self.mu + trans,
            rot: rot * self.rot,
            semi_axes: self.semi_axes,
        }
    }
}

/// Spherical robot body of radius `kappa`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphereBody {
    pub kappa: f64,
}

impl SphereBody {
    pub fn new(kappa: f64) -> Result<Self, GeometryError> {
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(GeometryError::InvalidRadius(kappa));
        }
        Ok(Self { kappa })
    }
}

/// Straight segment `x0 + t (x1 - x0)`, `t` in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: Vec3,
    pub x1: Vec3,
}

impl Segment {
    pub fn new(x0: Vec3, x1: Vec3) -> Self {
        Self { x0, x1 }
    }

    pub fn point(x: Vec3) -> Self {
        Self { x0: x, x1: x }
    }

    pub fn delta(&self) -> Vec3 {
        self.x1 - self.x0
    }

    pub fn length(&self) -> f64 {
        self.delta().norm()
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.x0 + self.delta() * t
    }

    pub fn midpoint(&self) -> Vec3 {
        (self.x0 + self.x1) * 0.5
    }
}

/// Halfspace `a . x <= b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Halfspace {
    pub a: Vec3,
    pub b: f64,
}

impl Halfspace {
    pub fn new(a: Vec3, b: f64) -> Self {
        debug_assert!(a.norm() > 0.0, "halfspace normal must be nonzero");
        Self { a, b }
    }

    /// `a . x - b`; nonpositive means feasible.
    pub fn violation(&self, x: &Vec3) -> f64 {
        self.a.dot(x) - self.b
    }

    pub fn signed_distance(&self, x: &Vec3) -> f64 {
        self.violation(x) / self.a.norm()
    }

    /// The same halfspace with its boundary moved outward by `dist`.
    pub fn expanded(&self, dist: f64) -> Halfspace {
        Halfspace {
            a: self.a,
            b: self.b + dist * self.a.norm(),
        }
    }
}

/// Convex polytope stored as stacked halfspaces together with the segment it
/// was grown around.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polytope {
    pub halfspaces: Vec<Halfspace>,
    pub seed_segment: Segment,
}

impl Polytope {
    /// Largest `a . x - b` over all facets.
    pub fn max_violation(&self, x: &Vec3) -> f64 {
        self.halfspaces
            .iter()
            .map(|h| h.violation(x))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn contains(&self, x: &Vec3, tol: f64) -> bool {
        self.halfspaces.iter().all(|h| h.violation(x) <= tol)
    }

    pub fn contains_segment(&self, seg: &Segment, tol: f64) -> bool {
        self.contains(&seg.x0, tol) && self.contains(&seg.x1, tol)
    }

    pub fn num_facets(&self) -> usize {
        self.halfspaces.len()
    }
}

/// Frobenius deviation of `R^T R` from identity, or of `det R` from one.
pub fn rotation_deviation(rot: &Mat3) -> f64 {
    let orth = (rot.transpose() * rot - Mat3::identity()).abs().max();
    let det = (rot.determinant() - 1.0).abs();
    if !orth.is_finite() || !det.is_finite() {
        return f64::INFINITY;
    }
    orth.max(det)
}

/// `(w, x, y, z)` quaternion, normalized, to a rotation matrix.
pub fn quaternion_to_matrix(q: [f64; 4]) -> Result<Mat3, GeometryError> {
    if !q.iter().all(|v| v.is_finite()) {
        return Err(GeometryError::NonFinite("quaternion"));
    }
    let n = (q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3]).sqrt();
    if n < 1e-12 {
        return Err(GeometryError::ZeroQuaternion);
    }
    let (w, x, y, z) = (q[0] / n, q[1] / n, q[2] / n, q[3] / n);
    Ok(Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    ))
}

/// Rotation matrix to a `(w, x, y, z)` unit quaternion.
pub fn matrix_to_quaternion(rot: &Mat3) -> [f64; 4] {
    let q = UnitQuaternion::from_matrix(rot);
    [q.w, q.i, q.j, q.k]
}

/// Rodrigues' formula: rotation by angle `|w|` about `w / |w|`.
pub fn exp_so3(w: &Vec3) -> Mat3 {
    let theta = w.norm();
    let k = skew(w);
    if theta < 1e-8 {
        return Mat3::identity() + k + k * k * 0.5;
    }
    Mat3::identity() + k * (theta.sin() / theta) + k * k * ((1.0 - theta.cos()) / (theta * theta))
}

pub fn skew(w: &Vec3) -> Mat3 {
    Mat3::new(0.0, -w.z, w.y, w.z, 0.0, -w.x, -w.y, w.x, 0.0)
}

/// Rotation angle of `R_a^T R_b` in degrees.
pub fn rotation_angle_deg(a: &Mat3, b: &Mat3) -> f64 {
    let r = a.transpose() * b;
    let c = ((r.trace() - 1.0) * 0.5).clamp(-1.0, 1.0);
    // acos loses precision near zero; use the skew part instead.
    let s = Vec3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]).norm() * 0.5;
    s.atan2(c).to_degrees()
}

/// Projects a near-rotation onto SO(3) with the SVD.
pub fn orthonormalize(rot: &Mat3) -> Mat3 {
    let svd = rot.svd(true, true);
    let u = svd.u.expect("svd u");
    let vt = svd.v_t.expect("svd v_t");
    let mut d = Mat3::identity();
    if (u * vt).determinant() < 0.0 {
        d[(2, 2)] = -1.0;
    }
    u * d * vt
}
