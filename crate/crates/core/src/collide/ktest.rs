use nalgebra::SymmetricEigen;
use rayon::prelude::*;

use super::{CollideError, IntersectionResult};
use crate::geometry::{Ellipsoid, Mat3, Segment, SphereBody, Vec3};

/// Diagonalization shared by two ellipsoids: with `phi` having columns
/// `phi_i` and weights `w_i(s) = s(1-s) / (1 + s(lambda_i - 1))`,
/// `[Sigma_a/(1-s) + Sigma_b/s]^-1 = sum_i w_i(s) phi_i phi_i^T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SharedBasis {
    pub phi: Mat3,
    pub lambda: Vec3,
}

impl SharedBasis {
    /// Basis for obstacle `a` against ellipsoid `b`, via the Cholesky factor
    /// of `Sigma_b` and an eigendecomposition of `L^-1 Sigma_a L^-T`.
    pub fn pair(a: &Ellipsoid, b: &Ellipsoid) -> Result<Self, CollideError> {
        let chol = b
            .covariance()
            .cholesky()
            .ok_or(CollideError::NotPositiveDefinite("b"))?;
        let l = chol.l();
        let l_inv = l
            .try_inverse()
            .ok_or(CollideError::NotPositiveDefinite("b"))?;
        let mut c = l_inv * a.covariance() * l_inv.transpose();
        c = (c + c.transpose()) * 0.5;
        let eig = SymmetricEigen::new(c);
        if !eig.eigenvalues.iter().all(|&v| v > 0.0 && v.is_finite()) {
            return Err(CollideError::NotPositiveDefinite("a"));
        }
        Ok(Self {
            phi: l_inv.transpose() * eig.eigenvectors,
            lambda: eig.eigenvalues,
        })
    }

    /// Basis for an obstacle against a sphere of radius `kappa`; needs no
    /// factorization because the sphere covariance is isotropic.
    pub fn sphere(obstacle: &Ellipsoid, body: &SphereBody) -> Self {
        let k = body.kappa;
        Self {
            phi: obstacle.rot / k,
            lambda: obstacle.semi_axes.map(|a| a * a / (k * k)),
        }
    }

    /// Weights `w_i(s)` and their derivatives.
    #[inline]
    pub fn weights(&self, s: f64) -> (Vec3, Vec3) {
        let mut w = Vec3::zeros();
        let mut dw = Vec3::zeros();
        let ss = s * (1.0 - s);
        for i in 0..3 {
            let lm1 = self.lambda[i] - 1.0;
            let den = 1.0 + s * lm1;
            w[i] = ss / den;
            dw[i] = ((1.0 - 2.0 * s) - lm1 * s * s) / (den * den);
        }
        (w, dw)
    }

    /// Inverse of `Sigma_a/(1-s) + Sigma_b/s`.
    pub fn inverse_at(&self, s: f64) -> Mat3 {
        let (w, _) = self.weights(s);
        self.phi * Mat3::from_diagonal(&w) * self.phi.transpose()
    }

    /// Coordinates of a segment relative to `mu` in this basis.
    #[inline]
    pub fn project(&self, seg: &Segment, mu: &Vec3) -> (Vec3, Vec3) {
        let pt = self.phi.transpose();
        (pt * (seg.x0 - mu), pt * seg.delta())
    }

    /// `(K, dK/ds, t*)` at `s` for projected segment coordinates `(p, q)`.
    #[inline]
    pub fn evaluate(&self, s: f64, p: &Vec3, q: &Vec3) -> (f64, f64, f64) {
        let (w, dw) = self.weights(s);
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for i in 0..3 {
            a += w[i] * p[i] * p[i];
            b += w[i] * p[i] * q[i];
            c += w[i] * q[i] * q[i];
        }
        let t = if c > 0.0 { (-b / c).clamp(0.0, 1.0) } else { 0.0 };
        let k = a + 2.0 * b * t + c * t * t;
        let mut dk = 0.0;
        for i in 0..3 {
            let r = p[i] + t * q[i];
            dk += dw[i] * r * r;
        }
        (k, dk, t)
    }
}

/// `K(s)` and `dK/ds` for a sphere of radius `kappa` displaced by `delta`
/// from an obstacle:
/// `K(s) = sum_i d_i^2 s(1-s) / (kappa^2 + s(a_i^2 - kappa^2))`, `d = R^T delta`.
pub fn k_of_s(s: f64, delta: &Vec3, obstacle: &Ellipsoid, body: &SphereBody) -> Result<(f64, f64), CollideError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(CollideError::Domain(format!("s must lie in (0, 1), got {s}")));
    }
    let d = obstacle.rot.transpose() * delta;
    let k2 = body.kappa * body.kappa;
    let (mut k, mut dk) = (0.0, 0.0);
    for i in 0..3 {
        let l2 = obstacle.semi_axes[i] * obstacle.semi_axes[i];
        let den = k2 + s * (l2 - k2);
        let num = s * (1.0 - s);
        let d2 = d[i] * d[i];
        k += d2 * num / den;
        dk += d2 * ((1.0 - 2.0 * s) * den - num * (l2 - k2)) / (den * den);
    }
    Ok((k, dk))
}

/// Maximizes a concave `K` on `(0, 1)` by bisection on the sign of its
/// derivative. Returns the better interior endpoint of the final bracket,
/// so `|s_hat - s*| <= 2^-(iters+1)` and `K(s_hat)` never decreases as
/// `iters` grows.
pub fn bisection_max<F>(mut k_closure: F, iters: usize) -> (f64, f64)
where
    F: FnMut(f64) -> (f64, f64),
{
    let iters = iters.max(1);
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let (mut k_lo, mut k_hi) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..=iters {
        let mid = 0.5 * (lo + hi);
        let (k, grad) = k_closure(mid);
        if grad >= 0.0 {
            lo = mid;
            k_lo = k;
        } else {
            hi = mid;
            k_hi = k;
        }
    }
    if k_lo >= k_hi {
        (lo, k_lo)
    } else {
        (hi, k_hi)
    }
}

fn run_bisection(basis: &SharedBasis, p: &Vec3, q: &Vec3, iters: usize) -> IntersectionResult {
    let (s, _) = bisection_max(
        |s| {
            let (k, dk, _) = basis.evaluate(s, p, q);
            (k, dk)
        },
        iters,
    );
    let (k, _, t) = basis.evaluate(s, p, q);
    IntersectionResult::new(k, s, t)
}

/// Tests a sphere swept along `seg` against one obstacle.
pub fn test_sphere_segment(body: &SphereBody, seg: &Segment, obstacle: &Ellipsoid, iters: usize) -> IntersectionResult {
    let basis = SharedBasis::sphere(obstacle, body);
    let (p, q) = basis.project(seg, &obstacle.mu);
    run_bisection(&basis, &p, &q, iters)
}

/// Static test between two ellipsoids; `a` occupies the `1/(1-s)` slot.
pub fn test_ellipsoid_pair(a: &Ellipsoid, b: &Ellipsoid, iters: usize) -> Result<IntersectionResult, CollideError> {
    let basis = SharedBasis::pair(a, b)?;
    let (p, q) = basis.project(&Segment::point(b.mu), &a.mu);
    Ok(run_bisection(&basis, &p, &q, iters))
}

/// Tests an ellipsoidal body swept along `seg` (its center moving from
/// `seg.x0` to `seg.x1`) against `obstacle`.
pub fn test_ellipsoid_segment(
    body: &Ellipsoid,
    seg: &Segment,
    obstacle: &Ellipsoid,
    iters: usize,
) -> Result<IntersectionResult, CollideError> {
    let basis = SharedBasis::pair(obstacle, body)?;
    let (p, q) = basis.project(seg, &obstacle.mu);
    Ok(run_bisection(&basis, &p, &q, iters))
}

/// [`test_sphere_segment`] against many obstacles; output order follows input.
pub fn test_sphere_segment_batch(
    body: &SphereBody,
    seg: &Segment,
    obstacles: &[Ellipsoid],
    iters: usize,
) -> Vec<IntersectionResult> {
    obstacles
        .par_iter()
        .map(|o| test_sphere_segment(body, seg, o, iters))
        .collect()
}

/// [`test_sphere_segment`] against the obstacles selected by `indices`.
pub fn test_sphere_segment_indexed(
    body: &SphereBody,
    seg: &Segment,
    obstacles: &[Ellipsoid],
    indices: &[usize],
    iters: usize,
) -> Vec<IntersectionResult> {
    indices
        .par_iter()
        .map(|&i| test_sphere_segment(body, seg, &obstacles[i], iters))
        .collect()
}

/// [`test_ellipsoid_pair`] of `body` against each obstacle.
pub fn test_ellipsoid_pair_batch(
    body: &Ellipsoid,
    obstacles: &[Ellipsoid],
    iters: usize,
) -> Result<Vec<IntersectionResult>, CollideError> {
    obstacles
        .par_iter()
        .enumerate()
        .map(|(i, o)| {
            test_ellipsoid_pair(o, body, iters).map_err(|e| match e {
                CollideError::NotPositiveDefinite("a") => CollideError::BatchNotPositiveDefinite(i),
                other => other,
            })
        })
        .collect()
}

/// True when the swept sphere clears every obstacle (empty slice clears).
pub fn segment_is_clear(body: &SphereBody, seg: &Segment, obstacles: &[Ellipsoid], iters: usize) -> bool {
    obstacles
        .par_iter()
        .all(|o| test_sphere_segment(body, seg, o, iters).disjoint)
}
