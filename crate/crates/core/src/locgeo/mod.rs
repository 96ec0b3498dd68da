//! Camera pose estimation from correspondences: pinhole projection,
//! Levenberg-Marquardt PnP, RANSAC, and rigid point-cloud registration.
//!
//! Pixels are assumed to be undistorted already.

pub mod io;
mod register;
pub mod synth;

use nalgebra::{Matrix2x3, Matrix6, SymmetricEigen, Vector2, Vector6};
use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{exp_so3, orthonormalize, rotation_angle_deg, rotation_deviation, skew, Mat3, Vec3};
use crate::rng;

pub use register::{edge_compatible, register_ransac, umeyama};

pub type Vec2 = Vector2<f64>;

/// Depth below which a camera-frame point counts as behind the camera.
pub const MIN_DEPTH: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LocError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("need at least {needed} correspondences, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("degenerate configuration: {0}")]
    Degenerate(String),
    #[error("point set is rank deficient (singular values {0:?})")]
    Rank([f64; 3]),
    #[error("no consensus: best hypothesis had {best_inliers} inliers")]
    NoConsensus { best_inliers: usize },
    #[error("malformed input: {0}")]
    Format(String),
}

/// Rigid transform `x -> rot * x + trans`; for a camera pose it maps world
/// points into the camera frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub rot: Mat3,
    pub trans: Vec3,
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rot: Mat3::identity(),
            trans: Vec3::zeros(),
        }
    }

    pub fn new(rot: Mat3, trans: Vec3) -> Result<Self, LocError> {
        let dev = rotation_deviation(&rot);
        if !(dev <= 1e-9) {
            return Err(LocError::Domain(format!("rotation deviates from SO(3) by {dev:.3e}")));
        }
        if !trans.iter().all(|v| v.is_finite()) {
            return Err(LocError::Domain("translation is not finite".into()));
        }
        Ok(Self { rot, trans })
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        self.rot * x + self.trans
    }

    /// `self` after `other`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rot: self.rot * other.rot,
            trans: self.rot * other.trans + self.trans,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rot.transpose();
        Pose {
            rot: rt,
            trans: -(rt * self.trans),
        }
    }

    pub fn rotation_error_deg(&self, other: &Pose) -> f64 {
        rotation_angle_deg(&self.rot, &other.rot)
    }

    pub fn translation_error(&self, other: &Pose) -> f64 {
        (self.trans - other.trans).norm()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self, LocError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), LocError> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.fx.is_finite() && self.fy.is_finite()) {
            return Err(LocError::Domain("focal lengths must be positive".into()));
        }
        if !(self.cx >= 0.0 && self.cx <= self.width as f64 && self.cy >= 0.0 && self.cy <= self.height as f64) {
            return Err(LocError::Domain("principal point must lie inside the image".into()));
        }
        Ok(())
    }

    pub fn matrix(&self) -> Mat3 {
        Mat3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence2D3D {
    pub pixel: Vec2,
    pub point: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correspondence3D3D {
    /// Map-frame point.
    pub p: Vec3,
    /// Camera-frame point.
    pub q: Vec3,
}

/// Pixel of a world point, or `None` when it is behind the camera.
pub fn project(intr: &CameraIntrinsics, pose: &Pose, point: &Vec3) -> Option<Vec2> {
    let xc = pose.apply(point);
    (xc.z > MIN_DEPTH).then(|| pixel_of(intr, &xc))
}

fn pixel_of(intr: &CameraIntrinsics, xc: &Vec3) -> Vec2 {
    Vec2::new(intr.fx * xc.x / xc.z + intr.cx, intr.fy * xc.y / xc.z + intr.cy)
}

/// Camera-frame point at depth `depth` behind `pixel`.
pub fn backproject(intr: &CameraIntrinsics, pixel: &Vec2, depth: f64) -> Result<Vec3, LocError> {
    if !(depth > 0.0 && depth.is_finite()) {
        return Err(LocError::Domain(format!("depth must be positive, got {depth}")));
    }
    Ok(Vec3::new((pixel.x - intr.cx) / intr.fx * depth, (pixel.y - intr.cy) / intr.fy * depth, depth))
}

/// Stacked reprojection residuals `project(pose, X_k) - pixel_k`.
pub fn pnp_residuals(corrs: &[Correspondence2D3D], intr: &CameraIntrinsics, pose: &Pose) -> Vec<f64> {
    let mut r = Vec::with_capacity(2 * corrs.len());
    for c in corrs {
        let mut xc = pose.apply(&c.point);
        if xc.z.abs() < MIN_DEPTH {
            xc.z = MIN_DEPTH.copysign(xc.z);
        }
        let px = pixel_of(intr, &xc);
        r.push(px.x - c.pixel.x);
        r.push(px.y - c.pixel.y);
    }
    r
}

/// Jacobian of [`pnp_residuals`] with respect to `(w, dt)` under the update
/// `rot <- exp(w) rot`, `trans <- trans + dt`. Rows come in `(u, v)` pairs.
pub fn pnp_jacobian(corrs: &[Correspondence2D3D], intr: &CameraIntrinsics, pose: &Pose) -> Vec<[f64; 6]> {
    let mut out = Vec::with_capacity(2 * corrs.len());
    for c in corrs {
        let rx = pose.rot * c.point;
        let xc = rx + pose.trans;
        let z = if xc.z.abs() < MIN_DEPTH { MIN_DEPTH.copysign(xc.z) } else { xc.z };
        let dproj = Matrix2x3::new(
            intr.fx / z,
            0.0,
            -intr.fx * xc.x / (z * z),
            0.0,
            intr.fy / z,
            -intr.fy * xc.y / (z * z),
        );
        let drot = dproj * (-skew(&rx));
        for row in 0..2 {
            out.push([
                drot[(row, 0)],
                drot[(row, 1)],
                drot[(row, 2)],
                dproj[(row, 0)],
                dproj[(row, 1)],
                dproj[(row, 2)],
            ]);
        }
    }
    out
}

/// Applies a tangent step `(w, dt)`.
pub fn retract(pose: &Pose, step: &Vector6<f64>) -> Pose {
    let w = Vec3::new(step[0], step[1], step[2]);
    let dt = Vec3::new(step[3], step[4], step[5]);
    Pose {
        rot: exp_so3(&w) * pose.rot,
        trans: pose.trans + dt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmSettings {
    pub max_iter: usize,
    /// Gradient infinity-norm threshold.
    pub tol: f64,
    pub initial_damping: f64,
}

impl Default for LmSettings {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-10,
            initial_damping: 1e-3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PnpResult {
    pub pose: Pose,
    /// Accepted LM steps.
    pub iterations: usize,
    /// Sum of squared pixel residuals.
    pub cost: f64,
    pub gradient_norm: f64,
    pub converged: bool,
}

fn check_spread(points: impl Iterator<Item = Vec3> + Clone, what: &str) -> Result<(), LocError> {
    let n = points.clone().count() as f64;
    let mean: Vec3 = points.clone().sum::<Vec3>() / n;
    let cov: Mat3 = points.map(|p| (p - mean) * (p - mean).transpose()).sum::<Mat3>() / n;
    let mut ev = SymmetricEigen::new(cov).eigenvalues;
    ev.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(ev[1] > 1e-12 * ev[0].max(f64::MIN_POSITIVE)) {
        return Err(LocError::Degenerate(format!("{what} are collinear")));
    }
    Ok(())
}

fn normal_equations(corrs: &[Correspondence2D3D], intr: &CameraIntrinsics, pose: &Pose) -> (Matrix6<f64>, Vector6<f64>, f64) {
    let r = pnp_residuals(corrs, intr, pose);
    let j = pnp_jacobian(corrs, intr, pose);
    let mut jtj = Matrix6::zeros();
    let mut jtr = Vector6::zeros();
    for (row, res) in j.iter().zip(&r) {
        let v = Vector6::from_row_slice(row);
        jtj += v * v.transpose();
        jtr += v * *res;
    }
    (jtj, jtr, r.iter().map(|x| x * x).sum())
}

fn cost_at(corrs: &[Correspondence2D3D], intr: &CameraIntrinsics, pose: &Pose) -> f64 {
    let mut acc = 0.0;
    for c in corrs {
        let xc = pose.apply(&c.point);
        if xc.z <= MIN_DEPTH {
            return f64::INFINITY;
        }
        acc += (pixel_of(intr, &xc) - c.pixel).norm_squared();
    }
    acc
}

/// Levenberg-Marquardt refinement of `init` on the reprojection error.
pub fn pnp_refine_detailed(
    corrs: &[Correspondence2D3D],
    intr: &CameraIntrinsics,
    init: &Pose,
    settings: &LmSettings,
) -> Result<PnpResult, LocError> {
    if corrs.len() < 4 {
        return Err(LocError::InsufficientData {
            needed: 4,
            got: corrs.len(),
        });
    }
    check_spread(corrs.iter().map(|c| c.point), "3D points")?;
    let mut pose = *init;
    let mut lambda = settings.initial_damping;
    let (mut jtj, mut jtr, mut cost) = normal_equations(corrs, intr, &pose);
    let mut iterations = 0;
    let mut grad = jtr.amax();
    while iterations < settings.max_iter && grad > settings.tol && cost > 0.0 {
        let diag = jtj.diagonal();
        let floor = 1e-12 * diag.max().max(f64::MIN_POSITIVE);
        let mut accepted = false;
        let mut factored = false;
        while lambda <= 1e16 {
            let mut a = jtj;
            for i in 0..6 {
                a[(i, i)] += lambda * diag[i].max(floor);
            }
            let Some(chol) = a.cholesky() else {
                lambda *= 10.0;
                continue;
            };
            factored = true;
            let step = -chol.solve(&jtr);
            let candidate = retract(&pose, &step);
            let c = cost_at(corrs, intr, &candidate);
            if c < cost {
                pose = candidate;
                lambda = (lambda / 10.0).max(1e-15);
                accepted = true;
                break;
            }
            lambda *= 10.0;
        }
        if !factored {
            return Err(LocError::Degenerate("normal equations are singular at every damping level".into()));
        }
        if !accepted {
            // no descent left at machine precision
            break;
        }
        iterations += 1;
        (jtj, jtr, cost) = normal_equations(corrs, intr, &pose);
        grad = jtr.amax();
    }
    pose.rot = orthonormalize(&pose.rot);
    Ok(PnpResult {
        pose,
        iterations,
        cost,
        gradient_norm: grad,
        converged: grad <= settings.tol || cost == 0.0,
    })
}

pub fn pnp_refine(
    corrs: &[Correspondence2D3D],
    intr: &CameraIntrinsics,
    init: &Pose,
    max_iter: usize,
    tol: f64,
) -> Result<Pose, LocError> {
    let settings = LmSettings {
        max_iter,
        tol,
        ..Default::default()
    };
    pnp_refine_detailed(corrs, intr, init, &settings).map(|r| r.pose)
}

fn reprojection_inliers(corrs: &[Correspondence2D3D], intr: &CameraIntrinsics, pose: &Pose, threshold: f64) -> Vec<bool> {
    corrs
        .iter()
        .map(|c| project(intr, pose, &c.point).is_some_and(|px| (px - c.pixel).norm() <= threshold))
        .collect()
}

fn subset<T: Copy>(items: &[T], mask: &[bool]) -> Vec<T> {
    items.iter().zip(mask).filter(|(_, m)| **m).map(|(c, _)| *c).collect()
}

/// Number of consensus refits after the best hypothesis is chosen.
const CONSENSUS_ROUNDS: usize = 5;

/// Four-point hypotheses refined from `init`, scored by reprojection
/// inliers; the winner is refit on its consensus set until it stabilizes.
pub fn pnp_ransac(
    corrs: &[Correspondence2D3D],
    intr: &CameraIntrinsics,
    init: &Pose,
    px_threshold: f64,
    iters: usize,
    seed: u64,
) -> Result<(Pose, Vec<bool>), LocError> {
    if corrs.len() < 4 {
        return Err(LocError::InsufficientData {
            needed: 4,
            got: corrs.len(),
        });
    }
    if !(px_threshold > 0.0) {
        return Err(LocError::Domain("pixel threshold must be positive".into()));
    }
    let hypothesis = LmSettings {
        max_iter: 50,
        tol: 1e-8,
        ..Default::default()
    };
    let scored: Vec<Option<(usize, Pose)>> = (0..iters)
        .into_par_iter()
        .map(|i| {
            let mut r = rng::stream(seed, "pnp-ransac", i as u64);
            let pick: Vec<Correspondence2D3D> = sample(&mut r, corrs.len(), 4).iter().map(|k| corrs[k]).collect();
            let fit = pnp_refine_detailed(&pick, intr, init, &hypothesis).ok()?;
            let count = reprojection_inliers(corrs, intr, &fit.pose, px_threshold).iter().filter(|m| **m).count();
            Some((count, fit.pose))
        })
        .collect();
    // most inliers, earliest hypothesis on ties
    let best = scored
        .into_iter()
        .flatten()
        .fold(None::<(usize, Pose)>, |acc, h| match acc {
            Some(a) if a.0 >= h.0 => Some(a),
            _ => Some(h),
        });
    let Some((count, mut pose)) = best.filter(|b| b.0 >= 4) else {
        return Err(LocError::NoConsensus {
            best_inliers: best.map_or(0, |b| b.0),
        });
    };
    log::debug!("pnp ransac: best hypothesis has {count} inliers");
    let mut mask = reprojection_inliers(corrs, intr, &pose, px_threshold);
    for _ in 0..CONSENSUS_ROUNDS {
        let inl = subset(corrs, &mask);
        let Ok(fit) = pnp_refine_detailed(&inl, intr, &pose, &LmSettings::default()) else { break };
        let next = reprojection_inliers(corrs, intr, &fit.pose, px_threshold);
        let grew = next.iter().filter(|m| **m).count() >= mask.iter().filter(|m| **m).count();
        if !grew {
            break;
        }
        pose = fit.pose;
        let stable = next == mask;
        mask = next;
        if stable {
            break;
        }
    }
    Ok((pose, mask))
}

#[cfg(test)]
mod tests;
