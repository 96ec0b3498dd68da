//! Exact ellipsoid collision tests through the concave function
//! `K(s) = Delta^T [Sigma_a/(1-s) + Sigma_b/s]^-1 Delta`: two ellipsoids are
//! disjoint iff `max_s K(s) > 1`.

mod ktest;
mod mvee;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{SphereBody, Vec3};
use crate::scene::Scene;

pub use ktest::{
    bisection_max, k_of_s, segment_is_clear, test_ellipsoid_pair, test_ellipsoid_pair_batch, test_ellipsoid_segment,
    test_sphere_segment, test_sphere_segment_batch, test_sphere_segment_indexed, SharedBasis,
};
pub use mvee::min_volume_ellipsoid;

/// Bisection steps used when the caller does not choose.
pub const DEFAULT_ITERS: usize = 10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CollideError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("covariance of ellipsoid `{0}` is not positive definite")]
    NotPositiveDefinite(&'static str),
    #[error("covariance of obstacle {0} is not positive definite")]
    BatchNotPositiveDefinite(usize),
    #[error("rank error: {0}")]
    Rank(String),
}

/// Outcome of one collision test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntersectionResult {
    pub k_star: f64,
    pub s_star: f64,
    pub t_star: f64,
    /// `k_star > 1`; touching counts as a collision.
    pub disjoint: bool,
}

impl IntersectionResult {
    pub fn new(k_star: f64, s_star: f64, t_star: f64) -> Self {
        let k_star = k_star.max(0.0);
        Self {
            k_star,
            s_star,
            t_star,
            disjoint: k_star > 1.0,
        }
    }
}

/// Indices of the obstacles that can possibly collide with a sphere of
/// radius `kappa` centered at `x`: repeatedly shrinks a ball query whose
/// radius is the largest semi-axis still in the set plus `kappa`.
pub fn minimal_collision_set(x: &Vec3, body: &SphereBody, scene: &Scene) -> Vec<usize> {
    let ells = scene.ellipsoids();
    let mut radius = scene.max_semi_axis() + body.kappa;
    let mut set = scene.centers_within(x, radius);
    loop {
        let next_radius = set
            .iter()
            .map(|&i| ells[i].max_semi_axis())
            .fold(0.0, f64::max)
            + body.kappa;
        if next_radius >= radius {
            return set;
        }
        radius = next_radius;
        let next = scene.centers_within(x, radius);
        if next.len() == set.len() {
            return next;
        }
        set = next;
    }
}
