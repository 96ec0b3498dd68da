//! Synthetic correspondence sets with known ground truth.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{backproject, project, CameraIntrinsics, Correspondence2D3D, Correspondence3D3D, Pose, Vec2};
use crate::geometry::{exp_so3, Vec3};
use crate::oracle::random_direction;
use crate::rng;

/// Uniformly distributed rotation.
pub fn random_rotation<R: Rng>(rng: &mut R) -> crate::geometry::Mat3 {
    let q = nalgebra::UnitQuaternion::from_quaternion(nalgebra::Quaternion::new(
        rng.sample(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
        rng.sample(rand_distr::StandardNormal),
    ));
    q.to_rotation_matrix().into_inner()
}

pub fn random_pose<R: Rng>(rng: &mut R, max_trans: f64) -> Pose {
    Pose {
        rot: random_rotation(rng),
        trans: random_direction(rng) * rng.random_range(0.0..=max_trans),
    }
}

/// `pose` rotated by exactly `deg` degrees about a random axis and shifted by
/// exactly `dist` in a random direction.
pub fn perturb<R: Rng>(pose: &Pose, deg: f64, dist: f64, rng: &mut R) -> Pose {
    let axis = random_direction(rng);
    Pose {
        rot: exp_so3(&(axis * deg.to_radians())) * pose.rot,
        trans: pose.trans + random_direction(rng) * dist,
    }
}

pub fn default_intrinsics() -> CameraIntrinsics {
    CameraIntrinsics {
        fx: 500.0,
        fy: 500.0,
        cx: 320.0,
        cy: 240.0,
        width: 640,
        height: 480,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PnpScenario {
    pub truth: Pose,
    pub intrinsics: CameraIntrinsics,
    pub corrs: Vec<Correspondence2D3D>,
    pub inlier: Vec<bool>,
}

/// Points seen at depths 2 to 6 across the whole image; a random subset of
/// `round(outlier_fraction * n)` of them gets uniform random pixels.
pub fn pnp_scenario(seed: u64, n: usize, noise_px: f64, outlier_fraction: f64) -> PnpScenario {
    let mut r = rng::stream(seed, "synth-pnp", 0);
    let intr = default_intrinsics();
    let truth = random_pose(&mut r, 1.0);
    let inv = truth.inverse();
    let n_out = (outlier_fraction * n as f64).round() as usize;
    let outliers = rand::seq::index::sample(&mut r, n, n_out.min(n));
    let mut inlier = vec![true; n];
    for i in outliers.iter() {
        inlier[i] = false;
    }
    let noise = Normal::new(0.0, noise_px.max(0.0)).expect("valid sigma");
    let corrs = (0..n)
        .map(|i| {
            let px = Vec2::new(
                r.random_range(0.0..intr.width as f64),
                r.random_range(0.0..intr.height as f64),
            );
            let depth = r.random_range(2.0..6.0);
            let xc = backproject(&intr, &px, depth).expect("positive depth");
            let point = inv.apply(&xc);
            let pixel = if inlier[i] {
                let exact = project(&intr, &truth, &point).expect("in front");
                if noise_px > 0.0 {
                    exact + Vec2::new(noise.sample(&mut r), noise.sample(&mut r))
                } else {
                    exact
                }
            } else {
                Vec2::new(
                    r.random_range(0.0..intr.width as f64),
                    r.random_range(0.0..intr.height as f64),
                )
            };
            Correspondence2D3D { pixel, point }
        })
        .collect();
    PnpScenario {
        truth,
        intrinsics: intr,
        corrs,
        inlier,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationScenario {
    pub truth: Pose,
    pub corrs: Vec<Correspondence3D3D>,
    pub inlier: Vec<bool>,
}

/// Camera-frame points in `[-scale, scale]^3` with `p = truth(q) + noise`;
/// outlier pairs get an unrelated random `p`.
pub fn registration_scenario(seed: u64, n: usize, scale: f64, noise: f64, outlier_fraction: f64) -> RegistrationScenario {
    let mut r = rng::stream(seed, "synth-register", 0);
    let truth = random_pose(&mut r, scale);
    let n_out = (outlier_fraction * n as f64).round() as usize;
    let outliers = rand::seq::index::sample(&mut r, n, n_out.min(n));
    let mut inlier = vec![true; n];
    for i in outliers.iter() {
        inlier[i] = false;
    }
    let gauss = Normal::new(0.0, noise.max(0.0)).expect("valid sigma");
    let cube = |r: &mut rand_chacha::ChaCha8Rng| Vec3::from_fn(|_, _| r.random_range(-scale..scale));
    let corrs = (0..n)
        .map(|i| {
            let q = cube(&mut r);
            let p = if inlier[i] {
                let jitter = if noise > 0.0 {
                    Vec3::from_fn(|_, _| gauss.sample(&mut r))
                } else {
                    Vec3::zeros()
                };
                truth.apply(&q) + jitter
            } else {
                truth.apply(&cube(&mut r))
            };
            Correspondence3D3D { p, q }
        })
        .collect();
    RegistrationScenario { truth, corrs, inlier }
}
