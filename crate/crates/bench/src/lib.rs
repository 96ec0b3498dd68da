//! Inputs shared by the benchmarks.

use rand::Rng;

use gsplan_core::locgeo::synth::random_rotation;
use gsplan_core::planner::PlannerConfig;
use gsplan_core::{rng, Ellipsoid, Vec3};

/// Random ellipsoids with centers in `[-spread, spread]^3`.
pub fn random_ellipsoids(seed: u64, n: usize, spread: f64) -> Vec<Ellipsoid> {
    let mut r = rng::stream(seed, "bench-ellipsoids", 0);
    (0..n)
        .map(|_| {
            let mu = Vec3::from_fn(|_, _| r.random_range(-spread..spread));
            let axes = Vec3::from_fn(|_, _| r.random_range(0.1..2.0));
            Ellipsoid::new(mu, random_rotation(&mut r), axes).expect("valid ellipsoid")
        })
        .collect()
}

/// Planner settings for the cluttered fixture: thin robot, flat grid.
pub fn clutter_config() -> PlannerConfig {
    PlannerConfig {
        kappa: 0.1,
        dims: [80, 80, 16],
        ..Default::default()
    }
}
