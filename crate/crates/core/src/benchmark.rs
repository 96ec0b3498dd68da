//! Repeated planning between antipodal points on a circle, with every
//! returned trajectory checked by the clearance oracle.

use std::io::Write;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::oracle::trajectory_clearance;
use crate::planner::{PlanError, Planner};
use crate::rng;
use crate::spline::Trajectory;
use crate::synth::circle_pair;

pub const CSV_HEADER: &str = "trial,success,path_length,min_k_star,P,facets,t_grid,t_seed,t_corridor,t_qp,t_total,status";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchOptions {
    pub trials: usize,
    pub seed: u64,
    /// Oracle samples per trajectory piece.
    pub samples_per_piece: usize,
    /// Record wall-clock columns; they are zero otherwise so that output is
    /// reproducible.
    pub timings: bool,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            trials: 100,
            seed: 0,
            samples_per_piece: 100,
            timings: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub trial: usize,
    pub success: bool,
    pub path_length: f64,
    pub min_k_star: f64,
    pub polytopes: usize,
    pub facets: usize,
    pub t_grid: f64,
    pub t_seed: f64,
    pub t_corridor: f64,
    pub t_qp: f64,
    pub t_total: f64,
    /// `ok`, `fallback`, or the failure kind.
    pub status: String,
}

impl BenchRow {
    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            u8::from(self.success),
            self.path_length,
            self.min_k_star,
            self.polytopes,
            self.facets,
            self.t_grid,
            self.t_seed,
            self.t_corridor,
            self.t_qp,
            self.t_total,
            self.status
        )
    }
}

/// Arc length from dense sampling.
pub fn path_length(traj: &Trajectory, samples_per_piece: usize) -> f64 {
    let n = samples_per_piece.max(2);
    let mut total = 0.0;
    for p in 0..traj.pieces.len() {
        let mut prev = traj.sample_piece(p, 0.0).position;
        for k in 1..n {
            let x = traj.sample_piece(p, k as f64 / (n - 1) as f64).position;
            total += (x - prev).norm();
            prev = x;
        }
    }
    total
}

pub fn failure_kind(e: &PlanError) -> &'static str {
    match e {
        PlanError::BlockedEndpoint(_) | PlanError::OutOfBounds(_) => "blocked",
        PlanError::Disconnected => "disconnected",
        PlanError::Corridor(_) => "corridor",
        PlanError::Spline(_) => "qp",
        PlanError::Config(_) | PlanError::Geometry(_) => "config",
    }
}

/// Angle of trial `i`.
pub fn trial_angle(seed: u64, trial: usize) -> f64 {
    rng::stream(seed, "bench-circle", trial as u64).random_range(0.0..std::f64::consts::TAU)
}

pub fn run_bench(planner: &Planner, opts: &BenchOptions) -> Vec<BenchRow> {
    let domain = planner.domain();
    let t_grid = if opts.timings { planner.grid_time() } else { 0.0 };
    (0..opts.trials)
        .into_par_iter()
        .map(|trial| {
            let (start, goal) = circle_pair(&domain, trial_angle(opts.seed, trial));
            let t = Instant::now();
            let result = planner.plan(&start, &goal);
            let total = t.elapsed().as_secs_f64();
            let time = |v: f64| if opts.timings { v } else { 0.0 };
            match result {
                Ok(plan) => {
                    let report = trajectory_clearance(&plan.trajectory, planner.scene(), planner.body(), opts.samples_per_piece);
                    BenchRow {
                        trial,
                        success: true,
                        path_length: path_length(&plan.trajectory, opts.samples_per_piece),
                        min_k_star: report.min_k_star,
                        polytopes: plan.stats.polytopes,
                        facets: plan.stats.facets,
                        t_grid,
                        t_seed: time(plan.stats.t_seed),
                        t_corridor: time(plan.stats.t_corridor),
                        t_qp: time(plan.stats.t_qp),
                        t_total: time(total),
                        status: if plan.trajectory.fallback { "fallback" } else { "ok" }.into(),
                    }
                }
                Err(e) => {
                    log::warn!("trial {trial}: {e}");
                    BenchRow {
                        trial,
                        success: false,
                        path_length: 0.0,
                        min_k_star: f64::NAN,
                        polytopes: 0,
                        facets: 0,
                        t_grid,
                        t_seed: 0.0,
                        t_corridor: 0.0,
                        t_qp: 0.0,
                        t_total: time(total),
                        status: failure_kind(&e).into(),
                    }
                }
            }
        })
        .collect()
}

pub fn write_csv<W: Write>(mut w: W, rows: &[BenchRow]) -> std::io::Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in rows {
        writeln!(w, "{}", r.to_csv())?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{Aabb, Vec3};
    use crate::planner::PlannerConfig;
    use crate::scene::Scene;

    #[test]
    fn empty_scene_follows_the_chord() {
        let domain = Aabb::new(Vec3::new(-5.0, -5.0, 0.0), Vec3::new(5.0, 5.0, 2.0));
        let scene = Scene::with_bounds(vec![], 0.2, domain);
        let config = PlannerConfig {
            kappa: 0.1,
            dims: [40, 40, 8],
            ..Default::default()
        };
        let planner = Planner::new(&scene, config).unwrap();
        let opts = BenchOptions {
            trials: 3,
            seed: 4,
            ..Default::default()
        };
        let rows = run_bench(&planner, &opts);
        for r in &rows {
            assert!(r.success, "{r:?}");
            assert!(r.min_k_star.is_infinite());
            // chord of the radius-4.5 circle
            assert!((r.path_length - 9.0).abs() < 0.09, "{}", r.path_length);
        }
        let mut a = Vec::new();
        write_csv(&mut a, &rows).unwrap();
        let mut b = Vec::new();
        write_csv(&mut b, &run_bench(&planner, &opts)).unwrap();
        assert_eq!(a, b);
        let text = String::from_utf8(a).unwrap();
        assert!(text.starts_with(CSV_HEADER));
        assert_eq!(text.lines().count(), 4);
    }
}
