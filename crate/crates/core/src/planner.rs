//! End-to-end planning: occupancy grid, seed path, corridor, spline.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::collide::DEFAULT_ITERS;
use crate::corridor::{build_corridor, Corridor, CorridorError, CorridorParams, DEFAULT_EPS};
use crate::geometry::{Aabb, GeometryError, SphereBody, Vec3};
use crate::scene::Scene;
use crate::spline::{fit_trajectory_detailed, SplineError, SplineParams, Trajectory};
use crate::voxgrid::{build_grid, inflate_by, shortest_path, simplify_path, Endpoint, OccupancyGrid, SeedPath, VoxError};

#[derive(Debug, Error)]
pub enum PlanError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0} lies outside the planning domain")]
    OutOfBounds(Endpoint),
    #[error("{0} is blocked by an obstacle")]
    BlockedEndpoint(Endpoint),
    #[error("no collision-free path between start and goal")]
    Disconnected,
    #[error("corridor construction failed: {0}")]
    Corridor(#[from] CorridorError),
    #[error("trajectory optimization failed: {0}")]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<VoxError> for PlanError {
    fn from(e: VoxError) -> Self {
        match e {
            VoxError::OutOfBounds(w) => PlanError::OutOfBounds(w),
            VoxError::BlockedEndpoint(w) => PlanError::BlockedEndpoint(w),
            VoxError::Disconnected => PlanError::Disconnected,
            other => PlanError::Config(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlannerConfig {
    /// Robot sphere radius.
    pub kappa: f64,
    pub vmax: f64,
    pub amax: f64,
    pub dims: [usize; 3],
    /// Grid domain; the scene bounds when absent.
    pub bounds: Option<Aabb>,
    pub iters: usize,
    pub eps: f64,
    pub spline: SplineParams,
    /// How many times a seed path may be rerouted after an unsafe segment.
    pub max_reseeds: usize,
    /// Shortcut the grid path along lines of sight before building the
    /// corridor.
    pub simplify: bool,
}

impl Default for PlannerConfig {
    /// The maze-scene parameters.
    fn default() -> Self {
        Self {
            kappa: 0.25,
            vmax: 0.5,
            amax: 1.0,
            dims: [80, 80, 80],
            bounds: None,
            iters: DEFAULT_ITERS,
            eps: DEFAULT_EPS,
            spline: SplineParams::default(),
            max_reseeds: 16,
            simplify: true,
        }
    }
}

impl PlannerConfig {
    pub fn corridor_params(&self) -> CorridorParams {
        CorridorParams {
            vmax: self.vmax,
            amax: self.amax,
            iters: self.iters,
            eps: self.eps,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct PlanStats {
    /// Waypoints of the grid path before shortcutting.
    pub grid_waypoints: usize,
    pub seed_length: f64,
    pub seed_waypoints: usize,
    pub polytopes: usize,
    pub facets: usize,
    pub reseeds: usize,
    pub fallback: bool,
    pub qp_iterations: usize,
    pub t_seed: f64,
    pub t_corridor: f64,
    pub t_qp: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan {
    pub seed: SeedPath,
    pub corridor: Corridor,
    pub trajectory: Trajectory,
    pub stats: PlanStats,
}

/// Grid state shared by every query on one scene.
#[derive(Debug, Clone)]
pub struct Planner<'a> {
    scene: &'a Scene,
    config: PlannerConfig,
    body: SphereBody,
    grid: OccupancyGrid,
    occupied: usize,
    t_grid: f64,
}

impl<'a> Planner<'a> {
    /// Rasterizes the scene and inflates it so that every free cell center
    /// keeps the body, grown by half a cell diagonal, clear of obstacles.
    pub fn new(scene: &'a Scene, config: PlannerConfig) -> Result<Self, PlanError> {
        let body = SphereBody::new(config.kappa)?;
        config.corridor_params().validate()?;
        let bounds = config.bounds.unwrap_or_else(|| scene.bounds());
        if bounds.is_empty() {
            return Err(PlanError::Config("planning domain is empty; pass explicit bounds".into()));
        }
        let t = Instant::now();
        let raw = build_grid(scene, &bounds, config.dims)?;
        let occupied = raw.occupied_count();
        let grid = inflate_by(&raw, config.kappa + raw.half_diagonal());
        let t_grid = t.elapsed().as_secs_f64();
        log::info!(
            "grid {:?}: {} raw occupied, {} after inflation, {:.3}s",
            config.dims,
            occupied,
            grid.occupied_count(),
            t_grid
        );
        Ok(Self {
            scene,
            config,
            body,
            grid,
            occupied,
            t_grid,
        })
    }

    pub fn config(&self) -> &PlannerConfig {
        &self.config
    }

    pub fn body(&self) -> &SphereBody {
        &self.body
    }

    pub fn scene(&self) -> &Scene {
        self.scene
    }

    /// Box covered by the grid.
    pub fn domain(&self) -> Aabb {
        self.grid.bounds()
    }

    /// The inflated grid used for the seed search.
    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn raw_occupied(&self) -> usize {
        self.occupied
    }

    /// Seconds spent building the grid.
    pub fn grid_time(&self) -> f64 {
        self.t_grid
    }

    /// Seed path, corridor and trajectory from `start` to `goal`.
    ///
    /// The shortcut seed is used when its corridor can be built; otherwise
    /// the raw grid path is. A seed segment that touches an exact endpoint
    /// can pass closer to an obstacle than the grid guarantees; the cells
    /// next to it are then blocked and the search rerun.
    pub fn plan(&self, start: &Vec3, goal: &Vec3) -> Result<Plan, PlanError> {
        let mut stats = PlanStats::default();
        let mut grid: Option<OccupancyGrid> = None;
        let params = self.config.corridor_params();
        let (seed, corridor) = loop {
            let t = Instant::now();
            let current = grid.as_ref().unwrap_or(&self.grid);
            let seed = shortest_path(current, start, goal)?;
            let short = self.config.simplify.then(|| simplify_path(current, &seed));
            stats.t_seed += t.elapsed().as_secs_f64();
            stats.grid_waypoints = seed.waypoints.len();
            let t = Instant::now();
            if let Some(short) = short.filter(|s| s.waypoints.len() < seed.waypoints.len()) {
                match build_corridor(&short, self.scene, &self.body, &params) {
                    Ok(c) => {
                        stats.t_corridor += t.elapsed().as_secs_f64();
                        break (short, c);
                    }
                    Err(CorridorError::UnsafeSegment { .. }) => {
                        log::debug!("shortcut seed is unsafe; using the grid path");
                    }
                    Err(e) => return Err(e.into()),
                }
            }
            let built = build_corridor(&seed, self.scene, &self.body, &params);
            stats.t_corridor += t.elapsed().as_secs_f64();
            match built {
                Ok(c) => break (seed, c),
                Err(CorridorError::UnsafeSegment { segment, ellipsoid, k_star }) if stats.reseeds < self.config.max_reseeds => {
                    let last = seed.cells.len().saturating_sub(1);
                    let blockable: Vec<usize> = [segment, segment + 1].into_iter().filter(|&c| c > 0 && c < last).collect();
                    if blockable.is_empty() {
                        return Err(CorridorError::UnsafeSegment { segment, ellipsoid, k_star }.into());
                    }
                    log::debug!("seed segment {segment} touches ellipsoid {ellipsoid} (K = {k_star:.6}); rerouting");
                    let g = grid.get_or_insert_with(|| self.grid.clone());
                    for c in blockable {
                        g.set(seed.cells[c], true);
                    }
                    stats.reseeds += 1;
                }
                Err(e) => return Err(e.into()),
            }
        };
        stats.seed_length = seed.length();
        stats.seed_waypoints = seed.waypoints.len();
        stats.polytopes = corridor.len();
        stats.facets = corridor.num_facets();

        let t = Instant::now();
        let fit = fit_trajectory_detailed(&corridor, start, goal, self.config.vmax, &self.config.spline)?;
        stats.t_qp = t.elapsed().as_secs_f64();
        stats.fallback = fit.trajectory.fallback;
        stats.qp_iterations = fit.solution.as_ref().map_or(0, |s| s.iterations);
        Ok(Plan {
            seed,
            corridor,
            trajectory: fit.trajectory,
            stats,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Ellipsoid;
    use crate::oracle::trajectory_clearance;

    fn empty_scene() -> Scene {
        Scene::with_bounds(vec![], 0.2, Aabb::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 2.0)))
    }

    fn small_config() -> PlannerConfig {
        PlannerConfig {
            kappa: 0.1,
            dims: [40, 40, 20],
            ..Default::default()
        }
    }

    #[test]
    fn empty_scene_plan() {
        let scene = empty_scene();
        let planner = Planner::new(&scene, small_config()).unwrap();
        let start = Vec3::new(0.5, 0.5, 1.0);
        let goal = Vec3::new(3.5, 3.2, 1.0);
        let plan = planner.plan(&start, &goal).unwrap();
        assert!(!plan.trajectory.fallback);
        assert!((plan.trajectory.start() - start).norm() < 1e-12);
        assert!((plan.trajectory.end() - goal).norm() < 1e-12);
        assert!(plan.stats.seed_length >= (goal - start).norm() - 1e-9);
        assert_eq!(plan.stats.polytopes, plan.corridor.len());
    }

    #[test]
    fn same_cell_plan_is_one_polytope() {
        let scene = empty_scene();
        let planner = Planner::new(&scene, small_config()).unwrap();
        let plan = planner.plan(&Vec3::new(1.01, 1.01, 1.01), &Vec3::new(1.05, 1.02, 1.03)).unwrap();
        assert_eq!(plan.corridor.len(), 1);
        assert_eq!(plan.seed.waypoints.len(), 2);
    }

    #[test]
    fn empty_scene_shortcut_is_straight() {
        let scene = empty_scene();
        let planner = Planner::new(&scene, small_config()).unwrap();
        let (start, goal) = (Vec3::new(0.3, 0.4, 0.5), Vec3::new(3.7, 2.9, 1.6));
        let plan = planner.plan(&start, &goal).unwrap();
        assert_eq!(plan.seed.waypoints, vec![start, goal]);
        assert_eq!(plan.corridor.len(), 1);
        let raw = Planner::new(&scene, PlannerConfig { simplify: false, ..small_config() }).unwrap();
        assert!(raw.plan(&start, &goal).unwrap().corridor.len() > 1);
    }

    #[test]
    fn planning_around_a_wall() {
        // a slab across the room with a window in the middle
        let mut obstacles = Vec::new();
        for i in 0..40 {
            for k in 0..20 {
                let (x, z) = (0.05 + i as f64 * 0.1, 0.05 + k as f64 * 0.1);
                if (x - 2.0).abs() < 0.6 && (z - 1.0).abs() < 0.6 {
                    continue;
                }
                obstacles.push(Ellipsoid::sphere(Vec3::new(x, 2.0, z), 0.08));
            }
        }
        let scene = Scene::with_bounds(obstacles, 0.2, Aabb::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 2.0)));
        let planner = Planner::new(&scene, small_config()).unwrap();
        // the straight line hits the wall, so the route bends through the window
        let plan = planner.plan(&Vec3::new(0.5, 0.5, 0.3), &Vec3::new(0.6, 3.5, 0.3)).unwrap();
        assert!(plan.corridor.len() >= 2);
        assert!(plan.stats.grid_waypoints > plan.seed.waypoints.len());
        let report = trajectory_clearance(&plan.trajectory, &scene, planner.body(), 200);
        assert!(report.is_clear() && report.min_k_star > 1.0, "{:?}", report.argmin);
        // start inside the wall
        assert!(matches!(
            planner.plan(&Vec3::new(0.05, 2.0, 0.05), &Vec3::new(3.5, 3.5, 1.5)),
            Err(PlanError::BlockedEndpoint(Endpoint::Start))
        ));
        assert!(matches!(
            planner.plan(&Vec3::new(0.5, 0.5, 0.5), &Vec3::new(9.0, 3.5, 1.5)),
            Err(PlanError::OutOfBounds(Endpoint::Goal))
        ));
    }

    #[test]
    fn sealed_goal_is_disconnected() {
        let mut obstacles = Vec::new();
        for i in 0..40 {
            for k in 0..20 {
                obstacles.push(Ellipsoid::sphere(Vec3::new(0.05 + i as f64 * 0.1, 2.0, 0.05 + k as f64 * 0.1), 0.08));
            }
        }
        let scene = Scene::with_bounds(obstacles, 0.2, Aabb::new(Vec3::zeros(), Vec3::new(4.0, 4.0, 2.0)));
        let planner = Planner::new(&scene, small_config()).unwrap();
        assert!(matches!(
            planner.plan(&Vec3::new(0.5, 0.5, 0.5), &Vec3::new(3.5, 3.5, 1.5)),
            Err(PlanError::Disconnected)
        ));
    }

    #[test]
    fn bad_configs() {
        let scene = Scene::from_ellipsoids(vec![], 0.2);
        assert!(matches!(Planner::new(&scene, small_config()), Err(PlanError::Config(_))));
        let scene = empty_scene();
        let bad = PlannerConfig {
            kappa: -1.0,
            ..small_config()
        };
        assert!(Planner::new(&scene, bad).is_err());
        let bad = PlannerConfig {
            vmax: 0.0,
            ..small_config()
        };
        assert!(matches!(Planner::new(&scene, bad), Err(PlanError::Corridor(_))));
    }
}
