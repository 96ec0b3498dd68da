use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Deserialize;

use gsplan_core::planner::PlannerConfig;
use gsplan_core::scene::{SceneOptions, DEFAULT_GAMMA, DEFAULT_OPACITY_MIN};
use gsplan_core::Vec3;

use crate::SchemaError;

/// Grid resolution: `N` for a cube or `Nx,Ny,Nz`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(untagged)]
pub enum Resolution {
    Cube(usize),
    Axes([usize; 3]),
}

impl Resolution {
    pub fn dims(self) -> [usize; 3] {
        match self {
            Resolution::Cube(n) => [n; 3],
            Resolution::Axes(d) => d,
        }
    }
}

impl std::str::FromStr for Resolution {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(',').map(str::trim).collect();
        let parse = |p: &str| p.parse::<usize>().map_err(|e| format!("bad resolution `{s}`: {e}"));
        match parts.as_slice() {
            [n] => Ok(Resolution::Cube(parse(n)?)),
            [x, y, z] => Ok(Resolution::Axes([parse(x)?, parse(y)?, parse(z)?])),
            _ => Err(format!("resolution must be N or Nx,Ny,Nz, got `{s}`")),
        }
    }
}

pub fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| format!("bad vector `{s}`: {e}"))?;
    match v.as_slice() {
        [x, y, z] => Ok([*x, *y, *z]),
        _ => Err(format!("expected x,y,z, got `{s}`")),
    }
}

/// Contents of a `--config` file. Every key is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub scene: Option<PathBuf>,
    pub start: Option<[f64; 3]>,
    pub goal: Option<[f64; 3]>,
    pub radius: Option<f64>,
    pub vmax: Option<f64>,
    pub amax: Option<f64>,
    pub resolution: Option<Resolution>,
    pub gamma: Option<f64>,
    pub opacity_min: Option<f64>,
    pub iters: Option<usize>,
    pub eps: Option<f64>,
    pub degree: Option<usize>,
    pub continuity: Option<usize>,
    pub qp_tol: Option<f64>,
    pub seed: Option<u64>,
    pub linear_scales: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text)
            .map_err(|e| SchemaError(format!("config {}: {e}", path.display())))
            .map_err(Into::into)
    }
}

/// Planning options shared by `plan`, `bench`, `check` and `voxelize`;
/// flags override the config file, which overrides the defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct PlanArgs {
    /// TOML file with any of the options below
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Splat scene (.ply) or ellipsoid fixture (.json)
    #[arg(long)]
    pub scene: Option<PathBuf>,
    /// Robot sphere radius
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub vmax: Option<f64>,
    #[arg(long)]
    pub amax: Option<f64>,
    /// Grid cells: N or Nx,Ny,Nz
    #[arg(long)]
    pub resolution: Option<Resolution>,
    /// Confidence level of the obstacle ellipsoids
    #[arg(long)]
    pub gamma: Option<f64>,
    #[arg(long)]
    pub opacity_min: Option<f64>,
    /// Bisection steps of the collision test
    #[arg(long)]
    pub iters: Option<usize>,
    /// Hyperplane buffer
    #[arg(long)]
    pub eps: Option<f64>,
    /// Bezier degree of each piece
    #[arg(long)]
    pub degree: Option<usize>,
    /// Continuity order at piece junctions
    #[arg(long)]
    pub continuity: Option<usize>,
    #[arg(long)]
    pub qp_tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Fail instead of returning the corridor polyline when the QP fails
    #[arg(long)]
    pub no_fallback: bool,
    /// PLY scales and opacities are already activated
    #[arg(long)]
    pub linear_scales: bool,
}

/// Fully resolved planning configuration.
#[derive(Debug, Clone)]
pub struct Resolved {
    pub scene: PathBuf,
    pub start: Option<Vec3>,
    pub goal: Option<Vec3>,
    pub scene_options: SceneOptions,
    pub planner: PlannerConfig,
    pub seed: u64,
}

impl PlanArgs {
    pub fn resolve(&self, start: Option<[f64; 3]>, goal: Option<[f64; 3]>) -> Result<Resolved> {
        let file = match &self.config {
            Some(p) => FileConfig::load(p)?,
            None => FileConfig::default(),
        };
        let Some(scene) = self.scene.clone().or(file.scene) else {
            bail!(SchemaError("no scene given (--scene or `scene` in the config)".into()));
        };
        let mut planner = PlannerConfig::default();
        planner.kappa = self.radius.or(file.radius).unwrap_or(planner.kappa);
        planner.vmax = self.vmax.or(file.vmax).unwrap_or(planner.vmax);
        planner.amax = self.amax.or(file.amax).unwrap_or(planner.amax);
        planner.dims = self.resolution.or(file.resolution).map_or(planner.dims, Resolution::dims);
        planner.iters = self.iters.or(file.iters).unwrap_or(planner.iters);
        planner.eps = self.eps.or(file.eps).unwrap_or(planner.eps);
        planner.spline.degree = self.degree.or(file.degree).unwrap_or(planner.spline.degree);
        planner.spline.continuity = self.continuity.or(file.continuity).unwrap_or(planner.spline.continuity);
        planner.spline.tol = self.qp_tol.or(file.qp_tol).unwrap_or(planner.spline.tol);
        planner.spline.allow_fallback = !self.no_fallback;
        let scene_options = SceneOptions {
            gamma: self.gamma.or(file.gamma).unwrap_or(DEFAULT_GAMMA),
            opacity_min: self.opacity_min.or(file.opacity_min).unwrap_or(DEFAULT_OPACITY_MIN),
            linear_scales: self.linear_scales || file.linear_scales.unwrap_or(false),
        };
        for (name, v) in [
            ("radius", planner.kappa),
            ("vmax", planner.vmax),
            ("amax", planner.amax),
            ("qp_tol", planner.spline.tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bail!(SchemaError(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Resolved {
            scene,
            start: start.or(file.start).map(Vec3::from),
            goal: goal.or(file.goal).map(Vec3::from),
            scene_options,
            planner,
            seed: self.seed.or(file.seed).unwrap_or(0),
        })
    }
}
