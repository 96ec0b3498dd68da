//! Gaussian-splat ingestion and conversion to confidence ellipsoids.

mod chi2;
mod ply;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{quaternion_to_matrix, Aabb, Ellipsoid, GeometryError, Vec3};
use crate::spatial::KdTree;

pub use chi2::{chi2_cdf3, chi2_quantile3};
pub use ply::{load_ply, parse_ply, write_ply, write_ply_to};

pub const DEFAULT_GAMMA: f64 = 0.2;
pub const DEFAULT_OPACITY_MIN: f64 = 0.1;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("PLY parse error at byte {offset}: {msg}")]
    Parse { offset: usize, msg: String },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("scene is empty after filtering {0} records")]
    EmptyScene(usize),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid ellipsoid {index}: {source}")]
    Geometry {
        index: usize,
        #[source]
        source: GeometryError,
    },
}

/// One Gaussian as stored in a splat file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianRecord {
    pub mean: [f64; 3],
    /// Natural log of the per-axis standard deviation.
    pub log_scale: [f64; 3],
    /// `(w, x, y, z)`, not necessarily normalized.
    pub quaternion: [f64; 4],
    pub opacity_logit: f64,
    pub color_dc: Option<[f64; 3]>,
}

impl GaussianRecord {
    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneOptions {
    pub gamma: f64,
    pub opacity_min: f64,
    /// Treat stored scales and opacities as already activated.
    pub linear_scales: bool,
}

impl Default for SceneOptions {
    fn default() -> Self {
        Self {
            gamma: DEFAULT_GAMMA,
            opacity_min: DEFAULT_OPACITY_MIN,
            linear_scales: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RejectedRecord {
    pub index: usize,
    pub reason: String,
}

/// Immutable set of obstacle ellipsoids with a spatial index over the means.
#[derive(Debug, Clone)]
pub struct Scene {
    ellipsoids: Vec<Ellipsoid>,
    bounds: Aabb,
    gamma: f64,
    source_count: usize,
    rejected: Vec<RejectedRecord>,
    index: KdTree,
    max_semi_axis: f64,
}

impl Scene {
    /// Builds a scene from ellipsoids that are already scaled to their
    /// confidence level.
    pub fn from_ellipsoids(ellipsoids: Vec<Ellipsoid>, gamma: f64) -> Self {
        let n = ellipsoids.len();
        Self::assemble(ellipsoids, gamma, n, Vec::new(), None)
    }

    /// Like [`Scene::from_ellipsoids`] but with bounds that are at least
    /// `bounds`; useful for empty or sparse scenes.
    pub fn with_bounds(ellipsoids: Vec<Ellipsoid>, gamma: f64, bounds: Aabb) -> Self {
        let n = ellipsoids.len();
        Self::assemble(ellipsoids, gamma, n, Vec::new(), Some(bounds))
    }

    fn assemble(
        ellipsoids: Vec<Ellipsoid>,
        gamma: f64,
        source_count: usize,
        rejected: Vec<RejectedRecord>,
        extra: Option<Aabb>,
    ) -> Self {
        let mut bounds = ellipsoids.iter().fold(Aabb::empty(), |acc, e| acc.union(&e.aabb()));
        if let Some(extra) = extra {
            bounds = bounds.union(&extra);
        }
        let means: Vec<Vec3> = ellipsoids.iter().map(|e| e.mu).collect();
        let max_semi_axis = ellipsoids.iter().map(|e| e.max_semi_axis()).fold(0.0, f64::max);
        Self {
            index: KdTree::build(&means),
            ellipsoids,
            bounds,
            gamma,
            source_count,
            rejected,
            max_semi_axis,
        }
    }

    /// Grows the bounds to cover `extra` as well.
    pub fn expanded_to(mut self, extra: &Aabb) -> Self {
        self.bounds = self.bounds.union(extra);
        self
    }

    pub fn ellipsoids(&self) -> &[Ellipsoid] {
        &self.ellipsoids
    }

    pub fn len(&self) -> usize {
        self.ellipsoids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ellipsoids.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn source_count(&self) -> usize {
        self.source_count
    }

    pub fn rejected(&self) -> &[RejectedRecord] {
        &self.rejected
    }

    pub fn max_semi_axis(&self) -> f64 {
        self.max_semi_axis
    }

    /// Indices of ellipsoids whose center lies within `radius` of `center`.
    pub fn centers_within(&self, center: &Vec3, radius: f64) -> Vec<usize> {
        self.index.within_radius(center, radius)
    }

    /// Reads the JSON fixture format: either a bare array of
    /// `{mu, rot_quat, semi_axes}` or `{ellipsoids: [...], bounds: {min, max}}`.
    pub fn from_json_str(text: &str) -> Result<Self, SceneError> {
        #[derive(Deserialize)]
        struct Item {
            mu: [f64; 3],
            rot_quat: [f64; 4],
            semi_axes: [f64; 3],
        }
        #[derive(Deserialize)]
        struct Bounds {
            min: [f64; 3],
            max: [f64; 3],
        }
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Doc {
            List(Vec<Item>),
            Full { ellipsoids: Vec<Item>, bounds: Option<Bounds>, gamma: Option<f64> },
        }
        let (items, bounds, gamma) = match serde_json::from_str::<Doc>(text)? {
            Doc::List(items) => (items, None, None),
            Doc::Full { ellipsoids, bounds, gamma } => (ellipsoids, bounds, gamma),
        };
        let ellipsoids = items
            .into_iter()
            .enumerate()
            .map(|(index, it)| {
                Ellipsoid::from_quaternion(Vec3::from(it.mu), it.rot_quat, Vec3::from(it.semi_axes))
                    .map_err(|source| SceneError::Geometry { index, source })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let gamma = gamma.unwrap_or(DEFAULT_GAMMA);
        Ok(match bounds {
            Some(b) => Scene::with_bounds(ellipsoids, gamma, Aabb::new(Vec3::from(b.min), Vec3::from(b.max))),
            None => Scene::from_ellipsoids(ellipsoids, gamma),
        })
    }

    pub fn to_json_string(&self) -> String {
        let items: Vec<serde_json::Value> = self
            .ellipsoids
            .iter()
            .map(|e| {
                serde_json::json!({
                    "mu": [e.mu.x, e.mu.y, e.mu.z],
                    "rot_quat": crate::geometry::matrix_to_quaternion(&e.rot),
                    "semi_axes": [e.semi_axes.x, e.semi_axes.y, e.semi_axes.z],
                })
            })
            .collect();
        let b = self.bounds;
        serde_json::to_string_pretty(&serde_json::json!({
            "ellipsoids": items,
            "bounds": { "min": [b.min.x, b.min.y, b.min.z], "max": [b.max.x, b.max.y, b.max.z] },
            "gamma": self.gamma,
        }))
        .expect("scene serializes")
    }

    /// Loads a `.ply` splat file or a `.json` ellipsoid fixture.
    pub fn load(path: impl AsRef<Path>, opts: &SceneOptions) -> Result<Self, SceneError> {
        let path = path.as_ref();
        if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
            Self::from_json_str(&std::fs::read_to_string(path)?)
        } else {
            to_scene_with(&load_ply(path)?, opts)
        }
    }
}

/// Converts Gaussians to confidence ellipsoids at level `gamma`, dropping
/// records whose opacity is below `opacity_min`.
pub fn to_scene(records: &[GaussianRecord], gamma: f64, opacity_min: f64) -> Result<Scene, SceneError> {
    to_scene_with(
        records,
        &SceneOptions {
            gamma,
            opacity_min,
            linear_scales: false,
        },
    )
}

pub fn to_scene_with(records: &[GaussianRecord], opts: &SceneOptions) -> Result<Scene, SceneError> {
    if !(opts.gamma > 0.0 && opts.gamma < 1.0) {
        return Err(SceneError::Domain(format!("gamma must lie in (0, 1), got {}", opts.gamma)));
    }
    if !(0.0..=1.0).contains(&opts.opacity_min) {
        return Err(SceneError::Domain(format!(
            "opacity_min must lie in [0, 1], got {}",
            opts.opacity_min
        )));
    }
    let scale = chi2_quantile3(opts.gamma)?.sqrt();

    let converted: Vec<Result<Option<Ellipsoid>, RejectedRecord>> = records
        .par_iter()
        .enumerate()
        .map(|(index, r)| {
            let alpha = if opts.linear_scales { r.opacity_logit } else { r.opacity() };
            if alpha < opts.opacity_min {
                return Ok(None);
            }
            let reject = |reason: String| RejectedRecord { index, reason };
            if !r.log_scale.iter().all(|s| s.is_finite()) {
                return Err(reject("non-finite scale".into()));
            }
            let axes = Vec3::from_fn(|i, _| {
                let s = if opts.linear_scales { r.log_scale[i] } else { r.log_scale[i].exp() };
                scale * s
            });
            let rot = quaternion_to_matrix(r.quaternion).map_err(|e| reject(e.to_string()))?;
            Ellipsoid::new(Vec3::from(r.mean), rot, axes)
                .map(Some)
                .map_err(|e| reject(e.to_string()))
        })
        .collect();

    let mut ellipsoids = Vec::new();
    let mut rejected = Vec::new();
    for c in converted {
        match c {
            Ok(Some(e)) => ellipsoids.push(e),
            Ok(None) => {}
            Err(r) => {
                log::warn!("rejected Gaussian {}: {}", r.index, r.reason);
                rejected.push(r);
            }
        }
    }
    if ellipsoids.is_empty() {
        return Err(SceneError::EmptyScene(records.len()));
    }
    Ok(Scene::assemble(ellipsoids, opts.gamma, records.len(), rejected, None))
}
