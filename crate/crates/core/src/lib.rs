//! Collision-free motion planning through Gaussian-splat scenes.

pub mod benchmark;
pub mod collide;
pub mod corridor;
pub mod geometry;
pub mod locgeo;
pub mod oracle;
pub mod planner;
pub mod rng;
pub mod scene;
pub mod spatial;
pub mod spline;
pub mod synth;
pub mod voxgrid;

pub use geometry::{Aabb, Ellipsoid, GeometryError, Halfspace, Mat3, Polytope, Segment, SphereBody, Vec3};
pub use scene::{GaussianRecord, Scene, SceneError, SceneOptions};
