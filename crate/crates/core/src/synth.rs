//! Generated splat scenes used by tests, benchmarks and `gen-scene`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::geometry::{matrix_to_quaternion, Aabb, Mat3, Vec3};
use crate::rng;
use crate::scene::{to_scene, GaussianRecord, Scene, SceneError, DEFAULT_GAMMA, DEFAULT_OPACITY_MIN};

/// Opacity logit of every generated Gaussian (alpha about 0.99).
const OPAQUE: f64 = 5.0;

fn record(mean: Vec3, sigma: Vec3, rot: &Mat3) -> GaussianRecord {
    GaussianRecord {
        mean: [mean.x, mean.y, mean.z],
        log_scale: [sigma.x.ln(), sigma.y.ln(), sigma.z.ln()],
        quaternion: matrix_to_quaternion(rot),
        opacity_logit: OPAQUE,
        color_dc: Some([0.5, 0.5, 0.5]),
    }
}

/// A generated scene: raw records and the converted scene, whose bounds
/// cover the full domain.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub records: Vec<GaussianRecord>,
    pub scene: Scene,
    pub domain: Aabb,
}

impl Fixture {
    fn from_records(records: Vec<GaussianRecord>, domain: Aabb) -> Result<Self, SceneError> {
        let scene = to_scene(&records, DEFAULT_GAMMA, DEFAULT_OPACITY_MIN)?.expanded_to(&domain);
        Ok(Self { records, scene, domain })
    }
}

/// Antipodal start/goal pair at angle `theta` on the circle of radius
/// 90% of the half-width, at mid-height of `domain`.
pub fn circle_pair(domain: &Aabb, theta: f64) -> (Vec3, Vec3) {
    let c = domain.center();
    let e = domain.extent();
    let r = 0.45 * e.x.min(e.y);
    let at = |a: f64| Vec3::new(c.x + r * a.cos(), c.y + r * a.sin(), c.z);
    (at(theta), at(theta + std::f64::consts::PI))
}

pub const CLUTTER_HALF_WIDTH: f64 = 10.0;
pub const CLUTTER_HEIGHT: f64 = 4.0;
/// Pillars stay inside this radius so the bench circle is free.
pub const CLUTTER_RADIUS: f64 = 7.0;
/// Minimum surface-to-surface gap between pillars.
pub const CLUTTER_GAP: f64 = 2.5;

/// Floor-to-ceiling pillars covered by `n` flat Gaussians, scattered in the
/// middle of a 20 x 20 x 4 domain.
pub fn cluttered(seed: u64, n: usize) -> Result<Fixture, SceneError> {
    let mut r = rng::stream(seed, "fixture-clutter", 0);
    let mut pillars: Vec<(Vec3, f64)> = Vec::new();
    for _ in 0..5000 {
        if pillars.len() == 16 {
            break;
        }
        let radius = r.random_range(0.2..0.5);
        let rho = (CLUTTER_RADIUS - radius) * r.random::<f64>().sqrt();
        let phi = r.random_range(0.0..std::f64::consts::TAU);
        let c = Vec3::new(rho * phi.cos(), rho * phi.sin(), 0.0);
        if pillars.iter().all(|(o, ro)| (o - c).norm() >= ro + radius + CLUTTER_GAP) {
            pillars.push((c, radius));
        }
    }
    let records = (0..n)
        .map(|i| {
            let (c, radius) = pillars[i % pillars.len()];
            let phi = r.random_range(0.0..std::f64::consts::TAU);
            let z = r.random_range(0.0..CLUTTER_HEIGHT);
            let normal = Vec3::new(phi.cos(), phi.sin(), 0.0);
            let tangent = Vec3::new(-phi.sin(), phi.cos(), 0.0);
            let rot = Mat3::from_columns(&[tangent, Vec3::z(), normal]);
            let sigma = Vec3::new(r.random_range(0.04..0.12), r.random_range(0.04..0.12), 0.02);
            record(c + normal * radius + Vec3::z() * z, sigma, &rot)
        })
        .collect();
    let h = CLUTTER_HALF_WIDTH;
    Fixture::from_records(records, Aabb::new(Vec3::new(-h, -h, 0.0), Vec3::new(h, h, CLUTTER_HEIGHT)))
}

pub const MAZE_CELLS: usize = 6;
pub const MAZE_CELL_SIZE: f64 = 4.0;
pub const MAZE_HEIGHT: f64 = 3.0;

/// Maze of `MAZE_CELLS`^2 rooms with walls made of `n` flat Gaussians.
#[derive(Debug, Clone)]
pub struct Maze {
    pub fixture: Fixture,
    /// Wall segments `(from, to)` in the xy plane.
    pub walls: Vec<([f64; 2], [f64; 2])>,
}

impl Maze {
    /// Center of room `(i, j)` at mid-height.
    pub fn room_center(&self, i: usize, j: usize) -> Vec3 {
        Vec3::new((i as f64 + 0.5) * MAZE_CELL_SIZE, (j as f64 + 0.5) * MAZE_CELL_SIZE, 0.5 * MAZE_HEIGHT)
    }
}

fn carve(r: &mut ChaCha8Rng) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let m = MAZE_CELLS;
    // open_x[i][j]: passage between (i, j) and (i + 1, j); open_y likewise in y
    let mut open_x = vec![vec![false; m]; m];
    let mut open_y = vec![vec![false; m]; m];
    let mut seen = vec![vec![false; m]; m];
    let mut stack = vec![(0usize, 0usize)];
    seen[0][0] = true;
    while let Some(&(i, j)) = stack.last() {
        let mut options = Vec::new();
        if i > 0 && !seen[i - 1][j] {
            options.push((i - 1, j));
        }
        if i + 1 < m && !seen[i + 1][j] {
            options.push((i + 1, j));
        }
        if j > 0 && !seen[i][j - 1] {
            options.push((i, j - 1));
        }
        if j + 1 < m && !seen[i][j + 1] {
            options.push((i, j + 1));
        }
        if options.is_empty() {
            stack.pop();
            continue;
        }
        let (a, b) = options[r.random_range(0..options.len())];
        if a != i {
            open_x[i.min(a)][j] = true;
        } else {
            open_y[i][j.min(b)] = true;
        }
        seen[a][b] = true;
        stack.push((a, b));
    }
    (open_x, open_y)
}

pub fn maze(seed: u64, n: usize) -> Result<Maze, SceneError> {
    let mut r = rng::stream(seed, "fixture-maze", 0);
    let (open_x, open_y) = carve(&mut r);
    let m = MAZE_CELLS;
    let s = MAZE_CELL_SIZE;
    let mut walls = Vec::new();
    for i in 0..=m {
        for j in 0..m {
            // wall at x = i s between y = j s and (j + 1) s
            if i == 0 || i == m || !open_x[i - 1][j] {
                walls.push(([i as f64 * s, j as f64 * s], [i as f64 * s, (j + 1) as f64 * s]));
            }
            if i == 0 || i == m || !open_y[j][i - 1] {
                walls.push(([j as f64 * s, i as f64 * s], [(j + 1) as f64 * s, i as f64 * s]));
            }
        }
    }
    let per_wall = n / walls.len();
    let extra = n % walls.len();
    let mut records = Vec::with_capacity(n);
    for (w, (a, b)) in walls.iter().enumerate() {
        let along = Vec3::new(b[0] - a[0], b[1] - a[1], 0.0).normalize();
        let normal = Vec3::new(-along.y, along.x, 0.0);
        let count = per_wall + usize::from(w < extra);
        for _ in 0..count {
            let t = r.random_range(0.0..s);
            let z = r.random_range(0.0..MAZE_HEIGHT);
            let spin = r.random_range(0.0..std::f64::consts::TAU);
            let u = along * spin.cos() + Vec3::z() * spin.sin();
            let v = normal.cross(&u);
            let rot = Mat3::from_columns(&[u, v, normal]);
            let sigma = Vec3::new(r.random_range(0.08..0.16), r.random_range(0.08..0.16), 0.03);
            let jitter = normal * r.random_range(-0.03..0.03);
            let mean = Vec3::new(a[0], a[1], z) + along * t + jitter;
            records.push(record(mean, sigma, &rot));
        }
    }
    let side = m as f64 * s;
    let fixture = Fixture::from_records(records, Aabb::new(Vec3::zeros(), Vec3::new(side, side, MAZE_HEIGHT)))?;
    Ok(Maze { fixture, walls })
}
