//! Conservative occupancy grid over a scene, robot inflation and seed-path
//! search.

mod io;
mod search;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::{Aabb, SphereBody, Vec3};
use crate::scene::Scene;

pub use io::{read_grid, write_grid, GRID_MAGIC};
pub use search::{line_of_sight, shortest_path, simplify_path, SeedPath};

#[derive(Debug, Error)]
pub enum VoxError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{0} lies outside the grid")]
    OutOfBounds(Endpoint),
    #[error("{0} cell is occupied")]
    BlockedEndpoint(Endpoint),
    #[error("no collision-free path between start and goal")]
    Disconnected,
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed grid file: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Endpoint {
    Start,
    Goal,
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Endpoint::Start => "start",
            Endpoint::Goal => "goal",
        })
    }
}

pub type CellIndex = [usize; 3];

/// Dense boolean grid. Cell `(i, j, k)` covers the half-open box
/// `[origin + (i,j,k) * cell, origin + (i+1,j+1,k+1) * cell)`.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    origin: Vec3,
    cell: Vec3,
    dims: [usize; 3],
    bits: Vec<bool>,
}

impl OccupancyGrid {
    /// All-free grid.
    pub fn new(origin: Vec3, cell: Vec3, dims: [usize; 3]) -> Result<Self, VoxError> {
        if !cell.iter().all(|c| *c > 0.0 && c.is_finite()) {
            return Err(VoxError::Config(format!("cell sizes must be positive, got {cell:?}")));
        }
        if !origin.iter().all(|o| o.is_finite()) {
            return Err(VoxError::Config("grid origin is not finite".into()));
        }
        if dims.contains(&0) {
            return Err(VoxError::Config(format!("grid dimensions must be positive, got {dims:?}")));
        }
        let n = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| VoxError::Config("grid is too large".into()))?;
        Ok(Self {
            origin,
            cell,
            dims,
            bits: vec![false; n],
        })
    }

    /// Grid of `dims` cells spanning `bounds`.
    pub fn spanning(bounds: &Aabb, dims: [usize; 3]) -> Result<Self, VoxError> {
        if dims.iter().any(|&d| d < 2) {
            return Err(VoxError::Config(format!("need at least 2 cells per axis, got {dims:?}")));
        }
        let ext = bounds.extent();
        let cell = Vec3::from_fn(|i, _| ext[i] / dims[i] as f64);
        Self::new(bounds.min, cell, dims)
    }

    pub fn origin(&self) -> Vec3 {
        self.origin
    }

    pub fn cell(&self) -> Vec3 {
        self.cell
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bounds(&self) -> Aabb {
        let max = Vec3::from_fn(|i, _| self.origin[i] + self.dims[i] as f64 * self.cell[i]);
        Aabb::new(self.origin, max)
    }

    /// Linear index; lexicographic in `(i, j, k)`.
    #[inline]
    pub fn linear(&self, c: CellIndex) -> usize {
        (c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]
    }

    #[inline]
    pub fn unlinear(&self, idx: usize) -> CellIndex {
        let k = idx % self.dims[2];
        let rest = idx / self.dims[2];
        [rest / self.dims[1], rest % self.dims[1], k]
    }

    #[inline]
    pub fn is_occupied(&self, c: CellIndex) -> bool {
        self.bits[self.linear(c)]
    }

    pub fn set(&mut self, c: CellIndex, occupied: bool) {
        let i = self.linear(c);
        self.bits[i] = occupied;
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    pub(crate) fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    /// Unclamped per-axis cell coordinate of `p` (floor, so boundary points
    /// bin upward).
    #[inline]
    fn raw_coord(&self, p: &Vec3, axis: usize) -> f64 {
        ((p[axis] - self.origin[axis]) / self.cell[axis]).floor()
    }

    /// Cell containing `p`, or `None` outside the grid.
    pub fn cell_of(&self, p: &Vec3) -> Option<CellIndex> {
        let mut c = [0usize; 3];
        for axis in 0..3 {
            let r = self.raw_coord(p, axis);
            if !(r >= 0.0 && r < self.dims[axis] as f64) {
                return None;
            }
            c[axis] = r as usize;
        }
        Some(c)
    }

    pub fn cell_center(&self, c: CellIndex) -> Vec3 {
        Vec3::from_fn(|i, _| self.origin[i] + (c[i] as f64 + 0.5) * self.cell[i])
    }

    pub fn cell_box(&self, c: CellIndex) -> Aabb {
        let min = Vec3::from_fn(|i, _| self.origin[i] + c[i] as f64 * self.cell[i]);
        Aabb::new(min, min + self.cell)
    }

    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.cell.norm()
    }

    /// Inclusive per-axis cell ranges touched by `b`, clamped to the grid;
    /// `None` if the box misses the grid entirely.
    fn box_range(&self, b: &Aabb) -> Option<[(usize, usize); 3]> {
        let mut out = [(0usize, 0usize); 3];
        for axis in 0..3 {
            let lo = self.raw_coord(&b.min, axis);
            let hi = self.raw_coord(&b.max, axis);
            let n = self.dims[axis] as f64;
            if hi < 0.0 || lo >= n || lo.is_nan() || hi.is_nan() {
                return None;
            }
            out[axis] = (lo.max(0.0) as usize, hi.min(n - 1.0) as usize);
        }
        Some(out)
    }

    fn fill_range(&mut self, r: &[(usize, usize); 3]) {
        for i in r[0].0..=r[0].1 {
            for j in r[1].0..=r[1].1 {
                let base = (i * self.dims[1] + j) * self.dims[2];
                self.bits[base + r[2].0..=base + r[2].1].fill(true);
            }
        }
    }
}

/// Corners of the recursive longest-side bisection of `b` down to boxes no
/// larger than `cell`: per axis, `2^m + 1` evenly spaced coordinates with
/// `m` the number of halvings that axis needs.
pub fn bisection_corners(b: &Aabb, cell: &Vec3) -> [Vec<f64>; 3] {
    let ext = b.extent();
    std::array::from_fn(|axis| {
        let mut m = 0u32;
        while ext[axis] / f64::from(1u32 << m.min(30)) > cell[axis] && m < 30 {
            m += 1;
        }
        let n = 1usize << m;
        (0..=n)
            .map(|j| {
                if j == n {
                    b.max[axis]
                } else {
                    b.min[axis] + ext[axis] * j as f64 / n as f64
                }
            })
            .collect()
    })
}

/// Rasterizes the axis-aligned boxes of all scene ellipsoids.
///
/// Each box is bisected until its pieces are no larger than a cell and every
/// piece corner is binned. Because corner spacing never exceeds the cell
/// size, the binned cells are exactly the cells between the bins of the
/// box's minimum and maximum corners, which is what gets filled here.
pub fn build_grid(scene: &Scene, bounds: &Aabb, dims: [usize; 3]) -> Result<OccupancyGrid, VoxError> {
    let mut grid = OccupancyGrid::spanning(bounds, dims)?;
    if !scene.is_empty() && !bounds.contains_box(&scene.bounds()) {
        log::warn!("grid bounds do not contain the scene; clipping obstacles to the grid");
    }
    let ranges: Vec<Option<[(usize, usize); 3]>> = scene
        .ellipsoids()
        .par_iter()
        .map(|e| grid.box_range(&e.aabb()))
        .collect();
    for r in ranges.iter().flatten() {
        grid.fill_range(r);
    }
    Ok(grid)
}

/// Offsets `o` with `|o * cell| <= radius + half cell diagonal`.
pub fn inflation_kernel(cell: &Vec3, radius: f64) -> Vec<[i64; 3]> {
    let reach = radius + 0.5 * cell.norm();
    let span = |axis: usize| (reach / cell[axis]).floor() as i64;
    let (sx, sy, sz) = (span(0), span(1), span(2));
    let mut out = Vec::new();
    for i in -sx..=sx {
        for j in -sy..=sy {
            for k in -sz..=sz {
                let d = Vec3::new(i as f64 * cell.x, j as f64 * cell.y, k as f64 * cell.z);
                if d.norm() <= reach {
                    out.push([i, j, k]);
                }
            }
        }
    }
    out
}

/// Max-pools the occupancy with a spherical kernel of radius `kappa` (plus
/// half a cell diagonal). `kappa == 0` returns the grid unchanged.
pub fn inflate(grid: &OccupancyGrid, body: &SphereBody) -> OccupancyGrid {
    inflate_by(grid, body.kappa)
}

pub fn inflate_by(grid: &OccupancyGrid, radius: f64) -> OccupancyGrid {
    if !(radius > 0.0) {
        return grid.clone();
    }
    let kernel = inflation_kernel(&grid.cell, radius);
    let dims = grid.dims;
    let is_occ = |i: i64, j: i64, k: i64| -> bool {
        i >= 0
            && j >= 0
            && k >= 0
            && (i as usize) < dims[0]
            && (j as usize) < dims[1]
            && (k as usize) < dims[2]
            && grid.bits[grid.linear([i as usize, j as usize, k as usize])]
    };
    // only cells on the boundary of the occupied set can reach new cells
    let boundary: Vec<CellIndex> = (0..grid.len())
        .into_par_iter()
        .filter_map(|idx| {
            if !grid.bits[idx] {
                return None;
            }
            let c = grid.unlinear(idx);
            let (i, j, k) = (c[0] as i64, c[1] as i64, c[2] as i64);
            let interior = [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]
                .iter()
                .all(|(a, b, d)| is_occ(i + a, j + b, k + d));
            (!interior).then_some(c)
        })
        .collect();
    let mut out = grid.clone();
    for c in boundary {
        for o in &kernel {
            let n = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
            if (0..3).all(|a| n[a] >= 0 && (n[a] as usize) < dims[a]) {
                let idx = out.linear([n[0] as usize, n[1] as usize, n[2] as usize]);
                out.bits[idx] = true;
            }
        }
    }
    out
}
