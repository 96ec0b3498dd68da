use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use super::{CellIndex, Endpoint, OccupancyGrid, VoxError};
use crate::geometry::{Segment, Vec3};

/// Piecewise-linear path through free cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPath {
    /// Exact start, interior cell centers, exact goal.
    pub waypoints: Vec<Vec3>,
    pub cells: Vec<CellIndex>,
    /// Sum of center-to-center edge lengths along `cells`.
    pub cost: f64,
}

impl SeedPath {
    pub fn segments(&self) -> impl Iterator<Item = Segment> + '_ {
        self.waypoints.windows(2).map(|w| Segment::new(w[0], w[1]))
    }

    pub fn num_segments(&self) -> usize {
        self.waypoints.len().saturating_sub(1)
    }

    pub fn length(&self) -> f64 {
        self.segments().map(|s| s.length()).sum()
    }
}

#[derive(PartialEq)]
struct Entry {
    f: f64,
    idx: usize,
}

impl Eq for Entry {}

impl Ord for Entry {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on (f, idx)
        other.f.total_cmp(&self.f).then_with(|| other.idx.cmp(&self.idx))
    }
}

impl PartialOrd for Entry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

fn neighbor_offsets(cell: &Vec3) -> Vec<([i64; 3], f64)> {
    let mut out = Vec::with_capacity(26);
    for i in -1i64..=1 {
        for j in -1i64..=1 {
            for k in -1i64..=1 {
                if (i, j, k) != (0, 0, 0) {
                    let d = Vec3::new(i as f64 * cell.x, j as f64 * cell.y, k as f64 * cell.z);
                    out.push(([i, j, k], d.norm()));
                }
            }
        }
    }
    out
}

/// Distance from `p` to the segment `a`-`b`.
fn off_line(p: &Vec3, a: &Vec3, b: &Vec3) -> f64 {
    let d = b - a;
    let len2 = d.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&d) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + d * t)).norm()
}

/// Optimal 26-connected path between the cells containing `start` and
/// `goal`, with Euclidean edge costs. Among parents of equal cost (up to
/// round-off) the one closest to the start-goal line wins, then the lower
/// cell index, so straight-ish routes do not bunch their diagonal moves.
/// Uses A* with the straight-line heuristic, which is admissible and
/// consistent for these edge costs.
pub fn shortest_path(grid: &OccupancyGrid, start: &Vec3, goal: &Vec3) -> Result<SeedPath, VoxError> {
    let s = grid.cell_of(start).ok_or(VoxError::OutOfBounds(Endpoint::Start))?;
    let g = grid.cell_of(goal).ok_or(VoxError::OutOfBounds(Endpoint::Goal))?;
    if grid.is_occupied(s) {
        return Err(VoxError::BlockedEndpoint(Endpoint::Start));
    }
    if grid.is_occupied(g) {
        return Err(VoxError::BlockedEndpoint(Endpoint::Goal));
    }
    let dims = grid.dims();
    let cell = grid.cell();
    let goal_center = grid.cell_center(g);
    let start_center = grid.cell_center(s);
    let h = |c: CellIndex| (grid.cell_center(c) - goal_center).norm();
    let offsets = neighbor_offsets(&cell);

    let n = grid.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut parent = vec![usize::MAX; n];
    let mut closed = vec![false; n];
    let (si, gi) = (grid.linear(s), grid.linear(g));
    dist[si] = 0.0;
    let mut heap = BinaryHeap::new();
    heap.push(Entry { f: h(s), idx: si });

    while let Some(Entry { idx, .. }) = heap.pop() {
        if closed[idx] {
            continue;
        }
        closed[idx] = true;
        if idx == gi {
            break;
        }
        let c = grid.unlinear(idx);
        for (o, w) in &offsets {
            let nb = [c[0] as i64 + o[0], c[1] as i64 + o[1], c[2] as i64 + o[2]];
            if (0..3).any(|a| nb[a] < 0 || nb[a] as usize >= dims[a]) {
                continue;
            }
            let nc = [nb[0] as usize, nb[1] as usize, nb[2] as usize];
            let ni = grid.linear(nc);
            if closed[ni] || grid.bits()[ni] {
                continue;
            }
            let cand = dist[idx] + w;
            let tol = 1e-9 * cand;
            let better = if cand < dist[ni] - tol {
                true
            } else if cand <= dist[ni] + tol {
                let mine = off_line(&grid.cell_center(c), &start_center, &goal_center);
                let theirs = off_line(&grid.cell_center(grid.unlinear(parent[ni])), &start_center, &goal_center);
                (mine, idx) < (theirs, parent[ni])
            } else {
                false
            };
            if better {
                dist[ni] = cand;
                parent[ni] = idx;
                heap.push(Entry { f: cand + h(nc), idx: ni });
            }
        }
    }
    if !dist[gi].is_finite() {
        return Err(VoxError::Disconnected);
    }

    let mut chain = vec![gi];
    while *chain.last().expect("nonempty") != si {
        chain.push(parent[*chain.last().expect("nonempty")]);
    }
    chain.reverse();
    let cells: Vec<CellIndex> = chain.iter().map(|&i| grid.unlinear(i)).collect();
    let mut waypoints: Vec<Vec3> = cells.iter().map(|&c| grid.cell_center(c)).collect();
    waypoints[0] = *start;
    if waypoints.len() == 1 {
        waypoints.push(*goal);
    } else {
        *waypoints.last_mut().expect("nonempty") = *goal;
    }
    Ok(SeedPath {
        waypoints,
        cells,
        cost: dist[gi],
    })
}

/// True when every point of the segment `a`-`b`, sampled at a quarter of
/// the smallest cell size, lies in a free cell.
pub fn line_of_sight(grid: &OccupancyGrid, a: &Vec3, b: &Vec3) -> bool {
    let cell = grid.cell();
    let step = 0.25 * cell.x.min(cell.y).min(cell.z);
    let n = ((b - a).norm() / step).ceil().max(1.0) as usize;
    (0..=n).all(|k| {
        let p = a + (b - a) * (k as f64 / n as f64);
        grid.cell_of(&p).is_some_and(|c| !grid.is_occupied(c))
    })
}

/// Replaces runs of waypoints by single segments wherever the grid has
/// line of sight, always jumping to the farthest visible waypoint. The
/// result keeps the exact endpoints, the cells of the retained waypoints
/// and the grid cost of the original path.
pub fn simplify_path(grid: &OccupancyGrid, path: &SeedPath) -> SeedPath {
    let w = &path.waypoints;
    if w.len() <= 2 {
        return path.clone();
    }
    let mut keep = vec![0];
    let mut i = 0;
    while i + 1 < w.len() {
        let j = (i + 2..w.len())
            .rev()
            .find(|&j| line_of_sight(grid, &w[i], &w[j]))
            .unwrap_or(i + 1);
        keep.push(j);
        i = j;
    }
    SeedPath {
        waypoints: keep.iter().map(|&k| w[k]).collect(),
        cells: keep.iter().map(|&k| path.cells[k.min(path.cells.len() - 1)]).collect(),
        cost: path.cost,
    }
}
