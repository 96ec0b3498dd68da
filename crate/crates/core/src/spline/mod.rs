//! Piecewise Bezier trajectories inside a corridor, found by minimizing the
//! squared control-polygon length subject to per-polytope safety,
//! endpoint and metric-time continuity constraints.

mod bernstein;
mod qp;

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corridor::Corridor;
use crate::geometry::Vec3;

pub use bernstein::bernstein;
pub use qp::{solve_qp, solve_qp_with, QpSettings, QpSolution, QuadraticProgram, SparseRow};

pub const DEFAULT_DEGREE: usize = 6;
pub const DEFAULT_CONTINUITY: usize = 2;
pub const MIN_DURATION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("QP setup error: {0}")]
    Setup(String),
    #[error("{0} is not inside its polytope")]
    EndpointInfeasible(&'static str),
    #[error("QP is infeasible (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})")]
    Infeasible { primal_residual: f64, dual_residual: f64 },
    #[error("QP did not converge in {iterations} iterations (primal residual {primal_residual:.3e}, dual residual {dual_residual:.3e})")]
    NotConverged {
        iterations: usize,
        primal_residual: f64,
        dual_residual: f64,
    },
    #[error("malformed trajectory: {0}")]
    Format(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplineParams {
    pub degree: usize,
    pub continuity: usize,
    pub tol: f64,
    pub max_iter: usize,
    pub min_duration: f64,
    /// Return the corridor polyline instead of an error when the QP fails.
    pub allow_fallback: bool,
}

impl Default for SplineParams {
    fn default() -> Self {
        Self {
            degree: DEFAULT_DEGREE,
            continuity: DEFAULT_CONTINUITY,
            tol: 1e-8,
            max_iter: 20_000,
            min_duration: MIN_DURATION,
            allow_fallback: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BezierPiece {
    pub control_points: Vec<Vec3>,
    pub duration: f64,
}

impl BezierPiece {
    pub fn degree(&self) -> usize {
        self.control_points.len() - 1
    }

    /// `order`-th derivative with respect to metric time at normalized `u`.
    pub fn derivative(&self, u: f64, order: usize) -> Vec3 {
        let w = bernstein::bernstein_unchecked(self.degree(), u.clamp(0.0, 1.0), order);
        let v: Vec3 = self.control_points.iter().zip(&w).map(|(c, wi)| c * *wi).sum();
        v / self.duration.powi(order as i32)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct State {
    pub t: f64,
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub jerk: Vec3,
    /// The requested time was outside the trajectory and was clamped.
    pub clamped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub pieces: Vec<BezierPiece>,
    pub t0: f64,
    #[serde(default)]
    pub fallback: bool,
}

impl Trajectory {
    pub fn total_duration(&self) -> f64 {
        self.pieces.iter().map(|p| p.duration).sum()
    }

    pub fn end_time(&self) -> f64 {
        self.t0 + self.total_duration()
    }

    /// Piece index and normalized time for metric time `t` (already clamped).
    fn locate(&self, t: f64) -> (usize, f64) {
        let mut start = self.t0;
        for (i, p) in self.pieces.iter().enumerate() {
            if t < start + p.duration || i + 1 == self.pieces.len() {
                return (i, ((t - start) / p.duration).clamp(0.0, 1.0));
            }
            start += p.duration;
        }
        (0, 0.0)
    }

    pub fn sample_piece(&self, piece: usize, u: f64) -> State {
        let p = &self.pieces[piece];
        let start: f64 = self.t0 + self.pieces[..piece].iter().map(|q| q.duration).sum::<f64>();
        State {
            t: start + u * p.duration,
            position: p.derivative(u, 0),
            velocity: p.derivative(u, 1),
            acceleration: p.derivative(u, 2),
            jerk: p.derivative(u, 3),
            clamped: false,
        }
    }

    /// State at metric time `t`, clamped to `[t0, t0 + total duration]`.
    pub fn sample(&self, t: f64) -> State {
        let end = self.end_time();
        let clamped = t < self.t0 || t > end;
        let tc = t.clamp(self.t0, end);
        let (piece, u) = self.locate(tc);
        let mut s = self.sample_piece(piece, u);
        s.t = tc;
        s.clamped = clamped;
        s
    }

    pub fn start(&self) -> Vec3 {
        self.pieces[0].control_points[0]
    }

    pub fn end(&self) -> Vec3 {
        *self.pieces.last().expect("nonempty").control_points.last().expect("nonempty")
    }

    pub fn to_json(&self) -> serde_json::Value {
        let pieces: Vec<serde_json::Value> = self
            .pieces
            .iter()
            .map(|p| {
                let cps: Vec<[f64; 3]> = p.control_points.iter().map(|c| [c.x, c.y, c.z]).collect();
                serde_json::json!({ "control_points": cps, "duration": p.duration })
            })
            .collect();
        serde_json::json!({ "pieces": pieces, "t0": self.t0, "fallback": self.fallback })
    }

    pub fn from_json(value: &serde_json::Value) -> Result<Self, SplineError> {
        #[derive(Deserialize)]
        struct Piece {
            control_points: Vec<[f64; 3]>,
            duration: f64,
        }
        #[derive(Deserialize)]
        struct Doc {
            pieces: Vec<Piece>,
            t0: f64,
            #[serde(default)]
            fallback: bool,
        }
        let doc: Doc = serde_json::from_value(value.clone()).map_err(|e| SplineError::Format(e.to_string()))?;
        if doc.pieces.is_empty() {
            return Err(SplineError::Format("trajectory has no pieces".into()));
        }
        let pieces = doc
            .pieces
            .into_iter()
            .map(|p| {
                if p.control_points.len() < 2 || !(p.duration > 0.0) {
                    return Err(SplineError::Format("pieces need two control points and a positive duration".into()));
                }
                Ok(BezierPiece {
                    control_points: p.control_points.into_iter().map(Vec3::from).collect(),
                    duration: p.duration,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Trajectory {
            pieces,
            t0: doc.t0,
            fallback: doc.fallback,
        })
    }

    /// Writes samples every `dt` seconds (plus the final instant) as CSV.
    pub fn write_csv<W: Write>(&self, mut w: W, dt: f64) -> std::io::Result<()> {
        writeln!(w, "T,px,py,pz,vx,vy,vz,ax,ay,az,jx,jy,jz")?;
        let total = self.total_duration();
        let steps = if dt > 0.0 { (total / dt).floor() as usize } else { 0 };
        let mut times: Vec<f64> = (0..=steps).map(|i| self.t0 + i as f64 * dt).collect();
        if times.last().is_none_or(|&t| t < self.end_time()) {
            times.push(self.end_time());
        }
        for t in times {
            let s = self.sample(t);
            write!(w, "{t}")?;
            for v in [s.position, s.velocity, s.acceleration, s.jerk] {
                write!(w, ",{},{},{}", v.x, v.y, v.z)?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

#[inline]
fn var(piece: usize, cp: usize, axis: usize, m: usize) -> usize {
    (piece * (m + 1) + cp) * 3 + axis
}

/// Builds the QP over all control points. `durations` defaults to one
/// second per piece.
pub fn assemble_qp(
    corridor: &Corridor,
    x0: &Vec3,
    xf: &Vec3,
    degree: usize,
    continuity: usize,
    durations: Option<&[f64]>,
) -> Result<QuadraticProgram, SplineError> {
    let p_count = corridor.len();
    let m = degree;
    if p_count == 0 {
        return Err(SplineError::Setup("corridor has no polytopes".into()));
    }
    if m == 0 || continuity > m {
        return Err(SplineError::Setup(format!(
            "need degree >= 1 and continuity <= degree, got degree {m}, continuity {continuity}"
        )));
    }
    let unit = vec![1.0; p_count];
    let durations = durations.unwrap_or(&unit);
    if durations.len() != p_count || durations.iter().any(|d| !(*d > 0.0)) {
        return Err(SplineError::Setup("need one positive duration per polytope".into()));
    }
    if !corridor.polytopes[0].contains(x0, 1e-9) {
        return Err(SplineError::EndpointInfeasible("start"));
    }
    if !corridor.polytopes[p_count - 1].contains(xf, 1e-9) {
        return Err(SplineError::EndpointInfeasible("goal"));
    }

    let n = p_count * (m + 1) * 3;
    let mut h = DMatrix::zeros(n, n);
    for p in 0..p_count {
        for k in 0..m {
            for a in 0..3 {
                let (i, j) = (var(p, k, a, m), var(p, k + 1, a, m));
                h[(i, i)] += 2.0;
                h[(j, j)] += 2.0;
                h[(i, j)] -= 2.0;
                h[(j, i)] -= 2.0;
            }
        }
    }
    let mut qp = QuadraticProgram::new(h, DVector::zeros(n));

    for a in 0..3 {
        qp.add_eq(SparseRow::new([(var(0, 0, a, m), 1.0)]), x0[a]);
        qp.add_eq(SparseRow::new([(var(p_count - 1, m, a, m), 1.0)]), xf[a]);
    }
    for p in 0..p_count.saturating_sub(1) {
        for r in 0..=continuity {
            let end = bernstein::bernstein_unchecked(m, 1.0, r);
            let start = bernstein::bernstein_unchecked(m, 0.0, r);
            let (ta, tb) = (durations[p].powi(r as i32), durations[p + 1].powi(r as i32));
            for a in 0..3 {
                let lhs = end.iter().enumerate().map(|(k, w)| (var(p, k, a, m), w / ta));
                let rhs = start.iter().enumerate().map(|(k, w)| (var(p + 1, k, a, m), -w / tb));
                qp.add_eq(SparseRow::new(lhs.chain(rhs)), 0.0);
            }
        }
    }
    for (p, poly) in corridor.polytopes.iter().enumerate() {
        for k in 0..=m {
            for hs in &poly.halfspaces {
                let row = SparseRow::new((0..3).map(|a| (var(p, k, a, m), hs.a[a])));
                qp.add_ineq(row, hs.b);
            }
        }
    }
    Ok(qp)
}

/// Feasible point that rests at each handoff: the first `continuity + 1`
/// control points of a piece sit on its start, the rest on its end.
fn stop_and_go(corridor: &Corridor, x0: &Vec3, xf: &Vec3, m: usize, continuity: usize) -> Option<DVector<f64>> {
    if m + 1 < 2 * (continuity + 1) {
        return None;
    }
    let p_count = corridor.len();
    let mut knots = vec![*x0];
    knots.extend(&corridor.transition_points);
    knots.push(*xf);
    let mut z = DVector::zeros(p_count * (m + 1) * 3);
    for p in 0..p_count {
        for k in 0..=m {
            let pt = if k <= continuity { knots[p] } else { knots[p + 1] };
            for a in 0..3 {
                z[var(p, k, a, m)] = pt[a];
            }
        }
    }
    Some(z)
}

/// Moves `z` toward the feasible `anchor` just enough to satisfy every
/// inequality.
fn pull_inside(qp: &QuadraticProgram, z: &DVector<f64>, anchor: &DVector<f64>) -> DVector<f64> {
    let d = z - anchor;
    let mut theta: f64 = 1.0;
    for (row, &b) in qp.ineq_rows.iter().zip(&qp.ineq_rhs) {
        let slope = row.dot(&d);
        if slope > 0.0 {
            let room = (b - row.dot(anchor)).max(0.0);
            theta = theta.min(room / slope);
        }
    }
    let mut out = anchor + &d * theta;
    for _ in 0..8 {
        if qp.max_ineq_violation(&out) <= 0.0 {
            break;
        }
        theta *= 1.0 - 1e-9;
        out = anchor + &d * theta;
    }
    out
}

fn unpack(z: &DVector<f64>, durations: &[f64], m: usize) -> Trajectory {
    let pieces = durations
        .iter()
        .enumerate()
        .map(|(p, &duration)| BezierPiece {
            control_points: (0..=m)
                .map(|k| Vec3::new(z[var(p, k, 0, m)], z[var(p, k, 1, m)], z[var(p, k, 2, m)]))
                .collect(),
            duration,
        })
        .collect();
    Trajectory {
        pieces,
        t0: 0.0,
        fallback: false,
    }
}

/// Straight pieces through the corridor handoff points; each lies in its
/// polytope by convexity.
pub fn fallback_trajectory(corridor: &Corridor, x0: &Vec3, xf: &Vec3, durations: &[f64]) -> Trajectory {
    let mut knots = vec![*x0];
    knots.extend(&corridor.transition_points);
    knots.push(*xf);
    Trajectory {
        pieces: durations
            .iter()
            .enumerate()
            .map(|(p, &duration)| BezierPiece {
                control_points: vec![knots[p], knots[p + 1]],
                duration,
            })
            .collect(),
        t0: 0.0,
        fallback: true,
    }
}

/// Piece durations: assigned seed length over `vmax`, floored at
/// `min_duration`.
pub fn piece_durations(corridor: &Corridor, vmax: f64, min_duration: f64) -> Vec<f64> {
    corridor
        .seed_lengths
        .iter()
        .map(|l| (l / vmax).max(min_duration))
        .collect()
}

/// Outcome of [`fit_trajectory`] with solver diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Fit {
    pub trajectory: Trajectory,
    pub solution: Option<QpSolution>,
    pub error: Option<SplineError>,
}

pub fn fit_trajectory(
    corridor: &Corridor,
    x0: &Vec3,
    xf: &Vec3,
    vmax: f64,
    params: &SplineParams,
) -> Result<Trajectory, SplineError> {
    fit_trajectory_detailed(corridor, x0, xf, vmax, params).map(|f| f.trajectory)
}

pub fn fit_trajectory_detailed(
    corridor: &Corridor,
    x0: &Vec3,
    xf: &Vec3,
    vmax: f64,
    params: &SplineParams,
) -> Result<Fit, SplineError> {
    if !(vmax > 0.0) {
        return Err(SplineError::Domain("vmax must be positive".into()));
    }
    let durations = piece_durations(corridor, vmax, params.min_duration);
    let qp = assemble_qp(corridor, x0, xf, params.degree, params.continuity, Some(&durations))?;
    match solve_qp(&qp, params.tol, params.max_iter) {
        Ok(sol) => {
            let mut z = sol.z.clone();
            if qp.max_ineq_violation(&z) > 0.0 {
                if let Some(anchor) = stop_and_go(corridor, x0, xf, params.degree, params.continuity) {
                    z = pull_inside(&qp, &z, &anchor);
                }
            }
            let mut trajectory = unpack(&z, &durations, params.degree);
            // endpoints are pinned exactly
            trajectory.pieces[0].control_points[0] = *x0;
            *trajectory.pieces.last_mut().expect("nonempty").control_points.last_mut().expect("nonempty") = *xf;
            Ok(Fit {
                trajectory,
                solution: Some(sol),
                error: None,
            })
        }
        Err(e) if params.allow_fallback => {
            log::warn!("trajectory QP failed ({e}); using the corridor polyline");
            Ok(Fit {
                trajectory: fallback_trajectory(corridor, x0, xf, &durations),
                solution: None,
                error: Some(e),
            })
        }
        Err(e) => Err(e),
    }
}
