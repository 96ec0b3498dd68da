//! Dense convex QP solver: ADMM operator splitting with per-row step sizes
//! and step adaptation, an infeasibility certificate, and an active-set
//! polish step.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use super::SplineError;

/// Constraint row stored by its nonzeros.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRow {
    pub idx: Vec<usize>,
    pub val: Vec<f64>,
}

impl SparseRow {
    pub fn new(entries: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let mut row = SparseRow::default();
        for (i, v) in entries {
            if v != 0.0 {
                row.idx.push(i);
                row.val.push(v);
            }
        }
        row
    }

    #[inline]
    pub fn dot(&self, x: &DVector<f64>) -> f64 {
        self.idx.iter().zip(&self.val).map(|(&i, &v)| v * x[i]).sum()
    }

    pub fn norm(&self) -> f64 {
        self.val.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    fn scaled(&self, s: f64) -> SparseRow {
        SparseRow {
            idx: self.idx.clone(),
            val: self.val.iter().map(|v| v * s).collect(),
        }
    }
}

/// `minimize 1/2 z^T H z + c^T z` subject to `E z = f` and `G z <= h`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticProgram {
    pub hessian: DMatrix<f64>,
    pub linear: DVector<f64>,
    pub eq_rows: Vec<SparseRow>,
    pub eq_rhs: Vec<f64>,
    pub ineq_rows: Vec<SparseRow>,
    pub ineq_rhs: Vec<f64>,
}

impl QuadraticProgram {
    pub fn new(hessian: DMatrix<f64>, linear: DVector<f64>) -> Self {
        Self {
            hessian,
            linear,
            eq_rows: Vec::new(),
            eq_rhs: Vec::new(),
            ineq_rows: Vec::new(),
            ineq_rhs: Vec::new(),
        }
    }

    pub fn dim(&self) -> usize {
        self.linear.len()
    }

    pub fn add_eq(&mut self, row: SparseRow, rhs: f64) {
        self.eq_rows.push(row);
        self.eq_rhs.push(rhs);
    }

    pub fn add_ineq(&mut self, row: SparseRow, rhs: f64) {
        self.ineq_rows.push(row);
        self.ineq_rhs.push(rhs);
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.hessian * z)) + self.linear.dot(z)
    }

    pub fn max_eq_violation(&self, z: &DVector<f64>) -> f64 {
        self.eq_rows
            .iter()
            .zip(&self.eq_rhs)
            .map(|(r, &b)| (r.dot(z) - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_ineq_violation(&self, z: &DVector<f64>) -> f64 {
        self.ineq_rows
            .iter()
            .zip(&self.ineq_rhs)
            .map(|(r, &b)| r.dot(z) - b)
            .fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<(), SplineError> {
        let n = self.dim();
        if self.hessian.nrows() != n || self.hessian.ncols() != n {
            return Err(SplineError::Setup("hessian size does not match the linear term".into()));
        }
        if (&self.hessian - self.hessian.transpose()).amax() > 1e-9 * self.hessian.amax().max(1.0) {
            return Err(SplineError::Setup("hessian is not symmetric".into()));
        }
        if self.eq_rows.len() != self.eq_rhs.len() || self.ineq_rows.len() != self.ineq_rhs.len() {
            return Err(SplineError::Setup("constraint rows and right-hand sides differ in length".into()));
        }
        let rows = self.eq_rows.iter().chain(&self.ineq_rows);
        if rows.clone().any(|r| r.idx.iter().any(|&i| i >= n)) {
            return Err(SplineError::Setup("constraint references a variable out of range".into()));
        }
        if self.eq_rhs.iter().chain(&self.ineq_rhs).any(|v| !v.is_finite()) {
            return Err(SplineError::Setup("non-finite constraint bound".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub tol: f64,
    pub max_iter: usize,
    pub rho: f64,
    pub sigma: f64,
    pub alpha: f64,
    pub polish: bool,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 20_000,
            rho: 0.1,
            sigma: 1e-6,
            alpha: 1.6,
            polish: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QpSolution {
    #[serde(skip)]
    pub z: DVector<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub primal_residual: f64,
    pub dual_residual: f64,
    pub polished: bool,
}

/// Internal row-scaled copy of the constraints as `l <= A z <= u`.
struct Scaled {
    rows: Vec<SparseRow>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    n_eq: usize,
}

fn scale_constraints(qp: &QuadraticProgram) -> Scaled {
    let mut s = Scaled {
        rows: Vec::new(),
        lower: Vec::new(),
        upper: Vec::new(),
        n_eq: qp.eq_rows.len(),
    };
    for (r, &b) in qp.eq_rows.iter().zip(&qp.eq_rhs) {
        let n = r.norm();
        let k = if n > 0.0 { 1.0 / n } else { 1.0 };
        s.rows.push(r.scaled(k));
        s.lower.push(b * k);
        s.upper.push(b * k);
    }
    for (r, &b) in qp.ineq_rows.iter().zip(&qp.ineq_rhs) {
        let n = r.norm();
        let k = if n > 0.0 { 1.0 / n } else { 1.0 };
        s.rows.push(r.scaled(k));
        s.lower.push(f64::NEG_INFINITY);
        s.upper.push(b * k);
    }
    s
}

fn mul_a(rows: &[SparseRow], x: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|r| r.dot(x)))
}

fn mul_at(rows: &[SparseRow], y: &DVector<f64>, n: usize) -> DVector<f64> {
    let mut out = DVector::zeros(n);
    for (r, &yi) in rows.iter().zip(y.iter()) {
        if yi != 0.0 {
            for (&i, &v) in r.idx.iter().zip(&r.val) {
                out[i] += v * yi;
            }
        }
    }
    out
}

fn inf_norm(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn factor(
    h: &DMatrix<f64>,
    rows: &[SparseRow],
    rho: &[f64],
    sigma: f64,
) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>, SplineError> {
    let mut k = h.clone();
    for i in 0..k.nrows() {
        k[(i, i)] += sigma;
    }
    for (r, &p) in rows.iter().zip(rho) {
        for (a, &ia) in r.idx.iter().enumerate() {
            for (b, &ib) in r.idx.iter().enumerate() {
                k[(ia, ib)] += p * r.val[a] * r.val[b];
            }
        }
    }
    k.cholesky()
        .ok_or_else(|| SplineError::Setup("ADMM system is not positive definite".into()))
}

/// Solves a convex QP to residuals `tol`.
pub fn solve_qp(qp: &QuadraticProgram, tol: f64, max_iter: usize) -> Result<QpSolution, SplineError> {
    solve_qp_with(
        qp,
        &QpSettings {
            tol,
            max_iter,
            ..Default::default()
        },
    )
}

pub fn solve_qp_with(qp: &QuadraticProgram, settings: &QpSettings) -> Result<QpSolution, SplineError> {
    qp.validate()?;
    let n = qp.dim();
    let sc = scale_constraints(qp);
    let m = sc.rows.len();
    let tol = settings.tol;
    let (sigma, alpha) = (settings.sigma, settings.alpha);
    let h = &qp.hessian;
    let c = &qp.linear;

    let row_rho = |base: f64, i: usize| if i < sc.n_eq { base * 1e3 } else { base };
    let mut rho_base = settings.rho;
    let mut rho: Vec<f64> = (0..m).map(|i| row_rho(rho_base, i)).collect();
    let mut chol = factor(h, &sc.rows, &rho, sigma)?;

    let mut x = DVector::zeros(n);
    let mut z = DVector::zeros(m);
    let mut y = DVector::zeros(m);
    let project = |v: &DVector<f64>| {
        DVector::from_iterator(m, v.iter().enumerate().map(|(i, &x)| x.clamp(sc.lower[i], sc.upper[i])))
    };

    let mut r_prim = f64::INFINITY;
    let mut r_dual = f64::INFINITY;
    let mut iter = 0;
    let mut converged = false;
    while iter < max_iter_or_one(settings.max_iter) {
        iter += 1;
        let rho_z_minus_y = DVector::from_iterator(m, (0..m).map(|i| rho[i] * z[i] - y[i]));
        let rhs = &x * sigma - c + mul_at(&sc.rows, &rho_z_minus_y, n);
        let x_tilde = chol.solve(&rhs);
        let z_tilde = mul_a(&sc.rows, &x_tilde);
        let x_new = &x_tilde * alpha + &x * (1.0 - alpha);
        let z_relaxed = &z_tilde * alpha + &z * (1.0 - alpha);
        let z_new = project(&DVector::from_iterator(m, (0..m).map(|i| z_relaxed[i] + y[i] / rho[i])));
        let y_new = DVector::from_iterator(m, (0..m).map(|i| y[i] + rho[i] * (z_relaxed[i] - z_new[i])));
        let dy = &y_new - &y;
        x = x_new;
        z = z_new;
        y = y_new;

        let ax = mul_a(&sc.rows, &x);
        let hx = h * &x;
        let aty = mul_at(&sc.rows, &y, n);
        r_prim = inf_norm(&(&ax - &z));
        r_dual = inf_norm(&(&hx + c + &aty));
        if r_prim <= tol && r_dual <= tol {
            converged = true;
            break;
        }

        if iter % 10 == 0 && primal_infeasible(&sc, &dy, n, tol) {
            return Err(SplineError::Infeasible {
                primal_residual: r_prim,
                dual_residual: r_dual,
            });
        }

        if iter % 25 == 0 {
            let p_scale = inf_norm(&ax).max(inf_norm(&z)).max(1e-12);
            let d_scale = inf_norm(&hx).max(inf_norm(&aty)).max(inf_norm(c)).max(1e-12);
            let ratio = ((r_prim / p_scale) / (r_dual / d_scale).max(1e-300)).sqrt();
            let new_base = (rho_base * ratio).clamp(1e-6, 1e6);
            if new_base > 5.0 * rho_base || new_base < 0.2 * rho_base {
                rho_base = new_base;
                let new_rho: Vec<f64> = (0..m).map(|i| row_rho(rho_base, i)).collect();
                rho = new_rho;
                chol = factor(h, &sc.rows, &rho, sigma)?;
            }
        }
    }

    let mut sol = QpSolution {
        objective: qp.objective(&x),
        z: x,
        iterations: iter,
        primal_residual: r_prim,
        dual_residual: r_dual,
        polished: false,
    };
    if settings.polish {
        if let Some(p) = polish(qp, &sc, &sol.z, &y, tol) {
            let better = p.primal_residual <= tol.max(sol.primal_residual) && p.dual_residual <= tol.max(sol.dual_residual);
            if better {
                converged = true;
                sol = QpSolution { iterations: iter, ..p };
            }
        }
    }
    if !converged {
        return Err(SplineError::NotConverged {
            iterations: iter,
            primal_residual: sol.primal_residual,
            dual_residual: sol.dual_residual,
        });
    }
    Ok(sol)
}

fn max_iter_or_one(n: usize) -> usize {
    n.max(1)
}

/// `A^T dy ~ 0` together with `u^T dy+ + l^T dy- < 0` certifies that no
/// point satisfies the constraints.
fn primal_infeasible(sc: &Scaled, dy: &DVector<f64>, n: usize, tol: f64) -> bool {
    let norm = inf_norm(dy);
    if norm < 1e-10 {
        return false;
    }
    let eps = tol.max(1e-9) * norm;
    if inf_norm(&mul_at(&sc.rows, dy, n)) > eps {
        return false;
    }
    let mut support = 0.0;
    for (i, &d) in dy.iter().enumerate() {
        if d > 0.0 {
            support += sc.upper[i] * d;
        } else if d < 0.0 {
            if sc.lower[i].is_infinite() {
                if -d > eps {
                    return false;
                }
            } else {
                support += sc.lower[i] * d;
            }
        }
    }
    support < -eps
}

/// Re-solves the equality-constrained problem on the active set guessed from
/// the ADMM duals, with regularization and iterative refinement.
fn polish(qp: &QuadraticProgram, sc: &Scaled, x: &DVector<f64>, y: &DVector<f64>, tol: f64) -> Option<QpSolution> {
    let n = qp.dim();
    let m = sc.rows.len();
    let active: Vec<usize> = (0..m)
        .filter(|&i| i < sc.n_eq || sc.upper[i] - sc.rows[i].dot(x) < y[i])
        .collect();
    let na = active.len();
    let dim = n + na;
    let delta = 1e-9;
    let mut kkt = DMatrix::zeros(dim, dim);
    kkt.view_mut((0, 0), (n, n)).copy_from(&qp.hessian);
    for (k, &i) in active.iter().enumerate() {
        for (&j, &v) in sc.rows[i].idx.iter().zip(&sc.rows[i].val) {
            kkt[(n + k, j)] = v;
            kkt[(j, n + k)] = v;
        }
    }
    let mut reg = kkt.clone();
    for i in 0..n {
        reg[(i, i)] += delta;
    }
    for k in 0..na {
        reg[(n + k, n + k)] -= delta;
    }
    let lu = reg.lu();
    let mut rhs = DVector::zeros(dim);
    for i in 0..n {
        rhs[i] = -qp.linear[i];
    }
    for (k, &i) in active.iter().enumerate() {
        rhs[n + k] = sc.upper[i];
    }
    let mut sol = lu.solve(&rhs)?;
    for _ in 0..5 {
        let resid = &rhs - &kkt * &sol;
        let corr = lu.solve(&resid)?;
        sol += corr;
    }
    let xp = sol.rows(0, n).into_owned();
    let mut yp = DVector::zeros(m);
    for (k, &i) in active.iter().enumerate() {
        yp[i] = sol[n + k];
    }
    if active.iter().any(|&i| i >= sc.n_eq && yp[i] < -tol) {
        return None;
    }
    for i in sc.n_eq..m {
        yp[i] = yp[i].max(0.0);
    }
    let ax = mul_a(&sc.rows, &xp);
    let r_prim = (0..m)
        .map(|i| {
            if i < sc.n_eq {
                (ax[i] - sc.upper[i]).abs()
            } else {
                (ax[i] - sc.upper[i]).max(0.0)
            }
        })
        .fold(0.0, f64::max);
    let r_dual = inf_norm(&(&qp.hessian * &xp + &qp.linear + mul_at(&sc.rows, &yp, n)));
    if !(r_prim.is_finite() && r_dual.is_finite()) {
        return None;
    }
    Some(QpSolution {
        objective: qp.objective(&xp),
        z: xp,
        iterations: 0,
        primal_residual: r_prim,
        dual_residual: r_dual,
        polished: true,
    })
}
