//! Acceptance suite. Runs every criterion in sequence (so the timed ones do
//! not compete for cores) and prints one PASS/FAIL line per criterion.

use std::process::ExitCode;
use std::time::Instant;

use nalgebra::{DMatrix, DVector, Vector6};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use gsplan_core::benchmark::{run_bench, write_csv, BenchOptions};
use gsplan_core::collide::{min_volume_ellipsoid, test_ellipsoid_pair, DEFAULT_ITERS};
use gsplan_core::corridor::{support_hyperplane, Corridor, DEFAULT_EPS};
use gsplan_core::geometry::{exp_so3, Ellipsoid, Halfspace, Mat3, Polytope, Segment, SphereBody, Vec3};
use gsplan_core::locgeo::synth::{perturb, pnp_scenario, random_pose};
use gsplan_core::locgeo::{
    pnp_jacobian, pnp_ransac, pnp_refine, pnp_refine_detailed, pnp_residuals, retract, umeyama, Correspondence3D3D,
    LmSettings,
};
use gsplan_core::oracle::{exact_pair_test, polytope_clear_along, random_direction};
use gsplan_core::planner::{Plan, Planner, PlannerConfig};
use gsplan_core::rng::stream;
use gsplan_core::spline::{assemble_qp, piece_durations, solve_qp, QuadraticProgram, SparseRow, MIN_DURATION};
use gsplan_core::synth::{circle_pair, cluttered, maze};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn rand_vec(r: &mut ChaCha8Rng, lo: f64, hi: f64) -> Vec3 {
    Vec3::from_fn(|_, _| r.random_range(lo..hi))
}

fn rand_rot(r: &mut ChaCha8Rng) -> Mat3 {
    exp_so3(&rand_vec(r, -3.2, 3.2))
}

fn rand_ellipsoid(r: &mut ChaCha8Rng, spread: f64) -> Ellipsoid {
    Ellipsoid::new(rand_vec(r, -spread, spread), rand_rot(r), rand_vec(r, 0.1, 1.5)).unwrap()
}

// 1. Pair test verdicts against the closest-point oracle.
fn collision_exactness() -> Outcome {
    let t = Instant::now();
    let mut r = stream(1, "accept-pairs", 0);
    let (mut mismatches, mut banded, mut false_neg, mut colliding) = (0, 0, 0, 0);
    for _ in 0..10_000 {
        let a = rand_ellipsoid(&mut r, 2.0);
        let b = rand_ellipsoid(&mut r, 2.0);
        let fine = test_ellipsoid_pair(&a, &b, 30).map_err(|e| e.to_string())?;
        let coarse = test_ellipsoid_pair(&a, &b, 10).map_err(|e| e.to_string())?;
        let collide = exact_pair_test(&a, &b);
        colliding += usize::from(collide);
        if (fine.k_star - 1.0).abs() <= 1e-8 {
            banded += 1;
        } else if fine.disjoint == collide {
            mismatches += 1;
        }
        if coarse.disjoint && collide {
            false_neg += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    check(mismatches == 0, || format!("{mismatches} verdict mismatches"))?;
    check(false_neg == 0, || format!("{false_neg} false negatives at 10 iterations"))?;
    check(secs < 10.0, || format!("took {secs:.2}s"))?;
    Ok(format!("10000 pairs ({colliding} colliding, {banded} in band), 0 mismatches, 0 false negatives, {secs:.2}s"))
}

/// `K(s)` evaluated through a Cholesky whitening of `a`, independent of the
/// library's shared basis.
struct WhitenedK {
    lambda: Vec3,
    c2: Vec3,
}

impl WhitenedK {
    fn new(a: &Ellipsoid, b: &Ellipsoid) -> Self {
        let l = a.covariance().cholesky().unwrap().l();
        let li = l.try_inverse().unwrap();
        let m = li * b.covariance() * li.transpose();
        let eig = (0.5 * (m + m.transpose())).symmetric_eigen();
        let c = eig.eigenvectors.transpose() * li * (a.mu - b.mu);
        Self {
            lambda: eig.eigenvalues,
            c2: c.component_mul(&c),
        }
    }

    fn k(&self, s: f64) -> f64 {
        (0..3)
            .map(|i| self.c2[i] * s * (1.0 - s) / (s + self.lambda[i] * (1.0 - s)))
            .sum()
    }
}

// 2. Bisection convergence rate against a dense grid.
fn bisection_rate() -> Outcome {
    let n = 1_000_000;
    let h = 1.0 / n as f64;
    let mut r = stream(2, "accept-rate", 0);
    let mut worst: f64 = f64::NEG_INFINITY;
    let mut done = 0;
    while done < 1000 {
        let a = rand_ellipsoid(&mut r, 2.0);
        let b = rand_ellipsoid(&mut r, 2.0);
        if (a.mu - b.mu).norm() < 1e-3 {
            continue;
        }
        let f = WhitenedK::new(&a, &b);
        let (mut best, mut s_grid) = (f64::NEG_INFINITY, 0.0);
        for i in 1..n {
            let s = i as f64 * h;
            let k = f.k(s);
            if k > best {
                best = k;
                s_grid = s;
            }
        }
        for k in 1..=20 {
            let res = test_ellipsoid_pair(&a, &b, k).map_err(|e| e.to_string())?;
            // the grid locates the maximizer to within one spacing
            let excess = (res.s_star - s_grid).abs() - 0.5f64.powi(k as i32 + 1) - h;
            worst = worst.max(excess);
            check(excess <= 0.0, || {
                format!("instance {done}, k={k}: |{} - {s_grid}| exceeds 2^-{}", res.s_star, k + 1)
            })?;
        }
        done += 1;
    }
    Ok(format!("1000 instances, k=1..20, worst slack {:.3e}", -worst))
}

// 3. Unit spheres at distance d.
fn sphere_cases() -> Outcome {
    let unit = |x: f64| Ellipsoid::sphere(Vec3::new(x, 0.0, 0.0), 1.0);
    for d in [1.0, 2.0, 2.5, 3.0, 10.0] {
        let res = test_ellipsoid_pair(&unit(0.0), &unit(d), 30).map_err(|e| e.to_string())?;
        let want = d * d / 4.0;
        check((res.k_star - want).abs() <= 1e-9, || format!("d={d}: k*={} vs {want}", res.k_star))?;
        check(res.disjoint == (d > 2.0), || format!("d={d}: verdict {}", res.disjoint))?;
    }
    let below = test_ellipsoid_pair(&unit(0.0), &unit(2.0 - 1e-9), 30).map_err(|e| e.to_string())?;
    let above = test_ellipsoid_pair(&unit(0.0), &unit(2.0 + 1e-9), 30).map_err(|e| e.to_string())?;
    check(!below.disjoint && above.disjoint, || "verdict does not flip at d = 2".into())?;
    Ok("k* = d^2/4 for d in {1, 2, 2.5, 3, 10}; flips at d = 2".into())
}

fn single_facet(h: Halfspace, seg: Segment) -> Polytope {
    Polytope {
        halfspaces: vec![h],
        seed_segment: seg,
    }
}

// 4. Supporting hyperplanes separate the segment from the inflated obstacle.
fn hyperplane_separation() -> Outcome {
    let samples = 100_000;
    let mut r = stream(4, "accept-planes", 0);
    let base: Vec<Vec3> = (0..samples).map(|_| random_direction(&mut r)).collect();
    let mut triples = 0;
    let mut violations = 0;
    let mut endpoint_failures = 0;
    while triples < 10_000 {
        let e = rand_ellipsoid(&mut r, 0.5);
        let body = SphereBody::new(r.random_range(0.05..1.0)).unwrap();
        let seg = Segment::new(rand_vec(&mut r, -5.0, 5.0), rand_vec(&mut r, -5.0, 5.0));
        let Ok(h) = support_hyperplane(&seg, &body, &e, DEFAULT_ITERS, DEFAULT_EPS) else {
            continue;
        };
        triples += 1;
        if h.violation(&seg.x0) > 0.0 || h.violation(&seg.x1) > 0.0 {
            endpoint_failures += 1;
        }
        // a fresh rotation of the shared directions for each triple
        let rot = rand_rot(&mut r);
        let dirs: Vec<Vec3> = base.iter().map(|u| rot * u).collect();
        violations += polytope_clear_along(&single_facet(h, seg), &e, &body, &dirs).violations;
    }
    check(violations == 0, || format!("{violations} sampled violations"))?;
    check(endpoint_failures == 0, || format!("{endpoint_failures} segments cut by their plane"))?;

    let obstacle = Ellipsoid::sphere(Vec3::zeros(), 1.0);
    let body = SphereBody::new(1.0).unwrap();
    let seg = Segment::point(Vec3::new(4.0, 0.0, 0.0));
    let h = support_hyperplane(&seg, &body, &obstacle, DEFAULT_ITERS, 0.0).map_err(|e| e.to_string())?;
    let n = h.a / h.a.norm();
    let offset = -h.b / h.a.norm();
    check((n + Vec3::x()).norm() <= 1e-12 && (offset - 2.0).abs() <= 1e-12, || {
        format!("tangent plane {n:?} . x <= {}", h.b / h.a.norm())
    })?;
    Ok(format!("10000 triples x {samples} samples, 0 violations; tangent case gives x >= 2"))
}

fn clutter_planner_config() -> PlannerConfig {
    PlannerConfig {
        kappa: 0.1,
        vmax: 0.5,
        amax: 1.0,
        dims: [80, 80, 16],
        ..Default::default()
    }
}

// 5. Every bench trajectory on the cluttered fixture clears the scene.
fn end_to_end_safety() -> Outcome {
    let t = Instant::now();
    let fixture = cluttered(5, 10_000).map_err(|e| e.to_string())?;
    let planner = Planner::new(&fixture.scene, clutter_planner_config()).map_err(|e| e.to_string())?;
    let rows = run_bench(
        &planner,
        &BenchOptions {
            trials: 100,
            seed: 5,
            samples_per_piece: 200,
            timings: false,
        },
    );
    let secs = t.elapsed().as_secs_f64();
    let returned = rows.iter().filter(|r| r.success).count();
    let safe = rows.iter().filter(|r| r.success && r.min_k_star > 1.0).count();
    let fallbacks = rows.iter().filter(|r| r.status == "fallback").count();
    let worst = rows.iter().map(|r| r.min_k_star).fold(f64::INFINITY, f64::min);
    check(returned == 100, || format!("{returned}/100 returned"))?;
    check(safe == 100, || format!("{safe}/100 clear (worst min K* {worst})"))?;
    check(secs < 300.0, || format!("took {secs:.1}s"))?;
    Ok(format!(
        "100/100 returned and clear, {fallbacks} fallbacks, worst min K* {worst:.4}, {secs:.1}s"
    ))
}

fn dense_rows(rows: &[SparseRow], rhs: &[f64], n: usize) -> Vec<(DVector<f64>, f64)> {
    rows.iter()
        .zip(rhs)
        .map(|(row, b)| {
            let mut v = DVector::zeros(n);
            for (i, x) in row.idx.iter().zip(&row.val) {
                v[*i] += x;
            }
            (v, *b)
        })
        .collect()
}

/// Optimal objective from the dual active-set solver after eliminating the
/// equality constraints, which makes the reduced Hessian positive definite.
fn reference_objective(qp: &QuadraticProgram) -> f64 {
    let n = qp.dim();
    let eq = dense_rows(&qp.eq_rows, &qp.eq_rhs, n);
    let e = DMatrix::from_fn(eq.len(), n, |i, j| eq[i].0[j]);
    let f = DVector::from_iterator(eq.len(), eq.iter().map(|r| r.1));
    let zp = e.clone().svd(true, true).solve(&f, 1e-10).unwrap();
    let eig = (e.transpose() * &e).symmetric_eigen();
    let scale = eig.eigenvalues.amax();
    let null: Vec<usize> = (0..n).filter(|&i| eig.eigenvalues[i] < 1e-9 * scale).collect();
    let nb = DMatrix::from_fn(n, null.len(), |i, j| eig.eigenvectors[(i, null[j])]);
    let hr = nb.transpose() * &qp.hessian * &nb;
    let cr = nb.transpose() * (&qp.hessian * &zp + &qp.linear);
    let mut q: Vec<f64> = hr.transpose().iter().copied().collect();
    let mut amat = Vec::new();
    let mut bvec = Vec::new();
    for (g, b) in dense_rows(&qp.ineq_rows, &qp.ineq_rhs, n) {
        amat.extend((nb.transpose() * &g).iter().copied());
        bvec.push(b - g.dot(&zp));
    }
    let sol = quadprog::solve_qp(&mut q, cr.as_slice(), &amat, &bvec, 0, false).expect("reference solve");
    qp.objective(&(zp + nb * DVector::from_vec(sol.sol)))
}

fn box_facets(center: Vec3, half: Vec3, rot: &Mat3) -> Vec<Halfspace> {
    let mut out = Vec::new();
    for a in 0..3 {
        let n = rot.column(a).into_owned();
        out.push(Halfspace::new(n, n.dot(&center) + half[a]));
        out.push(Halfspace::new(-n, -n.dot(&center) + half[a]));
    }
    out
}

/// Up to three rotated, overlapping boxes along a random zig-zag, each
/// centered on its leg.
fn small_corridor(r: &mut ChaCha8Rng) -> (Corridor, Vec3, Vec3) {
    let pieces = r.random_range(1..=3);
    let rot = rand_rot(r);
    let mut points = vec![Vec3::zeros()];
    for _ in 0..pieces {
        let last = *points.last().unwrap();
        points.push(last + rot * rand_vec(r, -2.0, 2.0));
    }
    let polytopes: Vec<Polytope> = points
        .windows(2)
        .map(|w| {
            let center = 0.5 * (w[0] + w[1]);
            let half = (rot.transpose() * (w[1] - w[0])).abs() * 0.5 + rand_vec(r, 0.1, 0.6);
            Polytope {
                halfspaces: box_facets(center, half, &rot),
                seed_segment: Segment::new(w[0], w[1]),
            }
        })
        .collect();
    let corridor = Corridor {
        seed_lengths: points.windows(2).map(|w| (w[1] - w[0]).norm()).collect(),
        transition_points: points[1..pieces].to_vec(),
        transition_indices: (1..pieces).collect(),
        polytopes,
    };
    (corridor, points[0], points[pieces])
}

fn check_plan(plan: &Plan, samples: usize) -> Result<(f64, f64, f64), String> {
    let traj = &plan.trajectory;
    check(!traj.fallback, || "fallback trajectory".into())?;
    let mut worst_cp: f64 = f64::NEG_INFINITY;
    let mut worst_sample: f64 = f64::NEG_INFINITY;
    for (piece, poly) in traj.pieces.iter().zip(&plan.corridor.polytopes) {
        for c in &piece.control_points {
            worst_cp = worst_cp.max(poly.max_violation(c));
        }
        for k in 0..samples {
            let u = k as f64 / (samples - 1) as f64;
            let x = piece.derivative(u, 0);
            worst_sample = worst_sample.max(poly.max_violation(&x));
        }
    }
    let mut worst_joint: f64 = 0.0;
    for w in traj.pieces.windows(2) {
        for order in 0..=2 {
            worst_joint = worst_joint.max((w[0].derivative(1.0, order) - w[1].derivative(0.0, order)).norm());
        }
    }
    let start = plan.seed.waypoints[0];
    let goal = *plan.seed.waypoints.last().unwrap();
    let endpoint = (traj.start() - start).norm().max((traj.end() - goal).norm());
    check(worst_cp <= 0.0, || format!("control point outside its polytope by {worst_cp:.3e}"))?;
    check(worst_sample <= 1e-9, || format!("sample outside its polytope by {worst_sample:.3e}"))?;
    check(endpoint <= 1e-6, || format!("endpoint error {endpoint:.3e}"))?;
    check(worst_joint <= 1e-6, || format!("junction mismatch {worst_joint:.3e}"))?;
    Ok((worst_sample, endpoint, worst_joint))
}

// 6. Planned splines stay inside their polytopes and are C2; small programs
// match the reference solver.
fn spline_correctness() -> Outcome {
    let fixture = cluttered(6, 10_000).map_err(|e| e.to_string())?;
    let planner = Planner::new(&fixture.scene, clutter_planner_config()).map_err(|e| e.to_string())?;
    let mut worst = (f64::NEG_INFINITY, 0.0f64, 0.0f64);
    let mut pieces = 0;
    for trial in 0..10 {
        let theta = std::f64::consts::TAU * trial as f64 / 10.0 + 0.1;
        let (s, g) = circle_pair(&fixture.domain, theta);
        let plan = planner.plan(&s, &g).map_err(|e| format!("trial {trial}: {e}"))?;
        let (a, b, c) = check_plan(&plan, 10_000).map_err(|e| format!("trial {trial}: {e}"))?;
        worst = (worst.0.max(a), worst.1.max(b), worst.2.max(c));
        pieces += plan.trajectory.pieces.len();
    }

    let mut r = stream(6, "accept-qp", 0);
    let mut gap: f64 = 0.0;
    let mut instances = 0;
    for _ in 0..20 {
        let (corridor, x0, xf) = small_corridor(&mut r);
        let durations = piece_durations(&corridor, 1.0, MIN_DURATION);
        for (m, d) in [(3, 1), (4, 1), (4, 2)] {
            let qp = assemble_qp(&corridor, &x0, &xf, m, d, Some(&durations)).map_err(|e| e.to_string())?;
            let ours = solve_qp(&qp, 1e-10, 50_000).map_err(|e| e.to_string())?;
            let reference = reference_objective(&qp);
            let diff = (ours.objective - reference).abs() / reference.abs().max(1.0);
            gap = gap.max(diff);
            instances += 1;
            check(diff <= 1e-6, || format!("M={m} D={d}: objective {} vs {reference}", ours.objective))?;
        }
    }
    Ok(format!(
        "10 plans / {pieces} pieces: max sample violation {:.1e}, endpoint {:.1e}, junction {:.1e}; {instances} QPs within {gap:.1e} of reference",
        worst.0, worst.1, worst.2
    ))
}

// 7. Pose estimation.
fn localization() -> Outcome {
    let mut r = stream(7, "accept-loc", 0);
    let (mut rot_err, mut trans_err): (f64, f64) = (0.0, 0.0);
    for seed in 0..100 {
        let sc = pnp_scenario(1000 + seed, 50, 0.0, 0.0);
        let init = perturb(&sc.truth, 20.0, 0.1, &mut r);
        let pose = pnp_refine(&sc.corrs, &sc.intrinsics, &init, 100, 1e-12).map_err(|e| e.to_string())?;
        rot_err = rot_err.max(pose.rotation_error_deg(&sc.truth));
        trans_err = trans_err.max(pose.translation_error(&sc.truth));
    }
    check(rot_err < 1e-6 && trans_err < 1e-8, || {
        format!("refinement errors {rot_err:.2e} deg / {trans_err:.2e}")
    })?;

    for seed in 0..100 {
        let sc = pnp_scenario(2000 + seed, 100, 0.0, 0.3);
        let init = perturb(&sc.truth, 20.0, 0.1, &mut r);
        let (_, mask) = pnp_ransac(&sc.corrs, &sc.intrinsics, &init, 2.0, 500, seed).map_err(|e| e.to_string())?;
        let missed = mask.iter().zip(&sc.inlier).filter(|(m, t)| **t && !**m).count();
        check(missed == 0, || format!("trial {seed}: {missed} true inliers rejected"))?;
    }

    let mut um_err: f64 = 0.0;
    for _ in 0..100 {
        let truth = random_pose(&mut r, 5.0);
        let corrs: Vec<Correspondence3D3D> = (0..20)
            .map(|_| {
                let q = rand_vec(&mut r, -3.0, 3.0);
                Correspondence3D3D { p: truth.apply(&q), q }
            })
            .collect();
        let est = umeyama(&corrs).map_err(|e| e.to_string())?;
        um_err = um_err.max((est.rot - truth.rot).amax()).max((est.trans - truth.trans).amax());
    }
    check(um_err <= 1e-12, || format!("Umeyama error {um_err:.2e}"))?;

    let h = 1e-6;
    let mut jac_err: f64 = 0.0;
    for seed in 0..50 {
        let sc = pnp_scenario(3000 + seed, 10, 0.0, 0.0);
        let pose = perturb(&sc.truth, 10.0, 0.05, &mut r);
        let j = pnp_jacobian(&sc.corrs, &sc.intrinsics, &pose);
        for k in 0..6 {
            let mut step = Vector6::zeros();
            step[k] = h;
            let hi = pnp_residuals(&sc.corrs, &sc.intrinsics, &retract(&pose, &step));
            let lo = pnp_residuals(&sc.corrs, &sc.intrinsics, &retract(&pose, &(-step)));
            for (row, jr) in j.iter().enumerate() {
                let fd = (hi[row] - lo[row]) / (2.0 * h);
                jac_err = jac_err.max((fd - jr[k]).abs() / jr[k].abs().max(1.0));
            }
        }
    }
    check(jac_err <= 1e-5, || format!("Jacobian error {jac_err:.2e}"))?;
    Ok(format!(
        "refine {rot_err:.1e} deg / {trans_err:.1e}; RANSAC kept all inliers in 100 trials; Umeyama {um_err:.1e}; Jacobian {jac_err:.1e}"
    ))
}

/// Dual lower bound on `-ln det A` over all ellipsoids `(x-c)^T A (x-c) <= 1`
/// enclosing `points`: for any weights `u` on the simplex,
/// `-ln det A >= ln det(3 cov_u)`. The weights come from a Frank-Wolfe
/// iteration with away steps on the lifted points.
fn dual_lower_bound(points: &[Vec3], iters: usize) -> f64 {
    let m = points.len();
    let mut u = vec![1.0 / m as f64; m];
    let lifted: Vec<nalgebra::Vector4<f64>> = points.iter().map(|p| nalgebra::Vector4::new(p.x, p.y, p.z, 1.0)).collect();
    for _ in 0..iters {
        let mut x = nalgebra::Matrix4::zeros();
        for (q, w) in lifted.iter().zip(&u) {
            x += q * q.transpose() * *w;
        }
        let xi = x.try_inverse().unwrap();
        let w: Vec<f64> = lifted.iter().map(|q| (xi * q).dot(q)).collect();
        let (j, wmax) = (0..m).map(|i| (i, w[i])).fold((0, f64::NEG_INFINITY), |a, b| if b.1 > a.1 { b } else { a });
        let (k, wmin) = (0..m)
            .filter(|&i| u[i] > 0.0)
            .map(|i| (i, w[i]))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        if wmax - 4.0 < 1e-14 && 4.0 - wmin < 1e-14 {
            break;
        }
        if wmax - 4.0 >= 4.0 - wmin {
            let step = (wmax - 4.0) / (4.0 * (wmax - 1.0));
            for v in u.iter_mut() {
                *v *= 1.0 - step;
            }
            u[j] += step;
        } else {
            let step = ((4.0 - wmin) / (4.0 * (wmin - 1.0))).min(u[k] / (1.0 - u[k]));
            for v in u.iter_mut() {
                *v *= 1.0 + step;
            }
            u[k] -= step;
        }
    }
    let center: Vec3 = points.iter().zip(&u).map(|(p, w)| p * *w).sum();
    let mut cov = Mat3::zeros();
    for (p, w) in points.iter().zip(&u) {
        cov += (p - center) * (p - center).transpose() * *w;
    }
    (3.0 * cov).determinant().ln()
}

// 8. Minimum-volume enclosing ellipsoid.
fn mvee() -> Outcome {
    let cube: Vec<Vec3> = (0..8)
        .map(|i| Vec3::new((i & 1) as f64 - 0.5, ((i >> 1) & 1) as f64 - 0.5, ((i >> 2) & 1) as f64 - 0.5))
        .collect();
    let e = min_volume_ellipsoid(&cube, 1e-7).map_err(|e| e.to_string())?;
    let radius = 0.75f64.sqrt();
    for a in e.semi_axes.iter() {
        check((a - radius).abs() <= 1e-4, || format!("cube semi-axis {a}"))?;
    }
    let tol = 1e-7;
    let mut r = stream(8, "accept-mvee", 0);
    let mut worst_gap: f64 = 0.0;
    for trial in 0..20 {
        let stretch = rand_vec(&mut r, 0.3, 2.0);
        let rot = rand_rot(&mut r);
        let shift = rand_vec(&mut r, -3.0, 3.0);
        let pts: Vec<Vec3> = (0..60)
            .map(|_| rot * rand_vec(&mut r, -1.0, 1.0).component_mul(&stretch) + shift)
            .collect();
        let e = min_volume_ellipsoid(&pts, tol).map_err(|e| e.to_string())?;
        for p in &pts {
            let d = e.mahalanobis_sq(p);
            check(d <= 1.0 + 1e-9, || format!("trial {trial}: point outside at {d}"))?;
        }
        // -ln det A of the returned ellipsoid
        let ours = e.semi_axes.iter().map(|a| a.ln()).sum::<f64>() * 2.0;
        // volume ratio to the optimum is at most exp(gap / 2)
        let gap = (0.5 * (ours - dual_lower_bound(&pts, 1_000_000))).exp_m1();
        worst_gap = worst_gap.max(gap);
        check(gap <= tol, || format!("trial {trial}: volume gap {gap:.3e}"))?;
    }
    Ok(format!("cube radius sqrt(3)/2; 20 clouds contained, volume within 1 + {worst_gap:.2e} of optimal"))
}

// 9. Soft performance targets: pass at target, warn within 3x.
fn performance() -> Outcome {
    let mz = maze(9, 100_000).map_err(|e| e.to_string())?;
    let t = Instant::now();
    let planner = Planner::new(&mz.fixture.scene, PlannerConfig::default()).map_err(|e| e.to_string())?;
    let grid_secs = t.elapsed().as_secs_f64();
    let pairs = [((0, 0), (5, 5)), ((5, 0), (0, 5)), ((0, 2), (5, 3)), ((2, 0), (3, 5)), ((1, 1), (4, 4))];
    let t = Instant::now();
    for (a, b) in pairs {
        planner
            .plan(&mz.room_center(a.0, a.1), &mz.room_center(b.0, b.1))
            .map_err(|e| format!("maze plan {a:?} -> {b:?}: {e}"))?;
    }
    let rate = pairs.len() as f64 / t.elapsed().as_secs_f64();

    let sc = pnp_scenario(9, 500, 0.5, 0.0);
    let mut r = stream(9, "accept-perf", 0);
    let mut times = Vec::new();
    for _ in 0..21 {
        let init = perturb(&sc.truth, 20.0, 0.1, &mut r);
        let t = Instant::now();
        pnp_refine_detailed(&sc.corrs, &sc.intrinsics, &init, &LmSettings::default()).map_err(|e| e.to_string())?;
        times.push(t.elapsed().as_secs_f64() * 1e3);
    }
    times.sort_by(f64::total_cmp);
    let median = times[times.len() / 2];

    let detail = format!("grid {grid_secs:.2}s, {rate:.2} plans/s (target 2), pnp median {median:.2} ms (target 10)");
    check(rate * 3.0 >= 2.0 && median <= 30.0, || format!("beyond 3x slack: {detail}"))?;
    if rate >= 2.0 && median <= 10.0 {
        Ok(detail)
    } else {
        Ok(format!("{detail}; within 3x slack"))
    }
}

// 10. Bench output does not depend on scheduling.
fn determinism() -> Outcome {
    let fixture = cluttered(10, 3000).map_err(|e| e.to_string())?;
    let planner = Planner::new(&fixture.scene, clutter_planner_config()).map_err(|e| e.to_string())?;
    let opts = BenchOptions {
        trials: 12,
        seed: 10,
        samples_per_piece: 50,
        timings: false,
    };
    let run = |threads: usize| -> Result<Vec<u8>, String> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().map_err(|e| e.to_string())?;
        let rows = pool.install(|| run_bench(&planner, &opts));
        let mut out = Vec::new();
        write_csv(&mut out, &rows).map_err(|e| e.to_string())?;
        Ok(out)
    };
    let a = run(1)?;
    let b = run(4)?;
    let c = run(4)?;
    check(a == b && b == c, || "CSV differs between runs".into())?;
    Ok(format!("3 runs (1 and 4 threads) byte-identical, {} bytes", a.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("collision-test exactness", collision_exactness),
        ("bisection rate", bisection_rate),
        ("analytic sphere cases", sphere_cases),
        ("hyperplane separation", hyperplane_separation),
        ("end-to-end safety", end_to_end_safety),
        ("spline correctness", spline_correctness),
        ("localization", localization),
        ("minimum-volume ellipsoid", mvee),
        ("performance", performance),
        ("determinism", determinism),
    ];
    let only: Option<usize> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|v| v.parse().ok());
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        if only.is_some_and(|n| n != i + 1) {
            continue;
        }
        let t = Instant::now();
        let outcome = std::panic::catch_unwind(f).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
