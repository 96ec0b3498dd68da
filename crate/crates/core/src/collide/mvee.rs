use nalgebra::{Matrix4, SymmetricEigen, Vector4};

use super::CollideError;
use crate::geometry::{Ellipsoid, Mat3, Vec3};

const MAX_ITERS: usize = 100_000;

/// Minimum-volume ellipsoid enclosing `points`.
///
/// Uses Khachiyan's first-order method with Todd-Yildirim away steps on the
/// lifted points `(p, 1)`. The current weights give both an enclosing
/// ellipsoid (rescaled so every input point lies inside) and a lower bound
/// on the optimal volume; iteration stops once the two are within a factor
/// `1 + tol`.
pub fn min_volume_ellipsoid(points: &[Vec3], tol: f64) -> Result<Ellipsoid, CollideError> {
    if !(tol > 0.0) {
        return Err(CollideError::Domain(format!("tol must be positive, got {tol}")));
    }
    if points.len() < 4 {
        return Err(CollideError::Rank(format!("need at least 4 points, got {}", points.len())));
    }
    if points.iter().any(|p| !p.iter().all(|v| v.is_finite())) {
        return Err(CollideError::Domain("non-finite point".into()));
    }
    check_rank(points)?;

    let m = points.len();
    let n = 4.0;
    let lifted: Vec<Vector4<f64>> = points.iter().map(|p| Vector4::new(p.x, p.y, p.z, 1.0)).collect();
    let mut u = vec![1.0 / m as f64; m];
    let mut omega = vec![0.0; m];

    for _ in 0..MAX_ITERS {
        let mut x = Matrix4::zeros();
        for (q, &ui) in lifted.iter().zip(&u) {
            x += q * q.transpose() * ui;
        }
        let x_inv = x
            .cholesky()
            .ok_or_else(|| CollideError::Rank("lifted moment matrix is singular".into()))?
            .inverse();
        for (o, q) in omega.iter_mut().zip(&lifted) {
            *o = (x_inv * q).dot(q);
        }
        let (j, &w_max) = omega
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("nonempty");
        let (k, &w_min) = omega
            .iter()
            .enumerate()
            .filter(|(i, _)| u[*i] > 0.0)
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(&b.0)))
            .expect("some weight is positive");
        // the rescaled ellipsoid has volume at most ((w_max - 1) / 3)^(3/2)
        // times the optimum
        if ((w_max - 1.0) / 3.0).powf(1.5) <= 1.0 + tol {
            break;
        }
        let eps_plus = w_max / n - 1.0;
        let eps_minus = 1.0 - w_min / n;
        if eps_plus > eps_minus {
            let tau = (w_max - n) / (n * (w_max - 1.0));
            for ui in u.iter_mut() {
                *ui *= 1.0 - tau;
            }
            u[j] += tau;
        } else {
            let tau = ((n - w_min) / (n * (w_min - 1.0))).min(u[k] / (1.0 - u[k]));
            for ui in u.iter_mut() {
                *ui *= 1.0 + tau;
            }
            u[k] -= tau;
            if u[k] < 1e-300 {
                u[k] = 0.0;
            }
        }
    }

    let center: Vec3 = points.iter().zip(&u).map(|(p, &ui)| p * ui).sum();
    let mut cov = Mat3::zeros();
    for (p, &ui) in points.iter().zip(&u) {
        let d = p - center;
        cov += d * d.transpose() * ui;
    }
    let shape = cov * 3.0;
    let precision = shape
        .try_inverse()
        .ok_or_else(|| CollideError::Rank("enclosing shape is singular".into()))?;
    let worst = points
        .iter()
        .map(|p| {
            let d = p - center;
            d.dot(&(precision * d))
        })
        .fold(0.0, f64::max);
    let scale = worst.max(f64::MIN_POSITIVE);

    let eig = SymmetricEigen::new((shape + shape.transpose()) * 0.5);
    let mut rot = eig.eigenvectors;
    if rot.determinant() < 0.0 {
        let c = -rot.column(2);
        rot.set_column(2, &c);
    }
    let rot = crate::geometry::orthonormalize(&rot);
    let axes = eig.eigenvalues.map(|v| (v.max(0.0) * scale).sqrt());
    Ellipsoid::new(center, rot, axes).map_err(|e| CollideError::Rank(e.to_string()))
}

fn check_rank(points: &[Vec3]) -> Result<(), CollideError> {
    let mean: Vec3 = points.iter().sum::<Vec3>() / points.len() as f64;
    let mut scatter = Mat3::zeros();
    for p in points {
        let d = p - mean;
        scatter += d * d.transpose();
    }
    let eig = scatter.symmetric_eigenvalues();
    let max = eig.max();
    let min = eig.min();
    if !(max > 0.0) || min <= 1e-12 * max {
        return Err(CollideError::Rank(
            "points are not affinely independent (coplanar or collinear)".into(),
        ));
    }
    Ok(())
}
