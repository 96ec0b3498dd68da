use super::SplineError;

pub(crate) fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    let mut acc = 1.0;
    for i in 0..k {
        acc = acc * (n - i) as f64 / (i + 1) as f64;
    }
    acc
}

fn basis(m: usize, t: f64) -> Vec<f64> {
    (0..=m)
        .map(|i| binomial(m, i) * t.powi(i as i32) * (1.0 - t).powi((m - i) as i32))
        .collect()
}

/// Weights `w` such that the `order`-th derivative (in normalized time) of a
/// degree-`m` Bezier curve with control points `c_i` is `sum_i w_i c_i`.
pub fn bernstein(m: usize, t: f64, order: usize) -> Result<Vec<f64>, SplineError> {
    if m == 0 {
        return Err(SplineError::Domain("degree must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(SplineError::Domain(format!("t must lie in [0, 1], got {t}")));
    }
    if order > m {
        return Err(SplineError::Domain(format!("derivative order {order} exceeds degree {m}")));
    }
    Ok(bernstein_unchecked(m, t, order))
}

/// Like [`bernstein`] but returns zeros for `order > m`.
pub(crate) fn bernstein_unchecked(m: usize, t: f64, order: usize) -> Vec<f64> {
    let mut out = vec![0.0; m + 1];
    if order > m {
        return out;
    }
    let lower = basis(m - order, t);
    let falling: f64 = (0..order).map(|k| (m - k) as f64).product();
    // d^r/dt^r B_{i,m} = m!/(m-r)! sum_j (-1)^(r-j) C(r,j) B_{i-j,m-r}
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for j in 0..=order {
            if i >= j && i - j <= m - order {
                let sign = if (order - j) % 2 == 0 { 1.0 } else { -1.0 };
                acc += sign * binomial(order, j) * lower[i - j];
            }
        }
        *o = falling * acc;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_and_midpoint_weights() {
        assert_eq!(bernstein(3, 0.0, 0).unwrap(), vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(bernstein(3, 1.0, 0).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
        assert_eq!(bernstein(3, 0.5, 0).unwrap(), vec![0.125, 0.375, 0.375, 0.125]);
    }

    #[test]
    fn partition_of_unity() {
        for m in 1..=8 {
            for k in 0..=20 {
                let w = bernstein(m, k as f64 / 20.0, 0).unwrap();
                assert!(w.iter().all(|v| *v >= 0.0));
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-14);
                for r in 1..=m {
                    let d = bernstein(m, k as f64 / 20.0, r).unwrap();
                    assert!(d.iter().sum::<f64>().abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let h = 1e-5;
        for m in [3usize, 6] {
            for r in 1..=m.min(3) {
                for k in 1..20 {
                    let t = k as f64 / 20.0;
                    let lo = bernstein(m, t - h, r - 1).unwrap();
                    let hi = bernstein(m, t + h, r - 1).unwrap();
                    let d = bernstein(m, t, r).unwrap();
                    for i in 0..=m {
                        let fd = (hi[i] - lo[i]) / (2.0 * h);
                        assert!((fd - d[i]).abs() < 1e-6 * d[i].abs().max(1.0) * 10f64.powi(r as i32 - 1), "m={m} r={r} t={t} i={i}");
                    }
                }
            }
        }
    }

    #[test]
    fn endpoint_derivatives_are_scaled_differences() {
        // first derivative at 0 is m (c1 - c0); second is m(m-1)(c2 - 2c1 + c0)
        assert_eq!(bernstein(6, 0.0, 1).unwrap(), vec![-6.0, 6.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(bernstein(6, 0.0, 2).unwrap(), vec![30.0, -60.0, 30.0, 0.0, 0.0, 0.0, 0.0]);
        assert_eq!(bernstein(6, 1.0, 1).unwrap(), vec![0.0, 0.0, 0.0, 0.0, 0.0, -6.0, 6.0]);
    }

    #[test]
    fn domain_checks() {
        assert!(bernstein(3, -0.1, 0).is_err());
        assert!(bernstein(3, 1.1, 0).is_err());
        assert!(bernstein(3, 0.5, 4).is_err());
        assert!(bernstein(0, 0.5, 0).is_err());
        assert_eq!(bernstein_unchecked(2, 0.3, 3), vec![0.0; 3]);
    }
}
