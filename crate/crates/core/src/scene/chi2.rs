use super::SceneError;

/// CDF of the chi-square distribution with three degrees of freedom:
/// `erf(sqrt(x/2)) - sqrt(2x/pi) exp(-x/2)`.
pub fn chi2_cdf3(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    libm::erf((x * 0.5).sqrt()) - (2.0 * x / std::f64::consts::PI).sqrt() * (-0.5 * x).exp()
}

/// Inverse of [`chi2_cdf3`] by bisection.
pub fn chi2_quantile3(gamma: f64) -> Result<f64, SceneError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(SceneError::Domain(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let mut hi = 1.0;
    while chi2_cdf3(hi) < gamma {
        hi *= 2.0;
        if hi > 1e4 {
            break;
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if chi2_cdf3(mid) < gamma {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}
