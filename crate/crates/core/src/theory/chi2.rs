//! Chi-squared quantiles.

use statrs::function::gamma::gamma_lr;

use crate::error::{Error, Result};

const TOL: f64 = 1e-10;

/// CDF of the chi-squared distribution with `d` degrees of freedom.
pub fn chi2_cdf(x: f64, d: u32) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        gamma_lr(d as f64 / 2.0, x / 2.0)
    }
}

/// Inverse CDF `Φ(p)` by bisection on the regularised lower incomplete
/// gamma function, stopping once `|P(d/2, x/2) − p| < 1e-10`.
pub fn chi2_inv_cdf(p: f64, d: u32) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::Domain(format!("probability {p} outside [0, 1)")));
    }
    if d == 0 {
        return Err(Error::Domain(
            "degrees of freedom must be at least 1".into(),
        ));
    }
    if p == 0.0 {
        return Ok(0.0);
    }
    let mut hi = d as f64 + 1.0;
    while chi2_cdf(hi, d) < p {
        hi *= 2.0;
    }
    let mut lo = 0.0;
    loop {
        let mid = 0.5 * (lo + hi);
        let c = chi2_cdf(mid, d);
        if (c - p).abs() < TOL || hi - lo <= f64::EPSILON * mid {
            return Ok(mid);
        }
        if c < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(chi2_inv_cdf(0.0, 5).unwrap(), 0.0);
        let x = chi2_inv_cdf(0.95, 2).unwrap();
        assert!((x - (-2.0 * 0.05f64.ln())).abs() < 1e-8, "{x}");
        let x = chi2_inv_cdf(0.95, 1).unwrap();
        assert!((x - 3.841458820694124).abs() < 1e-8, "{x}");
        assert!(matches!(chi2_inv_cdf(1.0, 3), Err(Error::Domain(_))));
    }
}
