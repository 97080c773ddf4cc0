use std::f64::consts::{PI, SQRT_2};

use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{Error, Result};

/// Standard normal density.
pub fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Standard normal distribution function Φ.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Φ^{-1}(p) for p in (0, 1).
pub fn normal_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain {
            what: "probability",
            value: p,
        });
    }
    let z = -SQRT_2 * erfc_inv(2.0 * p);
    // One Newton step tightens the round trip near the centre.
    let resid = normal_cdf(z) - p;
    Ok(z - resid / normal_pdf(z))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::roots::{find_root, RootBracket};

    #[test]
    fn cdf_symmetry() {
        assert_eq!(normal_cdf(0.0), 0.5);
        assert!((normal_cdf(-1.7) + normal_cdf(1.7) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quantile_matches_bisection_oracle() {
        // plain bisection, independent of erfc_inv and of Brent
        let (mut lo, mut hi) = (-10.0f64, 10.0f64);
        while hi - lo > 1e-13 {
            let mid = 0.5 * (lo + hi);
            if normal_cdf(mid) < 0.05 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((oracle - (-1.6448536)).abs() < 1e-7);
        assert!((normal_quantile(0.05).unwrap() - oracle).abs() < 1e-12);
        let r = find_root(|x| normal_cdf(x) - 0.05, RootBracket::new(-10.0, 10.0, 1e-14).unwrap())
            .unwrap();
        assert!((r - oracle).abs() < 1e-11);
    }

    #[test]
    fn quantile_round_trip() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            let z = normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() <= 1e-12, "p={p}");
        }
        for &p in &[1e-12, 1e-8, 1e-4, 1.0 - 1e-6] {
            let z = normal_quantile(p).unwrap();
            assert!((normal_cdf(z) - p).abs() <= 1e-12, "p={p}");
        }
    }

    #[test]
    fn quantile_domain() {
        assert!(normal_quantile(0.0).is_err());
        assert!(normal_quantile(1.0).is_err());
        assert!(normal_quantile(1.5).is_err());
        assert!(normal_quantile(f64::NAN).is_err());
    }
}
