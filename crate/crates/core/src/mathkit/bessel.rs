//! Modified Bessel function of the second (third) kind, K_ν(x), for real order.
//!
//! Orders are reduced to μ ∈ [-1/2, 1/2) and K_μ, K_{μ+1} are computed by
//! Temme's series for x < 2 and Steed's continued fraction otherwise; the
//! forward recurrence then climbs to the requested order. Half-integer orders
//! start from the closed form K_{1/2}(x) = sqrt(π/2x) e^{-x}. All internal
//! values carry an e^{x} scaling and a running log-scale so that neither large
//! arguments nor large orders overflow.

use std::f64::consts::PI;

use crate::error::{Error, Result};

const EPS: f64 = 1e-16;
const MAX_ITER: usize = 10_000;
const TEMME_CUTOFF: f64 = 2.0;
const RESCALE: f64 = 1e200;

/// Taylor coefficients of 1/Γ(z) = Σ c_k z^k (Abramowitz & Stegun 6.1.34).
const RECIP_GAMMA: [f64; 26] = [
    1.0,
    0.577_215_664_901_532_9,
    -0.655_878_071_520_253_8,
    -0.042_002_635_034_095_2,
    0.166_538_611_382_291_5,
    -0.042_197_734_555_544_3,
    -0.009_621_971_527_877_0,
    0.007_218_943_246_663_0,
    -0.001_165_167_591_859_1,
    -0.000_215_241_674_114_9,
    0.000_128_050_282_388_2,
    -0.000_020_134_854_780_7,
    -0.000_001_250_493_482_1,
    0.000_001_133_027_232_0,
    -0.000_000_205_633_841_7,
    0.000_000_006_116_095_0,
    0.000_000_005_002_007_5,
    -0.000_000_001_181_274_6,
    0.000_000_000_104_342_7,
    0.000_000_000_007_782_3,
    -0.000_000_000_003_696_8,
    0.000_000_000_000_510_0,
    -0.000_000_000_000_020_6,
    -0.000_000_000_000_005_4,
    0.000_000_000_000_001_4,
    0.000_000_000_000_000_1,
];

/// Returns (gam1, gam2, 1/Γ(1+μ), 1/Γ(1-μ)) for |μ| ≤ 1/2, where
/// gam1 = (1/Γ(1-μ) - 1/Γ(1+μ)) / 2μ and gam2 = (1/Γ(1-μ) + 1/Γ(1+μ)) / 2.
fn temme_gammas(mu: f64) -> (f64, f64, f64, f64) {
    // 1/Γ(1+μ) = Σ_{k≥1} c_k μ^{k-1}
    let mu2 = mu * mu;
    let mut gam1 = 0.0;
    let mut gam2 = 0.0;
    let mut pow = 1.0;
    for pair in RECIP_GAMMA.chunks(2) {
        gam2 += pair[0] * pow;
        if let Some(&even) = pair.get(1) {
            gam1 -= even * pow;
        }
        pow *= mu2;
    }
    let gampl = gam2 - mu * gam1;
    let gammi = gam2 + mu * gam1;
    (gam1, gam2, gampl, gammi)
}

/// e^x K_μ(x) and e^x K_{μ+1}(x) for |μ| ≤ 1/2.
fn base_pair_scaled(mu: f64, x: f64) -> (f64, f64) {
    if (mu.abs() - 0.5).abs() < 1e-15 {
        // K_{±1/2}(x) e^x = sqrt(π/2x); K_{3/2} = K_{1/2}(1 + 1/x)
        let k_half = (PI / (2.0 * x)).sqrt();
        return if mu < 0.0 {
            (k_half, k_half)
        } else {
            (k_half, k_half * (1.0 + 1.0 / x))
        };
    }
    if x < TEMME_CUTOFF {
        let (k_mu, k_mu1) = temme_series(mu, x);
        let scale = x.exp();
        (k_mu * scale, k_mu1 * scale)
    } else {
        steed_cf2_scaled(mu, x)
    }
}

fn temme_series(mu: f64, x: f64) -> (f64, f64) {
    let x2 = 0.5 * x;
    let pimu = PI * mu;
    let fact = if pimu.abs() < EPS {
        1.0
    } else {
        pimu / pimu.sin()
    };
    let d = -x2.ln();
    let e = mu * d;
    let fact2 = if e.abs() < EPS { 1.0 } else { e.sinh() / e };
    let (gam1, gam2, gampl, gammi) = temme_gammas(mu);
    let mut ff = fact * (gam1 * e.cosh() + gam2 * fact2 * d);
    let mut sum = ff;
    let e = e.exp();
    let mut p = 0.5 * e / gampl;
    let mut q = 0.5 / (e * gammi);
    let mut c = 1.0;
    let d = x2 * x2;
    let mut sum1 = p;
    for i in 1..MAX_ITER {
        let fi = i as f64;
        ff = (fi * ff + p + q) / (fi * fi - mu * mu);
        c *= d / fi;
        p /= fi - mu;
        q /= fi + mu;
        let del = c * ff;
        sum += del;
        sum1 += c * (p - fi * ff);
        if del.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum, sum1 * 2.0 / x)
}

fn steed_cf2_scaled(mu: f64, x: f64) -> (f64, f64) {
    let mut b = 2.0 * (1.0 + x);
    let mut d = 1.0 / b;
    let mut delh = d;
    let mut h = d;
    let mut q1 = 0.0;
    let mut q2 = 1.0;
    let a1 = 0.25 - mu * mu;
    let mut q = a1;
    let mut c = a1;
    let mut a = -a1;
    let mut s = 1.0 + q * delh;
    for i in 2..MAX_ITER {
        let fi = i as f64;
        a -= 2.0 * (fi - 1.0);
        c = -a * c / fi;
        let qnew = (q1 - b * q2) / a;
        q1 = q2;
        q2 = qnew;
        q += c * qnew;
        b += 2.0;
        d = 1.0 / (b + a * d);
        delh = (b * d - 1.0) * delh;
        h += delh;
        let dels = q * delh;
        s += dels;
        if (dels / s).abs() < EPS {
            break;
        }
    }
    h *= a1;
    let k_mu = (PI / (2.0 * x)).sqrt() / s;
    let k_mu1 = k_mu * (mu + x + 0.5 - h) / x;
    (k_mu, k_mu1)
}

/// K at orders ν-1, ν, ν+1 for ν ≥ 0, as scaled values sharing one log-scale:
/// K_o(x) = value · exp(log_scale - x).
struct Ladder {
    log_scale: f64,
    below: f64,
    at: f64,
    above: f64,
}

fn ladder(nu_abs: f64, x: f64) -> Ladder {
    let n = (nu_abs + 0.5).floor();
    let mu = nu_abs - n;
    let (mut k_mu, mut k_mu1) = base_pair_scaled(mu, x);
    let mut log_scale = 0.0;
    // K_{μ-1} = K_{μ+1} - (2μ/x) K_μ
    let mut prev = k_mu1 - 2.0 * mu / x * k_mu;
    let steps = n as usize;
    for i in 1..=steps {
        let next = 2.0 * (mu + i as f64) / x * k_mu1 + k_mu;
        prev = k_mu;
        k_mu = k_mu1;
        k_mu1 = next;
        if k_mu1 > RESCALE {
            k_mu1 /= RESCALE;
            k_mu /= RESCALE;
            prev /= RESCALE;
            log_scale += RESCALE.ln();
        }
    }
    Ladder {
        log_scale,
        below: prev,
        at: k_mu,
        above: k_mu1,
    }
}

fn check_args(order: f64, x: f64) -> Result<()> {
    if !order.is_finite() {
        return Err(Error::Domain {
            what: "Bessel order",
            value: order,
        });
    }
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::Domain {
            what: "Bessel argument",
            value: x,
        });
    }
    Ok(())
}

/// ln K_ν(x) together with the neighbour ratios K_{ν+1}/K_ν and K_{ν-1}/K_ν.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselTriple {
    pub ln_k: f64,
    pub ratio_up: f64,
    pub ratio_down: f64,
}

pub fn bessel_k_triple(order: f64, x: f64) -> Result<BesselTriple> {
    check_args(order, x)?;
    let l = ladder(order.abs(), x);
    let (up, down) = if order >= 0.0 {
        (l.above, l.below)
    } else {
        (l.below, l.above)
    };
    Ok(BesselTriple {
        ln_k: l.at.ln() + l.log_scale - x,
        ratio_up: up / l.at,
        ratio_down: down / l.at,
    })
}

/// Natural logarithm of K_ν(x). Finite for every finite order and x > 0.
pub fn ln_bessel_k(order: f64, x: f64) -> Result<f64> {
    check_args(order, x)?;
    let l = ladder(order.abs(), x);
    Ok(l.at.ln() + l.log_scale - x)
}

/// K_ν(x) for real ν and x > 0.
///
/// Returns `f64::INFINITY` when the value exceeds the `f64` range (x near 0
/// with large |ν|); use [`ln_bessel_k`] in that regime.
pub fn bessel_k(order: f64, x: f64) -> Result<f64> {
    ln_bessel_k(order, x).map(f64::exp)
}

/// e^x K_ν(x).
pub fn bessel_k_scaled(order: f64, x: f64) -> Result<f64> {
    ln_bessel_k(order, x).map(|l| (l + x).exp())
}

/// K_{ν+1}(x) / K_ν(x).
pub fn bessel_k_ratio(order: f64, x: f64) -> Result<f64> {
    bessel_k_triple(order, x).map(|t| t.ratio_up)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::quadrature::{integrate_semi_infinite, QuadratureSpec};

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    /// K_ν(x) = ½ ∫₀^∞ y^{ν-1} exp(-x(y + 1/y)/2) dy, in the equivalent form
    /// ∫₀^∞ exp(-x cosh t) cosh(νt) dt which is kinder to quadrature.
    fn k_by_integral(nu: f64, x: f64) -> f64 {
        let spec = QuadratureSpec::new(1e-300, 1e-13, 500).unwrap();
        integrate_semi_infinite(
            |t| {
                let a = nu.abs() * t - x * t.cosh();
                0.5 * (a.exp() + (a - 2.0 * nu.abs() * t).exp())
            },
            &spec,
        )
        .unwrap()
    }

    #[test]
    fn half_order_closed_form() {
        let expected = (PI / 2.0).sqrt() * (-1.0f64).exp();
        assert!(rel(bessel_k(0.5, 1.0).unwrap(), expected) < 1e-14);
        assert!((bessel_k(0.5, 1.0).unwrap() - 0.4610685).abs() < 1e-7);
    }

    #[test]
    fn half_order_matches_integral_definition() {
        for &x in &[0.3, 1.0, 4.5] {
            let closed = (PI / (2.0 * x)).sqrt() * (-x).exp();
            assert!(rel(k_by_integral(0.5, x), closed) < 1e-11);
        }
    }

    #[test]
    fn symmetric_in_order() {
        let a = bessel_k(0.7, 2.3).unwrap();
        let b = bessel_k(-0.7, 2.3).unwrap();
        assert!(rel(a, b) < 1e-14);
    }

    #[test]
    fn three_halves_recurrence_identity() {
        let x = 1.5;
        let k32 = bessel_k(1.5, x).unwrap();
        let rhs = bessel_k(0.5, x).unwrap() / x + bessel_k(-0.5, x).unwrap();
        assert!(rel(k32, rhs) < 1e-14);
    }

    #[test]
    fn agrees_with_integral_on_grid() {
        for &nu in &[-3.2, -1.0, -0.378655004, 0.0, 0.25, 0.5, 1.0, 2.7, 5.5] {
            for &x in &[0.05, 0.37, 1.0, 1.99, 2.01, 7.5, 30.0] {
                let got = bessel_k(nu, x).unwrap();
                let want = k_by_integral(nu, x);
                assert!(rel(got, want) < 1e-11, "nu={nu} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn recurrence_residual_on_grid() {
        for i in 0..=24 {
            let nu = -3.0 + 0.25 * i as f64;
            for j in 0..=20 {
                let x = 0.1 + (20.0 - 0.1) * j as f64 / 20.0;
                let kp = bessel_k(nu + 1.0, x).unwrap();
                let k = bessel_k(nu, x).unwrap();
                let km = bessel_k(nu - 1.0, x).unwrap();
                let resid = (kp - 2.0 * nu / x * k - km).abs();
                assert!(resid <= 1e-9 * kp, "nu={nu} x={x} resid={resid:e}");
            }
        }
    }

    #[test]
    fn triple_consistent_with_direct_values() {
        for &nu in &[-2.5, -2.0, -1.3, -0.2, 0.0, 0.4, 1.7] {
            for &x in &[0.2, 1.1, 3.0, 40.0] {
                let t = bessel_k_triple(nu, x).unwrap();
                let k = ln_bessel_k(nu, x).unwrap();
                assert!((t.ln_k - k).abs() < 1e-13);
                let up = (ln_bessel_k(nu + 1.0, x).unwrap() - k).exp();
                let down = (ln_bessel_k(nu - 1.0, x).unwrap() - k).exp();
                assert!(rel(t.ratio_up, up) < 1e-12, "nu={nu} x={x}");
                assert!(rel(t.ratio_down, down) < 1e-12, "nu={nu} x={x}");
            }
        }
    }

    #[test]
    fn large_argument_and_order_stay_finite_in_log() {
        // K_ν(x) ~ sqrt(π/2x) e^{-x} for large x
        let l = ln_bessel_k(0.3, 800.0).unwrap();
        let approx = 0.5 * (PI / 1600.0).ln() - 800.0;
        assert!((l - approx).abs() < 1e-3);
        assert!(ln_bessel_k(120.0, 1e-3).unwrap().is_finite());
        assert_eq!(bessel_k(300.0, 1e-3).unwrap(), f64::INFINITY);
    }

    #[test]
    fn temme_gamma_series_matches_gamma_function() {
        for &mu in &[-0.5, -0.31, -0.01, 0.0, 0.2, 0.45, 0.5] {
            let (_, _, gampl, gammi) = temme_gammas(mu);
            let want_pl = 1.0 / statrs::function::gamma::gamma(1.0 + mu);
            let want_mi = 1.0 / statrs::function::gamma::gamma(1.0 - mu);
            assert!(rel(gampl, want_pl) < 1e-14, "mu={mu}");
            assert!(rel(gammi, want_mi) < 1e-14, "mu={mu}");
        }
    }

    #[test]
    fn rejects_nonpositive_argument() {
        assert!(bessel_k(1.0, 0.0).is_err());
        assert!(bessel_k(1.0, -2.0).is_err());
        assert!(bessel_k(f64::NAN, 1.0).is_err());
    }
}
