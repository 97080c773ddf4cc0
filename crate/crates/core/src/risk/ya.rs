//! The canonical univariate mixture Y_a = aZ + √Z·N.

use std::f64::consts::PI;

use serde::Serialize;

use super::{check_beta, Diagnostics, Measure, RiskConfig, RiskMethod, RiskResult};
use crate::error::{Error, Result};
use crate::mathkit::bessel::ln_bessel_k;
use crate::mathkit::normal::{normal_cdf, normal_pdf, normal_quantile};
use crate::mathkit::quadrature::integrate_upper_tail_detailed;
use crate::mathkit::roots::{find_root, RootBracket};
use crate::mixing::MixingLaw;
use crate::nmvm::UnivariateMixture;

const MAX_DOUBLINGS: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct YaLaw {
    pub a: f64,
    pub mixing: MixingLaw,
}

impl YaLaw {
    pub fn new(a: f64, mixing: MixingLaw) -> Result<Self> {
        if !a.is_finite() {
            return Err(Error::Domain { what: "drift a", value: a });
        }
        mixing.validate()?;
        Ok(YaLaw { a, mixing })
    }
}

/// Density of Y_a at y.
pub fn density_ya(law: &YaLaw, y: f64, cfg: &RiskConfig) -> Result<f64> {
    let a = law.a;
    match law.mixing.as_gig() {
        None => Ok(normal_pdf(y - a)),
        Some((lambda, chi, psi)) if chi > 0.0 && psi > 0.0 => {
            let nu = lambda - 0.5;
            let q = chi + y * y;
            let p = psi + a * a;
            let ln = a * y - 0.5 * (2.0 * PI).ln() + 0.5 * lambda * (psi / chi).ln()
                - ln_bessel_k(lambda, (chi * psi).sqrt())?
                + 0.5 * nu * (q / p).ln()
                + ln_bessel_k(nu, (q * p).sqrt())?;
            Ok(ln.exp())
        }
        Some(_) => density_ya_by_mixture(law, y, cfg),
    }
}

/// Density of Y_a as the mixture integral ∫ g(s) φ((y − as)/√s)/√s ds.
pub fn density_ya_by_mixture(law: &YaLaw, y: f64, cfg: &RiskConfig) -> Result<f64> {
    let a = law.a;
    law.mixing.expectation(
        |s| {
            let r = s.sqrt();
            normal_pdf((y - a * s) / r) / r
        },
        &cfg.quadrature,
    )
}

fn cdf_detailed(law: &YaLaw, y: f64, cfg: &RiskConfig) -> Result<(f64, Diagnostics)> {
    let a = law.a;
    let q = law
        .mixing
        .expectation_detailed(|s| normal_cdf((y - a * s) / s.sqrt()), &cfg.quadrature)?;
    Ok((
        q.value,
        Diagnostics {
            error_estimate: q.error_estimate,
            evaluations: q.evaluations,
            standard_error: None,
        },
    ))
}

/// P(Y_a ≤ y).
pub fn cdf_ya(law: &YaLaw, y: f64, cfg: &RiskConfig) -> Result<f64> {
    cdf_detailed(law, y, cfg).map(|r| r.0)
}

fn result(value: f64, measure: Measure, method: RiskMethod, beta: f64, diagnostics: Diagnostics) -> RiskResult {
    RiskResult {
        value,
        measure,
        method,
        beta,
        diagnostics,
    }
}

/// y_β(a) with P(Y_a ≤ −y_β) = β.
pub fn var_ya(law: &YaLaw, beta: f64, cfg: &RiskConfig) -> Result<RiskResult> {
    check_beta(beta)?;
    if let MixingLaw::Degenerate = law.mixing {
        let v = -law.a - normal_quantile(beta)?;
        return Ok(result(v, Measure::Var, RiskMethod::ClosedFormNormal, beta, Diagnostics::default()));
    }
    let ez = law.mixing.mean()?;
    let half = law.a.abs() * ez + 10.0 * ez.sqrt();
    let mut diag = Diagnostics::default();
    let mut g = |y: f64| -> Result<f64> {
        let (p, d) = cdf_detailed(law, -y, cfg)?;
        diag = diag.merge(d);
        Ok(p - beta)
    };
    let (mut lo, mut hi) = (-half, half);
    let (mut g_lo, mut g_hi) = (g(lo)?, g(hi)?);
    let mut doublings = 0;
    // g decreases in y: need g(lo) > 0 > g(hi)
    while !(g_lo > 0.0 && g_hi < 0.0) {
        if doublings == MAX_DOUBLINGS {
            return Err(Error::BracketExpansion { lo, hi, doublings });
        }
        if g_lo <= 0.0 {
            lo *= 2.0;
            g_lo = g(lo)?;
        }
        if g_hi >= 0.0 {
            hi *= 2.0;
            g_hi = g(hi)?;
        }
        doublings += 1;
    }
    let mut failure = None;
    let root = find_root(
        |y| match g(y) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        RootBracket::new(lo, hi, cfg.root_tol)?,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(result(root?, Measure::Var, RiskMethod::ExactQuadrature, beta, diag))
}

/// CVaR_β(Y_a) = −E[Y_a | Y_a ≤ −y_β].
pub fn cvar_ya(law: &YaLaw, beta: f64, cfg: &RiskConfig) -> Result<RiskResult> {
    let var = var_ya(law, beta, cfg)?;
    let y = var.value;
    let a = law.a;
    if let MixingLaw::Degenerate = law.mixing {
        let u = -y - a;
        let v = -(a * normal_cdf(u) - normal_pdf(u)) / beta;
        return Ok(result(v, Measure::Cvar, RiskMethod::ClosedFormNormal, beta, var.diagnostics));
    }
    law.mixing.mean()?;
    let q = law.mixing.expectation_detailed(
        |s| {
            let r = s.sqrt();
            let u = (-y - a * s) / r;
            a * s * normal_cdf(u) - r * normal_pdf(u)
        },
        &cfg.quadrature,
    )?;
    let diag = var.diagnostics.merge(Diagnostics {
        error_estimate: q.error_estimate / beta,
        evaluations: q.evaluations,
        standard_error: None,
    });
    Ok(result(-q.value / beta, Measure::Cvar, RiskMethod::ExactQuadrature, beta, diag))
}

pub fn risk_ya(law: &YaLaw, measure: Measure, beta: f64, cfg: &RiskConfig) -> Result<RiskResult> {
    match measure {
        Measure::Var => var_ya(law, beta, cfg),
        Measure::Cvar => cvar_ya(law, beta, cfg),
    }
}

/// Risk of loc + skew_coef·Z + scale·√Z·N computed directly on the portfolio law.
pub fn univariate_risk(um: &UnivariateMixture, measure: Measure, beta: f64, cfg: &RiskConfig) -> Result<RiskResult> {
    if !(um.scale > 0.0) {
        return Err(Error::Domain {
            what: "portfolio scale",
            value: um.scale,
        });
    }
    let law = YaLaw::new(um.skew_coef / um.scale, um.mixing)?;
    let mut r = risk_ya(&law, measure, beta, cfg)?;
    r.value = -um.loc + um.scale * r.value;
    r.diagnostics.error_estimate *= um.scale;
    Ok(r)
}

/// ∫ f(y) dF_{Y_a}(y) over y ≤ upper, by quadrature against the density.
pub(crate) fn lower_tail_against_density<F: FnMut(f64) -> f64>(
    law: &YaLaw,
    upper: f64,
    mut f: F,
    cfg: &RiskConfig,
) -> Result<f64> {
    let mut failure = None;
    let q = integrate_upper_tail_detailed(
        |t| {
            let y = upper - t;
            let w = f(y);
            if w == 0.0 {
                return 0.0;
            }
            match density_ya(law, y, cfg) {
                Ok(d) => w * d,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        &cfg.quadrature,
    )?;
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(q.value)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mathkit::quadrature::integrate_real_line;

    const GIG2: MixingLaw = MixingLaw::Gig {
        lambda: -0.378655004,
        chi: 0.379275063,
        psi: 0.371543387,
    };

    fn cfg() -> RiskConfig {
        RiskConfig::default()
    }

    #[test]
    fn degenerate_is_normal() {
        let law = YaLaw::new(0.0, MixingLaw::Degenerate).unwrap();
        assert!((density_ya(&law, 0.7, &cfg()).unwrap() - normal_pdf(0.7)).abs() < 1e-15);
        let v = var_ya(&law, 0.05, &cfg()).unwrap();
        assert!((v.value - 1.6448536).abs() < 1e-7);
        let c = cvar_ya(&law, 0.05, &cfg()).unwrap();
        let z = normal_quantile(0.05).unwrap();
        assert!((c.value - (-z * z / 2.0).exp() / (0.05 * (2.0 * PI).sqrt())).abs() < 1e-12);
        assert!((c.value - 2.0627).abs() < 1e-4);
    }

    #[test]
    fn closed_form_density_matches_mixture_integral() {
        for &(a, y) in &[(0.02, 0.01), (0.3, -1.2), (-0.5, 2.0), (0.0, 0.0)] {
            let law = YaLaw::new(a, GIG2).unwrap();
            let c = density_ya(&law, y, &cfg()).unwrap();
            let q = density_ya_by_mixture(&law, y, &cfg()).unwrap();
            assert!((c - q).abs() < 1e-8, "a={a} y={y}: {c} vs {q}");
        }
    }

    #[test]
    fn density_normalizes() {
        let law = YaLaw::new(0.2, GIG2).unwrap();
        let mass = integrate_real_line(|y| density_ya(&law, y, &cfg()).unwrap(), 0.0, &cfg().quadrature).unwrap();
        assert!((mass - 1.0).abs() < 1e-7);
    }

    #[test]
    fn symmetric_median_is_zero() {
        let law = YaLaw::new(0.0, GIG2).unwrap();
        assert!(var_ya(&law, 0.5, &cfg()).unwrap().value.abs() < 1e-10);
    }

    #[test]
    fn quantile_plugs_back() {
        for &a in &[-0.3, 0.0, 0.05, 0.4] {
            let law = YaLaw::new(a, GIG2).unwrap();
            for &beta in &[0.1, 0.05, 0.01] {
                let y = var_ya(&law, beta, &cfg()).unwrap().value;
                assert!((cdf_ya(&law, -y, &cfg()).unwrap() - beta).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cvar_dominates_var() {
        for law in [GIG2, MixingLaw::Gamma { shape: 2.0, rate: 2.0 }, MixingLaw::Exponential] {
            let ya = YaLaw::new(0.04, law).unwrap();
            for &beta in &[0.1, 0.05, 0.01] {
                let v = var_ya(&ya, beta, &cfg()).unwrap().value;
                let c = cvar_ya(&ya, beta, &cfg()).unwrap().value;
                assert!(c >= v, "{law:?} beta={beta}");
            }
        }
    }

    #[test]
    fn cvar_matches_density_tail_integral() {
        let law = YaLaw::new(0.25, GIG2).unwrap();
        let beta = 0.05;
        let y = var_ya(&law, beta, &cfg()).unwrap().value;
        let tail = lower_tail_against_density(&law, -y, |t| t, &cfg()).unwrap();
        let c = cvar_ya(&law, beta, &cfg()).unwrap().value;
        assert!((c + tail / beta).abs() < 1e-8);
    }

    #[test]
    fn heavy_tail_bracket_expands() {
        // inverse Gamma mixing with few moments: wide quantiles
        let law = YaLaw::new(0.0, MixingLaw::Gig { lambda: -1.2, chi: 2.0, psi: 0.0 }).unwrap();
        let v = var_ya(&law, 0.01, &cfg()).unwrap().value;
        // √Z·N is Student t with 2.4 degrees of freedom, scaled by √(χ/2λ)
        assert!(v > 3.0);
    }

    #[test]
    fn student_t_oracle() {
        use statrs::distribution::{ContinuousCDF, StudentsT};
        let nu = 5.0;
        let law = YaLaw::new(0.0, MixingLaw::Gig { lambda: -nu / 2.0, chi: nu, psi: 0.0 }).unwrap();
        let t = StudentsT::new(0.0, 1.0, nu).unwrap();
        for &beta in &[0.1, 0.05, 0.01] {
            let v = var_ya(&law, beta, &cfg()).unwrap().value;
            assert!((v + t.inverse_cdf(beta)).abs() < 1e-8, "beta={beta}");
        }
    }

    #[test]
    fn univariate_risk_rescales() {
        let um = UnivariateMixture {
            loc: 0.01,
            skew_coef: 0.02,
            scale: 0.1,
            mixing: GIG2,
        };
        let r = univariate_risk(&um, Measure::Var, 0.05, &cfg()).unwrap().value;
        let h = var_ya(&YaLaw::new(0.2, GIG2).unwrap(), 0.05, &cfg()).unwrap().value;
        assert!((r - (-0.01 + 0.1 * h)).abs() < 1e-14);
    }
}
