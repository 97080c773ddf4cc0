//! Monte Carlo estimates of VaR and CVaR, used as an independent oracle.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{check_beta, Diagnostics, Measure, RiskMethod, RiskResult};
use crate::error::{Error, Result};
use crate::mixing::Sampler;
use crate::nmvm::UnivariateMixture;

const MIN_SAMPLES: usize = 10_000;

/// n draws of loc + skew_coef·Z + scale·√Z·N.
pub fn sample_mixture<R: Rng + ?Sized>(um: &UnivariateMixture, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let sampler = Sampler::new(&um.mixing)?;
    Ok((0..n)
        .map(|_| {
            let z = sampler.draw(rng);
            let g: f64 = StandardNormal.sample(rng);
            um.loc + um.skew_coef * z + um.scale * z.sqrt() * g
        })
        .collect())
}

/// n draws of aZ + √Z·N.
pub fn sample_ya<R: Rng + ?Sized>(law: &super::YaLaw, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    sample_mixture(
        &UnivariateMixture {
            loc: 0.0,
            skew_coef: law.a,
            scale: 1.0,
            mixing: law.mixing,
        },
        n,
        rng,
    )
}

/// Empirical VaR/CVaR from sorted draws, with a standard error.
pub fn empirical_risk(sorted: &[f64], measure: Measure, beta: f64) -> Result<RiskResult> {
    check_beta(beta)?;
    let n = sorted.len();
    if n < 2 {
        return Err(Error::InsufficientData("need at least two draws".into()));
    }
    let nf = n as f64;
    let idx = ((nf * beta).ceil() as usize).clamp(1, n) - 1;
    let q = sorted[idx];
    let (value, se) = match measure {
        Measure::Var => {
            let k = (nf * beta * (1.0 - beta)).sqrt().ceil() as usize;
            let lo = sorted[idx.saturating_sub(k)];
            let hi = sorted[(idx + k).min(n - 1)];
            (-q, 0.5 * (hi - lo))
        }
        Measure::Cvar => {
            let excess: Vec<f64> = sorted.iter().map(|&y| (q - y).max(0.0)).collect();
            let mean = excess.iter().sum::<f64>() / nf;
            let var = excess.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (nf - 1.0);
            (-q + mean / beta, var.sqrt() / (beta * nf.sqrt()))
        }
    };
    Ok(RiskResult {
        value,
        measure,
        method: RiskMethod::MonteCarlo,
        beta,
        diagnostics: Diagnostics {
            error_estimate: se,
            evaluations: n,
            standard_error: Some(se),
        },
    })
}

pub fn mc_risk<R: Rng + ?Sized>(
    um: &UnivariateMixture,
    measure: Measure,
    beta: f64,
    n_samples: usize,
    rng: &mut R,
) -> Result<RiskResult> {
    check_beta(beta)?;
    if n_samples < MIN_SAMPLES {
        return Err(Error::InvalidParameter(format!(
            "Monte Carlo needs at least {MIN_SAMPLES} samples, got {n_samples}"
        )));
    }
    let mut ys = sample_mixture(um, n_samples, rng)?;
    ys.sort_unstable_by(f64::total_cmp);
    empirical_risk(&ys, measure, beta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::MixingLaw;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn normal() -> UnivariateMixture {
        UnivariateMixture {
            loc: 0.0,
            skew_coef: 0.0,
            scale: 1.0,
            mixing: MixingLaw::Degenerate,
        }
    }

    #[test]
    fn normal_var_within_three_se() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let r = mc_risk(&normal(), Measure::Var, 0.05, 1_000_000, &mut rng).unwrap();
        let se = r.diagnostics.standard_error.unwrap();
        assert!((r.value - 1.6448536).abs() < 3.0 * se, "{} ± {se}", r.value);
    }

    #[test]
    fn reproducible() {
        let a = mc_risk(&normal(), Measure::Cvar, 0.05, 20_000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = mc_risk(&normal(), Measure::Cvar, 0.05, 20_000, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_small_samples() {
        assert!(mc_risk(&normal(), Measure::Var, 0.05, 100, &mut ChaCha8Rng::seed_from_u64(1)).is_err());
    }
}
