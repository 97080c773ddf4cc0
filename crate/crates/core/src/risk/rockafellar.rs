//! CVaR on the loss side as the minimum of the auxiliary function
//! F_β(α) = α + E[(−R − α)⁺]/(1 − β), R = ωᵀX; β is the confidence level.

use serde::Serialize;

use super::ya::{lower_tail_against_density, YaLaw};
use super::{check_beta, RiskConfig};
use crate::error::{Error, Result};
use crate::mathkit::minimize::minimize_scalar;
use crate::nmvm::UnivariateMixture;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RockafellarMinimum {
    /// min_α F_β(α), the loss-side CVaR at confidence β
    pub cvar: f64,
    /// minimizer, the loss-side VaR at confidence β
    pub alpha: f64,
    pub iterations: usize,
}

fn standardized(um: &UnivariateMixture) -> Result<YaLaw> {
    if !(um.scale > 0.0) {
        return Err(Error::Domain {
            what: "portfolio scale",
            value: um.scale,
        });
    }
    YaLaw::new(um.skew_coef / um.scale, um.mixing)
}

/// F_β(α), integrating against the density of R.
pub fn rockafellar_f(um: &UnivariateMixture, alpha: f64, beta: f64, cfg: &RiskConfig) -> Result<f64> {
    check_beta(beta)?;
    let law = standardized(um)?;
    // R = loc + scale·Y; the integrand is nonzero for Y ≤ y0
    let y0 = (-alpha - um.loc) / um.scale;
    let tail = lower_tail_against_density(&law, y0, |y| um.scale * (y0 - y), cfg)?;
    Ok(alpha + tail / (1.0 - beta))
}

pub fn cvar_via_f(um: &UnivariateMixture, beta: f64, cfg: &RiskConfig) -> Result<RockafellarMinimum> {
    check_beta(beta)?;
    let ez = um.mixing.mean()?;
    let sd = (um.skew_coef.powi(2) * um.mixing.moments().map(|m| m.var).unwrap_or(ez) + um.scale.powi(2) * ez)
        .sqrt();
    let center = -um.loc - um.skew_coef * ez;
    let half = 40.0 * sd;
    let mut failure = None;
    let m = minimize_scalar(
        |alpha| match rockafellar_f(um, alpha, beta, cfg) {
            Ok(v) => v,
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        },
        center - half,
        center + half,
        1e-10 * sd,
        500,
    );
    if let Some(e) = failure {
        return Err(e);
    }
    let m = m?;
    Ok(RockafellarMinimum {
        cvar: m.value,
        alpha: m.x,
        iterations: m.iterations,
    })
}
