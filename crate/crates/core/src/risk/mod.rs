//! VaR and CVaR of normal mean-variance mixtures, on the return side: for a
//! return R, VaR_β(R) = −q_β(R) and CVaR_β(R) = −E[R | R ≤ q_β(R)].

mod mc;
mod portfolio;
mod rockafellar;
mod ya;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mathkit::normal::{normal_pdf, normal_quantile};
use crate::mathkit::quadrature::QuadratureSpec;

pub use mc::{empirical_risk, mc_risk, sample_mixture, sample_ya};
pub use portfolio::{
    portfolio_risk_exact, Interpolation, PiecewiseTable, RiskEngine, TwoPointCoefficients,
};
pub use rockafellar::{cvar_via_f, rockafellar_f, RockafellarMinimum};
pub use ya::{cdf_ya, cvar_ya, density_ya, risk_ya, univariate_risk, var_ya, YaLaw};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Measure {
    Var,
    Cvar,
}

impl Measure {
    pub fn label(&self) -> &'static str {
        match self {
            Measure::Var => "VaR",
            Measure::Cvar => "CVaR",
        }
    }
}

impl std::str::FromStr for Measure {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "var" => Ok(Measure::Var),
            "cvar" | "es" => Ok(Measure::Cvar),
            other => Err(Error::InvalidParameter(format!("unknown risk measure '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskMethod {
    ExactQuadrature,
    TwoPoint,
    Piecewise,
    MonteCarlo,
    ClosedFormNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    pub error_estimate: f64,
    pub evaluations: usize,
    pub standard_error: Option<f64>,
}

impl Diagnostics {
    fn merge(self, other: Diagnostics) -> Diagnostics {
        Diagnostics {
            error_estimate: self.error_estimate + other.error_estimate,
            evaluations: self.evaluations + other.evaluations,
            standard_error: self.standard_error.or(other.standard_error),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RiskResult {
    pub value: f64,
    pub measure: Measure,
    pub method: RiskMethod,
    pub beta: f64,
    pub diagnostics: Diagnostics,
}

/// Numerical settings shared by the risk computations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskConfig {
    pub quadrature: QuadratureSpec,
    pub root_tol: f64,
}

impl Default for RiskConfig {
    fn default() -> Self {
        RiskConfig {
            quadrature: QuadratureSpec {
                abs_tol: 1e-13,
                rel_tol: 1e-11,
                max_subdivisions: 500,
            },
            root_tol: 1e-12,
        }
    }
}

pub fn check_beta(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::Domain {
            what: "significance level beta",
            value: beta,
        })
    }
}

/// VaR_β of N(μ, σ²).
pub fn normal_var(mu: f64, sigma: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(-mu - sigma * normal_quantile(beta)?)
}

/// CVaR_β of N(μ, σ²).
pub fn normal_cvar(mu: f64, sigma: f64, beta: f64) -> Result<f64> {
    check_beta(beta)?;
    Ok(-mu + sigma * normal_pdf(normal_quantile(beta)?) / beta)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normal_closed_forms() {
        assert!((normal_var(0.0, 1.0, 0.05).unwrap() - 1.6448536).abs() < 1e-7);
        let c = normal_cvar(0.0, 1.0, 0.05).unwrap();
        assert!((c - 2.0627).abs() < 1e-4);
        assert!(normal_var(0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn measure_parsing() {
        assert_eq!("VaR".parse::<Measure>().unwrap(), Measure::Var);
        assert_eq!("cvar".parse::<Measure>().unwrap(), Measure::Cvar);
        assert!("vol".parse::<Measure>().is_err());
    }
}
