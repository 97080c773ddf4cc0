//! Multivariate normal mean-variance mixture X = μ + γZ + √Z·A·N and its
//! reduction to x-space, x = Aᵀω.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mixing::{MixingLaw, MixingMoments};

const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factorization {
    #[default]
    SymmetricSqrt,
    Cholesky,
}

impl std::str::FromStr for Factorization {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric_sqrt" | "sqrt" => Ok(Factorization::SymmetricSqrt),
            "cholesky" => Ok(Factorization::Cholesky),
            other => Err(Error::InvalidParameter(format!("unknown factorization '{other}'"))),
        }
    }
}

/// Which vector `m` denotes: the skewness direction only, or location plus skewness.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MMode {
    /// m = γ₀·EZ
    SkewOnly,
    /// m = μ₀ + γ₀·EZ
    WithLocation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NmvmModel {
    pub mu: DVector<f64>,
    pub gamma: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub mixing: MixingLaw,
}

/// Law of ωᵀX = loc + skew_coef·Z + scale·√Z·N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UnivariateMixture {
    pub loc: f64,
    pub skew_coef: f64,
    pub scale: f64,
    pub mixing: MixingLaw,
}

#[derive(Debug, Clone)]
pub struct TransformedModel {
    pub a_factor: DMatrix<f64>,
    pub a_inv: DMatrix<f64>,
    pub mu0: DVector<f64>,
    pub gamma0: DVector<f64>,
    pub e_a: DVector<f64>,
    pub m: DVector<f64>,
    pub mode: MMode,
    pub gamma0_norm: f64,
    pub mixing: MixingLaw,
    pub ez: f64,
    pub method: Factorization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PortfolioMoments {
    pub std: f64,
    pub skew: f64,
    pub kurt: Option<f64>,
}

fn symmetric_eigen_checked(sigma: &DMatrix<f64>) -> Result<nalgebra::SymmetricEigen<f64, nalgebra::Dyn>> {
    let n = sigma.nrows();
    if sigma.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: sigma.ncols(),
        });
    }
    if n == 0 {
        return Err(Error::InvalidParameter("empty covariance matrix".into()));
    }
    if sigma.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("covariance matrix has non-finite entries".into()));
    }
    let scale = sigma.amax().max(f64::MIN_POSITIVE);
    let asym = (sigma - sigma.transpose()).amax();
    if asym > 1e-10 * scale {
        return Err(Error::NotSymmetric { asymmetry: asym });
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let trace = sigma.trace();
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    if !(min > 1e-12 * trace) {
        return Err(Error::NotPositiveDefinite { eigenvalue: min });
    }
    let condition = max / min;
    if condition > MAX_CONDITION {
        return Err(Error::IllConditioned { condition });
    }
    Ok(eig)
}

/// A with A·Aᵀ = Σ.
pub fn factorize(sigma: &DMatrix<f64>, method: Factorization) -> Result<DMatrix<f64>> {
    let eig = symmetric_eigen_checked(sigma)?;
    match method {
        Factorization::SymmetricSqrt => {
            let q = &eig.eigenvectors;
            let d = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
            let a = q * d * q.transpose();
            Ok((&a + a.transpose()) * 0.5)
        }
        Factorization::Cholesky => {
            let sym = (sigma + sigma.transpose()) * 0.5;
            nalgebra::Cholesky::new(sym)
                .map(|c| c.l())
                .ok_or(Error::NotPositiveDefinite {
                    eigenvalue: eig.eigenvalues.min(),
                })
        }
    }
}

impl NmvmModel {
    pub fn new(mu: DVector<f64>, gamma: DVector<f64>, sigma: DMatrix<f64>, mixing: MixingLaw) -> Result<Self> {
        let n = sigma.nrows();
        for (len, _) in [(mu.len(), "mu"), (gamma.len(), "gamma"), (sigma.ncols(), "sigma")] {
            if len != n {
                return Err(Error::DimensionMismatch { expected: n, found: len });
            }
        }
        if mu.iter().chain(gamma.iter()).any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("mu and gamma must be finite".into()));
        }
        symmetric_eigen_checked(&sigma)?;
        mixing.validate()?;
        Ok(NmvmModel {
            mu,
            gamma,
            sigma,
            mixing,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn transform(&self, method: Factorization, mode: MMode) -> Result<TransformedModel> {
        let a = factorize(&self.sigma, method)?;
        let a_inv = a
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("factor A is not invertible".into()))?;
        let n = self.dim();
        let mu0 = &a_inv * &self.mu;
        let gamma0 = &a_inv * &self.gamma;
        let e_a = &a_inv * DVector::from_element(n, 1.0);
        let ez = self.mixing.mean()?;
        let m = match mode {
            MMode::SkewOnly => &gamma0 * ez,
            MMode::WithLocation => &mu0 + &gamma0 * ez,
        };
        Ok(TransformedModel {
            gamma0_norm: gamma0.norm(),
            a_factor: a,
            a_inv,
            mu0,
            gamma0,
            e_a,
            m,
            mode,
            mixing: self.mixing,
            ez,
            method,
        })
    }

    fn check_len(&self, w: &DVector<f64>) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: w.len(),
            });
        }
        Ok(())
    }

    /// Law of ωᵀX.
    pub fn project(&self, weights: &DVector<f64>) -> Result<UnivariateMixture> {
        self.check_len(weights)?;
        if weights.iter().all(|&w| w == 0.0) {
            return Err(Error::InvalidParameter("portfolio weights are all zero".into()));
        }
        let var = weights.dot(&(&self.sigma * weights));
        Ok(UnivariateMixture {
            loc: weights.dot(&self.mu),
            skew_coef: weights.dot(&self.gamma),
            scale: var.max(0.0).sqrt(),
            mixing: self.mixing,
        })
    }

    /// The model of X + c·e.
    pub fn shifted(&self, c: f64) -> NmvmModel {
        NmvmModel {
            mu: self.mu.add_scalar(c),
            ..self.clone()
        }
    }
}

impl TransformedModel {
    pub fn dim(&self) -> usize {
        self.mu0.len()
    }

    pub fn check_len(&self, v: &DVector<f64>) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: v.len(),
            });
        }
        Ok(())
    }

    /// x = Aᵀω.
    pub fn x_from_weights(&self, weights: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(weights)?;
        Ok(self.a_factor.tr_mul(weights))
    }

    /// ω = A^{-T}x.
    pub fn weights_from_x(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_len(x)?;
        Ok(self.a_inv.tr_mul(x))
    }

    /// cos∠(x, γ₀); zero when γ₀ = 0.
    pub fn cos_angle(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_len(x)?;
        let nx = x.norm();
        if nx == 0.0 {
            return Err(Error::InvalidParameter("x must be nonzero".into()));
        }
        if self.gamma0_norm == 0.0 {
            return Ok(0.0);
        }
        Ok((x.dot(&self.gamma0) / (nx * self.gamma0_norm)).clamp(-1.0, 1.0))
    }

    /// StD, skewness and kurtosis of xᵀY.
    pub fn portfolio_moments(&self, x: &DVector<f64>) -> Result<PortfolioMoments> {
        let phi = self.cos_angle(x)?;
        let mm = self.mixing.moments()?;
        let c = self.gamma0_norm * phi;
        let denom = c * c * mm.var + mm.ez;
        Ok(PortfolioMoments {
            std: x.norm() * denom.sqrt(),
            skew: skew_at(c, &mm),
            kurt: mm.m4.map(|m4| {
                (c.powi(4) * m4 + 6.0 * c * c * (mm.ez3 - 2.0 * mm.ez2 * mm.ez + mm.ez.powi(3)) + 3.0 * mm.ez2)
                    / (denom * denom)
            }),
        })
    }

    /// Skewness of xᵀY as a function of φ = cos∠(x, γ₀).
    pub fn skew_of_phi(&self, phi: f64) -> Result<f64> {
        let mm = self.mixing.moments()?;
        Ok(skew_at(self.gamma0_norm * phi, &mm))
    }

    /// ∂ Skew / ∂φ.
    pub fn skew_derivative(&self, phi: f64) -> Result<f64> {
        if !(-1.0..=1.0).contains(&phi) {
            return Err(Error::Domain {
                what: "cosine phi",
                value: phi,
            });
        }
        let mm = self.mixing.moments()?;
        let b = self.gamma0_norm;
        let denom = b * b * phi * phi * mm.var + mm.ez;
        Ok((3.0 * b.powi(3) * (mm.m3 * mm.ez - 2.0 * mm.var * mm.var) * phi * phi
            + 3.0 * b * mm.var * mm.ez)
            / denom.powf(2.5))
    }
}

fn skew_at(c: f64, mm: &MixingMoments) -> f64 {
    (c.powi(3) * mm.m3 + 3.0 * c * mm.var) / (c * c * mm.var + mm.ez).powf(1.5)
}
