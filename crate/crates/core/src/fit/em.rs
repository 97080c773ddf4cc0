//! MCECM fitting of the multivariate generalized hyperbolic model.

use std::f64::consts::PI;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::data::ReturnsMatrix;
use crate::mathkit::bessel::{bessel_k_triple, ln_bessel_k};
use crate::mathkit::minimize::minimize_scalar;
use crate::mixing::MixingLaw;
use crate::nmvm::NmvmModel;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    Fixed(f64),
    Free,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Identification {
    #[default]
    None,
    UnitEz,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitConfig {
    pub lambda_mode: LambdaMode,
    pub include_mu: bool,
    pub max_iters: usize,
    pub ll_tol: f64,
    pub identification: Identification,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig {
            lambda_mode: LambdaMode::Free,
            include_mu: true,
            max_iters: 500,
            ll_tol: 1e-8,
            identification: Identification::None,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if !(self.ll_tol > 0.0) {
            return Err(Error::InvalidParameter(format!("ll_tol must be positive, got {}", self.ll_tol)));
        }
        if let LambdaMode::Fixed(l) = self.lambda_mode {
            if !l.is_finite() {
                return Err(Error::InvalidParameter("fixed lambda must be finite".into()));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: FitConfig = serde_json::from_str(text).map_err(|e| Error::Parse {
            line: e.line(),
            message: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub model: NmvmModel,
    pub log_likelihood_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl FitResult {
    pub fn log_likelihood(&self) -> f64 {
        *self.log_likelihood_trace.last().expect("trace holds the initial value")
    }
}

/// E[Z | x], E[1/Z | x] and E[ln Z | x] under the GIG posterior.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorMoments {
    pub ez: f64,
    pub einv: f64,
    pub eln: f64,
}

#[derive(Debug, Clone)]
struct Params {
    mu: DVector<f64>,
    gamma: DVector<f64>,
    sigma: DMatrix<f64>,
    lambda: f64,
    chi: f64,
    psi: f64,
}

impl Params {
    fn from_model(model: &NmvmModel) -> Result<Self> {
        match model.mixing.as_gig() {
            Some((lambda, chi, psi)) if chi > 0.0 && psi > 0.0 => Ok(Params {
                mu: model.mu.clone(),
                gamma: model.gamma.clone(),
                sigma: model.sigma.clone(),
                lambda,
                chi,
                psi,
            }),
            _ => Err(Error::InvalidParameter(
                "likelihood evaluation needs GIG mixing with chi > 0 and psi > 0".into(),
            )),
        }
    }
}

struct EStep {
    post: Vec<PosteriorMoments>,
    ll: f64,
}

impl EStep {
    fn means(&self) -> (f64, f64, f64) {
        let t = self.post.len() as f64;
        let (mut z, mut inv, mut ln) = (0.0, 0.0, 0.0);
        for p in &self.post {
            z += p.ez;
            inv += p.einv;
            ln += p.eln;
        }
        (z / t, inv / t, ln / t)
    }
}

const ORDER_STEP: f64 = 1e-5;

fn e_step(x: &DMatrix<f64>, p: &Params, iteration: usize) -> Result<EStep> {
    let n = x.ncols();
    let chol = Cholesky::new(p.sigma.clone()).ok_or(Error::EmSigmaNotSpd { iteration })?;
    let l_inv = chol
        .l()
        .solve_lower_triangular(&DMatrix::identity(n, n))
        .ok_or(Error::EmSigmaNotSpd { iteration })?;
    let ln_det: f64 = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let sinv_gamma = chol.solve(&p.gamma);
    let pp = p.psi + p.gamma.dot(&sinv_gamma);
    let nu = p.lambda - 0.5 * n as f64;
    let ln_const = -0.5 * n as f64 * (2.0 * PI).ln() - 0.5 * ln_det + 0.5 * p.lambda * (p.psi / p.chi).ln()
        - ln_bessel_k(p.lambda, (p.chi * p.psi).sqrt())?;

    let one = |i: usize| -> Result<(PosteriorMoments, f64)> {
        let d = x.row(i).transpose() - &p.mu;
        let q = p.chi + (&l_inv * &d).norm_squared();
        let w = (q * pp).sqrt();
        let overflow = |_| Error::BesselOverflow { observation: i };
        let tr = bessel_k_triple(nu, w).map_err(overflow)?;
        let lk_up = ln_bessel_k(nu + ORDER_STEP, w).map_err(overflow)?;
        let lk_dn = ln_bessel_k(nu - ORDER_STEP, w).map_err(overflow)?;
        let r = (q / pp).sqrt();
        let m = PosteriorMoments {
            ez: r * tr.ratio_up,
            einv: tr.ratio_down / r,
            eln: r.ln() + (lk_up - lk_dn) / (2.0 * ORDER_STEP),
        };
        let ll = d.dot(&sinv_gamma) + ln_const + nu * r.ln() + tr.ln_k;
        if !(m.ez.is_finite() && m.einv.is_finite() && m.eln.is_finite() && ll.is_finite()) {
            return Err(Error::BesselOverflow { observation: i });
        }
        Ok((m, ll))
    };

    let t = x.nrows();
    let workers = std::thread::available_parallelism().map(|k| k.get()).unwrap_or(1).min(16);
    let results: Vec<Result<(PosteriorMoments, f64)>> = if workers <= 1 || t < 2048 {
        (0..t).map(one).collect()
    } else {
        let chunk = t.div_ceil(workers);
        std::thread::scope(|s| {
            let one = &one;
            let handles: Vec<_> = (0..t)
                .step_by(chunk)
                .map(|start| s.spawn(move || (start..(start + chunk).min(t)).map(one).collect::<Vec<_>>()))
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("E-step worker panicked"))
                .collect()
        })
    };
    let mut post = Vec::with_capacity(t);
    let mut ll = 0.0;
    for r in results {
        let (m, l) = r?;
        post.push(m);
        ll += l;
    }
    Ok(EStep { post, ll })
}

/// Closed-form update of (μ, γ, Σ) given the posterior weights.
fn cm_step_location(x: &DMatrix<f64>, p: &mut Params, e: &EStep, include_mu: bool, iteration: usize) -> Result<()> {
    let (t, n) = x.shape();
    let tf = t as f64;
    let (zbar, invbar, _) = e.means();
    let xbar = x.row_sum().transpose() / tf;
    let mut xinv = DVector::zeros(n);
    for (i, pm) in e.post.iter().enumerate() {
        xinv += x.row(i).transpose() * pm.einv;
    }
    xinv /= tf;
    if include_mu {
        let denom = 1.0 - invbar * zbar;
        p.gamma = (xinv - &xbar * invbar) / denom;
        p.mu = &xbar - &p.gamma * zbar;
    } else {
        p.gamma = &xbar / zbar;
        p.mu = DVector::zeros(n);
    }
    let mut s = DMatrix::zeros(n, n);
    let mut dsum = DVector::zeros(n);
    for (i, pm) in e.post.iter().enumerate() {
        let d = x.row(i).transpose() - &p.mu;
        s.ger(pm.einv, &d, &d, 1.0);
        dsum += d;
    }
    s /= tf;
    dsum /= tf;
    let cross = &dsum * p.gamma.transpose();
    let sigma = s - &cross - cross.transpose() + &p.gamma * p.gamma.transpose() * zbar;
    let sigma = (&sigma + sigma.transpose()) * 0.5;
    if !sigma.iter().all(|v| v.is_finite()) || Cholesky::new(sigma.clone()).is_none() {
        return Err(Error::EmSigmaNotSpd { iteration });
    }
    p.sigma = sigma;
    Ok(())
}

/// Expected complete-data GIG log-likelihood per observation, up to a constant.
fn gig_q(lambda: f64, chi: f64, psi: f64, zbar: f64, invbar: f64, lnbar: f64) -> f64 {
    let w = (chi * psi).sqrt();
    match ln_bessel_k(lambda, w) {
        Ok(lk) => 0.5 * lambda * (psi / chi).ln() - lk + (lambda - 1.0) * lnbar - 0.5 * chi * invbar - 0.5 * psi * zbar,
        Err(_) => f64::NEG_INFINITY,
    }
}

/// With ω = √(χψ) fixed, the maximizing η = √(χ/ψ).
fn best_eta(lambda: f64, w: f64, zbar: f64, invbar: f64) -> f64 {
    let root = (lambda * lambda + w * w * invbar * zbar).sqrt();
    if lambda >= 0.0 {
        w * zbar / (lambda + root)
    } else {
        (root - lambda) / (w * invbar)
    }
}

const LN_W_RANGE: (f64, f64) = (-10.0, 8.0);
const LAMBDA_RANGE: (f64, f64) = (-15.0, 15.0);

fn grid_then_brent<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, nodes: usize) -> (f64, f64) {
    let step = (hi - lo) / (nodes - 1) as f64;
    let (mut bi, mut bv) = (0, f64::INFINITY);
    for i in 0..nodes {
        let v = f(lo + step * i as f64);
        if v < bv {
            bi = i;
            bv = v;
        }
    }
    let best_x = lo + step * bi as f64;
    if !bv.is_finite() {
        return (best_x, bv);
    }
    let a = lo + step * bi.saturating_sub(1) as f64;
    let b = lo + step * (bi + 1).min(nodes - 1) as f64;
    match minimize_scalar(&f, a, b, 1e-10, 200) {
        Ok(m) if m.value < bv => (m.x, m.value),
        _ => (best_x, bv),
    }
}

/// Profile over ω (and λ when free); keeps the current values unless Q improves.
fn cm_step_mixing(p: &mut Params, e: &EStep, mode: LambdaMode) {
    let (zbar, invbar, lnbar) = e.means();
    let profile = |lambda: f64| -> (f64, f64) {
        let neg = |lw: f64| {
            let w = lw.exp();
            let eta = best_eta(lambda, w, zbar, invbar);
            -gig_q(lambda, w * eta, w / eta, zbar, invbar, lnbar)
        };
        grid_then_brent(neg, LN_W_RANGE.0, LN_W_RANGE.1, 37)
    };
    let (lambda, lw) = match mode {
        LambdaMode::Fixed(l) => (l, profile(l).0),
        LambdaMode::Free => {
            let (l, _) = grid_then_brent(|l| profile(l).1, LAMBDA_RANGE.0, LAMBDA_RANGE.1, 31);
            (l, profile(l).0)
        }
    };
    let w = lw.exp();
    let eta = best_eta(lambda, w, zbar, invbar);
    let (chi, psi) = (w * eta, w / eta);
    let current = gig_q(p.lambda, p.chi, p.psi, zbar, invbar, lnbar);
    let proposed = gig_q(lambda, chi, psi, zbar, invbar, lnbar);
    if proposed > current && chi.is_finite() && psi.is_finite() && chi > 0.0 && psi > 0.0 {
        p.lambda = lambda;
        p.chi = chi;
        p.psi = psi;
    }
}

fn check_data(rm: &ReturnsMatrix) -> Result<()> {
    let (t, n) = (rm.observations(), rm.dim());
    if t <= n + 2 {
        return Err(Error::InsufficientData(format!(
            "EM needs more than n + 2 = {} observations, found {t}",
            n + 2
        )));
    }
    Ok(())
}

fn initial_params(rm: &ReturnsMatrix, cfg: &FitConfig) -> Result<Params> {
    let x = &rm.values;
    let (t, n) = x.shape();
    let mean = x.row_sum().transpose() / t as f64;
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..t {
        let d = x.row(i).transpose() - &mean;
        cov.ger(1.0 / (t - 1) as f64, &d, &d, 1.0);
    }
    if Cholesky::new(cov.clone()).is_none() {
        return Err(Error::NotPositiveDefinite { eigenvalue: cov.symmetric_eigenvalues().min() });
    }
    Ok(Params {
        mu: if cfg.include_mu { mean } else { DVector::zeros(n) },
        gamma: DVector::zeros(n),
        sigma: cov,
        lambda: match cfg.lambda_mode {
            LambdaMode::Fixed(l) => l,
            LambdaMode::Free => -0.5,
        },
        chi: 1.0,
        psi: 1.0,
    })
}

fn to_model(p: &Params, identification: Identification) -> Result<NmvmModel> {
    let law = MixingLaw::Gig {
        lambda: p.lambda,
        chi: p.chi,
        psi: p.psi,
    };
    let (gamma, sigma, law) = match identification {
        Identification::None => (p.gamma.clone(), p.sigma.clone(), law),
        Identification::UnitEz => {
            let c = law.mean()?;
            (&p.gamma * c, &p.sigma * c, law.scaled(1.0 / c)?)
        }
    };
    NmvmModel::new(p.mu.clone(), gamma, sigma, law)
}

/// Observed-data log-likelihood of the returns under a GIG-mixed model.
pub fn log_likelihood(rm: &ReturnsMatrix, model: &NmvmModel) -> Result<f64> {
    check_dims(rm, model)?;
    Ok(e_step(&rm.values, &Params::from_model(model)?, 0)?.ll)
}

/// Posterior moments of Z for every observation.
pub fn posterior_moments(rm: &ReturnsMatrix, model: &NmvmModel) -> Result<Vec<PosteriorMoments>> {
    check_dims(rm, model)?;
    Ok(e_step(&rm.values, &Params::from_model(model)?, 0)?.post)
}

fn check_dims(rm: &ReturnsMatrix, model: &NmvmModel) -> Result<()> {
    if rm.dim() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: rm.dim(),
        });
    }
    Ok(())
}

pub fn mcecm_fit(rm: &ReturnsMatrix, cfg: &FitConfig) -> Result<FitResult> {
    cfg.validate()?;
    check_data(rm)?;
    let start = initial_params(rm, cfg)?;
    run(rm, cfg, start)
}

/// EM started from a given model instead of the moment-based warm start.
pub fn mcecm_fit_from(rm: &ReturnsMatrix, cfg: &FitConfig, start: &NmvmModel) -> Result<FitResult> {
    cfg.validate()?;
    check_data(rm)?;
    check_dims(rm, start)?;
    let mut p = Params::from_model(start)?;
    if !cfg.include_mu {
        p.mu.fill(0.0);
    }
    if let LambdaMode::Fixed(l) = cfg.lambda_mode {
        p.lambda = l;
    }
    run(rm, cfg, p)
}

fn run(rm: &ReturnsMatrix, cfg: &FitConfig, mut p: Params) -> Result<FitResult> {
    let x = &rm.values;
    let mut e = e_step(x, &p, 0)?;
    let mut trace = vec![e.ll];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        cm_step_location(x, &mut p, &e, cfg.include_mu, iterations)?;
        let half = e_step(x, &p, iterations)?;
        cm_step_mixing(&mut p, &half, cfg.lambda_mode);
        e = e_step(x, &p, iterations)?;
        let prev = *trace.last().expect("non-empty");
        trace.push(e.ll);
        if (e.ll - prev).abs() / (x.nrows() as f64) < cfg.ll_tol {
            converged = true;
            break;
        }
    }
    Ok(FitResult {
        model: to_model(&p, cfg.identification)?,
        log_likelihood_trace: trace,
        iterations,
        converged,
    })
}
