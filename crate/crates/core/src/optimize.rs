//! Closed-form mean-risk-skewness portfolios, frontier sweeps and the
//! two-dimensional mean-risk reduction.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::mathkit::minimize::minimize_scalar;
use crate::nmvm::TransformedModel;
use crate::risk::{portfolio_risk_exact, risk_ya, Measure, RiskConfig, YaLaw};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuadraticSolution {
    pub x_star: Vec<f64>,
    pub omega_star: Vec<f64>,
    /// multipliers in the normalization x = (s/2)·m + (t/2)·e_A
    pub s: f64,
    pub t: f64,
    pub target_return: f64,
    pub achieved_return: f64,
    pub skewness: f64,
    pub risk_value: Option<f64>,
    /// whether m₃(Z)·EZ ≥ 2·Var²(Z) holds for the mixing law
    pub hypothesis_holds: bool,
}

impl QuadraticSolution {
    pub fn x(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.x_star)
    }
    pub fn omega(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.omega_star)
    }
}

/// min xᵀx subject to xᵀm = r and xᵀe_A = 1.
pub fn solve_mean_risk_skew(tm: &TransformedModel, r: f64) -> Result<QuadraticSolution> {
    if !r.is_finite() {
        return Err(Error::Domain {
            what: "target return",
            value: r,
        });
    }
    let (m, e) = (&tm.m, &tm.e_a);
    let mm = m.dot(m);
    let me = m.dot(e);
    let ee = e.dot(e);
    let gram = Matrix2::new(mm, me, me, ee);
    let det = gram.determinant();
    if !(det.abs() >= 1e-14 * mm * ee) || mm == 0.0 {
        return Err(Error::DegenerateConstraints { det });
    }
    let coef = gram
        .try_inverse()
        .ok_or(Error::DegenerateConstraints { det })?
        * Vector2::new(r, 1.0);
    let x = m * coef[0] + e * coef[1];
    let omega = tm.weights_from_x(&x)?;
    let skewness = tm.portfolio_moments(&x)?.skew;
    let hypothesis_holds = tm.mixing.skew_condition().map(|c| c >= 0.0).unwrap_or(false);
    Ok(QuadraticSolution {
        achieved_return: x.dot(m),
        x_star: x.iter().copied().collect(),
        omega_star: omega.iter().copied().collect(),
        s: 2.0 * coef[0],
        t: 2.0 * coef[1],
        target_return: r,
        skewness,
        risk_value: None,
        hypothesis_holds,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FrontierPoint {
    pub target_return: f64,
    pub cvar: f64,
    pub skewness: f64,
    pub weights: Vec<f64>,
}

/// One point per target return, in grid order; failures are kept in place.
pub fn frontier(tm: &TransformedModel, r_grid: &[f64], beta: f64, cfg: &RiskConfig) -> Vec<Result<FrontierPoint>> {
    let point = |r: f64| -> Result<FrontierPoint> {
        let sol = solve_mean_risk_skew(tm, r)?;
        let cvar = portfolio_risk_exact(tm, &sol.x(), Measure::Cvar, beta, cfg)?.value;
        Ok(FrontierPoint {
            target_return: r,
            cvar,
            skewness: sol.skewness,
            weights: sol.omega_star,
        })
    };
    let workers = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1).min(r_grid.len().max(1));
    if workers <= 1 || r_grid.len() < 4 {
        return r_grid.iter().map(|&r| point(r)).collect();
    }
    let chunk = r_grid.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = r_grid
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&r| point(r)).collect::<Vec<_>>()))
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("frontier worker panicked"))
            .collect()
    })
}

/// Evenly spaced returns from rmin to rmax; a single point when steps = 1.
pub fn return_grid(rmin: f64, rmax: f64, steps: usize) -> Result<Vec<f64>> {
    if !(rmin.is_finite() && rmax.is_finite()) || steps == 0 {
        return Err(Error::InvalidParameter("return grid needs finite bounds and steps >= 1".into()));
    }
    if steps == 1 {
        return Ok(vec![rmin]);
    }
    if !(rmin < rmax) {
        return Err(Error::InvalidParameter(format!("rmin ({rmin}) must be below rmax ({rmax})")));
    }
    Ok((0..steps)
        .map(|i| {
            if i == steps - 1 {
                rmax
            } else {
                rmin + (rmax - rmin) * i as f64 / (steps - 1) as f64
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedSolution {
    pub mu_tilde_star: f64,
    pub gamma_tilde_star: f64,
    pub x_star: Vec<f64>,
    pub omega_star: Vec<f64>,
    /// ‖x*‖² = (μ̃, γ̃, 1)G⁻¹(μ̃, γ̃, 1)ᵀ
    pub g_value: f64,
    pub risk_value: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Coord {
    Mu,
    Gamma,
    Budget,
}

/// Minimal-norm x with prescribed inner products against (μ₀, γ₀, e_A);
/// zero vectors among μ₀, γ₀ are dropped from the basis.
struct ReducedBasis {
    coords: Vec<Coord>,
    basis: DMatrix<f64>,
    g_inv: DMatrix<f64>,
}

impl ReducedBasis {
    fn new(tm: &TransformedModel) -> Result<Self> {
        let mut coords = Vec::new();
        let mut cols = Vec::new();
        if tm.mu0.norm() > 0.0 {
            coords.push(Coord::Mu);
            cols.push(tm.mu0.clone());
        }
        if tm.gamma0_norm > 0.0 {
            coords.push(Coord::Gamma);
            cols.push(tm.gamma0.clone());
        }
        coords.push(Coord::Budget);
        cols.push(tm.e_a.clone());
        let basis = DMatrix::from_columns(&cols);
        let g = basis.tr_mul(&basis);
        let scale = g.diagonal().iter().product::<f64>();
        let det = g.determinant();
        if !(det.abs() > 1e-12 * scale) {
            return Err(Error::SingularMatrix(format!(
                "Gram matrix of (mu0, gamma0, e_A) is singular (det {det:e})"
            )));
        }
        let g_inv = g
            .try_inverse()
            .ok_or_else(|| Error::SingularMatrix("Gram matrix of (mu0, gamma0, e_A)".into()))?;
        Ok(ReducedBasis { coords, basis, g_inv })
    }

    fn rhs(&self, mu: f64, gamma: f64) -> DVector<f64> {
        DVector::from_iterator(
            self.coords.len(),
            self.coords.iter().map(|c| match c {
                Coord::Mu => mu,
                Coord::Gamma => gamma,
                Coord::Budget => 1.0,
            }),
        )
    }

    fn g(&self, mu: f64, gamma: f64) -> f64 {
        let c = self.rhs(mu, gamma);
        c.dot(&(&self.g_inv * &c))
    }

    fn x(&self, mu: f64, gamma: f64) -> DVector<f64> {
        &self.basis * (&self.g_inv * self.rhs(mu, gamma))
    }

    fn has(&self, c: Coord) -> bool {
        self.coords.contains(&c)
    }
}

/// The 3×3 Gram matrix G of (μ₀, γ₀, e_A).
pub fn gram_matrix(tm: &TransformedModel) -> DMatrix<f64> {
    let b = DMatrix::from_columns(&[tm.mu0.clone(), tm.gamma0.clone(), tm.e_a.clone()]);
    b.tr_mul(&b)
}

/// min over (μ̃, γ̃) of −μ̃ + √g·h(γ̃/√g) subject to μ̃ + γ̃·EZ ≥ k.
pub fn solve_mean_risk_reduced(
    tm: &TransformedModel,
    measure: Measure,
    beta: f64,
    k: f64,
    cfg: &RiskConfig,
) -> Result<ReducedSolution> {
    if !k.is_finite() {
        return Err(Error::Domain {
            what: "required return k",
            value: k,
        });
    }
    let rb = ReducedBasis::new(tm)?;
    let ez = tm.ez;
    let b = tm.gamma0_norm;
    let failure: std::cell::RefCell<Option<Error>> = std::cell::RefCell::new(None);
    let objective = |mu: f64, gamma: f64| -> f64 {
        let g = rb.g(mu, gamma);
        if !(g > 0.0) {
            return f64::INFINITY;
        }
        let a = if b == 0.0 { 0.0 } else { (gamma / g.sqrt()).clamp(-b, b) };
        let h = YaLaw::new(a, tm.mixing).and_then(|law| risk_ya(&law, measure, beta, cfg));
        match h {
            Ok(h) => -mu + g.sqrt() * h.value,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                f64::NAN
            }
        }
    };
    let take_failure = || failure.borrow_mut().take();

    let x_mv = &tm.e_a / tm.e_a.dot(&tm.e_a);
    let center = (x_mv.dot(&tm.mu0), x_mv.dot(&tm.gamma0));
    let spread = tm.e_a.norm().recip();
    let width_mu = 3.0 * (tm.mu0.norm() * spread).max((k - center.0 - center.1 * ez).abs());
    let width_gamma = 3.0 * (b * spread).max((k - center.0 - center.1 * ez).abs() / ez.max(1e-300));

    let (mu_star, gamma_star) = match (rb.has(Coord::Mu), rb.has(Coord::Gamma)) {
        (false, false) => {
            if k > 0.0 {
                return Err(Error::Infeasible(format!(
                    "every portfolio has expected return 0 < k = {k}"
                )));
            }
            (0.0, 0.0)
        }
        (true, false) => {
            let lo = k.max(center.0 - width_mu);
            let hi = (center.0 + width_mu).max(lo + width_mu);
            let m = line_search(|mu| objective(mu, 0.0), lo, hi)?;
            (m, 0.0)
        }
        (false, true) => {
            let lo = (k / ez).max(center.1 - width_gamma);
            let hi = (center.1 + width_gamma).max(lo + width_gamma);
            let g = line_search(|gm| objective(0.0, gm), lo, hi)?;
            (0.0, g)
        }
        (true, true) => plane_search(&objective, k, ez, center, (width_mu, width_gamma))?,
    };
    if let Some(e) = take_failure() {
        return Err(e);
    }
    let x = rb.x(mu_star, gamma_star);
    let omega = tm.weights_from_x(&x)?;
    let risk_value = portfolio_risk_exact(tm, &x, measure, beta, cfg)?.value;
    Ok(ReducedSolution {
        mu_tilde_star: mu_star,
        gamma_tilde_star: gamma_star,
        g_value: rb.g(mu_star, gamma_star),
        x_star: x.iter().copied().collect(),
        omega_star: omega.iter().copied().collect(),
        risk_value,
    })
}

const GRID: usize = 41;
const MAX_WIDENINGS: usize = 8;

/// Grid scan of [lo, hi] followed by Brent refinement around the best node;
/// the upper end widens while the minimum sits on it.
fn line_search<F: Fn(f64) -> f64>(f: F, lo: f64, mut hi: f64) -> Result<f64> {
    for _ in 0..MAX_WIDENINGS {
        let step = (hi - lo) / (GRID - 1) as f64;
        let nodes: Vec<f64> = (0..GRID).map(|i| lo + step * i as f64).collect();
        let values: Vec<f64> = nodes.iter().map(|&t| f(t)).collect();
        let best = argmin(&values)?;
        if best == GRID - 1 {
            hi = lo + 2.0 * (hi - lo);
            continue;
        }
        let a = nodes[best.saturating_sub(1)];
        let b = nodes[best + 1];
        let m = minimize_scalar(&f, a, b, 1e-12 * (hi - lo).max(1e-300), 200)?;
        return Ok(if m.value <= values[best] { m.x } else { nodes[best] });
    }
    Err(Error::MinimizerNonConvergence(
        "objective kept decreasing towards the edge of the search interval".into(),
    ))
}

fn argmin(values: &[f64]) -> Result<usize> {
    values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .ok_or_else(|| Error::MinimizerNonConvergence("objective is not finite on the search grid".into()))
}

/// 41×41 grid over a box around the minimum-variance point, then nested
/// Brent refinement from the best few feasible nodes.
fn plane_search<F: Fn(f64, f64) -> f64>(
    f: &F,
    k: f64,
    ez: f64,
    center: (f64, f64),
    widths: (f64, f64),
) -> Result<(f64, f64)> {
    let (mut wm, mut wg) = widths;
    for _ in 0..MAX_WIDENINGS {
        let (mu_lo, gm_lo) = (center.0 - wm, center.1 - wg);
        let (dm, dg) = (2.0 * wm / (GRID - 1) as f64, 2.0 * wg / (GRID - 1) as f64);
        let mut scored = Vec::with_capacity(GRID * GRID);
        for i in 0..GRID {
            for j in 0..GRID {
                let (mu, gm) = (mu_lo + dm * i as f64, gm_lo + dg * j as f64);
                if mu + gm * ez >= k {
                    let v = f(mu, gm);
                    if v.is_finite() {
                        scored.push((v, i, j));
                    }
                }
            }
        }
        if scored.is_empty() {
            wm *= 2.0;
            wg *= 2.0;
            continue;
        }
        scored.sort_by(|a, b| a.0.total_cmp(&b.0));
        let (_, bi, bj) = scored[0];
        let on_edge = bi == 0 || bi == GRID - 1 || bj == 0 || bj == GRID - 1;
        if on_edge {
            wm *= 2.0;
            wg *= 2.0;
            continue;
        }
        // inner: best μ̃ for fixed γ̃ on the feasible side of the constraint
        let inner = |gm: f64, lo_hint: f64, hi_hint: f64| -> (f64, f64) {
            let lo = lo_hint.max(k - gm * ez);
            if !(lo < hi_hint) {
                return (lo, f(lo, gm));
            }
            match minimize_scalar(|mu| f(mu, gm), lo, hi_hint, 1e-12 * wm, 200) {
                Ok(m) => {
                    let at_lo = f(lo, gm);
                    if at_lo <= m.value {
                        (lo, at_lo)
                    } else {
                        (m.x, m.value)
                    }
                }
                Err(_) => (lo, f(lo, gm)),
            }
        };
        let mut best = (scored[0].0, mu_lo + dm * bi as f64, gm_lo + dg * bj as f64);
        for &(_, i, j) in scored.iter().take(3) {
            let (ilo, ihi) = (i.saturating_sub(2), (i + 2).min(GRID - 1));
            let (jlo, jhi) = (j.saturating_sub(2), (j + 2).min(GRID - 1));
            let (mu_a, mu_b) = (mu_lo + dm * ilo as f64, mu_lo + dm * ihi as f64);
            let (gm_a, gm_b) = (gm_lo + dg * jlo as f64, gm_lo + dg * jhi as f64);
            let outer = minimize_scalar(|gm| inner(gm, mu_a, mu_b).1, gm_a, gm_b, 1e-12 * wg, 200);
            if let Ok(o) = outer {
                let (mu, v) = inner(o.x, mu_a, mu_b);
                if v < best.0 {
                    best = (v, mu, o.x);
                }
            }
        }
        return Ok((best.1, best.2));
    }
    Err(Error::MinimizerNonConvergence(
        "reduced objective minimum not bracketed by the search box".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub condition_value: f64,
    pub monotone_on_grid: bool,
}

/// m₃(Z)·EZ − 2Var²(Z), and whether ∂Skew/∂φ ≥ −1e-12 on 201 points of [−1, 1].
pub fn check_theorem_hypothesis(tm: &TransformedModel) -> Result<HypothesisCheck> {
    let condition_value = tm.mixing.skew_condition()?;
    let mut monotone = true;
    for i in 0..=200 {
        let phi = -1.0 + i as f64 / 100.0;
        if tm.skew_derivative(phi.clamp(-1.0, 1.0))? < -1e-12 {
            monotone = false;
        }
    }
    Ok(HypothesisCheck {
        condition_value,
        monotone_on_grid: monotone,
    })
}
