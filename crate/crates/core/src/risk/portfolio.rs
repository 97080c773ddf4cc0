//! Portfolio risk through the x-space reduction
//! ρ(ωᵀX) = −xᵀμ₀ + ‖x‖·h(a), a = ‖γ₀‖·cos∠(x, γ₀), h(a) = ρ(aZ + √Z·N).

use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::RwLock;

use nalgebra::DVector;
use serde::Serialize;

use super::ya::{risk_ya, YaLaw};
use super::{check_beta, Diagnostics, Measure, RiskConfig, RiskMethod, RiskResult};
use crate::error::{Error, Result};
use crate::nmvm::TransformedModel;

/// Exact risk of the portfolio with x-coordinates `x`.
pub fn portfolio_risk_exact(
    tm: &TransformedModel,
    x: &DVector<f64>,
    measure: Measure,
    beta: f64,
    cfg: &RiskConfig,
) -> Result<RiskResult> {
    let cos = tm.cos_angle(x)?;
    let law = YaLaw::new(tm.gamma0_norm * cos, tm.mixing)?;
    let h = risk_ya(&law, measure, beta, cfg)?;
    let norm = x.norm();
    Ok(RiskResult {
        value: -x.dot(&tm.mu0) + norm * h.value,
        diagnostics: Diagnostics {
            error_estimate: norm * h.diagnostics.error_estimate,
            ..h.diagnostics
        },
        ..h
    })
}

/// Endpoint coefficients of the linear interpolation of h between ±b.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoPointCoefficients {
    pub w_plus: f64,
    pub w_minus: f64,
    pub v_plus: f64,
    pub v_minus: f64,
    pub b: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Endpoints {
    /// h(b)
    at_plus: f64,
    /// h(−b)
    at_minus: f64,
}

impl Endpoints {
    fn half_sum(&self) -> f64 {
        0.5 * (self.at_plus + self.at_minus)
    }
    fn half_diff(&self) -> f64 {
        0.5 * (self.at_plus - self.at_minus)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// h(a) replaced by its value at the left end of the partition cell.
    Step,
    #[default]
    Linear,
}

impl std::str::FromStr for Interpolation {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "step" => Ok(Interpolation::Step),
            "linear" => Ok(Interpolation::Linear),
            other => Err(Error::InvalidParameter(format!("unknown interpolation '{other}'"))),
        }
    }
}

/// Risk evaluation for one model, with the two-point endpoint values cached
/// per (β, measure). The cache belongs to the model it was built for.
#[derive(Debug)]
pub struct RiskEngine {
    tm: TransformedModel,
    cfg: RiskConfig,
    cache: RwLock<HashMap<(u64, Measure), Endpoints>>,
    endpoint_evaluations: AtomicUsize,
}

impl RiskEngine {
    pub fn new(tm: TransformedModel, cfg: RiskConfig) -> Self {
        RiskEngine {
            tm,
            cfg,
            cache: RwLock::new(HashMap::new()),
            endpoint_evaluations: AtomicUsize::new(0),
        }
    }

    pub fn model(&self) -> &TransformedModel {
        &self.tm
    }

    pub fn config(&self) -> &RiskConfig {
        &self.cfg
    }

    /// Number of quadrature risk evaluations spent on two-point endpoints.
    pub fn endpoint_evaluations(&self) -> usize {
        self.endpoint_evaluations.load(Ordering::Relaxed)
    }

    /// h(a) = ρ(aZ + √Z·N).
    pub fn h(&self, a: f64, measure: Measure, beta: f64) -> Result<f64> {
        Ok(risk_ya(&YaLaw::new(a, self.tm.mixing)?, measure, beta, &self.cfg)?.value)
    }

    pub fn exact(&self, x: &DVector<f64>, measure: Measure, beta: f64) -> Result<RiskResult> {
        portfolio_risk_exact(&self.tm, x, measure, beta, &self.cfg)
    }

    pub fn exact_weights(&self, weights: &DVector<f64>, measure: Measure, beta: f64) -> Result<RiskResult> {
        self.exact(&self.tm.x_from_weights(weights)?, measure, beta)
    }

    fn endpoints(&self, measure: Measure, beta: f64) -> Result<Endpoints> {
        check_beta(beta)?;
        let key = (beta.to_bits(), measure);
        if let Some(e) = self.cache.read().expect("cache lock").get(&key) {
            return Ok(*e);
        }
        let mut cache = self.cache.write().expect("cache lock");
        if let Some(e) = cache.get(&key) {
            return Ok(*e);
        }
        let b = self.tm.gamma0_norm;
        let e = if b == 0.0 {
            let h0 = self.h(0.0, measure, beta)?;
            self.endpoint_evaluations.fetch_add(1, Ordering::Relaxed);
            Endpoints {
                at_plus: h0,
                at_minus: h0,
            }
        } else {
            let at_plus = self.h(b, measure, beta)?;
            let at_minus = self.h(-b, measure, beta)?;
            self.endpoint_evaluations.fetch_add(2, Ordering::Relaxed);
            Endpoints { at_plus, at_minus }
        };
        cache.insert(key, e);
        Ok(e)
    }

    pub fn two_point_coefficients(&self, beta: f64) -> Result<TwoPointCoefficients> {
        let v = self.endpoints(Measure::Var, beta)?;
        let c = self.endpoints(Measure::Cvar, beta)?;
        Ok(TwoPointCoefficients {
            w_plus: v.half_sum(),
            w_minus: v.half_diff(),
            v_plus: c.half_sum(),
            v_minus: c.half_diff(),
            b: self.tm.gamma0_norm,
            beta,
        })
    }

    /// −xᵀμ₀ + ‖x‖(c₊ + c₋·cosθ) with the cached endpoint coefficients.
    pub fn two_point(&self, x: &DVector<f64>, measure: Measure, beta: f64) -> Result<RiskResult> {
        let e = self.endpoints(measure, beta)?;
        let cos = self.tm.cos_angle(x)?;
        Ok(RiskResult {
            value: -x.dot(&self.tm.mu0) + x.norm() * (e.half_sum() + e.half_diff() * cos),
            measure,
            method: RiskMethod::TwoPoint,
            beta,
            diagnostics: Diagnostics::default(),
        })
    }

    pub fn two_point_weights(&self, weights: &DVector<f64>, measure: Measure, beta: f64) -> Result<RiskResult> {
        self.two_point(&self.tm.x_from_weights(weights)?, measure, beta)
    }

    pub fn piecewise_table(
        &self,
        partition: &[f64],
        measure: Measure,
        beta: f64,
        interpolation: Interpolation,
    ) -> Result<PiecewiseTable> {
        PiecewiseTable::new(self, partition, measure, beta, interpolation)
    }
}

/// h tabulated on a partition of [−b, b].
#[derive(Debug, Clone)]
pub struct PiecewiseTable {
    nodes: Vec<f64>,
    values: Vec<f64>,
    mu0: DVector<f64>,
    gamma0: DVector<f64>,
    b: f64,
    measure: Measure,
    beta: f64,
    interpolation: Interpolation,
}

impl PiecewiseTable {
    pub fn new(
        engine: &RiskEngine,
        partition: &[f64],
        measure: Measure,
        beta: f64,
        interpolation: Interpolation,
    ) -> Result<Self> {
        check_beta(beta)?;
        let tm = engine.model();
        let b = tm.gamma0_norm;
        if partition.len() < 2 {
            return Err(Error::InvalidPartition("at least two points are required".into()));
        }
        if partition.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidPartition("non-finite partition point".into()));
        }
        let (nodes, values) = if b == 0.0 {
            (vec![0.0], vec![engine.h(0.0, measure, beta)?])
        } else {
            if partition.windows(2).any(|w| !(w[0] < w[1])) {
                return Err(Error::InvalidPartition("points must be strictly increasing".into()));
            }
            let tol = 1e-12 * b.max(1.0);
            let (first, last) = (partition[0], partition[partition.len() - 1]);
            if (first + b).abs() > tol || (last - b).abs() > tol {
                return Err(Error::InvalidPartition(format!(
                    "partition must run from -b to b (b = {b}), got [{first}, {last}]"
                )));
            }
            let values = partition
                .iter()
                .map(|&a| engine.h(a, measure, beta))
                .collect::<Result<Vec<_>>>()?;
            (partition.to_vec(), values)
        };
        Ok(PiecewiseTable {
            nodes,
            values,
            mu0: tm.mu0.clone(),
            gamma0: tm.gamma0.clone(),
            b,
            measure,
            beta,
            interpolation,
        })
    }

    /// Uniform partition of [−b, b] with `points` nodes.
    pub fn uniform_partition(b: f64, points: usize) -> Vec<f64> {
        let n = points.max(2);
        (0..n)
            .map(|i| if i == n - 1 { b } else { -b + 2.0 * b * i as f64 / (n - 1) as f64 })
            .collect()
    }

    fn approx_h(&self, a: f64) -> f64 {
        if self.nodes.len() == 1 {
            return self.values[0];
        }
        let last = self.nodes.len() - 1;
        let i = match self.nodes.partition_point(|&p| p <= a) {
            0 => 0,
            k => (k - 1).min(last - 1),
        };
        match self.interpolation {
            Interpolation::Step => {
                if a >= self.nodes[last] {
                    self.values[last]
                } else {
                    self.values[i]
                }
            }
            Interpolation::Linear => {
                let (a0, a1) = (self.nodes[i], self.nodes[i + 1]);
                let t = ((a - a0) / (a1 - a0)).clamp(0.0, 1.0);
                self.values[i] + t * (self.values[i + 1] - self.values[i])
            }
        }
    }

    pub fn evaluate(&self, x: &DVector<f64>) -> Result<RiskResult> {
        if x.len() != self.mu0.len() {
            return Err(Error::DimensionMismatch {
                expected: self.mu0.len(),
                found: x.len(),
            });
        }
        let norm = x.norm();
        if norm == 0.0 {
            return Err(Error::InvalidParameter("x must be nonzero".into()));
        }
        let a = if self.b == 0.0 {
            0.0
        } else {
            (x.dot(&self.gamma0) / norm).clamp(-self.b, self.b)
        };
        Ok(RiskResult {
            value: -x.dot(&self.mu0) + norm * self.approx_h(a),
            measure: self.measure,
            method: RiskMethod::Piecewise,
            beta: self.beta,
            diagnostics: Diagnostics {
                evaluations: self.nodes.len(),
                ..Diagnostics::default()
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixing::MixingLaw;
    use crate::nmvm::{Factorization, MMode, NmvmModel};
    use nalgebra::DMatrix;

    fn model(mixing: MixingLaw) -> NmvmModel {
        NmvmModel::new(
            DVector::from_vec(vec![0.001, -0.002, 0.0005]),
            DVector::from_vec(vec![0.03, 0.01, -0.02]),
            DMatrix::from_row_slice(3, 3, &[0.02, 0.003, 0.001, 0.003, 0.01, -0.002, 0.001, -0.002, 0.015]),
            mixing,
        )
        .unwrap()
    }

    const GIG2: MixingLaw = MixingLaw::Gig {
        lambda: -0.378655004,
        chi: 0.379275063,
        psi: 0.371543387,
    };

    fn engine(mixing: MixingLaw) -> RiskEngine {
        RiskEngine::new(
            model(mixing).transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap(),
            RiskConfig::default(),
        )
    }

    #[test]
    fn two_point_exact_at_endpoints() {
        let e = engine(GIG2);
        let g = e.model().gamma0.clone();
        for measure in [Measure::Var, Measure::Cvar] {
            for x in [&g * 3.0, &g * -0.5] {
                let ex = e.exact(&x, measure, 0.05).unwrap().value;
                let tp = e.two_point(&x, measure, 0.05).unwrap().value;
                assert!((ex - tp).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn coefficients_signs_and_cache() {
        let e = engine(GIG2);
        let c = e.two_point_coefficients(0.05).unwrap();
        assert!(c.w_minus <= 0.0 && c.v_minus <= 0.0);
        assert_eq!(e.endpoint_evaluations(), 4);
        let x = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        for _ in 0..10 {
            e.two_point(&x, Measure::Cvar, 0.05).unwrap();
            e.two_point(&x, Measure::Var, 0.05).unwrap();
        }
        assert_eq!(e.endpoint_evaluations(), 4);
        e.two_point(&x, Measure::Var, 0.1).unwrap();
        assert_eq!(e.endpoint_evaluations(), 6);
        let b = e.model().gamma0_norm;
        let hp = e.h(b, Measure::Var, 0.05).unwrap();
        let hm = e.h(-b, Measure::Var, 0.05).unwrap();
        assert!((c.w_plus - 0.5 * (hp + hm)).abs() < 1e-15);
    }

    #[test]
    fn concurrent_readers_share_one_initialization() {
        let e = engine(GIG2);
        let x = DVector::from_vec(vec![0.3, 0.5, 0.2]);
        std::thread::scope(|s| {
            for _ in 0..8 {
                s.spawn(|| e.two_point(&x, Measure::Cvar, 0.01).unwrap());
            }
        });
        assert_eq!(e.endpoint_evaluations(), 2);
    }

    #[test]
    fn zero_skewness_uses_elliptical_path() {
        let mut m = model(GIG2);
        m.gamma.fill(0.0);
        let tm = m.transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap();
        let e = RiskEngine::new(tm, RiskConfig::default());
        let x = DVector::from_vec(vec![0.1, 0.2, 0.3]);
        let h0 = e.h(0.0, Measure::Cvar, 0.05).unwrap();
        let want = -x.dot(&e.model().mu0) + x.norm() * h0;
        assert!((e.exact(&x, Measure::Cvar, 0.05).unwrap().value - want).abs() < 1e-14);
        assert!((e.two_point(&x, Measure::Cvar, 0.05).unwrap().value - want).abs() < 1e-14);
        let t = e.piecewise_table(&[-1.0, 1.0], Measure::Cvar, 0.05, Interpolation::Step).unwrap();
        assert!((t.evaluate(&x).unwrap().value - want).abs() < 1e-14);
    }

    #[test]
    fn two_node_linear_partition_equals_two_point() {
        let e = engine(GIG2);
        let b = e.model().gamma0_norm;
        let t = e.piecewise_table(&[-b, b], Measure::Var, 0.05, Interpolation::Linear).unwrap();
        let x = DVector::from_vec(vec![0.2, -0.4, 0.9]);
        let p = t.evaluate(&x).unwrap().value;
        let tp = e.two_point(&x, Measure::Var, 0.05).unwrap().value;
        assert!((p - tp).abs() < 1e-14);
    }

    #[test]
    fn step_partition_converges() {
        let e = engine(GIG2);
        let b = e.model().gamma0_norm;
        let x = DVector::from_vec(vec![0.2, -0.4, 0.9]);
        let exact = e.exact(&x, Measure::Cvar, 0.05).unwrap().value;
        let mut last = f64::INFINITY;
        let mut first = None;
        for n in [3, 11, 41, 161] {
            let t = e
                .piecewise_table(&PiecewiseTable::uniform_partition(b, n), Measure::Cvar, 0.05, Interpolation::Step)
                .unwrap();
            let err = (t.evaluate(&x).unwrap().value - exact).abs();
            assert!(err <= last + 1e-15);
            first.get_or_insert(err);
            last = err;
        }
        assert!(last < first.unwrap() / 20.0);
    }

    #[test]
    fn degenerate_mixing_linear_partition_is_exact() {
        let e = engine(MixingLaw::Degenerate);
        let b = e.model().gamma0_norm;
        let t = e
            .piecewise_table(&PiecewiseTable::uniform_partition(b, 5), Measure::Var, 0.05, Interpolation::Linear)
            .unwrap();
        let x = DVector::from_vec(vec![0.7, 0.1, 0.2]);
        let exact = e.exact(&x, Measure::Var, 0.05).unwrap().value;
        assert!((t.evaluate(&x).unwrap().value - exact).abs() < 1e-12);
    }

    #[test]
    fn partition_validation() {
        let e = engine(GIG2);
        let b = e.model().gamma0_norm;
        for bad in [vec![-b], vec![-b, 0.0], vec![-b, 0.0, 0.0, b], vec![b, -b], vec![-2.0 * b, b]] {
            assert!(matches!(
                e.piecewise_table(&bad, Measure::Var, 0.05, Interpolation::Step),
                Err(Error::InvalidPartition(_))
            ));
        }
    }

    #[test]
    fn translation_and_homogeneity() {
        let m = model(GIG2);
        let cfg = RiskConfig::default();
        let w = DVector::from_vec(vec![0.5, 0.3, 0.2]);
        let c = 0.004;
        let base = RiskEngine::new(m.transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap(), cfg);
        let shifted = RiskEngine::new(
            m.shifted(c).transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap(),
            cfg,
        );
        for measure in [Measure::Var, Measure::Cvar] {
            let r0 = base.exact_weights(&w, measure, 0.05).unwrap().value;
            let r1 = shifted.exact_weights(&w, measure, 0.05).unwrap().value;
            assert!((r1 - (r0 - c * w.sum())).abs() < 1e-10);
            let r2 = base.exact_weights(&(&w * 2.0), measure, 0.05).unwrap().value;
            assert!((r2 - 2.0 * r0).abs() < 1e-10);
        }
    }
}
