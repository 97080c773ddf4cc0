use std::path::PathBuf;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use nmvm_core::fit::{load_model, load_prices, mcecm_fit, save_model, summarize, FitConfig, LambdaMode, ReturnsMatrix};
use nmvm_core::mathkit::minimize_scalar;
use nmvm_core::mixing::MixingLaw;
use nmvm_core::nmvm::{Factorization, MMode, NmvmModel};
use nmvm_core::optimize::{
    check_theorem_hypothesis, frontier, gram_matrix, return_grid, solve_mean_risk_reduced, solve_mean_risk_skew,
};
use nmvm_core::risk::{mc_risk, portfolio_risk_exact, sample_mixture, Measure, RiskConfig, RiskEngine};

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn second_fit() -> NmvmModel {
    load_model(fixture("models/second_fit.json")).unwrap().model
}

fn first_fit() -> NmvmModel {
    load_model(fixture("models/first_fit.json")).unwrap().model
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt())
}

#[test]
fn portfolio_skewness_against_simulation() {
    let model = second_fit();
    let tm = model.transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap();
    let w = DVector::from_vec(vec![0.3, 0.1, 0.3, 0.1, 0.2]);
    let analytic = tm.portfolio_moments(&tm.x_from_weights(&w).unwrap()).unwrap();
    let um = model.project(&w).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let ys = sample_mixture(&um, 1_000_000, &mut rng).unwrap();
    // batch means give the standard error of the sample skewness
    let skew = |v: &[f64]| {
        let (m, sd) = mean_sd(v);
        v.iter().map(|x| ((x - m) / sd).powi(3)).sum::<f64>() / v.len() as f64
    };
    let batches: Vec<f64> = ys.chunks(10_000).map(skew).collect();
    let (_, bsd) = mean_sd(&batches);
    let se = bsd / (batches.len() as f64).sqrt();
    let (_, sd) = mean_sd(&ys);
    assert!((skew(&ys) - analytic.skew).abs() < 4.0 * se, "{} vs {} (se {se})", skew(&ys), analytic.skew);
    assert!((sd - analytic.std).abs() < 0.01 * analytic.std);
}

#[test]
fn mixing_sample_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for law in [second_fit().mixing, first_fit().mixing, MixingLaw::Gamma { shape: 2.0, rate: 2.0 }] {
        let zs = law.sample(&mut rng, 1_000_000).unwrap();
        let mm = law.moments().unwrap();
        let n = zs.len() as f64;
        let (m, sd) = mean_sd(&zs);
        assert!((m - mm.ez).abs() < 4.0 * sd / n.sqrt(), "{} mean", law.name());
        let sq: Vec<f64> = zs.iter().map(|z| (z - m).powi(2)).collect();
        let (v, vsd) = mean_sd(&sq);
        assert!((v - mm.var).abs() < 4.0 * vsd / n.sqrt(), "{} variance", law.name());
    }
}

#[test]
fn summary_of_simulated_returns() {
    let model = second_fit();
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let t = 10_000;
    let um_cols: Vec<Vec<f64>> = (0..5)
        .map(|i| {
            let mut e = DVector::zeros(5);
            e[i] = 1.0;
            sample_mixture(&model.project(&e).unwrap(), t, &mut rng).unwrap()
        })
        .collect();
    let values = nalgebra::DMatrix::from_fn(t, 5, |r, c| um_cols[c][r]);
    let rm = ReturnsMatrix::from_values(values).unwrap();
    let ez = model.mixing.mean().unwrap();
    for (i, s) in summarize(&rm).unwrap().iter().enumerate() {
        let target = model.mu[i] + model.gamma[i] * ez;
        assert!((s.mean - target).abs() < 4.0 * s.std / (t as f64).sqrt());
        assert!(s.min < s.mean && s.mean < s.max);
    }
}

#[test]
fn mc_risk_is_reproducible() {
    let um = second_fit().project(&DVector::from_vec(vec![0.2; 5])).unwrap();
    let a = mc_risk(&um, Measure::Cvar, 0.05, 50_000, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
    let b = mc_risk(&um, Measure::Cvar, 0.05, 50_000, &mut ChaCha8Rng::seed_from_u64(42)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn frontier_cvar_grows_away_from_minimum() {
    let tm = first_fit().transform(Factorization::SymmetricSqrt, MMode::SkewOnly).unwrap();
    let cfg = RiskConfig::default();
    let grid = return_grid(0.0, 0.02, 101).unwrap();
    let pts: Vec<_> = frontier(&tm, &grid, 0.05, &cfg).into_iter().map(Result::unwrap).collect();
    let cvar_at = |r: f64| {
        let sol = solve_mean_risk_skew(&tm, r).unwrap();
        portfolio_risk_exact(&tm, &sol.x(), Measure::Cvar, 0.05, &cfg).unwrap().value
    };
    let best = pts.iter().enumerate().min_by(|a, b| a.1.cvar.total_cmp(&b.1.cvar)).unwrap().0;
    let lo = grid[best.saturating_sub(1)];
    let hi = grid[(best + 1).min(grid.len() - 1)];
    let r_min = minimize_scalar(cvar_at, lo, hi, 1e-12, 200).unwrap().x;
    for side in [1.0, -1.0] {
        let mut seq: Vec<(f64, f64)> = pts
            .iter()
            .filter(|p| (p.target_return - r_min) * side >= 0.0)
            .map(|p| ((p.target_return - r_min).abs(), p.cvar))
            .collect();
        seq.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in seq.windows(2) {
            assert!(w[1].1 >= w[0].1 - 1e-12);
        }
    }
    for p in &pts {
        assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-10);
    }
}

#[test]
fn hypothesis_holds_for_fitted_mixing() {
    let tm = first_fit().transform(Factorization::SymmetricSqrt, MMode::SkewOnly).unwrap();
    let h = check_theorem_hypothesis(&tm).unwrap();
    assert!(h.condition_value > 0.0 && h.monotone_on_grid);
}

#[test]
fn gram_matrix_is_positive_definite() {
    let tm = second_fit().transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap();
    let g = gram_matrix(&tm);
    assert!((&g - g.transpose()).amax() < 1e-15);
    assert!(g.symmetric_eigenvalues().min() > 0.0);
}

#[test]
fn reduced_problem_improves_on_quadratic_portfolio() {
    let mut model = second_fit();
    model.mu.fill(0.0);
    let tm = model.transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap();
    let cfg = RiskConfig::default();
    let sol = solve_mean_risk_skew(&tm, 0.0025).unwrap();
    let quad = portfolio_risk_exact(&tm, &sol.x(), Measure::Cvar, 0.05, &cfg).unwrap().value;
    let red = solve_mean_risk_reduced(&tm, Measure::Cvar, 0.05, sol.achieved_return, &cfg).unwrap();
    assert!(red.risk_value <= quad + 1e-6, "{} vs {quad}", red.risk_value);
    assert!((DVector::from_column_slice(&red.x_star).dot(&tm.e_a) - 1.0).abs() < 1e-8);
    assert!(red.g_value >= 0.0);
}

#[test]
fn reduced_problem_full_model() {
    let tm = second_fit().transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap();
    let cfg = RiskConfig::default();
    let k = 0.004;
    let red = solve_mean_risk_reduced(&tm, Measure::Cvar, 0.05, k, &cfg).unwrap();
    assert!(red.mu_tilde_star + red.gamma_tilde_star * tm.ez >= k - 1e-10);
    let x = DVector::from_column_slice(&red.x_star);
    assert!((x.dot(&tm.e_a) - 1.0).abs() < 1e-8);
    // at least as good as the minimal-norm portfolio with the same return
    let sol = solve_mean_risk_skew(&tm, k).unwrap();
    let quad = portfolio_risk_exact(&tm, &sol.x(), Measure::Cvar, 0.05, &cfg).unwrap().value;
    assert!(red.risk_value <= quad + 1e-9);
}

#[test]
fn two_point_cache_limits_quadrature() {
    let engine = RiskEngine::new(
        second_fit().transform(Factorization::SymmetricSqrt, MMode::WithLocation).unwrap(),
        RiskConfig::default(),
    );
    for _ in 0..3 {
        for w in [[0.1, 0.4, 0.2, 0.1, 0.2], [0.2, 0.1, 0.5, 0.1, 0.1]] {
            engine.two_point_weights(&DVector::from_row_slice(&w), Measure::Var, 0.05).unwrap();
        }
    }
    assert_eq!(engine.endpoint_evaluations(), 2);
}

#[test]
fn price_file_to_model_file_pipeline() {
    let truth = NmvmModel::new(
        DVector::from_vec(vec![0.0005, 0.0002]),
        DVector::from_vec(vec![0.001, -0.0005]),
        nalgebra::DMatrix::from_row_slice(2, 2, &[4e-4, 1e-4, 1e-4, 2e-4]),
        MixingLaw::Gig { lambda: -0.5, chi: 1.0, psi: 1.0 },
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let t = 1500;
    let cols: Vec<Vec<f64>> = (0..2)
        .map(|i| {
            let mut e = DVector::zeros(2);
            e[i] = 1.0;
            sample_mixture(&truth.project(&e).unwrap(), t, &mut rng).unwrap()
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let prices = dir.path().join("prices.csv");
    let mut text = String::from("date,A,B\n");
    let (mut pa, mut pb) = (100.0f64, 50.0f64);
    let start = chrono_free_date(0);
    text.push_str(&format!("{start},{pa},{pb}\n"));
    for i in 0..t {
        pa *= cols[0][i].exp();
        pb *= cols[1][i].exp();
        text.push_str(&format!("{},{pa},{pb}\n", chrono_free_date(i + 1)));
    }
    std::fs::write(&prices, text).unwrap();
    let rm = load_prices(&prices).unwrap();
    assert_eq!(rm.observations(), t);
    assert!((rm.values[(0, 0)] - cols[0][0]).abs() < 1e-12);
    let cfg = FitConfig {
        lambda_mode: LambdaMode::Fixed(-0.5),
        max_iters: 200,
        ll_tol: 1e-9,
        ..Default::default()
    };
    let fit = mcecm_fit(&rm, &cfg).unwrap();
    let out = dir.path().join("model.json");
    save_model(&out, &fit.model, Some(&rm.assets)).unwrap();
    let back = load_model(&out).unwrap();
    assert_eq!(back.model, fit.model);
    assert_eq!(back.assets.unwrap(), vec!["A", "B"]);
}

/// Consecutive calendar days from 2000-01-01 without a date library.
fn chrono_free_date(offset: usize) -> String {
    let mut days = offset;
    let (mut y, mut m, mut d) = (2000u32, 1u32, 1u32);
    let len = |y: u32, m: u32| match m {
        2 if y % 4 == 0 && (y % 100 != 0 || y % 400 == 0) => 29,
        2 => 28,
        4 | 6 | 9 | 11 => 30,
        _ => 31,
    };
    while days > 0 {
        d += 1;
        if d > len(y, m) {
            d = 1;
            m += 1;
            if m > 12 {
                m = 1;
                y += 1;
            }
        }
        days -= 1;
    }
    format!("{y:04}-{m:02}-{d:02}")
}
