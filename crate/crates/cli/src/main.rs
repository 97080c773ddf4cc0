use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use nmvm_core::fit::{load_model, load_prices, mcecm_fit, save_model, FitConfig};
use nmvm_core::nmvm::{Factorization, MMode, NmvmModel, TransformedModel};
use nmvm_core::optimize::{frontier, return_grid};
use nmvm_core::risk::{mc_risk, Interpolation, Measure, PiecewiseTable, RiskConfig, RiskEngine, RiskResult};
use nmvm_core::{Error, Result};

#[derive(Parser)]
#[command(name = "nmvm", version, about = "Risk, frontiers and EM fits for normal mean-variance mixture portfolios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a GH model to a price CSV and write a model file
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// JSON fit configuration; defaults apply when omitted
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// VaR or CVaR of one portfolio
    Risk {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        weights: Vec<f64>,
        #[arg(long, value_enum)]
        measure: MeasureArg,
        #[arg(long)]
        beta: f64,
        #[arg(long, value_enum, default_value = "exact")]
        method: MethodArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Monte Carlo sample count
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        /// partition size for the piecewise method
        #[arg(long, default_value_t = 41)]
        points: usize,
        #[arg(long, value_enum, default_value = "linear")]
        interpolation: InterpolationArg,
        #[arg(long, value_enum, default_value = "symmetric-sqrt")]
        factorization: FactorizationArg,
    },
    /// Minimal-norm portfolios and their CVaR and skewness over a return grid
    Frontier {
        #[arg(long)]
        model: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        rmin: f64,
        #[arg(long, allow_hyphen_values = true)]
        rmax: f64,
        #[arg(long)]
        steps: usize,
        #[arg(long)]
        beta: f64,
        /// CSV destination; stdout when omitted
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "auto")]
        mean_mode: MeanModeArg,
        #[arg(long, value_enum, default_value = "symmetric-sqrt")]
        factorization: FactorizationArg,
    },
    /// Exact against approximate risk for a file of portfolios
    Compare {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        portfolios: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.1,0.05,0.01")]
        betas: Vec<f64>,
        #[arg(long, value_enum, default_value = "both")]
        measure: CompareMeasureArg,
        #[arg(long, value_enum, default_value = "two-point")]
        approx: MethodArg,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 1_000_000)]
        samples: usize,
        #[arg(long, default_value_t = 41)]
        points: usize,
        #[arg(long, value_enum, default_value = "linear")]
        interpolation: InterpolationArg,
        #[arg(long, value_enum, default_value = "symmetric-sqrt")]
        factorization: FactorizationArg,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum MeasureArg {
    Var,
    Cvar,
}

#[derive(Clone, Copy, ValueEnum)]
enum CompareMeasureArg {
    Var,
    Cvar,
    Both,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MethodArg {
    Exact,
    TwoPoint,
    Piecewise,
    Mc,
}

#[derive(Clone, Copy, ValueEnum)]
enum InterpolationArg {
    Linear,
    Step,
}

#[derive(Clone, Copy, ValueEnum)]
enum FactorizationArg {
    SymmetricSqrt,
    Cholesky,
}

#[derive(Clone, Copy, ValueEnum)]
enum MeanModeArg {
    /// skew-only when the model has μ = 0, with-location otherwise
    Auto,
    SkewOnly,
    WithLocation,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Var => Measure::Var,
            MeasureArg::Cvar => Measure::Cvar,
        }
    }
}

impl From<InterpolationArg> for Interpolation {
    fn from(i: InterpolationArg) -> Self {
        match i {
            InterpolationArg::Linear => Interpolation::Linear,
            InterpolationArg::Step => Interpolation::Step,
        }
    }
}

impl From<FactorizationArg> for Factorization {
    fn from(f: FactorizationArg) -> Self {
        match f {
            FactorizationArg::SymmetricSqrt => Factorization::SymmetricSqrt,
            FactorizationArg::Cholesky => Factorization::Cholesky,
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 1 } else { 2 })
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::Fit { input, config, out } => cmd_fit(&input, config.as_deref(), &out),
        Command::Risk {
            model,
            weights,
            measure,
            beta,
            method,
            seed,
            samples,
            points,
            interpolation,
            factorization,
        } => {
            let model = load_model(&model)?.model;
            let engine = engine(&model, factorization.into(), MMode::WithLocation)?;
            let w = DVector::from_vec(weights);
            let approx = Approx {
                method,
                seed,
                samples,
                points,
                interpolation: interpolation.into(),
            };
            let r = approx.evaluate(&engine, &model, &w, measure.into(), beta)?;
            print_json(&RiskRecord::from(r))
        }
        Command::Frontier {
            model,
            rmin,
            rmax,
            steps,
            beta,
            out,
            mean_mode,
            factorization,
        } => cmd_frontier(&model, rmin, rmax, steps, beta, out.as_deref(), mean_mode, factorization.into()),
        Command::Compare {
            model,
            portfolios,
            betas,
            measure,
            approx,
            seed,
            samples,
            points,
            interpolation,
            factorization,
        } => {
            let approx = Approx {
                method: approx,
                seed,
                samples,
                points,
                interpolation: interpolation.into(),
            };
            cmd_compare(&model, &portfolios, &betas, measure, approx, factorization.into())
        }
    }
}

fn engine(model: &NmvmModel, f: Factorization, mode: MMode) -> Result<RiskEngine> {
    Ok(RiskEngine::new(model.transform(f, mode)?, RiskConfig::default()))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    let s = serde_json::to_string_pretty(v).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    println!("{s}");
    Ok(())
}

#[derive(Serialize)]
struct RiskRecord {
    value: f64,
    measure: Measure,
    method: &'static str,
    beta: f64,
    diagnostics: nmvm_core::risk::Diagnostics,
}

impl From<RiskResult> for RiskRecord {
    fn from(r: RiskResult) -> Self {
        use nmvm_core::risk::RiskMethod::*;
        RiskRecord {
            value: r.value,
            measure: r.measure,
            method: match r.method {
                ExactQuadrature | ClosedFormNormal => "exact",
                TwoPoint => "two-point",
                Piecewise => "piecewise",
                MonteCarlo => "mc",
            },
            beta: r.beta,
            diagnostics: r.diagnostics,
        }
    }
}

#[derive(Clone, Copy)]
struct Approx {
    method: MethodArg,
    seed: u64,
    samples: usize,
    points: usize,
    interpolation: Interpolation,
}

impl Approx {
    fn evaluate(&self, engine: &RiskEngine, model: &NmvmModel, w: &DVector<f64>, measure: Measure, beta: f64) -> Result<RiskResult> {
        match self.method {
            MethodArg::Exact => engine.exact_weights(w, measure, beta),
            MethodArg::TwoPoint => engine.two_point_weights(w, measure, beta),
            MethodArg::Piecewise => {
                let tm: &TransformedModel = engine.model();
                let partition = PiecewiseTable::uniform_partition(tm.gamma0_norm, self.points);
                let table = engine.piecewise_table(&partition, measure, beta, self.interpolation)?;
                table.evaluate(&tm.x_from_weights(w)?)
            }
            MethodArg::Mc => {
                let um = model.project(w)?;
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                mc_risk(&um, measure, beta, self.samples, &mut rng)
            }
        }
    }
}

#[derive(Serialize)]
struct FitReport {
    iterations: usize,
    log_likelihood: f64,
    converged: bool,
    observations: usize,
    dropped_rows: usize,
    model: String,
}

fn cmd_fit(input: &Path, config: Option<&Path>, out: &Path) -> Result<()> {
    let rm = load_prices(input)?;
    let cfg = match config {
        Some(p) => FitConfig::from_json(&std::fs::read_to_string(p)?)?,
        None => FitConfig::default(),
    };
    let fit = mcecm_fit(&rm, &cfg)?;
    save_model(out, &fit.model, Some(&rm.assets))?;
    print_json(&FitReport {
        iterations: fit.iterations,
        log_likelihood: fit.log_likelihood(),
        converged: fit.converged,
        observations: rm.observations(),
        dropped_rows: rm.dropped_rows,
        model: out.display().to_string(),
    })
}

fn csv_writer(out: Option<&Path>) -> Result<csv::Writer<Box<dyn Write>>> {
    let sink: Box<dyn Write> = match out {
        Some(p) => Box::new(std::fs::File::create(p)?),
        None => Box::new(std::io::stdout().lock()),
    };
    Ok(csv::Writer::from_writer(sink))
}

fn write_row(w: &mut csv::Writer<Box<dyn Write>>, row: &[String]) -> Result<()> {
    w.write_record(row).map_err(|e| Error::Io(std::io::Error::other(e)))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

#[allow(clippy::too_many_arguments)]
fn cmd_frontier(
    model: &Path,
    rmin: f64,
    rmax: f64,
    steps: usize,
    beta: f64,
    out: Option<&Path>,
    mean_mode: MeanModeArg,
    f: Factorization,
) -> Result<()> {
    let model = load_model(model)?.model;
    nmvm_core::risk::check_beta(beta)?;
    let grid = return_grid(rmin, rmax, steps)?;
    let mode = match mean_mode {
        MeanModeArg::SkewOnly => MMode::SkewOnly,
        MeanModeArg::WithLocation => MMode::WithLocation,
        MeanModeArg::Auto if model.mu.iter().all(|&m| m == 0.0) => MMode::SkewOnly,
        MeanModeArg::Auto => MMode::WithLocation,
    };
    let tm = model.transform(f, mode)?;
    let points = frontier(&tm, &grid, beta, &RiskConfig::default());
    if let Some(Err(first)) = points.first().filter(|_| points.iter().all(|p| p.is_err())) {
        return Err(clone_error(first));
    }
    let n = model.dim();
    let mut w = csv_writer(out)?;
    let mut header: Vec<String> = ["return", "cvar", "skewness"].iter().map(|s| s.to_string()).collect();
    header.extend((1..=n).map(|i| format!("w{i}")));
    header.push("error".into());
    write_row(&mut w, &header)?;
    for (r, p) in grid.iter().zip(&points) {
        let mut row = vec![r.to_string()];
        match p {
            Ok(p) => {
                row.push(p.cvar.to_string());
                row.push(p.skewness.to_string());
                row.extend(p.weights.iter().map(|x| x.to_string()));
                row.push(String::new());
            }
            Err(e) => {
                row.extend(std::iter::repeat_n(String::new(), n + 2));
                row.push(e.to_string());
            }
        }
        write_row(&mut w, &row)?;
    }
    w.flush()?;
    Ok(())
}

/// Errors are not Clone; keep the exit-code class and the message.
fn clone_error(e: &Error) -> Error {
    if e.is_input_error() {
        Error::InvalidParameter(e.to_string())
    } else {
        Error::Infeasible(e.to_string())
    }
}

fn read_portfolios(path: &Path, n: usize) -> Result<Vec<DVector<f64>>> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .flexible(true)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(i + 1),
            message: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(i + 1);
        if rec.iter().all(|c| c.is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(v) => {
                if v.len() != n {
                    return Err(Error::Parse {
                        line,
                        message: format!("expected {n} weights, found {}", v.len()),
                    });
                }
                out.push(DVector::from_vec(v));
            }
            // a non-numeric first row is a header
            Err(_) if out.is_empty() && i == 0 => continue,
            Err(e) => {
                return Err(Error::Parse {
                    line,
                    message: format!("invalid weight: {e}"),
                })
            }
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData("portfolio file contains no weight rows".into()));
    }
    Ok(out)
}

fn cmd_compare(
    model: &Path,
    portfolios: &Path,
    betas: &[f64],
    measure: CompareMeasureArg,
    approx: Approx,
    f: Factorization,
) -> Result<()> {
    let model = load_model(model)?.model;
    for &b in betas {
        nmvm_core::risk::check_beta(b)?;
    }
    let engine = engine(&model, f, MMode::WithLocation)?;
    let rows = read_portfolios(portfolios, model.dim())?;
    let measures: &[Measure] = match measure {
        CompareMeasureArg::Var => &[Measure::Var],
        CompareMeasureArg::Cvar => &[Measure::Cvar],
        CompareMeasureArg::Both => &[Measure::Var, Measure::Cvar],
    };
    let approx_label = match approx.method {
        MethodArg::Exact => "exact",
        MethodArg::TwoPoint => "two-point",
        MethodArg::Piecewise => "piecewise",
        MethodArg::Mc => "mc",
    };
    let n = model.dim();
    let mut w = csv_writer(None)?;
    let mut header = vec!["portfolio".to_string()];
    header.extend((1..=n).map(|i| format!("w{i}")));
    header.extend(
        ["measure", "beta", "exact", "approx", "approx_method", "abs_gap", "error"]
            .iter()
            .map(|s| s.to_string()),
    );
    write_row(&mut w, &header)?;
    for (k, wts) in rows.iter().enumerate() {
        for &m in measures {
            for &beta in betas {
                let exact = engine.exact_weights(wts, m, beta);
                let appr = approx.evaluate(&engine, &model, wts, m, beta);
                let ex = exact.as_ref().ok().map(|r| r.value);
                let ap = appr.as_ref().ok().map(|r| r.value);
                let gap = ex.zip(ap).map(|(a, b)| (a - b).abs());
                let err: Vec<String> = [exact.err(), appr.err()].into_iter().flatten().map(|e| e.to_string()).collect();
                let mut row = vec![(k + 1).to_string()];
                row.extend(wts.iter().map(|x| x.to_string()));
                row.extend([
                    m.label().to_string(),
                    beta.to_string(),
                    fmt_opt(ex),
                    fmt_opt(ap),
                    approx_label.to_string(),
                    fmt_opt(gap),
                    err.join("; "),
                ]);
                write_row(&mut w, &row)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
