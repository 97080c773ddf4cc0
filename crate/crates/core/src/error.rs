use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{what} out of domain: {value}")]
    Domain { what: &'static str, value: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "quadrature did not converge after {subdivisions} subdivisions \
         (estimate {estimate:e}, error bound {error_bound:e})"
    )]
    QuadratureNonConvergence {
        estimate: f64,
        error_bound: f64,
        subdivisions: usize,
    },

    #[error("no sign change on [{lo}, {hi}]: f(lo) = {f_lo:e}, f(hi) = {f_hi:e}")]
    NoSignChange { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("root finder did not converge after {iterations} iterations (best {best})")]
    RootNonConvergence { best: f64, iterations: usize },

    #[error("could not bracket the quantile after {doublings} doublings (last window [{lo}, {hi}])")]
    BracketExpansion { lo: f64, hi: f64, doublings: usize },

    #[error("minimizer did not converge: {0}")]
    MinimizerNonConvergence(String),

    #[error("moment of order {order} does not exist for {law}")]
    NonexistentMoment { order: u32, law: String },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("matrix is ill-conditioned (condition number {condition:e})")]
    IllConditioned { condition: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("constraint vectors are linearly dependent (determinant {det:e})")]
    DegenerateConstraints { det: f64 },

    #[error("singular matrix: {0}")]
    SingularMatrix(String),

    #[error("infeasible problem: {0}")]
    Infeasible(String),

    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("line {line}: non-positive price {price} for asset {asset}")]
    NonPositivePrice {
        line: usize,
        asset: String,
        price: f64,
    },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("model file schema error: {0}")]
    Schema(String),

    #[error("unsupported schema version {found} (expected {expected})")]
    SchemaVersion { expected: u32, found: u32 },

    #[error("EM iteration {iteration}: Sigma update is not positive definite")]
    EmSigmaNotSpd { iteration: usize },

    #[error("EM E-step: Bessel evaluation failed for observation {observation}")]
    BesselOverflow { observation: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by malformed or out-of-range input rather than
    /// by a numerical procedure failing.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Domain { .. }
                | Error::InvalidParameter(_)
                | Error::NotPositiveDefinite { .. }
                | Error::IllConditioned { .. }
                | Error::NotSymmetric { .. }
                | Error::DimensionMismatch { .. }
                | Error::InvalidPartition(_)
                | Error::Parse { .. }
                | Error::NonPositivePrice { .. }
                | Error::InsufficientData(_)
                | Error::Schema(_)
                | Error::SchemaVersion { .. }
                | Error::Io(_)
        )
    }
}
