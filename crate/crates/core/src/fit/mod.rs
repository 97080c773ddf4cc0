//! Price ingestion, summary statistics, EM fitting and model files.

pub mod data;
pub mod em;
pub mod model_file;

pub use data::{load_prices, load_prices_from_reader, summarize, AssetSummary, ReturnsMatrix};
pub use em::{
    log_likelihood, mcecm_fit, mcecm_fit_from, posterior_moments, FitConfig, FitResult, Identification, LambdaMode,
    PosteriorMoments,
};
pub use model_file::{load_model, model_from_str, model_to_string, save_model, ModelFile, SCHEMA_VERSION};
