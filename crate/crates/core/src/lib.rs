pub mod error;
pub mod fit;
pub mod mathkit;
pub mod mixing;
pub mod nmvm;
pub mod optimize;
pub mod risk;

pub use error::{Error, Result};
