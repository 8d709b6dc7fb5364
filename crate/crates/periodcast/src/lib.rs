//! Long-horizon time-series forecasting with period-windowed attention,
//! plus asynchronous Bayesian hyperparameter search and a predictability
//! screen for deciding whether a dataset is worth forecasting at all.

pub mod attention;
pub mod bench;
pub mod cli;
pub mod data;
pub mod decomp;
pub mod error;
pub mod hpo;
pub mod model;
pub mod parallel;
pub mod predictability;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
