//! Text-based measure of news novelty and the return tests built on it.
//!
//! The library trains a small LSTM language model on rolling windows of news articles, scores
//! each month's articles by per-word cross-entropy, aggregates to a monthly series, and runs the
//! time-series and cross-sectional asset-pricing tests used to study that series.

pub mod corpus;
pub mod econ;
pub mod embeddings;
pub mod entropy;
pub mod error;
pub mod lstm;
pub mod month;
pub mod pipeline;
pub mod report;
pub mod synthetic;

pub use error::{Error, Result};
pub use month::Month;
