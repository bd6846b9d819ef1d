//! Neural knowledge-graph learning: embedding-based score functions trained by
//! weighted empirical risk minimization, synthetic benchmark generators,
//! evaluation metrics and capacity-bound calculators.

pub mod bounds;
pub mod config;
pub mod error;
pub mod experiment;
pub mod io;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod report;
pub mod seed;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use model::{EmbeddingTable, OutputTransform, ScoreGradients, ScoreModel, Triple};
