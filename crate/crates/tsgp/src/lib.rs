//! Genetic-programming feature learning for univariate time series
//! classification.
//!
//! The crate evolves strongly typed program trees that map a raw series to a
//! fixed-length feature vector through five layers (segment detection,
//! domain transform, content-adaptive patching, feature extraction, feature
//! concatenation), scores them by per-fold cross-validation accuracy of an
//! extremely randomized trees classifier, selects parents with a Pareto
//! tournament over the fold accuracies, and accounts for the inference cost
//! (FLOPs, peak bytes) of the evolved models.

pub mod classifier;
pub mod cli;
pub mod cost;
pub mod dataset;
pub mod error;
pub mod evolution;
pub mod ops;
pub mod program;
pub(crate) mod util;

pub use error::{Error, Result};
