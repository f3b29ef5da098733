//! Multidimensional genetic programming (M3GP) for evolving classification
//! hyper-features, with a Mahalanobis nearest-centroid classifier, reference
//! tree baselines, rank statistics and an experiment harness.
//!
//! The main entry points are [`engine::evolve`] to evolve a model on a
//! [`Dataset`], [`MdModel`] to fit/apply the nearest-centroid classifier in a
//! hyper-feature space, and [`harness::run_experiment`] to run the full
//! cross-dataset protocol.

pub mod baselines;
pub mod dataset;
pub mod engine;
pub mod expr;
pub mod harness;
pub mod linalg;
pub mod mdclass;
pub mod rng;
pub mod stats;

pub use dataset::{Dataset, DatasetError, SplitSpec};
pub use engine::{EngineError, Individual, RunConfig};
pub use expr::{BinOp, Expr, ParseError};
pub use mdclass::{MdError, MdModel};
pub use stats::{ConfusionMatrix, SignificanceVerdict};
