//! Reference classifiers: a CART decision tree (Gini impurity) and a bagged
//! random forest built from the same tree learner.

mod forest;
mod tree;

use thiserror::Error;

use crate::dataset::DatasetError;

pub use forest::{rf_fit, rf_predict, ForestConfig, ForestModel, DEFAULT_FOREST_DEPTH, DEFAULT_TREES};
pub use tree::{dt_fit, gini, DecisionTree, TreeNode};

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("empty training set")]
    Empty,
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("row has {found} features, model expects {expected}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("forest needs at least one tree")]
    NoTrees,
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}
