use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::tree::{check_train, Grower, TreeNode};
use super::BaselineError;
use crate::dataset::Dataset;
use crate::rng::{derive_seed, seeded};

pub const DEFAULT_TREES: usize = 100;
pub const DEFAULT_FOREST_DEPTH: usize = 6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    /// Features tried per split; `None` means `floor(sqrt(k))`.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: DEFAULT_TREES,
            max_depth: Some(DEFAULT_FOREST_DEPTH),
            max_features: None,
            bootstrap: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub classes: Vec<String>,
    pub arity: usize,
    pub max_depth: Option<usize>,
    pub max_features: usize,
    pub tree_seeds: Vec<u64>,
    pub trees: Vec<TreeNode>,
}

impl ForestModel {
    /// Majority vote; ties go to the earlier class.
    pub fn predict(&self, row: &[f64]) -> Result<usize, BaselineError> {
        if row.len() != self.arity {
            return Err(BaselineError::ArityMismatch {
                expected: self.arity,
                found: row.len(),
            });
        }
        let mut votes = vec![0usize; self.classes.len()];
        for t in &self.trees {
            votes[t.predict(row)] += 1;
        }
        let mut best = 0;
        for (i, &v) in votes.iter().enumerate() {
            if v > votes[best] {
                best = i;
            }
        }
        Ok(best)
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>, BaselineError> {
        data.rows().map(|r| self.predict(&r)).collect()
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64, BaselineError> {
        let truth = data.labels_against(&self.classes)?;
        let pred = self.predict_dataset(data)?;
        Ok(crate::mdclass::fraction_equal(&truth, &pred))
    }
}

/// Bagged CART trees. Tree `t` draws its bootstrap sample and split
/// features from the stream seeded by `derive_seed(seed, [t])`, so trees
/// can be grown in parallel without changing the result.
pub fn rf_fit(train: &Dataset, config: &ForestConfig, seed: u64) -> Result<ForestModel, BaselineError> {
    check_train(train)?;
    if config.n_trees == 0 {
        return Err(BaselineError::NoTrees);
    }
    let k = train.arity();
    let max_features = config
        .max_features
        .unwrap_or_else(|| (k as f64).sqrt().floor() as usize)
        .clamp(1, k.max(1));
    let n = train.n_rows();
    let tree_seeds: Vec<u64> = (0..config.n_trees as u64).map(|t| derive_seed(seed, &[t])).collect();
    let trees = tree_seeds
        .par_iter()
        .map(|&s| {
            let mut rng = seeded(s);
            let rows: Vec<usize> = if config.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            let mut grower = Grower {
                columns: train.columns(),
                labels: train.labels(),
                n_classes: train.classes().len(),
                max_depth: config.max_depth,
                max_features: Some(max_features),
                rng: Some(&mut rng),
            };
            grower.grow(&rows, 0)
        })
        .collect();
    Ok(ForestModel {
        classes: train.classes().to_vec(),
        arity: k,
        max_depth: config.max_depth,
        max_features,
        tree_seeds,
        trees,
    })
}

pub fn rf_predict(model: &ForestModel, row: &[f64]) -> Result<usize, BaselineError> {
    model.predict(row)
}
