//! Synthetic labeled fixtures: Gaussian class clusters.
//!
//! Used by tests, benchmarks and demos in place of real imagery samples.

use rand_distr::{Distribution, Normal};

use super::{default_feature_names, Dataset};
use crate::rng::seeded;

#[derive(Debug, Clone)]
pub struct GaussianClass {
    pub label: String,
    pub count: usize,
    pub mean: Vec<f64>,
    pub std_dev: Vec<f64>,
}

/// Independent normal features per class; rows are grouped by class in the
/// order given.
pub fn gaussian(tag: &str, classes: &[GaussianClass], seed: u64) -> Dataset {
    let k = classes.first().map_or(0, |c| c.mean.len());
    let mut rng = seeded(seed);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for class in classes {
        assert_eq!(class.mean.len(), k, "class means must share arity");
        assert_eq!(class.std_dev.len(), k, "class spreads must share arity");
        let dists: Vec<Normal<f64>> = class
            .mean
            .iter()
            .zip(&class.std_dev)
            .map(|(&m, &s)| Normal::new(m, s).expect("finite positive spread"))
            .collect();
        for _ in 0..class.count {
            rows.push(dists.iter().map(|d| d.sample(&mut rng)).collect::<Vec<f64>>());
            labels.push(class.label.clone());
        }
    }
    let columns = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
    Dataset::new(
        default_feature_names(k),
        columns,
        &labels,
        vec![tag.to_string(); labels.len()],
    )
    .expect("synthetic data is well formed")
}

/// Two unit-variance blobs whose centroids are `separation` standard
/// deviations apart (Euclidean), classes `"0"` and `"1"`.
pub fn blobs(n0: usize, n1: usize, arity: usize, separation: f64, tag: &str, seed: u64) -> Dataset {
    let shift = separation / (arity as f64).sqrt();
    gaussian(
        tag,
        &[
            GaussianClass {
                label: "0".into(),
                count: n0,
                mean: vec![0.0; arity],
                std_dev: vec![1.0; arity],
            },
            GaussianClass {
                label: "1".into(),
                count: n1,
                mean: vec![shift; arity],
                std_dev: vec![1.0; arity],
            },
        ],
        seed,
    )
}

/// Row counts (non-burnt, burnt) of the three seven-band sources B, C, M.
pub const BURNT_AREA_COUNTS: [(&str, usize, usize); 3] = [("B", 2826, 2046), ("C", 1972, 877), ("M", 2309, 1573)];

const UNBURNT_MEAN: [f64; 7] = [0.30, 0.28, 0.26, 0.30, 0.35, 0.30, 0.25];
const BURNT_MEAN: [f64; 7] = [0.12, 0.12, 0.14, 0.16, 0.18, 0.22, 0.20];
/// Per-source shift of the burnt cluster; C and M burnt clusters sit more
/// than five burnt standard deviations apart on every band.
const BURNT_OFFSET: [f64; 3] = [0.0, -0.05, 0.06];

/// Seven-feature, two-class sources shaped like the B/C/M burnt-area
/// samples: sizes 4872/2849/3882 and burnt fractions near 42/31/41%.
/// Class `"1"` is burnt: compact and shifted per source.
pub fn burnt_area_sources(seed: u64) -> Vec<Dataset> {
    BURNT_AREA_COUNTS
        .iter()
        .zip(BURNT_OFFSET)
        .enumerate()
        .map(|(i, (&(tag, unburnt, burnt), offset))| {
            gaussian(
                tag,
                &[
                    GaussianClass {
                        label: "0".into(),
                        count: unburnt,
                        mean: UNBURNT_MEAN.to_vec(),
                        std_dev: vec![0.05; 7],
                    },
                    GaussianClass {
                        label: "1".into(),
                        count: burnt,
                        mean: BURNT_MEAN.iter().map(|m| m + offset).collect(),
                        std_dev: vec![0.02; 7],
                    },
                ],
                crate::rng::derive_seed(seed, &[i as u64]),
            )
        })
        .collect()
}
