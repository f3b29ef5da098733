use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::BaselineError;
use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TreeNode {
    Leaf {
        /// Training rows per class reaching this leaf.
        distribution: Vec<usize>,
        class: usize,
    },
    Split {
        feature: usize,
        threshold: f64,
        /// Rows with `value <= threshold`.
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> usize {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { class, .. } => return *class,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    node = if row[*feature] <= *threshold { left } else { right };
                }
            }
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    pub fn leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Split { left, right, .. } => left.leaves() + right.leaves(),
        }
    }

    /// Class counts of all training rows under this node.
    pub fn distribution(&self) -> Vec<usize> {
        match self {
            TreeNode::Leaf { distribution, .. } => distribution.clone(),
            TreeNode::Split { left, right, .. } => left
                .distribution()
                .iter()
                .zip(right.distribution())
                .map(|(a, b)| a + b)
                .collect(),
        }
    }
}

/// Gini impurity `1 − Σ pᵢ²` of class counts.
pub fn gini(counts: &[usize]) -> f64 {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

fn majority(counts: &[usize]) -> usize {
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best
}

/// Growth limits and per-split feature sampling.
pub(crate) struct Grower<'a, R: Rng> {
    pub columns: &'a [Vec<f64>],
    pub labels: &'a [usize],
    pub n_classes: usize,
    pub max_depth: Option<usize>,
    /// `Some(m)`: consider `m` random features at each split.
    pub max_features: Option<usize>,
    pub rng: Option<&'a mut R>,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl<R: Rng> Grower<'_, R> {
    pub fn grow(&mut self, rows: &[usize], depth: usize) -> TreeNode {
        let mut counts = vec![0; self.n_classes];
        for &r in rows {
            counts[self.labels[r]] += 1;
        }
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let capped = self.max_depth.is_some_and(|m| depth >= m);
        if pure || capped {
            return leaf(counts);
        }
        let Some(best) = self.best_split(rows, &counts) else {
            return leaf(counts);
        };
        let (left, right): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| self.columns[best.feature][r] <= best.threshold);
        TreeNode::Split {
            feature: best.feature,
            threshold: best.threshold,
            left: Box::new(self.grow(&left, depth + 1)),
            right: Box::new(self.grow(&right, depth + 1)),
        }
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let k = self.columns.len();
        match (self.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < k => {
                let mut f = index::sample(rng, k, m).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..k).collect(),
        }
    }

    /// Highest Gini decrease; ties go to the lower feature index, then the
    /// lower threshold. Returns `None` when no two rows differ on any
    /// candidate feature.
    fn best_split(&mut self, rows: &[usize], counts: &[usize]) -> Option<BestSplit> {
        let parent = gini(counts);
        let n = rows.len() as f64;
        let mut best: Option<BestSplit> = None;
        let mut sorted = rows.to_vec();
        for feature in self.candidate_features() {
            let col = &self.columns[feature];
            sorted.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left = vec![0; self.n_classes];
            let mut right = counts.to_vec();
            for i in 0..sorted.len() - 1 {
                let l = self.labels[sorted[i]];
                left[l] += 1;
                right[l] -= 1;
                let (a, b) = (col[sorted[i]], col[sorted[i + 1]]);
                if a == b {
                    continue;
                }
                let nl = (i + 1) as f64;
                let weighted = (nl * gini(&left) + (n - nl) * gini(&right)) / n;
                let gain = parent - weighted;
                if best.as_ref().is_none_or(|bs| gain > bs.gain) {
                    let mut threshold = a + (b - a) / 2.0;
                    if threshold >= b {
                        threshold = a;
                    }
                    best = Some(BestSplit {
                        feature,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best
    }
}

fn leaf(distribution: Vec<usize>) -> TreeNode {
    let class = majority(&distribution);
    TreeNode::Leaf { distribution, class }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub classes: Vec<String>,
    pub arity: usize,
    pub max_depth: Option<usize>,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn predict(&self, row: &[f64]) -> Result<usize, BaselineError> {
        if row.len() != self.arity {
            return Err(BaselineError::ArityMismatch {
                expected: self.arity,
                found: row.len(),
            });
        }
        Ok(self.root.predict(row))
    }

    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>, BaselineError> {
        if data.arity() != self.arity {
            return Err(BaselineError::ArityMismatch {
                expected: self.arity,
                found: data.arity(),
            });
        }
        Ok(data.rows().map(|r| self.root.predict(&r)).collect())
    }

    pub fn accuracy(&self, data: &Dataset) -> Result<f64, BaselineError> {
        let truth = data.labels_against(&self.classes)?;
        let pred = self.predict_dataset(data)?;
        Ok(crate::mdclass::fraction_equal(&truth, &pred))
    }
}

pub(crate) fn check_train(train: &Dataset) -> Result<(), BaselineError> {
    if train.is_empty() {
        return Err(BaselineError::Empty);
    }
    let present = train.present_classes();
    if present < 2 {
        return Err(BaselineError::TooFewClasses(present));
    }
    Ok(())
}

/// Greedy CART tree on all features. `max_depth = None` grows until leaves
/// are pure or no split separates any rows.
pub fn dt_fit(train: &Dataset, max_depth: Option<usize>) -> Result<DecisionTree, BaselineError> {
    check_train(train)?;
    let rows: Vec<usize> = (0..train.n_rows()).collect();
    let mut grower: Grower<'_, rand_chacha::ChaCha8Rng> = Grower {
        columns: train.columns(),
        labels: train.labels(),
        n_classes: train.classes().len(),
        max_depth,
        max_features: None,
        rng: None,
    };
    Ok(DecisionTree {
        classes: train.classes().to_vec(),
        arity: train.arity(),
        max_depth,
        root: grower.grow(&rows, 0),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth;
    use proptest::prelude::*;

    fn one_d(values: &[(f64, &str)]) -> Dataset {
        let rows: Vec<Vec<f64>> = values.iter().map(|v| vec![v.0]).collect();
        let labels: Vec<String> = values.iter().map(|v| v.1.to_string()).collect();
        Dataset::from_rows(&rows, &labels, vec!["T".into(); values.len()]).unwrap()
    }

    #[test]
    fn single_threshold_between_groups() {
        let ds = one_d(&[(0.0, "A"), (1.0, "A"), (10.0, "B"), (11.0, "B")]);
        let t = dt_fit(&ds, None).unwrap();
        match &t.root {
            TreeNode::Split {
                feature: 0,
                threshold,
                left,
                right,
            } => {
                assert!(*threshold > 1.0 && *threshold < 10.0);
                assert!(matches!(**left, TreeNode::Leaf { class: 0, .. }));
                assert!(matches!(**right, TreeNode::Leaf { class: 1, .. }));
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(t.accuracy(&ds).unwrap(), 1.0);
    }

    #[test]
    fn pure_subset_is_a_leaf() {
        let ds = one_d(&[(0.0, "A"), (1.0, "A"), (10.0, "B")]);
        let rows = [0usize, 1];
        let mut g: Grower<'_, rand_chacha::ChaCha8Rng> = Grower {
            columns: ds.columns(),
            labels: ds.labels(),
            n_classes: 2,
            max_depth: None,
            max_features: None,
            rng: None,
        };
        assert_eq!(
            g.grow(&rows, 0),
            TreeNode::Leaf {
                distribution: vec![2, 0],
                class: 0
            }
        );
    }

    #[test]
    fn zero_gain_xor_is_still_split() {
        // Every single axis split leaves both sides half/half.
        let rows = vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]];
        let labels: Vec<String> = ["a", "a", "b", "b"].iter().map(|s| s.to_string()).collect();
        let ds = Dataset::from_rows(&rows, &labels, vec!["T".into(); 4]).unwrap();
        assert_eq!(dt_fit(&ds, None).unwrap().accuracy(&ds).unwrap(), 1.0);
    }

    #[test]
    fn depth_cap() {
        let ds = synth::blobs(200, 200, 3, 1.0, "T", 3);
        for cap in [0, 1, 3] {
            let t = dt_fit(&ds, Some(cap)).unwrap();
            assert!(t.root.depth() <= cap);
        }
        let unbounded = dt_fit(&ds, None).unwrap();
        assert!(unbounded.root.depth() > 3);
    }

    #[test]
    fn errors() {
        let ds = one_d(&[(0.0, "A"), (1.0, "A")]);
        assert!(matches!(dt_fit(&ds, None), Err(BaselineError::TooFewClasses(1))));
        let t = dt_fit(&one_d(&[(0.0, "A"), (1.0, "B")]), None).unwrap();
        assert!(t.predict(&[1.0, 2.0]).is_err());
    }

    fn check_splits(node: &TreeNode, columns: &[Vec<f64>], labels: &[usize], rows: &[usize], n_classes: usize) {
        if let TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        } = node
        {
            let count = |rs: &[usize]| {
                let mut c = vec![0; n_classes];
                for &r in rs {
                    c[labels[r]] += 1;
                }
                c
            };
            let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| columns[*feature][i] <= *threshold);
            assert!(!l.is_empty() && !r.is_empty());
            let n = rows.len() as f64;
            let weighted = (l.len() as f64 * gini(&count(&l)) + r.len() as f64 * gini(&count(&r))) / n;
            assert!(weighted < gini(&count(rows)), "split did not reduce impurity");
            check_splits(left, columns, labels, &l, n_classes);
            check_splits(right, columns, labels, &r, n_classes);
        }
    }

    proptest! {
        #[test]
        fn consistent_data_is_fit_exactly_and_splits_reduce_impurity(
            pts in prop::collection::btree_map((0i32..50, 0i32..50), 0usize..3, 3..60)
        ) {
            let rows: Vec<Vec<f64>> = pts.keys().map(|&(a, b)| vec![a as f64, b as f64]).collect();
            let labels: Vec<String> = pts.values().map(|c| c.to_string()).collect();
            let ds = Dataset::from_rows(&rows, &labels, vec!["T".into(); rows.len()]).unwrap();
            prop_assume!(ds.present_classes() >= 2);
            let t = dt_fit(&ds, None).unwrap();
            prop_assert_eq!(t.accuracy(&ds).unwrap(), 1.0);
            // continuous data never produces zero-gain splits
            let cont = synth::blobs(40, 40, 2, 1.0, "T", rows.len() as u64);
            let tc = dt_fit(&cont, None).unwrap();
            let all: Vec<usize> = (0..cont.n_rows()).collect();
            check_splits(&tc.root, cont.columns(), cont.labels(), &all, 2);
        }
    }
}
