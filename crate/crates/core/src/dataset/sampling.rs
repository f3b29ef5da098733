use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_compatible, Dataset, DatasetError};

pub const DEFAULT_TRAIN_SIZE: usize = 2000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_size: usize,
    pub seed: u64,
}

impl SplitSpec {
    pub fn new(train_size: usize, seed: u64) -> Self {
        Self { train_size, seed }
    }

    fn validate(&self, dataset: &Dataset) -> Result<(), DatasetError> {
        let n = dataset.n_rows();
        if self.train_size >= n {
            return Err(DatasetError::InvalidSplit(format!(
                "training size {} must be smaller than the {n} available rows",
                self.train_size
            )));
        }
        let classes = dataset.present_classes();
        if self.train_size < 2 * classes {
            return Err(DatasetError::InvalidSplit(format!(
                "training size {} is below twice the class count {classes}",
                self.train_size
            )));
        }
        Ok(())
    }
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_size: DEFAULT_TRAIN_SIZE,
            seed: 0,
        }
    }
}

/// Apportions `total` across `weights` by the largest-remainder method.
///
/// Each share is `floor(total * w / W)`; the leftover units go to the largest
/// fractional parts, ties to the earlier entry. Exact integer arithmetic.
pub fn largest_remainder(total: usize, weights: &[usize]) -> Vec<usize> {
    let sum: u128 = weights.iter().map(|&w| w as u128).sum();
    if sum == 0 {
        return vec![0; weights.len()];
    }
    let t = total as u128;
    let mut shares: Vec<usize> = weights.iter().map(|&w| (t * w as u128 / sum) as usize).collect();
    let mut order: Vec<(u128, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| (t * w as u128 % sum, i))
        .collect();
    // larger remainder first, then lower index
    order.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    let assigned: usize = shares.iter().sum();
    for &(_, i) in order.iter().take(total - assigned) {
        shares[i] += 1;
    }
    shares
}

/// Draws `count` row indices without replacement, with per-class quotas
/// proportional to class frequency. Returned indices are ascending.
pub fn stratified_indices<R: Rng + ?Sized>(
    dataset: &Dataset,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>, DatasetError> {
    if count > dataset.n_rows() {
        return Err(DatasetError::InvalidSplit(format!(
            "cannot draw {count} rows from {}",
            dataset.n_rows()
        )));
    }
    let counts = dataset.class_counts();
    let quotas = largest_remainder(count, &counts);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); counts.len()];
    for (i, &l) in dataset.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut picked = Vec::with_capacity(count);
    for (members, &quota) in by_class.iter().zip(&quotas) {
        picked.extend(index::sample(rng, members.len(), quota).into_iter().map(|j| members[j]));
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Training and test row indices for a stratified split.
pub fn split_indices(dataset: &Dataset, spec: &SplitSpec) -> Result<(Vec<usize>, Vec<usize>), DatasetError> {
    spec.validate(dataset)?;
    let mut rng = crate::rng::seeded(spec.seed);
    let train = stratified_indices(dataset, spec.train_size, &mut rng)?;
    let test = complement_indices(dataset.n_rows(), &train);
    Ok((train, test))
}

/// Stratified train/test split; the test set is every remaining row.
pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset), DatasetError> {
    let (train, test) = split_indices(dataset, spec)?;
    Ok((dataset.select(&train), dataset.select(&test)))
}

pub(crate) fn complement_indices(n: usize, picked: &[usize]) -> Vec<usize> {
    let mut keep = vec![true; n];
    for &i in picked {
        keep[i] = false;
    }
    (0..n).filter(|&i| keep[i]).collect()
}

/// Per-source row indices for a proportional mix of `total` rows.
///
/// Each source contributes a largest-remainder share proportional to its
/// size, drawn with class stratification inside the source.
pub fn mix_indices<R: Rng + ?Sized>(
    sources: &[Dataset],
    total: usize,
    rng: &mut R,
) -> Result<Vec<Vec<usize>>, DatasetError> {
    if sources.is_empty() {
        return Err(DatasetError::Empty);
    }
    check_compatible(sources)?;
    let sizes: Vec<usize> = sources.iter().map(Dataset::n_rows).collect();
    let quotas = largest_remainder(total, &sizes);
    for (source_index, (&quota, &available)) in quotas.iter().zip(&sizes).enumerate() {
        if quota > available {
            return Err(DatasetError::QuotaExceeded {
                source_index,
                quota,
                available,
            });
        }
    }
    if total > sizes.iter().sum() {
        return Err(DatasetError::InvalidSplit(format!(
            "requested {total} rows exceeds all sources"
        )));
    }
    sources
        .iter()
        .zip(&quotas)
        .map(|(ds, &q)| stratified_indices(ds, q, rng))
        .collect()
}

/// Proportional, class-stratified mix of several sources. Provenance is kept.
pub fn mix<R: Rng + ?Sized>(sources: &[Dataset], total: usize, rng: &mut R) -> Result<Dataset, DatasetError> {
    let picks = mix_indices(sources, total, rng)?;
    let parts: Vec<Dataset> = sources.iter().zip(&picks).map(|(ds, idx)| ds.select(idx)).collect();
    Dataset::concat(&parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth;
    use crate::rng::seeded;
    use proptest::prelude::*;

    /// Independent oracle: exact rational shares, then hand-ordered remainders.
    fn proportional_oracle(total: usize, weights: &[usize]) -> Vec<usize> {
        let sum: usize = weights.iter().sum();
        let exact: Vec<f64> = weights.iter().map(|&w| total as f64 * w as f64 / sum as f64).collect();
        let mut out: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
        let mut left = total - out.iter().sum::<usize>();
        let mut idx: Vec<usize> = (0..weights.len()).collect();
        idx.sort_by(|&a, &b| {
            let fa = exact[a] - exact[a].floor();
            let fb = exact[b] - exact[b].floor();
            fb.partial_cmp(&fa).unwrap().then(a.cmp(&b))
        });
        for i in idx {
            if left == 0 {
                break;
            }
            out[i] += 1;
            left -= 1;
        }
        out
    }

    #[test]
    fn published_mix_shares() {
        assert_eq!(largest_remainder(2000, &[4872, 3882]), vec![1113, 887]);
        assert_eq!(proportional_oracle(2000, &[4872, 2849]), vec![1262, 738]);
        assert_eq!(largest_remainder(2000, &[4872, 2849]), vec![1262, 738]);
        assert_eq!(largest_remainder(2000, &[4872, 2849, 3882]).iter().sum::<usize>(), 2000);
    }

    #[test]
    fn remainder_ties_go_to_earlier_entry() {
        assert_eq!(largest_remainder(1, &[1, 1]), vec![1, 0]);
        assert_eq!(largest_remainder(3, &[1, 1, 1, 1]), vec![1, 1, 1, 0]);
    }

    #[test]
    fn mix_of_table_sizes() {
        let sources = synth::burnt_area_sources(5);
        let mut rng = seeded(9);
        let b_m = [sources[0].clone(), sources[2].clone()];
        let picks = mix_indices(&b_m, 2000, &mut rng).unwrap();
        assert_eq!(picks.iter().map(Vec::len).collect::<Vec<_>>(), vec![1113, 887]);
        let mixed = mix(&b_m, 2000, &mut seeded(9)).unwrap();
        assert_eq!(mixed.n_rows(), 2000);
        assert_eq!(mixed.provenance().iter().filter(|p| *p == "B").count(), 1113);
        let all = mix(&sources, 2000, &mut rng).unwrap();
        assert_eq!(all.n_rows(), 2000);
    }

    #[test]
    fn mix_stratifies_inside_each_source() {
        let sources = synth::burnt_area_sources(1);
        let picks = mix_indices(&sources[..2], 2000, &mut seeded(3)).unwrap();
        for (ds, idx) in sources.iter().zip(&picks) {
            let sub = ds.select(idx);
            assert_eq!(sub.class_counts(), largest_remainder(idx.len(), &ds.class_counts()));
        }
    }

    #[test]
    fn mix_errors() {
        let sources = synth::burnt_area_sources(1);
        let narrow = sources[1].project(&[crate::expr::Expr::Feature(0)]).unwrap();
        assert!(matches!(
            mix(&[sources[0].clone(), narrow], 100, &mut seeded(0)),
            Err(DatasetError::ArityMismatch { .. })
        ));
        let total: usize = sources.iter().map(Dataset::n_rows).sum();
        assert!(mix(&sources, total + 1, &mut seeded(0)).is_err());
    }

    #[test]
    fn split_counts_follow_class_frequencies() {
        // 3882 rows with 1573 in the burnt class
        let m = &synth::burnt_area_sources(2)[2];
        assert_eq!(m.class_counts(), vec![2309, 1573]);
        let (train, test) = split(m, &SplitSpec::new(2000, 11)).unwrap();
        assert_eq!(train.n_rows(), 2000);
        assert_eq!(test.n_rows(), 1882);
        // 2000 * 1573 / 3882 = 810.41..
        assert_eq!(proportional_oracle(2000, &[2309, 1573]), vec![1190, 810]);
        assert_eq!(train.class_counts(), vec![1190, 810]);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let m = &synth::burnt_area_sources(2)[2];
        let spec = SplitSpec::new(2000, 4);
        let (a, b) = split_indices(m, &spec).unwrap();
        assert_eq!((a.clone(), b.clone()), split_indices(m, &spec).unwrap());
        let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..m.n_rows()).collect::<Vec<_>>());
        assert_ne!(a, split_indices(m, &SplitSpec::new(2000, 5)).unwrap().0);
    }

    #[test]
    fn split_edge_sizes() {
        let ds = synth::blobs(1001, 1000, 2, 6.0, "T", 1);
        let (train, test) = split(&ds, &SplitSpec::new(2000, 0)).unwrap();
        assert_eq!((train.n_rows(), test.n_rows()), (2000, 1));
        assert!(split(&ds, &SplitSpec::new(2001, 0)).is_err());
        assert!(split(&ds, &SplitSpec::new(3, 0)).is_err());
    }

    proptest! {
        #[test]
        fn shares_sum_and_stay_within_one(total in 0usize..5000, weights in prop::collection::vec(1usize..10_000, 1..6)) {
            let shares = largest_remainder(total, &weights);
            prop_assert_eq!(shares.iter().sum::<usize>(), total);
            let sum: usize = weights.iter().sum();
            for (s, w) in shares.iter().zip(&weights) {
                let exact = total as f64 * *w as f64 / sum as f64;
                prop_assert!((*s as f64 - exact).abs() < 1.0);
            }
        }
    }
}
