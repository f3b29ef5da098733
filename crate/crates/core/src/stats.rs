//! Accuracy bookkeeping, Kruskal-Wallis significance and outlier filtering.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

/// Two result sets differ significantly when `p` is below this level.
pub const SIGNIFICANCE_LEVEL: f64 = 0.01;
/// Tukey fence multiplier.
pub const TUKEY_K: f64 = 1.5;
/// Largest permutation count the exact test will enumerate.
pub const EXACT_LIMIT: u64 = 20_000_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StatsError {
    #[error("empty input")]
    Empty,
    #[error("need at least {needed} values, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("need at least two groups, got {0}")]
    TooFewGroups(usize),
    #[error("non-finite value in input")]
    NonFinite,
    #[error("{0} permutations exceed the exact-test limit")]
    TooManyPermutations(u64),
    #[error("class index {0} outside the confusion matrix")]
    UnknownClass(usize),
}

/// Counts of actual (row) × predicted (column) classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn new(classes: Vec<String>) -> Self {
        let k = classes.len();
        Self {
            classes,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Self {
        assert_eq!(classes.len(), counts.len(), "one row per class");
        assert!(counts.iter().all(|r| r.len() == classes.len()), "matrix must be square");
        Self { classes, counts }
    }

    pub fn from_predictions(classes: Vec<String>, actual: &[usize], predicted: &[usize]) -> Result<Self, StatsError> {
        let mut cm = Self::new(classes);
        for (&a, &p) in actual.iter().zip(predicted) {
            cm.record(a, p)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, actual: usize, predicted: usize) -> Result<(), StatsError> {
        let k = self.classes.len();
        if actual >= k {
            return Err(StatsError::UnknownClass(actual));
        }
        if predicted >= k {
            return Err(StatsError::UnknownClass(predicted));
        }
        self.counts[actual][predicted] += 1;
        Ok(())
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> u64 {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Trace over total.
    pub fn accuracy(&self) -> Result<f64, StatsError> {
        let total = self.total();
        if total == 0 {
            return Err(StatsError::Empty);
        }
        Ok(self.correct() as f64 / total as f64)
    }

    /// Fraction of actual class `c` predicted as `c`.
    pub fn recall(&self, c: usize) -> Option<f64> {
        let row: u64 = self.counts.get(c)?.iter().sum();
        (row > 0).then(|| self.counts[c][c] as f64 / row as f64)
    }
}

/// Free-function form of [`ConfusionMatrix::accuracy`].
pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64, StatsError> {
    cm.accuracy()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceVerdict {
    pub h: f64,
    pub p_value: f64,
    pub significant: bool,
    pub medians: Vec<f64>,
}

/// Midranks (1-based) of `values`, ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        // positions i..j (0-based) share rank mean of (i+1)..=j
        let rank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = rank;
        }
        i = j;
    }
    ranks
}

fn validate_groups<T: AsRef<[f64]>>(groups: &[T]) -> Result<(), StatsError> {
    if groups.len() < 2 {
        return Err(StatsError::TooFewGroups(groups.len()));
    }
    if groups.iter().any(|g| g.as_ref().is_empty()) {
        return Err(StatsError::Empty);
    }
    if groups.iter().flat_map(|g| g.as_ref()).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let n: usize = groups.iter().map(|g| g.as_ref().len()).sum();
    if n < 3 {
        return Err(StatsError::TooFew { needed: 3, got: n });
    }
    Ok(())
}

/// Tie-corrected H from pooled midranks split into consecutive groups.
fn h_from_ranks(ranks: &[f64], sizes: &[usize], tie_term: f64) -> f64 {
    let n = ranks.len() as f64;
    let mut offset = 0;
    let mut sum = 0.0;
    for &size in sizes {
        let r: f64 = ranks[offset..offset + size].iter().sum();
        sum += r * r / size as f64;
        offset += size;
    }
    let h = 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
    let correction = 1.0 - tie_term / (n * n * n - n);
    if correction <= 0.0 {
        0.0
    } else {
        (h / correction).max(0.0)
    }
}

fn tie_term(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t * t * t - t;
        i = j;
    }
    total
}

fn pooled<T: AsRef<[f64]>>(groups: &[T]) -> (Vec<f64>, Vec<usize>) {
    let values: Vec<f64> = groups.iter().flat_map(|g| g.as_ref().iter().copied()).collect();
    let sizes = groups.iter().map(|g| g.as_ref().len()).collect();
    (values, sizes)
}

/// Kruskal-Wallis H test with midranks and tie correction; `p` is the
/// chi-square upper tail with `groups − 1` degrees of freedom. When every
/// value is identical the result is `H = 0, p = 1`.
pub fn kruskal_wallis<T: AsRef<[f64]>>(groups: &[T]) -> Result<SignificanceVerdict, StatsError> {
    validate_groups(groups)?;
    let (values, sizes) = pooled(groups);
    let medians = groups
        .iter()
        .map(|g| median(g.as_ref()))
        .collect::<Result<Vec<_>, _>>()?;
    let all_tied = values.iter().all(|&v| v == values[0]);
    let (h, p_value) = if all_tied {
        (0.0, 1.0)
    } else {
        let h = h_from_ranks(&midranks(&values), &sizes, tie_term(&values));
        let chi = ChiSquared::new((groups.len() - 1) as f64).expect("positive degrees of freedom");
        (h, chi.sf(h).clamp(0.0, 1.0))
    };
    Ok(SignificanceVerdict {
        h,
        p_value,
        significant: p_value < SIGNIFICANCE_LEVEL,
        medians,
    })
}

/// Exact permutation p-value of the Kruskal-Wallis H statistic: the share of
/// all distinct assignments of the pooled values to groups of the observed
/// sizes whose H is at least the observed one.
pub fn kruskal_wallis_exact<T: AsRef<[f64]>>(groups: &[T]) -> Result<f64, StatsError> {
    validate_groups(groups)?;
    let (values, sizes) = pooled(groups);
    if values.iter().all(|&v| v == values[0]) {
        return Ok(1.0);
    }
    let count = multinomial(&sizes);
    if count > EXACT_LIMIT {
        return Err(StatsError::TooManyPermutations(count));
    }
    let ranks = midranks(&values);
    let ties = tie_term(&values);
    let observed = h_from_ranks(&ranks, &sizes, ties);
    let tolerance = 1e-9 * observed.max(1.0);

    let mut remaining = sizes.clone();
    let mut rank_sums = vec![0.0; sizes.len()];
    let mut hits = 0u64;
    let mut total = 0u64;
    enumerate_assignments(&ranks, 0, &mut remaining, &mut rank_sums, &mut |sums| {
        total += 1;
        if h_from_sums(sums, &sizes, ranks.len(), ties) >= observed - tolerance {
            hits += 1;
        }
    });
    Ok(hits as f64 / total as f64)
}

fn h_from_sums(sums: &[f64], sizes: &[usize], n: usize, ties: f64) -> f64 {
    let n = n as f64;
    let s: f64 = sums.iter().zip(sizes).map(|(r, &m)| r * r / m as f64).sum();
    let h = 12.0 / (n * (n + 1.0)) * s - 3.0 * (n + 1.0);
    let correction = 1.0 - ties / (n * n * n - n);
    if correction <= 0.0 {
        0.0
    } else {
        (h / correction).max(0.0)
    }
}

fn enumerate_assignments(
    ranks: &[f64],
    at: usize,
    remaining: &mut [usize],
    sums: &mut [f64],
    visit: &mut dyn FnMut(&[f64]),
) {
    if at == ranks.len() {
        visit(sums);
        return;
    }
    for g in 0..remaining.len() {
        if remaining[g] == 0 {
            continue;
        }
        remaining[g] -= 1;
        sums[g] += ranks[at];
        enumerate_assignments(ranks, at + 1, remaining, sums, visit);
        sums[g] -= ranks[at];
        remaining[g] += 1;
    }
}

fn multinomial(sizes: &[usize]) -> u64 {
    let mut acc: u128 = 1;
    let mut n = 0u128;
    for &s in sizes {
        for i in 1..=s as u128 {
            n += 1;
            acc = acc * n / i;
            if acc > u64::MAX as u128 {
                return u64::MAX;
            }
        }
    }
    acc as u64
}

/// Quantile by linear interpolation between order statistics
/// (position `q · (n − 1)` in the sorted sample).
pub fn quantile(values: &[f64], q: f64) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(quantile_sorted(&sorted, q))
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// Tukey's fences `[Q1 − 1.5·IQR, Q3 + 1.5·IQR]`.
pub fn tukey_fences(values: &[f64]) -> Result<(f64, f64), StatsError> {
    if values.len() < 4 {
        return Err(StatsError::TooFew {
            needed: 4,
            got: values.len(),
        });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q1 = quantile_sorted(&sorted, 0.25);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    Ok((q1 - TUKEY_K * iqr, q3 + TUKEY_K * iqr))
}

/// Drops values outside Tukey's fences, keeping survivor order.
///
/// Fences are recomputed on the survivors until nothing more is removed
/// (or fewer than four values remain), so the filter is idempotent.
pub fn tukey_filter(values: &[f64]) -> Result<Vec<f64>, StatsError> {
    let mut kept = values.to_vec();
    let (mut lo, mut hi) = tukey_fences(&kept)?;
    loop {
        let next: Vec<f64> = kept.iter().copied().filter(|v| (lo..=hi).contains(v)).collect();
        if next.len() == kept.len() || next.len() < 4 {
            return Ok(next);
        }
        kept = next;
        (lo, hi) = tukey_fences(&kept)?;
    }
}

pub fn median(values: &[f64]) -> Result<f64, StatsError> {
    if values.is_empty() {
        return Err(StatsError::Empty);
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    })
}
