use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::experiment::RunRecord;
use super::spec::{Features, Method};
use crate::stats::{kruskal_wallis, median};

/// Training accuracy of every run of one (features, method, combination).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainResult {
    pub features: Features,
    pub method: Method,
    pub combination: String,
    pub accuracies: Vec<f64>,
    pub median: f64,
}

/// Test accuracy of every run of one (features, method, combination, target).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub features: Features,
    pub method: Method,
    pub combination: String,
    pub target: String,
    /// Whether the target image contributed training rows (then only its
    /// held-out rows are scored).
    pub in_training: bool,
    pub accuracies: Vec<f64>,
    pub median: f64,
    /// Peer cells this one beats significantly (higher median, p < 0.01).
    pub wins: usize,
    /// One `*` per win.
    pub marker: String,
}

/// Kruskal-Wallis verdict between two cells scored on the same target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub features: Features,
    pub method: Method,
    pub target: String,
    pub in_training: bool,
    pub a: String,
    pub b: String,
    pub h: f64,
    pub p_value: f64,
    pub significant: bool,
    /// The combination with the higher median when significant.
    pub better: Option<String>,
}

/// Original versus hyper features for the same combination, target, method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperComparison {
    pub method: Method,
    pub combination: String,
    pub target: String,
    pub original_median: f64,
    pub hyper_median: f64,
    pub h: f64,
    pub p_value: f64,
    pub significant: bool,
    pub better: Option<Features>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub seed: u64,
    pub runs: usize,
    pub train_size: usize,
    pub combinations: Vec<String>,
    pub targets: Vec<String>,
    pub methods: Vec<Method>,
    pub feature_spaces: Vec<Features>,
    /// Formulas of the hyper-feature space, when one was used.
    pub hyperfeatures: Vec<String>,
    pub training: Vec<TrainResult>,
    pub cells: Vec<CellResult>,
    pub comparisons: Vec<Comparison>,
    pub hyper_vs_original: Vec<HyperComparison>,
}

struct Verdict {
    h: f64,
    p: f64,
    significant: bool,
}

/// `None` when the pooled sample is too small for the test.
fn verdict(a: &[f64], b: &[f64]) -> Option<Verdict> {
    kruskal_wallis(&[a, b]).ok().map(|v| Verdict {
        h: v.h,
        p: v.p_value,
        significant: v.significant,
    })
}

fn med(v: &[f64]) -> f64 {
    median(v).expect("at least one run")
}

pub(crate) struct ReportShape {
    pub seed: u64,
    pub runs: usize,
    pub train_size: usize,
    pub combinations: Vec<String>,
    pub targets: Vec<String>,
    pub methods: Vec<Method>,
    pub feature_spaces: Vec<Features>,
    pub hyperfeatures: Vec<String>,
}

/// Aggregates run records into medians and significance annotations.
pub(crate) fn assemble(shape: ReportShape, records: &[RunRecord]) -> ExperimentReport {
    let combo_pos = |c: &str| shape.combinations.iter().position(|x| x == c).unwrap_or(usize::MAX);
    let target_pos = |t: &str| shape.targets.iter().position(|x| x == t).unwrap_or(usize::MAX);

    let mut train: BTreeMap<(Features, Method, usize), Vec<f64>> = BTreeMap::new();
    type CellKey = (Features, Method, usize, usize);
    let mut test: BTreeMap<CellKey, (bool, Vec<f64>)> = BTreeMap::new();
    let mut sorted: Vec<&RunRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.run);
    for r in sorted {
        train
            .entry((r.features, r.method, combo_pos(&r.combination)))
            .or_default()
            .push(r.train_accuracy);
        for t in &r.tests {
            test.entry((r.features, r.method, combo_pos(&r.combination), target_pos(&t.target)))
                .or_insert_with(|| (t.in_training, Vec::new()))
                .1
                .push(t.accuracy);
        }
    }

    let training = train
        .into_iter()
        .map(|((features, method, c), accuracies)| TrainResult {
            features,
            method,
            combination: shape.combinations[c].clone(),
            median: med(&accuracies),
            accuracies,
        })
        .collect();

    let mut cells: Vec<CellResult> = test
        .into_iter()
        .map(|((features, method, c, t), (in_training, accuracies))| CellResult {
            features,
            method,
            combination: shape.combinations[c].clone(),
            target: shape.targets[t].clone(),
            in_training,
            median: med(&accuracies),
            accuracies,
            wins: 0,
            marker: String::new(),
        })
        .collect();

    // pairwise tests between cells sharing features, method, target and
    // whether that target was seen in training
    let mut groups: BTreeMap<(Features, Method, usize, bool), Vec<usize>> = BTreeMap::new();
    for (i, c) in cells.iter().enumerate() {
        groups
            .entry((c.features, c.method, target_pos(&c.target), c.in_training))
            .or_default()
            .push(i);
    }
    let mut comparisons = Vec::new();
    let mut wins = vec![0usize; cells.len()];
    for members in groups.values() {
        for (x, &i) in members.iter().enumerate() {
            for &j in &members[x + 1..] {
                let (a, b) = (&cells[i], &cells[j]);
                let Some(v) = verdict(&a.accuracies, &b.accuracies) else {
                    continue;
                };
                let better = if !v.significant || a.median == b.median {
                    None
                } else if a.median > b.median {
                    wins[i] += 1;
                    Some(a.combination.clone())
                } else {
                    wins[j] += 1;
                    Some(b.combination.clone())
                };
                comparisons.push(Comparison {
                    features: a.features,
                    method: a.method,
                    target: a.target.clone(),
                    in_training: a.in_training,
                    a: a.combination.clone(),
                    b: b.combination.clone(),
                    h: v.h,
                    p_value: v.p,
                    significant: v.significant,
                    better,
                });
            }
        }
    }
    for (c, w) in cells.iter_mut().zip(wins) {
        c.wins = w;
        c.marker = "*".repeat(w);
    }

    let mut hyper_vs_original = Vec::new();
    for o in cells.iter().filter(|c| c.features == Features::Original) {
        let Some(h) = cells.iter().find(|c| {
            c.features == Features::Hyper
                && c.method == o.method
                && c.combination == o.combination
                && c.target == o.target
        }) else {
            continue;
        };
        let Some(v) = verdict(&o.accuracies, &h.accuracies) else {
            continue;
        };
        let better = match (v.significant, h.median.total_cmp(&o.median)) {
            (true, std::cmp::Ordering::Greater) => Some(Features::Hyper),
            (true, std::cmp::Ordering::Less) => Some(Features::Original),
            _ => None,
        };
        hyper_vs_original.push(HyperComparison {
            method: o.method,
            combination: o.combination.clone(),
            target: o.target.clone(),
            original_median: o.median,
            hyper_median: h.median,
            h: v.h,
            p_value: v.p,
            significant: v.significant,
            better,
        });
    }

    ExperimentReport {
        seed: shape.seed,
        runs: shape.runs,
        train_size: shape.train_size,
        combinations: shape.combinations,
        targets: shape.targets,
        methods: shape.methods,
        feature_spaces: shape.feature_spaces,
        hyperfeatures: shape.hyperfeatures,
        training,
        cells,
        comparisons,
        hyper_vs_original,
    }
}

fn pct(v: f64) -> String {
    format!("{:.2}", 100.0 * v)
}

impl ExperimentReport {
    pub fn cell(&self, features: Features, method: Method, combination: &str, target: &str) -> Option<&CellResult> {
        self.cells.iter().find(|c| {
            c.features == features && c.method == method && c.combination == combination && c.target == target
        })
    }

    /// One row per cell; run accuracies are `;`-separated.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "features",
            "method",
            "combination",
            "target",
            "in_training",
            "runs",
            "median",
            "marker",
            "accuracies",
        ])
        .expect("in-memory write");
        for c in &self.cells {
            let runs: Vec<String> = c.accuracies.iter().map(f64::to_string).collect();
            w.write_record([
                c.features.name(),
                c.method.name(),
                &c.combination,
                &c.target,
                if c.in_training { "true" } else { "false" },
                &c.accuracies.len().to_string(),
                &c.median.to_string(),
                &c.marker,
                &runs.join(";"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
    }

    /// Median accuracy tables (percent), training combinations down, test
    /// targets across. Bracketed cells score held-out rows of an image used
    /// in training; `*` marks a significant win over one peer cell.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "median accuracy (%) over {} runs, master seed {}",
            self.runs, self.seed
        );
        let _ = writeln!(
            out,
            "[x] held-out rows of a training image; * significantly better than one peer (p < 0.01)"
        );
        for &features in &self.feature_spaces {
            for &method in &self.methods {
                let _ = writeln!(out, "\n{features} / {method}");
                let mut header = vec!["train".to_string(), "train-acc".to_string()];
                header.extend(self.targets.iter().cloned());
                let mut rows = vec![header];
                for combo in &self.combinations {
                    let train = self
                        .training
                        .iter()
                        .find(|t| t.features == features && t.method == method && &t.combination == combo)
                        .map_or("-".to_string(), |t| pct(t.median));
                    let mut row = vec![combo.clone(), train];
                    for target in &self.targets {
                        row.push(match self.cell(features, method, combo, target) {
                            Some(c) if c.in_training => format!("[{}]{}", pct(c.median), c.marker),
                            Some(c) => format!("{}{}", pct(c.median), c.marker),
                            None => "-".to_string(),
                        });
                    }
                    rows.push(row);
                }
                let widths: Vec<usize> = (0..rows[0].len())
                    .map(|j| rows.iter().map(|r| r[j].len()).max().unwrap_or(0))
                    .collect();
                for r in &rows {
                    let line: Vec<String> = r
                        .iter()
                        .zip(&widths)
                        .enumerate()
                        .map(|(j, (s, w))| if j == 0 { format!("{s:<w$}") } else { format!("{s:>w$}") })
                        .collect();
                    let _ = writeln!(out, "{}", line.join("  ").trim_end());
                }
            }
        }
        if !self.hyper_vs_original.is_empty() {
            let _ = writeln!(out, "\nhyper vs original (p-values; + hyper better, - hyper worse)");
            for h in &self.hyper_vs_original {
                let sign = match h.better {
                    Some(Features::Hyper) => "+",
                    Some(Features::Original) => "-",
                    None => "",
                };
                let _ = writeln!(
                    out,
                    "{:<5} {:<8} -> {:<8} p={:.4}{sign}",
                    h.method.name(),
                    h.combination,
                    h.target,
                    h.p_value
                );
            }
        }
        out
    }
}
