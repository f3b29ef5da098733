//! Labeled tabular datasets with per-row provenance.

mod csvio;
mod sampling;
pub mod synth;

use std::collections::BTreeSet;

use thiserror::Error;

use crate::expr::{EvalError, Expr};

pub use csvio::{load_csv, write_csv, DEFAULT_LABEL_COLUMN, PROVENANCE_COLUMN};
pub use sampling::{
    largest_remainder, mix, mix_indices, split, split_indices, stratified_indices, SplitSpec, DEFAULT_TRAIN_SIZE,
};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("label column {0:?} not found in header")]
    MissingLabelColumn(String),
    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumeric { row: usize, column: String, value: String },
    #[error("non-finite value at row {row}, column {column:?}")]
    NonFinite { row: usize, column: String },
    #[error("empty dataset")]
    Empty,
    #[error("arity mismatch: expected {expected} features, found {found}")]
    ArityMismatch { expected: usize, found: usize },
    #[error("class labels differ between datasets: {0:?} vs {1:?}")]
    LabelMismatch(Vec<String>, Vec<String>),
    #[error("source {source_index} must contribute {quota} rows but holds only {available}")]
    QuotaExceeded {
        source_index: usize,
        quota: usize,
        available: usize,
    },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("hyper-feature {index} ({formula}) cannot be applied: {source}")]
    Hyperfeature {
        index: usize,
        formula: String,
        #[source]
        source: EvalError,
    },
    #[error("{0}")]
    Invalid(String),
}

/// Feature matrix (column-major), class labels and provenance tags.
///
/// Class identifiers are kept as an ordered alphabet; `labels` index into it.
/// The alphabet is sorted, which fixes the "declaration order" used for
/// tie-breaking everywhere downstream.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    feature_names: Vec<String>,
    columns: Vec<Vec<f64>>,
    classes: Vec<String>,
    labels: Vec<usize>,
    provenance: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from column-major features and string labels.
    pub fn new(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        labels: &[String],
        provenance: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let classes: Vec<String> = labels.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
        let indices = labels
            .iter()
            .map(|l| classes.binary_search(l).expect("label drawn from alphabet"))
            .collect();
        Self::with_classes(feature_names, columns, classes, indices, provenance)
    }

    /// Builds a dataset whose labels already index into `classes`.
    pub fn with_classes(
        feature_names: Vec<String>,
        columns: Vec<Vec<f64>>,
        classes: Vec<String>,
        labels: Vec<usize>,
        provenance: Vec<String>,
    ) -> Result<Self, DatasetError> {
        let n = labels.len();
        if feature_names.len() != columns.len() {
            return Err(DatasetError::Invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                columns.len()
            )));
        }
        if provenance.len() != n {
            return Err(DatasetError::Invalid(format!(
                "{} provenance tags for {n} rows",
                provenance.len()
            )));
        }
        for (name, col) in feature_names.iter().zip(&columns) {
            if col.len() != n {
                return Err(DatasetError::Invalid(format!(
                    "column {name:?} has {} rows, expected {n}",
                    col.len()
                )));
            }
            if let Some(row) = col.iter().position(|v| !v.is_finite()) {
                return Err(DatasetError::NonFinite {
                    row,
                    column: name.clone(),
                });
            }
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= classes.len()) {
            return Err(DatasetError::Invalid(format!(
                "label index {bad} outside class alphabet"
            )));
        }
        Ok(Self {
            feature_names,
            columns,
            classes,
            labels,
            provenance,
        })
    }

    /// Builds a dataset from row-major features; names default to `X0..`.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[String], provenance: Vec<String>) -> Result<Self, DatasetError> {
        let k = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != k) {
            return Err(DatasetError::ArityMismatch {
                expected: k,
                found: bad.len(),
            });
        }
        let columns = (0..k).map(|j| rows.iter().map(|r| r[j]).collect()).collect();
        Self::new(default_feature_names(k), columns, labels, provenance)
    }

    pub fn n_rows(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn arity(&self) -> usize {
        self.columns.len()
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }

    pub fn rows(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.n_rows()).map(move |i| self.row(i))
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn label_name(&self, i: usize) -> &str {
        &self.classes[self.labels[i]]
    }

    pub fn provenance(&self) -> &[String] {
        &self.provenance
    }

    /// Row count per class, in alphabet order.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.classes.len()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Number of classes that actually occur.
    pub fn present_classes(&self) -> usize {
        self.class_counts().iter().filter(|&&c| c > 0).count()
    }

    /// Rows at `indices`, in the given order. The class alphabet is kept.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            feature_names: self.feature_names.clone(),
            columns: self
                .columns
                .iter()
                .map(|c| indices.iter().map(|&i| c[i]).collect())
                .collect(),
            classes: self.classes.clone(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            provenance: indices.iter().map(|&i| self.provenance[i].clone()).collect(),
        }
    }

    /// Rows not listed in `indices`, in original order.
    pub fn complement(&self, indices: &[usize]) -> Dataset {
        let mut keep = vec![true; self.n_rows()];
        for &i in indices {
            keep[i] = false;
        }
        let rest: Vec<usize> = (0..self.n_rows()).filter(|&i| keep[i]).collect();
        self.select(&rest)
    }

    /// Stacks datasets with identical arity and class alphabet.
    pub fn concat(parts: &[Dataset]) -> Result<Dataset, DatasetError> {
        let first = parts.first().ok_or(DatasetError::Empty)?;
        check_compatible(parts)?;
        let mut out = Dataset {
            feature_names: first.feature_names.clone(),
            columns: vec![Vec::new(); first.arity()],
            classes: first.classes.clone(),
            labels: Vec::new(),
            provenance: Vec::new(),
        };
        for p in parts {
            for (dst, src) in out.columns.iter_mut().zip(&p.columns) {
                dst.extend_from_slice(src);
            }
            out.labels.extend_from_slice(&p.labels);
            out.provenance.extend(p.provenance.iter().cloned());
        }
        Ok(out)
    }

    /// Re-expresses labels against a wider alphabet that contains this one.
    pub fn relabel(&self, classes: &[String]) -> Result<Dataset, DatasetError> {
        let map: Vec<usize> = self
            .classes
            .iter()
            .map(|c| classes.iter().position(|d| d == c))
            .collect::<Option<_>>()
            .ok_or_else(|| DatasetError::LabelMismatch(self.classes.clone(), classes.to_vec()))?;
        Ok(Dataset {
            classes: classes.to_vec(),
            labels: self.labels.iter().map(|&l| map[l]).collect(),
            ..self.clone()
        })
    }

    /// Labels as indices into another class alphabet that covers this one.
    pub fn labels_against(&self, classes: &[String]) -> Result<Vec<usize>, DatasetError> {
        Ok(self.relabel(classes)?.labels)
    }

    pub fn with_provenance(mut self, tag: &str) -> Dataset {
        self.provenance = vec![tag.to_string(); self.n_rows()];
        self
    }

    /// Applies hyper-features; column `j` is named `HFj`.
    pub fn project(&self, hyperfeatures: &[Expr]) -> Result<Dataset, DatasetError> {
        let columns = project_columns(self, hyperfeatures)?;
        Ok(Dataset {
            feature_names: (0..hyperfeatures.len()).map(|j| format!("HF{j}")).collect(),
            columns,
            classes: self.classes.clone(),
            labels: self.labels.clone(),
            provenance: self.provenance.clone(),
        })
    }
}

/// Column-major values of each hyper-feature over `dataset`.
pub fn project_columns(dataset: &Dataset, hyperfeatures: &[Expr]) -> Result<Vec<Vec<f64>>, DatasetError> {
    hyperfeatures
        .iter()
        .enumerate()
        .map(|(index, hf)| {
            hf.evaluate_columns(&dataset.columns, dataset.n_rows())
                .map_err(|source| DatasetError::Hyperfeature {
                    index,
                    formula: hf.to_string(),
                    source,
                })
        })
        .collect()
}

/// Free-function form of [`Dataset::project`].
pub fn project(dataset: &Dataset, hyperfeatures: &[Expr]) -> Result<Dataset, DatasetError> {
    dataset.project(hyperfeatures)
}

pub fn default_feature_names(k: usize) -> Vec<String> {
    (0..k).map(|j| format!("X{j}")).collect()
}

pub(crate) fn check_compatible(parts: &[Dataset]) -> Result<(), DatasetError> {
    let Some(first) = parts.first() else { return Ok(()) };
    for p in &parts[1..] {
        if p.arity() != first.arity() {
            return Err(DatasetError::ArityMismatch {
                expected: first.arity(),
                found: p.arity(),
            });
        }
        if p.classes != first.classes {
            return Err(DatasetError::LabelMismatch(first.classes.clone(), p.classes.clone()));
        }
    }
    Ok(())
}
