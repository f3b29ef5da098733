//! Mahalanobis-distance nearest-centroid classifier.
//!
//! One cluster per class in hyper-feature space. Each class keeps its
//! centroid and the inverse of its own (ridge-regularized) sample
//! covariance; a point is assigned to the class whose centroid is nearest
//! under that class's Mahalanobis distance.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{project_columns, Dataset, DatasetError};
use crate::expr::Expr;
use crate::linalg;

/// Maximum number of ridge doublings attempted before giving up.
const MAX_RIDGE_STEPS: usize = 1100;

#[derive(Debug, Error)]
pub enum MdError {
    #[error("need at least two classes, found {0}")]
    TooFewClasses(usize),
    #[error("class {0:?} has no samples")]
    EmptyClass(String),
    #[error("hyper-feature space has zero dimensions")]
    ZeroDimensions,
    #[error("dimension mismatch: model has {expected}, input has {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("covariance of class {0:?} could not be regularized")]
    Singular(String),
    #[error("dataset classes {found:?} are not covered by model classes {expected:?}")]
    ClassMismatch { expected: Vec<String>, found: Vec<String> },
    #[error(transparent)]
    Dataset(#[from] DatasetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MdModel {
    hyperfeatures: Vec<Expr>,
    classes: Vec<String>,
    centroids: Vec<Vec<f64>>,
    /// Row-major `d × d` per class.
    inv_covariances: Vec<Vec<f64>>,
    /// Ridge strength added to each class covariance (0 when none needed).
    ridge: Vec<f64>,
    /// Classes with fewer than two samples use the identity covariance.
    identity_fallback: Vec<bool>,
    class_counts: Vec<usize>,
}

impl MdModel {
    /// Fits on column-major points (`columns[j][i]` is coordinate `j` of
    /// point `i`); `labels` index into `classes`.
    pub fn fit_columns(
        columns: &[Vec<f64>],
        labels: &[usize],
        classes: &[String],
        hyperfeatures: Vec<Expr>,
    ) -> Result<Self, MdError> {
        let d = columns.len();
        if d == 0 {
            return Err(MdError::ZeroDimensions);
        }
        if classes.len() < 2 {
            return Err(MdError::TooFewClasses(classes.len()));
        }
        if let Some(c) = columns.iter().find(|c| c.len() != labels.len()) {
            return Err(MdError::DimensionMismatch {
                expected: labels.len(),
                found: c.len(),
            });
        }
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
        for (i, &l) in labels.iter().enumerate() {
            members[l].push(i);
        }
        let mut model = MdModel {
            hyperfeatures,
            classes: classes.to_vec(),
            centroids: Vec::with_capacity(classes.len()),
            inv_covariances: Vec::with_capacity(classes.len()),
            ridge: Vec::with_capacity(classes.len()),
            identity_fallback: Vec::with_capacity(classes.len()),
            class_counts: members.iter().map(Vec::len).collect(),
        };
        for (name, rows) in classes.iter().zip(&members) {
            if rows.is_empty() {
                return Err(MdError::EmptyClass(name.clone()));
            }
            let n = rows.len() as f64;
            let centroid: Vec<f64> = columns
                .iter()
                .map(|col| rows.iter().map(|&i| col[i]).sum::<f64>() / n)
                .collect();
            if rows.len() < 2 {
                model.inv_covariances.push(linalg::identity(d));
                model.ridge.push(0.0);
                model.identity_fallback.push(true);
            } else {
                let cov = covariance(columns, rows, &centroid);
                let (inv, ridge) = regularized_inverse(&cov, d).ok_or_else(|| MdError::Singular(name.clone()))?;
                model.inv_covariances.push(inv);
                model.ridge.push(ridge);
                model.identity_fallback.push(false);
            }
            model.centroids.push(centroid);
        }
        Ok(model)
    }

    /// Fits on row-major points.
    pub fn fit(points: &[Vec<f64>], labels: &[usize], classes: &[String]) -> Result<Self, MdError> {
        let d = points.first().map_or(0, Vec::len);
        if let Some(bad) = points.iter().find(|p| p.len() != d) {
            return Err(MdError::DimensionMismatch {
                expected: d,
                found: bad.len(),
            });
        }
        let columns: Vec<Vec<f64>> = (0..d).map(|j| points.iter().map(|p| p[j]).collect()).collect();
        let hfs = (0..d).map(Expr::Feature).collect();
        Self::fit_columns(&columns, labels, classes, hfs)
    }

    /// Projects `train` through `hyperfeatures` and fits on the result.
    pub fn fit_dataset(hyperfeatures: Vec<Expr>, train: &Dataset) -> Result<Self, MdError> {
        let columns = project_columns(train, &hyperfeatures)?;
        Self::fit_columns(&columns, train.labels(), train.classes(), hyperfeatures)
    }

    /// Identity hyper-features `X0..Xk-1`: the plain classifier on raw features.
    pub fn fit_raw(train: &Dataset) -> Result<Self, MdError> {
        Self::fit_dataset((0..train.arity()).map(Expr::Feature).collect(), train)
    }

    pub fn dimensions(&self) -> usize {
        self.centroids.first().map_or(0, Vec::len)
    }

    pub fn hyperfeatures(&self) -> &[Expr] {
        &self.hyperfeatures
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    pub fn centroids(&self) -> &[Vec<f64>] {
        &self.centroids
    }

    pub fn inv_covariances(&self) -> &[Vec<f64>] {
        &self.inv_covariances
    }

    pub fn ridge(&self) -> &[f64] {
        &self.ridge
    }

    pub fn identity_fallback(&self) -> &[bool] {
        &self.identity_fallback
    }

    pub fn class_counts(&self) -> &[usize] {
        &self.class_counts
    }

    /// Mahalanobis distance from a hyper-space point to each class centroid.
    pub fn distances(&self, point: &[f64]) -> Result<Vec<f64>, MdError> {
        self.check_dim(point.len())?;
        Ok(self.distances_unchecked(point))
    }

    fn distances_unchecked(&self, point: &[f64]) -> Vec<f64> {
        self.centroids
            .iter()
            .zip(&self.inv_covariances)
            .map(|(c, inv)| mahalanobis_unchecked(point, c, inv))
            .collect()
    }

    fn check_dim(&self, found: usize) -> Result<(), MdError> {
        let expected = self.dimensions();
        if found != expected {
            return Err(MdError::DimensionMismatch { expected, found });
        }
        Ok(())
    }

    /// Class index of the nearest centroid; ties go to the earlier class.
    pub fn predict(&self, point: &[f64]) -> Result<usize, MdError> {
        self.check_dim(point.len())?;
        Ok(nearest(&self.distances_unchecked(point)))
    }

    /// Predicts every point of column-major hyper-space data.
    pub fn predict_columns(&self, columns: &[Vec<f64>]) -> Result<Vec<usize>, MdError> {
        self.check_dim(columns.len())?;
        let n = columns.first().map_or(0, Vec::len);
        let mut point = vec![0.0; columns.len()];
        Ok((0..n)
            .map(|i| {
                for (p, c) in point.iter_mut().zip(columns) {
                    *p = c[i];
                }
                nearest(&self.distances_unchecked(&point))
            })
            .collect())
    }

    /// Projects raw rows through the hyper-features and predicts them.
    pub fn predict_dataset(&self, data: &Dataset) -> Result<Vec<usize>, MdError> {
        let columns = project_columns(data, &self.hyperfeatures)?;
        self.predict_columns(&columns)
    }

    /// Dataset labels mapped onto this model's class indices.
    pub fn align_labels(&self, data: &Dataset) -> Result<Vec<usize>, MdError> {
        data.labels_against(&self.classes).map_err(|_| MdError::ClassMismatch {
            expected: self.classes.clone(),
            found: data.classes().to_vec(),
        })
    }

    /// Fraction of `data` rows classified correctly.
    pub fn accuracy(&self, data: &Dataset) -> Result<f64, MdError> {
        let truth = self.align_labels(data)?;
        let pred = self.predict_dataset(data)?;
        Ok(fraction_equal(&truth, &pred))
    }

    /// Keeps the hyper-features, refits centroids and covariances on `target`.
    pub fn recalibrated(&self, target: &Dataset) -> Result<MdModel, MdError> {
        recalibrate(self.hyperfeatures.clone(), target)
    }
}

/// Fits centroids and covariances for `hyperfeatures` on target-side data.
pub fn recalibrate(hyperfeatures: Vec<Expr>, target_train: &Dataset) -> Result<MdModel, MdError> {
    MdModel::fit_dataset(hyperfeatures, target_train)
}

/// `sqrt((x − c)ᵀ Σ⁻¹ (x − c))`.
pub fn mahalanobis(x: &[f64], centroid: &[f64], inv_cov: &[f64]) -> Result<f64, MdError> {
    let d = centroid.len();
    if x.len() != d {
        return Err(MdError::DimensionMismatch {
            expected: d,
            found: x.len(),
        });
    }
    if inv_cov.len() != d * d {
        return Err(MdError::DimensionMismatch {
            expected: d * d,
            found: inv_cov.len(),
        });
    }
    Ok(mahalanobis_unchecked(x, centroid, inv_cov))
}

fn mahalanobis_unchecked(x: &[f64], centroid: &[f64], inv_cov: &[f64]) -> f64 {
    let diff: Vec<f64> = x.iter().zip(centroid).map(|(a, b)| a - b).collect();
    let q = linalg::quadratic_form(inv_cov, &diff);
    if q.is_nan() {
        f64::INFINITY
    } else {
        q.max(0.0).sqrt()
    }
}

fn nearest(distances: &[f64]) -> usize {
    let mut best = 0;
    for (i, &d) in distances.iter().enumerate().skip(1) {
        if d < distances[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn fraction_equal(a: &[usize], b: &[usize]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / a.len() as f64
}

/// Sample covariance with denominator `n − 1`, row-major.
fn covariance(columns: &[Vec<f64>], rows: &[usize], centroid: &[f64]) -> Vec<f64> {
    let d = columns.len();
    let denom = (rows.len() - 1) as f64;
    let centered: Vec<Vec<f64>> = columns
        .iter()
        .zip(centroid)
        .map(|(col, m)| rows.iter().map(|&i| col[i] - m).collect())
        .collect();
    let mut cov = vec![0.0; d * d];
    for a in 0..d {
        for b in 0..=a {
            let s: f64 = centered[a].iter().zip(&centered[b]).map(|(x, y)| x * y).sum();
            cov[a * d + b] = s / denom;
            cov[b * d + a] = s / denom;
        }
    }
    cov
}

/// Inverse of `cov + λI`, with `λ` starting at 0 and then at
/// `1e-8 · max(trace/d, 1)`, doubling until the Cholesky factorization
/// succeeds.
fn regularized_inverse(cov: &[f64], d: usize) -> Option<(Vec<f64>, f64)> {
    if let Some(l) = linalg::cholesky(cov, d) {
        return Some((linalg::inverse_from_cholesky(&l, d), 0.0));
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let mut lambda = 1e-8 * (trace / d as f64).max(1.0);
    let mut shifted = cov.to_vec();
    for _ in 0..MAX_RIDGE_STEPS {
        if !lambda.is_finite() {
            return None;
        }
        for i in 0..d {
            shifted[i * d + i] = cov[i * d + i] + lambda;
        }
        if let Some(l) = linalg::cholesky(&shifted, d) {
            return Some((linalg::inverse_from_cholesky(&l, d), lambda));
        }
        lambda *= 2.0;
    }
    None
}
