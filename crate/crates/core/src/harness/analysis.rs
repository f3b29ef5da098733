use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{write_file, HarnessError};
use crate::dataset::{largest_remainder, project_columns, stratified_indices, Dataset, DatasetError};
use crate::mdclass::{recalibrate, MdModel};
use crate::rng::seeded;
use crate::stats::{median, quantile, tukey_filter};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GroupBy {
    Class,
    Provenance,
    Both,
}

impl FromStr for GroupBy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "class" => Ok(GroupBy::Class),
            "provenance" => Ok(GroupBy::Provenance),
            "both" => Ok(GroupBy::Both),
            _ => Err(format!("unknown grouping {s:?} (expected class, provenance or both)")),
        }
    }
}

/// Five-number summary of one feature within one group.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub feature: String,
    pub group: String,
    pub n: usize,
    /// Values left after outlier removal.
    pub kept: usize,
    /// False when the group was too small for the fences and is reported raw.
    pub filtered: bool,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Overlap {
    pub feature: String,
    pub group_a: String,
    pub group_b: String,
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DispersionTable {
    pub rows: Vec<DispersionRow>,
    pub overlaps: Vec<Overlap>,
}

/// Length of the intersection of two closed ranges over the length of
/// their union. Two equal points overlap fully.
pub fn overlap_ratio(a: (f64, f64), b: (f64, f64)) -> f64 {
    let inter = (a.1.min(b.1) - a.0.max(b.0)).max(0.0);
    let union = a.1.max(b.1) - a.0.min(b.0);
    if union > 0.0 {
        inter / union
    } else if a == b {
        1.0
    } else {
        0.0
    }
}

fn group_key(d: &Dataset, i: usize, by: GroupBy) -> String {
    match by {
        GroupBy::Class => d.label_name(i).to_string(),
        GroupBy::Provenance => d.provenance()[i].clone(),
        GroupBy::Both => format!("{}/{}", d.provenance()[i], d.label_name(i)),
    }
}

/// Per feature and group: Tukey-filtered min, quartiles, median and max,
/// plus the range overlap of every pair of groups.
pub fn analyze_dispersion(datasets: &[Dataset], group_by: GroupBy) -> Result<DispersionTable, HarnessError> {
    let first = datasets.first().ok_or(DatasetError::Empty)?;
    if let Some(d) = datasets.iter().find(|d| d.arity() != first.arity()) {
        return Err(DatasetError::ArityMismatch {
            expected: first.arity(),
            found: d.arity(),
        }
        .into());
    }
    let mut table = DispersionTable::default();
    for (j, name) in first.feature_names().iter().enumerate() {
        let mut groups: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for d in datasets {
            for (i, &v) in d.columns()[j].iter().enumerate() {
                groups.entry(group_key(d, i, group_by)).or_default().push(v);
            }
        }
        let mut ranges = Vec::new();
        for (group, values) in &groups {
            let (kept, filtered) = match tukey_filter(values) {
                Ok(k) => (k, true),
                Err(_) => (values.clone(), false),
            };
            let row = DispersionRow {
                feature: name.clone(),
                group: group.clone(),
                n: values.len(),
                kept: kept.len(),
                filtered,
                min: kept.iter().copied().fold(f64::INFINITY, f64::min),
                q1: quantile(&kept, 0.25)?,
                median: median(&kept)?,
                q3: quantile(&kept, 0.75)?,
                max: kept.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            };
            ranges.push((group.clone(), (row.min, row.max)));
            table.rows.push(row);
        }
        for (x, (ga, ra)) in ranges.iter().enumerate() {
            for (gb, rb) in &ranges[x + 1..] {
                table.overlaps.push(Overlap {
                    feature: name.clone(),
                    group_a: ga.clone(),
                    group_b: gb.clone(),
                    ratio: overlap_ratio(*ra, *rb),
                });
            }
        }
    }
    Ok(table)
}

fn csv_string<F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>>(fill: F) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    fill(&mut w).expect("in-memory write");
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}

pub fn write_dispersion_csv(table: &DispersionTable, path: &Path) -> Result<(), HarnessError> {
    let text = csv_string(|w| {
        w.write_record([
            "feature", "group", "n", "kept", "filtered", "min", "q1", "median", "q3", "max",
        ])?;
        for r in &table.rows {
            w.write_record([
                r.feature.clone(),
                r.group.clone(),
                r.n.to_string(),
                r.kept.to_string(),
                r.filtered.to_string(),
                r.min.to_string(),
                r.q1.to_string(),
                r.median.to_string(),
                r.q3.to_string(),
                r.max.to_string(),
            ])?;
        }
        Ok(())
    });
    write_file(path, &text)
}

pub fn write_overlap_csv(table: &DispersionTable, path: &Path) -> Result<(), HarnessError> {
    let text = csv_string(|w| {
        w.write_record(["feature", "group_a", "group_b", "overlap"])?;
        for o in &table.overlaps {
            w.write_record([&o.feature, &o.group_a, &o.group_b, &o.ratio.to_string()])?;
        }
        Ok(())
    });
    write_file(path, &text)
}

/// One projected point or class centroid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizRow {
    pub coordinates: Vec<f64>,
    pub label: String,
    /// Source tag; `centroid` for centroid rows.
    pub provenance: String,
    pub centroid: bool,
}

/// Coordinates of every row of `datasets` in the model's hyper-feature
/// space, followed by one row per class centroid.
pub fn export_visualization(model: &MdModel, datasets: &[Dataset]) -> Result<Vec<VizRow>, HarnessError> {
    let mut rows = Vec::new();
    for d in datasets {
        let columns = project_columns(d, model.hyperfeatures())?;
        for i in 0..d.n_rows() {
            rows.push(VizRow {
                coordinates: columns.iter().map(|c| c[i]).collect(),
                label: d.label_name(i).to_string(),
                provenance: d.provenance()[i].clone(),
                centroid: false,
            });
        }
    }
    for (class, c) in model.classes().iter().zip(model.centroids()) {
        rows.push(VizRow {
            coordinates: c.clone(),
            label: class.clone(),
            provenance: "centroid".into(),
            centroid: true,
        });
    }
    Ok(rows)
}

/// Columns `HF0..`, `label`, `provenance`, `kind` (`point` or `centroid`).
pub fn write_visualization_csv(rows: &[VizRow], path: &Path) -> Result<(), HarnessError> {
    let dims = rows.first().map_or(0, |r| r.coordinates.len());
    let text = csv_string(|w| {
        let mut header: Vec<String> = (0..dims).map(|j| format!("HF{j}")).collect();
        header.extend(["label", "provenance", "kind"].map(String::from));
        w.write_record(&header)?;
        for r in rows {
            let mut rec: Vec<String> = r.coordinates.iter().map(f64::to_string).collect();
            rec.push(r.label.clone());
            rec.push(r.provenance.clone());
            rec.push(if r.centroid { "centroid" } else { "point" }.into());
            w.write_record(&rec)?;
        }
        Ok(())
    });
    write_file(path, &text)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferResult {
    /// The unchanged model on the whole target.
    pub before: f64,
    /// The unchanged model on the held-out target rows only.
    pub before_holdout: f64,
    /// The recalibrated model on the held-out target rows.
    pub after: f64,
    pub calibration_rows: usize,
    pub holdout_rows: usize,
}

/// Scores `model` on `target` as-is, then refits its centroids and
/// covariances on a stratified `fraction` of the target and scores the
/// rest.
pub fn transfer_eval(
    model: &MdModel,
    target: &Dataset,
    fraction: f64,
    seed: u64,
) -> Result<TransferResult, HarnessError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(HarnessError::Invalid(format!(
            "recalibration fraction {fraction} must lie strictly between 0 and 1"
        )));
    }
    let n = target.n_rows();
    let count = (fraction * n as f64).round() as usize;
    let quotas = largest_remainder(count, &target.class_counts());
    if target.present_classes() < 2 || quotas.iter().any(|&q| q < 2) || count >= n {
        return Err(HarnessError::Invalid(format!(
            "fraction {fraction} of {n} rows leaves fewer than two calibration samples per class or no held-out rows"
        )));
    }
    let before = model.accuracy(target)?;
    let calib = stratified_indices(target, count, &mut seeded(seed))?;
    let holdout = target.complement(&calib);
    let recal = recalibrate(model.hyperfeatures().to_vec(), &target.select(&calib))?;
    Ok(TransferResult {
        before,
        before_holdout: model.accuracy(&holdout)?,
        after: recal.accuracy(&holdout)?,
        calibration_rows: count,
        holdout_rows: holdout.n_rows(),
    })
}
