use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use super::{Dataset, DatasetError};

pub const DEFAULT_LABEL_COLUMN: &str = "class";
/// Column carrying per-row provenance tags in written datasets.
pub const PROVENANCE_COLUMN: &str = "provenance";

/// Loads a comma-separated file with a header row.
///
/// Every column other than the label column (and an optional `provenance`
/// column) must be numeric. With `tag` set, every row is tagged with it;
/// otherwise the `provenance` column is used if present, else the file stem.
pub fn load_csv(path: impl AsRef<Path>, label_column: &str, tag: Option<&str>) -> Result<Dataset, DatasetError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let fallback = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_csv(file, label_column, tag.or(Some(&fallback)), tag.is_some())
}

pub(crate) fn read_csv<R: Read>(
    reader: R,
    label_column: &str,
    tag: Option<&str>,
    force_tag: bool,
) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    let label_idx = header
        .iter()
        .position(|h| h == label_column)
        .ok_or_else(|| DatasetError::MissingLabelColumn(label_column.to_string()))?;
    let prov_idx = header
        .iter()
        .position(|h| h == PROVENANCE_COLUMN)
        .filter(|&i| i != label_idx);
    let use_prov_column = prov_idx.is_some() && !force_tag;

    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&i| i != label_idx && Some(i) != prov_idx)
        .collect();
    let feature_names: Vec<String> = feature_idx
        .iter()
        .enumerate()
        .map(|(j, &i)| {
            if header[i].is_empty() {
                format!("X{j}")
            } else {
                header[i].clone()
            }
        })
        .collect();

    let mut columns = vec![Vec::new(); feature_idx.len()];
    let mut labels = Vec::new();
    let mut provenance = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (col, &i) in columns.iter_mut().zip(&feature_idx) {
            let cell = record.get(i).unwrap_or("");
            let value: f64 = cell.parse().map_err(|_| DatasetError::NonNumeric {
                row: row + 1,
                column: header[i].clone(),
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(DatasetError::NonFinite {
                    row: row + 1,
                    column: header[i].clone(),
                });
            }
            col.push(value);
        }
        labels.push(record.get(label_idx).unwrap_or("").to_string());
        provenance.push(match (use_prov_column, prov_idx) {
            (true, Some(p)) => record.get(p).unwrap_or("").to_string(),
            _ => tag.unwrap_or("").to_string(),
        });
    }
    if labels.is_empty() {
        return Err(DatasetError::Empty);
    }
    Dataset::new(feature_names, columns, &labels, provenance)
}

/// Writes features, then the label column, then provenance.
pub fn write_csv(dataset: &Dataset, path: impl AsRef<Path>, label_column: &str) -> Result<(), DatasetError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|source| DatasetError::Io {
        path: path.display().to_string(),
        source,
    })?;
    write_csv_to(dataset, file, label_column)
}

pub(crate) fn write_csv_to<W: Write>(dataset: &Dataset, writer: W, label_column: &str) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = dataset.feature_names().iter().map(String::as_str).collect();
    header.push(label_column);
    header.push(PROVENANCE_COLUMN);
    w.write_record(&header)?;
    for i in 0..dataset.n_rows() {
        let mut rec: Vec<String> = dataset.columns().iter().map(|c| c[i].to_string()).collect();
        rec.push(dataset.label_name(i).to_string());
        rec.push(dataset.provenance()[i].clone());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|source| DatasetError::Io {
        path: "<csv output>".into(),
        source,
    })?;
    Ok(())
}
