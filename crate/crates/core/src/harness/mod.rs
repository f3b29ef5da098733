//! Experiment orchestration: multi-run training over dataset combinations,
//! cross-dataset evaluation matrices, hyper-feature harvesting, dispersion
//! analysis, coordinate export and transfer recalibration.

mod analysis;
mod experiment;
mod report;
mod spec;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::baselines::BaselineError;
use crate::dataset::DatasetError;
use crate::engine::EngineError;
use crate::expr::ParseError;
use crate::mdclass::MdError;
use crate::stats::StatsError;

pub use analysis::{
    analyze_dispersion, export_visualization, overlap_ratio, transfer_eval, write_dispersion_csv, write_overlap_csv,
    write_visualization_csv, DispersionRow, DispersionTable, GroupBy, Overlap, TransferResult, VizRow,
};
pub use experiment::{
    harvest_hyperfeatures, load_spec_datasets, run_experiment, training_plan, write_outputs, ChampionRecord,
    ExperimentOutcome, RunRecord, TestScore, HYPERFEATURE_ASSET,
};
pub use report::{CellResult, Comparison, ExperimentReport, HyperComparison, TrainResult};
pub use spec::{Combination, DatasetEntry, ExperimentSpec, FeatureMode, Features, HyperSource, Method};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid experiment spec: {0}")]
    Spec(String),
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cannot parse hyper-feature asset: {0}")]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Model(#[from] MdError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("{0}")]
    Invalid(String),
}

impl HarnessError {
    /// Errors caused by how the tool was asked to run rather than by the data.
    pub fn is_usage(&self) -> bool {
        matches!(self, HarnessError::Spec(_))
    }
}

pub(crate) fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    std::fs::write(path, contents).map_err(io_err(path))
}

pub(crate) fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable report");
    s.push('\n');
    s
}
