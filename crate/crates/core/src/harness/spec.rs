use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{io_err, HarnessError};
use crate::baselines::ForestConfig;
use crate::dataset::{DEFAULT_LABEL_COLUMN, DEFAULT_TRAIN_SIZE};
use crate::engine::RunConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub tag: String,
    pub path: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    M3gp,
    Md,
    Dt,
    Rf,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::M3gp, Method::Md, Method::Dt, Method::Rf];

    pub fn name(self) -> &'static str {
        match self {
            Method::M3gp => "m3gp",
            Method::Md => "md",
            Method::Dt => "dt",
            Method::Rf => "rf",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected m3gp, md, dt or rf)"))
    }
}

/// Which feature spaces an experiment trains in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureMode {
    #[default]
    Original,
    Hyper,
    Both,
}

impl FeatureMode {
    pub fn spaces(self) -> Vec<Features> {
        match self {
            FeatureMode::Original => vec![Features::Original],
            FeatureMode::Hyper => vec![Features::Hyper],
            FeatureMode::Both => vec![Features::Original, Features::Hyper],
        }
    }
}

impl FromStr for FeatureMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "original" => Ok(FeatureMode::Original),
            "hyper" => Ok(FeatureMode::Hyper),
            "both" => Ok(FeatureMode::Both),
            _ => Err(format!("unknown feature mode {s:?} (expected original, hyper or both)")),
        }
    }
}

/// The feature space of one result cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Features {
    Original,
    Hyper,
}

impl Features {
    pub fn name(self) -> &'static str {
        match self {
            Features::Original => "original",
            Features::Hyper => "hyper",
        }
    }
}

impl fmt::Display for Features {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HyperSource {
    /// The ten formulas shipped with the crate.
    #[default]
    Bundled,
    File {
        path: PathBuf,
    },
    /// Rank the dimensions of the M3GP champions trained on `combination`.
    Harvest {
        combination: String,
        #[serde(default = "default_top_k")]
        top_k: usize,
    },
}

fn default_top_k() -> usize {
    10
}

/// A resolved training combination: its display name and member tags.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Combination {
    pub name: String,
    pub members: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub datasets: Vec<DatasetEntry>,
    /// Names such as `"B"` or `"BCM"` (concatenated single-letter tags) or
    /// `"brazil+congo"`.
    pub combinations: Vec<String>,
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub config: RunConfig,
    /// Evaluation targets; empty means every declared dataset.
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    #[serde(default)]
    pub feature_mode: FeatureMode,
    #[serde(default)]
    pub hyper_source: HyperSource,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_train_size")]
    pub train_size: usize,
    #[serde(default = "default_label_col")]
    pub label_col: String,
    #[serde(default)]
    pub forest: ForestConfig,
}

fn default_runs() -> usize {
    30
}

fn default_methods() -> Vec<Method> {
    vec![Method::M3gp]
}

fn default_train_size() -> usize {
    DEFAULT_TRAIN_SIZE
}

fn default_label_col() -> String {
    DEFAULT_LABEL_COLUMN.to_string()
}

impl ExperimentSpec {
    /// A spec with defaults for everything but the data and combinations.
    pub fn new(datasets: Vec<DatasetEntry>, combinations: Vec<String>) -> Self {
        Self {
            datasets,
            combinations,
            runs: default_runs(),
            config: RunConfig::default(),
            targets: Vec::new(),
            methods: default_methods(),
            feature_mode: FeatureMode::default(),
            hyper_source: HyperSource::default(),
            output_dir: None,
            seed: 0,
            train_size: default_train_size(),
            label_col: default_label_col(),
            forest: ForestConfig::default(),
        }
    }

    /// Reads a JSON spec; relative paths are taken from the spec's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut spec: ExperimentSpec =
            serde_json::from_str(&text).map_err(|e| HarnessError::Spec(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        spec.datasets.iter_mut().for_each(|d| rebase(&mut d.path));
        if let HyperSource::File { path } = &mut spec.hyper_source {
            rebase(path);
        }
        if let Some(out) = &mut spec.output_dir {
            rebase(out);
        }
        Ok(spec)
    }

    pub fn tags(&self) -> Vec<&str> {
        self.datasets.iter().map(|d| d.tag.as_str()).collect()
    }

    /// Splits a combination name into declared dataset tags.
    pub fn resolve(&self, name: &str) -> Result<Combination, HarnessError> {
        let tags = self.tags();
        let members: Vec<String> = if name.contains('+') {
            name.split('+').map(str::to_string).collect()
        } else if tags.contains(&name) {
            vec![name.to_string()]
        } else {
            name.chars().map(String::from).collect()
        };
        if members.is_empty() || members.iter().any(|m| !tags.contains(&m.as_str())) {
            return Err(HarnessError::Spec(format!(
                "combination {name:?} references undeclared datasets"
            )));
        }
        for (i, m) in members.iter().enumerate() {
            if members[..i].contains(m) {
                return Err(HarnessError::Spec(format!(
                    "combination {name:?} repeats dataset {m:?}"
                )));
            }
        }
        Ok(Combination {
            name: name.to_string(),
            members,
        })
    }

    pub fn combinations(&self) -> Result<Vec<Combination>, HarnessError> {
        self.combinations.iter().map(|c| self.resolve(c)).collect()
    }

    /// Evaluation targets, defaulting to every dataset.
    pub fn target_tags(&self) -> Vec<String> {
        if self.targets.is_empty() {
            self.datasets.iter().map(|d| d.tag.clone()).collect()
        } else {
            self.targets.clone()
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.datasets.is_empty() {
            return Err(HarnessError::Spec("no datasets declared".into()));
        }
        let tags = self.tags();
        for (i, t) in tags.iter().enumerate() {
            if t.is_empty() || t.contains('+') {
                return Err(HarnessError::Spec(format!("invalid dataset tag {t:?}")));
            }
            if tags[..i].contains(t) {
                return Err(HarnessError::Spec(format!("dataset tag {t:?} declared twice")));
            }
        }
        if self.combinations.is_empty() {
            return Err(HarnessError::Spec("no combinations to train on".into()));
        }
        let combos = self.combinations()?;
        for (i, c) in combos.iter().enumerate() {
            if combos[..i].iter().any(|o| o.name == c.name) {
                return Err(HarnessError::Spec(format!("combination {:?} listed twice", c.name)));
            }
        }
        if self.runs == 0 {
            return Err(HarnessError::Spec("runs must be at least 1".into()));
        }
        if self.methods.is_empty() {
            return Err(HarnessError::Spec("no methods requested".into()));
        }
        if let Some(t) = self.targets.iter().find(|t| !tags.contains(&t.as_str())) {
            return Err(HarnessError::Spec(format!("target {t:?} is not a declared dataset")));
        }
        if let HyperSource::Harvest { combination, top_k } = &self.hyper_source {
            self.resolve(combination)?;
            if *top_k == 0 {
                return Err(HarnessError::Spec("harvest top_k must be at least 1".into()));
            }
        }
        let mut runs_cfg = self.config.clone();
        runs_cfg.runs = self.runs;
        runs_cfg.validate().map_err(|e| HarnessError::Spec(e.to_string()))?;
        if self.forest.n_trees == 0 {
            return Err(HarnessError::Spec("forest needs at least one tree".into()));
        }
        Ok(())
    }
}
