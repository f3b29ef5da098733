use std::collections::BTreeSet;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{assemble, ExperimentReport, ReportShape};
use super::spec::{Combination, ExperimentSpec, Features, HyperSource, Method};
use super::{to_json, write_file, HarnessError};
use crate::baselines::{dt_fit, rf_fit};
use crate::dataset::{load_csv, mix_indices, Dataset, DatasetError};
use crate::engine::{evolve, rank_dimension_impact_per_model, Individual, RankedDimension};
use crate::expr::{bundled_hyperfeatures, format_asset, parse_asset, Expr};
use crate::mdclass::MdModel;
use crate::rng::{derive_seed, seeded};

/// File name of harvested hyper-features inside an output directory.
pub const HYPERFEATURE_ASSET: &str = "hyperfeatures.txt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestScore {
    pub target: String,
    pub in_training: bool,
    pub accuracy: f64,
}

/// A serialized M3GP champion: the fitted classifier plus run metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChampionRecord {
    pub combination: String,
    pub features: Features,
    pub run: usize,
    pub seed: u64,
    pub fitness: f64,
    pub size: usize,
    pub model: MdModel,
}

impl ChampionRecord {
    /// Reads either a champion record or a bare model.
    pub fn load_model(path: impl AsRef<Path>) -> Result<MdModel, HarnessError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
        if let Ok(rec) = serde_json::from_str::<ChampionRecord>(&text) {
            return Ok(rec.model);
        }
        serde_json::from_str::<MdModel>(&text).map_err(|source| HarnessError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

/// Everything measured in one run of one method.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub features: Features,
    pub method: Method,
    pub combination: String,
    pub run: usize,
    pub seed: u64,
    pub train_accuracy: f64,
    pub tests: Vec<TestScore>,
    #[serde(skip)]
    pub champion: Option<ChampionRecord>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutcome {
    pub report: ExperimentReport,
    pub runs: Vec<RunRecord>,
    /// Ranked dimensions when the hyper-features were harvested.
    pub harvested: Vec<RankedDimension>,
    pub hyperfeatures: Vec<Expr>,
}

/// Loads every declared dataset and puts them on one class alphabet.
pub(crate) fn load_sources(spec: &ExperimentSpec) -> Result<Vec<Dataset>, HarnessError> {
    let loaded = spec
        .datasets
        .iter()
        .map(|d| load_csv(&d.path, &spec.label_col, Some(&d.tag)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(unify(loaded)?)
}

pub(crate) fn unify(sources: Vec<Dataset>) -> Result<Vec<Dataset>, DatasetError> {
    let classes: Vec<String> = sources
        .iter()
        .flat_map(|d| d.classes().iter().cloned())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    sources.iter().map(|d| d.relabel(&classes)).collect()
}

type Scorer = dyn Fn(&Dataset) -> Result<f64, crate::baselines::BaselineError>;

struct Job<'a> {
    spec: &'a ExperimentSpec,
    tags: Vec<String>,
    targets: Vec<String>,
}

/// Training rows per member source for run `run` of combination `ci`.
fn training_rows(
    job: &Job,
    combo: &Combination,
    sources: &[Dataset],
    run_seed: u64,
) -> Result<Vec<Vec<usize>>, HarnessError> {
    let members: Vec<Dataset> = combo.members.iter().map(|m| sources[job.index(m)].clone()).collect();
    let total: usize = members.iter().map(Dataset::n_rows).sum();
    let present = Dataset::concat(&members)?.present_classes();
    let size = job.spec.train_size;
    if size >= total || size < 2 * present {
        return Err(DatasetError::InvalidSplit(format!(
            "training size {size} does not fit combination {} ({total} rows, {present} classes)",
            combo.name
        ))
        .into());
    }
    let mut rng = seeded(derive_seed(run_seed, &[0]));
    Ok(mix_indices(&members, size, &mut rng)?)
}

/// Row indices, per member dataset, that run `run` of `combination` trains
/// on. `sources` are the spec's datasets in declaration order.
pub fn training_plan(
    spec: &ExperimentSpec,
    sources: &[Dataset],
    combination: &str,
    run: usize,
) -> Result<Vec<(String, Vec<usize>)>, HarnessError> {
    let combo = spec.resolve(combination)?;
    let job = Job {
        spec,
        tags: spec.tags().iter().map(|t| t.to_string()).collect(),
        targets: Vec::new(),
    };
    let rows = training_rows(&job, &combo, sources, job.run_seed(combo_index(spec, combination), run))?;
    Ok(combo.members.into_iter().zip(rows).collect())
}

/// Loads the spec's datasets on a shared class alphabet.
pub fn load_spec_datasets(spec: &ExperimentSpec) -> Result<Vec<Dataset>, HarnessError> {
    load_sources(spec)
}

impl Job<'_> {
    fn index(&self, tag: &str) -> usize {
        self.tags.iter().position(|t| t == tag).expect("validated tag")
    }

    fn run_seed(&self, ci: usize, run: usize) -> u64 {
        derive_seed(self.spec.seed, &[ci as u64, run as u64])
    }

    /// Trains every method on one run's training set and scores each target.
    fn run(
        &self,
        features: Features,
        sources: &[Dataset],
        ci: usize,
        combo: &Combination,
        run: usize,
        methods: &[Method],
    ) -> Result<(Vec<RunRecord>, Dataset), HarnessError> {
        let run_seed = self.run_seed(ci, run);
        let rows = training_rows(self, combo, sources, run_seed)?;
        let parts: Vec<Dataset> = combo
            .members
            .iter()
            .zip(&rows)
            .map(|(m, r)| sources[self.index(m)].select(r))
            .collect();
        let train = Dataset::concat(&parts)?;
        let targets: Vec<(String, bool, Dataset)> = self
            .targets
            .iter()
            .map(|t| {
                let src = &sources[self.index(t)];
                match combo.members.iter().position(|m| m == t) {
                    Some(k) => (t.clone(), true, src.complement(&rows[k])),
                    None => (t.clone(), false, src.clone()),
                }
            })
            .collect();
        let mut records = Vec::with_capacity(methods.len());
        for &method in methods {
            let seed = derive_seed(run_seed, &[1, method as u64]);
            let mut champion = None;
            let (train_accuracy, tests) = match method {
                Method::M3gp | Method::Md => {
                    let model = if method == Method::M3gp {
                        let ind = evolve(&train, &self.spec.config, &mut seeded(seed))?;
                        let model = ind.to_model(&train)?;
                        champion = Some(ChampionRecord {
                            combination: combo.name.clone(),
                            features,
                            run,
                            seed,
                            fitness: ind.fitness().unwrap_or(0.0),
                            size: ind.size(),
                            model: model.clone(),
                        });
                        model
                    } else {
                        MdModel::fit_raw(&train)?
                    };
                    let scores = targets
                        .iter()
                        .map(|(t, seen, d)| {
                            Ok(TestScore {
                                target: t.clone(),
                                in_training: *seen,
                                accuracy: model.accuracy(d)?,
                            })
                        })
                        .collect::<Result<Vec<_>, HarnessError>>()?;
                    (model.accuracy(&train)?, scores)
                }
                Method::Dt | Method::Rf => {
                    let score: Box<Scorer> = if method == Method::Dt {
                        let tree = dt_fit(&train, None)?;
                        Box::new(move |d| tree.accuracy(d))
                    } else {
                        let forest = rf_fit(&train, &self.spec.forest, seed)?;
                        Box::new(move |d| forest.accuracy(d))
                    };
                    let scores = targets
                        .iter()
                        .map(|(t, seen, d)| {
                            Ok(TestScore {
                                target: t.clone(),
                                in_training: *seen,
                                accuracy: score(d)?,
                            })
                        })
                        .collect::<Result<Vec<_>, HarnessError>>()?;
                    (score(&train)?, scores)
                }
            };
            records.push(RunRecord {
                features,
                method,
                combination: combo.name.clone(),
                run,
                seed,
                train_accuracy,
                tests,
                champion,
            });
        }
        Ok((records, train))
    }
}

/// Runs `methods` on every (combination, run) pair in parallel; results
/// come back in (combination, run) order. Training sets of `keep` are
/// returned alongside.
fn run_all(
    job: &Job,
    features: Features,
    sources: &[Dataset],
    combos: &[(usize, Combination)],
    methods: &[Method],
) -> Result<Vec<(Vec<RunRecord>, Dataset)>, HarnessError> {
    let pairs: Vec<(usize, &Combination, usize)> = combos
        .iter()
        .flat_map(|(ci, c)| (0..job.spec.runs).map(move |r| (*ci, c, r)))
        .collect();
    pairs
        .par_iter()
        .map(|&(ci, c, r)| job.run(features, sources, ci, c, r, methods))
        .collect()
}

fn combo_index(spec: &ExperimentSpec, name: &str) -> usize {
    spec.combinations
        .iter()
        .position(|c| c == name)
        .unwrap_or(spec.combinations.len())
}

/// Ranks the dimensions of `champions` (each with its own training set) and
/// keeps the `top_k` most impactful, simplified.
fn rank(champions: &[(Individual, Dataset)], top_k: usize) -> Result<Vec<RankedDimension>, HarnessError> {
    let entries: Vec<(&Individual, &Dataset)> = champions.iter().map(|(i, d)| (i, d)).collect();
    Ok(rank_dimension_impact_per_model(&entries, top_k)?)
}

fn individual_of(rec: &RunRecord) -> Option<Individual> {
    rec.champion
        .as_ref()
        .map(|c| Individual::new(c.model.hyperfeatures().to_vec()))
}

/// Evolves `spec.runs` M3GP models on `combination` with original features
/// and ranks their dimensions by impact. With an output directory the top
/// `top_k` formulas are written there as an asset file.
pub fn harvest_hyperfeatures(
    spec: &ExperimentSpec,
    combination: &str,
    top_k: usize,
) -> Result<Vec<RankedDimension>, HarnessError> {
    spec.validate()?;
    let combo = spec.resolve(combination)?;
    if top_k == 0 {
        return Err(HarnessError::Spec("top_k must be at least 1".into()));
    }
    let sources = load_sources(spec)?;
    let job = Job {
        spec,
        tags: spec.tags().iter().map(|t| t.to_string()).collect(),
        targets: Vec::new(),
    };
    let ci = combo_index(spec, combination);
    let results = run_all(&job, Features::Original, &sources, &[(ci, combo)], &[Method::M3gp])?;
    let champions: Vec<(Individual, Dataset)> = results
        .into_iter()
        .filter_map(|(recs, train)| individual_of(&recs[0]).map(|i| (i, train)))
        .collect();
    let ranked = rank(&champions, top_k)?;
    if let Some(dir) = &spec.output_dir {
        let exprs: Vec<Expr> = ranked.iter().map(|r| r.expression.clone()).collect();
        write_file(&dir.join(HYPERFEATURE_ASSET), &format_asset(&exprs))?;
    }
    Ok(ranked)
}

/// Runs the full protocol described by `spec` and, when the spec names an
/// output directory, writes the report files and champions there.
///
/// Run `r` of the `c`-th combination uses seed `derive_seed(master, [c, r])`
/// for its training rows and `derive_seed(that, [1, method])` for the
/// learner, so every run is reproducible on its own and the original and
/// hyper spaces see the same training rows.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutcome, HarnessError> {
    spec.validate()?;
    let sources = load_sources(spec)?;
    let combos: Vec<(usize, Combination)> = spec.combinations()?.into_iter().enumerate().collect();
    let job = Job {
        spec,
        tags: spec.tags().iter().map(|t| t.to_string()).collect(),
        targets: spec.target_tags(),
    };
    let spaces = spec.feature_mode.spaces();
    let mut records: Vec<RunRecord> = Vec::new();
    let mut harvest_pool: Vec<(Individual, Dataset)> = Vec::new();
    let harvest = match &spec.hyper_source {
        HyperSource::Harvest { combination, top_k } if spaces.contains(&Features::Hyper) => {
            Some((spec.resolve(combination)?, *top_k))
        }
        _ => None,
    };

    if spaces.contains(&Features::Original) {
        for (recs, train) in run_all(&job, Features::Original, &sources, &combos, &spec.methods)? {
            if let Some((h, _)) = &harvest {
                if let Some(ind) = recs.iter().find(|r| r.combination == h.name).and_then(individual_of) {
                    harvest_pool.push((ind, train));
                }
            }
            records.extend(recs);
        }
    }

    let mut harvested = Vec::new();
    let hyperfeatures: Vec<Expr> = if spaces.contains(&Features::Hyper) {
        match &spec.hyper_source {
            HyperSource::Bundled => bundled_hyperfeatures(),
            HyperSource::File { path } => {
                let text = std::fs::read_to_string(path).map_err(super::io_err(path))?;
                parse_asset(&text)?
            }
            HyperSource::Harvest { .. } => {
                let (h, top_k) = harvest.clone().expect("harvest resolved");
                if harvest_pool.is_empty() {
                    let only = [(combo_index(spec, &h.name), h)];
                    for (recs, train) in run_all(&job, Features::Original, &sources, &only, &[Method::M3gp])? {
                        if let Some(ind) = individual_of(&recs[0]) {
                            harvest_pool.push((ind, train));
                        }
                    }
                }
                harvested = rank(&harvest_pool, top_k)?;
                harvested.iter().map(|r| r.expression.clone()).collect()
            }
        }
    } else {
        Vec::new()
    };

    if spaces.contains(&Features::Hyper) {
        if hyperfeatures.is_empty() {
            return Err(HarnessError::Invalid("hyper-feature list is empty".into()));
        }
        let projected = sources
            .iter()
            .map(|s| s.project(&hyperfeatures))
            .collect::<Result<Vec<_>, _>>()?;
        for (recs, _) in run_all(&job, Features::Hyper, &projected, &combos, &spec.methods)? {
            records.extend(recs);
        }
    }

    let shape = ReportShape {
        seed: spec.seed,
        runs: spec.runs,
        train_size: spec.train_size,
        combinations: combos.iter().map(|(_, c)| c.name.clone()).collect(),
        targets: job.targets.clone(),
        methods: spec.methods.clone(),
        feature_spaces: spaces,
        hyperfeatures: hyperfeatures.iter().map(ToString::to_string).collect(),
    };
    let report = assemble(shape, &records);
    let outcome = ExperimentOutcome {
        report,
        runs: records,
        harvested,
        hyperfeatures,
    };
    if let Some(dir) = &spec.output_dir {
        write_outputs(&outcome, dir)?;
    }
    Ok(outcome)
}

/// Writes `report.json`, `report.csv`, `report.txt`, `runs.csv`, one JSON
/// file per M3GP champion and, if harvested, the hyper-feature asset.
pub fn write_outputs(outcome: &ExperimentOutcome, dir: &Path) -> Result<(), HarnessError> {
    let report = &outcome.report;
    write_file(&dir.join("report.json"), &to_json(report))?;
    write_file(&dir.join("report.csv"), &report.to_csv())?;
    write_file(&dir.join("report.txt"), &report.to_text())?;
    write_file(&dir.join("runs.csv"), &runs_csv(&outcome.runs))?;
    for rec in &outcome.runs {
        if let Some(c) = &rec.champion {
            let name = format!("{}_{}_run{:02}.json", c.features, c.combination, c.run);
            write_file(&dir.join("champions").join(name), &to_json(c))?;
        }
    }
    if !outcome.harvested.is_empty() {
        write_file(&dir.join(HYPERFEATURE_ASSET), &format_asset(&outcome.hyperfeatures))?;
    }
    Ok(())
}

fn runs_csv(runs: &[RunRecord]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "features",
        "method",
        "combination",
        "run",
        "seed",
        "train_accuracy",
        "target",
        "in_training",
        "accuracy",
    ])
    .expect("in-memory write");
    for r in runs {
        for t in &r.tests {
            w.write_record([
                r.features.name(),
                r.method.name(),
                &r.combination,
                &r.run.to_string(),
                &r.seed.to_string(),
                &r.train_accuracy.to_string(),
                &t.target,
                if t.in_training { "true" } else { "false" },
                &t.accuracy.to_string(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 csv")
}
