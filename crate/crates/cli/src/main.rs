use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use m3gp_core::dataset::{load_csv, write_csv, DEFAULT_LABEL_COLUMN};
use m3gp_core::expr::{bundled_hyperfeatures, format_asset, parse_asset, Expr};
use m3gp_core::harness::{
    analyze_dispersion, export_visualization, harvest_hyperfeatures, run_experiment, transfer_eval,
    write_dispersion_csv, write_overlap_csv, write_visualization_csv, ChampionRecord, DatasetEntry, ExperimentSpec,
    FeatureMode, GroupBy, HarnessError, HyperSource, Method,
};
use m3gp_core::stats::{kruskal_wallis, kruskal_wallis_exact, ConfusionMatrix};
use m3gp_core::{Dataset, MdModel};

#[derive(Parser)]
#[command(name = "m3gp", version, about = "Evolve and evaluate M3GP hyper-features")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on one dataset combination and score every dataset.
    Train(TrainArgs),
    /// Run a full experiment described by a JSON spec.
    Experiment(ExperimentArgs),
    /// Rank champion dimensions of one combination and keep the best formulas.
    Harvest(HarvestArgs),
    /// Map a dataset into a hyper-feature space.
    Project(ProjectArgs),
    /// Score a saved model on datasets.
    Evaluate(EvaluateArgs),
    /// Score a model on a new target before and after recalibration.
    TransferEval(TransferArgs),
    /// Per-feature dispersion summaries and range overlaps.
    Analyze(AnalyzeArgs),
    /// Projected coordinates and centroids for plotting.
    ExportViz(ExportVizArgs),
    /// Kruskal-Wallis test between groups of values.
    StatsCompare(StatsArgs),
}

#[derive(Args)]
struct Common {
    /// Master random seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Name of the class column in CSV input.
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_col: String,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset as TAG=PATH; repeat for each image.
    #[arg(long = "data", value_name = "TAG=PATH", required = true, value_parser = parse_entry)]
    data: Vec<DatasetEntry>,
    /// Combination to train on, e.g. `BC` or `brazil+congo`.
    #[arg(long)]
    combination: String,
    #[arg(long, default_value_t = 1)]
    runs: usize,
    #[arg(long = "method", default_value = "m3gp")]
    methods: Vec<Method>,
    /// Hyper-feature asset; implies training in the hyper space.
    #[arg(long)]
    hyper: Option<PathBuf>,
    #[arg(long)]
    features: Option<FeatureMode>,
    #[arg(long, default_value_t = 2000)]
    train_size: usize,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    /// Output directory for reports and champions.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ExperimentArgs {
    spec: PathBuf,
    /// Overrides the spec's output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    runs: Option<usize>,
    /// Overrides the spec's methods.
    #[arg(long = "method")]
    methods: Vec<Method>,
}

#[derive(Args)]
struct HarvestArgs {
    spec: PathBuf,
    /// Combination whose champions are ranked.
    #[arg(long)]
    combination: String,
    #[arg(long, default_value_t = 10)]
    top_k: usize,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Asset file to write; printed to stdout otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ProjectArgs {
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Hyper-feature asset; the bundled formulas by default.
    #[arg(long)]
    hyper: Option<PathBuf>,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_col: String,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Champion or model JSON.
    #[arg(long)]
    model: PathBuf,
    #[arg(required = true)]
    data: Vec<PathBuf>,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_col: String,
}

#[derive(Args)]
struct TransferArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    target: PathBuf,
    /// Share of the target used to recalibrate.
    #[arg(long, default_value_t = 0.5)]
    fraction: f64,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[arg(required = true)]
    data: Vec<PathBuf>,
    #[arg(long, default_value = "class")]
    group_by: GroupBy,
    /// Directory for dispersion.csv and overlap.csv.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_col: String,
}

#[derive(Args)]
struct ExportVizArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(required = true)]
    data: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = DEFAULT_LABEL_COLUMN)]
    label_col: String,
}

#[derive(Args)]
struct StatsArgs {
    /// Comma-separated values, or a file of values; one per group.
    #[arg(required = true, num_args = 2..)]
    groups: Vec<String>,
    /// Also enumerate the exact permutation p-value.
    #[arg(long)]
    exact: bool,
}

enum Failure {
    Usage(String),
    Data(String),
}

impl From<HarnessError> for Failure {
    fn from(e: HarnessError) -> Self {
        if e.is_usage() {
            Failure::Usage(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

fn data_err(e: impl std::fmt::Display) -> Failure {
    Failure::Data(e.to_string())
}

fn parse_entry(s: &str) -> Result<DatasetEntry, String> {
    let (tag, path) = s
        .split_once('=')
        .ok_or_else(|| format!("expected TAG=PATH, got {s:?}"))?;
    if tag.is_empty() || path.is_empty() {
        return Err(format!("expected TAG=PATH, got {s:?}"));
    }
    Ok(DatasetEntry {
        tag: tag.to_string(),
        path: path.into(),
    })
}

fn load(path: &Path, label_col: &str) -> Result<Dataset, Failure> {
    load_csv(path, label_col, None).map_err(data_err)
}

fn load_hyper(path: Option<&Path>) -> Result<Vec<Expr>, Failure> {
    match path {
        None => Ok(bundled_hyperfeatures()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))?;
            parse_asset(&text).map_err(|e| Failure::Data(format!("{}: {e}", p.display())))
        }
    }
}

fn load_model(path: &Path) -> Result<MdModel, Failure> {
    Ok(ChampionRecord::load_model(path)?)
}

fn train(a: TrainArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::new(a.data, vec![a.combination]);
    spec.runs = a.runs;
    spec.methods = a.methods;
    spec.train_size = a.train_size;
    spec.label_col = a.common.label_col;
    spec.seed = a.common.seed.unwrap_or(0);
    spec.output_dir = a.out;
    if let Some(g) = a.generations {
        spec.config.generations = g;
    }
    if let Some(p) = a.population {
        spec.config.population_size = p;
    }
    spec.feature_mode = a.features.unwrap_or(if a.hyper.is_some() {
        FeatureMode::Hyper
    } else {
        FeatureMode::Original
    });
    if let Some(h) = a.hyper {
        spec.hyper_source = HyperSource::File { path: h };
    }
    let outcome = run_experiment(&spec)?;
    print!("{}", outcome.report.to_text());
    Ok(())
}

fn experiment(a: ExperimentArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::from_file(&a.spec)?;
    if let Some(out) = a.out {
        spec.output_dir = Some(out);
    }
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(runs) = a.runs {
        spec.runs = runs;
    }
    if !a.methods.is_empty() {
        spec.methods = a.methods;
    }
    let outcome = run_experiment(&spec)?;
    print!("{}", outcome.report.to_text());
    if let Some(dir) = &spec.output_dir {
        eprintln!("wrote {}", dir.display());
    }
    Ok(())
}

fn harvest(a: HarvestArgs) -> Result<(), Failure> {
    let mut spec = ExperimentSpec::from_file(&a.spec)?;
    spec.output_dir = None;
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    if let Some(runs) = a.runs {
        spec.runs = runs;
    }
    let ranked = harvest_hyperfeatures(&spec, &a.combination, a.top_k)?;
    let exprs: Vec<Expr> = ranked.iter().map(|r| r.expression.clone()).collect();
    let asset = format_asset(&exprs);
    match a.out {
        Some(path) => {
            std::fs::write(&path, &asset).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))?;
            for (i, r) in ranked.iter().enumerate() {
                println!("HF{i}  impact {:.4}  {}", r.impact, r.expression);
            }
        }
        None => print!("{asset}"),
    }
    Ok(())
}

fn project(a: ProjectArgs) -> Result<(), Failure> {
    let data = load(&a.input, &a.label_col)?;
    let hfs = load_hyper(a.hyper.as_deref())?;
    let hyper = data.project(&hfs).map_err(data_err)?;
    write_csv(&hyper, &a.out, &a.label_col).map_err(data_err)?;
    println!(
        "{} rows x {} hyper-features -> {}",
        hyper.n_rows(),
        hyper.arity(),
        a.out.display()
    );
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    for path in &a.data {
        let data = load(path, &a.label_col)?;
        let truth = model.align_labels(&data).map_err(data_err)?;
        let pred = model.predict_dataset(&data).map_err(data_err)?;
        let cm = ConfusionMatrix::from_predictions(model.classes().to_vec(), &truth, &pred).map_err(data_err)?;
        let acc = cm.accuracy().map_err(data_err)?;
        println!(
            "{}: accuracy {:.4} ({}/{})",
            path.display(),
            acc,
            cm.correct(),
            cm.total()
        );
        for (class, row) in cm.classes().iter().zip(cm.counts()) {
            let cells: Vec<String> = row.iter().map(u64::to_string).collect();
            println!("  {class:>8}: {}", cells.join(" "));
        }
    }
    Ok(())
}

fn transfer(a: TransferArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let target = load(&a.target, &a.common.label_col)?;
    let r = transfer_eval(&model, &target, a.fraction, a.common.seed.unwrap_or(0))?;
    println!("{}", serde_json::to_string_pretty(&r).expect("serializable result"));
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<(), Failure> {
    let data = a
        .data
        .iter()
        .map(|p| load(p, &a.label_col))
        .collect::<Result<Vec<_>, _>>()?;
    let table = analyze_dispersion(&data, a.group_by)?;
    write_dispersion_csv(&table, &a.out.join("dispersion.csv"))?;
    write_overlap_csv(&table, &a.out.join("overlap.csv"))?;
    println!(
        "{} summaries, {} overlaps -> {}",
        table.rows.len(),
        table.overlaps.len(),
        a.out.display()
    );
    Ok(())
}

fn export_viz(a: ExportVizArgs) -> Result<(), Failure> {
    let model = load_model(&a.model)?;
    let data = a
        .data
        .iter()
        .map(|p| load(p, &a.label_col))
        .collect::<Result<Vec<_>, _>>()?;
    let rows = export_visualization(&model, &data)?;
    write_visualization_csv(&rows, &a.out)?;
    println!(
        "{} rows x {} coordinates -> {}",
        rows.len(),
        model.dimensions(),
        a.out.display()
    );
    Ok(())
}

fn parse_values(arg: &str) -> Result<Vec<f64>, Failure> {
    let path = Path::new(arg);
    let text = if path.is_file() {
        std::fs::read_to_string(path).map_err(|e| Failure::Data(format!("{arg}: {e}")))?
    } else {
        arg.to_string()
    };
    text.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .map_err(|_| Failure::Usage(format!("not a number: {s:?}")))
        })
        .collect()
}

fn stats_compare(a: StatsArgs) -> Result<(), Failure> {
    let groups = a
        .groups
        .iter()
        .map(|g| parse_values(g))
        .collect::<Result<Vec<_>, _>>()?;
    let v = kruskal_wallis(&groups).map_err(|e| Failure::Usage(e.to_string()))?;
    let mut out = serde_json::to_value(&v).expect("serializable verdict");
    if a.exact {
        let p = kruskal_wallis_exact(&groups).map_err(|e| Failure::Usage(e.to_string()))?;
        out["exact_p_value"] = p.into();
    }
    println!("{}", serde_json::to_string_pretty(&out).expect("serializable verdict"));
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let result = match cli.command {
        Command::Train(a) => train(a),
        Command::Experiment(a) => experiment(a),
        Command::Harvest(a) => harvest(a),
        Command::Project(a) => project(a),
        Command::Evaluate(a) => evaluate(a),
        Command::TransferEval(a) => transfer(a),
        Command::Analyze(a) => analyze(a),
        Command::ExportViz(a) => export_viz(a),
        Command::StatsCompare(a) => stats_compare(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
