//! Command-line front end: `generate`, `run`, `report` and `validate`.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Season, SplitSpec};
use crate::datagen::{generate_league, load_csv, validate, write_csv, LeagueConfig};
use crate::error::{Error, Result};
use crate::pipeline::analysis::{analyze, write_manifest, write_outputs, AnalysisConfig, Emit};
use crate::pipeline::report::write_report;
use crate::pipeline::{run_suite, ModelName, PipelineParams, SEEDS};
use crate::prediction::RegressorKind;

/// Environment variable bounding the worker pool size.
pub const THREADS_ENV: &str = "RELCAP_THREADS";
/// League configuration written next to generated data.
pub const CONFIG_FILE: &str = "config.json";

#[derive(Debug, Parser)]
#[command(name = "relcap", version, about = "Graph-augmented salary valuation benchmark")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic league as a CSV directory.
    Generate(GenerateArgs),
    /// Run the model suite and write metrics, tri-state, cases and traits.
    Run(Box<RunArgs>),
    /// Summarize a completed run and write plot data.
    Report(ReportArgs),
    /// Load a CSV directory and report invariant violations.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
struct GenerateArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// JSON league configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Generator seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Standard deviation of the log-salary noise.
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Active roster size per season.
    #[arg(long)]
    players: Option<usize>,
    /// First recorded season.
    #[arg(long)]
    first_season: Option<Season>,
    /// Last recorded season.
    #[arg(long)]
    last_season: Option<Season>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmitFlag {
    Json,
    Csv,
    Plotdata,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Load the dataset from this CSV directory.
    #[arg(long, conflicts_with = "generate_seed")]
    data: Option<PathBuf>,
    /// Generate the dataset in memory with this seed.
    #[arg(long)]
    generate_seed: Option<u64>,
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated model configurations (default: all nine).
    #[arg(long, value_delimiter = ',')]
    models: Option<Vec<ModelName>>,
    /// Comma-separated run seeds.
    #[arg(long, value_delimiter = ',')]
    seeds: Option<Vec<u64>>,
    /// Comma-separated regressors: forest, gbt.
    #[arg(long, value_delimiter = ',')]
    regressors: Option<Vec<RegressorKind>>,
    /// Comma-separated training seasons.
    #[arg(long, value_delimiter = ',')]
    train: Option<Vec<Season>>,
    /// Comma-separated validation seasons.
    #[arg(long, value_delimiter = ',')]
    val: Option<Vec<Season>>,
    /// Test season.
    #[arg(long, value_delimiter = ',')]
    test: Option<Vec<Season>>,
    /// Output families (default: csv,json).
    #[arg(long, value_delimiter = ',')]
    emit: Option<Vec<EmitFlag>>,
    /// Use the reduced hyperparameter set.
    #[arg(long)]
    quick: bool,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Directory written by `run`.
    run_dir: PathBuf,
}

#[derive(Debug, Args)]
struct ValidateArgs {
    #[arg(long)]
    data: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Load(PathBuf),
    Generate(LeagueConfig),
}

/// Contents of a `run --config` file; every field is optional.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfigFile {
    pub data: Option<DataSource>,
    pub split: Option<SplitSpec>,
    pub models: Option<Vec<ModelName>>,
    pub seeds: Option<Vec<u64>>,
    pub regressors: Option<Vec<RegressorKind>>,
    pub out: Option<PathBuf>,
    pub emit: Option<Vec<EmitFlag>>,
    pub params: Option<PipelineParams>,
    pub analysis: Option<AnalysisConfig>,
}

/// Fully resolved run configuration.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataSource,
    pub split: SplitSpec,
    pub models: Vec<ModelName>,
    pub seeds: Vec<u64>,
    pub regressors: Vec<RegressorKind>,
    pub out: PathBuf,
    pub emit: Vec<EmitFlag>,
    pub params: PipelineParams,
    pub analysis: AnalysisConfig,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = fs::read(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn resolve_run(args: RunArgs) -> Result<RunConfig> {
    let file: RunConfigFile = match &args.config {
        Some(p) => read_json(p)?,
        None => RunConfigFile::default(),
    };
    let data = match (args.data, args.generate_seed, file.data) {
        (Some(dir), _, _) => DataSource::Load(dir),
        (None, Some(seed), Some(DataSource::Generate(league))) => DataSource::Generate(LeagueConfig { seed, ..league }),
        (None, Some(seed), _) => DataSource::Generate(LeagueConfig { seed, ..LeagueConfig::default() }),
        (None, None, Some(d)) => d,
        (None, None, None) => return Err(Error::Config("no data source: pass --data or --generate-seed".into())),
    };
    let mut split = file.split.unwrap_or_default();
    if let Some(t) = args.train {
        split.train_seasons = t.into_iter().collect();
    }
    if let Some(v) = args.val {
        split.val_seasons = v.into_iter().collect();
    }
    if let Some(t) = args.test {
        split.test_seasons = t.into_iter().collect();
    }
    split.check()?;
    let models = args.models.or(file.models).unwrap_or_else(|| ModelName::ALL.to_vec());
    if models.is_empty() {
        return Err(Error::Config("model list is empty".into()));
    }
    let seeds = args.seeds.or(file.seeds).unwrap_or_else(|| SEEDS.to_vec());
    if seeds.is_empty() {
        return Err(Error::Config("seed list is empty".into()));
    }
    let regressors = args.regressors.or(file.regressors).unwrap_or_else(|| RegressorKind::ALL.to_vec());
    if regressors.is_empty() {
        return Err(Error::Config("regressor list is empty".into()));
    }
    let out = args.out.or(file.out).ok_or_else(|| Error::Config("no output directory: pass --out".into()))?;
    let emit = args.emit.or(file.emit).unwrap_or_else(|| vec![EmitFlag::Csv, EmitFlag::Json]);
    if emit.contains(&EmitFlag::Plotdata) && !(emit.contains(&EmitFlag::Csv) && emit.contains(&EmitFlag::Json)) {
        return Err(Error::Config("plotdata requires csv and json output".into()));
    }
    let params = if args.quick { PipelineParams::quick() } else { file.params.unwrap_or_default() };
    Ok(RunConfig {
        data,
        split,
        models,
        seeds,
        regressors,
        out,
        emit,
        params,
        analysis: file.analysis.unwrap_or_default(),
    })
}

fn load_data(source: &DataSource) -> Result<Dataset> {
    match source {
        DataSource::Load(dir) => Ok(load_csv(dir)?.0),
        DataSource::Generate(cfg) => Ok(generate_league(cfg)?.0),
    }
}

/// Executes a resolved run; returns the output directory.
pub fn execute_run(cfg: &RunConfig) -> Result<PathBuf> {
    let dataset = load_data(&cfg.data)?;
    eprintln!(
        "relcap: {} records, {} models x {} seeds x {} regressors",
        dataset.len(),
        cfg.models.len(),
        cfg.seeds.len(),
        cfg.regressors.len()
    );
    let suite = match run_suite(&dataset, &cfg.models, &cfg.seeds, &cfg.regressors, &cfg.split, &cfg.params) {
        Ok(s) => s,
        Err(f) => {
            write_manifest(&cfg.out, &f.manifest)?;
            return Err(f.error.context("suite"));
        }
    };
    let analysis = match analyze(&suite, &dataset, &cfg.split, &cfg.analysis) {
        Ok(a) => a,
        Err(e) => {
            let mut m = suite.manifest.clone();
            m.complete = false;
            m.error = Some(e.to_string());
            write_manifest(&cfg.out, &m)?;
            return Err(e.context("analysis"));
        }
    };
    let emit = Emit { csv: cfg.emit.contains(&EmitFlag::Csv), json: cfg.emit.contains(&EmitFlag::Json) };
    write_outputs(&cfg.out, &suite, &analysis, emit)?;
    if cfg.emit.contains(&EmitFlag::Plotdata) {
        write_report(&cfg.out)?;
    }
    println!("shared test instances: {}", suite.intersection.len());
    println!("outputs written to {}", cfg.out.display());
    Ok(cfg.out.clone())
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mut cfg: LeagueConfig = match &args.config {
        Some(p) => read_json(p)?,
        None => LeagueConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.noise_sd {
        cfg.noise_sd = n;
    }
    if let Some(n) = args.players {
        cfg.n_players = n;
    }
    if let Some(s) = args.first_season {
        cfg.first_season = s;
    }
    if let Some(s) = args.last_season {
        cfg.last_season = s;
    }
    let (dataset, truth) = generate_league(&cfg)?;
    write_csv(&dataset, Some(&truth), &args.out)?;
    fs::write(args.out.join(CONFIG_FILE), serde_json::to_vec_pretty(&cfg)?)?;
    println!("{} records written to {} (dataset {})", dataset.len(), args.out.display(), dataset.fingerprint());
    Ok(())
}

fn cmd_report(args: ReportArgs) -> Result<()> {
    let out = write_report(&args.run_dir)?;
    print!("{}", out.summary);
    for f in &out.files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn cmd_validate(args: ValidateArgs) -> Result<()> {
    let (dataset, load) = load_csv(&args.data)?;
    for (file, n) in &load.rows {
        println!("{file}: {n} rows");
    }
    let report = validate(&dataset);
    for v in &report.violations {
        let key = v.key.as_ref().map(|k| format!(" {}/{}", k.player_id, k.season)).unwrap_or_default();
        println!("{:?}{key}: {}", v.kind, v.message);
    }
    if report.is_clean() {
        println!("ok: {} records, no violations", dataset.len());
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{} violations", report.violations.len())))
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got `{v}`")))?;
    // A pool configured earlier in the same process is kept.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Run(a) => execute_run(&resolve_run(*a)?).map(|_| ()),
        Command::Report(a) => cmd_report(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
