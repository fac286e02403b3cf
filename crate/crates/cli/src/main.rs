use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use wsnsim::config::{ConfigError, DropSelection, ExperimentConfig};
use wsnsim::dataset::{self, DatasetError};
use wsnsim::engine::{self, EngineError, RunReport, RunResult, SUMMARY_HEADER};
use wsnsim::{trace, validation};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DATASET: u8 = 3;
const EXIT_DIVERGENCE: u8 = 4;
const EXIT_TRACE: u8 = 5;

#[derive(Parser, Debug)]
#[command(name = "wsnsim", version, about = "Distributed MLP over a simulated lossy sensor network")]
struct Cli {
    /// Log progress to stderr.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one experiment.
    Run(RunArgs),
    /// Run a grid of experiments and aggregate accuracies.
    Sweep(SweepArgs),
    /// Write drop/delay model validation tables.
    ValidateModels(ValidateArgs),
    /// Describe a dataset and optionally write its normalized snapshot.
    DatasetInfo(DatasetInfoArgs),
    /// Replay the scripted single-link delay/drop scenario.
    ReplayTrace,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    Theta,
    Seed,
    Drop,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "sweeps")]
    out: PathBuf,
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated values; integer ranges such as `1..10` are allowed for seeds.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    values: Vec<String>,
    /// Seeds run for every value (default: the config's seed).
    #[arg(long, value_delimiter = ',')]
    seeds: Vec<String>,
    /// Single seed override, as for `run`.
    #[arg(long)]
    seed: Option<u64>,
    /// Parallel runs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long, default_value = "model-validation")]
    out: PathBuf,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Delay samples for the histogram and KS statistic.
    #[arg(long, default_value_t = 1_000_000)]
    samples: usize,
    /// Packets per drop-rate check.
    #[arg(long, default_value_t = 1_000_000)]
    trials: u64,
}

#[derive(Args, Debug)]
struct DatasetInfoArgs {
    #[arg(long)]
    config: PathBuf,
    /// Writes the normalized snapshot here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

/// Error with the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::new(EXIT_CONFIG, e.to_string())
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        Failure::new(EXIT_DATASET, e.to_string())
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match &e {
            EngineError::Config(_) => EXIT_CONFIG,
            EngineError::Dataset(_) => EXIT_DATASET,
            EngineError::Divergence { .. } => EXIT_DIVERGENCE,
            _ => EXIT_FAILURE,
        };
        Failure::new(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::new(EXIT_FAILURE, e.to_string())
    }
}

impl From<csv::Error> for Failure {
    fn from(e: csv::Error) -> Self {
        Failure::new(EXIT_FAILURE, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Run(a) => cmd_run(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::ValidateModels(a) => cmd_validate_models(&a),
        Command::DatasetInfo(a) => cmd_dataset_info(&a),
        Command::ReplayTrace => cmd_replay_trace(),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn load_config(path: &Path, seed: Option<u64>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(s) = seed {
        cfg.seed = s;
    }
    Ok(cfg)
}

/// `<dataset>-<seed>-<first 8 hex digits of the config's SHA-256>`.
fn run_dir_name(cfg: &ExperimentConfig) -> Result<String, Failure> {
    let text = cfg.to_toml_string()?;
    let digest = hex::encode(Sha256::digest(text.as_bytes()));
    Ok(format!("{}-{}-{}", cfg.dataset_name, cfg.seed, &digest[..8]))
}

fn write_summary(path: &Path, reports: &[&RunReport]) -> Result<(), Failure> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_HEADER)?;
    for r in reports {
        w.write_record(r.summary_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a finished run's artifacts; nothing is written for failed runs.
fn write_run(out: &Path, cfg: &ExperimentConfig, result: &RunResult) -> Result<PathBuf, Failure> {
    let dir = out.join(run_dir_name(cfg)?);
    std::fs::create_dir_all(&dir)?;
    let report = &result.report;
    std::fs::write(dir.join("report.json"), report.to_json())?;
    std::fs::write(dir.join(&report.layout_file), result.layout.to_json())?;
    std::fs::write(dir.join(&report.weights_ho_file), result.training.network.hidden_output_matrix_text())?;
    std::fs::write(dir.join(&report.weights_ih_file), result.training.network.input_hidden_matrix_text())?;
    write_summary(&dir.join("summary.csv"), &[report])?;
    Ok(dir)
}

/// Records the configuration and the failure of a diverged run.
fn write_diagnostic(out: &Path, cfg: &ExperimentConfig, err: &EngineError) -> Result<(), Failure> {
    let dir = out.join(run_dir_name(cfg)?);
    std::fs::create_dir_all(&dir)?;
    let text = format!("# {err}\n{}", cfg.to_toml_string()?);
    std::fs::write(dir.join("diagnostic.txt"), text)?;
    Ok(())
}

fn execute(cfg: &ExperimentConfig, out: &Path) -> Result<(RunReport, PathBuf), Failure> {
    info!("running {} seed {}", cfg.dataset_name, cfg.seed);
    let result = match engine::run_experiment(cfg) {
        Ok(r) => r,
        Err(e @ EngineError::Divergence { .. }) => {
            write_diagnostic(out, cfg, &e)?;
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    let dir = write_run(out, cfg, &result)?;
    info!("{}: accuracy {:.4} after {} epochs", dir.display(), result.report.accuracy, result.report.epochs_run);
    Ok((result.report, dir))
}

fn cmd_run(a: &RunArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config, a.seed)?;
    let (report, dir) = execute(&cfg, &a.out)?;
    println!("{}", SUMMARY_HEADER.join(","));
    println!("{}", report.summary_row().join(","));
    println!("wrote {}", dir.display());
    Ok(())
}

fn parse_seeds(items: &[String]) -> Result<Vec<u64>, Failure> {
    let bad = |s: &str| Failure::new(EXIT_CONFIG, format!("invalid seed '{s}'"));
    let mut seeds = Vec::new();
    for item in items {
        let item = item.trim();
        if let Some((lo, hi)) = item.split_once("..") {
            let lo: u64 = lo.parse().map_err(|_| bad(item))?;
            let hi: u64 = hi.trim_start_matches('=').parse().map_err(|_| bad(item))?;
            if hi < lo {
                return Err(bad(item));
            }
            seeds.extend(lo..=hi);
        } else {
            seeds.push(item.parse().map_err(|_| bad(item))?);
        }
    }
    Ok(seeds)
}

fn parse_drop(value: &str) -> Result<DropSelection, Failure> {
    if value.eq_ignore_ascii_case("random") {
        return Ok(DropSelection::Random);
    }
    if let Ok(p) = value.parse::<f64>() {
        return Ok(DropSelection::Fixed(p));
    }
    Ok(DropSelection::Preset(value.to_string()))
}

struct Cell {
    value: String,
    /// Cells with the same group share an aggregate row.
    group: String,
    cfg: ExperimentConfig,
}

fn sweep_cells(base: &ExperimentConfig, a: &SweepArgs) -> Result<Vec<Cell>, Failure> {
    let values: Vec<String> = a.values.iter().map(|v| v.trim().to_string()).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        return Err(Failure::new(EXIT_CONFIG, "sweep needs at least one value"));
    }
    let seeds = if a.seeds.is_empty() { vec![base.seed] } else { parse_seeds(&a.seeds)? };
    let mut cells = Vec::new();
    if a.param == SweepParam::Seed {
        for seed in parse_seeds(&values)? {
            let mut cfg = base.clone();
            cfg.seed = seed;
            cells.push(Cell { value: seed.to_string(), group: "all".into(), cfg });
        }
        return Ok(cells);
    }
    for v in &values {
        for &seed in &seeds {
            let mut cfg = base.clone();
            cfg.seed = seed;
            match a.param {
                SweepParam::Theta => {
                    let theta: f64 = v.parse().map_err(|_| Failure::new(EXIT_CONFIG, format!("invalid theta '{v}'")))?;
                    cfg.theta = Some(theta);
                    cfg.t_wait = None;
                }
                SweepParam::Drop => cfg.drop_model = parse_drop(v)?,
                SweepParam::Seed => unreachable!(),
            }
            cfg.validate()?;
            cells.push(Cell { value: v.clone(), group: v.clone(), cfg });
        }
    }
    Ok(cells)
}

const SWEEP_HEADER: [&str; 15] = [
    "row", "param", "value", "seed", "status", "accuracy", "mse", "epochs", "C_M", "C_T", "runs", "failed",
    "min_accuracy", "max_accuracy", "mean_accuracy",
];

fn cmd_sweep(a: &SweepArgs) -> Result<(), Failure> {
    let base = load_config(&a.config, a.seed)?;
    let cells = sweep_cells(&base, a)?;
    let param = format!("{:?}", a.param).to_lowercase();
    let runs_dir = a.out.join("runs");
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(j) = a.jobs {
        builder = builder.num_threads(j.max(1));
    }
    let pool = builder.build().map_err(|e| Failure::new(EXIT_FAILURE, e.to_string()))?;
    let outcomes: Vec<Result<RunReport, String>> = pool.install(|| {
        cells
            .par_iter()
            .map(|c| execute(&c.cfg, &runs_dir).map(|(r, _)| r).map_err(|f| f.message))
            .collect()
    });

    std::fs::create_dir_all(&a.out)?;
    let path = a.out.join("sweep.csv");
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(SWEEP_HEADER)?;
    let mut groups: Vec<(String, Vec<f64>, usize)> = Vec::new();
    for (cell, outcome) in cells.iter().zip(&outcomes) {
        let seed = cell.cfg.seed.to_string();
        let group = match groups.iter_mut().find(|g| g.0 == cell.group) {
            Some(g) => g,
            None => {
                groups.push((cell.group.clone(), Vec::new(), 0));
                groups.last_mut().expect("just pushed")
            }
        };
        let row: Vec<String> = match outcome {
            Ok(r) => {
                group.1.push(r.accuracy);
                let s = r.summary_row();
                let mut row = vec!["cell".into(), param.clone(), cell.value.clone(), seed, "ok".into()];
                row.extend(s[3..].iter().cloned());
                row.extend(std::iter::repeat_n(String::new(), 5));
                row
            }
            Err(msg) => {
                group.2 += 1;
                warn!("{} seed {} failed: {msg}", cell.value, cell.cfg.seed);
                let mut row = vec!["cell".into(), param.clone(), cell.value.clone(), seed, format!("error: {msg}")];
                row.extend(std::iter::repeat_n(String::new(), 10));
                row
            }
        };
        w.write_record(&row)?;
    }
    for (value, accs, failed) in &groups {
        let stats = if accs.is_empty() {
            vec![String::new(); 3]
        } else {
            let min = accs.iter().copied().fold(f64::INFINITY, f64::min);
            let max = accs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = accs.iter().sum::<f64>() / accs.len() as f64;
            vec![min.to_string(), max.to_string(), mean.to_string()]
        };
        let mut row = vec!["aggregate".to_string(), param.clone(), value.clone(), String::new(), String::new()];
        row.extend(std::iter::repeat_n(String::new(), 5));
        row.push((accs.len() + failed).to_string());
        row.push(failed.to_string());
        row.extend(stats);
        w.write_record(&row)?;
    }
    w.flush()?;
    let failed: usize = groups.iter().map(|g| g.2).sum();
    println!("{} runs, {} failed; wrote {}", cells.len(), failed, path.display());
    Ok(())
}

fn cmd_validate_models(a: &ValidateArgs) -> Result<(), Failure> {
    if a.samples == 0 || a.trials == 0 {
        return Err(Failure::new(EXIT_CONFIG, "samples and trials must be positive"));
    }
    let check = validation::write_model_validation(&a.out, a.seed, a.samples, a.trials)?;
    println!(
        "delay: {} samples in [{:.4}, {:.4}], mean {:.5} (analytic {:.5}), KS {:.5}",
        check.samples, check.min, check.max, check.mean, check.analytic_mean, check.ks_statistic
    );
    println!("wrote {}", a.out.display());
    Ok(())
}

fn cmd_dataset_info(a: &DatasetInfoArgs) -> Result<(), Failure> {
    let cfg = load_config(&a.config, a.seed)?;
    let mut raw = dataset::load_csv(&cfg.dataset_path, cfg.has_header)?;
    raw.name = cfg.dataset_name.clone();
    println!("dataset: {}", raw.name);
    println!("instances: {}", raw.len());
    println!("attributes: {}", raw.attribute_count());
    for (name, count) in raw.class_names.iter().zip(raw.class_counts()) {
        println!("class {name}: {count}");
    }
    let prepared = engine::prepare_data(&cfg)?;
    println!("train: {} test: {}", prepared.train.len(), prepared.test.len());
    if let Some(out) = &a.out {
        std::fs::create_dir_all(out)?;
        let full = prepared.normalization.apply(&raw);
        dataset::write_snapshot(out, &cfg.dataset_name, &full, &prepared.normalization)?;
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn cmd_replay_trace() -> Result<(), Failure> {
    let steps = trace::replay().map_err(|e| Failure::new(EXIT_TRACE, e.to_string()))?;
    for s in &steps {
        println!("{s}");
    }
    match trace::compare(&steps) {
        None => {
            println!("trace matches golden sequence");
            Ok(())
        }
        Some(m) => Err(Failure::new(EXIT_TRACE, format!("trace mismatch: {m}"))),
    }
}
