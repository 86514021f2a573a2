//! Command-line surface: argument parsing, config resolution and error reporting.

mod commands;
mod config;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use sage::{Result, SageError};

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(name = "sage", version, about = "Sparse additive GP emulator for perturbed-parameter ensembles")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Select terms and train one model per target.
    Train(TrainCmd),
    /// Predict query rows with a saved model.
    Predict(PredictCmd),
    /// Explained-variability report of a model on evaluation rows.
    Diagnose(DiagnoseCmd),
    /// Run a repeat-based experiment protocol.
    Experiment(ExperimentCmd),
    /// Write a synthetic ensemble, its schema and its ground-truth manifest.
    Synth(SynthCmd),
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
    /// Write the single primary artifact to stdout instead of files.
    #[arg(long)]
    stdout: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Ensemble CSV.
    #[arg(long)]
    dataset: Option<PathBuf>,
    /// Column-role sidecar; defaults to `<dataset>.schema.json`.
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    target: Vec<String>,
    /// `default` or `set1` … `set5`.
    #[arg(long)]
    preset: Option<String>,
    #[arg(long)]
    forced: bool,
    #[arg(long)]
    m1: Option<usize>,
    #[arg(long)]
    m2: Option<usize>,
    #[arg(long)]
    m3: Option<usize>,
    /// Comma-separated ids, or `z:<threshold>`.
    #[arg(long)]
    exclude_outliers: Option<String>,
    #[arg(long, value_delimiter = ',')]
    augment_with: Vec<String>,
    /// File of training ids (one per line) that drive selection.
    #[arg(long)]
    selection_subset: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct PredictCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// Id column of the query file; row numbers are used when it is absent.
    #[arg(long, default_value = "id")]
    id_column: String,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct DiagnoseCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    model: PathBuf,
    /// Evaluation CSV holding the model's parameters and target.
    #[arg(long)]
    eval: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    #[arg(long, default_value = "id")]
    id_column: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ExperimentKind {
    RandomSplits,
    HyperSweep,
    LearningCurve,
}

#[derive(Debug, Args)]
struct ExperimentCmd {
    kind: ExperimentKind,
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    repeats: Option<usize>,
}

#[derive(Debug, Args)]
struct SynthCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    noise_sd: Option<f64>,
}

fn read_id_file(path: &std::path::Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).map_err(|e| SageError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let ids: Vec<String> = text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .flat_map(|l| l.split(','))
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect();
    if ids.is_empty() {
        return Err(SageError::Input(format!("no ids in {}", path.display())));
    }
    Ok(ids)
}

fn resolve(common: &Common, run: Option<&RunArgs>) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(o) = &common.out_dir {
        cfg.out_dir = Some(o.clone());
    }
    if let Some(t) = common.threads {
        if t == 0 {
            return Err(SageError::Input("--threads must be at least 1".into()));
        }
        cfg.threads = Some(t);
    }
    let Some(run) = run else {
        return Ok(cfg);
    };
    if let Some(d) = &run.dataset {
        cfg.dataset = Some(d.clone());
    }
    if let Some(s) = &run.schema {
        cfg.schema = Some(s.clone());
    }
    if !run.target.is_empty() {
        cfg.targets = run.target.clone();
    }
    if let Some(p) = &run.preset {
        cfg.preset = Some(p.clone());
        cfg.hyper = None;
    }
    if run.forced {
        cfg.forced = true;
    }
    for (src, dst) in [(run.m1, &mut cfg.m1), (run.m2, &mut cfg.m2), (run.m3, &mut cfg.m3)] {
        if src.is_some() {
            *dst = src;
        }
    }
    if let Some(rule) = &run.exclude_outliers {
        cfg.exclude_outliers = Some(rule.parse()?);
    }
    if !run.augment_with.is_empty() {
        cfg.augment_with = run.augment_with.clone();
    }
    if let Some(p) = &run.selection_subset {
        cfg.selection_subset = Some(read_id_file(p)?);
    }
    Ok(cfg)
}

fn with_threads<T: Send>(threads: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    match threads {
        None => f(),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| SageError::Input(format!("cannot start {n} worker threads: {e}")))?
            .install(f),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(c) => {
            let cfg = resolve(&c.common, Some(&c.run))?;
            with_threads(cfg.threads, || commands::train(&cfg, c.common.stdout))
        }
        Command::Predict(c) => {
            let cfg = resolve(&c.common, None)?;
            with_threads(cfg.threads, || {
                commands::predict(&cfg, &c.model, &c.queries, &c.id_column, c.out.as_deref(), c.common.stdout)
            })
        }
        Command::Diagnose(c) => {
            let cfg = resolve(&c.common, None)?;
            with_threads(cfg.threads, || {
                commands::diagnose(&cfg, &c.model, &c.eval, c.schema.as_deref(), &c.id_column, c.common.stdout)
            })
        }
        Command::Experiment(c) => {
            let mut cfg = resolve(&c.common, Some(&c.run))?;
            if let Some(r) = c.repeats {
                cfg.experiment.repeats = r;
                cfg.experiment.curve_repeats = r;
            }
            let stdout = c.common.stdout;
            with_threads(cfg.threads, || match c.kind {
                ExperimentKind::RandomSplits => commands::random_splits(&cfg, stdout),
                ExperimentKind::HyperSweep => commands::hyper_sweep(&cfg, stdout),
                ExperimentKind::LearningCurve => commands::learning_curve(&cfg, stdout),
            })
        }
        Command::Synth(c) => {
            let cfg = resolve(&c.common, None)?;
            commands::synth(&cfg, &c.scenario, c.n, c.d, c.noise_sd, c.common.stdout)
        }
    }
}

/// Runs the CLI and returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            let body = serde_json::json!({
                "error": {
                    "kind": e.kind(),
                    "message": e.to_string(),
                    "exit_code": e.exit_code(),
                }
            });
            eprintln!("{body}");
            e.exit_code()
        }
    }
}
