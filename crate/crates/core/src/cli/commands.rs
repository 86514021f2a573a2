use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sage::artifact::{to_json, write_json, ArtifactMeta, Envelope};
use sage::data::{
    exclude_outliers, load_csv, make_split, save_csv, synth_generate_with, write_csv, CsvSchema, Dataset,
    ExclusionReport, Scenario, SplitPlan, SplitRule, SynthOptions,
};
use sage::diagnostics::{derive_seed, explained_variability, hyper_sweep as sweep, learning_curve as curve};
use sage::emulator::{load_model, save_model, write_predictions, EmulatorModel};
use sage::pipeline::train_target;
use sage::selection::HyperparameterSet;
use sage::{Result, SageError};

use super::RunConfig;

fn input(msg: impl Into<String>) -> SageError {
    SageError::Input(msg.into())
}

fn io(path: &Path, e: std::io::Error) -> SageError {
    SageError::Io {
        path: path.display().to_string(),
        source: e,
    }
}

fn out_dir(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg
        .out_dir
        .clone()
        .ok_or_else(|| input("--out-dir is required unless --stdout is given"))?;
    std::fs::create_dir_all(&dir).map_err(|e| io(&dir, e))?;
    Ok(dir)
}

fn meta(cfg: &RunConfig) -> ArtifactMeta {
    ArtifactMeta::new(cfg.hash(), cfg.seed)
}

fn emit<T: Serialize>(cfg: &RunConfig, dir: &Path, file: &str, artifact: &str, data: T) -> Result<()> {
    let path = dir.join(file);
    write_json(&path, &Envelope::new(meta(cfg), artifact, data))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn print_stdout(text: &str) -> Result<()> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| io(Path::new("<stdout>"), e))
}

/// Safe file-name fragment for a target name.
fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn load_dataset(cfg: &RunConfig) -> Result<Dataset> {
    let path = cfg.dataset.as_ref().ok_or_else(|| input("no dataset given (--dataset or config)"))?;
    let schema_path = cfg
        .schema
        .clone()
        .unwrap_or_else(|| path.with_extension("schema.json"));
    let schema = CsvSchema::load(&schema_path)?;
    load_csv(path, &schema)
}

/// Dataset after outlier exclusion, plus the exclusion report.
fn prepared(cfg: &RunConfig) -> Result<(Dataset, Option<ExclusionReport>)> {
    let ds = load_dataset(cfg)?;
    match &cfg.exclude_outliers {
        Some(rule) => {
            let (ds, report) = exclude_outliers(&ds, rule)?;
            log::info!("excluded {} rows, {} remain", report.excluded.len(), report.remaining);
            Ok((ds, Some(report)))
        }
        None => Ok((ds, None)),
    }
}

fn target_indices(cfg: &RunConfig, ds: &Dataset) -> Result<Vec<usize>> {
    if cfg.targets.is_empty() {
        if ds.n_targets() == 0 {
            return Err(input("dataset has no targets"));
        }
        return Ok((0..ds.n_targets()).collect());
    }
    cfg.targets.iter().map(|t| ds.target_index(t)).collect()
}

/// Resolved config as written next to the artifacts.
fn written_config(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.out_dir = None;
    c.threads = None;
    c
}

pub fn train(cfg: &RunConfig, stdout: bool) -> Result<()> {
    let (ds, exclusions) = prepared(cfg)?;
    let targets = target_indices(cfg, &ds)?;
    let plan = cfg.split.as_ref().map(|r| make_split(&ds, r)).transpose()?;
    let train = match &plan {
        Some(p) => p.train_set(&ds)?,
        None => ds.clone(),
    };
    let opts = cfg.train_options()?;
    if stdout && targets.len() != 1 {
        return Err(input("--stdout needs exactly one target"));
    }
    let hash = cfg.hash();
    let mut outputs = Vec::with_capacity(targets.len());
    for &t in &targets {
        log::info!("training target '{}' on {} rows", ds.target_names()[t], train.n_rows());
        let out = train_target(&train, t, &opts)?;
        outputs.push((t, out));
    }
    if stdout {
        let (_, out) = &outputs[0];
        return print_stdout(&out.model.clone().with_provenance(cfg.seed, hash).to_json());
    }
    let dir = out_dir(cfg)?;
    write_json(dir.join("config.json"), &written_config(cfg))?;
    if let Some(p) = &plan {
        emit(cfg, &dir, "split.json", "split_plan", p)?;
    }
    if let Some(r) = &exclusions {
        emit(cfg, &dir, "exclusions.json", "exclusion_report", r)?;
    }
    for (t, out) in outputs {
        let name = slug(&ds.target_names()[t]);
        let model = out.model.with_provenance(cfg.seed, hash.clone());
        save_model(&model, dir.join(format!("model_{name}.json")))?;
        emit(cfg, &dir, &format!("selection_{name}.json"), "selection_report", &out.report)?;
        for (easy, r) in cfg.augment_with.iter().zip(&out.provider_reports) {
            emit(
                cfg,
                &dir,
                &format!("selection_{name}_provider_{}.json", slug(easy)),
                "selection_report",
                r,
            )?;
        }
    }
    Ok(())
}

/// CSV header names, or `None` for a file with no header line.
fn csv_header(path: &Path) -> Result<Option<Vec<String>>> {
    let text = std::fs::read_to_string(path).map_err(|e| io(path, e))?;
    if text.trim().is_empty() {
        return Ok(None);
    }
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let h = r.headers().map_err(|e| SageError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(Some(h.iter().map(|s| s.trim().to_string()).collect()))
}

fn model_rows(model: &EmulatorModel, path: &Path, id_column: &str, with_target: bool) -> Result<Option<Dataset>> {
    let Some(header) = csv_header(path)? else {
        return Ok(None);
    };
    let schema = CsvSchema {
        parameters: model.input_names().into_iter().map(String::from).collect(),
        targets: if with_target {
            vec![model.target().to_string()]
        } else {
            Vec::new()
        },
        id: header.iter().any(|h| h == id_column).then(|| id_column.to_string()),
        tag: None,
    };
    load_csv(path, &schema).map(Some)
}

pub fn predict(
    cfg: &RunConfig,
    model_path: &Path,
    queries: &Path,
    id_column: &str,
    out: Option<&Path>,
    stdout: bool,
) -> Result<()> {
    let model = load_model(model_path)?;
    let mut buf = Vec::new();
    match model_rows(&model, queries, id_column, false)? {
        Some(ds) => {
            let pred = model.predict(&ds)?;
            let n_ex = pred.extrapolated.iter().filter(|f| **f).count();
            if n_ex > 0 {
                log::warn!("{n_ex} query rows lie outside the training ranges");
            }
            write_predictions(&mut buf, &ds.row_ids(), &pred)?;
        }
        None => write_predictions(
            &mut buf,
            &[],
            &sage::emulator::Prediction {
                values: Vec::new(),
                extrapolated: Vec::new(),
            },
        )?,
    }
    if stdout {
        return print_stdout(std::str::from_utf8(&buf).expect("csv output is utf-8"));
    }
    let path = match out {
        Some(p) => p.to_path_buf(),
        None => out_dir(cfg)?.join(format!("predictions_{}.csv", slug(model.target()))),
    };
    std::fs::write(&path, &buf).map_err(|e| io(&path, e))?;
    log::info!("wrote {}", path.display());
    Ok(())
}

pub fn diagnose(
    cfg: &RunConfig,
    model_path: &Path,
    eval: &Path,
    schema: Option<&Path>,
    id_column: &str,
    stdout: bool,
) -> Result<()> {
    let model = load_model(model_path)?;
    let ds = match schema {
        Some(s) => load_csv(eval, &CsvSchema::load(s)?)?,
        None => model_rows(&model, eval, id_column, true)?
            .ok_or_else(|| input(format!("{} is empty", eval.display())))?,
    };
    let report = explained_variability(&model, &ds)?;
    let env = Envelope::new(meta(cfg), "diagnostics_report", &report);
    if stdout {
        return print_stdout(&to_json(&env));
    }
    let dir = out_dir(cfg)?;
    let name = slug(model.target());
    write_json(dir.join(format!("diagnostics_{name}.json")), &env)?;
    let path = dir.join(format!("diagnostics_{name}.csv"));
    let mut w = csv::Writer::from_path(&path).map_err(|e| SageError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    })?;
    let csv_err = |e: csv::Error| SageError::Parse {
        context: path.display().to_string(),
        message: e.to_string(),
    };
    w.write_record(["position", "label", "order", "contribution", "rmse_after"])
        .map_err(csv_err)?;
    for t in &report.terms {
        w.write_record([
            t.position.to_string(),
            t.label.clone(),
            t.order.to_string(),
            t.contribution.to_string(),
            report.curve[t.position + 1].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| io(&path, e))?;
    log::info!("wrote diagnostics for '{}' to {}", model.target(), dir.display());
    Ok(())
}

fn finish<T: Serialize>(cfg: &RunConfig, stdout: bool, file: &str, artifact: &str, data: T) -> Result<()> {
    if stdout {
        return print_stdout(&to_json(&Envelope::new(meta(cfg), artifact, data)));
    }
    let dir = out_dir(cfg)?;
    write_json(dir.join("config.json"), &written_config(cfg))?;
    emit(cfg, &dir, file, artifact, data)
}

/// Configured split, or a seeded 80/20 random split.
fn split_or_default(cfg: &RunConfig, ds: &Dataset) -> Result<SplitPlan> {
    let rule = cfg.split.clone().unwrap_or_else(|| {
        let train = (ds.n_rows() as f64 * 0.8).round() as usize;
        SplitRule::Random {
            train,
            validation: ds.n_rows() - train,
            seed: cfg.seed,
        }
    });
    make_split(ds, &rule)
}

pub fn random_splits(cfg: &RunConfig, stdout: bool) -> Result<()> {
    let (ds, _) = prepared(cfg)?;
    let targets = target_indices(cfg, &ds)?;
    let default = cfg.split.as_ref().map(|r| make_split(&ds, r)).transpose()?;
    let (train_size, val_size) = match (&cfg.experiment.train_size, &cfg.experiment.validation_size, &default) {
        (Some(t), Some(v), _) => (*t, *v),
        (_, _, Some(p)) => (p.train.len(), p.validation.len()),
        _ => {
            let t = (ds.n_rows() as f64 * 0.8).round() as usize;
            (t, ds.n_rows() - t)
        }
    };
    let report = sage::diagnostics::random_splits(
        &ds,
        &targets,
        train_size,
        val_size,
        cfg.experiment.repeats,
        cfg.seed,
        default.as_ref(),
        &cfg.train_options()?,
    )?;
    finish(cfg, stdout, "experiment_random_splits.json", "random_splits_report", report)
}

pub fn hyper_sweep(cfg: &RunConfig, stdout: bool) -> Result<()> {
    if !cfg.augment_with.is_empty() {
        return Err(input("hyper-sweep does not support augmentation"));
    }
    let (ds, _) = prepared(cfg)?;
    let targets = target_indices(cfg, &ds)?;
    let plan = split_or_default(cfg, &ds)?;
    let train = plan.train_set(&ds)?;
    let val = plan.validation_set(&ds)?;
    let opts = cfg.train_options()?;
    let reports = targets
        .iter()
        .map(|&t| {
            let seq = train_target(&train, t, &opts)?.model.sequence();
            sweep(&train, &val, t, &seq, &HyperparameterSet::all_presets())
        })
        .collect::<Result<Vec<_>>>()?;
    finish(cfg, stdout, "experiment_hyper_sweep.json", "hyper_sweep_report", reports)
}

pub fn learning_curve(cfg: &RunConfig, stdout: bool) -> Result<()> {
    let (ds, _) = prepared(cfg)?;
    let targets = target_indices(cfg, &ds)?;
    let eval_ids: Vec<String> = match &cfg.split {
        Some(r) => make_split(&ds, r)?.validation,
        None => {
            let k = cfg.experiment.eval_size;
            if k >= ds.n_rows() {
                return Err(input(format!("eval_size {k} leaves no training rows")));
            }
            let mut pos: Vec<usize> = (0..ds.n_rows()).collect();
            pos.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, u64::MAX)));
            let mut pos = pos[..k].to_vec();
            pos.sort_unstable();
            let ids = ds.row_ids();
            pos.into_iter().map(|i| ids[i].to_string()).collect()
        }
    };
    let opts = cfg.train_options()?;
    let reports = targets
        .iter()
        .map(|&t| {
            curve(
                &ds,
                t,
                &cfg.experiment.sizes,
                cfg.experiment.curve_repeats,
                &eval_ids,
                cfg.seed,
                cfg.experiment.top_k_mode,
                &opts,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    finish(cfg, stdout, "experiment_learning_curve.json", "learning_curve_report", reports)
}

pub fn synth(cfg: &RunConfig, scenario: &str, n: usize, d: usize, noise_sd: Option<f64>, stdout: bool) -> Result<()> {
    let sc: Scenario = scenario.parse()?;
    let opts = SynthOptions {
        noise_sd,
        ..SynthOptions::default()
    };
    let (ds, manifest) = synth_generate_with(sc, n, d, cfg.seed, &opts)?;
    if stdout {
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf)?;
        return print_stdout(std::str::from_utf8(&buf).expect("csv output is utf-8"));
    }
    let dir = out_dir(cfg)?;
    let csv_path = dir.join(format!("{sc}.csv"));
    let schema = save_csv(&ds, &csv_path)?;
    schema.save(dir.join(format!("{sc}.schema.json")))?;
    emit(cfg, &dir, &format!("{sc}.manifest.json"), "synth_manifest", &manifest)?;
    log::info!("wrote {} rows to {}", ds.n_rows(), csv_path.display());
    Ok(())
}
