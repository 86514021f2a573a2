use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{explained_variability, r_square, top_k, DiagnosticsReport};
use crate::data::{make_split, Dataset, SplitPlan, SplitRule};
use crate::emulator::{final_train, EmulatorModel};
use crate::error::{Result, SageError};
use crate::pipeline::{train_target, TrainOptions};
use crate::selection::{HyperparameterSet, TermSpec};

/// Seed of repeat `stream` under `master`, via two rounds of SplitMix64.
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(mix(master) ^ stream)
}

fn spread(values: &[f64]) -> (f64, f64, f64, f64) {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (mean, min, max, max - min)
}

fn validation_r2(model: &EmulatorModel, val: &Dataset) -> Result<f64> {
    let t = val.target_index(model.target())?;
    r_square(&model.predict(val)?.values, &val.target_column(t))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpread {
    pub target: String,
    /// R² of the explicitly given default split, when supplied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default_r2: Option<f64>,
    pub r2: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomSplitsReport {
    pub train_size: usize,
    pub validation_size: usize,
    pub repeats: usize,
    pub split_seeds: Vec<u64>,
    pub targets: Vec<TargetSpread>,
}

fn split_r2(ds: &Dataset, plan: &SplitPlan, targets: &[usize], opts: &TrainOptions) -> Result<Vec<f64>> {
    let train = plan.train_set(ds)?;
    let val = plan.validation_set(ds)?;
    targets
        .iter()
        .map(|&t| validation_r2(&train_target(&train, t, opts)?.model, &val))
        .collect()
}

/// Trains and validates each target on `repeats` random splits plus an optional default split.
pub fn random_splits(
    ds: &Dataset,
    targets: &[usize],
    train_size: usize,
    validation_size: usize,
    repeats: usize,
    seed: u64,
    default_split: Option<&SplitPlan>,
    opts: &TrainOptions,
) -> Result<RandomSplitsReport> {
    if repeats == 0 {
        return Err(SageError::input("random splits need at least one repeat"));
    }
    if validation_size == 0 {
        return Err(SageError::input("validation set must be non-empty"));
    }
    if train_size + validation_size > ds.n_rows() {
        return Err(SageError::input(format!(
            "split sizes {train_size} + {validation_size} exceed {} rows",
            ds.n_rows()
        )));
    }
    let seeds: Vec<u64> = (0..repeats as u64).map(|r| derive_seed(seed, r)).collect();
    let per_repeat: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&s| {
            let plan = make_split(
                ds,
                &SplitRule::Random {
                    train: train_size,
                    validation: validation_size,
                    seed: s,
                },
            )?;
            let o = TrainOptions {
                seed: s,
                ..opts.clone()
            };
            split_r2(ds, &plan, targets, &o)
        })
        .collect::<Result<_>>()?;
    let default_r2 = default_split.map(|p| split_r2(ds, p, targets, opts)).transpose()?;
    let targets = targets
        .iter()
        .enumerate()
        .map(|(k, &t)| {
            let r2: Vec<f64> = per_repeat.iter().map(|r| r[k]).collect();
            let (mean, min, max, spread) = spread(&r2);
            TargetSpread {
                target: ds.target_names()[t].clone(),
                default_r2: default_r2.as_ref().map(|d| d[k]),
                r2,
                mean,
                min,
                max,
                spread,
            }
        })
        .collect();
    Ok(RandomSplitsReport {
        train_size,
        validation_size,
        repeats,
        split_seeds: seeds,
        targets,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub set: String,
    pub hyper: HyperparameterSet,
    pub r2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperSweepReport {
    pub target: String,
    pub sequence: Vec<TermSpec>,
    pub entries: Vec<SweepEntry>,
    /// Max minus min R² over the entries.
    pub spread: f64,
}

/// Refits a frozen sequence under each hyperparameter set and validates it.
pub fn hyper_sweep(
    train: &Dataset,
    validation: &Dataset,
    target: usize,
    sequence: &[TermSpec],
    sets: &[HyperparameterSet],
) -> Result<HyperSweepReport> {
    if sets.is_empty() {
        return Err(SageError::input("hyperparameter sweep needs at least one set"));
    }
    let entries: Vec<SweepEntry> = sets
        .par_iter()
        .map(|h| {
            let m = final_train(train, target, sequence, h)?;
            Ok(SweepEntry {
                set: h.name.clone(),
                hyper: h.clone(),
                r2: validation_r2(&m, validation)?,
            })
        })
        .collect::<Result<_>>()?;
    let r2: Vec<f64> = entries.iter().map(|e| e.r2).collect();
    Ok(HyperSweepReport {
        target: train.target_names()[target].clone(),
        sequence: sequence.to_vec(),
        spread: spread(&r2).3,
        entries,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopKMode {
    /// Rank terms by contribution separately in every cell.
    #[default]
    PerSize,
    /// Use the leading terms of the largest size's first repeat everywhere.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCell {
    pub size: usize,
    pub repeat: usize,
    pub seed: u64,
    pub n_terms: usize,
    /// Sum of the positive contributions, which bounds every top-k subtotal.
    pub total: f64,
    /// Curve drop `curve[0] − curve[last]`, negative terms included.
    pub net_total: f64,
    pub top3: f64,
    pub top6: f64,
    pub r_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningSummary {
    pub size: usize,
    pub mean_total: f64,
    pub mean_net_total: f64,
    pub mean_top3: f64,
    pub mean_top6: f64,
    pub mean_r_square: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearningCurveReport {
    pub target: String,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub top_k_mode: TopKMode,
    pub eval_rows: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_top3: Option<Vec<TermSpec>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_top6: Option<Vec<TermSpec>>,
    pub cells: Vec<LearningCell>,
    pub summary: Vec<LearningSummary>,
}

impl LearningCurveReport {
    /// Max minus min over sizes of the per-size mean of `f`.
    pub fn variation(&self, f: impl Fn(&LearningSummary) -> f64) -> f64 {
        let v: Vec<f64> = self.summary.iter().map(f).collect();
        spread(&v).3
    }
}

/// Leading `k` distinct terms by contribution.
fn leading_terms(model: &EmulatorModel, report: &DiagnosticsReport, k: usize) -> Vec<TermSpec> {
    let seq = model.sequence();
    let mut order: Vec<usize> = (0..seq.len()).filter(|&i| report.terms[i].contribution > 0.0).collect();
    order.sort_by(|&a, &b| report.terms[b].contribution.total_cmp(&report.terms[a].contribution));
    let mut out: Vec<TermSpec> = Vec::new();
    for i in order {
        if out.len() == k {
            break;
        }
        if !out.contains(&seq[i]) {
            out.push(seq[i].clone());
        }
    }
    out
}

/// Positive contributions of terms matching `set`.
fn fixed_subtotal(model: &EmulatorModel, report: &DiagnosticsReport, set: &[TermSpec]) -> f64 {
    model
        .sequence()
        .iter()
        .zip(&report.terms)
        .filter(|(t, c)| set.contains(t) && c.contribution > 0.0)
        .map(|(_, c)| c.contribution)
        .sum()
}

/// Trains on random subsets of growing size and scores each on fixed evaluation rows.
pub fn learning_curve(
    ds: &Dataset,
    target: usize,
    sizes: &[usize],
    repeats: usize,
    eval_ids: &[String],
    seed: u64,
    mode: TopKMode,
    opts: &TrainOptions,
) -> Result<LearningCurveReport> {
    if sizes.is_empty() || repeats == 0 {
        return Err(SageError::input("learning curve needs at least one size and one repeat"));
    }
    let eval_pos = ds.positions_of(eval_ids)?;
    let eval = ds.select_rows(&eval_pos)?;
    let pool: Vec<usize> = (0..ds.n_rows()).filter(|i| !eval_pos.contains(i)).collect();
    let max = *sizes.iter().max().expect("non-empty");
    if max > pool.len() {
        return Err(SageError::input(format!(
            "size {max} exceeds the {} rows outside the evaluation set",
            pool.len()
        )));
    }

    let jobs: Vec<(usize, usize, u64)> = sizes
        .iter()
        .enumerate()
        .flat_map(|(si, &size)| (0..repeats).map(move |r| (size, r, (si * repeats + r) as u64)))
        .map(|(size, r, stream)| (size, r, derive_seed(seed, stream)))
        .collect();
    let fitted: Vec<(EmulatorModel, DiagnosticsReport)> = jobs
        .par_iter()
        .map(|&(size, _, s)| {
            let mut rows = pool.clone();
            rows.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
            let mut rows = rows[..size].to_vec();
            rows.sort_unstable();
            let train = ds.select_rows(&rows)?;
            let o = TrainOptions {
                seed: s,
                ..opts.clone()
            };
            let model = train_target(&train, target, &o)?.model;
            let report = explained_variability(&model, &eval)?;
            Ok((model, report))
        })
        .collect::<Result<_>>()?;

    let (fixed3, fixed6) = match mode {
        TopKMode::PerSize => (None, None),
        TopKMode::Fixed => {
            let anchor = jobs
                .iter()
                .position(|&(size, r, _)| size == max && r == 0)
                .expect("largest size has a first repeat");
            let (m, r) = &fitted[anchor];
            (Some(leading_terms(m, r, 3)), Some(leading_terms(m, r, 6)))
        }
    };

    let cells: Vec<LearningCell> = jobs
        .iter()
        .zip(&fitted)
        .map(|(&(size, repeat, s), (m, r))| {
            let (top3, top6) = match (&fixed3, &fixed6) {
                (Some(a), Some(b)) => (fixed_subtotal(m, r, a), fixed_subtotal(m, r, b)),
                _ => (top_k(&r.contributions(), 3), top_k(&r.contributions(), 6)),
            };
            LearningCell {
                size,
                repeat,
                seed: s,
                n_terms: m.n_terms(),
                total: top_k(&r.contributions(), usize::MAX),
                net_total: r.total,
                top3,
                top6,
                r_square: r.r_square,
            }
        })
        .collect();
    let summary = sizes
        .iter()
        .map(|&size| {
            let c: Vec<&LearningCell> = cells.iter().filter(|c| c.size == size).collect();
            let mean = |f: fn(&LearningCell) -> f64| c.iter().map(|x| f(x)).sum::<f64>() / c.len() as f64;
            LearningSummary {
                size,
                mean_total: mean(|x| x.total),
                mean_net_total: mean(|x| x.net_total),
                mean_top3: mean(|x| x.top3),
                mean_top6: mean(|x| x.top6),
                mean_r_square: mean(|x| x.r_square),
            }
        })
        .collect();
    Ok(LearningCurveReport {
        target: ds.target_names()[target].clone(),
        sizes: sizes.to_vec(),
        repeats,
        top_k_mode: mode,
        eval_rows: eval_ids.to_vec(),
        fixed_top3: fixed3,
        fixed_top6: fixed6,
        cells,
        summary,
    })
}
