//! Explained-variability accounting, R² and the experiment protocols.
//!
//! The stepwise curve is the evaluation RMSE after each term, with residuals
//! divided by the evaluation-set standard deviation, so an empty model on
//! unbiased data scores ≈ 1 and a perfect one scores 0.

mod experiments;

use std::collections::HashSet;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::data::{mean_std, Dataset};
use crate::emulator::EmulatorModel;
use crate::error::{Result, SageError};
use crate::selection::rmse;

pub use experiments::{
    derive_seed, hyper_sweep, learning_curve, random_splits, HyperSweepReport, LearningCell, LearningCurveReport,
    LearningSummary, RandomSplitsReport, SweepEntry, TargetSpread, TopKMode,
};

pub const DEFAULT_THRESHOLDS: (f64, f64) = (0.05, 0.02);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TermContribution {
    pub position: usize,
    pub params: Vec<usize>,
    pub label: String,
    pub order: usize,
    pub contribution: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Band {
    /// At or above the upper threshold.
    High,
    /// Between the thresholds.
    Mid,
    /// Below the lower threshold, negatives included.
    Low,
    /// Unbanded sum used for three-parameter terms.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSum {
    pub order: usize,
    pub band: Band,
    pub sum: f64,
    pub positions: Vec<usize>,
}

/// Per-term contributions partitioned by term order and contribution band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupedVariability {
    pub thresholds: [f64; 2],
    pub groups: Vec<GroupSum>,
    pub total: f64,
}

impl GroupedVariability {
    pub fn get(&self, order: usize, band: Band) -> Option<f64> {
        self.groups
            .iter()
            .find(|g| g.order == order && g.band == band)
            .map(|g| g.sum)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub target: String,
    /// How the curve is scaled; fixed text for readers of the JSON.
    pub normalization: String,
    pub n_eval: usize,
    pub eval_mean: f64,
    pub eval_std: f64,
    pub curve: Vec<f64>,
    pub terms: Vec<TermContribution>,
    pub total: f64,
    pub r_square: f64,
    pub negative_terms: Vec<usize>,
    pub grouped: GroupedVariability,
    /// Evaluation row ids that were also training rows.
    pub overlap_ids: Vec<String>,
}

impl DiagnosticsReport {
    pub fn contributions(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.contribution).collect()
    }

    /// Sum of the `k` largest positive contributions.
    pub fn top_k_subtotal(&self, k: usize) -> f64 {
        top_k(&self.contributions(), k)
    }
}

pub(crate) fn top_k(contributions: &[f64], k: usize) -> f64 {
    let mut c: Vec<f64> = contributions.iter().copied().filter(|v| *v > 0.0).collect();
    c.sort_by(|a, b| b.total_cmp(a));
    c.iter().take(k).sum()
}

/// `1 − SS_res / SS_tot`; negative when predictions are worse than the mean.
pub fn r_square(predictions: &[f64], truths: &[f64]) -> Result<f64> {
    if predictions.len() != truths.len() {
        return Err(SageError::input(format!(
            "{} predictions for {} truths",
            predictions.len(),
            truths.len()
        )));
    }
    if truths.len() < 2 {
        return Err(SageError::input("R² needs at least two values"));
    }
    let n = truths.len() as f64;
    let mean = truths.iter().sum::<f64>() / n;
    let ss_tot: f64 = truths.iter().map(|t| (t - mean).powi(2)).sum();
    if !(ss_tot > 0.0) {
        return Err(SageError::input("R² is undefined for constant truths"));
    }
    let ss_res: f64 = predictions.iter().zip(truths).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Stepwise evaluation RMSE and per-term explained variability.
pub fn explained_variability(model: &EmulatorModel, eval: &Dataset) -> Result<DiagnosticsReport> {
    let n = eval.n_rows();
    if n < 2 {
        return Err(SageError::input(format!("diagnostics need at least 2 evaluation rows, got {n}")));
    }
    let t = eval.target_index(model.target())?;
    let y = eval.target_column(t);
    let (eval_mean, eval_std) = mean_std(&y);
    if !(eval_std > 0.0) {
        return Err(SageError::input(format!(
            "target '{}' is constant on the evaluation rows",
            model.target()
        )));
    }
    let scale = model.target_scale();
    let terms = model.predict_terms(eval)?;

    let mut cumulative = DVector::<f64>::zeros(n);
    let resid = |cum: &DVector<f64>| -> Vec<f64> {
        (0..n)
            .map(|i| (y[i] - scale.invert(cum[i])) / eval_std)
            .collect()
    };
    let mut curve = vec![rmse(&resid(&cumulative))];
    for term in &terms {
        cumulative += term;
        curve.push(rmse(&resid(&cumulative)));
    }
    let preds: Vec<f64> = cumulative.iter().map(|&z| scale.invert(z)).collect();

    let names: Vec<&str> = model.parameter_names().iter().map(String::as_str).collect();
    let contribs: Vec<TermContribution> = model
        .terms()
        .iter()
        .enumerate()
        .map(|(k, params)| TermContribution {
            position: k,
            params: params.clone(),
            label: params.iter().map(|&p| names[p]).collect::<Vec<_>>().join("*"),
            order: params.len(),
            contribution: curve[k] - curve[k + 1],
        })
        .collect();
    let negative_terms = contribs
        .iter()
        .filter(|c| c.contribution < 0.0)
        .map(|c| c.position)
        .collect();
    let train_ids: HashSet<&str> = model
        .provenance()
        .training_row_ids
        .iter()
        .map(String::as_str)
        .collect();
    let overlap_ids: Vec<String> = eval
        .row_ids()
        .into_iter()
        .filter(|id| train_ids.contains(id))
        .map(String::from)
        .collect();
    if !overlap_ids.is_empty() {
        log::warn!("{} evaluation rows were also used for training", overlap_ids.len());
    }

    let mut report = DiagnosticsReport {
        target: model.target().to_string(),
        normalization: "residuals divided by the evaluation-set standard deviation".into(),
        n_eval: n,
        eval_mean,
        eval_std,
        total: curve[0] - curve[curve.len() - 1],
        curve,
        terms: contribs,
        r_square: r_square(&preds, &y)?,
        negative_terms,
        grouped: GroupedVariability {
            thresholds: [DEFAULT_THRESHOLDS.0, DEFAULT_THRESHOLDS.1],
            groups: Vec::new(),
            total: 0.0,
        },
        overlap_ids,
    };
    report.grouped = group_variability(&report, DEFAULT_THRESHOLDS);
    Ok(report)
}

/// Partitions contributions by order; orders 1 and 2 are further split into
/// bands at `(high, low)`, order 3 and above form one unbanded group.
pub fn group_variability(report: &DiagnosticsReport, thresholds: (f64, f64)) -> GroupedVariability {
    let (hi, lo) = thresholds;
    let mut groups: Vec<GroupSum> = [(1, Band::High), (1, Band::Mid), (1, Band::Low)]
        .into_iter()
        .chain([(2, Band::High), (2, Band::Mid), (2, Band::Low), (3, Band::All)])
        .map(|(order, band)| GroupSum {
            order,
            band,
            sum: 0.0,
            positions: Vec::new(),
        })
        .collect();
    for t in &report.terms {
        let key = if t.order >= 3 {
            (3, Band::All)
        } else if t.contribution >= hi {
            (t.order, Band::High)
        } else if t.contribution >= lo {
            (t.order, Band::Mid)
        } else {
            (t.order, Band::Low)
        };
        let g = groups
            .iter_mut()
            .find(|g| (g.order, g.band) == key)
            .expect("every key has a group");
        g.sum += t.contribution;
        g.positions.push(t.position);
    }
    GroupedVariability {
        thresholds: [hi, lo],
        total: groups.iter().map(|g| g.sum).sum(),
        groups,
    }
}

/// Column-subset view keeping the parameters at `keep`.
pub fn reduce_parameters(ds: &Dataset, keep: &[usize]) -> Result<Dataset> {
    ds.reduce_parameters(keep)
}
