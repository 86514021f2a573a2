//! Selection plus final training for one target, with optional augmentation.

use serde::{Deserialize, Serialize};

use crate::data::{augment_with_outputs, augmented_column_name, Dataset};
use crate::emulator::{final_train, AugmentationProvider, EmulatorModel};
use crate::error::{Result, SageError};
use crate::selection::{default_term_counts, run_selection, HyperparameterSet, SelectionConfig, SelectionReport};

fn yes() -> bool {
    true
}

/// Selection settings whose term counts resolve against the parameter count.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m3: Option<usize>,
    #[serde(default)]
    pub hyper: HyperparameterSet,
    #[serde(default)]
    pub forced: bool,
    #[serde(default)]
    pub prune_epsilon: f64,
    #[serde(default = "yes")]
    pub allow_repeats: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_subset: Option<Vec<String>>,
    /// Easy targets whose emulated values become extra parameters.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub augment_with: Vec<String>,
    #[serde(default)]
    pub seed: u64,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            m1: None,
            m2: None,
            m3: None,
            hyper: HyperparameterSet::default_test(),
            forced: false,
            prune_epsilon: 0.0,
            allow_repeats: true,
            selection_subset: None,
            augment_with: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainOptions {
    /// Concrete selection settings for `d` parameters.
    ///
    /// Unset counts take the default rules, except that forced mode without
    /// an explicit `m3` fits no triples.
    pub fn selection_config(&self, d: usize) -> SelectionConfig {
        let (m1, m2, m3) = default_term_counts(d);
        let m3 = match (self.m3, self.forced) {
            (Some(m), _) => m,
            (None, true) => 0,
            (None, false) => m3,
        };
        SelectionConfig {
            m1: self.m1.unwrap_or(m1),
            m2: self.m2.unwrap_or(m2),
            m3,
            hyper: self.hyper.clone(),
            allow_repeats: self.allow_repeats,
            forced: self.forced,
            prune_epsilon: self.prune_epsilon,
            selection_subset: self.selection_subset.clone(),
            seed: self.seed,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainedTarget {
    pub model: EmulatorModel,
    pub report: SelectionReport,
    /// Selection reports of the augmentation providers, in `augment_with` order.
    pub provider_reports: Vec<SelectionReport>,
}

fn select_and_fit(train: &Dataset, target: usize, opts: &TrainOptions) -> Result<(EmulatorModel, SelectionReport)> {
    let cfg = opts.selection_config(train.n_params());
    let (seq, report) = run_selection(train, target, &cfg)?;
    let model = final_train(train, target, &seq, &cfg.hyper)?;
    Ok((model.with_provenance(opts.seed, ""), report))
}

/// Selects a sequence for `target` on `train`, then refits it on all of `train`.
pub fn train_target(train: &Dataset, target: usize, opts: &TrainOptions) -> Result<TrainedTarget> {
    if target >= train.n_targets() {
        return Err(SageError::input(format!("target index {target} out of range")));
    }
    if opts.augment_with.is_empty() {
        let (model, report) = select_and_fit(train, target, opts)?;
        return Ok(TrainedTarget {
            model,
            report,
            provider_reports: Vec::new(),
        });
    }
    let name = &train.target_names()[target];
    if opts.augment_with.contains(name) {
        return Err(SageError::input(format!("target '{name}' cannot augment itself")));
    }
    let plain = TrainOptions {
        augment_with: Vec::new(),
        ..opts.clone()
    };
    let mut providers = Vec::with_capacity(opts.augment_with.len());
    let mut provider_reports = Vec::with_capacity(opts.augment_with.len());
    for easy in &opts.augment_with {
        let t = train.target_index(easy)?;
        let (m, r) = select_and_fit(train, t, &plain)?;
        providers.push(m);
        provider_reports.push(r);
    }
    let augmented = augment_with_outputs(train, &opts.augment_with, &providers)?;
    let (model, report) = select_and_fit(&augmented, target, &plain)?;
    let attached = opts
        .augment_with
        .iter()
        .zip(providers)
        .map(|(easy, model)| AugmentationProvider {
            column: augmented_column_name(easy),
            model,
        })
        .collect();
    Ok(TrainedTarget {
        model: model.with_augmentation(attached)?,
        report,
        provider_reports,
    })
}
