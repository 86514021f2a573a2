use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use sage::data::{OutlierRule, SplitRule};
use sage::diagnostics::TopKMode;
use sage::pipeline::TrainOptions;
use sage::selection::HyperparameterSet;
use sage::{Result, SageError};

fn yes() -> bool {
    true
}

fn ten() -> usize {
    10
}

fn five() -> usize {
    5
}

fn default_sizes() -> Vec<usize> {
    vec![100, 200, 300, 400]
}

fn default_eval_size() -> usize {
    100
}

/// Settings of the `experiment` subcommands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "ten")]
    pub repeats: usize,
    /// Random-split sizes; default to the sizes of `split` or an 80/20 split.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub validation_size: Option<usize>,
    #[serde(default = "default_sizes")]
    pub sizes: Vec<usize>,
    #[serde(default = "five")]
    pub curve_repeats: usize,
    /// Held-out rows of the learning curve when no split is configured.
    #[serde(default = "default_eval_size")]
    pub eval_size: usize,
    #[serde(default)]
    pub top_k_mode: TopKMode,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            repeats: ten(),
            train_size: None,
            validation_size: None,
            sizes: default_sizes(),
            curve_repeats: five(),
            eval_size: default_eval_size(),
            top_k_mode: TopKMode::PerSize,
        }
    }
}

/// Everything a run needs; its hash (minus output location and thread count)
/// is embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schema: Option<PathBuf>,
    /// Target names; empty means every target in the schema.
    #[serde(default)]
    pub targets: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<SplitRule>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    /// Explicit hyperparameters; wins over `preset`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hyper: Option<HyperparameterSet>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m1: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m2: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m3: Option<usize>,
    #[serde(default)]
    pub forced: bool,
    #[serde(default)]
    pub prune_epsilon: f64,
    #[serde(default = "yes")]
    pub allow_repeats: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_subset: Option<Vec<String>>,
    #[serde(default)]
    pub augment_with: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exclude_outliers: Option<OutlierRule>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RunConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        sage::artifact::read_json(path)
    }

    pub fn hyper(&self) -> Result<HyperparameterSet> {
        let h = match (&self.hyper, &self.preset) {
            (Some(h), _) => h.clone(),
            (None, Some(p)) => p.parse()?,
            (None, None) => HyperparameterSet::default_test(),
        };
        h.validate()?;
        Ok(h)
    }

    pub fn train_options(&self) -> Result<TrainOptions> {
        if !(self.prune_epsilon >= 0.0) {
            return Err(SageError::Input("prune_epsilon must be nonnegative".into()));
        }
        Ok(TrainOptions {
            m1: self.m1,
            m2: self.m2,
            m3: self.m3,
            hyper: self.hyper()?,
            forced: self.forced,
            prune_epsilon: self.prune_epsilon,
            allow_repeats: self.allow_repeats,
            selection_subset: self.selection_subset.clone(),
            augment_with: self.augment_with.clone(),
            seed: self.seed,
        })
    }

    /// Hash of the settings that influence results.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = None;
        c.threads = None;
        sage::artifact::config_hash(&c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_hash_exclusions() {
        let c = RunConfig::default();
        assert!(c.allow_repeats);
        assert_eq!(c.experiment.repeats, 10);
        let mut d = c.clone();
        d.threads = Some(8);
        d.out_dir = Some("elsewhere".into());
        assert_eq!(c.hash(), d.hash());
        d.seed = 5;
        assert_ne!(c.hash(), d.hash());
    }

    #[test]
    fn unknown_fields_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"sede": 1}"#).is_err());
    }

    #[test]
    fn preset_resolution() {
        let c: RunConfig = serde_json::from_str(r#"{"preset": "set4"}"#).unwrap();
        assert_eq!(c.hyper().unwrap().range_1d, 1.0);
        let c: RunConfig = serde_json::from_str(r#"{"preset": "set9"}"#).unwrap();
        assert!(c.hyper().is_err());
    }
}
