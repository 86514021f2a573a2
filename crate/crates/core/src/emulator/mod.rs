//! The trained additive emulator: fitting, prediction and persistence.

mod file;

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifact::TOOL_VERSION;
use crate::data::{Dataset, NormalizationSpec, ParamScale, TargetScale};
use crate::error::{Result, SageError};
use crate::gp::{GpComponent, GpSystem, KernelConfig};
use crate::selection::{columns, fit_sequence, HyperparameterSet, TermSpec};

pub use file::{load_model, save_model};

/// Normalized coordinates further than this outside `[0, 1]` count as extrapolation.
const EXTRAPOLATION_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// Sum of one-, two- and three-parameter GP means.
    Additive,
    /// One GP mean over every parameter.
    FullGp,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    pub config_hash: String,
    pub tool_version: String,
    pub training_row_ids: Vec<String>,
}

/// A model whose predictions fill an augmented parameter column.
#[derive(Debug, Clone, PartialEq)]
pub struct AugmentationProvider {
    pub column: String,
    pub model: EmulatorModel,
}

/// Predictions in raw target units plus a per-row extrapolation flag.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub values: Vec<f64>,
    pub extrapolated: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmulatorModel {
    kind: ModelKind,
    target: String,
    parameter_names: Vec<String>,
    param_scales: Vec<ParamScale>,
    target_scale: TargetScale,
    hyper: Option<HyperparameterSet>,
    terms: Vec<Vec<usize>>,
    components: Vec<GpComponent>,
    training_rmse_curve: Vec<f64>,
    augmentation: Vec<AugmentationProvider>,
    provenance: Provenance,
}

fn standardized_target(train: &Dataset, norm: &NormalizationSpec, target: usize) -> Vec<f64> {
    let s = norm.target(target);
    train.target_column(target).iter().map(|&v| s.apply(v)).collect()
}

fn check_target(train: &Dataset, target: usize) -> Result<()> {
    if target >= train.n_targets() {
        return Err(SageError::input(format!(
            "target index {target} out of range for {} targets",
            train.n_targets()
        )));
    }
    if train.n_rows() == 0 {
        return Err(SageError::input("cannot train on zero rows"));
    }
    Ok(())
}

fn base_provenance(train: &Dataset) -> Provenance {
    Provenance {
        tool_version: TOOL_VERSION.to_string(),
        training_row_ids: train.row_ids().into_iter().map(String::from).collect(),
        ..Provenance::default()
    }
}

/// Refits `sequence` on every row of `train` and packages the result.
///
/// Normalization statistics come from `train` alone.
pub fn final_train(
    train: &Dataset,
    target: usize,
    sequence: &[TermSpec],
    hyper: &HyperparameterSet,
) -> Result<EmulatorModel> {
    check_target(train, target)?;
    let norm = NormalizationSpec::fit(train)?;
    let x = norm.apply_params(train)?;
    let y = standardized_target(train, &norm, target);
    let (components, curve) = fit_sequence(&x, &y, sequence, hyper)?;
    Ok(EmulatorModel {
        kind: ModelKind::Additive,
        target: train.target_names()[target].clone(),
        parameter_names: train.param_names().into_iter().map(String::from).collect(),
        param_scales: norm.params.clone(),
        target_scale: norm.target(target).clone(),
        hyper: Some(hyper.clone()),
        terms: sequence.iter().map(|t| t.params.clone()).collect(),
        components,
        training_rmse_curve: curve,
        augmentation: Vec::new(),
        provenance: base_provenance(train),
    })
}

/// Default range of the full-dimensional baseline on a `d`-parameter cube.
pub fn baseline_range(d: usize) -> f64 {
    (d as f64).sqrt() * 0.4
}

/// A single GP mean over all parameters with fixed range and nugget ratio.
pub fn full_gp_baseline(train: &Dataset, target: usize, range: f64, nugget_ratio: f64) -> Result<EmulatorModel> {
    check_target(train, target)?;
    let kernel = KernelConfig::new(range, nugget_ratio)?;
    let norm = NormalizationSpec::fit(train)?;
    let x = norm.apply_params(train)?;
    let y = standardized_target(train, &norm, target);
    let sys = GpSystem::new(x, kernel)?;
    let weights = sys.solve(&y)?;
    let resid = sys.in_sample_residual(&weights);
    let curve = vec![crate::selection::rmse(&y), crate::selection::rmse(resid.as_slice())];
    let comp = GpComponent::from_parts(sys.inputs().clone(), weights, kernel)?;
    Ok(EmulatorModel {
        kind: ModelKind::FullGp,
        target: train.target_names()[target].clone(),
        parameter_names: train.param_names().into_iter().map(String::from).collect(),
        param_scales: norm.params.clone(),
        target_scale: norm.target(target).clone(),
        hyper: None,
        terms: vec![(0..train.n_params()).collect()],
        components: vec![comp],
        training_rmse_curve: curve,
        augmentation: Vec::new(),
        provenance: base_provenance(train),
    })
}

impl EmulatorModel {
    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn target(&self) -> &str {
        &self.target
    }

    /// Every column the terms index, augmented columns last.
    pub fn parameter_names(&self) -> &[String] {
        &self.parameter_names
    }

    /// Columns a query must supply.
    pub fn input_names(&self) -> Vec<&str> {
        self.parameter_names
            .iter()
            .filter(|n| !self.augmentation.iter().any(|a| &a.column == *n))
            .map(String::as_str)
            .collect()
    }

    pub fn param_scales(&self) -> &[ParamScale] {
        &self.param_scales
    }

    pub fn target_scale(&self) -> &TargetScale {
        &self.target_scale
    }

    pub fn hyper(&self) -> Option<&HyperparameterSet> {
        self.hyper.as_ref()
    }

    /// Parameter indices of each term, in fitting order.
    pub fn terms(&self) -> &[Vec<usize>] {
        &self.terms
    }

    /// The additive sequence; empty for a full-dimensional baseline.
    pub fn sequence(&self) -> Vec<TermSpec> {
        match self.kind {
            ModelKind::Additive => self
                .terms
                .iter()
                .map(|p| TermSpec::new(p.clone()).expect("validated on construction"))
                .collect(),
            ModelKind::FullGp => Vec::new(),
        }
    }

    pub fn n_terms(&self) -> usize {
        self.terms.len()
    }

    pub fn components(&self) -> &[GpComponent] {
        &self.components
    }

    /// In-sample RMSE after each term, starting with the empty model.
    pub fn training_rmse_curve(&self) -> &[f64] {
        &self.training_rmse_curve
    }

    pub fn augmentation(&self) -> &[AugmentationProvider] {
        &self.augmentation
    }

    pub fn is_augmented(&self) -> bool {
        !self.augmentation.is_empty()
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn with_provenance(mut self, seed: u64, config_hash: impl Into<String>) -> Self {
        self.provenance.seed = seed;
        self.provenance.config_hash = config_hash.into();
        self
    }

    /// Attaches the models that compute augmented columns at prediction time.
    pub fn with_augmentation(mut self, providers: Vec<AugmentationProvider>) -> Result<Self> {
        for p in &providers {
            if !self.parameter_names.contains(&p.column) {
                return Err(SageError::input(format!(
                    "augmented column '{}' is not a parameter of the model",
                    p.column
                )));
            }
            if p.model.is_augmented() {
                return Err(SageError::input(format!(
                    "provider for '{}' must not itself be augmented",
                    p.column
                )));
            }
        }
        self.augmentation = providers;
        Ok(self)
    }

    /// Normalized `[0,1]`-scale coordinates of the query rows for every model column.
    pub fn normalized_queries(&self, queries: &Dataset) -> Result<(DMatrix<f64>, Vec<bool>)> {
        let n = queries.n_rows();
        let mut cols: Vec<Vec<f64>> = Vec::with_capacity(self.parameter_names.len());
        for name in &self.parameter_names {
            if let Some(p) = self.augmentation.iter().find(|a| &a.column == name) {
                cols.push(p.model.predict(queries)?.values);
            } else {
                let j = queries
                    .param_index(name)
                    .map_err(|_| SageError::input(format!("query is missing parameter column '{name}'")))?;
                cols.push(queries.param_column(j));
            }
        }
        let x = DMatrix::from_fn(n, cols.len(), |i, j| self.param_scales[j].apply(cols[j][i]));
        let flags = (0..n)
            .map(|i| {
                x.row(i)
                    .iter()
                    .any(|&u| u < -EXTRAPOLATION_TOL || u > 1.0 + EXTRAPOLATION_TOL)
            })
            .collect();
        Ok((x, flags))
    }

    /// Per-term predictions in standardized units on normalized coordinates.
    pub(crate) fn terms_on_normalized(&self, x: &DMatrix<f64>) -> Result<Vec<DVector<f64>>> {
        if x.ncols() != self.parameter_names.len() {
            return Err(SageError::input(format!(
                "expected {} normalized columns, got {}",
                self.parameter_names.len(),
                x.ncols()
            )));
        }
        self.components
            .par_iter()
            .zip(self.terms.par_iter())
            .map(|(c, t)| c.predict_mean(&columns(x, t)))
            .collect()
    }

    fn sum_terms(&self, n: usize, terms: &[DVector<f64>]) -> Vec<f64> {
        let mut acc = DVector::zeros(n);
        for t in terms {
            acc += t;
        }
        acc.iter().map(|&z| self.target_scale.invert(z)).collect()
    }

    /// Per-term predictions in standardized units.
    pub fn predict_terms(&self, queries: &Dataset) -> Result<Vec<DVector<f64>>> {
        let (x, _) = self.normalized_queries(queries)?;
        self.terms_on_normalized(&x)
    }

    /// Prediction of the term at `position` only, in standardized units.
    pub fn predict_term(&self, position: usize, queries: &Dataset) -> Result<DVector<f64>> {
        if position >= self.terms.len() {
            return Err(SageError::input(format!(
                "term position {position} out of range for {} terms",
                self.terms.len()
            )));
        }
        let (x, _) = self.normalized_queries(queries)?;
        self.components[position].predict_mean(&columns(&x, &self.terms[position]))
    }

    /// Sum of all terms, de-standardized.
    pub fn predict(&self, queries: &Dataset) -> Result<Prediction> {
        let (x, extrapolated) = self.normalized_queries(queries)?;
        let terms = self.terms_on_normalized(&x)?;
        Ok(Prediction {
            values: self.sum_terms(queries.n_rows(), &terms),
            extrapolated,
        })
    }

    /// Prediction from raw parameter rows ordered as [`EmulatorModel::input_names`].
    pub fn predict_matrix(&self, raw: &DMatrix<f64>) -> Result<Prediction> {
        let names: Vec<String> = self.input_names().into_iter().map(String::from).collect();
        if raw.ncols() != names.len() {
            return Err(SageError::input(format!(
                "expected {} parameter columns, got {}",
                names.len(),
                raw.ncols()
            )));
        }
        let ds = Dataset::new(names, Vec::new(), raw.clone(), DMatrix::zeros(raw.nrows(), 0), None, None)?;
        self.predict(&ds)
    }
}

/// Writes `id,prediction,extrapolated` rows.
pub fn write_predictions<W: Write>(out: W, ids: &[&str], pred: &Prediction) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let err = |e: csv::Error| SageError::parse("prediction output", e);
    w.write_record(["id", "prediction", "extrapolated"]).map_err(err)?;
    for ((id, v), flag) in ids.iter().zip(&pred.values).zip(&pred.extrapolated) {
        w.write_record([id.to_string(), v.to_string(), flag.to_string()]).map_err(err)?;
    }
    w.flush().map_err(|e| SageError::parse("prediction output", e))?;
    Ok(())
}

pub fn save_predictions(path: impl AsRef<Path>, ids: &[&str], pred: &Prediction) -> Result<()> {
    let path = path.as_ref();
    let f = std::fs::File::create(path).map_err(|e| SageError::io(path, e))?;
    write_predictions(std::io::BufWriter::new(f), ids, pred)
}
