use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{AugmentationProvider, EmulatorModel, ModelKind, Provenance};
use crate::artifact::{check_schema_version, SCHEMA_VERSION};
use crate::data::{ParamScale, TargetScale};
use crate::error::{Result, SageError};
use crate::gp::{GpComponent, KernelConfig, SMOOTHNESS_TAG};
use crate::selection::{HyperparameterSet, TermSpec};

#[derive(Debug, Serialize, Deserialize)]
struct TermFile {
    params: Vec<usize>,
    label: String,
    range: f64,
    nugget_ratio: f64,
    /// Normalized training coordinates, one inner vector per row.
    inputs: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ProviderFile {
    column: String,
    model: ModelFile,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    schema_version: String,
    kind: ModelKind,
    target: String,
    smoothness: String,
    parameter_names: Vec<String>,
    parameter_scales: Vec<ParamScale>,
    target_scale: TargetScale,
    #[serde(default)]
    hyper: Option<HyperparameterSet>,
    terms: Vec<TermFile>,
    training_rmse_curve: Vec<f64>,
    #[serde(default)]
    augmentation: Vec<ProviderFile>,
    provenance: Provenance,
}

fn to_file(m: &EmulatorModel) -> ModelFile {
    let names: Vec<&str> = m.parameter_names.iter().map(String::as_str).collect();
    ModelFile {
        schema_version: SCHEMA_VERSION.to_string(),
        kind: m.kind,
        target: m.target.clone(),
        smoothness: SMOOTHNESS_TAG.to_string(),
        parameter_names: m.parameter_names.clone(),
        parameter_scales: m.param_scales.clone(),
        target_scale: m.target_scale.clone(),
        hyper: m.hyper.clone(),
        terms: m
            .terms
            .iter()
            .zip(&m.components)
            .map(|(params, c)| TermFile {
                params: params.clone(),
                label: params.iter().map(|&p| names[p]).collect::<Vec<_>>().join("*"),
                range: c.kernel().range,
                nugget_ratio: c.kernel().nugget_ratio,
                inputs: c.inputs().row_iter().map(|r| r.iter().copied().collect()).collect(),
                weights: c.weights().iter().copied().collect(),
            })
            .collect(),
        training_rmse_curve: m.training_rmse_curve.clone(),
        augmentation: m
            .augmentation
            .iter()
            .map(|a| ProviderFile {
                column: a.column.clone(),
                model: to_file(&a.model),
            })
            .collect(),
        provenance: m.provenance.clone(),
    }
}

fn bad(msg: impl Into<String>) -> SageError {
    SageError::parse("model file", msg.into())
}

fn from_file(f: ModelFile) -> Result<EmulatorModel> {
    check_schema_version(&f.schema_version)?;
    if f.smoothness != SMOOTHNESS_TAG {
        return Err(bad(format!(
            "unknown smoothness '{}'; only '{SMOOTHNESS_TAG}' is supported",
            f.smoothness
        )));
    }
    let d = f.parameter_names.len();
    if f.parameter_scales.len() != d {
        return Err(bad(format!("{} parameter scales for {d} parameters", f.parameter_scales.len())));
    }
    for (s, n) in f.parameter_scales.iter().zip(&f.parameter_names) {
        if &s.name != n || !(s.max > s.min) {
            return Err(bad(format!("invalid scale for parameter '{n}'")));
        }
    }
    if !(f.target_scale.std > 0.0) {
        return Err(bad("target std must be positive"));
    }
    if f.training_rmse_curve.len() != f.terms.len() + 1 {
        return Err(bad("training curve length must be one more than the term count"));
    }
    let mut terms = Vec::with_capacity(f.terms.len());
    let mut components = Vec::with_capacity(f.terms.len());
    for (k, t) in f.terms.into_iter().enumerate() {
        if t.params.is_empty() || t.params.iter().any(|&p| p >= d) {
            return Err(bad(format!("term {k} references unknown parameters {:?}", t.params)));
        }
        if f.kind == ModelKind::Additive {
            let spec = TermSpec::new(t.params.clone()).map_err(|e| bad(format!("term {k}: {e}")))?;
            if spec.params != t.params {
                return Err(bad(format!("term {k} parameters must be sorted")));
            }
        }
        let dim = t.params.len();
        if t.inputs.iter().any(|r| r.len() != dim) {
            return Err(bad(format!("term {k} input rows must have {dim} coordinates")));
        }
        let inputs = DMatrix::from_row_iterator(t.inputs.len(), dim, t.inputs.into_iter().flatten());
        let kernel = KernelConfig::new(t.range, t.nugget_ratio).map_err(|e| bad(format!("term {k}: {e}")))?;
        let comp = GpComponent::from_parts(inputs, DVector::from_vec(t.weights), kernel)
            .map_err(|e| bad(format!("term {k}: {e}")))?;
        terms.push(t.params);
        components.push(comp);
    }
    let mut model = EmulatorModel {
        kind: f.kind,
        target: f.target,
        parameter_names: f.parameter_names,
        param_scales: f.parameter_scales,
        target_scale: f.target_scale,
        hyper: f.hyper,
        terms,
        components,
        training_rmse_curve: f.training_rmse_curve,
        augmentation: Vec::new(),
        provenance: f.provenance,
    };
    let providers = f
        .augmentation
        .into_iter()
        .map(|p| {
            Ok(AugmentationProvider {
                column: p.column,
                model: from_file(p.model)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if !providers.is_empty() {
        model = model.with_augmentation(providers)?;
    }
    Ok(model)
}

impl EmulatorModel {
    pub fn to_json(&self) -> String {
        crate::artifact::to_json(&to_file(self))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        // Read the version first so an incompatible file fails with the version error.
        let probe: serde_json::Value = serde_json::from_str(text).map_err(|e| SageError::parse("model file", e))?;
        match probe.get("schema_version").and_then(|v| v.as_str()) {
            Some(v) => check_schema_version(v)?,
            None => return Err(bad("missing schema_version")),
        }
        let file: ModelFile = serde_json::from_value(probe).map_err(|e| SageError::parse("model file", e))?;
        from_file(file)
    }
}

pub fn save_model(model: &EmulatorModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model.to_json()).map_err(|e| SageError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<EmulatorModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| SageError::io(path, e))?;
    EmulatorModel::from_json(&text)
}
