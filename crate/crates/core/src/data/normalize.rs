use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Result, SageError};

/// Linear map of one parameter from `[min, max]` onto `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamScale {
    pub name: String,
    pub min: f64,
    pub max: f64,
}

impl ParamScale {
    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / (self.max - self.min)
    }

    #[inline]
    pub fn invert(&self, u: f64) -> f64 {
        self.min + u * (self.max - self.min)
    }
}

/// Standardization `(y − mean) / std` of one target.
///
/// A target that is constant on the fitting rows keeps `std = 1` so the
/// transform stays invertible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub name: String,
    pub mean: f64,
    pub std: f64,
}

impl TargetScale {
    pub fn fit(name: &str, values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(SageError::input(format!("no rows to standardize target '{name}'")));
        }
        let (mean, std) = mean_std(values);
        Ok(TargetScale {
            name: name.to_string(),
            mean,
            std: if std > 0.0 { std } else { 1.0 },
        })
    }

    #[inline]
    pub fn apply(&self, v: f64) -> f64 {
        (v - self.mean) / self.std
    }

    #[inline]
    pub fn invert(&self, z: f64) -> f64 {
        self.mean + z * self.std
    }
}

/// Population mean and standard deviation.
pub(crate) fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-parameter ranges and per-target moments, fitted on one set of rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub params: Vec<ParamScale>,
    pub targets: Vec<TargetScale>,
    /// Row ids whose values defined the statistics.
    pub source_ids: Vec<String>,
}

impl NormalizationSpec {
    /// Fits on every row of the view.
    pub fn fit(ds: &Dataset) -> Result<Self> {
        if ds.n_rows() == 0 {
            return Err(SageError::input("cannot fit normalization on zero rows"));
        }
        let names = ds.param_names();
        let mut params = Vec::with_capacity(ds.n_params());
        for (j, name) in names.iter().enumerate() {
            let col = ds.param_column(j);
            let min = col.iter().copied().fold(f64::INFINITY, f64::min);
            let max = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !(max > min) {
                return Err(SageError::input(format!(
                    "parameter '{name}' is constant on the normalization rows"
                )));
            }
            params.push(ParamScale {
                name: name.to_string(),
                min,
                max,
            });
        }
        let targets = ds
            .target_names()
            .iter()
            .enumerate()
            .map(|(t, name)| TargetScale::fit(name, &ds.target_column(t)))
            .collect::<Result<Vec<_>>>()?;
        Ok(NormalizationSpec {
            params,
            targets,
            source_ids: ds.row_ids().into_iter().map(String::from).collect(),
        })
    }

    /// Normalized parameter matrix of a view with the same parameter columns.
    pub fn apply_params(&self, ds: &Dataset) -> Result<DMatrix<f64>> {
        if ds.n_params() != self.params.len() {
            return Err(SageError::input(format!(
                "normalization covers {} parameters, dataset has {}",
                self.params.len(),
                ds.n_params()
            )));
        }
        for (s, name) in self.params.iter().zip(ds.param_names()) {
            if s.name != name {
                return Err(SageError::input(format!(
                    "normalization expects parameter '{}' where dataset has '{name}'",
                    s.name
                )));
            }
        }
        Ok(DMatrix::from_fn(ds.n_rows(), ds.n_params(), |i, j| {
            self.params[j].apply(ds.param(i, j))
        }))
    }

    pub fn invert_params(&self, normalized: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(normalized.nrows(), normalized.ncols(), |i, j| {
            self.params[j].invert(normalized[(i, j)])
        })
    }

    pub fn target(&self, t: usize) -> &TargetScale {
        &self.targets[t]
    }
}

/// Fits normalization statistics on the given row positions only.
pub fn fit_normalization(ds: &Dataset, rows: &[usize]) -> Result<NormalizationSpec> {
    if rows.is_empty() {
        return Err(SageError::input("normalization rows are empty"));
    }
    NormalizationSpec::fit(&ds.select_rows(rows)?)
}
