//! Mean-only Gaussian-process regression with fixed hyperparameters.
//!
//! Every additive term of the emulator is the posterior mean of a zero-mean GP
//! with an isotropic Matérn 5/2 covariance on normalized coordinates. Only the
//! range and the nugget-to-variance ratio enter; the signal variance cancels
//! out of the mean `c(x*)ᵀ (C + ηI)⁻¹ r` and is never stored.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SageError};

/// Tag written into model files for the covariance family.
pub const SMOOTHNESS_TAG: &str = "matern_5_2";

const JITTER_START: f64 = 1e-10;
const JITTER_MAX: f64 = 1e-6;
const UNIT_CUBE_TOL: f64 = 1e-9;

/// Fixed covariance hyperparameters of one GP term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    /// Length scale in normalized-parameter units.
    pub range: f64,
    /// Nugget-to-signal-variance ratio.
    pub nugget_ratio: f64,
}

impl KernelConfig {
    pub fn new(range: f64, nugget_ratio: f64) -> Result<Self> {
        let cfg = KernelConfig {
            range,
            nugget_ratio,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.range.is_finite() && self.range > 0.0) {
            return Err(SageError::input(format!(
                "kernel range must be positive, got {}",
                self.range
            )));
        }
        if !(self.nugget_ratio.is_finite() && self.nugget_ratio >= 0.0) {
            return Err(SageError::input(format!(
                "nugget ratio must be nonnegative, got {}",
                self.nugget_ratio
            )));
        }
        Ok(())
    }
}

/// Matérn 5/2 correlation as a function of distance divided by range.
#[inline]
pub(crate) fn matern52(t: f64) -> f64 {
    let s = 5f64.sqrt() * t;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

#[inline]
fn scaled_distance(a: &[f64], b: &[f64], range: f64) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    sq.sqrt() / range
}

/// Covariance between two points in normalized coordinates (unit signal variance).
pub fn matern_cov(a: &[f64], b: &[f64], cfg: &KernelConfig) -> Result<f64> {
    if a.len() != b.len() {
        return Err(SageError::input(format!(
            "covariance arguments differ in dimension ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    cfg.validate()?;
    Ok(matern52(scaled_distance(a, b, cfg.range)))
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let (rows, cols) = m.shape();
    let mut out = Vec::with_capacity(rows * cols);
    for i in 0..rows {
        for j in 0..cols {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn check_unit_cube(inputs: &DMatrix<f64>) -> Result<()> {
    let (rows, cols) = inputs.shape();
    for i in 0..rows {
        for j in 0..cols {
            let v = inputs[(i, j)];
            if !v.is_finite() || v < -UNIT_CUBE_TOL || v > 1.0 + UNIT_CUBE_TOL {
                return Err(SageError::input(format!(
                    "training input ({i}, {j}) = {v} lies outside the normalized unit cube"
                )));
            }
        }
    }
    Ok(())
}

/// A fitted GP mean: training coordinates plus the weights `(C + ηI)⁻¹ r`.
#[derive(Debug, Clone, PartialEq)]
pub struct GpComponent {
    inputs: DMatrix<f64>,
    weights: DVector<f64>,
    kernel: KernelConfig,
}

impl GpComponent {
    /// Reassembles a component from stored parts, checking shapes.
    pub fn from_parts(inputs: DMatrix<f64>, weights: DVector<f64>, kernel: KernelConfig) -> Result<Self> {
        kernel.validate()?;
        if inputs.nrows() != weights.len() {
            return Err(SageError::input(format!(
                "component has {} input rows but {} weights",
                inputs.nrows(),
                weights.len()
            )));
        }
        if inputs.ncols() == 0 {
            return Err(SageError::input("component has zero input dimensions"));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(SageError::input("component weights must be finite"));
        }
        check_unit_cube(&inputs)?;
        Ok(GpComponent {
            inputs,
            weights,
            kernel,
        })
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn kernel(&self) -> &KernelConfig {
        &self.kernel
    }

    pub fn dim(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// Posterior mean at each query row.
    pub fn predict_mean(&self, queries: &DMatrix<f64>) -> Result<DVector<f64>> {
        if queries.ncols() != self.dim() {
            return Err(SageError::input(format!(
                "query dimension {} does not match component dimension {}",
                queries.ncols(),
                self.dim()
            )));
        }
        let train = row_major(&self.inputs);
        let q = row_major(queries);
        let d = self.dim();
        let range = self.kernel.range;
        let out = q
            .chunks_exact(d)
            .map(|qrow| {
                train
                    .chunks_exact(d)
                    .zip(self.weights.iter())
                    .map(|(xrow, w)| matern52(scaled_distance(qrow, xrow, range)) * w)
                    .sum::<f64>()
            })
            .collect::<Vec<_>>();
        Ok(DVector::from_vec(out))
    }
}

/// A factorized covariance system `C + ηI` for a fixed set of training inputs.
///
/// Selection refits the same inputs against many residual vectors, so the
/// Cholesky factor is computed once and reused.
pub struct GpSystem {
    inputs: DMatrix<f64>,
    kernel: KernelConfig,
    chol: Cholesky<f64, Dyn>,
    jitter: f64,
}

impl GpSystem {
    pub fn new(inputs: DMatrix<f64>, kernel: KernelConfig) -> Result<Self> {
        kernel.validate()?;
        let m = inputs.nrows();
        if m == 0 {
            return Err(SageError::input("GP fit needs at least one training row"));
        }
        if inputs.ncols() == 0 {
            return Err(SageError::input("GP fit needs at least one input dimension"));
        }
        check_unit_cube(&inputs)?;

        let d = inputs.ncols();
        let rows = row_major(&inputs);
        let mut cov = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let xi = &rows[i * d..(i + 1) * d];
            cov[(i, i)] = 1.0 + kernel.nugget_ratio;
            for j in 0..i {
                let c = matern52(scaled_distance(xi, &rows[j * d..(j + 1) * d], kernel.range));
                cov[(i, j)] = c;
                cov[(j, i)] = c;
            }
        }

        let mut jitter = 0.0;
        loop {
            let mut trial = cov.clone();
            if jitter > 0.0 {
                for i in 0..m {
                    trial[(i, i)] += jitter;
                }
            }
            if let Some(chol) = Cholesky::new(trial) {
                return Ok(GpSystem {
                    inputs,
                    kernel,
                    chol,
                    jitter,
                });
            }
            jitter = if jitter == 0.0 { JITTER_START } else { jitter * 10.0 };
            if jitter > JITTER_MAX * 1.000_001 {
                return Err(SageError::numerical(format!(
                    "covariance of {m} points is not positive definite even with jitter {JITTER_MAX:e}"
                )));
            }
        }
    }

    pub fn inputs(&self) -> &DMatrix<f64> {
        &self.inputs
    }

    /// Diagonal jitter that was needed for the factorization (0 when none).
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Weights solving `(C + ηI) α = responses`.
    pub fn solve(&self, responses: &[f64]) -> Result<DVector<f64>> {
        if responses.len() != self.inputs.nrows() {
            return Err(SageError::input(format!(
                "{} responses for {} training rows",
                responses.len(),
                self.inputs.nrows()
            )));
        }
        if let Some(i) = responses.iter().position(|r| !r.is_finite()) {
            return Err(SageError::input(format!("response {i} is not finite")));
        }
        Ok(self.chol.solve(&DVector::from_column_slice(responses)))
    }

    /// Residual `r − Cα` of the in-sample mean, using `(C + ηI)α = r`.
    pub fn in_sample_residual(&self, weights: &DVector<f64>) -> DVector<f64> {
        weights * (self.kernel.nugget_ratio + self.jitter)
    }

    pub fn fit(&self, responses: &[f64]) -> Result<GpComponent> {
        let weights = self.solve(responses)?;
        Ok(GpComponent {
            inputs: self.inputs.clone(),
            weights,
            kernel: self.kernel,
        })
    }
}

/// Fits a GP mean to `responses` observed at `inputs` (rows in `[0,1]^d`).
pub fn gp_fit(inputs: &DMatrix<f64>, responses: &[f64], cfg: &KernelConfig) -> Result<GpComponent> {
    if let Some(i) = responses.iter().position(|r| !r.is_finite()) {
        return Err(SageError::input(format!("response {i} is not finite")));
    }
    GpSystem::new(inputs.clone(), *cfg)?.fit(responses)
}

pub fn gp_predict_mean(comp: &GpComponent, queries: &DMatrix<f64>) -> Result<DVector<f64>> {
    comp.predict_mean(queries)
}
