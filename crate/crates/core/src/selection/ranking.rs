//! Candidate scoring for single parameters and interacting groups.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hyper::HyperparameterSet;
use crate::error::{Result, SageError};
use crate::gp::{GpComponent, GpSystem};

pub(crate) fn rmse(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

/// Extra RMSE reduction from fitting `p` and `q` jointly rather than separately,
/// relative to the baseline RMSE before either is added.
pub fn pair_delta(baseline: f64, rmse_p: f64, rmse_q: f64, rmse_pq: f64) -> f64 {
    (baseline - rmse_pq) - (2.0 * baseline - (rmse_p + rmse_q))
}

/// Three-parameter analogue of [`pair_delta`]: joint gain minus the sum of
/// the three independent single-parameter gains.
pub fn triple_delta(baseline: f64, singles: [f64; 3], rmse_joint: f64) -> f64 {
    (baseline - rmse_joint) - (3.0 * baseline - singles[0] - singles[1] - singles[2])
}

/// Score of one parameter group in a pair or triple ranking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupScore {
    pub params: Vec<usize>,
    pub single_rmse: Vec<f64>,
    pub joint_rmse: f64,
    pub delta: f64,
}

fn sort_descending(scores: &mut [GroupScore]) {
    // Stable: equal deltas keep lexicographic enumeration order.
    scores.sort_by(|a, b| b.delta.total_cmp(&a.delta));
}

pub(crate) fn columns(x: &DMatrix<f64>, params: &[usize]) -> DMatrix<f64> {
    x.select_columns(params)
}

/// Factorized one-parameter systems for every column, shared across iterations.
pub(crate) struct CandidatePool<'a> {
    x: &'a DMatrix<f64>,
    hyper: &'a HyperparameterSet,
    singles: Vec<GpSystem>,
}

/// Outcome of fitting one candidate system to a residual vector.
pub(crate) struct CandidateFit {
    pub weights: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rmse: f64,
}

impl<'a> CandidatePool<'a> {
    pub fn new(x: &'a DMatrix<f64>, hyper: &'a HyperparameterSet) -> Result<Self> {
        hyper.validate()?;
        let kernel = hyper.kernel_for(1)?;
        let singles = (0..x.ncols())
            .into_par_iter()
            .map(|p| GpSystem::new(columns(x, &[p]), kernel))
            .collect::<Result<Vec<_>>>()?;
        Ok(CandidatePool { x, hyper, singles })
    }

    pub fn n_params(&self) -> usize {
        self.x.ncols()
    }

    pub fn n_rows(&self) -> usize {
        self.x.nrows()
    }

    fn fit_system(sys: &GpSystem, residuals: &[f64]) -> Result<CandidateFit> {
        let weights = sys.solve(residuals)?;
        let resid = sys.in_sample_residual(&weights);
        let rmse = rmse(resid.as_slice());
        Ok(CandidateFit {
            weights,
            residuals: resid,
            rmse,
        })
    }

    pub fn fit_single(&self, p: usize, residuals: &[f64]) -> Result<CandidateFit> {
        Self::fit_system(&self.singles[p], residuals)
    }

    pub fn single_component(&self, p: usize, weights: DVector<f64>) -> Result<GpComponent> {
        GpComponent::from_parts(
            self.singles[p].inputs().clone(),
            weights,
            self.hyper.kernel_for(1)?,
        )
    }

    /// In-sample RMSE after a one-parameter fit, for every column.
    pub fn single_rmses(&self, residuals: &[f64]) -> Result<Vec<f64>> {
        (0..self.n_params())
            .into_par_iter()
            .map(|p| self.fit_single(p, residuals).map(|f| f.rmse))
            .collect()
    }

    pub fn group_system(&self, params: &[usize]) -> Result<GpSystem> {
        GpSystem::new(columns(self.x, params), self.hyper.kernel_for(params.len())?)
    }

    pub fn fit_group(&self, params: &[usize], residuals: &[f64]) -> Result<(GpComponent, CandidateFit)> {
        let sys = self.group_system(params)?;
        let fit = Self::fit_system(&sys, residuals)?;
        let comp = GpComponent::from_parts(sys.inputs().clone(), fit.weights.clone(), self.hyper.kernel_for(params.len())?)?;
        Ok((comp, fit))
    }

    fn group_rmse(&self, params: &[usize], residuals: &[f64]) -> Result<f64> {
        let sys = self.group_system(params)?;
        Ok(Self::fit_system(&sys, residuals)?.rmse)
    }

    pub fn rank_pairs(&self, residuals: &[f64], baseline: f64) -> Result<Vec<GroupScore>> {
        check_baseline(residuals, baseline)?;
        let singles = self.single_rmses(residuals)?;
        let d = self.n_params();
        let pairs: Vec<[usize; 2]> = (0..d).flat_map(|p| (p + 1..d).map(move |q| [p, q])).collect();
        let mut scores = pairs
            .into_par_iter()
            .map(|[p, q]| {
                let joint = self.group_rmse(&[p, q], residuals)?;
                Ok(GroupScore {
                    params: vec![p, q],
                    single_rmse: vec![singles[p], singles[q]],
                    joint_rmse: joint,
                    delta: pair_delta(baseline, singles[p], singles[q], joint),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sort_descending(&mut scores);
        Ok(scores)
    }

    pub fn rank_triples(&self, residuals: &[f64], baseline: f64) -> Result<Vec<GroupScore>> {
        check_baseline(residuals, baseline)?;
        let singles = self.single_rmses(residuals)?;
        let d = self.n_params();
        let triples: Vec<[usize; 3]> = (0..d)
            .flat_map(|p| (p + 1..d).flat_map(move |q| (q + 1..d).map(move |r| [p, q, r])))
            .collect();
        let mut scores = triples
            .into_par_iter()
            .map(|[p, q, r]| {
                let joint = self.group_rmse(&[p, q, r], residuals)?;
                let s = [singles[p], singles[q], singles[r]];
                Ok(GroupScore {
                    params: vec![p, q, r],
                    single_rmse: s.to_vec(),
                    joint_rmse: joint,
                    delta: triple_delta(baseline, s, joint),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        sort_descending(&mut scores);
        Ok(scores)
    }
}

fn check_baseline(residuals: &[f64], baseline: f64) -> Result<()> {
    let actual = rmse(residuals);
    if (actual - baseline).abs() > 1e-9 * (1.0 + actual) {
        return Err(SageError::input(format!(
            "baseline RMSE {baseline} does not match the residual RMSE {actual}"
        )));
    }
    Ok(())
}

/// Ranks all `C(D,2)` pairs by [`pair_delta`] on the given residuals.
pub fn rank_pairs(
    x: &DMatrix<f64>,
    residuals: &[f64],
    baseline_rmse: f64,
    hyper: &HyperparameterSet,
) -> Result<Vec<GroupScore>> {
    CandidatePool::new(x, hyper)?.rank_pairs(residuals, baseline_rmse)
}

/// Ranks all `C(D,3)` triples by [`triple_delta`] on the given residuals.
pub fn rank_triples(
    x: &DMatrix<f64>,
    residuals: &[f64],
    baseline_rmse: f64,
    hyper: &HyperparameterSet,
) -> Result<Vec<GroupScore>> {
    CandidatePool::new(x, hyper)?.rank_triples(residuals, baseline_rmse)
}
