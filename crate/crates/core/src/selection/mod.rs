//! Greedy construction of the additive term sequence.
//!
//! Single parameters are chosen one iteration at a time against the running
//! residual. Pairs and then triples are ranked once by how much their joint
//! fit beats the independent fits, the top ones are fitted sequentially, and
//! every candidate term is finally kept or pruned on a 20 % holdout.

mod hyper;
mod ranking;
mod sequence;
mod term;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, NormalizationSpec};
use crate::error::{Result, SageError};
use crate::gp::GpComponent;

pub use hyper::HyperparameterSet;
pub use ranking::{pair_delta, rank_pairs, rank_triples, triple_delta, GroupScore};
pub use sequence::{fit_sequence, prune_terms, PruneOptions, PruneOutcome, PrunedTerm};
pub use term::{TermKind, TermSpec};

pub(crate) use ranking::{columns, rmse};
use ranking::CandidatePool;

/// Fraction of selection rows held out for pruning.
pub const HOLDOUT_FRACTION: f64 = 0.2;
/// Fewest training rows `run_selection` accepts.
pub const MIN_SELECTION_ROWS: usize = 10;

fn choose(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    (0..k).fold(1usize, |acc, i| acc * (n - i) / (i + 1))
}

/// Initial guesses `(⌊3D/4⌋, ⌊D/3⌋, ⌊D/4⌋)`, clamped to the number of
/// distinct pairs and triples.
pub fn default_term_counts(d: usize) -> (usize, usize, usize) {
    let m1 = d * 3 / 4;
    let m2 = (d / 3).min(choose(d, 2));
    let m3 = (d / 4).min(choose(d, 3));
    (m1, m2, m3)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionConfig {
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub hyper: HyperparameterSet,
    /// Allow a single parameter to be chosen in more than one iteration.
    pub allow_repeats: bool,
    /// Keep every candidate term; pruning is skipped.
    pub forced: bool,
    pub prune_epsilon: f64,
    /// Training member ids that drive selection; `None` uses all of them.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_subset: Option<Vec<String>>,
    /// Seed of the selection/holdout split.
    pub seed: u64,
}

impl SelectionConfig {
    /// Default term counts for `d` parameters with the default hyperparameters.
    pub fn for_params(d: usize) -> Self {
        let (m1, m2, m3) = default_term_counts(d);
        SelectionConfig {
            m1,
            m2,
            m3,
            hyper: HyperparameterSet::default_test(),
            allow_repeats: true,
            forced: false,
            prune_epsilon: 0.0,
            selection_subset: None,
            seed: 0,
        }
    }

    /// Exactly `m1` singles and `m2` pairs, no triples, no pruning.
    pub fn forced(m1: usize, m2: usize) -> Self {
        SelectionConfig {
            m1,
            m2,
            m3: 0,
            forced: true,
            ..Self::for_params(0)
        }
    }

    pub fn with_hyper(mut self, hyper: HyperparameterSet) -> Self {
        self.hyper = hyper;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.hyper.validate()?;
        if self.m2 > choose(d, 2) {
            return Err(SageError::input(format!(
                "m2 = {} exceeds the {} available pairs",
                self.m2,
                choose(d, 2)
            )));
        }
        if self.m3 > choose(d, 3) {
            return Err(SageError::input(format!(
                "m3 = {} exceeds the {} available triples",
                self.m3,
                choose(d, 3)
            )));
        }
        if !self.allow_repeats && self.m1 > d {
            return Err(SageError::input(format!(
                "m1 = {} exceeds {d} parameters with repeats disabled",
                self.m1
            )));
        }
        if !(self.prune_epsilon >= 0.0) {
            return Err(SageError::input("prune epsilon must be nonnegative"));
        }
        Ok(())
    }
}

/// Result of one single-parameter iteration.
#[derive(Debug, Clone)]
pub struct SingleIteration {
    pub chosen: usize,
    pub component: GpComponent,
    pub residuals: Vec<f64>,
    /// In-sample RMSE per candidate; `None` for excluded candidates.
    pub candidate_rmse: Vec<Option<f64>>,
    pub rmse_before: f64,
    pub rmse_after: f64,
    /// Residual was constant: the term is a no-op.
    pub degenerate: bool,
}

fn is_degenerate(r: &[f64]) -> bool {
    let first = r.first().copied().unwrap_or(0.0);
    let scale = 1.0 + first.abs();
    r.iter().all(|v| (v - first).abs() <= 1e-12 * scale)
}

fn single_iteration(pool: &CandidatePool<'_>, residuals: &[f64], excluded: &[bool]) -> Result<SingleIteration> {
    let before = rmse(residuals);
    let eligible: Vec<usize> = (0..pool.n_params()).filter(|&p| !excluded[p]).collect();
    if eligible.is_empty() {
        return Err(SageError::input("no eligible parameters left for single selection"));
    }
    if is_degenerate(residuals) {
        let p = eligible[0];
        let comp = pool.single_component(p, DVector::zeros(pool.n_rows()))?;
        return Ok(SingleIteration {
            chosen: p,
            component: comp,
            residuals: residuals.to_vec(),
            candidate_rmse: vec![None; pool.n_params()],
            rmse_before: before,
            rmse_after: before,
            degenerate: true,
        });
    }
    let all = pool.single_rmses(residuals)?;
    let candidate_rmse: Vec<Option<f64>> = all
        .iter()
        .enumerate()
        .map(|(p, r)| (!excluded[p]).then_some(*r))
        .collect();
    // Strict comparison keeps the lowest index on ties.
    let mut best = eligible[0];
    for &p in &eligible[1..] {
        if all[p] < all[best] {
            best = p;
        }
    }
    let fit = pool.fit_single(best, residuals)?;
    Ok(SingleIteration {
        chosen: best,
        component: pool.single_component(best, fit.weights)?,
        residuals: fit.residuals.as_slice().to_vec(),
        candidate_rmse,
        rmse_before: before,
        rmse_after: fit.rmse,
        degenerate: false,
    })
}

/// One greedy single-parameter step on normalized inputs `x` (rows in `[0,1]`).
pub fn select_single_iteration(x: &DMatrix<f64>, residuals: &[f64], cfg: &SelectionConfig) -> Result<SingleIteration> {
    if x.nrows() < 2 {
        return Err(SageError::input("single selection needs at least two rows"));
    }
    if x.nrows() != residuals.len() {
        return Err(SageError::input("residual length does not match row count"));
    }
    if residuals.iter().any(|r| !r.is_finite()) {
        return Err(SageError::input("residuals must be finite"));
    }
    let pool = CandidatePool::new(x, &cfg.hyper)?;
    single_iteration(&pool, residuals, &vec![false; x.ncols()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleIterationRecord {
    pub iteration: usize,
    pub candidate_rmse: Vec<Option<f64>>,
    pub chosen: usize,
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub degenerate: bool,
}

/// Everything the selection workflow computed, for inspection and plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub target: String,
    pub parameter_names: Vec<String>,
    pub seed: u64,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub hyper: HyperparameterSet,
    pub forced: bool,
    pub prune_epsilon: f64,
    pub selection_rows: Vec<String>,
    pub holdout_rows: Vec<String>,
    pub single_iterations: Vec<SingleIterationRecord>,
    pub pair_baseline_rmse: Option<f64>,
    pub pair_ranking: Vec<GroupScore>,
    pub triple_baseline_rmse: Option<f64>,
    pub triple_ranking: Vec<GroupScore>,
    pub candidate_sequence: Vec<TermSpec>,
    pub training_rmse_curve: Vec<f64>,
    pub holdout_rmse_curve: Vec<f64>,
    pub retained_positions: Vec<usize>,
    pub pruned: Vec<PrunedTerm>,
    pub final_sequence: Vec<TermSpec>,
    pub warnings: Vec<String>,
}

impl SelectionReport {
    /// Holdout decrease of each candidate term.
    pub fn holdout_steps(&self) -> Vec<f64> {
        self.holdout_rmse_curve.windows(2).map(|w| w[0] - w[1]).collect()
    }
}

/// Splits positions `0..n` (or the subset) into sorted selection and holdout parts.
fn selection_split(ds: &Dataset, subset: Option<&[String]>, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut pool: Vec<usize> = match subset {
        Some(ids) => {
            let mut p = ds.positions_of(ids)?;
            p.sort_unstable();
            p.dedup();
            p
        }
        None => (0..ds.n_rows()).collect(),
    };
    if pool.len() < MIN_SELECTION_ROWS {
        return Err(SageError::input(format!(
            "selection needs at least {MIN_SELECTION_ROWS} rows, got {}",
            pool.len()
        )));
    }
    pool.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_fit = ((pool.len() as f64) * (1.0 - HOLDOUT_FRACTION)).round() as usize;
    let (fit, hold) = pool.split_at(n_fit);
    let mut fit = fit.to_vec();
    let mut hold = hold.to_vec();
    fit.sort_unstable();
    hold.sort_unstable();
    Ok((fit, hold))
}

/// Runs the full selection workflow for one target on the training rows.
///
/// Normalization is fitted on all of `train`; the 80/20 split is drawn from
/// `cfg.selection_subset` when given.
pub fn run_selection(train: &Dataset, target: usize, cfg: &SelectionConfig) -> Result<(Vec<TermSpec>, SelectionReport)> {
    let d = train.n_params();
    if target >= train.n_targets() {
        return Err(SageError::input(format!("target index {target} out of range")));
    }
    if train.n_rows() < MIN_SELECTION_ROWS {
        return Err(SageError::input(format!(
            "selection needs at least {MIN_SELECTION_ROWS} training rows, got {}",
            train.n_rows()
        )));
    }
    cfg.validate(d)?;
    let norm = NormalizationSpec::fit(train)?;
    let x_all = norm.apply_params(train)?;
    let scale = norm.target(target);
    let y_all: Vec<f64> = train.target_column(target).iter().map(|&v| scale.apply(v)).collect();

    let (fit_rows, hold_rows) = selection_split(train, cfg.selection_subset.as_deref(), cfg.seed)?;
    let ids = train.row_ids();
    let x_fit = x_all.select_rows(&fit_rows);
    let y_fit: Vec<f64> = fit_rows.iter().map(|&i| y_all[i]).collect();
    let x_hold = x_all.select_rows(&hold_rows);
    let y_hold: Vec<f64> = hold_rows.iter().map(|&i| y_all[i]).collect();

    let mut report = SelectionReport {
        target: train.target_names()[target].clone(),
        parameter_names: train.param_names().into_iter().map(String::from).collect(),
        seed: cfg.seed,
        m1: cfg.m1,
        m2: cfg.m2,
        m3: cfg.m3,
        hyper: cfg.hyper.clone(),
        forced: cfg.forced,
        prune_epsilon: cfg.prune_epsilon,
        selection_rows: fit_rows.iter().map(|&i| ids[i].to_string()).collect(),
        holdout_rows: hold_rows.iter().map(|&i| ids[i].to_string()).collect(),
        single_iterations: Vec::new(),
        pair_baseline_rmse: None,
        pair_ranking: Vec::new(),
        triple_baseline_rmse: None,
        triple_ranking: Vec::new(),
        candidate_sequence: Vec::new(),
        training_rmse_curve: vec![rmse(&y_fit)],
        holdout_rmse_curve: vec![rmse(&y_hold)],
        retained_positions: Vec::new(),
        pruned: Vec::new(),
        final_sequence: Vec::new(),
        warnings: Vec::new(),
    };

    let raw = train.target_column(target);
    if is_degenerate(&raw) {
        let msg = format!("target '{}' is constant on the training rows; no terms selected", report.target);
        log::warn!("{msg}");
        report.warnings.push(msg);
        return Ok((Vec::new(), report));
    }

    let pool = CandidatePool::new(&x_fit, &cfg.hyper)?;
    let mut residual = y_fit.clone();
    let mut sequence = Vec::new();
    let mut components = Vec::new();
    let mut excluded = vec![false; d];
    let mut stalled = false;

    for it in 0..cfg.m1 {
        let step = single_iteration(&pool, &residual, &excluded)?;
        report.single_iterations.push(SingleIterationRecord {
            iteration: it,
            candidate_rmse: step.candidate_rmse.clone(),
            chosen: step.chosen,
            rmse_before: step.rmse_before,
            rmse_after: step.rmse_after,
            degenerate: step.degenerate,
        });
        if step.degenerate {
            report.warnings.push(format!("residual became constant after {it} single iterations"));
            stalled = true;
            break;
        }
        if !cfg.allow_repeats {
            excluded[step.chosen] = true;
        }
        sequence.push(TermSpec::single(step.chosen));
        components.push(step.component);
        residual = step.residuals;
        report.training_rmse_curve.push(step.rmse_after);
    }

    for (order, count) in [(2usize, cfg.m2), (3usize, cfg.m3)] {
        if stalled || count == 0 {
            continue;
        }
        let baseline = rmse(&residual);
        let ranking = if order == 2 {
            pool.rank_pairs(&residual, baseline)?
        } else {
            pool.rank_triples(&residual, baseline)?
        };
        for score in ranking.iter().take(count) {
            if is_degenerate(&residual) {
                report.warnings.push(format!("residual became constant during order-{order} terms"));
                stalled = true;
                break;
            }
            let (comp, fit) = pool.fit_group(&score.params, &residual)?;
            sequence.push(TermSpec::new(score.params.clone())?);
            components.push(comp);
            residual = fit.residuals.as_slice().to_vec();
            report.training_rmse_curve.push(fit.rmse);
        }
        if order == 2 {
            report.pair_baseline_rmse = Some(baseline);
            report.pair_ranking = ranking;
        } else {
            report.triple_baseline_rmse = Some(baseline);
            report.triple_ranking = ranking;
        }
    }

    let pruned = prune_terms(
        &components,
        &sequence,
        &x_hold,
        &y_hold,
        PruneOptions {
            forced: cfg.forced,
            epsilon: cfg.prune_epsilon,
        },
    )?;
    report.candidate_sequence = sequence;
    report.holdout_rmse_curve = pruned.holdout_curve;
    report.retained_positions = pruned.retained_positions;
    report.pruned = pruned.pruned;
    report.final_sequence = pruned.retained.clone();
    Ok((pruned.retained, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synth_generate, Scenario};
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};

    #[test]
    fn term_count_rules() {
        assert_eq!(default_term_counts(45), (33, 15, 11));
        assert_eq!(default_term_counts(43), (32, 14, 10));
        assert_eq!(default_term_counts(1), (0, 0, 0));
        assert_eq!(default_term_counts(2), (1, 0, 0));
        assert_eq!(default_term_counts(10), (7, 3, 2));
    }

    fn monotone_fixture(n: usize, d: usize, active: usize, seed: u64) -> (DMatrix<f64>, Vec<f64>) {
        let x = crate::data::latin_hypercube(n, d, &mut ChaCha8Rng::seed_from_u64(seed));
        let y: Vec<f64> = (0..n).map(|i| (2.0 * x[(i, active)]).exp()).collect();
        let m = y.iter().sum::<f64>() / n as f64;
        (x, y.into_iter().map(|v| v - m).collect())
    }

    #[test]
    fn picks_the_driving_parameter() {
        let (x, r) = monotone_fixture(80, 5, 3, 1);
        let it = select_single_iteration(&x, &r, &SelectionConfig::for_params(5)).unwrap();
        assert_eq!(it.chosen, 3);
        assert!(it.rmse_after < rmse(&r));
        // Brute-force scan over all candidate fits agrees.
        let h = HyperparameterSet::default_test();
        let scan: Vec<f64> = (0..5)
            .map(|p| {
                let inputs = x.select_columns(&[p]);
                let comp = crate::gp::gp_fit(&inputs, &r, &h.kernel_for(1).unwrap()).unwrap();
                let pred = comp.predict_mean(&inputs).unwrap();
                rmse(&r.iter().zip(pred.iter()).map(|(a, b)| a - b).collect::<Vec<_>>())
            })
            .collect();
        let best = (0..5).min_by(|&a, &b| scan[a].total_cmp(&scan[b])).unwrap();
        assert_eq!(best, 3);
        for (a, b) in scan.iter().zip(&it.candidate_rmse) {
            assert!((a - b.unwrap()).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_residual_is_degenerate_noop() {
        let x = crate::data::latin_hypercube(20, 3, &mut ChaCha8Rng::seed_from_u64(2));
        let r = vec![0.0; 20];
        let it = select_single_iteration(&x, &r, &SelectionConfig::for_params(3)).unwrap();
        assert!(it.degenerate);
        assert_eq!(it.residuals, r);
        assert_eq!(it.rmse_before - it.rmse_after, 0.0);
        assert!(it.component.weights().iter().all(|w| *w == 0.0));
    }

    #[test]
    fn repeats_are_allowed_by_default() {
        let (x, r) = monotone_fixture(100, 3, 1, 3);
        let mut cfg = SelectionConfig::for_params(3);
        cfg.m1 = 3;
        let ds = Dataset::new(
            vec!["a".into(), "b".into(), "c".into()],
            vec!["y".into()],
            x.clone(),
            DMatrix::from_column_slice(100, 1, &r),
            None,
            None,
        )
        .unwrap();
        let (_, rep) = run_selection(&ds, 0, &cfg).unwrap();
        let chosen: Vec<usize> = rep.single_iterations.iter().map(|s| s.chosen).collect();
        assert!(chosen.iter().filter(|&&c| c == 1).count() >= 2, "{chosen:?}");

        cfg.allow_repeats = false;
        let (_, rep) = run_selection(&ds, 0, &cfg).unwrap();
        let mut chosen: Vec<usize> = rep.single_iterations.iter().map(|s| s.chosen).collect();
        chosen.sort();
        assert_eq!(chosen, vec![0, 1, 2]);
    }

    #[test]
    fn report_shapes_and_pruning_soundness() {
        let (ds, _) = synth_generate(Scenario::AdditiveInteraction, 200, 6, 5).unwrap();
        let cfg = SelectionConfig::for_params(6).with_seed(3);
        let (seq, rep) = run_selection(&ds, 0, &cfg).unwrap();
        assert_eq!(rep.holdout_rmse_curve.len(), rep.candidate_sequence.len() + 1);
        assert_eq!(rep.training_rmse_curve.len(), rep.candidate_sequence.len() + 1);
        assert_eq!(rep.selection_rows.len(), 160);
        assert_eq!(rep.holdout_rows.len(), 40);
        let steps = rep.holdout_steps();
        for &p in &rep.retained_positions {
            assert!(steps[p] > 0.0);
        }
        assert_eq!(seq, rep.final_sequence);
        assert_eq!(rep.pair_ranking.len(), 15);
        assert_eq!(rep.triple_ranking.len(), 20);
    }

    #[test]
    fn forced_mode_keeps_every_candidate() {
        let (ds, _) = synth_generate(Scenario::NoiseOnly, 60, 6, 1).unwrap();
        let cfg = SelectionConfig::forced(8, 3);
        let (seq, rep) = run_selection(&ds, 0, &cfg).unwrap();
        assert_eq!(seq.len(), 11);
        assert!(rep.pruned.is_empty());
    }

    #[test]
    fn constant_target_gives_empty_sequence() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = DMatrix::from_fn(30, 2, |_, _| rng.random::<f64>());
        let ds = Dataset::new(
            vec!["a".into(), "b".into()],
            vec!["y".into()],
            x,
            DMatrix::from_element(30, 1, 4.2),
            None,
            None,
        )
        .unwrap();
        let (seq, rep) = run_selection(&ds, 0, &SelectionConfig::for_params(2)).unwrap();
        assert!(seq.is_empty());
        assert_eq!(rep.warnings.len(), 1);
    }

    #[test]
    fn selection_subset_restricts_split() {
        let (ds, _) = synth_generate(Scenario::NoiseOnly, 60, 3, 2).unwrap();
        let subset: Vec<String> = (0..30).map(|i| i.to_string()).collect();
        let mut cfg = SelectionConfig::for_params(3);
        cfg.selection_subset = Some(subset.clone());
        let (_, rep) = run_selection(&ds, 0, &cfg).unwrap();
        assert_eq!(rep.selection_rows.len() + rep.holdout_rows.len(), 30);
        assert!(rep.selection_rows.iter().chain(&rep.holdout_rows).all(|id| subset.contains(id)));
    }

    #[test]
    fn too_few_rows_or_bad_counts() {
        let (ds, _) = synth_generate(Scenario::NoiseOnly, 9, 3, 2).unwrap();
        assert!(run_selection(&ds, 0, &SelectionConfig::for_params(3)).is_err());
        let (ds, _) = synth_generate(Scenario::NoiseOnly, 40, 3, 2).unwrap();
        let mut cfg = SelectionConfig::for_params(3);
        cfg.m2 = 4;
        assert!(run_selection(&ds, 0, &cfg).is_err());
    }
}
