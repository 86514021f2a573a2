use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::hyper::HyperparameterSet;
use super::ranking::{columns, rmse};
use super::term::TermSpec;
use crate::error::{Result, SageError};
use crate::gp::{GpComponent, GpSystem};

/// Fits each term in order to the residual left by the terms before it.
///
/// Returns the components and the in-sample RMSE curve
/// `[rmse(y), rmse(r₁), …, rmse(r_K)]`.
pub fn fit_sequence(
    x: &DMatrix<f64>,
    y: &[f64],
    sequence: &[TermSpec],
    hyper: &HyperparameterSet,
) -> Result<(Vec<GpComponent>, Vec<f64>)> {
    hyper.validate()?;
    if x.nrows() != y.len() {
        return Err(SageError::input(format!(
            "{} parameter rows but {} target values",
            x.nrows(),
            y.len()
        )));
    }
    let mut residual = DVector::from_column_slice(y);
    let mut curve = vec![rmse(y)];
    let mut comps = Vec::with_capacity(sequence.len());
    for term in sequence {
        term.check_against(x.ncols())?;
        let kernel = hyper.kernel_for(term.order())?;
        let sys = GpSystem::new(columns(x, &term.params), kernel)?;
        let weights = sys.solve(residual.as_slice())?;
        residual = sys.in_sample_residual(&weights);
        curve.push(rmse(residual.as_slice()));
        comps.push(GpComponent::from_parts(sys.inputs().clone(), weights, kernel)?);
    }
    Ok((comps, curve))
}

/// Holdout step that failed to lower the RMSE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrunedTerm {
    pub position: usize,
    pub term: TermSpec,
    pub rmse_before: f64,
    pub rmse_after: f64,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PruneOptions {
    /// Keep every term regardless of its holdout step.
    pub forced: bool,
    /// A term survives only if its holdout decrease exceeds this.
    pub epsilon: f64,
}

impl Default for PruneOptions {
    fn default() -> Self {
        PruneOptions {
            forced: false,
            epsilon: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PruneOutcome {
    pub retained: Vec<TermSpec>,
    /// Positions in the candidate sequence of the retained terms.
    pub retained_positions: Vec<usize>,
    /// Cumulative holdout RMSE, one entry more than the candidate sequence.
    pub holdout_curve: Vec<f64>,
    pub pruned: Vec<PrunedTerm>,
}

/// Per-term predictions of a fitted sequence on normalized query rows.
fn term_predictions(
    components: &[GpComponent],
    sequence: &[TermSpec],
    x: &DMatrix<f64>,
) -> Result<Vec<DVector<f64>>> {
    components
        .iter()
        .zip(sequence)
        .map(|(c, t)| c.predict_mean(&columns(x, &t.params)))
        .collect()
}

/// Drops candidate terms whose cumulative holdout step does not lower the RMSE.
///
/// The holdout curve is computed once over the full candidate sequence; a
/// pruned term does not trigger recomputation of later steps.
pub fn prune_terms(
    components: &[GpComponent],
    sequence: &[TermSpec],
    holdout_x: &DMatrix<f64>,
    holdout_y: &[f64],
    opts: PruneOptions,
) -> Result<PruneOutcome> {
    if holdout_y.is_empty() || holdout_x.nrows() == 0 {
        return Err(SageError::input("pruning needs a non-empty holdout set"));
    }
    if holdout_x.nrows() != holdout_y.len() {
        return Err(SageError::input("holdout parameter rows and targets differ in length"));
    }
    if components.len() != sequence.len() {
        return Err(SageError::input("component and term counts differ"));
    }
    let preds = term_predictions(components, sequence, holdout_x)?;
    let mut residual = DVector::from_column_slice(holdout_y);
    let mut curve = vec![rmse(holdout_y)];
    for p in &preds {
        residual -= p;
        curve.push(rmse(residual.as_slice()));
    }
    let mut out = PruneOutcome {
        retained: Vec::new(),
        retained_positions: Vec::new(),
        holdout_curve: curve.clone(),
        pruned: Vec::new(),
    };
    for (k, term) in sequence.iter().enumerate() {
        let (before, after) = (curve[k], curve[k + 1]);
        if opts.forced || before - after > opts.epsilon {
            out.retained.push(term.clone());
            out.retained_positions.push(k);
        } else {
            out.pruned.push(PrunedTerm {
                position: k,
                term: term.clone(),
                rmse_before: before,
                rmse_after: after,
                reason: if after > before {
                    "holdout RMSE increased".into()
                } else {
                    "holdout RMSE did not decrease".into()
                },
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::latin_hypercube;
    use crate::gp::KernelConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn standardized(v: Vec<f64>) -> Vec<f64> {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n).sqrt();
        v.into_iter().map(|x| (x - m) / s).collect()
    }

    #[test]
    fn empty_sequence_curve() {
        let x = latin_hypercube(50, 2, &mut ChaCha8Rng::seed_from_u64(1));
        let y = standardized((0..50).map(|i| x[(i, 0)]).collect());
        let (c, curve) = fit_sequence(&x, &y, &[], &HyperparameterSet::default_test()).unwrap();
        assert!(c.is_empty());
        assert_eq!(curve.len(), 1);
        assert!((curve[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn refit_of_same_parameter_shrinks() {
        let x = latin_hypercube(200, 2, &mut ChaCha8Rng::seed_from_u64(2));
        let y = standardized((0..200).map(|i| (3.0 * x[(i, 0)]).sin()).collect());
        let seq = vec![TermSpec::single(0), TermSpec::single(0)];
        let (comps, _) = fit_sequence(&x, &y, &seq, &HyperparameterSet::default_test()).unwrap();
        let q = x.select_columns(&[0]);
        let first = comps[0].predict_mean(&q).unwrap();
        let second = comps[1].predict_mean(&q).unwrap();
        assert!(second.norm() < 0.5 * first.norm(), "{} vs {}", second.norm(), first.norm());
    }

    #[test]
    fn unknown_parameter_rejected() {
        let x = latin_hypercube(10, 2, &mut ChaCha8Rng::seed_from_u64(3));
        let y = vec![0.0; 10];
        assert!(fit_sequence(&x, &y, &[TermSpec::single(2)], &HyperparameterSet::default_test()).is_err());
    }

    fn constant_component(value: f64) -> GpComponent {
        // A lone distant point with a huge range acts as a constant offset on the holdout.
        let kernel = KernelConfig::new(1e6, 0.0).unwrap();
        GpComponent::from_parts(
            DMatrix::from_row_slice(1, 1, &[0.5]),
            nalgebra::DVector::from_vec(vec![value]),
            kernel,
        )
        .unwrap()
    }

    #[test]
    fn rising_step_is_pruned() {
        // Holdout targets all 0.5; the first term leaves 0.02, the second overshoots to -0.03.
        let hx = DMatrix::from_row_slice(4, 1, &[0.1, 0.3, 0.6, 0.9]);
        let hy = vec![0.5; 4];
        let comps = vec![constant_component(0.48), constant_component(0.05)];
        let seq = vec![TermSpec::single(0), TermSpec::single(0)];
        let out = prune_terms(&comps, &seq, &hx, &hy, PruneOptions::default()).unwrap();
        assert_eq!(out.holdout_curve.len(), 3);
        assert!((out.holdout_curve[1] - 0.02).abs() < 1e-9);
        assert!((out.holdout_curve[2] - 0.03).abs() < 1e-9);
        assert_eq!(out.retained_positions, vec![0]);
        assert_eq!(out.pruned.len(), 1);
        assert_eq!(out.pruned[0].position, 1);

        let forced = prune_terms(&comps, &seq, &hx, &hy, PruneOptions { forced: true, epsilon: 0.0 }).unwrap();
        assert_eq!(forced.retained.len(), 2);
    }

    #[test]
    fn fig2a_step_from_050_to_052() {
        let hx = DMatrix::from_row_slice(2, 1, &[0.2, 0.8]);
        let hy = vec![0.5, 0.5];
        let comps = vec![constant_component(-0.02)];
        let out = prune_terms(&comps, &[TermSpec::single(0)], &hx, &hy, PruneOptions::default()).unwrap();
        assert!((out.holdout_curve[0] - 0.50).abs() < 1e-12);
        assert!((out.holdout_curve[1] - 0.52).abs() < 1e-9);
        assert!(out.retained.is_empty());
        assert_eq!(out.pruned[0].reason, "holdout RMSE increased");
    }

    #[test]
    fn all_decreasing_retains_everything() {
        let hx = DMatrix::from_row_slice(2, 1, &[0.2, 0.8]);
        let hy = vec![1.0, 1.0];
        let comps = vec![constant_component(0.5), constant_component(0.3), constant_component(0.1)];
        let seq = vec![TermSpec::single(0); 3];
        let out = prune_terms(&comps, &seq, &hx, &hy, PruneOptions::default()).unwrap();
        assert_eq!(out.retained, seq);
    }

    #[test]
    fn empty_holdout_is_error() {
        let hx = DMatrix::<f64>::zeros(0, 1);
        assert!(prune_terms(&[], &[], &hx, &[], PruneOptions::default()).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn in_sample_curve_never_increases(seed in any::<u64>(), n in 12usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = latin_hypercube(n, 4, &mut rng);
            let y = standardized((0..n).map(|i| {
                (4.0 * x[(i, 0)]).sin() + x[(i, 1)] * x[(i, 2)] + rand::Rng::random::<f64>(&mut rng)
            }).collect());
            let seq = vec![
                TermSpec::single(0), TermSpec::single(3), TermSpec::single(0),
                TermSpec::new(vec![1, 2]).unwrap(), TermSpec::new(vec![0, 1, 3]).unwrap(),
            ];
            let (_, curve) = fit_sequence(&x, &y, &seq, &HyperparameterSet::default_test()).unwrap();
            for w in curve.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
