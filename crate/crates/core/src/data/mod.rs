//! Ensemble datasets: parameter and target matrices with named columns.
//!
//! A [`Dataset`] is a cheap handle onto an immutable table plus a row mask and
//! a parameter-column mask. Subsetting rows or parameters never copies or
//! mutates the underlying values.

mod augment;
mod csv_io;
mod lhs;
mod normalize;
mod outliers;
mod split;
mod synth;

use std::collections::HashSet;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::error::{Result, SageError};

pub use augment::{augment_with_outputs, augmented_column_name};
pub use csv_io::{load_csv, save_csv, write_csv, CsvSchema};
pub use lhs::latin_hypercube;
pub(crate) use normalize::mean_std;
pub use normalize::{fit_normalization, NormalizationSpec, ParamScale, TargetScale};
pub use outliers::{exclude_outliers, Exclusion, ExclusionReport, OutlierRule};
pub use split::{make_split, SplitPlan, SplitRule, TagQuota};
pub use synth::{synth_generate, synth_generate_with, AppendixENoise, Scenario, SynthManifest, SynthOptions};

#[derive(Debug)]
struct Table {
    param_names: Vec<String>,
    target_names: Vec<String>,
    params: DMatrix<f64>,
    targets: DMatrix<f64>,
    ids: Vec<String>,
    tags: Option<Vec<String>>,
}

/// Rows of a perturbed-parameter ensemble, one row per member.
#[derive(Debug, Clone)]
pub struct Dataset {
    table: Arc<Table>,
    rows: Arc<[usize]>,
    params: Arc<[usize]>,
}

fn check_unique(names: &[String], what: &str) -> Result<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n.as_str()) {
            return Err(SageError::input(format!("duplicate {what} name '{n}'")));
        }
    }
    Ok(())
}

impl Dataset {
    /// Builds a dataset; row ids default to `0..n` when absent.
    pub fn new(
        param_names: Vec<String>,
        target_names: Vec<String>,
        params: DMatrix<f64>,
        targets: DMatrix<f64>,
        ids: Option<Vec<String>>,
        tags: Option<Vec<String>>,
    ) -> Result<Self> {
        let n = params.nrows();
        if params.ncols() != param_names.len() {
            return Err(SageError::input(format!(
                "{} parameter names for {} parameter columns",
                param_names.len(),
                params.ncols()
            )));
        }
        if targets.ncols() != target_names.len() {
            return Err(SageError::input(format!(
                "{} target names for {} target columns",
                target_names.len(),
                targets.ncols()
            )));
        }
        if targets.nrows() != n {
            return Err(SageError::input(format!(
                "parameter matrix has {n} rows but target matrix has {}",
                targets.nrows()
            )));
        }
        check_unique(&param_names, "parameter")?;
        check_unique(&target_names, "target")?;
        if let Some(t) = param_names.iter().find(|p| target_names.contains(p)) {
            return Err(SageError::input(format!("'{t}' is both a parameter and a target")));
        }
        for (mat, names) in [(&params, &param_names), (&targets, &target_names)] {
            for j in 0..mat.ncols() {
                for i in 0..n {
                    if !mat[(i, j)].is_finite() {
                        return Err(SageError::input(format!(
                            "non-finite value in row {i}, column '{}'",
                            names[j]
                        )));
                    }
                }
            }
        }
        let ids = ids.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        if ids.len() != n {
            return Err(SageError::input(format!("{} row ids for {n} rows", ids.len())));
        }
        check_unique(&ids, "row id")?;
        if let Some(t) = &tags {
            if t.len() != n {
                return Err(SageError::input(format!("{} row tags for {n} rows", t.len())));
            }
        }
        let d = param_names.len();
        Ok(Dataset {
            table: Arc::new(Table {
                param_names,
                target_names,
                params,
                targets,
                ids,
                tags,
            }),
            rows: (0..n).collect(),
            params: (0..d).collect(),
        })
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    pub fn n_targets(&self) -> usize {
        self.table.target_names.len()
    }

    pub fn param_names(&self) -> Vec<&str> {
        self.params.iter().map(|&c| self.table.param_names[c].as_str()).collect()
    }

    pub fn target_names(&self) -> &[String] {
        &self.table.target_names
    }

    pub fn param_index(&self, name: &str) -> Result<usize> {
        self.params
            .iter()
            .position(|&c| self.table.param_names[c] == name)
            .ok_or_else(|| SageError::input(format!("unknown parameter '{name}'")))
    }

    pub fn target_index(&self, name: &str) -> Result<usize> {
        self.table
            .target_names
            .iter()
            .position(|t| t == name)
            .ok_or_else(|| SageError::input(format!("unknown target '{name}'")))
    }

    pub fn row_ids(&self) -> Vec<&str> {
        self.rows.iter().map(|&r| self.table.ids[r].as_str()).collect()
    }

    pub fn row_tags(&self) -> Option<Vec<&str>> {
        self.table
            .tags
            .as_ref()
            .map(|t| self.rows.iter().map(|&r| t[r].as_str()).collect())
    }

    #[inline]
    pub fn param(&self, row: usize, col: usize) -> f64 {
        self.table.params[(self.rows[row], self.params[col])]
    }

    #[inline]
    pub fn target(&self, row: usize, target: usize) -> f64 {
        self.table.targets[(self.rows[row], target)]
    }

    /// Raw parameter values of the view, `n × D`.
    pub fn param_matrix(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.n_rows(), self.n_params(), |i, j| self.param(i, j))
    }

    pub fn param_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.param(i, col)).collect()
    }

    pub fn target_column(&self, target: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|i| self.target(i, target)).collect()
    }

    /// Sub-view on the given row positions (positions relative to this view).
    pub fn select_rows(&self, positions: &[usize]) -> Result<Dataset> {
        let mut seen = HashSet::new();
        let mut rows = Vec::with_capacity(positions.len());
        for &p in positions {
            let r = *self
                .rows
                .get(p)
                .ok_or_else(|| SageError::input(format!("row position {p} out of range ({} rows)", self.n_rows())))?;
            if !seen.insert(p) {
                return Err(SageError::input(format!("row position {p} selected twice")));
            }
            rows.push(r);
        }
        Ok(Dataset {
            table: Arc::clone(&self.table),
            rows: rows.into(),
            params: Arc::clone(&self.params),
        })
    }

    /// Row positions of the given ids, in the order given.
    pub fn positions_of(&self, ids: &[String]) -> Result<Vec<usize>> {
        let index: std::collections::HashMap<&str, usize> =
            self.row_ids().into_iter().enumerate().map(|(i, id)| (id, i)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id.as_str())
                    .copied()
                    .ok_or_else(|| SageError::input(format!("unknown row id '{id}'")))
            })
            .collect()
    }

    pub fn select_ids(&self, ids: &[String]) -> Result<Dataset> {
        let pos = self.positions_of(ids)?;
        self.select_rows(&pos)
    }

    /// Column-subset view keeping the given parameter positions.
    pub fn reduce_parameters(&self, keep: &[usize]) -> Result<Dataset> {
        if keep.is_empty() {
            return Err(SageError::input("parameter keep-set is empty"));
        }
        let mut seen = HashSet::new();
        let mut params = Vec::with_capacity(keep.len());
        for &k in keep {
            let c = *self
                .params
                .get(k)
                .ok_or_else(|| SageError::input(format!("parameter position {k} out of range")))?;
            if !seen.insert(k) {
                return Err(SageError::input(format!("parameter position {k} listed twice")));
            }
            params.push(c);
        }
        Ok(Dataset {
            table: Arc::clone(&self.table),
            rows: Arc::clone(&self.rows),
            params: params.into(),
        })
    }

    /// New dataset holding this view's rows and parameters plus extra parameter columns.
    pub(crate) fn with_extra_params(&self, names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Dataset> {
        let n = self.n_rows();
        let base = self.n_params();
        let mut param_names: Vec<String> = self.param_names().into_iter().map(String::from).collect();
        param_names.extend(names);
        let params = DMatrix::from_fn(n, base + columns.len(), |i, j| {
            if j < base {
                self.param(i, j)
            } else {
                columns[j - base][i]
            }
        });
        let targets = DMatrix::from_fn(n, self.n_targets(), |i, t| self.target(i, t));
        Dataset::new(
            param_names,
            self.table.target_names.clone(),
            params,
            targets,
            Some(self.row_ids().into_iter().map(String::from).collect()),
            self.row_tags().map(|t| t.into_iter().map(String::from).collect()),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn tiny() -> Dataset {
        Dataset::new(
            vec!["a".into(), "b".into()],
            vec!["y".into()],
            DMatrix::from_row_slice(3, 2, &[0.0, 1.0, 0.5, 2.0, 1.0, 3.0]),
            DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 4.0]),
            Some(vec!["r1".into(), "r2".into(), "r3".into()]),
            None,
        )
        .unwrap()
    }

    #[test]
    fn shapes() {
        let ds = tiny();
        assert_eq!((ds.n_rows(), ds.n_params(), ds.n_targets()), (3, 2, 1));
        assert_eq!(ds.param_names(), vec!["a", "b"]);
    }

    #[test]
    fn rejects_duplicates_and_non_finite() {
        let bad = Dataset::new(
            vec!["a".into(), "a".into()],
            vec!["y".into()],
            DMatrix::zeros(1, 2),
            DMatrix::zeros(1, 1),
            None,
            None,
        );
        assert!(bad.is_err());
        let nan = Dataset::new(
            vec!["a".into()],
            vec!["y".into()],
            DMatrix::from_row_slice(1, 1, &[f64::NAN]),
            DMatrix::zeros(1, 1),
            None,
            None,
        );
        assert!(nan.unwrap_err().to_string().contains("'a'"));
    }

    #[test]
    fn views_do_not_copy() {
        let ds = tiny();
        let sub = ds.select_rows(&[2, 0]).unwrap();
        assert_eq!(sub.row_ids(), vec!["r3", "r1"]);
        assert_eq!(sub.target(0, 0), 4.0);
        assert!(Arc::ptr_eq(&ds.table, &sub.table));
        let red = sub.reduce_parameters(&[1]).unwrap();
        assert_eq!(red.param_names(), vec!["b"]);
        assert_eq!(red.param(1, 0), 1.0);
        assert!(Arc::ptr_eq(&ds.table, &red.table));
    }

    #[test]
    fn empty_keep_set_is_error() {
        assert!(tiny().reduce_parameters(&[]).is_err());
        assert!(tiny().reduce_parameters(&[0, 0]).is_err());
    }

    #[test]
    fn id_lookup() {
        let ds = tiny();
        assert_eq!(ds.positions_of(&["r2".into()]).unwrap(), vec![1]);
        assert!(ds.positions_of(&["zz".into()]).is_err());
    }
}
