use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Result, SageError};

/// Per-tag member counts for a stratified split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagQuota {
    pub train: usize,
    pub validation: usize,
}

/// How training and validation members are chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SplitRule {
    /// Listed ids.
    Explicit {
        train: Vec<String>,
        validation: Vec<String>,
    },
    /// The first `train` rows for training, the next `validation` rows held out.
    Leading { train: usize, validation: usize },
    /// Uniform draw without replacement.
    Random { train: usize, validation: usize, seed: u64 },
    /// Uniform draw within each row tag, honoring per-tag quotas.
    Stratified {
        quotas: BTreeMap<String, TagQuota>,
        seed: u64,
    },
}

/// Disjoint training and validation member ids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selection_subset: Option<Vec<String>>,
    pub rule: SplitRule,
}

impl SplitPlan {
    pub fn train_set(&self, ds: &Dataset) -> Result<Dataset> {
        ds.select_ids(&self.train)
    }

    pub fn validation_set(&self, ds: &Dataset) -> Result<Dataset> {
        ds.select_ids(&self.validation)
    }

    /// Restricts selection (not final training) to these training members.
    pub fn with_selection_subset(mut self, ids: Vec<String>) -> Result<Self> {
        let train: HashSet<&str> = self.train.iter().map(String::as_str).collect();
        if let Some(bad) = ids.iter().find(|id| !train.contains(id.as_str())) {
            return Err(SageError::input(format!(
                "selection-subset id '{bad}' is not a training member"
            )));
        }
        self.selection_subset = Some(ids);
        Ok(self)
    }
}

fn ids_at(ds: &Dataset, mut positions: Vec<usize>) -> Vec<String> {
    positions.sort_unstable();
    let ids = ds.row_ids();
    positions.into_iter().map(|p| ids[p].to_string()).collect()
}

fn check_sizes(n: usize, train: usize, validation: usize) -> Result<()> {
    if train == 0 || validation == 0 {
        return Err(SageError::input("training and validation sets must both be non-empty"));
    }
    if train + validation > n {
        return Err(SageError::input(format!(
            "split needs {} rows but the dataset has {n}",
            train + validation
        )));
    }
    Ok(())
}

/// Builds a split plan; random rules are deterministic in their seed.
pub fn make_split(ds: &Dataset, rule: &SplitRule) -> Result<SplitPlan> {
    let n = ds.n_rows();
    let (train, validation) = match rule {
        SplitRule::Explicit { train, validation } => {
            if train.is_empty() || validation.is_empty() {
                return Err(SageError::input("training and validation sets must both be non-empty"));
            }
            let tr: HashSet<&str> = train.iter().map(String::as_str).collect();
            if tr.len() != train.len() {
                return Err(SageError::input("training ids contain duplicates"));
            }
            if let Some(dup) = validation.iter().find(|v| tr.contains(v.as_str())) {
                return Err(SageError::input(format!(
                    "row '{dup}' appears in both training and validation"
                )));
            }
            ds.positions_of(train)?;
            ds.positions_of(validation)?;
            (train.clone(), validation.clone())
        }
        SplitRule::Leading { train, validation } => {
            check_sizes(n, *train, *validation)?;
            (
                ids_at(ds, (0..*train).collect()),
                ids_at(ds, (*train..train + validation).collect()),
            )
        }
        SplitRule::Random { train, validation, seed } => {
            check_sizes(n, *train, *validation)?;
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(*seed));
            (
                ids_at(ds, order[..*train].to_vec()),
                ids_at(ds, order[*train..train + validation].to_vec()),
            )
        }
        SplitRule::Stratified { quotas, seed } => {
            let tags = ds
                .row_tags()
                .ok_or_else(|| SageError::input("stratified split needs row tags"))?;
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let (mut tr, mut va) = (Vec::new(), Vec::new());
            for (tag, q) in quotas {
                let mut members: Vec<usize> = (0..n).filter(|&i| tags[i] == tag.as_str()).collect();
                if q.train + q.validation > members.len() {
                    return Err(SageError::input(format!(
                        "tag '{tag}' has {} members but quotas need {}",
                        members.len(),
                        q.train + q.validation
                    )));
                }
                members.shuffle(&mut rng);
                tr.extend_from_slice(&members[..q.train]);
                va.extend_from_slice(&members[q.train..q.train + q.validation]);
            }
            if tr.is_empty() || va.is_empty() {
                return Err(SageError::input("training and validation sets must both be non-empty"));
            }
            (ids_at(ds, tr), ids_at(ds, va))
        }
    };
    Ok(SplitPlan {
        train,
        validation,
        selection_subset: None,
        rule: rule.clone(),
    })
}
