use std::collections::BTreeSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::normalize::mean_std;
use super::Dataset;
use crate::error::{Result, SageError};

/// Which ensemble members to drop before training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OutlierRule {
    Ids { ids: Vec<String> },
    /// Drop rows where any target's |z| exceeds the threshold.
    ZScore { threshold: f64 },
}

impl FromStr for OutlierRule {
    type Err = SageError;

    /// `z:<threshold>` or a comma-separated id list.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(t) = s.strip_prefix("z:") {
            let threshold: f64 = t
                .parse()
                .map_err(|_| SageError::input(format!("bad z-score threshold '{t}'")))?;
            if !(threshold > 0.0) {
                return Err(SageError::input("z-score threshold must be positive"));
            }
            return Ok(OutlierRule::ZScore { threshold });
        }
        let ids: Vec<String> = s.split(',').map(|x| x.trim().to_string()).filter(|x| !x.is_empty()).collect();
        if ids.is_empty() {
            return Err(SageError::input("outlier rule lists no ids"));
        }
        Ok(OutlierRule::Ids { ids })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Exclusion {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub z: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub rule: OutlierRule,
    pub excluded: Vec<Exclusion>,
    pub remaining: usize,
}

/// Returns a view without the excluded members plus what triggered each removal.
pub fn exclude_outliers(ds: &Dataset, rule: &OutlierRule) -> Result<(Dataset, ExclusionReport)> {
    let n = ds.n_rows();
    let mut drop = BTreeSet::new();
    let mut excluded = Vec::new();
    match rule {
        OutlierRule::Ids { ids } => {
            for (pos, id) in ds.positions_of(ids)?.into_iter().zip(ids) {
                if drop.insert(pos) {
                    excluded.push(Exclusion {
                        id: id.clone(),
                        target: None,
                        value: None,
                        z: None,
                    });
                }
            }
        }
        OutlierRule::ZScore { threshold } => {
            let ids = ds.row_ids();
            for (t, name) in ds.target_names().iter().enumerate() {
                let col = ds.target_column(t);
                let (mean, std) = mean_std(&col);
                if std == 0.0 {
                    continue;
                }
                for (i, v) in col.iter().enumerate() {
                    let z = (v - mean) / std;
                    if z.abs() > *threshold {
                        drop.insert(i);
                        excluded.push(Exclusion {
                            id: ids[i].to_string(),
                            target: Some(name.clone()),
                            value: Some(*v),
                            z: Some(z),
                        });
                    }
                }
            }
        }
    }
    if drop.len() == n {
        return Err(SageError::input("outlier rule excludes every row"));
    }
    let keep: Vec<usize> = (0..n).filter(|i| !drop.contains(i)).collect();
    let view = ds.select_rows(&keep)?;
    let remaining = view.n_rows();
    Ok((
        view,
        ExclusionReport {
            rule: rule.clone(),
            excluded,
            remaining,
        },
    ))
}
