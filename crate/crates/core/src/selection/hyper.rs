use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SageError};
use crate::gp::KernelConfig;

/// Fixed GP ranges for one-, two- and three-parameter terms plus the shared
/// nugget-to-variance ratio.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparameterSet {
    pub name: String,
    pub range_1d: f64,
    pub range_2d: f64,
    pub range_3d: f64,
    pub nugget_ratio: f64,
}

/// Euclidean norm of a range repeated along each of `d` axes.
fn diag(per_axis: f64, d: usize) -> f64 {
    (d as f64 * per_axis * per_axis).sqrt()
}

impl HyperparameterSet {
    fn preset(name: &str, r1: f64, r2_axis: f64, r3_axis: f64, nugget_ratio: f64) -> Self {
        HyperparameterSet {
            name: name.to_string(),
            range_1d: r1,
            range_2d: diag(r2_axis, 2),
            range_3d: diag(r3_axis, 3),
            nugget_ratio,
        }
    }

    pub fn default_test() -> Self {
        Self::preset("default", 0.60, 0.5, 0.4, 2.0)
    }

    /// `set1` … `set5`.
    pub fn table_set(i: usize) -> Result<Self> {
        Ok(match i {
            1 => Self::preset("set1", 0.60, 0.5, 0.4, 4.0),
            2 => Self::preset("set2", 0.60, 0.5, 0.4, 1.0),
            3 => Self::preset("set3", 0.80, 0.6, 0.4, 2.0),
            4 => Self::preset("set4", 1.00, 0.8, 0.6, 2.0),
            5 => Self::preset("set5", 0.50, 0.4, 0.3, 2.0),
            _ => return Err(SageError::input(format!("no hyperparameter preset set{i}"))),
        })
    }

    /// The default set followed by sets 1–5.
    pub fn all_presets() -> Vec<Self> {
        std::iter::once(Self::default_test())
            .chain((1..=5).map(|i| Self::table_set(i).expect("preset exists")))
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (what, v) in [
            ("range_1d", self.range_1d),
            ("range_2d", self.range_2d),
            ("range_3d", self.range_3d),
            ("nugget_ratio", self.nugget_ratio),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(SageError::input(format!(
                    "hyperparameter set '{}': {what} must be positive, got {v}",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn range_for(&self, dim: usize) -> Result<f64> {
        match dim {
            1 => Ok(self.range_1d),
            2 => Ok(self.range_2d),
            3 => Ok(self.range_3d),
            _ => Err(SageError::input(format!("no range for a {dim}-parameter term"))),
        }
    }

    pub fn kernel_for(&self, dim: usize) -> Result<KernelConfig> {
        KernelConfig::new(self.range_for(dim)?, self.nugget_ratio)
    }
}

impl Default for HyperparameterSet {
    fn default() -> Self {
        Self::default_test()
    }
}

impl FromStr for HyperparameterSet {
    type Err = SageError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "default" => Ok(Self::default_test()),
            other => other
                .strip_prefix("set")
                .and_then(|i| i.parse::<usize>().ok())
                .ok_or_else(|| SageError::input(format!("unknown preset '{s}'")))
                .and_then(Self::table_set),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn table_values() {
        let d = HyperparameterSet::default_test();
        assert_eq!(d.range_1d, 0.6);
        assert!((d.range_2d - (0.5f64 * 0.5 + 0.5 * 0.5).sqrt()).abs() < 1e-15);
        assert!((d.range_3d - (3.0f64 * 0.4 * 0.4).sqrt()).abs() < 1e-15);
        assert_eq!(d.nugget_ratio, 2.0);
        assert_eq!(HyperparameterSet::table_set(1).unwrap().nugget_ratio, 4.0);
        assert_eq!(HyperparameterSet::table_set(2).unwrap().nugget_ratio, 1.0);
        let s4 = HyperparameterSet::table_set(4).unwrap();
        assert_eq!(s4.range_1d, 1.0);
        assert!((s4.range_2d - (0.8f64 * 0.8 * 2.0).sqrt()).abs() < 1e-15);
        assert!((s4.range_3d - (0.6f64 * 0.6 * 3.0).sqrt()).abs() < 1e-15);
        let s5 = HyperparameterSet::table_set(5).unwrap();
        assert_eq!(s5.range_1d, 0.5);
        assert!((s5.range_3d - (0.27f64).sqrt()).abs() < 1e-15);
        assert!(HyperparameterSet::table_set(6).is_err());
        assert_eq!(HyperparameterSet::all_presets().len(), 6);
    }

    #[test]
    fn parse_names() {
        assert_eq!("set3".parse::<HyperparameterSet>().unwrap().range_1d, 0.8);
        assert_eq!("default".parse::<HyperparameterSet>().unwrap().name, "default");
        assert!("set9".parse::<HyperparameterSet>().is_err());
        assert!("bogus".parse::<HyperparameterSet>().is_err());
    }

    #[test]
    fn ranges_cover_thirty_percent_of_cube_diagonal() {
        for h in HyperparameterSet::all_presets() {
            assert!(h.range_3d / 3f64.sqrt() >= 0.3 - 1e-12);
        }
    }
}
