use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TermKind {
    Single,
    Pair,
    Triple,
}

impl TermKind {
    pub fn order(self) -> usize {
        match self {
            TermKind::Single => 1,
            TermKind::Pair => 2,
            TermKind::Triple => 3,
        }
    }

    pub fn from_order(order: usize) -> Result<Self> {
        match order {
            1 => Ok(TermKind::Single),
            2 => Ok(TermKind::Pair),
            3 => Ok(TermKind::Triple),
            _ => Err(SageError::input(format!("terms have 1 to 3 parameters, got {order}"))),
        }
    }
}

/// One additive term: the parameter columns its GP reads.
///
/// Pair and triple indices are kept sorted so `(p, q)` and `(q, p)` are the
/// same term.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TermSpec {
    pub params: Vec<usize>,
    pub kind: TermKind,
}

impl TermSpec {
    pub fn new(mut params: Vec<usize>) -> Result<Self> {
        let kind = TermKind::from_order(params.len())?;
        params.sort_unstable();
        if params.windows(2).any(|w| w[0] == w[1]) {
            return Err(SageError::input(format!("repeated parameter in term {params:?}")));
        }
        Ok(TermSpec { params, kind })
    }

    pub fn single(p: usize) -> Self {
        TermSpec {
            params: vec![p],
            kind: TermKind::Single,
        }
    }

    pub fn order(&self) -> usize {
        self.params.len()
    }

    pub fn check_against(&self, n_params: usize) -> Result<()> {
        if TermKind::from_order(self.params.len())? != self.kind {
            return Err(SageError::input(format!("term {self} has inconsistent kind")));
        }
        if let Some(p) = self.params.iter().find(|&&p| p >= n_params) {
            return Err(SageError::input(format!(
                "term {self} references parameter {p} but only {n_params} exist"
            )));
        }
        if self.params.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SageError::input(format!("term {self} indices must be distinct and sorted")));
        }
        Ok(())
    }

    pub fn label(&self, names: &[&str]) -> String {
        self.params
            .iter()
            .map(|&p| names.get(p).copied().unwrap_or("?"))
            .collect::<Vec<_>>()
            .join("*")
    }
}

impl fmt::Display for TermSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let idx: Vec<String> = self.params.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", idx.join(","))
    }
}
