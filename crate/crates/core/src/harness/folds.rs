//! Leave-one-year-out fold construction.

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::io::DatasetIndex;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub test_years: Vec<i32>,
    pub train_years: Vec<i32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FoldPolicy {
    LeaveOneYearOut,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    pub folds: Vec<Fold>,
    pub policy: FoldPolicy,
}

/// One fold per distinct year, in ascending year order.
pub fn make_folds(index: &DatasetIndex) -> Result<FoldPlan, HarnessError> {
    folds_for_years(&index.years())
}

pub fn folds_for_years(years: &[i32]) -> Result<FoldPlan, HarnessError> {
    let mut years = years.to_vec();
    years.sort_unstable();
    years.dedup();
    if years.len() < 2 {
        return Err(HarnessError::TooFewYears(years.len()));
    }
    let folds = years
        .iter()
        .map(|&test| Fold {
            test_years: vec![test],
            train_years: years.iter().copied().filter(|&y| y != test).collect(),
        })
        .collect();
    Ok(FoldPlan {
        folds,
        policy: FoldPolicy::LeaveOneYearOut,
    })
}
