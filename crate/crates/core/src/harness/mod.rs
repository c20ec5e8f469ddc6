//! Cross-validation harness: folds, runners, file exchange with external
//! models, leaderboards and scatter plots.

pub mod exchange;
pub mod folds;
pub mod leaderboard;
pub mod runner;
pub mod scatter;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::baselines::BaselineError;
use crate::grid::GridError;
use crate::io::{IoError, ReadOptions};
use crate::metrics::{FramesUsed, MetricConfig, MetricError, MetricReport, SubMetrics};
use crate::numeric::CompensatedSum;

pub use exchange::{export_inputs, ExchangeManifest};
pub use folds::{make_folds, Fold, FoldPlan};
pub use leaderboard::{Aggregation, Leaderboard, LeaderboardFormat, LeaderboardRow};
pub use runner::{crossval, run_baseline, run_external, CrossvalResult, FoldReport, Method, MethodResult, SequenceReport};
pub use scatter::{scatter_points, ScatterPoint};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least 2 distinct years for leave-one-year-out folds, found {0}")]
    TooFewYears(usize),
    #[error("no prediction for sequence {id} (expected {path})")]
    MissingPrediction { id: String, path: PathBuf },
    #[error("sequence {id}: prediction is {found}, expected {expected}")]
    GeometryMismatch { id: String, expected: String, found: String },
    #[error("nothing to aggregate: {0}")]
    EmptyInput(&'static str),
    #[error("fold testing {years:?}: {source}")]
    Fold {
        years: Vec<i32>,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("sequence {id}: {source}")]
    Sequence {
        id: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error("invalid exchange manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("cannot build worker pool: {0}")]
    Pool(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl HarnessError {
    pub(crate) fn in_sequence(self, id: &str) -> Self {
        HarnessError::Sequence {
            id: id.to_string(),
            source: Box::new(self),
        }
    }

    pub(crate) fn in_fold(self, years: &[i32]) -> Self {
        HarnessError::Fold {
            years: years.to_vec(),
            source: Box::new(self),
        }
    }

    /// Innermost error, skipping fold and sequence context.
    pub fn root(&self) -> &HarnessError {
        match self {
            HarnessError::Fold { source, .. } | HarnessError::Sequence { source, .. } => source.root(),
            other => other,
        }
    }
}

/// Settings shared by every run.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunOptions {
    pub metric: MetricConfig,
    pub read: ReadOptions,
}

fn weighted_mean(values: impl Iterator<Item = (f64, usize)>, squared: bool) -> f64 {
    let mut total = CompensatedSum::new();
    let mut weight = 0usize;
    for (v, w) in values {
        total.add(if squared { v * v } else { v } * w as f64);
        weight += w;
    }
    if weight == 0 {
        return 0.0;
    }
    let mean = total.value() / weight as f64;
    if squared {
        mean.sqrt()
    } else {
        mean
    }
}

/// Frame-count-weighted combination of per-sequence reports.
///
/// Each sub-metric is weighted by its own `frames_used`. RMSE and HRTS are
/// averaged as squares, so the result is the RMSE over the union of
/// frames. PBIAS, PEM and PDEM are recomputed from the combined values.
pub fn combine_reports(reports: &[MetricReport], config: &MetricConfig) -> Result<MetricReport, HarnessError> {
    if reports.is_empty() {
        return Err(HarnessError::EmptyInput("no sequence reports to combine"));
    }
    let mean = |f: fn(&MetricReport) -> (f64, usize), squared| weighted_mean(reports.iter().map(f), squared);
    let sub = SubMetrics {
        mppe: Some(mean(|r| (r.mppe, r.frames_used_mppe), false)),
        hrre: Some(mean(|r| (r.hrre, r.frames_used_hrre), false)),
        ammd: Some(mean(|r| (r.ammd, r.frames_used_ammd), false)),
        cpmse: Some(mean(|r| (r.cpmse, r.frames_used_cpmse), false)),
        hrts: Some(mean(|r| (r.hrts, r.frames_used_hrts), true)),
        cmd: Some(mean(|r| (r.cmd, r.frames_used_cmd), false)),
    };
    let rmse = mean(|r| (r.rmse, r.frames_used_rmse), true);
    let sum = |f: fn(&MetricReport) -> usize| reports.iter().map(f).sum();
    let used = FramesUsed {
        mppe: sum(|r| r.frames_used_mppe),
        hrre: sum(|r| r.frames_used_hrre),
        ammd: sum(|r| r.frames_used_ammd),
        cpmse: sum(|r| r.frames_used_cpmse),
        hrts: sum(|r| r.frames_used_hrts),
        cmd: sum(|r| r.frames_used_cmd),
        rmse: sum(|r| r.frames_used_rmse),
    };
    Ok(MetricReport::from_parts(&sub, rmse, used, &config.amo)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(value: f64, frames: usize) -> MetricReport {
        let sub = SubMetrics {
            mppe: Some(value),
            hrre: Some(value),
            ammd: Some(value),
            cpmse: Some(value),
            hrts: Some(value),
            cmd: Some(value),
        };
        let used = FramesUsed {
            mppe: frames,
            hrre: frames,
            ammd: frames,
            cpmse: frames,
            hrts: frames - 1,
            cmd: frames,
            rmse: frames,
        };
        MetricReport::from_parts(&sub, value, used, &Default::default()).unwrap()
    }

    #[test]
    fn combination_weights_by_frames() {
        let cfg = MetricConfig::default();
        let c = combine_reports(&[report(1.0, 10), report(4.0, 30)], &cfg).unwrap();
        assert!((c.mppe - 3.25).abs() < 1e-12);
        assert!((c.rmse - ((10.0 + 16.0 * 30.0) / 40.0f64).sqrt()).abs() < 1e-12);
        assert!((c.hrts - ((9.0 + 16.0 * 29.0) / 38.0f64).sqrt()).abs() < 1e-12);
        assert_eq!(c.frames_used_rmse, 40);
        assert_eq!(c.frames_used_hrts, 38);
        let expected_pem = 0.25 * (3.25 / 64.0 + 3.25 / 533.0 + 3.25 / 0.64 + 3.25 / 332.0);
        assert!((c.pem - expected_pem).abs() < 1e-12);
        assert!(matches!(combine_reports(&[], &cfg), Err(HarnessError::EmptyInput(_))));
    }

    #[test]
    fn single_report_is_unchanged() {
        let r = report(2.5, 12);
        assert_eq!(combine_reports(&[r], &MetricConfig::default()).unwrap(), r);
    }
}
