//! Scoring baselines and external predictions fold by fold.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::exchange::prediction_path;
use super::leaderboard::{Aggregation, LeaderboardRow};
use super::{combine_reports, Fold, FoldPlan, HarnessError, RunOptions};
use crate::baselines::{downscale_sequence, Baseline};
use crate::grid::{GridGeometry, PrecipSequence};
use crate::io::{read_pair, read_sequence, DatasetIndex, IndexEntry};
use crate::metrics::{evaluate, MetricReport};

/// Something that turns LR sequences into HR predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Method {
    Baseline(Baseline),
    /// Predictions written by an external model into `dir`.
    External { name: String, dir: PathBuf },
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Baseline(b) => b.name().to_string(),
            Method::External { name, .. } => name.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceReport {
    pub id: String,
    pub frames: usize,
    pub report: MetricReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub test_years: Vec<i32>,
    pub sequences: Vec<SequenceReport>,
    /// Frame-weighted combination of the sequence reports.
    pub report: MetricReport,
}

/// Integer scale factor between HR and LR geometries.
pub fn scale_factor(hr: &GridGeometry, lr: &GridGeometry) -> Option<usize> {
    let f = hr.rows() / lr.rows();
    (f >= 1 && hr.rows() == f * lr.rows() && hr.cols() == f * lr.cols()).then_some(f)
}

fn describe(g: &GridGeometry, frames: usize) -> String {
    format!("{frames} frames of {}x{} at {} km", g.rows(), g.cols(), g.pixel_size_km())
}

fn test_entries<'a>(index: &'a DatasetIndex, fold: &Fold) -> Vec<&'a IndexEntry> {
    index.entries.iter().filter(|e| fold.test_years.contains(&e.year)).collect()
}

fn score_fold<F>(index: &DatasetIndex, fold: &Fold, options: &RunOptions, predict: F) -> Result<FoldReport, HarnessError>
where
    F: Fn(&IndexEntry, &PrecipSequence, &PrecipSequence) -> Result<PrecipSequence, HarnessError> + Sync,
{
    let entries = test_entries(index, fold);
    if entries.is_empty() {
        return Err(HarnessError::EmptyInput("fold has no test sequences"));
    }
    let sequences = entries
        .par_iter()
        .map(|entry| {
            let id = entry.id();
            let run = || -> Result<SequenceReport, HarnessError> {
                let (hr, lr) = read_pair(&entry.path, entry.format, &options.read)?;
                let pred = predict(entry, &hr, &lr)?;
                Ok(SequenceReport {
                    id: id.clone(),
                    frames: hr.len(),
                    report: evaluate(&pred, &hr, &options.metric)?,
                })
            };
            run().map_err(|e| e.in_sequence(&id))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let reports: Vec<MetricReport> = sequences.iter().map(|s| s.report).collect();
    Ok(FoldReport {
        test_years: fold.test_years.clone(),
        report: combine_reports(&reports, &options.metric)?,
        sequences,
    })
}

/// Scores a baseline on the test years of `fold`.
///
/// Predictions are rounded to the stored `f32` precision before scoring, so
/// the result matches scoring the same predictions through the exchange
/// files bit for bit.
pub fn run_baseline(
    index: &DatasetIndex,
    fold: &Fold,
    baseline: &Baseline,
    options: &RunOptions,
) -> Result<FoldReport, HarnessError> {
    score_fold(index, fold, options, |entry, hr, lr| {
        let factor = scale_factor(hr.geometry(), lr.geometry()).ok_or_else(|| HarnessError::GeometryMismatch {
            id: entry.id(),
            expected: "HR dimensions an integer multiple of LR".to_string(),
            found: format!("{} over {}", describe(hr.geometry(), hr.len()), describe(lr.geometry(), lr.len())),
        })?;
        let (pred, _) = downscale_sequence(lr, factor, baseline)?;
        Ok(pred.to_storage_precision())
    })
}

/// Scores predictions found in `exchange_dir` as `<id>.pred.rnb`.
pub fn run_external(
    index: &DatasetIndex,
    fold: &Fold,
    exchange_dir: &Path,
    options: &RunOptions,
) -> Result<FoldReport, HarnessError> {
    score_fold(index, fold, options, |entry, hr, _| {
        let id = entry.id();
        let path = prediction_path(exchange_dir, &id);
        if !path.is_file() {
            return Err(HarnessError::MissingPrediction { id, path });
        }
        let pred = read_sequence(&path, options.read.missing_sentinel)?;
        if pred.geometry() != hr.geometry() || pred.len() != hr.len() {
            return Err(HarnessError::GeometryMismatch {
                id,
                expected: describe(hr.geometry(), hr.len()),
                found: describe(pred.geometry(), pred.len()),
            });
        }
        Ok(pred)
    })
}

pub fn run_method(index: &DatasetIndex, fold: &Fold, method: &Method, options: &RunOptions) -> Result<FoldReport, HarnessError> {
    match method {
        Method::Baseline(b) => run_baseline(index, fold, b, options),
        Method::External { dir, .. } => run_external(index, fold, dir, options),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub folds: Vec<FoldReport>,
    pub fold_mean: LeaderboardRow,
    pub frame_weighted: LeaderboardRow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossvalResult {
    pub plan: FoldPlan,
    pub methods: Vec<MethodResult>,
}

impl CrossvalResult {
    pub fn rows(&self, aggregation: Aggregation) -> Vec<LeaderboardRow> {
        self.methods
            .iter()
            .map(|m| match aggregation {
                Aggregation::FoldMean => m.fold_mean.clone(),
                Aggregation::FrameWeighted => m.frame_weighted.clone(),
            })
            .collect()
    }
}

/// Runs every method on every fold with `workers` threads.
///
/// Folds and sequences run in parallel; all reductions follow fold and
/// sequence order, so the result does not depend on `workers`.
pub fn crossval(
    index: &DatasetIndex,
    plan: &FoldPlan,
    methods: &[Method],
    options: &RunOptions,
    workers: usize,
) -> Result<CrossvalResult, HarnessError> {
    options.metric.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| HarnessError::Pool(e.to_string()))?;
    pool.install(|| {
        let mut results = Vec::with_capacity(methods.len());
        for method in methods {
            let folds = plan
                .folds
                .par_iter()
                .map(|fold| run_method(index, fold, method, options).map_err(|e| e.in_fold(&fold.test_years)))
                .collect::<Result<Vec<_>, _>>()?;
            let reports: Vec<MetricReport> = folds.iter().map(|f| f.report).collect();
            let name = method.name();
            results.push(MethodResult {
                fold_mean: LeaderboardRow::aggregate(&name, &reports, Aggregation::FoldMean, &options.metric)?,
                frame_weighted: LeaderboardRow::aggregate(&name, &reports, Aggregation::FrameWeighted, &options.metric)?,
                method: name,
                folds,
            });
        }
        Ok(CrossvalResult {
            plan: plan.clone(),
            methods: results,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::export_inputs;
    use crate::harness::folds::folds_for_years;
    use crate::io::{build_index, write_pair, write_sequence};
    use crate::synth::{degrade, generate_event, EventConfig, SensorConfig};

    fn corpus(dir: &Path, constant: bool) -> DatasetIndex {
        let cfg = EventConfig {
            geometry: GridGeometry::new(48, 48, 4.0).unwrap(),
            frames: 6,
            ..EventConfig::default()
        };
        for (i, year) in [2001, 2002, 2003].into_iter().enumerate() {
            for month in [7, 8] {
                let (hr, lr) = if constant {
                    let g = cfg.geometry;
                    let hr = PrecipSequence::from_buffers(g, vec![vec![2.0; g.len()]; 6], 0).unwrap();
                    let lr = degrade(&hr, &SensorConfig::IDENTITY, 3, 0).unwrap();
                    (hr, lr)
                } else {
                    let (hr, _) = generate_event(&cfg, (i * 10 + month) as u64).unwrap();
                    let lr = degrade(&hr, &SensorConfig::IDENTITY, 3, 0).unwrap();
                    (hr.to_storage_precision(), lr.to_storage_precision())
                };
                write_pair(&dir.join(format!("{year}-{month:02}.rnb")), &hr, &lr).unwrap();
            }
        }
        build_index(dir, &Default::default()).unwrap()
    }

    #[test]
    fn identity_oracle_scores_zero() {
        let dir = tempfile::tempdir().unwrap();
        let index = corpus(dir.path(), false);
        let plan = folds_for_years(&index.years()).unwrap();
        let ex = tempfile::tempdir().unwrap();
        for e in &index.entries {
            let (hr, _) = read_pair(&e.path, e.format, &Default::default()).unwrap();
            write_sequence(&prediction_path(ex.path(), &e.id()), &hr).unwrap();
        }
        let r = run_external(&index, &plan.folds[1], ex.path(), &RunOptions::default()).unwrap();
        assert_eq!(r.report.rmse, 0.0);
        assert_eq!(r.report.pem, 0.0);
        assert_eq!(r.report.pdem, 0.0);
        assert_eq!(r.sequences.len(), 2);
    }

    #[test]
    fn kriging_on_constant_fold_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let index = corpus(dir.path(), true);
        let plan = folds_for_years(&index.years()).unwrap();
        let b = Baseline::from_name("kriging").unwrap();
        let r = run_baseline(&index, &plan.folds[0], &b, &RunOptions::default()).unwrap();
        assert_eq!(r.report.rmse, 0.0);
    }

    #[test]
    fn external_path_matches_internal_path() {
        let dir = tempfile::tempdir().unwrap();
        let index = corpus(dir.path(), false);
        let plan = folds_for_years(&index.years()).unwrap();
        let ex = tempfile::tempdir().unwrap();
        let bicubic = Baseline::from_name("bicubic").unwrap();
        let opts = RunOptions::default();
        export_inputs(&index, &plan, ex.path(), &opts.read).unwrap();
        for e in &index.entries {
            let lr = read_sequence(&ex.path().join(format!("{}.lr.rnb", e.id())), None).unwrap();
            let (pred, _) = downscale_sequence(&lr, 3, &bicubic).unwrap();
            write_sequence(&prediction_path(ex.path(), &e.id()), &pred).unwrap();
        }
        for fold in &plan.folds {
            let internal = run_baseline(&index, fold, &bicubic, &opts).unwrap();
            let external = run_external(&index, fold, ex.path(), &opts).unwrap();
            assert_eq!(internal, external);
        }
    }

    #[test]
    fn missing_and_mismatched_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let index = corpus(dir.path(), false);
        let plan = folds_for_years(&index.years()).unwrap();
        let ex = tempfile::tempdir().unwrap();
        let fold = &plan.folds[2];
        let err = run_external(&index, fold, ex.path(), &RunOptions::default()).unwrap_err();
        match err.root() {
            HarnessError::MissingPrediction { id, .. } => assert!(id.starts_with("2003-")),
            other => panic!("{other}"),
        }
        for e in index.entries_for_year(2003) {
            let (_, lr) = read_pair(&e.path, e.format, &Default::default()).unwrap();
            write_sequence(&prediction_path(ex.path(), &e.id()), &lr).unwrap();
        }
        let err = run_external(&index, fold, ex.path(), &RunOptions::default()).unwrap_err();
        assert!(matches!(err.root(), HarnessError::GeometryMismatch { .. }), "{err}");
    }

    #[test]
    fn crossval_is_deterministic_across_workers() {
        let dir = tempfile::tempdir().unwrap();
        let index = corpus(dir.path(), false);
        let plan = folds_for_years(&index.years()).unwrap();
        let methods = [
            Method::Baseline(Baseline::from_name("nearest").unwrap()),
            Method::Baseline(Baseline::from_name("bicubic").unwrap()),
        ];
        let opts = RunOptions::default();
        let a = crossval(&index, &plan, &methods, &opts, 1).unwrap();
        let b = crossval(&index, &plan, &methods, &opts, 3).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.methods[0].folds.len(), 3);
        assert_eq!(a.methods[0].fold_mean.fold_count, 3);
        assert!(a.methods[1].fold_mean.report.rmse <= a.methods[0].fold_mean.report.rmse);
    }
}
