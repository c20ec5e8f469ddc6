//! Downscaling verification metrics.
//!
//! Six sub-metrics compare a predicted sequence against observations:
//!
//! | metric | unit | compares |
//! |--------|------|----------|
//! | MPPE   | mm/hour | top quantile of all rain rates, pooled over space and time |
//! | HRRE   | km²  | heavy-rain area per frame |
//! | CPMSE  | mm²/hour² | per-pixel temporal mean rate |
//! | AMMD   | rad  | orientation of the main rainfall system |
//! | CMD    | km   | centroid of the main rainfall system |
//! | HRTS   | km/hour | moving speed of the main rainfall system |
//!
//! Each is divided by its annual-mean-observation constant ([`AmoTable`]) to
//! get a percent bias. PEM averages the four reconstruction biases (weight
//! 0.25 each); PDEM averages the two dynamic ones (weight 0.5 each). RMSE is
//! reported alongside.
//!
//! All reductions run in a fixed frame order with compensated summation, so
//! results do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::{axis_difference, main_cluster, ClusterConfig, ClusterError, ClusterStats};
use crate::grid::{GridGeometry, PrecipFrame, PrecipSequence};
use crate::numeric::CompensatedSum;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("quantile of an empty set")]
    EmptyInput,
    #[error("quantile level must lie in (0, 1), got {0}")]
    InvalidTau(f64),
    #[error("heavy-rain threshold must be positive, got {0}")]
    InvalidHeavyThreshold(f64),
    #[error(transparent)]
    Cluster(#[from] ClusterError),
    #[error("prediction geometry {pred:?} differs from observation geometry {obs:?}")]
    GeometryMismatch { pred: GridGeometry, obs: GridGeometry },
    #[error("prediction and observation timestamps differ at frame {index} ({pred:?} vs {obs:?})")]
    TimestampMismatch {
        index: usize,
        pred: Option<i64>,
        obs: Option<i64>,
    },
    #[error("need at least 2 frames, got {0}")]
    TooShort(usize),
    #[error("AMO constant for {name} must be positive, got {value}")]
    NonPositiveAmo { name: &'static str, value: f64 },
    #[error("sub-metric {0} is missing or not finite")]
    MissingSubMetric(&'static str),
}

/// Annual mean observations used to normalize each sub-metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AmoTable {
    /// mm/hour
    pub mppe: f64,
    /// km²
    pub hrre: f64,
    /// radian
    pub ammd: f64,
    /// mm²/hour²
    pub cpmse: f64,
    /// km/hour
    pub hrts: f64,
    /// km
    pub cmd: f64,
}

impl Default for AmoTable {
    fn default() -> Self {
        Self {
            mppe: 64.0,
            hrre: 533.0,
            ammd: 0.64,
            cpmse: 332.0,
            hrts: 15.0,
            cmd: 26.0,
        }
    }
}

impl AmoTable {
    pub fn validate(&self) -> Result<(), MetricError> {
        for (name, value) in self.entries() {
            if !(value.is_finite() && value > 0.0) {
                return Err(MetricError::NonPositiveAmo { name, value });
            }
        }
        Ok(())
    }

    fn entries(&self) -> [(&'static str, f64); 6] {
        [
            ("mppe", self.mppe),
            ("hrre", self.hrre),
            ("ammd", self.ammd),
            ("cpmse", self.cpmse),
            ("hrts", self.hrts),
            ("cmd", self.cmd),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricConfig {
    /// Quantile level for MPPE.
    pub quantile_tau: f64,
    /// mm/hour; pixels at or above count as heavy rain for HRRE.
    pub heavy_threshold: f64,
    pub cluster: ClusterConfig,
    pub amo: AmoTable,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            quantile_tau: 0.999,
            heavy_threshold: 10.0,
            cluster: ClusterConfig::default(),
            amo: AmoTable::default(),
        }
    }
}

impl MetricConfig {
    pub fn validate(&self) -> Result<(), MetricError> {
        if !(self.quantile_tau > 0.0 && self.quantile_tau < 1.0) {
            return Err(MetricError::InvalidTau(self.quantile_tau));
        }
        if !(self.heavy_threshold.is_finite() && self.heavy_threshold > 0.0) {
            return Err(MetricError::InvalidHeavyThreshold(self.heavy_threshold));
        }
        self.cluster.validate()?;
        self.amo.validate()
    }
}

/// A metric value with the number of frames (or frame steps) it averages.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    pub frames_used: usize,
}

/// Sub-metric values feeding PEM/PDEM. `None` marks a value that was not
/// computed.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubMetrics {
    pub mppe: Option<f64>,
    pub hrre: Option<f64>,
    pub ammd: Option<f64>,
    pub cpmse: Option<f64>,
    pub hrts: Option<f64>,
    pub cmd: Option<f64>,
}

/// Full scoring of one prediction/observation pair.
///
/// Serializes to a flat JSON object with these exact field names.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub mppe: f64,
    pub hrre: f64,
    pub ammd: f64,
    pub cpmse: f64,
    pub hrts: f64,
    pub cmd: f64,
    pub rmse: f64,
    pub rmse_x100: f64,
    pub pbias_mppe: f64,
    pub pbias_hrre: f64,
    pub pbias_ammd: f64,
    pub pbias_cpmse: f64,
    pub pbias_hrts: f64,
    pub pbias_cmd: f64,
    pub pem: f64,
    pub pdem: f64,
    pub frames_used_mppe: usize,
    pub frames_used_hrre: usize,
    pub frames_used_ammd: usize,
    pub frames_used_cpmse: usize,
    pub frames_used_hrts: usize,
    pub frames_used_cmd: usize,
    pub frames_used_rmse: usize,
}

/// Per-metric frame counts carried into a [`MetricReport`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FramesUsed {
    pub mppe: usize,
    pub hrre: usize,
    pub ammd: usize,
    pub cpmse: usize,
    pub hrts: usize,
    pub cmd: usize,
    pub rmse: usize,
}

impl MetricReport {
    /// Fills biases and aggregates from the six sub-metrics and RMSE.
    pub fn from_parts(
        sub: &SubMetrics,
        rmse: f64,
        frames: FramesUsed,
        amo: &AmoTable,
    ) -> Result<Self, MetricError> {
        let need = |v: Option<f64>, name| v.filter(|x| x.is_finite()).ok_or(MetricError::MissingSubMetric(name));
        let mppe = need(sub.mppe, "mppe")?;
        let hrre = need(sub.hrre, "hrre")?;
        let ammd = need(sub.ammd, "ammd")?;
        let cpmse = need(sub.cpmse, "cpmse")?;
        let hrts = need(sub.hrts, "hrts")?;
        let cmd = need(sub.cmd, "cmd")?;
        Ok(Self {
            mppe,
            hrre,
            ammd,
            cpmse,
            hrts,
            cmd,
            rmse,
            rmse_x100: rmse * 100.0,
            pbias_mppe: pbias(mppe, amo.mppe)?,
            pbias_hrre: pbias(hrre, amo.hrre)?,
            pbias_ammd: pbias(ammd, amo.ammd)?,
            pbias_cpmse: pbias(cpmse, amo.cpmse)?,
            pbias_hrts: pbias(hrts, amo.hrts)?,
            pbias_cmd: pbias(cmd, amo.cmd)?,
            pem: pem(sub, amo)?,
            pdem: pdem(sub, amo)?,
            frames_used_mppe: frames.mppe,
            frames_used_hrre: frames.hrre,
            frames_used_ammd: frames.ammd,
            frames_used_cpmse: frames.cpmse,
            frames_used_hrts: frames.hrts,
            frames_used_cmd: frames.cmd,
            frames_used_rmse: frames.rmse,
        })
    }

    pub fn sub_metrics(&self) -> SubMetrics {
        SubMetrics {
            mppe: Some(self.mppe),
            hrre: Some(self.hrre),
            ammd: Some(self.ammd),
            cpmse: Some(self.cpmse),
            hrts: Some(self.hrts),
            cmd: Some(self.cmd),
        }
    }

    pub fn frames_used(&self) -> FramesUsed {
        FramesUsed {
            mppe: self.frames_used_mppe,
            hrre: self.frames_used_hrre,
            ammd: self.frames_used_ammd,
            cpmse: self.frames_used_cpmse,
            hrts: self.frames_used_hrts,
            cmd: self.frames_used_cmd,
            rmse: self.frames_used_rmse,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report fields are plain numbers")
    }
}

/// Metric value as a fraction of its annual mean observation.
pub fn pbias(metric_value: f64, amo: f64) -> Result<f64, MetricError> {
    if !(amo.is_finite() && amo > 0.0) {
        return Err(MetricError::NonPositiveAmo {
            name: "pbias",
            value: amo,
        });
    }
    Ok(metric_value.abs() / amo)
}

/// Precipitation error measure: 0.25 x sum of the MPPE, HRRE, AMMD and
/// CPMSE biases.
pub fn pem(sub: &SubMetrics, amo: &AmoTable) -> Result<f64, MetricError> {
    let terms = [
        (sub.mppe, amo.mppe, "mppe"),
        (sub.hrre, amo.hrre, "hrre"),
        (sub.ammd, amo.ammd, "ammd"),
        (sub.cpmse, amo.cpmse, "cpmse"),
    ];
    weighted_bias(&terms, 0.25)
}

/// Precipitation dynamics error measure: 0.5 x sum of the HRTS and CMD
/// biases.
pub fn pdem(sub: &SubMetrics, amo: &AmoTable) -> Result<f64, MetricError> {
    let terms = [(sub.hrts, amo.hrts, "hrts"), (sub.cmd, amo.cmd, "cmd")];
    weighted_bias(&terms, 0.5)
}

fn weighted_bias(terms: &[(Option<f64>, f64, &'static str)], weight: f64) -> Result<f64, MetricError> {
    let mut total = 0.0;
    for &(value, amo, name) in terms {
        let value = value
            .filter(|v| v.is_finite())
            .ok_or(MetricError::MissingSubMetric(name))?;
        if !(amo.is_finite() && amo > 0.0) {
            return Err(MetricError::NonPositiveAmo { name, value: amo });
        }
        total += weight * (value.abs() / amo);
    }
    Ok(total)
}

/// 1-based nearest-rank position `ceil(tau * n)`, clamped to `[1, n]`.
fn nearest_rank(tau: f64, n: usize) -> usize {
    ((tau * n as f64).ceil() as usize).clamp(1, n)
}

fn check_tau(tau: f64) -> Result<(), MetricError> {
    if tau > 0.0 && tau < 1.0 {
        Ok(())
    } else {
        Err(MetricError::InvalidTau(tau))
    }
}

/// Nearest-rank quantile: the `ceil(tau * n)`-th smallest value.
pub fn quantile(values: &[f64], tau: f64) -> Result<f64, MetricError> {
    check_tau(tau)?;
    if values.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    let k = nearest_rank(tau, values.len()) - 1;
    let mut scratch = values.to_vec();
    let (_, v, _) = scratch.select_nth_unstable_by(k, f64::total_cmp);
    Ok(*v)
}

/// Candidate sets at or below this size are resolved by direct selection.
const DIRECT_SELECT_LIMIT: u64 = 1 << 20;

#[inline]
fn order_key(v: f64) -> u64 {
    // Bit patterns of non-negative doubles sort like the values; fold -0.0.
    if v == 0.0 {
        0
    } else {
        v.to_bits()
    }
}

/// Nearest-rank quantile over the concatenation of non-negative chunks,
/// without materializing it: radix selection on the IEEE bit patterns,
/// 16 bits per pass.
pub fn pooled_quantile(chunks: &[&[f64]], tau: f64) -> Result<f64, MetricError> {
    check_tau(tau)?;
    let n: usize = chunks.iter().map(|c| c.len()).sum();
    if n == 0 {
        return Err(MetricError::EmptyInput);
    }
    debug_assert!(chunks.iter().all(|c| c.iter().all(|v| *v >= 0.0)));
    let mut rank = (nearest_rank(tau, n) - 1) as u64;
    let mut prefix = 0u64;
    let mut mask = 0u64;
    for shift in [48u32, 32, 16, 0] {
        let hist = chunks
            .par_iter()
            .fold(
                || vec![0u64; 1 << 16],
                |mut h, chunk| {
                    for &v in chunk.iter() {
                        let key = order_key(v);
                        if key & mask == prefix {
                            h[((key >> shift) & 0xFFFF) as usize] += 1;
                        }
                    }
                    h
                },
            )
            .reduce(
                || vec![0u64; 1 << 16],
                |mut a, b| {
                    a.iter_mut().zip(&b).for_each(|(x, y)| *x += y);
                    a
                },
            );
        let mut digit = 0usize;
        while rank >= hist[digit] {
            rank -= hist[digit];
            digit += 1;
        }
        prefix |= (digit as u64) << shift;
        mask |= 0xFFFFu64 << shift;
        if shift > 0 && hist[digit] <= DIRECT_SELECT_LIMIT {
            let mut candidates: Vec<f64> = chunks
                .iter()
                .flat_map(|c| c.iter().copied())
                .filter(|v| order_key(*v) & mask == prefix)
                .collect();
            let (_, v, _) = candidates.select_nth_unstable_by(rank as usize, f64::total_cmp);
            return Ok(*v);
        }
    }
    Ok(f64::from_bits(prefix))
}

/// Checks that two sequences can be compared frame by frame.
pub fn check_aligned(pred: &PrecipSequence, obs: &PrecipSequence) -> Result<(), MetricError> {
    if pred.geometry() != obs.geometry() {
        return Err(MetricError::GeometryMismatch {
            pred: *pred.geometry(),
            obs: *obs.geometry(),
        });
    }
    let n = pred.len().max(obs.len());
    for index in 0..n {
        let p = pred.frames().get(index).map(PrecipFrame::timestamp);
        let o = obs.frames().get(index).map(PrecipFrame::timestamp);
        if p != o {
            return Err(MetricError::TimestampMismatch { index, pred: p, obs: o });
        }
    }
    Ok(())
}

fn frame_slices(seq: &PrecipSequence) -> Vec<&[f64]> {
    seq.frames().iter().map(PrecipFrame::values).collect()
}

/// Absolute difference of the pooled top quantiles, mm/hour.
pub fn mppe(pred: &PrecipSequence, obs: &PrecipSequence, config: &MetricConfig) -> Result<f64, MetricError> {
    check_aligned(pred, obs)?;
    let qp = pooled_quantile(&frame_slices(pred), config.quantile_tau)?;
    let qo = pooled_quantile(&frame_slices(obs), config.quantile_tau)?;
    Ok((qp - qo).abs())
}

fn heavy_count(frame: &PrecipFrame, threshold: f64) -> usize {
    frame.values().iter().filter(|v| **v >= threshold).count()
}

fn hrre_from_counts(counts: &[(usize, usize)], geometry: &GridGeometry) -> f64 {
    let area = geometry.pixel_area_km2();
    let total: CompensatedSum = counts
        .iter()
        .map(|&(p, o)| p.abs_diff(o) as f64 * area)
        .sum();
    total.value() / counts.len() as f64
}

/// Mean over frames of the heavy-rain area difference, km².
pub fn hrre(pred: &PrecipSequence, obs: &PrecipSequence, config: &MetricConfig) -> Result<f64, MetricError> {
    check_aligned(pred, obs)?;
    let counts: Vec<(usize, usize)> = pred
        .frames()
        .par_iter()
        .zip(obs.frames().par_iter())
        .map(|(p, o)| {
            (
                heavy_count(p, config.heavy_threshold),
                heavy_count(o, config.heavy_threshold),
            )
        })
        .collect();
    Ok(hrre_from_counts(&counts, pred.geometry()))
}

const PIXEL_CHUNK: usize = 4096;

/// Mean over pixels of the squared difference of temporal-mean rain rates,
/// mm²/hour².
pub fn cpmse(pred: &PrecipSequence, obs: &PrecipSequence, _config: &MetricConfig) -> Result<f64, MetricError> {
    check_aligned(pred, obs)?;
    Ok(cpmse_unchecked(pred, obs))
}

fn cpmse_unchecked(pred: &PrecipSequence, obs: &PrecipSequence) -> f64 {
    let n_pixels = pred.geometry().len();
    let t = pred.len() as f64;
    let chunk_sums: Vec<CompensatedSum> = (0..n_pixels.div_ceil(PIXEL_CHUNK))
        .into_par_iter()
        .map(|chunk| {
            let start = chunk * PIXEL_CHUNK;
            let end = (start + PIXEL_CHUNK).min(n_pixels);
            let mut diff = vec![CompensatedSum::new(); end - start];
            for (p, o) in pred.frames().iter().zip(obs.frames()) {
                let (pv, ov) = (&p.values()[start..end], &o.values()[start..end]);
                for ((d, a), b) in diff.iter_mut().zip(pv).zip(ov) {
                    d.add(a - b);
                }
            }
            diff.iter()
                .map(|d| {
                    let m = d.value() / t;
                    m * m
                })
                .sum()
        })
        .collect();
    let mut total = CompensatedSum::new();
    for s in &chunk_sums {
        total.merge(s);
    }
    total.value() / n_pixels as f64
}

fn frame_squared_error(p: &PrecipFrame, o: &PrecipFrame) -> CompensatedSum {
    p.values()
        .iter()
        .zip(o.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum()
}

/// Root mean squared difference over all pixels and frames, mm/hour.
pub fn rmse(pred: &PrecipSequence, obs: &PrecipSequence) -> Result<f64, MetricError> {
    check_aligned(pred, obs)?;
    let per_frame: Vec<CompensatedSum> = pred
        .frames()
        .par_iter()
        .zip(obs.frames().par_iter())
        .map(|(p, o)| frame_squared_error(p, o))
        .collect();
    Ok(rmse_from_partials(&per_frame, pred.geometry().len() * pred.len()))
}

fn rmse_from_partials(per_frame: &[CompensatedSum], count: usize) -> f64 {
    let mut total = CompensatedSum::new();
    for s in per_frame {
        total.merge(s);
    }
    (total.value().max(0.0) / count as f64).sqrt()
}

type ClusterPair = (Option<ClusterStats>, Option<ClusterStats>);

fn cluster_pairs(pred: &PrecipSequence, obs: &PrecipSequence, config: &ClusterConfig) -> Vec<ClusterPair> {
    pred.frames()
        .par_iter()
        .zip(obs.frames().par_iter())
        .map(|(p, o)| (main_cluster(p, config), main_cluster(o, config)))
        .collect()
}

fn ammd_from_clusters(clusters: &[ClusterPair]) -> MetricValue {
    let mut total = CompensatedSum::new();
    let mut used = 0;
    for (p, o) in clusters {
        if let (Some(p), Some(o)) = (p, o) {
            total.add(axis_difference(p.orientation_rad, o.orientation_rad));
            used += 1;
        }
    }
    mean_or_zero(total, used)
}

fn cmd_from_clusters(clusters: &[ClusterPair]) -> MetricValue {
    let mut total = CompensatedSum::new();
    let mut used = 0;
    for (p, o) in clusters {
        if let (Some(p), Some(o)) = (p, o) {
            total.add(distance(p.centroid_km, o.centroid_km));
            used += 1;
        }
    }
    mean_or_zero(total, used)
}

fn hrts_from_clusters(clusters: &[ClusterPair], timestep_hours: f64) -> MetricValue {
    let mut total = CompensatedSum::new();
    let mut used = 0;
    for w in clusters.windows(2) {
        let ((Some(p0), Some(o0)), (Some(p1), Some(o1))) = (&w[0], &w[1]) else {
            continue;
        };
        let sp = distance(p0.centroid_km, p1.centroid_km) / timestep_hours;
        let so = distance(o0.centroid_km, o1.centroid_km) / timestep_hours;
        total.add((sp - so) * (sp - so));
        used += 1;
    }
    let mean = mean_or_zero(total, used);
    MetricValue {
        value: mean.value.sqrt(),
        frames_used: used,
    }
}

fn mean_or_zero(total: CompensatedSum, used: usize) -> MetricValue {
    MetricValue {
        value: if used == 0 { 0.0 } else { total.value() / used as f64 },
        frames_used: used,
    }
}

fn distance(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - b.0).hypot(a.1 - b.1)
}

/// Mean wrapped orientation difference of the main clusters, radian.
/// Frames where either side is dry are skipped.
pub fn ammd(pred: &PrecipSequence, obs: &PrecipSequence, config: &MetricConfig) -> Result<MetricValue, MetricError> {
    check_aligned(pred, obs)?;
    config.cluster.validate()?;
    Ok(ammd_from_clusters(&cluster_pairs(pred, obs, &config.cluster)))
}

/// Mean distance between main-cluster centroids, km.
pub fn cmd(pred: &PrecipSequence, obs: &PrecipSequence, config: &MetricConfig) -> Result<MetricValue, MetricError> {
    check_aligned(pred, obs)?;
    config.cluster.validate()?;
    Ok(cmd_from_clusters(&cluster_pairs(pred, obs, &config.cluster)))
}

/// RMSE of main-cluster moving speeds over consecutive frame pairs, km/hour.
pub fn hrts(pred: &PrecipSequence, obs: &PrecipSequence, config: &MetricConfig) -> Result<MetricValue, MetricError> {
    check_aligned(pred, obs)?;
    if pred.len() < 2 {
        return Err(MetricError::TooShort(pred.len()));
    }
    config.cluster.validate()?;
    let clusters = cluster_pairs(pred, obs, &config.cluster);
    Ok(hrts_from_clusters(&clusters, pred.geometry().timestep_hours()))
}

/// RMSE of the first temporal difference of the two fields, mm/hour².
///
/// Diagnostic only. It is not one of the six sub-metrics and does not
/// enter PEM or PDEM.
pub fn temporal_derivative_rmse(pred: &PrecipSequence, obs: &PrecipSequence) -> Result<f64, MetricError> {
    check_aligned(pred, obs)?;
    if pred.len() < 2 {
        return Err(MetricError::TooShort(pred.len()));
    }
    let dt = pred.geometry().timestep_hours();
    let (pf, of) = (pred.frames(), obs.frames());
    let per_step: Vec<CompensatedSum> = (1..pf.len())
        .into_par_iter()
        .map(|t| {
            let it = pf[t].values().iter().zip(pf[t - 1].values());
            it.zip(of[t].values().iter().zip(of[t - 1].values()))
                .map(|((p1, p0), (o1, o0))| {
                    let d = ((p1 - p0) - (o1 - o0)) / dt;
                    d * d
                })
                .sum()
        })
        .collect();
    Ok(rmse_from_partials(&per_step, pred.geometry().len() * (pf.len() - 1)))
}

struct FramePartial {
    squared_error: CompensatedSum,
    heavy: (usize, usize),
    clusters: ClusterPair,
}

/// Scores a prediction against observations with the full suite.
pub fn evaluate(pred: &PrecipSequence, obs: &PrecipSequence, config: &MetricConfig) -> Result<MetricReport, MetricError> {
    config.validate()?;
    check_aligned(pred, obs)?;
    if pred.len() < 2 {
        return Err(MetricError::TooShort(pred.len()));
    }
    let geometry = pred.geometry();
    let frames = pred.len();

    let partials: Vec<FramePartial> = pred
        .frames()
        .par_iter()
        .zip(obs.frames().par_iter())
        .map(|(p, o)| FramePartial {
            squared_error: frame_squared_error(p, o),
            heavy: (
                heavy_count(p, config.heavy_threshold),
                heavy_count(o, config.heavy_threshold),
            ),
            clusters: (main_cluster(p, &config.cluster), main_cluster(o, &config.cluster)),
        })
        .collect();

    let squared: Vec<CompensatedSum> = partials.iter().map(|p| p.squared_error).collect();
    let heavy: Vec<(usize, usize)> = partials.iter().map(|p| p.heavy).collect();
    let clusters: Vec<ClusterPair> = partials.into_iter().map(|p| p.clusters).collect();

    let qp = pooled_quantile(&frame_slices(pred), config.quantile_tau)?;
    let qo = pooled_quantile(&frame_slices(obs), config.quantile_tau)?;
    let ammd = ammd_from_clusters(&clusters);
    let cmd = cmd_from_clusters(&clusters);
    let hrts = hrts_from_clusters(&clusters, geometry.timestep_hours());

    let sub = SubMetrics {
        mppe: Some((qp - qo).abs()),
        hrre: Some(hrre_from_counts(&heavy, geometry)),
        ammd: Some(ammd.value),
        cpmse: Some(cpmse_unchecked(pred, obs)),
        hrts: Some(hrts.value),
        cmd: Some(cmd.value),
    };
    let used = FramesUsed {
        mppe: frames,
        hrre: frames,
        ammd: ammd.frames_used,
        cpmse: frames,
        hrts: hrts.frames_used,
        cmd: cmd.frames_used,
        rmse: frames,
    };
    MetricReport::from_parts(&sub, rmse_from_partials(&squared, geometry.len() * frames), used, &config.amo)
}
