//! Ordinary kriging downscaler with per-frame variogram fitting.
//!
//! LR pixel centres are the observations. Every HR pixel centre is predicted
//! from its `k` nearest observations by solving the bordered
//! `(k + 1) x (k + 1)` ordinary-kriging system, whose last row forces the
//! weights to sum to one.
//!
//! On a regular grid the neighbour geometry repeats, so systems are solved
//! once per distinct neighbourhood layout and the weights reused.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::grid::{PrecipFrame, DEFAULT_WET_THRESHOLD};

use super::interp::source_coordinate;
use super::BaselineError;

/// Lower bound on the partial sill, keeping fitted models non-degenerate.
pub const SILL_FLOOR: f64 = 1e-9;

const MAX_FIT_ITERATIONS: usize = 200;
const FIT_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariogramKind {
    #[default]
    Exponential,
    Spherical,
    Gaussian,
}

impl VariogramKind {
    /// Normalized structure function; 0 at `h = 0`, approaching 1 at the
    /// (practical) range.
    fn structure(self, h: f64, range: f64) -> f64 {
        let x = h / range;
        match self {
            VariogramKind::Exponential => 1.0 - (-3.0 * x).exp(),
            VariogramKind::Gaussian => 1.0 - (-3.0 * x * x).exp(),
            VariogramKind::Spherical => {
                if x >= 1.0 {
                    1.0
                } else {
                    1.5 * x - 0.5 * x * x * x
                }
            }
        }
    }
}

impl std::str::FromStr for VariogramKind {
    type Err = BaselineError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "exponential" => Ok(Self::Exponential),
            "spherical" => Ok(Self::Spherical),
            "gaussian" => Ok(Self::Gaussian),
            other => Err(BaselineError::InvalidParameter(format!("unknown variogram kind {other:?}"))),
        }
    }
}

/// Isotropic variogram: `gamma(h) = nugget + (sill - nugget) * f(h / range)`.
///
/// Exponential and Gaussian models use the practical-range convention: the
/// structure reaches 95% of the sill at `range_km`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramModel {
    pub kind: VariogramKind,
    pub nugget: f64,
    pub sill: f64,
    pub range_km: f64,
}

impl VariogramModel {
    pub fn new(kind: VariogramKind, nugget: f64, sill: f64, range_km: f64) -> Result<Self, BaselineError> {
        if !(nugget >= 0.0 && sill > 0.0 && nugget <= sill && range_km > 0.0)
            || !(nugget.is_finite() && sill.is_finite() && range_km.is_finite())
        {
            return Err(BaselineError::InvalidParameter(format!(
                "variogram needs 0 <= nugget <= sill, sill > 0, range > 0 (got {nugget}, {sill}, {range_km})"
            )));
        }
        Ok(Self {
            kind,
            nugget,
            sill,
            range_km,
        })
    }

    /// Model value; `gamma(0)` is the nugget.
    pub fn gamma(&self, h: f64) -> f64 {
        self.nugget + (self.sill - self.nugget) * self.kind.structure(h, self.range_km)
    }

    /// Semivariance between two points `h` apart; exactly 0 for coincident
    /// points, so kriging interpolates observations.
    pub fn semivariance(&self, h: f64) -> f64 {
        if h == 0.0 {
            0.0
        } else {
            self.gamma(h)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lag {
    /// Mean separation of the pairs in this bin, km.
    pub distance_km: f64,
    /// Half mean squared difference, mm²/hour².
    pub gamma: f64,
    pub pair_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Semivariogram {
    pub lags: Vec<Lag>,
    pub max_lag_km: f64,
    pub bin_width_km: f64,
}

/// Pixel offsets `(dr, dc)` with `dr > 0 || (dr == 0 && dc > 0)` whose
/// separation is within `max_lag_km`, each listed once.
fn half_plane_offsets(rows: usize, cols: usize, pixel_km: f64, max_lag_km: f64) -> Vec<(usize, i64, f64)> {
    let reach_r = ((max_lag_km / pixel_km).floor() as usize).min(rows.saturating_sub(1));
    let reach_c = ((max_lag_km / pixel_km).floor() as i64).min(cols as i64 - 1);
    let mut out = Vec::new();
    for dr in 0..=reach_r {
        let start = if dr == 0 { 1 } else { -reach_c };
        for dc in start..=reach_c {
            let d = pixel_km * ((dr * dr) as f64 + (dc * dc) as f64).sqrt();
            if d <= max_lag_km {
                out.push((dr, dc, d));
            }
        }
    }
    out
}

/// Bin index of a separation: `floor(d / width)`, with `d == max_lag`
/// folded into the last bin.
pub fn lag_bin(distance_km: f64, bin_width_km: f64, bins: usize) -> usize {
    ((distance_km / bin_width_km).floor() as usize).min(bins - 1)
}

pub fn lag_bin_count(max_lag_km: f64, bin_width_km: f64) -> usize {
    ((max_lag_km / bin_width_km).ceil() as usize).max(1)
}

/// Empirical semivariogram over all pixel pairs up to `max_lag_km` apart.
///
/// When there are more than `sample_cap` such pairs, each pair is kept with
/// probability `sample_cap / total` using a ChaCha8 stream seeded by `seed`.
pub fn empirical_semivariogram(
    frame: &PrecipFrame,
    bin_width_km: f64,
    max_lag_km: f64,
    sample_cap: Option<u64>,
    seed: u64,
) -> Result<Semivariogram, BaselineError> {
    if !(bin_width_km > 0.0 && bin_width_km.is_finite()) || !(max_lag_km > 0.0 && max_lag_km.is_finite()) {
        return Err(BaselineError::InvalidParameter(format!(
            "bin width {bin_width_km} and max lag {max_lag_km} must be positive"
        )));
    }
    let wet = frame.values().iter().filter(|v| **v >= DEFAULT_WET_THRESHOLD).count();
    if wet < 2 {
        return Err(BaselineError::NotEnoughData { wet_pixels: wet });
    }
    let (rows, cols) = (frame.rows(), frame.cols());
    let offsets = half_plane_offsets(rows, cols, frame.geometry().pixel_size_km(), max_lag_km);
    let total: u64 = offsets
        .iter()
        .map(|&(dr, dc, _)| ((rows - dr) * (cols - dc.unsigned_abs() as usize)) as u64)
        .sum();
    let keep = match sample_cap {
        Some(cap) if total > cap => Some(cap as f64 / total as f64),
        _ => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let bins = lag_bin_count(max_lag_km, bin_width_km);
    let mut sq = vec![0.0f64; bins];
    let mut dist = vec![0.0f64; bins];
    let mut count = vec![0u64; bins];
    let v = frame.values();
    for &(dr, dc, d) in &offsets {
        let bin = lag_bin(d, bin_width_km, bins);
        let (c0, c1) = if dc < 0 { (dc.unsigned_abs() as usize, cols) } else { (0, cols - dc as usize) };
        for r in 0..rows - dr {
            for c in c0..c1 {
                if let Some(p) = keep {
                    if rng.random::<f64>() >= p {
                        continue;
                    }
                }
                let a = v[r * cols + c];
                let b = v[(r + dr) * cols + (c as i64 + dc) as usize];
                sq[bin] += (a - b) * (a - b);
                dist[bin] += d;
                count[bin] += 1;
            }
        }
    }
    let lags = (0..bins)
        .filter(|&b| count[b] > 0)
        .map(|b| Lag {
            distance_km: dist[b] / count[b] as f64,
            gamma: 0.5 * sq[b] / count[b] as f64,
            pair_count: count[b],
        })
        .collect();
    Ok(Semivariogram {
        lags,
        max_lag_km,
        bin_width_km,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatus {
    Converged,
    MaxIterations,
    /// Every bin had zero semivariance; a nugget-only model was returned.
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariogramFit {
    pub model: VariogramModel,
    pub status: FitStatus,
    pub iterations: usize,
    /// Pair-weighted squared error at the starting parameters.
    pub initial_objective: f64,
    pub objective: f64,
}

/// Pair-count-weighted squared error of a model against the empirical bins.
pub fn fit_objective(emp: &Semivariogram, model: &VariogramModel) -> f64 {
    emp.lags
        .iter()
        .map(|l| l.pair_count as f64 * (l.gamma - model.gamma(l.distance_km)).powi(2))
        .sum()
}

/// Best `(nugget, partial_sill)` for a fixed range under `nugget >= 0`,
/// `partial_sill >= SILL_FLOOR`, by weighted least squares.
fn solve_linear_block(emp: &Semivariogram, kind: VariogramKind, range: f64) -> (f64, f64, f64) {
    let rows: Vec<(f64, f64, f64)> = emp
        .lags
        .iter()
        .map(|l| (l.pair_count as f64, kind.structure(l.distance_km, range), l.gamma))
        .collect();
    let objective = |n: f64, c: f64| -> f64 { rows.iter().map(|&(w, f, g)| w * (g - n - c * f).powi(2)).sum() };

    let (mut sw, mut sf, mut sff, mut sg, mut sfg) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for &(w, f, g) in &rows {
        sw += w;
        sf += w * f;
        sff += w * f * f;
        sg += w * g;
        sfg += w * f * g;
    }
    let mut candidates = Vec::with_capacity(4);
    let det = sw * sff - sf * sf;
    if det.abs() > 1e-12 * sw * sff {
        let c = (sw * sfg - sf * sg) / det;
        let n = (sg - c * sf) / sw;
        if n >= 0.0 && c >= SILL_FLOOR {
            candidates.push((n, c));
        }
    }
    // Boundary solutions.
    if sff > 0.0 {
        candidates.push((0.0, (sfg / sff).max(SILL_FLOOR)));
    }
    candidates.push((((sg - SILL_FLOOR * sf) / sw).max(0.0), SILL_FLOOR));
    candidates.push((0.0, SILL_FLOOR));
    candidates
        .into_iter()
        .map(|(n, c)| (n, c, objective(n, c)))
        .min_by(|a, b| a.2.total_cmp(&b.2))
        .expect("at least one candidate")
}

/// Minimizes the profiled objective over `ln(range)` in `[lo, hi]`: a coarse
/// scan followed by golden-section refinement around the best grid point.
fn search_range(emp: &Semivariogram, kind: VariogramKind, lo: f64, hi: f64) -> (f64, f64, f64, f64) {
    let eval = |log_r: f64| {
        let r = log_r.exp();
        let (n, c, obj) = solve_linear_block(emp, kind, r);
        (r, n, c, obj)
    };
    let (llo, lhi) = (lo.ln(), hi.ln());
    const GRID: usize = 48;
    let step = (lhi - llo) / GRID as f64;
    let mut best = eval(llo);
    let mut best_i = 0;
    for i in 1..=GRID {
        let cand = eval(llo + step * i as f64);
        if cand.3 < best.3 {
            best = cand;
            best_i = i;
        }
    }
    let mut a = llo + step * best_i.saturating_sub(1) as f64;
    let mut b = (llo + step * (best_i + 1) as f64).min(lhi);
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = eval(x1);
    let mut f2 = eval(x2);
    for _ in 0..80 {
        if f1.3 <= f2.3 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = eval(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = eval(x2);
        }
        if (b - a).abs() < 1e-12 {
            break;
        }
    }
    for cand in [f1, f2] {
        if cand.3 < best.3 {
            best = cand;
        }
    }
    best
}

/// Weighted least-squares variogram fit (weights = pair counts).
///
/// Block coordinate descent from `nugget = gamma(first bin)`,
/// `sill = max gamma`, `range = max_lag / 2`: the `(nugget, sill)` block is
/// solved exactly for the current range, then the range coordinate is moved
/// by a bounded line search. A move is only accepted if it lowers the
/// objective. Stops once the relative objective change drops below `1e-8`
/// or after 200 sweeps.
pub fn fit_variogram_model(emp: &Semivariogram, kind: VariogramKind) -> Result<VariogramFit, BaselineError> {
    if emp.lags.len() < 3 {
        return Err(BaselineError::TooFewBins(emp.lags.len()));
    }
    let max_gamma = emp.lags.iter().map(|l| l.gamma).fold(0.0, f64::max);
    let half_lag = emp.max_lag_km / 2.0;
    if max_gamma <= 0.0 {
        let model = VariogramModel::new(kind, 0.0, SILL_FLOOR, half_lag)?;
        return Ok(VariogramFit {
            model,
            status: FitStatus::Degenerate,
            iterations: 0,
            initial_objective: fit_objective(emp, &model),
            objective: fit_objective(emp, &model),
        });
    }

    let nugget0 = emp.lags[0].gamma.min(max_gamma);
    let mut model = VariogramModel::new(kind, nugget0, max_gamma, half_lag)?;
    let initial_objective = fit_objective(emp, &model);
    let mut objective = initial_objective;
    let range_lo = emp.bin_width_km.min(emp.max_lag_km) * 0.05;
    let range_hi = emp.max_lag_km * 20.0;

    let mut status = FitStatus::MaxIterations;
    let mut iterations = 0;
    for sweep in 1..=MAX_FIT_ITERATIONS {
        iterations = sweep;
        let previous = objective;

        let (n, c, obj) = solve_linear_block(emp, kind, model.range_km);
        if obj < objective {
            model = VariogramModel::new(kind, n, n + c, model.range_km)?;
            objective = obj;
        }
        let (r, n, c, obj) = search_range(emp, kind, range_lo, range_hi);
        if obj < objective {
            model = VariogramModel::new(kind, n, n + c, r)?;
            objective = obj;
        }

        let scale = previous.abs().max(f64::MIN_POSITIVE);
        if (previous - objective).abs() / scale < FIT_TOLERANCE || objective == 0.0 {
            status = FitStatus::Converged;
            break;
        }
    }
    Ok(VariogramFit {
        model,
        status,
        iterations,
        initial_objective,
        objective,
    })
}

/// Solves the ordinary-kriging system for `target` given observation
/// positions (km). Returns the weights and the Lagrange multiplier, or
/// `None` when the system is singular.
pub fn ordinary_kriging_weights(
    points: &[(f64, f64)],
    target: (f64, f64),
    model: &VariogramModel,
) -> Option<(Vec<f64>, f64)> {
    let k = points.len();
    if k == 0 {
        return None;
    }
    let dist = |a: (f64, f64), b: (f64, f64)| (a.0 - b.0).hypot(a.1 - b.1);
    let mut a = DMatrix::<f64>::zeros(k + 1, k + 1);
    let mut rhs = DVector::<f64>::zeros(k + 1);
    for i in 0..k {
        for j in 0..k {
            a[(i, j)] = model.semivariance(dist(points[i], points[j]));
        }
        a[(i, k)] = 1.0;
        a[(k, i)] = 1.0;
        rhs[i] = model.semivariance(dist(points[i], target));
    }
    rhs[k] = 1.0;
    let solution = a.lu().solve(&rhs)?;
    if solution.iter().any(|v| !v.is_finite()) {
        return None;
    }
    let weights = solution.rows(0, k).iter().copied().collect();
    Some((weights, solution[k]))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KrigingConfig {
    pub kind: VariogramKind,
    /// Number of nearest observations per prediction.
    pub neighborhood_k: usize,
    /// Lag bin width; `None` uses the LR pixel size.
    pub bin_width_km: Option<f64>,
    /// Largest lag in the empirical variogram; `None` uses 10 LR pixels.
    pub max_lag_km: Option<f64>,
    pub sample_cap: Option<u64>,
    pub seed: u64,
}

impl Default for KrigingConfig {
    fn default() -> Self {
        Self {
            kind: VariogramKind::Exponential,
            neighborhood_k: 16,
            bin_width_km: None,
            max_lag_km: None,
            sample_cap: Some(200_000),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KrigingOutput {
    pub frame: PrecipFrame,
    pub fit: VariogramFit,
    /// HR pixels that fell back to the nearest observation after a singular
    /// system.
    pub fallbacks: usize,
    /// Largest `|sum(weights) - 1|` over all solved systems.
    pub max_weight_sum_error: f64,
    /// Number of distinct neighbourhood layouts solved.
    pub systems_solved: usize,
}

/// A neighbourhood layout: the prediction's sub-pixel phase plus neighbour
/// offsets relative to the LR cell `floor(source)`.
type LayoutKey = (usize, usize, Vec<(i32, i32)>);

struct PixelPlan {
    layout: usize,
    base: (i64, i64),
}

enum Solved {
    Weights(Vec<f64>),
    Singular,
}

fn nearest_offsets(sr: f64, sc: f64, rows: usize, cols: usize, k: usize) -> Vec<(i64, i64)> {
    let (cr, cc) = (sr.round() as i64, sc.round() as i64);
    let mut radius = ((k as f64).sqrt().ceil() as i64) + 1;
    loop {
        let mut cand: Vec<(f64, i64, i64)> = Vec::new();
        for r in (cr - radius).max(0)..=(cr + radius).min(rows as i64 - 1) {
            for c in (cc - radius).max(0)..=(cc + radius).min(cols as i64 - 1) {
                let d2 = (r as f64 - sr).powi(2) + (c as f64 - sc).powi(2);
                cand.push((d2, r, c));
            }
        }
        let whole_grid = radius as usize >= rows.max(cols);
        if cand.len() >= k || whole_grid {
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
            // Only trust the window if the k-th distance is inside it.
            let kth = cand.get(k.min(cand.len()) - 1).map(|c| c.0.sqrt()).unwrap_or(0.0);
            if whole_grid || kth <= radius as f64 - 0.5 {
                return cand.into_iter().take(k).map(|(_, r, c)| (r, c)).collect();
            }
        }
        radius *= 2;
    }
}

/// Downscales one LR frame by ordinary kriging.
pub fn kriging_downscale(lr: &PrecipFrame, factor: usize, config: &KrigingConfig) -> Result<KrigingOutput, BaselineError> {
    if factor == 0 {
        return Err(BaselineError::InvalidFactor(factor));
    }
    if config.neighborhood_k < 3 {
        return Err(BaselineError::InvalidParameter(format!(
            "neighborhood_k must be at least 3, got {}",
            config.neighborhood_k
        )));
    }
    let (rows, cols) = (lr.rows(), lr.cols());
    let pixel = lr.geometry().pixel_size_km();
    let k = config.neighborhood_k.min(rows * cols);

    let bin_width = config.bin_width_km.unwrap_or(pixel);
    let max_lag = config.max_lag_km.unwrap_or(10.0 * pixel);
    let fit = match empirical_semivariogram(lr, bin_width, max_lag, config.sample_cap, config.seed)
        .and_then(|emp| fit_variogram_model(&emp, config.kind))
    {
        Ok(fit) => fit,
        Err(BaselineError::NotEnoughData { .. }) | Err(BaselineError::TooFewBins(_)) => {
            let model = VariogramModel::new(config.kind, 0.0, SILL_FLOOR, max_lag / 2.0)?;
            VariogramFit {
                model,
                status: FitStatus::Degenerate,
                iterations: 0,
                initial_objective: 0.0,
                objective: 0.0,
            }
        }
        Err(e) => return Err(e),
    };
    let model = fit.model;

    // Plan: map every HR pixel to a layout.
    let hr_geometry = lr.geometry().refined(factor);
    let (hr_rows, hr_cols) = (hr_geometry.rows(), hr_geometry.cols());
    let mut layouts: HashMap<LayoutKey, usize> = HashMap::new();
    let mut keys: Vec<LayoutKey> = Vec::new();
    let mut plan = Vec::with_capacity(hr_rows * hr_cols);
    for orow in 0..hr_rows {
        let sr = source_coordinate(orow, factor);
        for ocol in 0..hr_cols {
            let sc = source_coordinate(ocol, factor);
            let base = (sr.floor() as i64, sc.floor() as i64);
            let offsets: Vec<(i32, i32)> = nearest_offsets(sr, sc, rows, cols, k)
                .into_iter()
                .map(|(r, c)| ((r - base.0) as i32, (c - base.1) as i32))
                .collect();
            let key = (orow % factor, ocol % factor, offsets);
            let next = keys.len();
            let layout = *layouts.entry(key.clone()).or_insert_with(|| {
                keys.push(key);
                next
            });
            plan.push(PixelPlan { layout, base });
        }
    }

    let solved: Vec<Solved> = keys
        .par_iter()
        .map(|(phase_r, phase_c, offsets)| {
            // Positions relative to the base LR cell, km.
            let fr = source_coordinate(*phase_r, factor) - source_coordinate(*phase_r, factor).floor();
            let fc = source_coordinate(*phase_c, factor) - source_coordinate(*phase_c, factor).floor();
            let points: Vec<(f64, f64)> =
                offsets.iter().map(|&(dr, dc)| (dc as f64 * pixel, dr as f64 * pixel)).collect();
            match ordinary_kriging_weights(&points, (fc * pixel, fr * pixel), &model) {
                Some((w, _)) => Solved::Weights(w),
                None => Solved::Singular,
            }
        })
        .collect();

    let max_weight_sum_error = solved
        .iter()
        .filter_map(|s| match s {
            Solved::Weights(w) => Some((w.iter().sum::<f64>() - 1.0).abs()),
            Solved::Singular => None,
        })
        .fold(0.0, f64::max);

    let src = lr.values();
    let predictions: Vec<(f64, bool)> = plan
        .par_iter()
        .map(|p| {
            let offsets = &keys[p.layout].2;
            let value_at = |&(dr, dc): &(i32, i32)| {
                let r = (p.base.0 + dr as i64) as usize;
                let c = (p.base.1 + dc as i64) as usize;
                src[r * cols + c]
            };
            let first = value_at(&offsets[0]);
            if offsets.iter().all(|o| value_at(o) == first) {
                return (first, false);
            }
            match &solved[p.layout] {
                Solved::Weights(w) => {
                    let v: f64 = offsets.iter().zip(w).map(|(o, w)| w * value_at(o)).sum();
                    (v.max(0.0), false)
                }
                Solved::Singular => (first, true),
            }
        })
        .collect();

    let fallbacks = predictions.iter().filter(|p| p.1).count();
    let values = predictions.into_iter().map(|p| p.0).collect();
    Ok(KrigingOutput {
        frame: PrecipFrame::from_trusted(hr_geometry, values, lr.timestamp()),
        fit,
        fallbacks,
        max_weight_sum_error,
        systems_solved: keys.len(),
    })
}
