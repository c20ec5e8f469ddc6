//! Seeded synthetic precipitation events with known dynamics.
//!
//! HR frames are sums of anisotropic Gaussian rain cells sampled at pixel
//! centres (pixel `(r, c)` sits at `x = c * pixel_km`, `y = r * pixel_km`).
//! Each cell moves at constant velocity, rotates at a constant rate and
//! follows a linear grow / plateau / decay intensity curve, so centroids,
//! orientations and speeds are known in closed form.
//!
//! Randomness comes from ChaCha8 seeded with `seed_from_u64(seed)`. Cell `i`
//! uses stream `i + 1`, template layout uses stream 0 and sensor noise for
//! LR frame `t` uses stream `t`. Output is identical on every platform.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cluster::wrap_half_turn;
use crate::grid::{block_mean_downsample, GridError, GridGeometry, PrecipFrame, PrecipSequence};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Io(#[from] crate::io::IoError),
}

fn invalid<T>(msg: impl Into<String>) -> Result<T, SynthError> {
    Err(SynthError::InvalidConfig(msg.into()))
}

/// One Gaussian rain cell.
///
/// The covariance has standard deviations `sigma_major_km` and
/// `sigma_minor_km` along axes rotated by `orientation_rad + rotation_rate * t`
/// from the +x (column) direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CellSpec {
    pub birth_hour: f64,
    pub death_hour: f64,
    /// Plateau rain rate, mm/hour.
    pub peak_rate: f64,
    /// Duration of the linear ramps at both ends of the lifetime.
    #[serde(default)]
    pub ramp_hours: f64,
    /// Position at hour 0, km.
    pub center_km: (f64, f64),
    #[serde(default)]
    pub velocity_km_h: (f64, f64),
    pub sigma_major_km: f64,
    pub sigma_minor_km: f64,
    #[serde(default)]
    pub orientation_rad: f64,
    #[serde(default)]
    pub rotation_rate: f64,
}

impl CellSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let finite = [
            self.birth_hour,
            self.death_hour,
            self.peak_rate,
            self.ramp_hours,
            self.center_km.0,
            self.center_km.1,
            self.velocity_km_h.0,
            self.velocity_km_h.1,
            self.sigma_major_km,
            self.sigma_minor_km,
            self.orientation_rad,
            self.rotation_rate,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return invalid("cell parameters must be finite");
        }
        if self.birth_hour >= self.death_hour {
            return invalid(format!("cell birth {} must precede death {}", self.birth_hour, self.death_hour));
        }
        if self.peak_rate < 0.0 || self.ramp_hours < 0.0 {
            return invalid("peak_rate and ramp_hours must be non-negative");
        }
        if !(self.sigma_major_km > 0.0 && self.sigma_minor_km > 0.0) {
            return invalid("cell sigmas must be positive");
        }
        Ok(())
    }

    /// Peak rate at hour `t`; zero outside `[birth, death]`.
    pub fn amplitude(&self, t: f64) -> f64 {
        if t < self.birth_hour || t > self.death_hour {
            return 0.0;
        }
        if self.ramp_hours == 0.0 {
            return self.peak_rate;
        }
        let grow = (t - self.birth_hour) / self.ramp_hours;
        let decay = (self.death_hour - t) / self.ramp_hours;
        self.peak_rate * grow.min(decay).min(1.0)
    }

    pub fn center_at(&self, t: f64) -> (f64, f64) {
        (self.center_km.0 + self.velocity_km_h.0 * t, self.center_km.1 + self.velocity_km_h.1 * t)
    }

    /// Major-axis angle at hour `t`, in `[0, pi)`.
    pub fn orientation_at(&self, t: f64) -> f64 {
        wrap_half_turn(self.orientation_rad + self.rotation_rate * t)
    }

    pub fn speed_km_h(&self) -> f64 {
        self.velocity_km_h.0.hypot(self.velocity_km_h.1)
    }

    /// Integrated rain of the cell at hour `t`, mm/hour·km².
    pub fn mass_at(&self, t: f64) -> f64 {
        self.amplitude(t) * 2.0 * PI * self.sigma_major_km * self.sigma_minor_km
    }

    /// Covariance `[[sxx, sxy], [sxy, syy]]` at hour `t`, km².
    pub fn covariance_at(&self, t: f64) -> [[f64; 2]; 2] {
        let (s, c) = (self.orientation_rad + self.rotation_rate * t).sin_cos();
        let (a, b) = (self.sigma_major_km.powi(2), self.sigma_minor_km.powi(2));
        let sxy = (a - b) * s * c;
        [[a * c * c + b * s * s, sxy], [sxy, a * s * s + b * c * c]]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventTemplate {
    /// One large anisotropic cell, slowly advected and rotating.
    HurricaneLike,
    /// A line of small cells moving together across the line.
    SquallLike,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EventConfig {
    pub geometry: GridGeometry,
    pub frames: usize,
    /// LR factor used by `degrade` in the CLI pipeline.
    pub factor: usize,
    pub template: Option<EventTemplate>,
    /// Explicit cells, added after any template cells.
    pub cells: Vec<CellSpec>,
    /// Relative peak-rate jitter applied per cell, uniform in `[-j, j]`.
    pub amplitude_jitter: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        Self {
            geometry: GridGeometry::new(96, 96, 4.0).expect("valid default geometry"),
            frames: 48,
            factor: 3,
            template: Some(EventTemplate::HurricaneLike),
            cells: Vec::new(),
            amplitude_jitter: 0.0,
        }
    }
}

impl EventConfig {
    pub fn with_template(template: EventTemplate) -> Self {
        Self {
            template: Some(template),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.frames < 2 {
            return invalid(format!("need at least 2 frames, got {}", self.frames));
        }
        if self.factor == 0 {
            return invalid("factor must be at least 1");
        }
        if self.template.is_none() && self.cells.is_empty() {
            return invalid("need a template or at least one cell");
        }
        if !(0.0..1.0).contains(&self.amplitude_jitter) {
            return invalid("amplitude_jitter must lie in [0, 1)");
        }
        self.cells.iter().try_for_each(CellSpec::validate)
    }
}

fn template_cells(template: EventTemplate, geometry: &GridGeometry, frames: usize, rng: &mut ChaCha8Rng) -> Vec<CellSpec> {
    let width = geometry.cols() as f64 * geometry.pixel_size_km();
    let height = geometry.rows() as f64 * geometry.pixel_size_km();
    let extent = width.min(height);
    let duration = (frames - 1) as f64 * geometry.timestep_hours();
    let mid = (width / 2.0, height / 2.0);
    let heading = rng.random_range(0.0..2.0 * PI);
    match template {
        EventTemplate::HurricaneLike => {
            // Path centred on the domain, spanning about half of it.
            let speed = rng.random_range(0.4..0.5) * extent / duration.max(1.0);
            let v = (speed * heading.cos(), speed * heading.sin());
            let ramp = (duration / 8.0).max(1.0);
            vec![CellSpec {
                birth_hour: -ramp,
                death_hour: duration + ramp,
                peak_rate: rng.random_range(25.0..40.0),
                ramp_hours: ramp,
                center_km: (mid.0 - v.0 * duration / 2.0, mid.1 - v.1 * duration / 2.0),
                velocity_km_h: v,
                sigma_major_km: extent * 0.07,
                sigma_minor_km: extent * 0.03,
                orientation_rad: rng.random_range(0.0..PI),
                rotation_rate: rng.random_range(0.02..0.04) * if rng.random::<bool>() { 1.0 } else { -1.0 },
            }]
        }
        EventTemplate::SquallLike => {
            let speed = rng.random_range(0.45..0.55) * extent / duration.max(1.0);
            let v = (speed * heading.cos(), speed * heading.sin());
            // The line lies across the direction of motion.
            let line_angle = heading + PI / 2.0;
            let (sigma_major, sigma_minor) = (extent * 0.035, extent * 0.014);
            let n = 5;
            let spacing = 1.6 * sigma_major;
            let start = (mid.0 - v.0 * duration / 2.0, mid.1 - v.1 * duration / 2.0);
            (0..n)
                .map(|i| {
                    let along = (i as f64 - (n - 1) as f64 / 2.0) * spacing;
                    CellSpec {
                        birth_hour: -1.0,
                        death_hour: duration + 1.0,
                        peak_rate: 20.0,
                        ramp_hours: 0.0,
                        center_km: (start.0 + along * line_angle.cos(), start.1 + along * line_angle.sin()),
                        velocity_km_h: v,
                        sigma_major_km: sigma_major,
                        sigma_minor_km: sigma_minor,
                        orientation_rad: wrap_half_turn(line_angle),
                        rotation_rate: 0.0,
                    }
                })
                .collect()
        }
    }
}

/// Ground-truth dynamics of a generated event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthTruth {
    pub cells: Vec<CellSpec>,
    pub frames: usize,
    pub timestep_hours: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameTruth {
    /// Index of the cell with the largest mass.
    pub main_cell: usize,
    pub centroid_km: (f64, f64),
    pub orientation_rad: f64,
    pub speed_km_h: f64,
}

impl SynthTruth {
    pub fn hour(&self, frame: usize) -> f64 {
        frame as f64 * self.timestep_hours
    }

    /// Dynamics of the heaviest living cell at `frame`, or `None` when no
    /// cell carries rain.
    pub fn frame(&self, frame: usize) -> Option<FrameTruth> {
        let t = self.hour(frame);
        let (idx, cell) = self
            .cells
            .iter()
            .enumerate()
            .filter(|(_, c)| c.mass_at(t) > 0.0)
            .max_by(|a, b| a.1.mass_at(t).total_cmp(&b.1.mass_at(t)).then(b.0.cmp(&a.0)))?;
        Some(FrameTruth {
            main_cell: idx,
            centroid_km: cell.center_at(t),
            orientation_rad: cell.orientation_at(t),
            speed_km_h: cell.speed_km_h(),
        })
    }

    pub fn per_frame(&self) -> Vec<Option<FrameTruth>> {
        (0..self.frames).map(|f| self.frame(f)).collect()
    }
}

fn render(cells: &[CellSpec], geometry: &GridGeometry, t: f64) -> Vec<f64> {
    let (rows, cols, px) = (geometry.rows(), geometry.cols(), geometry.pixel_size_km());
    let mut values = vec![0.0; rows * cols];
    for cell in cells {
        let amp = cell.amplitude(t);
        if amp == 0.0 {
            continue;
        }
        let [[sxx, sxy], [_, syy]] = cell.covariance_at(t);
        let det = sxx * syy - sxy * sxy;
        let (ixx, iyy, ixy) = (syy / det, sxx / det, -sxy / det);
        let (cx, cy) = cell.center_at(t);
        // Bounding box of the 4-sigma ellipse.
        let (hx, hy) = (4.0 * sxx.sqrt(), 4.0 * syy.sqrt());
        let c0 = ((cx - hx) / px).ceil().max(0.0) as usize;
        let c1 = ((cx + hx) / px).floor().min(cols as f64 - 1.0);
        let r0 = ((cy - hy) / px).ceil().max(0.0) as usize;
        let r1 = ((cy + hy) / px).floor().min(rows as f64 - 1.0);
        if c1 < 0.0 || r1 < 0.0 {
            continue;
        }
        for r in r0..=r1 as usize {
            let dy = r as f64 * px - cy;
            for c in c0..=c1 as usize {
                let dx = c as f64 * px - cx;
                let q = ixx * dx * dx + 2.0 * ixy * dx * dy + iyy * dy * dy;
                values[r * cols + c] += amp * (-0.5 * q).exp();
            }
        }
    }
    values
}

/// Generates an HR event. Identical `(config, seed)` always yields identical
/// output.
pub fn generate_event(config: &EventConfig, seed: u64) -> Result<(PrecipSequence, SynthTruth), SynthError> {
    config.validate()?;
    let mut cells = match config.template {
        Some(t) => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(0);
            template_cells(t, &config.geometry, config.frames, &mut rng)
        }
        None => Vec::new(),
    };
    cells.extend_from_slice(&config.cells);
    if config.amplitude_jitter > 0.0 {
        for (i, cell) in cells.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let j = config.amplitude_jitter;
            cell.peak_rate *= 1.0 + rng.random_range(-j..=j);
        }
    }
    let geometry = config.geometry;
    let buffers: Vec<Vec<f64>> = (0..config.frames)
        .into_par_iter()
        .map(|f| render(&cells, &geometry, f as f64 * geometry.timestep_hours()))
        .collect();
    let hr = PrecipSequence::from_buffers(geometry, buffers, 0)?;
    let truth = SynthTruth {
        cells,
        frames: config.frames,
        timestep_hours: geometry.timestep_hours(),
    };
    Ok((hr, truth))
}

/// Parametric LR sensor model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorConfig {
    pub blur_sigma_km: f64,
    /// Multiplicative bias.
    pub gain: f64,
    /// Additive Gaussian noise on LR pixels, mm/hour.
    pub noise_sigma: f64,
    /// The LR field is the HR field moved by this offset, km.
    pub misalign_shift_km: (f64, f64),
    /// LR frame `t` samples the HR field at `t + offset`.
    pub misalign_time_hours: f64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl SensorConfig {
    pub const IDENTITY: SensorConfig = SensorConfig {
        blur_sigma_km: 0.0,
        gain: 1.0,
        noise_sigma: 0.0,
        misalign_shift_km: (0.0, 0.0),
        misalign_time_hours: 0.0,
    };

    pub fn validate(&self) -> Result<(), SynthError> {
        let all = [
            self.blur_sigma_km,
            self.gain,
            self.noise_sigma,
            self.misalign_shift_km.0,
            self.misalign_shift_km.1,
            self.misalign_time_hours,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return invalid("sensor parameters must be finite");
        }
        if self.gain <= 0.0 {
            return invalid(format!("gain must be positive, got {}", self.gain));
        }
        if self.blur_sigma_km < 0.0 || self.noise_sigma < 0.0 {
            return invalid("blur and noise sigmas must be non-negative");
        }
        Ok(())
    }
}

/// Linear interpolation between neighbouring frames, clamped at both ends.
fn sample_in_time(hr: &PrecipSequence, position: f64) -> Vec<f64> {
    let last = hr.len() - 1;
    let p = position.clamp(0.0, last as f64);
    let i0 = p.floor() as usize;
    let w = p - i0 as f64;
    let a = hr.frames()[i0].values();
    if w == 0.0 || i0 == last {
        return a.to_vec();
    }
    let b = hr.frames()[i0 + 1].values();
    a.iter().zip(b).map(|(x, y)| (1.0 - w) * x + w * y).collect()
}

/// Moves the field by `(dx, dy)` pixels with bilinear sampling; rain from
/// outside the grid is zero.
fn shift(values: &[f64], rows: usize, cols: usize, dx: f64, dy: f64) -> Vec<f64> {
    let at = |r: i64, c: i64| -> f64 {
        if r < 0 || c < 0 || r >= rows as i64 || c >= cols as i64 {
            0.0
        } else {
            values[r as usize * cols + c as usize]
        }
    };
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        let sy = r as f64 - dy;
        let (y0, wy) = (sy.floor(), sy - sy.floor());
        for c in 0..cols {
            let sx = c as f64 - dx;
            let (x0, wx) = (sx.floor(), sx - sx.floor());
            let (y0, x0) = (y0 as i64, x0 as i64);
            out[r * cols + c] = (1.0 - wy) * ((1.0 - wx) * at(y0, x0) + wx * at(y0, x0 + 1))
                + wy * ((1.0 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1));
        }
    }
    out
}

/// Separable Gaussian blur with edge-clamped padding.
fn blur(values: &[f64], rows: usize, cols: usize, sigma_px: f64) -> Vec<f64> {
    let radius = (3.0 * sigma_px).ceil() as i64;
    let mut kernel: Vec<f64> = (-radius..=radius).map(|i| (-0.5 * (i as f64 / sigma_px).powi(2)).exp()).collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);
    let clamp = |i: i64, n: usize| i.clamp(0, n as i64 - 1) as usize;

    let mut tmp = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            tmp[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * values[r * cols + clamp(c as i64 + k as i64 - radius, cols)])
                .sum();
        }
    }
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[r * cols + c] = kernel
                .iter()
                .enumerate()
                .map(|(k, w)| w * tmp[clamp(r as i64 + k as i64 - radius, rows) * cols + c])
                .sum();
        }
    }
    out
}

/// Produces the LR sequence seen by a sensor.
///
/// Steps, each skipped when its parameter is neutral: time resampling,
/// spatial shift, Gaussian blur, gain, block mean by `factor`, additive
/// noise, clamp at zero. With [`SensorConfig::IDENTITY`] the result equals
/// [`block_mean_downsample`] bit for bit.
pub fn degrade(hr: &PrecipSequence, sensor: &SensorConfig, factor: usize, seed: u64) -> Result<PrecipSequence, SynthError> {
    sensor.validate()?;
    let geometry = *hr.geometry();
    let lr_geometry = geometry.coarsened(factor)?;
    let (rows, cols, px) = (geometry.rows(), geometry.cols(), geometry.pixel_size_km());
    let time_offset = sensor.misalign_time_hours / geometry.timestep_hours();

    let frames: Result<Vec<PrecipFrame>, SynthError> = hr
        .frames()
        .par_iter()
        .enumerate()
        .map(|(i, frame)| {
            let mut values: Option<Vec<f64>> = None;
            if time_offset != 0.0 {
                values = Some(sample_in_time(hr, i as f64 + time_offset));
            }
            let (dx, dy) = sensor.misalign_shift_km;
            if dx != 0.0 || dy != 0.0 {
                let src = values.as_deref().unwrap_or(frame.values());
                values = Some(shift(src, rows, cols, dx / px, dy / px));
            }
            if sensor.blur_sigma_km > 0.0 {
                let src = values.as_deref().unwrap_or(frame.values());
                values = Some(blur(src, rows, cols, sensor.blur_sigma_km / px));
            }
            if sensor.gain != 1.0 {
                let mut v = values.unwrap_or_else(|| frame.values().to_vec());
                v.iter_mut().for_each(|x| *x *= sensor.gain);
                values = Some(v);
            }
            let staged = match values {
                Some(v) => PrecipFrame::new(geometry, v.into_iter().map(|x| x.max(0.0)).collect(), frame.timestamp())?,
                None => frame.clone(),
            };
            let lr = block_mean_downsample(&staged, factor)?;
            if sensor.noise_sigma == 0.0 {
                return Ok(lr);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let normal = Normal::new(0.0, sensor.noise_sigma)
                .map_err(|e| SynthError::InvalidConfig(format!("noise: {e}")))?;
            let noisy = lr.values().iter().map(|v| (v + normal.sample(&mut rng)).max(0.0)).collect();
            Ok(PrecipFrame::new(lr_geometry, noisy, lr.timestamp())?)
        })
        .collect();
    Ok(PrecipSequence::new(frames?)?)
}

/// Layout of a synthetic multi-year dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub first_year: i32,
    pub years: usize,
    pub months: Vec<u32>,
    /// Template for every month; odd months switch to the squall line.
    pub event: EventConfig,
    pub sensor: SensorConfig,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        Self {
            first_year: 2001,
            years: 3,
            months: vec![6, 7, 8],
            event: EventConfig {
                geometry: GridGeometry::new(48, 48, 4.0).expect("valid geometry"),
                frames: 8,
                ..EventConfig::default()
            },
            sensor: SensorConfig::IDENTITY,
        }
    }
}

/// Writes one `YYYY-MM.rnb` HR/LR pair per month into `dir` and returns
/// the paths in chronological order. Values are stored at f32 precision.
pub fn write_corpus(dir: &std::path::Path, spec: &CorpusSpec, seed: u64) -> Result<Vec<std::path::PathBuf>, SynthError> {
    if spec.years == 0 || spec.months.is_empty() {
        return invalid("corpus needs at least one year and one month");
    }
    if let Some(m) = spec.months.iter().find(|m| !(1..=12).contains(*m)) {
        return invalid(format!("month {m} out of range"));
    }
    spec.sensor.validate()?;
    std::fs::create_dir_all(dir).map_err(|e| crate::io::IoError::io(dir, e))?;
    let mut paths = Vec::new();
    for year in spec.first_year..spec.first_year + spec.years as i32 {
        for &month in &spec.months {
            let mut event = spec.event.clone();
            if event.template.is_some() && month % 2 == 1 {
                event.template = Some(EventTemplate::SquallLike);
            }
            let month_seed = seed ^ ((year as u64) * 100 + month as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
            let (hr, _) = generate_event(&event, month_seed)?;
            let hr = hr.to_storage_precision();
            let lr = degrade(&hr, &spec.sensor, event.factor, month_seed)?.to_storage_precision();
            let path = dir.join(format!("{year}-{month:02}.rnb"));
            crate::io::write_pair(&path, &hr, &lr)?;
            paths.push(path);
        }
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{main_cluster, ClusterConfig};
    use crate::grid::downsample_sequence;

    fn static_cell(center: (f64, f64)) -> CellSpec {
        CellSpec {
            birth_hour: 0.0,
            death_hour: 100.0,
            peak_rate: 20.0,
            ramp_hours: 0.0,
            center_km: center,
            velocity_km_h: (0.0, 0.0),
            sigma_major_km: 12.0,
            sigma_minor_km: 12.0,
            orientation_rad: 0.0,
            rotation_rate: 0.0,
        }
    }

    fn explicit(cells: Vec<CellSpec>, frames: usize) -> EventConfig {
        EventConfig {
            template: None,
            cells,
            frames,
            ..EventConfig::default()
        }
    }

    #[test]
    fn amplitude_curve() {
        let cell = CellSpec {
            birth_hour: 0.0,
            death_hour: 10.0,
            ramp_hours: 2.0,
            ..static_cell((0.0, 0.0))
        };
        assert_eq!(cell.amplitude(-1.0), 0.0);
        assert_eq!(cell.amplitude(1.0), 10.0);
        assert_eq!(cell.amplitude(5.0), 20.0);
        assert_eq!(cell.amplitude(9.5), 5.0);
        assert_eq!(cell.amplitude(11.0), 0.0);
    }

    #[test]
    fn covariance_is_positive_definite_and_aligned() {
        let cell = CellSpec {
            sigma_major_km: 20.0,
            sigma_minor_km: 5.0,
            orientation_rad: 0.7,
            ..static_cell((0.0, 0.0))
        };
        let [[a, b], [_, d]] = cell.covariance_at(0.0);
        assert!(a > 0.0 && a * d - b * b > 0.0);
        let (theta, _) = crate::cluster::principal_orientation(a, d, b);
        assert!((theta - 0.7).abs() < 1e-12);
    }

    #[test]
    fn static_isotropic_centroid() {
        let (hr, truth) = generate_event(&explicit(vec![static_cell((190.0, 170.0))], 3), 1).unwrap();
        let stats = main_cluster(&hr.frames()[1], &ClusterConfig::default()).unwrap();
        let expected = truth.frame(1).unwrap().centroid_km;
        assert!((stats.centroid_km.0 - expected.0).abs() < 2.0);
        assert!((stats.centroid_km.1 - expected.1).abs() < 2.0);
    }

    #[test]
    fn determinism_and_seed_sensitivity() {
        let cfg = EventConfig {
            amplitude_jitter: 0.2,
            ..EventConfig::with_template(EventTemplate::SquallLike)
        };
        let (a, ta) = generate_event(&cfg, 42).unwrap();
        let (b, tb) = generate_event(&cfg, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate_event(&cfg, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn advected_cell_speed() {
        let cell = CellSpec {
            velocity_km_h: (8.0, 0.0),
            ..static_cell((100.0, 190.0))
        };
        let (hr, _) = generate_event(&explicit(vec![cell], 12), 0).unwrap();
        let cfg = ClusterConfig::default();
        let cents: Vec<_> = hr.iter().map(|f| main_cluster(f, &cfg).unwrap().centroid_km).collect();
        for w in cents.windows(2) {
            let speed = (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1);
            assert!((speed - 8.0).abs() < 0.4, "{speed}");
        }
    }

    #[test]
    fn template_dynamics_are_recovered() {
        let cfg = ClusterConfig::default();
        for template in [EventTemplate::HurricaneLike, EventTemplate::SquallLike] {
            for seed in 0..6 {
                let (hr, truth) = generate_event(&EventConfig::with_template(template), seed).unwrap();
                let stats: Vec<_> = hr.iter().map(|f| main_cluster(f, &cfg)).collect();
                let mut speeds = Vec::new();
                for (i, s) in stats.iter().enumerate() {
                    let (Some(s), Some(t)) = (s, truth.frame(i)) else { continue };
                    let err = crate::cluster::axis_difference(s.orientation_rad, t.orientation_rad);
                    assert!(err < 0.05, "{template:?} seed {seed} frame {i}: {err}");
                    if let Some(Some(prev)) = i.checked_sub(1).map(|j| &stats[j]) {
                        speeds.push((s.centroid_km.0 - prev.centroid_km.0).hypot(s.centroid_km.1 - prev.centroid_km.1));
                    }
                }
                let mean = speeds.iter().sum::<f64>() / speeds.len() as f64;
                let expected = truth.frame(10).unwrap().speed_km_h;
                assert!((mean - expected).abs() < 0.05 * expected, "{template:?} seed {seed}: {mean} vs {expected}");
            }
        }
    }

    #[test]
    fn amplitude_linearity() {
        let cells = vec![
            static_cell((100.0, 100.0)),
            CellSpec {
                sigma_major_km: 30.0,
                orientation_rad: 1.0,
                ..static_cell((250.0, 200.0))
            },
        ];
        let doubled: Vec<CellSpec> = cells
            .iter()
            .map(|c| CellSpec {
                peak_rate: 2.0 * c.peak_rate,
                ..*c
            })
            .collect();
        let (a, _) = generate_event(&explicit(cells, 2), 0).unwrap();
        let (b, _) = generate_event(&explicit(doubled, 2), 0).unwrap();
        for (fa, fb) in a.iter().zip(&b) {
            for (x, y) in fa.values().iter().zip(fb.values()) {
                assert_eq!(2.0 * x, *y);
            }
        }
    }

    #[test]
    fn invalid_configs() {
        assert!(generate_event(&explicit(vec![static_cell((0.0, 0.0))], 1), 0).is_err());
        assert!(generate_event(&explicit(vec![], 4), 0).is_err());
        let bad = CellSpec {
            birth_hour: 5.0,
            death_hour: 5.0,
            ..static_cell((0.0, 0.0))
        };
        assert!(matches!(generate_event(&explicit(vec![bad], 4), 0), Err(SynthError::InvalidConfig(_))));
        let cfg: Result<EventConfig, _> = serde_json::from_str(r#"{"frames": 4, "bogus": 1}"#);
        assert!(cfg.is_err());
    }

    #[test]
    fn config_from_json() {
        let cfg: EventConfig = serde_json::from_str(
            r#"{"geometry": {"rows": 30, "cols": 30, "pixel_size_km": 4.0}, "frames": 6, "template": "squall-like"}"#,
        )
        .unwrap();
        assert_eq!(cfg.template, Some(EventTemplate::SquallLike));
        assert_eq!(cfg.factor, 3);
        let (hr, _) = generate_event(&cfg, 5).unwrap();
        assert_eq!(hr.len(), 6);
    }

    #[test]
    fn identity_sensor_is_block_mean() {
        let (hr, _) = generate_event(&EventConfig::default(), 9).unwrap();
        let lr = degrade(&hr, &SensorConfig::IDENTITY, 3, 0).unwrap();
        assert_eq!(lr, downsample_sequence(&hr, 3).unwrap());
    }

    #[test]
    fn gain_is_linear() {
        let (hr, _) = generate_event(&EventConfig::default(), 2).unwrap();
        let base = downsample_sequence(&hr, 3).unwrap();
        let sensor = SensorConfig {
            gain: 1.2,
            ..SensorConfig::IDENTITY
        };
        let lr = degrade(&hr, &sensor, 3, 0).unwrap();
        for (a, b) in lr.iter().zip(&base) {
            assert!((a.mean() - 1.2 * b.mean()).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_moves_centroid() {
        let (hr, _) = generate_event(&explicit(vec![static_cell((190.0, 190.0))], 2), 0).unwrap();
        let sensor = SensorConfig {
            misalign_shift_km: (12.0, 0.0),
            ..SensorConfig::IDENTITY
        };
        let cfg = ClusterConfig::default();
        let base = main_cluster(&downsample_sequence(&hr, 3).unwrap().frames()[0], &cfg).unwrap();
        let moved = main_cluster(&degrade(&hr, &sensor, 3, 0).unwrap().frames()[0], &cfg).unwrap();
        assert!((moved.centroid_km.0 - base.centroid_km.0 - 12.0).abs() < 1.0);
        assert!((moved.centroid_km.1 - base.centroid_km.1).abs() < 1.0);
    }

    #[test]
    fn noise_blur_and_time_offset() {
        let (hr, _) = generate_event(&EventConfig::default(), 4).unwrap();
        let sensor = SensorConfig {
            blur_sigma_km: 6.0,
            noise_sigma: 0.5,
            misalign_time_hours: 0.5,
            ..SensorConfig::IDENTITY
        };
        let a = degrade(&hr, &sensor, 3, 11).unwrap();
        assert_eq!(a, degrade(&hr, &sensor, 3, 11).unwrap());
        assert_ne!(a, degrade(&hr, &sensor, 3, 12).unwrap());
        assert!(a.iter().all(|f| f.values().iter().all(|v| *v >= 0.0)));
        // Blur conserves mass away from the edges.
        let blurred = degrade(
            &hr,
            &SensorConfig {
                blur_sigma_km: 6.0,
                ..SensorConfig::IDENTITY
            },
            3,
            0,
        )
        .unwrap();
        let base = downsample_sequence(&hr, 3).unwrap();
        let rel = (blurred.frames()[20].sum() - base.frames()[20].sum()).abs() / base.frames()[20].sum();
        assert!(rel < 1e-3, "{rel}");
        assert!(degrade(&hr, &SensorConfig { gain: 0.0, ..SensorConfig::IDENTITY }, 3, 0).is_err());
        assert!(matches!(degrade(&hr, &SensorConfig::IDENTITY, 5, 0), Err(SynthError::Grid(GridError::NotDivisible { .. }))));
    }

    #[test]
    fn corpus_layout_and_determinism() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let spec = CorpusSpec {
            years: 2,
            months: vec![7, 8],
            ..CorpusSpec::default()
        };
        let pa = write_corpus(a.path(), &spec, 5).unwrap();
        let pb = write_corpus(b.path(), &spec, 5).unwrap();
        let names: Vec<_> = pa.iter().map(|p| p.file_name().unwrap().to_str().unwrap().to_owned()).collect();
        assert_eq!(names, ["2001-07.rnb", "2001-08.rnb", "2002-07.rnb", "2002-08.rnb"]);
        for (x, y) in pa.iter().zip(&pb) {
            assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
        }
        let bad = CorpusSpec {
            months: vec![13],
            ..CorpusSpec::default()
        };
        assert!(matches!(write_corpus(a.path(), &bad, 0), Err(SynthError::InvalidConfig(_))));
    }
}
