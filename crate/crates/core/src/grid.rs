//! Gridded precipitation data model: geometry, hourly frames and sequences.
//!
//! Rain rates are held in memory as `f64` (mm/hour). Containers store them
//! as `f32`; [`PrecipFrame::to_storage_precision`] rounds a frame the same way
//! a write/read cycle would.
//!
//! Pixel `(row, col)` sits at ground position `x = col * pixel_size_km`,
//! `y = row * pixel_size_km` on a flat grid. Every distance in the crate uses
//! this convention.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::CompensatedSum;

/// Drizzle floor used by [`frame_stats`] when no threshold is configured.
pub const DEFAULT_WET_THRESHOLD: f64 = 0.1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("value buffer has {actual} entries, geometry needs {expected}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("invalid rain rate {value} at index {index} (must be finite and >= 0)")]
    InvalidValue { index: usize, value: f64 },
    #[error("{rows}x{cols} grid is not divisible by factor {factor}")]
    NotDivisible {
        rows: usize,
        cols: usize,
        factor: usize,
    },
    #[error("sequence has no frames")]
    EmptySequence,
    #[error("frame {index} has a different geometry from frame 0")]
    MixedGeometry { index: usize },
    #[error("frame {index} timestamp {timestamp} breaks the uniform {step}-hour spacing")]
    NonUniformTimestamps {
        index: usize,
        timestamp: i64,
        step: f64,
    },
}

/// Shape and spacing of a rain-rate grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct GridGeometry {
    rows: usize,
    cols: usize,
    pixel_size_km: f64,
    timestep_hours: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    rows: usize,
    cols: usize,
    pixel_size_km: f64,
    #[serde(default = "default_timestep")]
    timestep_hours: f64,
}

fn default_timestep() -> f64 {
    1.0
}

impl TryFrom<RawGeometry> for GridGeometry {
    type Error = GridError;

    fn try_from(raw: RawGeometry) -> Result<Self, Self::Error> {
        GridGeometry::with_timestep(raw.rows, raw.cols, raw.pixel_size_km, raw.timestep_hours)
    }
}

impl From<GridGeometry> for RawGeometry {
    fn from(g: GridGeometry) -> Self {
        RawGeometry {
            rows: g.rows,
            cols: g.cols,
            pixel_size_km: g.pixel_size_km,
            timestep_hours: g.timestep_hours,
        }
    }
}

impl GridGeometry {
    /// Full-size high-resolution grid (~4 km pixels).
    pub const FULL_HR: GridGeometry = GridGeometry {
        rows: 624,
        cols: 999,
        pixel_size_km: 4.0,
        timestep_hours: 1.0,
    };

    /// Full-size low-resolution grid (~12 km pixels), one third of the HR dims.
    pub const FULL_LR: GridGeometry = GridGeometry {
        rows: 208,
        cols: 333,
        pixel_size_km: 12.0,
        timestep_hours: 1.0,
    };

    /// Hourly geometry.
    pub fn new(rows: usize, cols: usize, pixel_size_km: f64) -> Result<Self, GridError> {
        Self::with_timestep(rows, cols, pixel_size_km, 1.0)
    }

    pub fn with_timestep(
        rows: usize,
        cols: usize,
        pixel_size_km: f64,
        timestep_hours: f64,
    ) -> Result<Self, GridError> {
        if rows == 0 || cols == 0 {
            return Err(GridError::InvalidGeometry(format!(
                "dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if !(pixel_size_km.is_finite() && pixel_size_km > 0.0) {
            return Err(GridError::InvalidGeometry(format!(
                "pixel size must be positive, got {pixel_size_km}"
            )));
        }
        if !(timestep_hours.is_finite() && timestep_hours > 0.0) {
            return Err(GridError::InvalidGeometry(format!(
                "timestep must be positive, got {timestep_hours}"
            )));
        }
        Ok(Self {
            rows,
            cols,
            pixel_size_km,
            timestep_hours,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn pixel_size_km(&self) -> f64 {
        self.pixel_size_km
    }

    pub fn timestep_hours(&self) -> f64 {
        self.timestep_hours
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn pixel_area_km2(&self) -> f64 {
        self.pixel_size_km * self.pixel_size_km
    }

    /// Geometry after `factor`-fold block averaging.
    pub fn coarsened(&self, factor: usize) -> Result<Self, GridError> {
        if factor == 0 || self.rows % factor != 0 || self.cols % factor != 0 {
            return Err(GridError::NotDivisible {
                rows: self.rows,
                cols: self.cols,
                factor,
            });
        }
        Ok(Self {
            rows: self.rows / factor,
            cols: self.cols / factor,
            pixel_size_km: self.pixel_size_km * factor as f64,
            timestep_hours: self.timestep_hours,
        })
    }

    /// Geometry after `factor`-fold refinement.
    pub fn refined(&self, factor: usize) -> Self {
        let factor = factor.max(1);
        Self {
            rows: self.rows * factor,
            cols: self.cols * factor,
            pixel_size_km: self.pixel_size_km / factor as f64,
            timestep_hours: self.timestep_hours,
        }
    }
}

/// One hourly rain-rate grid.
///
/// Cloning is cheap: the value buffer is shared.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecipFrame {
    geometry: GridGeometry,
    values: Arc<[f64]>,
    timestamp: i64,
}

impl PrecipFrame {
    /// Validated constructor: rejects wrong lengths and negative or
    /// non-finite rates.
    pub fn new(geometry: GridGeometry, values: Vec<f64>, timestamp: i64) -> Result<Self, GridError> {
        if values.len() != geometry.len() {
            return Err(GridError::DimensionMismatch {
                expected: geometry.len(),
                actual: values.len(),
            });
        }
        if let Some((index, &value)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !(v.is_finite() && **v >= 0.0))
        {
            return Err(GridError::InvalidValue { index, value });
        }
        Ok(Self {
            geometry,
            values: values.into(),
            timestamp,
        })
    }

    pub fn from_f32(geometry: GridGeometry, values: &[f32], timestamp: i64) -> Result<Self, GridError> {
        Self::new(geometry, values.iter().map(|&v| f64::from(v)).collect(), timestamp)
    }

    /// All-zero frame.
    pub fn zeros(geometry: GridGeometry, timestamp: i64) -> Self {
        Self {
            geometry,
            values: vec![0.0; geometry.len()].into(),
            timestamp,
        }
    }

    /// Builds a frame from values that are known to be finite and
    /// non-negative. Debug builds still check.
    pub(crate) fn from_trusted(geometry: GridGeometry, values: Vec<f64>, timestamp: i64) -> Self {
        debug_assert_eq!(values.len(), geometry.len());
        debug_assert!(values.iter().all(|v| v.is_finite() && *v >= 0.0));
        Self {
            geometry,
            values: values.into(),
            timestamp,
        }
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.geometry
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn timestamp(&self) -> i64 {
        self.timestamp
    }

    pub fn rows(&self) -> usize {
        self.geometry.rows
    }

    pub fn cols(&self) -> usize {
        self.geometry.cols
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.geometry.cols + col]
    }

    /// Same values under a different timestamp; shares the buffer.
    pub fn with_timestamp(&self, timestamp: i64) -> Self {
        Self {
            geometry: self.geometry,
            values: Arc::clone(&self.values),
            timestamp,
        }
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum::<CompensatedSum>().value()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.values.len() as f64
    }

    /// Rounds every value through `f32`, as writing to a container does.
    pub fn to_storage_precision(&self) -> Self {
        let values = self.values.iter().map(|&v| f64::from(v as f32)).collect();
        Self::from_trusted(self.geometry, values, self.timestamp)
    }

    /// Multiplies every value by a non-negative factor.
    pub fn scaled(&self, factor: f64) -> Result<Self, GridError> {
        Self::new(
            self.geometry,
            self.values.iter().map(|v| v * factor).collect(),
            self.timestamp,
        )
    }
}

/// Time-ordered frames sharing one geometry, uniformly spaced in time.
#[derive(Debug, Clone, PartialEq)]
pub struct PrecipSequence {
    frames: Vec<PrecipFrame>,
}

impl PrecipSequence {
    pub fn new(frames: Vec<PrecipFrame>) -> Result<Self, GridError> {
        let first = frames.first().ok_or(GridError::EmptySequence)?;
        let geometry = first.geometry;
        let step = geometry.timestep_hours;
        for (index, pair) in frames.windows(2).enumerate() {
            if pair[1].geometry != geometry {
                return Err(GridError::MixedGeometry { index: index + 1 });
            }
            let gap = (pair[1].timestamp - pair[0].timestamp) as f64;
            if gap != step {
                return Err(GridError::NonUniformTimestamps {
                    index: index + 1,
                    timestamp: pair[1].timestamp,
                    step,
                });
            }
        }
        Ok(Self { frames })
    }

    /// Builds an hourly-or-`timestep` sequence from raw value buffers,
    /// numbering frames from `start`.
    pub fn from_buffers(
        geometry: GridGeometry,
        buffers: Vec<Vec<f64>>,
        start: i64,
    ) -> Result<Self, GridError> {
        let step = geometry.timestep_hours.round() as i64;
        let frames = buffers
            .into_iter()
            .enumerate()
            .map(|(i, values)| PrecipFrame::new(geometry, values, start + i as i64 * step.max(1)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(frames)
    }

    pub fn frames(&self) -> &[PrecipFrame] {
        &self.frames
    }

    pub fn into_frames(self) -> Vec<PrecipFrame> {
        self.frames
    }

    pub fn geometry(&self) -> &GridGeometry {
        &self.frames[0].geometry
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, PrecipFrame> {
        self.frames.iter()
    }

    pub fn timestamps(&self) -> impl Iterator<Item = i64> + '_ {
        self.frames.iter().map(|f| f.timestamp)
    }

    /// Applies a per-frame transformation that keeps timestamps.
    pub fn try_map<E>(
        &self,
        f: impl Fn(&PrecipFrame) -> Result<PrecipFrame, E>,
    ) -> Result<PrecipSequence, E>
    where
        E: From<GridError>,
    {
        let frames = self.frames.iter().map(f).collect::<Result<Vec<_>, E>>()?;
        Ok(PrecipSequence::new(frames)?)
    }

    pub fn to_storage_precision(&self) -> Self {
        Self {
            frames: self.frames.iter().map(|f| f.to_storage_precision()).collect(),
        }
    }
}

impl<'a> IntoIterator for &'a PrecipSequence {
    type Item = &'a PrecipFrame;
    type IntoIter = std::slice::Iter<'a, PrecipFrame>;

    fn into_iter(self) -> Self::IntoIter {
        self.frames.iter()
    }
}

/// Summary statistics of one frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FrameStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Fraction of pixels at or above the wet threshold.
    pub wet_fraction: f64,
}

/// Averages each `factor`x`factor` block into one output pixel.
///
/// The output pixel is `factor` times larger, so total mass (sum times pixel
/// area) is preserved.
pub fn block_mean_downsample(frame: &PrecipFrame, factor: usize) -> Result<PrecipFrame, GridError> {
    let out_geometry = frame.geometry.coarsened(factor)?;
    let cols = frame.geometry.cols;
    let (out_rows, out_cols) = (out_geometry.rows, out_geometry.cols);
    let block = (factor * factor) as f64;
    let src = frame.values();
    let mut out = Vec::with_capacity(out_rows * out_cols);
    for orow in 0..out_rows {
        for ocol in 0..out_cols {
            let mut acc = CompensatedSum::new();
            for r in orow * factor..(orow + 1) * factor {
                let base = r * cols + ocol * factor;
                for v in &src[base..base + factor] {
                    acc.add(*v);
                }
            }
            out.push(acc.value() / block);
        }
    }
    Ok(PrecipFrame::from_trusted(out_geometry, out, frame.timestamp))
}

/// [`block_mean_downsample`] applied frame by frame.
pub fn downsample_sequence(seq: &PrecipSequence, factor: usize) -> Result<PrecipSequence, GridError> {
    seq.try_map(|f| block_mean_downsample(f, factor))
}

pub fn frame_stats(frame: &PrecipFrame, wet_threshold: f64) -> FrameStats {
    let values = frame.values();
    let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut wet = 0usize;
    for &v in values {
        min = min.min(v);
        max = max.max(v);
        if v >= wet_threshold {
            wet += 1;
        }
    }
    FrameStats {
        min,
        max,
        mean: frame.mean().clamp(min, max),
        wet_fraction: wet as f64 / values.len() as f64,
    }
}
