//! Classical LR to HR downscalers.

pub mod interp;
pub mod kriging;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, PrecipFrame, PrecipSequence};

pub use interp::{upsample_bicubic, upsample_bicubic_with, upsample_bilinear, upsample_nearest, DEFAULT_KEYS_A};
pub use kriging::{
    empirical_semivariogram, fit_variogram_model, kriging_downscale, FitStatus, KrigingConfig, KrigingOutput,
    Semivariogram, VariogramFit, VariogramKind, VariogramModel,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("upsampling factor must be at least 1, got {0}")]
    InvalidFactor(usize),
    #[error("input of {rows}x{cols} is too small (need at least 2x2)")]
    TooSmall { rows: usize, cols: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("need at least 2 wet pixels for a semivariogram, found {wet_pixels}")]
    NotEnoughData { wet_pixels: usize },
    #[error("need at least 3 non-empty lag bins, found {0}")]
    TooFewBins(usize),
    #[error(transparent)]
    Grid(#[from] GridError),
}

/// A downscaling method and its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Baseline {
    Nearest,
    Bilinear,
    Bicubic {
        #[serde(default = "default_keys_a")]
        a: f64,
    },
    Kriging(KrigingConfig),
}

fn default_keys_a() -> f64 {
    DEFAULT_KEYS_A
}

impl Default for Baseline {
    fn default() -> Self {
        Baseline::Bicubic { a: DEFAULT_KEYS_A }
    }
}

impl Baseline {
    /// Builds a baseline from its method name with default parameters.
    pub fn from_name(name: &str) -> Result<Self, BaselineError> {
        match name {
            "nearest" => Ok(Baseline::Nearest),
            "bilinear" => Ok(Baseline::Bilinear),
            "bicubic" => Ok(Baseline::default()),
            "kriging" => Ok(Baseline::Kriging(KrigingConfig::default())),
            other => Err(BaselineError::InvalidParameter(format!("unknown method {other:?}"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Baseline::Nearest => "nearest",
            Baseline::Bilinear => "bilinear",
            Baseline::Bicubic { .. } => "bicubic",
            Baseline::Kriging(_) => "kriging",
        }
    }
}

/// Diagnostics accumulated over a downscaled sequence. Only kriging reports
/// anything non-zero.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DownscaleReport {
    pub singular_fallbacks: usize,
    pub degenerate_fits: usize,
    pub max_weight_sum_error: f64,
}

pub fn downscale(lr: &PrecipFrame, factor: usize, baseline: &Baseline) -> Result<PrecipFrame, BaselineError> {
    downscale_with_report(lr, factor, baseline).map(|(f, _)| f)
}

fn downscale_with_report(
    lr: &PrecipFrame,
    factor: usize,
    baseline: &Baseline,
) -> Result<(PrecipFrame, DownscaleReport), BaselineError> {
    match baseline {
        Baseline::Nearest => Ok((upsample_nearest(lr, factor)?, DownscaleReport::default())),
        Baseline::Bilinear => Ok((upsample_bilinear(lr, factor)?, DownscaleReport::default())),
        Baseline::Bicubic { a } => Ok((upsample_bicubic_with(lr, factor, *a)?, DownscaleReport::default())),
        Baseline::Kriging(cfg) => {
            // Frame-specific stream so subsampled variograms differ per frame.
            let cfg = KrigingConfig {
                seed: cfg.seed ^ (lr.timestamp() as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15),
                ..*cfg
            };
            let out = kriging_downscale(lr, factor, &cfg)?;
            let report = DownscaleReport {
                singular_fallbacks: out.fallbacks,
                degenerate_fits: usize::from(out.fit.status == FitStatus::Degenerate),
                max_weight_sum_error: out.max_weight_sum_error,
            };
            Ok((out.frame, report))
        }
    }
}

/// Downscales every frame of a sequence. Frames are processed in order;
/// kriging parallelizes within each frame.
pub fn downscale_sequence(
    lr: &PrecipSequence,
    factor: usize,
    baseline: &Baseline,
) -> Result<(PrecipSequence, DownscaleReport), BaselineError> {
    let mut report = DownscaleReport::default();
    let mut frames = Vec::with_capacity(lr.len());
    for frame in lr {
        let (hr, r) = downscale_with_report(frame, factor, baseline)?;
        report.singular_fallbacks += r.singular_fallbacks;
        report.degenerate_fits += r.degenerate_fits;
        report.max_weight_sum_error = report.max_weight_sum_error.max(r.max_weight_sum_error);
        frames.push(hr);
    }
    Ok((PrecipSequence::new(frames)?, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridGeometry;

    #[test]
    fn names_round_trip() {
        for name in ["nearest", "bilinear", "bicubic", "kriging"] {
            assert_eq!(Baseline::from_name(name).unwrap().name(), name);
        }
        assert!(Baseline::from_name("lanczos").is_err());
    }

    #[test]
    fn config_parsing() {
        let b: Baseline = serde_json::from_str(r#"{"method":"bicubic"}"#).unwrap();
        assert_eq!(b, Baseline::Bicubic { a: -0.5 });
        let b: Baseline = serde_json::from_str(r#"{"method":"kriging","neighborhood_k":8,"kind":"gaussian"}"#).unwrap();
        match b {
            Baseline::Kriging(cfg) => {
                assert_eq!(cfg.neighborhood_k, 8);
                assert_eq!(cfg.kind, VariogramKind::Gaussian);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn sequence_downscale_keeps_timestamps() {
        let g = GridGeometry::new(3, 3, 12.0).unwrap();
        let seq = PrecipSequence::from_buffers(g, vec![vec![1.0; 9], vec![2.0; 9]], 5).unwrap();
        for b in ["nearest", "bilinear", "bicubic", "kriging"] {
            let (hr, report) = downscale_sequence(&seq, 3, &Baseline::from_name(b).unwrap()).unwrap();
            assert_eq!(hr.timestamps().collect::<Vec<_>>(), vec![5, 6]);
            assert_eq!(hr.geometry().rows(), 9);
            assert_eq!(report.singular_fallbacks, 0);
        }
    }
}
