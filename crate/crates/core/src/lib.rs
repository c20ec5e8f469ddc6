//! Evaluation toolkit for precipitation downscaling.
//!
//! Scores predicted high-resolution rain-rate sequences against
//! observations, runs classical baselines, generates synthetic storms with
//! known dynamics, and cross-validates methods over monthly datasets.
//! See the guide in `book/` for a walkthrough.
//!
//! ```
//! use rainbench::baselines::{downscale_sequence, Baseline};
//! use rainbench::metrics::{evaluate, MetricConfig};
//! use rainbench::synth::{degrade, generate_event, EventConfig, SensorConfig};
//!
//! let (hr, _) = generate_event(&EventConfig { frames: 6, ..EventConfig::default() }, 0).unwrap();
//! let lr = degrade(&hr, &SensorConfig::IDENTITY, 3, 0).unwrap();
//! let (pred, _) = downscale_sequence(&lr, 3, &Baseline::default()).unwrap();
//! let report = evaluate(&pred, &hr, &MetricConfig::default()).unwrap();
//! assert!(report.pem >= 0.0 && report.rmse > 0.0);
//! ```

pub mod baselines;
pub mod cli;
pub mod cluster;
pub mod grid;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod numeric;
pub mod synth;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/grids.md")]
    mod grids {}
    #[doc = include_str!("../../../book/src/clusters.md")]
    mod clusters {}
    #[doc = include_str!("../../../book/src/metrics.md")]
    mod metrics {}
    #[doc = include_str!("../../../book/src/baselines.md")]
    mod baselines {}
    #[doc = include_str!("../../../book/src/synthetic.md")]
    mod synthetic {}
    #[doc = include_str!("../../../book/src/containers.md")]
    mod containers {}
    #[doc = include_str!("../../../book/src/harness.md")]
    mod harness {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}
