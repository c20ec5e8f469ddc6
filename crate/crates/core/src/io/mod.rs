//! Reading and writing precipitation sequence pairs.
//!
//! Two containers are supported: monthly HDF5 files holding `hr` and `lr`
//! datasets (behind the `hdf5` feature) and `rnb`, a small portable binary
//! format used for fixtures and for exchanging data with external models.

#[cfg(feature = "hdf5")]
pub mod hdf5;
pub mod index;
pub mod rnb;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{GridError, GridGeometry, PrecipFrame, PrecipSequence};

pub use index::{build_index, DatasetIndex, IndexEntry};
pub use rnb::{read_rnb, write_rnb};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("i/o failure on {path}: {source}")]
    IoFailure {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("corrupt file {path}: {reason}")]
    CorruptFile { path: PathBuf, reason: String },
    #[error("layout mismatch in {path}: {reason}")]
    LayoutMismatch { path: PathBuf, reason: String },
    #[error("negative value {value} at flat index {index} of {dataset} in {path}")]
    NegativeValue {
        path: PathBuf,
        dataset: String,
        index: usize,
        value: f32,
    },
    #[error("nothing to write: {0}")]
    TooShort(String),
    #[error("duplicate month {year}-{month:02}: {first} and {second}")]
    DuplicateMonth {
        year: i32,
        month: u32,
        first: PathBuf,
        second: PathBuf,
    },
    #[error("cannot parse a YYYY-MM name from {0}")]
    UnparseableName(PathBuf),
    #[error("unsupported container {path}: {reason}")]
    Unsupported { path: PathBuf, reason: String },
    #[error(transparent)]
    Grid(#[from] GridError),
}

impl IoError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        IoError::IoFailure {
            path: path.to_path_buf(),
            source,
        }
    }

    pub(crate) fn corrupt(path: &Path, reason: impl Into<String>) -> Self {
        IoError::CorruptFile {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub(crate) fn layout(path: &Path, reason: impl Into<String>) -> Self {
        IoError::LayoutMismatch {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerFormat {
    Hdf5,
    Rnb,
}

impl ContainerFormat {
    /// Guesses the format from the file extension (`.h5`, `.hdf5`, `.rnb`).
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "h5" | "hdf5" => Some(ContainerFormat::Hdf5),
            "rnb" => Some(ContainerFormat::Rnb),
            _ => None,
        }
    }
}

/// How raw stored values become rain rates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadOptions {
    /// Stored value marking missing data; read as 0 mm/hour. Any other
    /// negative value is an error.
    pub missing_sentinel: Option<f32>,
    pub hdf5_hr_name: String,
    pub hdf5_lr_name: String,
    pub hr_geometry: GridGeometry,
    pub lr_geometry: GridGeometry,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self {
            missing_sentinel: None,
            hdf5_hr_name: "hr".to_string(),
            hdf5_lr_name: "lr".to_string(),
            hr_geometry: GridGeometry::FULL_HR,
            lr_geometry: GridGeometry::FULL_LR,
        }
    }
}

/// Converts stored `f32` frames to a sequence with hourly timestamps from 0.
pub(crate) fn sequence_from_raw(
    path: &Path,
    dataset: &str,
    geometry: GridGeometry,
    raw: &[f32],
    frames: usize,
    sentinel: Option<f32>,
) -> Result<PrecipSequence, IoError> {
    let n = geometry.len();
    if raw.len() != n * frames || frames == 0 {
        return Err(IoError::corrupt(path, format!("{dataset}: expected {frames} frames of {n} values")));
    }
    let mut out = Vec::with_capacity(frames);
    for (t, chunk) in raw.chunks_exact(n).enumerate() {
        let mut values = Vec::with_capacity(n);
        for (i, &v) in chunk.iter().enumerate() {
            if sentinel.is_some_and(|s| v == s || (s.is_nan() && v.is_nan())) {
                values.push(0.0);
            } else if v.is_nan() || v.is_infinite() {
                return Err(IoError::corrupt(path, format!("{dataset}: non-finite value at {}", t * n + i)));
            } else if v < 0.0 {
                return Err(IoError::NegativeValue {
                    path: path.to_path_buf(),
                    dataset: dataset.to_string(),
                    index: t * n + i,
                    value: v,
                });
            } else {
                values.push(v as f64);
            }
        }
        out.push(PrecipFrame::new(geometry, values, t as i64)?);
    }
    Ok(PrecipSequence::new(out)?)
}

/// Reads an aligned HR/LR pair from either container.
pub fn read_pair(
    path: &Path,
    format: ContainerFormat,
    options: &ReadOptions,
) -> Result<(PrecipSequence, PrecipSequence), IoError> {
    match format {
        ContainerFormat::Rnb => {
            let mut seqs = rnb::read_rnb(path, options.missing_sentinel)?;
            if seqs.len() != 2 {
                return Err(IoError::layout(path, format!("expected an HR/LR pair, found {} sequences", seqs.len())));
            }
            let lr = seqs.pop().expect("two sequences");
            let hr = seqs.pop().expect("two sequences");
            if hr.len() != lr.len() {
                return Err(IoError::layout(path, format!("HR has {} frames, LR has {}", hr.len(), lr.len())));
            }
            Ok((hr, lr))
        }
        #[cfg(feature = "hdf5")]
        ContainerFormat::Hdf5 => hdf5::read_hdf5_pair(path, options),
        #[cfg(not(feature = "hdf5"))]
        ContainerFormat::Hdf5 => Err(IoError::Unsupported {
            path: path.to_path_buf(),
            reason: "built without the hdf5 feature".to_string(),
        }),
    }
}

/// Writes an aligned HR/LR pair as an `rnb` container.
pub fn write_pair(path: &Path, hr: &PrecipSequence, lr: &PrecipSequence) -> Result<(), IoError> {
    if hr.len() != lr.len() {
        return Err(IoError::layout(path, format!("HR has {} frames, LR has {}", hr.len(), lr.len())));
    }
    rnb::write_rnb(path, &[hr.frames(), lr.frames()])
}

/// Reads a single-sequence `rnb` container.
pub fn read_sequence(path: &Path, sentinel: Option<f32>) -> Result<PrecipSequence, IoError> {
    let mut seqs = rnb::read_rnb(path, sentinel)?;
    if seqs.len() != 1 {
        return Err(IoError::layout(path, format!("expected one sequence, found {}", seqs.len())));
    }
    Ok(seqs.pop().expect("one sequence"))
}

pub fn write_sequence(path: &Path, seq: &PrecipSequence) -> Result<(), IoError> {
    rnb::write_rnb(path, &[seq.frames()])
}
