//! File exchange with external models.
//!
//! `export_inputs` writes every LR sequence as `<id>.lr.rnb` plus a
//! `manifest.json` describing folds and expected shapes. An external model
//! answers with one single-sequence `<id>.pred.rnb` per input, holding the
//! HR prediction with the same frame count.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{FoldPlan, HarnessError};
use crate::grid::GridGeometry;
use crate::io::{read_pair, write_sequence, DatasetIndex, IoError, ReadOptions};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

pub fn input_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.lr.rnb"))
}

pub fn prediction_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(format!("{id}.pred.rnb"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestSequence {
    pub id: String,
    pub year: i32,
    pub month: u32,
    pub frames: usize,
    pub lr_geometry: GridGeometry,
    /// Geometry the prediction must have.
    pub hr_geometry: GridGeometry,
    pub input: String,
    pub prediction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestFold {
    pub test_years: Vec<i32>,
    pub train_years: Vec<i32>,
    pub test_sequences: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeManifest {
    pub format_version: u32,
    pub sequences: Vec<ManifestSequence>,
    pub folds: Vec<ManifestFold>,
}

/// Writes LR inputs and the manifest into `dir`, creating it if needed.
pub fn export_inputs(
    index: &DatasetIndex,
    plan: &FoldPlan,
    dir: &Path,
    read: &ReadOptions,
) -> Result<ExchangeManifest, HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| IoError::io(dir, e))?;
    let sequences = index
        .entries
        .par_iter()
        .map(|entry| {
            let id = entry.id();
            let (_, lr) = read_pair(&entry.path, entry.format, read)
                .map_err(|e| HarnessError::from(e).in_sequence(&id))?;
            let input = input_path(dir, &id);
            write_sequence(&input, &lr).map_err(|e| HarnessError::from(e).in_sequence(&id))?;
            Ok(ManifestSequence {
                input: file_name(&input),
                prediction: file_name(&prediction_path(dir, &id)),
                id,
                year: entry.year,
                month: entry.month,
                frames: entry.frame_count,
                lr_geometry: entry.lr_geometry,
                hr_geometry: entry.hr_geometry,
            })
        })
        .collect::<Result<Vec<_>, HarnessError>>()?;
    let folds = plan
        .folds
        .iter()
        .map(|f| ManifestFold {
            test_years: f.test_years.clone(),
            train_years: f.train_years.clone(),
            test_sequences: index
                .entries
                .iter()
                .filter(|e| f.test_years.contains(&e.year))
                .map(|e| e.id())
                .collect(),
        })
        .collect();
    let manifest = ExchangeManifest {
        format_version: MANIFEST_VERSION,
        sequences,
        folds,
    };
    let path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| IoError::io(&path, e))?;
    Ok(manifest)
}

fn file_name(path: &Path) -> String {
    path.file_name().expect("has a file name").to_string_lossy().into_owned()
}

pub fn read_manifest(dir: &Path) -> Result<ExchangeManifest, HarnessError> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| IoError::io(&path, e))?;
    let manifest: ExchangeManifest = serde_json::from_str(&text).map_err(|e| HarnessError::Manifest {
        path: path.clone(),
        reason: e.to_string(),
    })?;
    if manifest.format_version != MANIFEST_VERSION {
        return Err(HarnessError::Manifest {
            path,
            reason: format!("unsupported version {}", manifest.format_version),
        });
    }
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::PrecipSequence;
    use crate::harness::folds::folds_for_years;
    use crate::io::{build_index, read_sequence, write_pair};

    #[test]
    fn export_writes_inputs_and_manifest() {
        let data = tempfile::tempdir().unwrap();
        let hr = PrecipSequence::from_buffers(GridGeometry::new(6, 6, 4.0).unwrap(), vec![vec![1.5; 36]; 3], 0).unwrap();
        let lr = PrecipSequence::from_buffers(GridGeometry::new(2, 2, 12.0).unwrap(), vec![vec![1.5; 4]; 3], 0).unwrap();
        for name in ["2001-07", "2002-07", "2002-08"] {
            write_pair(&data.path().join(format!("{name}.rnb")), &hr, &lr).unwrap();
        }
        let index = build_index(data.path(), &Default::default()).unwrap();
        let plan = folds_for_years(&index.years()).unwrap();
        let ex = tempfile::tempdir().unwrap();
        let manifest = export_inputs(&index, &plan, ex.path(), &Default::default()).unwrap();
        assert_eq!(read_manifest(ex.path()).unwrap(), manifest);
        assert_eq!(manifest.sequences.len(), 3);
        assert_eq!(manifest.folds[1].test_sequences, vec!["2002-07", "2002-08"]);
        assert_eq!(manifest.sequences[0].prediction, "2001-07.pred.rnb");
        assert_eq!(read_sequence(&input_path(ex.path(), "2002-08"), None).unwrap(), lr);
    }

    #[test]
    fn bad_manifest() {
        let ex = tempfile::tempdir().unwrap();
        std::fs::write(ex.path().join(MANIFEST_FILE), "{\"format_version\": 9, \"sequences\": [], \"folds\": []}").unwrap();
        assert!(matches!(read_manifest(ex.path()), Err(HarnessError::Manifest { .. })));
    }
}
