//! Index of monthly files named `YYYY-MM.rnb` or `YYYY-MM.h5`.

use std::collections::BTreeMap;
use std::hash::Hasher;
use std::io::Read;
use std::path::{Path, PathBuf};

use fnv::FnvHasher;
use serde::{Deserialize, Serialize};

use super::{rnb, ContainerFormat, IoError, ReadOptions};
use crate::grid::GridGeometry;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub year: i32,
    pub month: u32,
    pub path: PathBuf,
    pub format: ContainerFormat,
    pub frame_count: usize,
    pub hr_geometry: GridGeometry,
    pub lr_geometry: GridGeometry,
    /// Stored checksum for `rnb`; FNV-1a 64 of the file bytes for HDF5.
    pub checksum: u64,
}

impl IndexEntry {
    /// `YYYY-MM`, also used as the sequence id in exchange manifests.
    pub fn id(&self) -> String {
        format!("{:04}-{:02}", self.year, self.month)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    /// Sorted by `(year, month)`.
    pub entries: Vec<IndexEntry>,
}

impl DatasetIndex {
    /// Builds an index from entries in any order.
    pub fn from_entries(mut entries: Vec<IndexEntry>) -> Result<Self, IoError> {
        entries.sort_by(|a, b| (a.year, a.month, &a.path).cmp(&(b.year, b.month, &b.path)));
        for w in entries.windows(2) {
            if (w[0].year, w[0].month) == (w[1].year, w[1].month) {
                return Err(IoError::DuplicateMonth {
                    year: w[0].year,
                    month: w[0].month,
                    first: w[0].path.clone(),
                    second: w[1].path.clone(),
                });
            }
        }
        if let Some(first) = entries.first() {
            if let Some(bad) = entries
                .iter()
                .find(|e| e.hr_geometry != first.hr_geometry || e.lr_geometry != first.lr_geometry)
            {
                return Err(IoError::layout(&bad.path, format!("geometry differs from {}", first.path.display())));
            }
        }
        Ok(Self { entries })
    }

    /// Distinct years, ascending.
    pub fn years(&self) -> Vec<i32> {
        let mut years: Vec<i32> = self.entries.iter().map(|e| e.year).collect();
        years.dedup();
        years
    }

    pub fn by_year(&self) -> BTreeMap<i32, Vec<&IndexEntry>> {
        let mut map: BTreeMap<i32, Vec<&IndexEntry>> = BTreeMap::new();
        for e in &self.entries {
            map.entry(e.year).or_default().push(e);
        }
        map
    }

    pub fn entries_for_year(&self, year: i32) -> impl Iterator<Item = &IndexEntry> {
        self.entries.iter().filter(move |e| e.year == year)
    }

    pub fn total_frames(&self) -> usize {
        self.entries.iter().map(|e| e.frame_count).sum()
    }
}

/// Parses a `YYYY-MM` file stem.
pub fn parse_month(path: &Path) -> Result<(i32, u32), IoError> {
    let bad = || IoError::UnparseableName(path.to_path_buf());
    let stem = path.file_stem().and_then(|s| s.to_str()).ok_or_else(bad)?;
    let (y, m) = stem.split_once('-').ok_or_else(bad)?;
    if y.len() != 4 || m.len() != 2 || !y.bytes().chain(m.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(bad());
    }
    let month: u32 = m.parse().map_err(|_| bad())?;
    if !(1..=12).contains(&month) {
        return Err(bad());
    }
    Ok((y.parse().map_err(|_| bad())?, month))
}

fn file_checksum(path: &Path) -> Result<u64, IoError> {
    let mut file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let mut h = FnvHasher::default();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf).map_err(|e| IoError::io(path, e))?;
        if n == 0 {
            break;
        }
        h.write(&buf[..n]);
    }
    Ok(h.finish())
}

fn index_file(path: &Path, format: ContainerFormat, options: &ReadOptions) -> Result<IndexEntry, IoError> {
    let (year, month) = parse_month(path)?;
    let (frame_count, hr_geometry, lr_geometry, checksum) = match format {
        ContainerFormat::Rnb => {
            let probe = rnb::probe(path)?;
            let [(hr, t_hr), (lr, t_lr)] = probe.sequences[..] else {
                return Err(IoError::layout(path, "monthly files must hold an HR/LR pair"));
            };
            if t_hr != t_lr {
                return Err(IoError::layout(path, format!("HR has {t_hr} frames, LR has {t_lr}")));
            }
            (t_hr, hr, lr, probe.checksum)
        }
        #[cfg(feature = "hdf5")]
        ContainerFormat::Hdf5 => {
            let (hr, lr) = super::hdf5::probe_hdf5(path, options)?;
            let (hg, lg) = (options.hr_geometry, options.lr_geometry);
            if hr[1..] != [hg.rows(), hg.cols()] || lr[1..] != [lg.rows(), lg.cols()] || hr[0] != lr[0] {
                return Err(IoError::layout(path, format!("datasets are {hr:?} and {lr:?}")));
            }
            (hr[0], hg, lg, file_checksum(path)?)
        }
        #[cfg(not(feature = "hdf5"))]
        ContainerFormat::Hdf5 => {
            let _ = (options, file_checksum as fn(&Path) -> Result<u64, IoError>);
            return Err(IoError::Unsupported {
                path: path.to_path_buf(),
                reason: "built without the hdf5 feature".to_string(),
            });
        }
    };
    if frame_count == 0 {
        return Err(IoError::corrupt(path, "no frames"));
    }
    Ok(IndexEntry {
        year,
        month,
        path: path.to_path_buf(),
        format,
        frame_count,
        hr_geometry,
        lr_geometry,
        checksum,
    })
}

/// Indexes every `.rnb`, `.h5` and `.hdf5` file directly under `root`.
/// Other files are ignored. The result does not depend on listing order.
pub fn build_index(root: &Path, options: &ReadOptions) -> Result<DatasetIndex, IoError> {
    let listing = std::fs::read_dir(root).map_err(|e| IoError::io(root, e))?;
    let mut entries = Vec::new();
    for item in listing {
        let path = item.map_err(|e| IoError::io(root, e))?.path();
        if !path.is_file() {
            continue;
        }
        if let Some(format) = ContainerFormat::from_path(&path) {
            entries.push(index_file(&path, format, options)?);
        }
    }
    DatasetIndex::from_entries(entries)
}
