//! The `rnb` container.
//!
//! All integers and floats are little-endian:
//!
//! ```text
//! "RNB1"                       4 bytes
//! sequence count n (u32)       4 bytes, 1 or 2
//! n headers, each 20 bytes:    rows u32, cols u32, frames u32,
//!                              pixel_size_km f32, timestep_hours f32
//! n payloads:                  frames * rows * cols f32, row-major
//! checksum (u64)               FNV-1a 64 of every preceding byte
//! ```
//!
//! A pair file stores HR first, then LR.

use std::hash::Hasher;
use std::path::Path;

use fnv::FnvHasher;

use super::{sequence_from_raw, IoError};
use crate::grid::{GridGeometry, PrecipFrame, PrecipSequence};

pub const MAGIC: &[u8; 4] = b"RNB1";
pub const HEADER_BYTES: usize = 20;
const MAX_SEQUENCES: u32 = 2;

pub fn checksum(bytes: &[u8]) -> u64 {
    let mut h = FnvHasher::default();
    h.write(bytes);
    h.finish()
}

/// Exact file size for sequences of the given `(frames, rows, cols)`.
pub fn file_size(shapes: &[(usize, usize, usize)]) -> usize {
    8 + shapes.len() * HEADER_BYTES + shapes.iter().map(|(t, r, c)| t * r * c * 4).sum::<usize>() + 8
}

/// Serializes sequences to bytes. Values are stored as `f32`.
pub fn encode(path: &Path, sequences: &[&[PrecipFrame]]) -> Result<Vec<u8>, IoError> {
    if sequences.is_empty() || sequences.len() > MAX_SEQUENCES as usize {
        return Err(IoError::TooShort(format!("expected 1 or 2 sequences, got {}", sequences.len())));
    }
    if let Some(i) = sequences.iter().position(|s| s.is_empty()) {
        return Err(IoError::TooShort(format!("sequence {i} has no frames")));
    }
    let shapes: Vec<_> = sequences.iter().map(|s| (s.len(), s[0].rows(), s[0].cols())).collect();
    let mut out = Vec::with_capacity(file_size(&shapes));
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(sequences.len() as u32).to_le_bytes());
    for seq in sequences {
        let g = seq[0].geometry();
        if let Some(f) = seq.iter().find(|f| f.geometry() != g) {
            return Err(IoError::layout(path, format!("mixed geometry at timestamp {}", f.timestamp())));
        }
        let dims = [g.rows(), g.cols(), seq.len()];
        for d in dims {
            let d = u32::try_from(d).map_err(|_| IoError::layout(path, format!("dimension {d} exceeds u32")))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        out.extend_from_slice(&(g.pixel_size_km() as f32).to_le_bytes());
        out.extend_from_slice(&(g.timestep_hours() as f32).to_le_bytes());
    }
    for seq in sequences {
        for frame in seq.iter() {
            for v in frame.values() {
                out.extend_from_slice(&(*v as f32).to_le_bytes());
            }
        }
    }
    let sum = checksum(&out);
    out.extend_from_slice(&sum.to_le_bytes());
    Ok(out)
}

pub fn write_rnb(path: &Path, sequences: &[&[PrecipFrame]]) -> Result<(), IoError> {
    let bytes = encode(path, sequences)?;
    std::fs::write(path, bytes).map_err(|e| IoError::io(path, e))
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

fn f32_at(bytes: &[u8], at: usize) -> f32 {
    f32::from_le_bytes(bytes[at..at + 4].try_into().expect("4 bytes"))
}

/// Parses a container already in memory. `path` is only used in errors.
pub fn decode(path: &Path, bytes: &[u8], sentinel: Option<f32>) -> Result<Vec<PrecipSequence>, IoError> {
    if bytes.len() < 16 {
        return Err(IoError::corrupt(path, format!("{} bytes is too short for a container", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(IoError::corrupt(path, "bad magic"));
    }
    let (body, tail) = bytes.split_at(bytes.len() - 8);
    let stored = u64::from_le_bytes(tail.try_into().expect("8 bytes"));
    let n = u32_at(bytes, 4);
    if n == 0 || n > MAX_SEQUENCES {
        return Err(IoError::corrupt(path, format!("sequence count {n}")));
    }
    let n = n as usize;
    let header_end = 8 + n * HEADER_BYTES;
    if body.len() < header_end {
        return Err(IoError::corrupt(path, "truncated header"));
    }
    let mut headers = Vec::with_capacity(n);
    for i in 0..n {
        let at = 8 + i * HEADER_BYTES;
        let (rows, cols, frames) = (u32_at(bytes, at) as usize, u32_at(bytes, at + 4) as usize, u32_at(bytes, at + 8) as usize);
        let (px, dt) = (f32_at(bytes, at + 12), f32_at(bytes, at + 16));
        headers.push((rows, cols, frames, px, dt));
    }
    let shapes: Vec<_> = headers.iter().map(|h| (h.2, h.0, h.1)).collect();
    let expected = shapes
        .iter()
        .try_fold(header_end + 8, |acc, (t, r, c)| t.checked_mul(*r)?.checked_mul(*c)?.checked_mul(4)?.checked_add(acc));
    if expected != Some(bytes.len()) {
        return Err(IoError::corrupt(
            path,
            format!("size {} does not match header (expected {:?})", bytes.len(), expected),
        ));
    }
    if checksum(body) != stored {
        return Err(IoError::corrupt(path, "checksum mismatch"));
    }

    let mut offset = header_end;
    let mut out = Vec::with_capacity(n);
    for (i, &(rows, cols, frames, px, dt)) in headers.iter().enumerate() {
        let geometry = GridGeometry::with_timestep(rows, cols, px as f64, dt as f64)
            .map_err(|e| IoError::corrupt(path, format!("sequence {i}: {e}")))?;
        let len = frames * rows * cols;
        let raw: Vec<f32> = body[offset..offset + 4 * len]
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().expect("4 bytes")))
            .collect();
        offset += 4 * len;
        out.push(sequence_from_raw(path, &format!("sequence {i}"), geometry, &raw, frames, sentinel)?);
    }
    Ok(out)
}

pub fn read_rnb(path: &Path, sentinel: Option<f32>) -> Result<Vec<PrecipSequence>, IoError> {
    let bytes = std::fs::read(path).map_err(|e| IoError::io(path, e))?;
    decode(path, &bytes, sentinel)
}

/// Header of a container on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct RnbProbe {
    /// Geometry and frame count of each stored sequence.
    pub sequences: Vec<(GridGeometry, usize)>,
    /// Stored checksum. Not verified against the payload.
    pub checksum: u64,
}

/// Reads the header and stored checksum without touching the payload.
pub fn probe(path: &Path) -> Result<RnbProbe, IoError> {
    use std::io::{Read, Seek, SeekFrom};
    let mut file = std::fs::File::open(path).map_err(|e| IoError::io(path, e))?;
    let len = file.metadata().map_err(|e| IoError::io(path, e))?.len() as usize;
    let mut head = [0u8; 8 + MAX_SEQUENCES as usize * HEADER_BYTES];
    let take = head.len().min(len);
    file.read_exact(&mut head[..take]).map_err(|e| IoError::io(path, e))?;
    if take < 16 || &head[..4] != MAGIC {
        return Err(IoError::corrupt(path, "not an rnb container"));
    }
    let n = u32_at(&head, 4);
    if n == 0 || n > MAX_SEQUENCES || take < 8 + n as usize * HEADER_BYTES {
        return Err(IoError::corrupt(path, format!("sequence count {n}")));
    }
    let mut sequences = Vec::new();
    let mut expected = 8 + n as usize * HEADER_BYTES + 8;
    for i in 0..n as usize {
        let at = 8 + i * HEADER_BYTES;
        let (rows, cols, frames) = (u32_at(&head, at) as usize, u32_at(&head, at + 4) as usize, u32_at(&head, at + 8) as usize);
        let g = GridGeometry::with_timestep(rows, cols, f32_at(&head, at + 12) as f64, f32_at(&head, at + 16) as f64)
            .map_err(|e| IoError::corrupt(path, format!("sequence {i}: {e}")))?;
        expected += frames * rows * cols * 4;
        sequences.push((g, frames));
    }
    if expected != len {
        return Err(IoError::corrupt(path, format!("size {len} does not match header (expected {expected})")));
    }
    let mut tail = [0u8; 8];
    file.seek(SeekFrom::End(-8)).map_err(|e| IoError::io(path, e))?;
    file.read_exact(&mut tail).map_err(|e| IoError::io(path, e))?;
    Ok(RnbProbe {
        sequences,
        checksum: u64::from_le_bytes(tail),
    })
}
