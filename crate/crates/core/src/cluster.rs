//! Main rainfall system extraction.
//!
//! Pixels at or above a rain threshold are grouped into connected components
//! with a union-find pass; the component carrying the most rain is the frame's
//! main system. Its rainfall-weighted centroid and principal-axis orientation
//! feed the dynamic metrics.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::PrecipFrame;

/// Relative eigenvalue gap below which a covariance counts as isotropic.
pub const ISOTROPY_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClusterError {
    #[error("rain threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("connectivity must be 4 or 8, got {0}")]
    InvalidConnectivity(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    Four,
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = ClusterError;

    fn try_from(value: u8) -> Result<Self, Self::Error> {
        match value {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(ClusterError::InvalidConnectivity(other)),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Criterion used to pick the main component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MainBy {
    #[default]
    Mass,
    PixelCount,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterConfig {
    /// mm/hour; pixels at or above it are rainy.
    pub rain_threshold: f64,
    pub connectivity: Connectivity,
    pub main_by: MainBy,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            rain_threshold: 1.0,
            connectivity: Connectivity::Eight,
            main_by: MainBy::Mass,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if !(self.rain_threshold.is_finite() && self.rain_threshold > 0.0) {
            return Err(ClusterError::InvalidThreshold(self.rain_threshold));
        }
        Ok(())
    }
}

/// A maximal connected set of rainy pixels, as row-major flat indices in
/// ascending order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub pixels: Vec<usize>,
}

impl Component {
    pub fn first_pixel(&self) -> usize {
        self.pixels[0]
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// Summary of the main rainfall system of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterStats {
    /// Sum of member rain rates, mm/hour.
    pub mass: f64,
    pub pixel_count: usize,
    /// Rainfall-weighted `(x, y)` position in km.
    pub centroid_km: (f64, f64),
    /// Principal axis angle in `[0, pi)`, measured from the +x (column) axis
    /// toward +y (row).
    pub orientation_rad: f64,
    /// Set when the weighted covariance had no preferred axis; orientation is
    /// then pinned to 0.
    pub isotropic: bool,
    /// Row-major index of the first member pixel.
    pub first_pixel: usize,
}

struct DisjointSet {
    parent: Vec<u32>,
}

impl DisjointSet {
    fn with_capacity(n: usize) -> Self {
        Self {
            parent: Vec::with_capacity(n),
        }
    }

    fn make(&mut self) -> u32 {
        let id = self.parent.len() as u32;
        self.parent.push(id);
        id
    }

    fn find(&mut self, mut x: u32) -> u32 {
        while self.parent[x as usize] != x {
            let grand = self.parent[self.parent[x as usize] as usize];
            self.parent[x as usize] = grand;
            x = grand;
        }
        x
    }

    /// Keeps the smaller id as root so roots follow discovery order.
    fn union(&mut self, a: u32, b: u32) -> u32 {
        let (ra, rb) = (self.find(a), self.find(b));
        let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
        self.parent[hi as usize] = lo;
        lo
    }
}

const BACKGROUND: u32 = u32::MAX;

/// Labels rainy pixels; returns per-pixel dense component ids (in row-major
/// discovery order) and the component count.
fn label_pixels(frame: &PrecipFrame, config: &ClusterConfig) -> (Vec<u32>, usize) {
    let (rows, cols) = (frame.rows(), frame.cols());
    let values = frame.values();
    let threshold = config.rain_threshold;
    let mut labels = vec![BACKGROUND; rows * cols];
    let mut sets = DisjointSet::with_capacity(64);

    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if values[i] < threshold {
                continue;
            }
            let mut label = BACKGROUND;
            let mut join = |other: u32, sets: &mut DisjointSet| {
                if other == BACKGROUND {
                    return;
                }
                label = if label == BACKGROUND {
                    other
                } else {
                    sets.union(label, other)
                };
            };
            if c > 0 {
                join(labels[i - 1], &mut sets);
            }
            if r > 0 {
                let up = i - cols;
                join(labels[up], &mut sets);
                if config.connectivity == Connectivity::Eight {
                    if c > 0 {
                        join(labels[up - 1], &mut sets);
                    }
                    if c + 1 < cols {
                        join(labels[up + 1], &mut sets);
                    }
                }
            }
            labels[i] = if label == BACKGROUND { sets.make() } else { label };
        }
    }

    // Dense ids in order of each component's first pixel.
    let mut dense = vec![BACKGROUND; sets.parent.len()];
    let mut count = 0u32;
    for label in labels.iter_mut() {
        if *label == BACKGROUND {
            continue;
        }
        let root = sets.find(*label) as usize;
        if dense[root] == BACKGROUND {
            dense[root] = count;
            count += 1;
        }
        *label = dense[root];
    }
    (labels, count as usize)
}

/// Partitions rainy pixels into maximal connected components, listed in
/// row-major order of their first pixel.
pub fn label_components(frame: &PrecipFrame, config: &ClusterConfig) -> Vec<Component> {
    let (labels, count) = label_pixels(frame, config);
    let mut components = vec![Component { pixels: Vec::new() }; count];
    for (i, &label) in labels.iter().enumerate() {
        if label != BACKGROUND {
            components[label as usize].pixels.push(i);
        }
    }
    components
}

/// Stats of the frame's main rainfall system, or `None` for a dry frame.
pub fn main_cluster(frame: &PrecipFrame, config: &ClusterConfig) -> Option<ClusterStats> {
    let (labels, count) = label_pixels(frame, config);
    if count == 0 {
        return None;
    }
    let values = frame.values();
    let mut mass = vec![0.0f64; count];
    let mut size = vec![0usize; count];
    let mut first = vec![usize::MAX; count];
    for (i, &label) in labels.iter().enumerate() {
        if label == BACKGROUND {
            continue;
        }
        let l = label as usize;
        mass[l] += values[i];
        size[l] += 1;
        if first[l] == usize::MAX {
            first[l] = i;
        }
    }

    // Dense ids already follow first-pixel order, so the earliest id wins ties.
    let better = |a: usize, b: usize| -> bool {
        match config.main_by {
            MainBy::Mass => (mass[a], size[a]) > (mass[b], size[b]),
            MainBy::PixelCount => (size[a], mass[a]) > (size[b], mass[b]),
        }
    };
    let mut best = 0;
    for l in 1..count {
        if better(l, best) {
            best = l;
        }
    }

    let target = best as u32;
    let cols = frame.cols();
    let pixel = frame.geometry().pixel_size_km();
    let total = mass[best];
    let (mut sx, mut sy) = (0.0, 0.0);
    for (i, _) in labels.iter().enumerate().filter(|(_, l)| **l == target) {
        let w = values[i];
        sx += w * (i % cols) as f64;
        sy += w * (i / cols) as f64;
    }
    let (cx, cy) = (sx / total, sy / total);
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (i, _) in labels.iter().enumerate().filter(|(_, l)| **l == target) {
        let w = values[i];
        let dx = (i % cols) as f64 - cx;
        let dy = (i / cols) as f64 - cy;
        sxx += w * dx * dx;
        syy += w * dy * dy;
        sxy += w * dx * dy;
    }
    let (orientation_rad, isotropic) = principal_orientation(sxx, syy, sxy);

    Some(ClusterStats {
        mass: total,
        pixel_count: size[best],
        centroid_km: (cx * pixel, cy * pixel),
        orientation_rad,
        isotropic,
        first_pixel: first[best],
    })
}

/// Angle of the major eigenvector of `[[sxx, sxy], [sxy, syy]]`, reduced to
/// `[0, pi)`. Returns `(0, true)` when the eigenvalues coincide.
pub fn principal_orientation(sxx: f64, syy: f64, sxy: f64) -> (f64, bool) {
    let gap = ((sxx - syy).powi(2) + 4.0 * sxy * sxy).sqrt();
    let scale = (sxx + syy).abs();
    if gap <= ISOTROPY_TOLERANCE * scale || gap == 0.0 {
        return (0.0, true);
    }
    (wrap_half_turn(0.5 * (2.0 * sxy).atan2(sxx - syy)), false)
}

/// Reduces an angle modulo pi into `[0, pi)`.
pub fn wrap_half_turn(theta: f64) -> f64 {
    let r = theta.rem_euclid(PI);
    if r >= PI {
        0.0
    } else {
        r
    }
}

/// Smallest angle between two axis orientations, in `[0, pi/2]`.
pub fn axis_difference(a: f64, b: f64) -> f64 {
    let d = wrap_half_turn(a - b);
    d.min(PI - d)
}
