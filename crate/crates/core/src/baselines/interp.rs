//! Interpolating upsamplers: nearest, bilinear and Keys bicubic.
//!
//! Output pixel `o` along an axis samples the input at
//! `(o + 0.5) / factor - 0.5` (pixel-centre alignment); taps outside the
//! grid are clamped to the edge.

use crate::grid::{GridGeometry, PrecipFrame};

use super::BaselineError;

/// Keys cubic convolution kernel with free parameter `a`.
#[inline]
pub fn keys_kernel(x: f64, a: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a
    } else {
        0.0
    }
}

/// Source coordinate sampled by output index `o`.
#[inline]
pub fn source_coordinate(o: usize, factor: usize) -> f64 {
    (o as f64 + 0.5) / factor as f64 - 0.5
}

/// Input indices and weights contributing to one output index.
#[derive(Debug, Clone, Copy)]
struct Taps<const N: usize> {
    index: [usize; N],
    weight: [f64; N],
}

fn clamp_index(i: i64, n: usize) -> usize {
    i.clamp(0, n as i64 - 1) as usize
}

fn cubic_taps(n_in: usize, factor: usize, a: f64) -> Vec<Taps<4>> {
    (0..n_in * factor)
        .map(|o| {
            let s = source_coordinate(o, factor);
            let base = s.floor();
            let t = s - base;
            let base = base as i64;
            Taps {
                index: [
                    clamp_index(base - 1, n_in),
                    clamp_index(base, n_in),
                    clamp_index(base + 1, n_in),
                    clamp_index(base + 2, n_in),
                ],
                weight: [
                    keys_kernel(t + 1.0, a),
                    keys_kernel(t, a),
                    keys_kernel(1.0 - t, a),
                    keys_kernel(2.0 - t, a),
                ],
            }
        })
        .collect()
}

fn linear_taps(n_in: usize, factor: usize) -> Vec<Taps<2>> {
    (0..n_in * factor)
        .map(|o| {
            let s = source_coordinate(o, factor);
            let base = s.floor();
            let t = s - base;
            let base = base as i64;
            Taps {
                index: [clamp_index(base, n_in), clamp_index(base + 1, n_in)],
                weight: [1.0 - t, t],
            }
        })
        .collect()
}

/// Applies separable taps: columns first, then rows. Negative results are
/// clamped to zero at the very end.
fn separable<const N: usize>(lr: &PrecipFrame, factor: usize, col_taps: &[Taps<N>], row_taps: &[Taps<N>]) -> PrecipFrame {
    let (rows, cols) = (lr.rows(), lr.cols());
    let out_cols = cols * factor;
    let src = lr.values();
    let mut horizontal = vec![0.0; rows * out_cols];
    for r in 0..rows {
        let line = &src[r * cols..(r + 1) * cols];
        let out = &mut horizontal[r * out_cols..(r + 1) * out_cols];
        for (o, taps) in out.iter_mut().zip(col_taps) {
            *o = (0..N).map(|k| taps.weight[k] * line[taps.index[k]]).sum();
        }
    }
    let mut values = vec![0.0; rows * factor * out_cols];
    for (orow, taps) in row_taps.iter().enumerate() {
        let out = &mut values[orow * out_cols..(orow + 1) * out_cols];
        for k in 0..N {
            let w = taps.weight[k];
            let line = &horizontal[taps.index[k] * out_cols..(taps.index[k] + 1) * out_cols];
            for (o, v) in out.iter_mut().zip(line) {
                *o += w * v;
            }
        }
    }
    for v in &mut values {
        *v = v.max(0.0);
    }
    PrecipFrame::from_trusted(lr.geometry().refined(factor), values, lr.timestamp())
}

fn check_factor(factor: usize) -> Result<(), BaselineError> {
    if factor == 0 {
        Err(BaselineError::InvalidFactor(factor))
    } else {
        Ok(())
    }
}

/// Each output pixel copies the input pixel containing it.
pub fn upsample_nearest(lr: &PrecipFrame, factor: usize) -> Result<PrecipFrame, BaselineError> {
    check_factor(factor)?;
    let (rows, cols) = (lr.rows(), lr.cols());
    let out_cols = cols * factor;
    let mut values = Vec::with_capacity(rows * factor * out_cols);
    for orow in 0..rows * factor {
        let r = orow / factor;
        values.extend((0..out_cols).map(|ocol| lr.get(r, ocol / factor)));
    }
    Ok(PrecipFrame::from_trusted(lr.geometry().refined(factor), values, lr.timestamp()))
}

pub fn upsample_bilinear(lr: &PrecipFrame, factor: usize) -> Result<PrecipFrame, BaselineError> {
    check_factor(factor)?;
    let col_taps = linear_taps(lr.cols(), factor);
    let row_taps = linear_taps(lr.rows(), factor);
    Ok(separable(lr, factor, &col_taps, &row_taps))
}

/// Keys `a` used by [`upsample_bicubic`].
pub const DEFAULT_KEYS_A: f64 = -0.5;

/// Separable cubic convolution with the Keys kernel (`a = -0.5`).
pub fn upsample_bicubic(lr: &PrecipFrame, factor: usize) -> Result<PrecipFrame, BaselineError> {
    upsample_bicubic_with(lr, factor, DEFAULT_KEYS_A)
}

pub fn upsample_bicubic_with(lr: &PrecipFrame, factor: usize, a: f64) -> Result<PrecipFrame, BaselineError> {
    check_factor(factor)?;
    if lr.rows() < 2 || lr.cols() < 2 {
        return Err(BaselineError::TooSmall {
            rows: lr.rows(),
            cols: lr.cols(),
        });
    }
    if !a.is_finite() {
        return Err(BaselineError::InvalidParameter(format!("kernel parameter a = {a}")));
    }
    let col_taps = cubic_taps(lr.cols(), factor, a);
    let row_taps = cubic_taps(lr.rows(), factor, a);
    Ok(separable(lr, factor, &col_taps, &row_taps))
}

/// HR geometry produced by every upsampler.
pub fn upsampled_geometry(lr: &GridGeometry, factor: usize) -> GridGeometry {
    lr.refined(factor)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::block_mean_downsample;

    fn frame(rows: usize, cols: usize, values: Vec<f64>) -> PrecipFrame {
        PrecipFrame::new(GridGeometry::new(rows, cols, 12.0).unwrap(), values, 3).unwrap()
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut s = seed;
        (0..n)
            .map(|_| {
                s = s.wrapping_mul(2862933555777941757).wrapping_add(3037000493);
                ((s >> 40) % 1000) as f64 / 20.0
            })
            .collect()
    }

    /// Brute-force 2-D cubic convolution, without separability.
    fn direct_bicubic(lr: &PrecipFrame, factor: usize, a: f64) -> Vec<f64> {
        let (rows, cols) = (lr.rows() as i64, lr.cols() as i64);
        let mut out = Vec::new();
        for orow in 0..lr.rows() * factor {
            let sy = (orow as f64 + 0.5) / factor as f64 - 0.5;
            for ocol in 0..lr.cols() * factor {
                let sx = (ocol as f64 + 0.5) / factor as f64 - 0.5;
                let mut acc = 0.0;
                for j in (sy.floor() as i64 - 1)..=(sy.floor() as i64 + 2) {
                    for i in (sx.floor() as i64 - 1)..=(sx.floor() as i64 + 2) {
                        let w = keys_kernel(sx - i as f64, a) * keys_kernel(sy - j as f64, a);
                        acc += w * lr.get(j.clamp(0, rows - 1) as usize, i.clamp(0, cols - 1) as usize);
                    }
                }
                out.push(acc.max(0.0));
            }
        }
        out
    }

    #[test]
    fn kernel_shape() {
        assert_eq!(keys_kernel(0.0, -0.5), 1.0);
        assert_eq!(keys_kernel(1.0, -0.5), 0.0);
        assert_eq!(keys_kernel(2.0, -0.5), 0.0);
        for t in [0.0, 0.1, 0.37, 0.5, 0.99] {
            let sum: f64 = [t + 1.0, t, 1.0 - t, 2.0 - t].iter().map(|x| keys_kernel(*x, -0.5)).sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn nearest_examples() {
        let up = upsample_nearest(&frame(1, 1, vec![7.0]), 3).unwrap();
        assert_eq!(up.values(), &[7.0; 9]);
        assert_eq!(up.geometry().pixel_size_km(), 4.0);
        assert_eq!(up.timestamp(), 3);

        let lr = frame(2, 2, vec![1.0, 2.0, 3.0, 4.0]);
        let up = upsample_nearest(&lr, 2).unwrap();
        for r in 0..4 {
            for c in 0..4 {
                assert_eq!(up.get(r, c), lr.get(r / 2, c / 2));
            }
        }
        let lr = frame(3, 4, pseudo_random(12, 9));
        assert_eq!(block_mean_downsample(&upsample_nearest(&lr, 3).unwrap(), 3).unwrap().values(), lr.values());
        assert!(matches!(upsample_nearest(&lr, 0), Err(BaselineError::InvalidFactor(0))));
    }

    #[test]
    fn constant_field_is_preserved() {
        let lr = frame(4, 5, vec![3.25; 20]);
        for up in [
            upsample_nearest(&lr, 3).unwrap(),
            upsample_bilinear(&lr, 3).unwrap(),
            upsample_bicubic(&lr, 3).unwrap(),
        ] {
            assert!(up.values().iter().all(|v| (*v - 3.25).abs() < 1e-14));
        }
    }

    #[test]
    fn bicubic_reproduces_linear_ramp_in_interior() {
        let (rows, cols, factor) = (6, 9, 3);
        let lr = frame(rows, cols, (0..rows * cols).map(|i| 2.0 + 1.5 * (i % cols) as f64).collect());
        let up = upsample_bicubic(&lr, factor).unwrap();
        for orow in 0..rows * factor {
            for ocol in 2 * factor..(cols - 2) * factor {
                let expected = 2.0 + 1.5 * source_coordinate(ocol, factor);
                assert!((up.get(orow, ocol) - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn bicubic_matches_direct_convolution() {
        for seed in 0..20 {
            let lr = frame(8, 8, pseudo_random(64, seed));
            let up = upsample_bicubic(&lr, 3).unwrap();
            let oracle = direct_bicubic(&lr, 3, -0.5);
            for (a, b) in up.values().iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn bicubic_clamps_overshoot() {
        let mut v = vec![0.0; 25];
        v[12] = 100.0;
        let up = upsample_bicubic(&frame(5, 5, v), 3).unwrap();
        assert!(up.values().iter().all(|x| *x >= 0.0));
        assert!(up.values().contains(&0.0));
    }

    #[test]
    fn bicubic_rejects_tiny_input() {
        assert!(matches!(
            upsample_bicubic(&frame(1, 3, vec![1.0; 3]), 3),
            Err(BaselineError::TooSmall { rows: 1, cols: 3 })
        ));
    }

    #[test]
    fn factor_one_is_identity() {
        let lr = frame(4, 4, pseudo_random(16, 2));
        assert_eq!(upsample_bicubic(&lr, 1).unwrap().values(), lr.values());
        assert_eq!(upsample_bilinear(&lr, 1).unwrap().values(), lr.values());
    }
}
