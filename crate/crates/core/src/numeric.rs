//! Small numerical helpers shared across modules.

use std::iter::Sum;
use std::ops::AddAssign;

/// Neumaier-compensated accumulator.
///
/// Summation order is the caller's order, so results are reproducible as long
/// as terms are fed in a fixed sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub const fn new() -> Self {
        Self {
            sum: 0.0,
            compensation: 0.0,
        }
    }

    #[inline]
    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    /// Folds another partial sum into this one.
    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.compensation);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

impl AddAssign<f64> for CompensatedSum {
    fn add_assign(&mut self, rhs: f64) {
        self.add(rhs);
    }
}

impl Sum<f64> for CompensatedSum {
    fn sum<I: Iterator<Item = f64>>(iter: I) -> Self {
        let mut acc = CompensatedSum::new();
        for v in iter {
            acc.add(v);
        }
        acc
    }
}

impl<'a> Sum<&'a f64> for CompensatedSum {
    fn sum<I: Iterator<Item = &'a f64>>(iter: I) -> Self {
        iter.copied().sum()
    }
}

/// Compensated sum of a slice.
pub fn stable_sum(values: &[f64]) -> f64 {
    values.iter().sum::<CompensatedSum>().value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recovers_small_terms_lost_by_naive_sum() {
        let mut values = vec![1.0e16];
        values.extend(std::iter::repeat_n(1.0, 1000));
        values.push(-1.0e16);
        let naive: f64 = values.iter().sum();
        assert_ne!(naive, 1000.0);
        assert_eq!(stable_sum(&values), 1000.0);
    }

    #[test]
    fn merge_matches_single_pass() {
        let a: Vec<f64> = (0..500).map(|i| (i as f64).sin() * 1e3).collect();
        let whole = stable_sum(&a);
        let mut left: CompensatedSum = a[..250].iter().sum();
        let right: CompensatedSum = a[250..].iter().sum();
        left.merge(&right);
        assert!((left.value() - whole).abs() <= 1e-9 * whole.abs().max(1.0));
    }
}
