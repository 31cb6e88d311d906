use serde::{Deserialize, Serialize};

use crate::data::FeatureSpec;
use crate::scalar::Scalar;

/// Objective vector of one candidate; every component is minimized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveTriple<T> {
    /// Negated shape distance, capped at `-epsilon`.
    pub g1: T,
    /// Number of modified passive features.
    pub g2: usize,
    /// Mean Gower distance over passive features.
    pub g3: T,
}

impl<T: Scalar> ObjectiveTriple<T> {
    pub fn new(g1: T, g2: usize, g3: T) -> Self {
        Self { g1, g2, g3 }
    }

    pub fn as_array(&self) -> [T; 3] {
        [self.g1, T::from_usize_lossy(self.g2), self.g3]
    }

    /// No worse in every objective and strictly better in at least one.
    pub fn dominates(&self, other: &Self) -> bool {
        let no_worse = self.g1 <= other.g1 && self.g2 <= other.g2 && self.g3 <= other.g3;
        let better = self.g1 < other.g1 || self.g2 < other.g2 || self.g3 < other.g3;
        no_worse && better
    }
}

/// `-d` below the threshold, `-epsilon` at or above it.
pub fn g1<T: Scalar>(distance: T, epsilon: T) -> T {
    if distance < epsilon {
        -distance
    } else {
        -epsilon
    }
}

#[inline]
pub(crate) fn differs<T: Scalar>(a: T, b: T, tie_tolerance: T) -> bool {
    (a - b).abs() > tie_tolerance
}

/// L0 count of passive values that moved by more than `tie_tolerance`.
pub fn g2<T: Scalar>(original: &[T], candidate: &[T], tie_tolerance: T) -> usize {
    original
        .iter()
        .zip(candidate)
        .filter(|(&a, &b)| differs(a, b, tie_tolerance))
        .count()
}

/// Mean Gower distance over the passive features. `specs[i]` describes
/// `original[i]`. Numeric features use the range-normalized absolute
/// difference (zero-range features contribute 0); categorical features
/// contribute 1 when the level differs.
pub fn g3<T: Scalar>(original: &[T], candidate: &[T], specs: &[&FeatureSpec<T>], tie_tolerance: T) -> T {
    if original.is_empty() {
        return T::zero();
    }
    let total: T = original
        .iter()
        .zip(candidate)
        .zip(specs)
        .map(|((&a, &b), spec)| {
            if spec.is_categorical() {
                if differs(a, b, tie_tolerance) {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                let r = spec.range();
                if r > T::zero() {
                    ((a - b).abs() / r).min(T::one())
                } else {
                    T::zero()
                }
            }
        })
        .sum();
    total / T::from_usize_lossy(original.len())
}
