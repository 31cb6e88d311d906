use log::warn;
use serde::{Deserialize, Serialize};

use super::{Dataset, FeatureKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Per-feature min-max parameters fitted on a training fold.
///
/// Values are stored widened to `f64`; they were computed in the dataset's
/// own scalar type, so narrowing back is exact. Categorical features pass
/// through unchanged.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationParams {
    pub mins: Vec<f64>,
    pub ranges: Vec<f64>,
    pub kinds: Vec<FeatureKind>,
}

impl NormalizationParams {
    pub fn fit<T: Scalar>(dataset: &Dataset<T>) -> Self {
        let n = dataset.n_features();
        let x = dataset.features();
        let mut mins = Vec::with_capacity(n);
        let mut ranges = Vec::with_capacity(n);
        let mut kinds = Vec::with_capacity(n);
        for (i, spec) in dataset.specs().iter().enumerate() {
            kinds.push(spec.kind);
            if spec.is_categorical() {
                mins.push(0.0);
                ranges.push(1.0);
                continue;
            }
            let col = x.column(i);
            let (lo, hi) = col.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            mins.push(lo.as_f64());
            ranges.push((hi - lo).as_f64());
        }
        Self { mins, ranges, kinds }
    }

    pub fn n_features(&self) -> usize {
        self.mins.len()
    }

    /// Numeric features whose fitted range is zero.
    pub fn constant_features(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&i| self.kinds[i] == FeatureKind::Numeric && self.ranges[i] == 0.0)
            .collect()
    }

    #[inline]
    pub fn apply_value<T: Scalar>(&self, i: usize, v: T) -> T {
        if self.kinds[i] == FeatureKind::Categorical {
            return v;
        }
        let r = T::lit(self.ranges[i]);
        if r == T::zero() {
            T::zero()
        } else {
            (v - T::lit(self.mins[i])) / r
        }
    }

    #[inline]
    pub fn invert_value<T: Scalar>(&self, i: usize, v: T) -> T {
        if self.kinds[i] == FeatureKind::Categorical {
            return v;
        }
        v * T::lit(self.ranges[i]) + T::lit(self.mins[i])
    }

    /// Normalizes every row of `dataset`; specs are re-observed afterwards.
    pub fn apply<T: Scalar>(&self, dataset: &Dataset<T>) -> Result<Dataset<T>> {
        self.check_dim(dataset.n_features())?;
        let mut x = dataset.features().to_owned();
        for mut row in x.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.apply_value(i, *v);
            }
        }
        let mut out = dataset.clone();
        out.replace_features(x);
        out.refresh_ranges();
        Ok(out)
    }

    pub fn invert<T: Scalar>(&self, dataset: &Dataset<T>) -> Result<Dataset<T>> {
        self.check_dim(dataset.n_features())?;
        let mut x = dataset.features().to_owned();
        for mut row in x.rows_mut() {
            for (i, v) in row.iter_mut().enumerate() {
                *v = self.invert_value(i, *v);
            }
        }
        let mut out = dataset.clone();
        out.replace_features(x);
        out.refresh_ranges();
        Ok(out)
    }

    fn check_dim(&self, n: usize) -> Result<()> {
        if n != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                found: n,
            });
        }
        Ok(())
    }
}

/// Min-max scales numeric features to `[0, 1]`; targets are left as-is.
///
/// Constant features map to 0 and are reported with a warning.
pub fn normalize<T: Scalar>(dataset: &Dataset<T>) -> (Dataset<T>, NormalizationParams) {
    let params = NormalizationParams::fit(dataset);
    for i in params.constant_features() {
        warn!(
            "feature `{}` is constant; it is normalized to 0",
            dataset.specs()[i].name
        );
    }
    let out = params.apply(dataset).expect("params fitted on this dataset");
    (out, params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use proptest::prelude::*;

    #[test]
    fn min_max_column() {
        let ds = Dataset::<f64>::from_observed(
            array![[1.0, 5.0], [2.0, 5.0], [3.0, 5.0]],
            array![9.0, 8.0, 7.0],
            vec!["a".into(), "c".into()],
        )
        .unwrap();
        let (norm, params) = normalize(&ds);
        assert_eq!(norm.features().column(0).to_vec(), vec![0.0, 0.5, 1.0]);
        assert_eq!(norm.features().column(1).to_vec(), vec![0.0, 0.0, 0.0]);
        assert_eq!(params.constant_features(), vec![1]);
        assert_eq!(norm.targets(), ds.targets());
        assert_eq!(norm.specs()[0].observed_max, 1.0);
    }

    proptest! {
        #[test]
        fn round_trip(values in proptest::collection::vec(-1e3f64..1e3, 6..40)) {
            let rows = values.len() / 2;
            let x = Array2::from_shape_vec((rows, 2), values[..rows * 2].to_vec()).unwrap();
            let ds = Dataset::from_observed(x, ndarray::Array1::zeros(rows), vec!["a".into(), "b".into()]).unwrap();
            let (norm, params) = normalize(&ds);
            let back = params.invert(&norm).unwrap();
            for (a, b) in back.features().iter().zip(ds.features().iter()) {
                prop_assert!((a - b).abs() <= 1e-12 * (1.0 + b.abs()));
            }
        }
    }
}
