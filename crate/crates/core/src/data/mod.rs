//! Datasets, feature metadata, and the plumbing around them: synthetic
//! generation, CSV ingestion, min-max normalization and k-fold splitting.
//!
//! Feature indices are zero-based throughout the crate. The synthetic
//! features are named `x1`..`x5`, so `x1` lives at index 0.

mod csv_io;
mod normalize;
mod split;
mod synthetic;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use csv_io::{load_csv, read_csv, write_csv, ColumnDecl, CsvSchema};
pub use normalize::{normalize, NormalizationParams};
pub use split::{kfold_indices, kfold_split, FoldSplit};
pub use synthetic::{
    generate_synthetic, generate_synthetic_with_noise, synthetic_response, SyntheticFunction,
    SYNTHETIC_BOUNDS, SYNTHETIC_FEATURES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Numeric,
    Categorical,
}

/// Name, type and observed range of one input feature.
///
/// Categorical features are stored as integer level codes `0..levels.len()`;
/// their min/max fields hold the code range and are not used as a distance
/// normalizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSpec<T> {
    pub name: String,
    pub kind: FeatureKind,
    pub observed_min: T,
    pub observed_max: T,
    pub levels: Vec<String>,
}

impl<T: Scalar> FeatureSpec<T> {
    pub fn numeric(name: impl Into<String>, min: T, max: T) -> Self {
        Self {
            name: name.into(),
            kind: FeatureKind::Numeric,
            observed_min: min,
            observed_max: max,
            levels: Vec::new(),
        }
    }

    pub fn categorical(name: impl Into<String>, levels: Vec<String>) -> Self {
        let top = T::from_usize_lossy(levels.len().saturating_sub(1));
        Self {
            name: name.into(),
            kind: FeatureKind::Categorical,
            observed_min: T::zero(),
            observed_max: top,
            levels,
        }
    }

    /// `observed_max - observed_min`; the Gower normalizer of numeric features.
    pub fn range(&self) -> T {
        self.observed_max - self.observed_min
    }

    pub fn is_categorical(&self) -> bool {
        self.kind == FeatureKind::Categorical
    }
}

/// One input vector, detached from its dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample<T> {
    pub index: usize,
    pub features: Vec<T>,
}

impl<T: Scalar> Sample<T> {
    pub fn new(index: usize, features: Vec<T>) -> Self {
        Self { index, features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }
}

/// Feature matrix (`N x n`), targets and per-feature metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    targets: Array1<T>,
    specs: Vec<FeatureSpec<T>>,
    active_index: Option<usize>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Array2<T>, targets: Array1<T>, specs: Vec<FeatureSpec<T>>) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::EmptyDataset);
        }
        if features.nrows() != targets.len() {
            return Err(Error::InvalidConfig(format!(
                "{} feature rows but {} targets",
                features.nrows(),
                targets.len()
            )));
        }
        if features.ncols() != specs.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                found: features.ncols(),
            });
        }
        if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset".into()));
        }
        Ok(Self {
            features,
            targets,
            specs,
            active_index: None,
        })
    }

    /// Builds a dataset whose numeric ranges are taken from the data itself.
    pub fn from_observed(
        features: Array2<T>,
        targets: Array1<T>,
        names: Vec<String>,
    ) -> Result<Self> {
        let specs = names
            .into_iter()
            .map(|n| FeatureSpec::numeric(n, T::zero(), T::zero()))
            .collect();
        let mut ds = Self::new(features, targets, specs)?;
        ds.refresh_ranges();
        Ok(ds)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> ArrayView2<'_, T> {
        self.features.view()
    }

    pub fn targets(&self) -> ArrayView1<'_, T> {
        self.targets.view()
    }

    pub fn specs(&self) -> &[FeatureSpec<T>] {
        &self.specs
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.specs.iter().map(|s| s.name.clone()).collect()
    }

    pub fn sample(&self, j: usize) -> Sample<T> {
        Sample::new(j, self.features.row(j).to_vec())
    }

    pub fn samples(&self) -> impl Iterator<Item = Sample<T>> + '_ {
        (0..self.len()).map(move |j| self.sample(j))
    }

    pub fn active_index(&self) -> Option<usize> {
        self.active_index
    }

    pub fn feature_index(&self, name: &str) -> Result<usize> {
        self.specs
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| Error::UnknownFeature(name.to_string()))
    }

    pub fn set_active(&mut self, index: usize) -> Result<()> {
        if index >= self.n_features() {
            return Err(Error::InvalidConfig(format!(
                "active index {index} out of range for {} features",
                self.n_features()
            )));
        }
        self.active_index = Some(index);
        Ok(())
    }

    pub fn with_active_name(mut self, name: &str) -> Result<Self> {
        let idx = self.feature_index(name)?;
        self.set_active(idx)?;
        Ok(self)
    }

    /// Indices of every feature except the active one.
    pub fn passive_indices(&self) -> Vec<usize> {
        (0..self.n_features())
            .filter(|&i| Some(i) != self.active_index)
            .collect()
    }

    /// Rows `indices`, in that order. Numeric ranges are re-observed on the subset.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let mut ds = Self {
            features: self.features.select(Axis(0), indices),
            targets: self.targets.select(Axis(0), indices),
            specs: self.specs.clone(),
            active_index: self.active_index,
        };
        ds.refresh_ranges();
        Ok(ds)
    }

    /// Recomputes observed min/max of every numeric feature.
    pub fn refresh_ranges(&mut self) {
        for (i, spec) in self.specs.iter_mut().enumerate() {
            if spec.is_categorical() {
                continue;
            }
            let col = self.features.column(i);
            let (lo, hi) = col.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            });
            spec.observed_min = lo;
            spec.observed_max = hi;
        }
    }

    pub(crate) fn replace_features(&mut self, features: Array2<T>) {
        debug_assert_eq!(features.dim(), self.features.dim());
        self.features = features;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny() -> Dataset<f64> {
        Dataset::from_observed(
            array![[1.0, 10.0], [2.0, 30.0], [3.0, 20.0]],
            array![0.0, 1.0, 2.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn observed_ranges() {
        let ds = tiny();
        assert_eq!(ds.specs()[1].observed_min, 10.0);
        assert_eq!(ds.specs()[1].observed_max, 30.0);
        assert_eq!(ds.specs()[1].range(), 20.0);
    }

    #[test]
    fn passive_excludes_active() {
        let ds = tiny().with_active_name("b").unwrap();
        assert_eq!(ds.active_index(), Some(1));
        assert_eq!(ds.passive_indices(), vec![0]);
        assert!(matches!(
            tiny().with_active_name("zz"),
            Err(Error::UnknownFeature(_))
        ));
    }

    #[test]
    fn subset_reobserves() {
        let sub = tiny().subset(&[0, 2]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.specs()[1].observed_max, 20.0);
        assert_eq!(sub.targets().to_vec(), vec![0.0, 2.0]);
    }

    #[test]
    fn rejects_mismatched_lengths_and_nan() {
        let r = Dataset::<f64>::from_observed(array![[1.0]], array![1.0, 2.0], vec!["a".into()]);
        assert!(r.is_err());
        let r = Dataset::<f64>::from_observed(array![[f64::NAN]], array![1.0], vec!["a".into()]);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
