//! Response curves: sweep the active feature over a grid while every
//! passive feature stays at the sample's value, then remove the vertical
//! offset by subtracting the curve minimum.

use ndarray::{Array2, ArrayView2};

use crate::data::{Dataset, Sample, SyntheticFunction};
use crate::error::{Error, Result};
use crate::regressor::Mlp;
use crate::scalar::Scalar;

/// Anything that maps a batch of input rows to scalar responses.
pub trait ResponseModel<T: Scalar>: Sync {
    fn input_dim(&self) -> usize;

    /// One prediction per row of `inputs` (`rows x input_dim`).
    fn predict_rows(&self, inputs: ArrayView2<'_, T>) -> Result<Vec<T>>;
}

impl<T: Scalar> ResponseModel<T> for Mlp<T> {
    fn input_dim(&self) -> usize {
        Mlp::input_dim(self)
    }

    fn predict_rows(&self, inputs: ArrayView2<'_, T>) -> Result<Vec<T>> {
        Ok(self.predict_batch(inputs)?.to_vec())
    }
}

impl<T: Scalar, M: ResponseModel<T> + ?Sized> ResponseModel<T> for &M {
    fn input_dim(&self) -> usize {
        (**self).input_dim()
    }

    fn predict_rows(&self, inputs: ArrayView2<'_, T>) -> Result<Vec<T>> {
        (**self).predict_rows(inputs)
    }
}

/// Wraps a model and multiplies every response by `factor`.
#[derive(Debug, Clone)]
pub struct Rescaled<T, M> {
    pub model: M,
    pub factor: T,
}

impl<T: Scalar, M: ResponseModel<T>> ResponseModel<T> for Rescaled<T, M> {
    fn input_dim(&self) -> usize {
        self.model.input_dim()
    }

    fn predict_rows(&self, inputs: ArrayView2<'_, T>) -> Result<Vec<T>> {
        let factor = self.factor;
        Ok(self.model.predict_rows(inputs)?.into_iter().map(|v| v * factor).collect())
    }
}

impl<T: Scalar> ResponseModel<T> for SyntheticFunction {
    fn input_dim(&self) -> usize {
        5
    }

    fn predict_rows(&self, inputs: ArrayView2<'_, T>) -> Result<Vec<T>> {
        if inputs.ncols() != 5 {
            return Err(Error::DimensionMismatch {
                expected: 5,
                found: inputs.ncols(),
            });
        }
        Ok(inputs
            .rows()
            .into_iter()
            .map(|r| {
                let x = [r[0], r[1], r[2], r[3], r[4]];
                self.evaluate(&x)
            })
            .collect())
    }
}

/// Strictly ascending values of the active feature.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveGrid<T> {
    active_index: usize,
    values: Vec<T>,
}

impl<T: Scalar> CurveGrid<T> {
    /// `size` equally spaced points from `min` to `max`, endpoints exact.
    pub fn linspace(active_index: usize, min: T, max: T, size: usize) -> Result<Self> {
        if size < 2 {
            return Err(Error::InvalidConfig(format!("grid size {size}; need at least 2")));
        }
        if !(min < max) {
            return Err(Error::InvalidConfig(format!("empty grid range [{min}, {max}]")));
        }
        let last = T::from_usize_lossy(size - 1);
        let mut values: Vec<T> = (0..size)
            .map(|g| min + (max - min) * (T::from_usize_lossy(g) / last))
            .collect();
        values[size - 1] = max;
        Self::from_values(active_index, values)
    }

    pub fn from_values(active_index: usize, values: Vec<T>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidConfig("grid needs at least 2 points".into()));
        }
        if values.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidConfig("grid must be strictly ascending".into()));
        }
        Ok(Self { active_index, values })
    }

    pub fn active_index(&self) -> usize {
        self.active_index
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Grid over the observed range of feature `active_index` of `dataset`.
pub fn make_grid<T: Scalar>(dataset: &Dataset<T>, active_index: usize, size: usize) -> Result<CurveGrid<T>> {
    let spec = dataset.specs().get(active_index).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "active index {active_index} out of range for {} features",
            dataset.n_features()
        ))
    })?;
    if spec.is_categorical() {
        return Err(Error::CategoricalActive(spec.name.clone()));
    }
    if spec.range() <= T::zero() {
        return Err(Error::ConstantActive(spec.name.clone()));
    }
    CurveGrid::linspace(active_index, spec.observed_min, spec.observed_max, size)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResponseCurve<T> {
    pub values: Vec<T>,
    pub sample_index: usize,
    pub aligned: bool,
}

/// Predicted responses of `features` with the active coordinate replaced by
/// each of `active_values` in turn. Grid order is preserved.
pub fn sweep<T: Scalar, M: ResponseModel<T> + ?Sized>(
    model: &M,
    features: &[T],
    active_index: usize,
    active_values: &[T],
) -> Result<Vec<T>> {
    check_dim(model, features.len())?;
    let x = sweep_matrix(std::slice::from_ref(&features), active_index, active_values);
    model.predict_rows(x.view())
}

fn sweep_matrix<T: Scalar, R: AsRef<[T]>>(rows: &[R], active_index: usize, active_values: &[T]) -> Array2<T> {
    let n = rows.first().map_or(0, |r| r.as_ref().len());
    let g = active_values.len();
    let mut x = Array2::<T>::zeros((rows.len() * g, n));
    for (j, row) in rows.iter().enumerate() {
        let row = row.as_ref();
        for (k, &v) in active_values.iter().enumerate() {
            let mut out = x.row_mut(j * g + k);
            for (o, &f) in out.iter_mut().zip(row) {
                *o = f;
            }
            out[active_index] = v;
        }
    }
    x
}

fn check_dim<T: Scalar, M: ResponseModel<T> + ?Sized>(model: &M, n: usize) -> Result<()> {
    if n != model.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.input_dim(),
            found: n,
        });
    }
    Ok(())
}

/// Unaligned response curve of `sample` over `grid`.
pub fn response_curve<T: Scalar, M: ResponseModel<T> + ?Sized>(
    model: &M,
    sample: &Sample<T>,
    grid: &CurveGrid<T>,
) -> Result<ResponseCurve<T>> {
    let values = sweep(model, &sample.features, grid.active_index, &grid.values)?;
    Ok(ResponseCurve {
        values,
        sample_index: sample.index,
        aligned: false,
    })
}

/// Aligned curves for many feature vectors, evaluated in one batch.
pub fn aligned_curves<T: Scalar, M: ResponseModel<T> + ?Sized, R: AsRef<[T]>>(
    model: &M,
    rows: &[R],
    grid: &CurveGrid<T>,
) -> Result<Vec<Vec<T>>> {
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    for r in rows {
        check_dim(model, r.as_ref().len())?;
    }
    let x = sweep_matrix(rows, grid.active_index, &grid.values);
    let y = model.predict_rows(x.view())?;
    Ok(y.chunks(grid.len()).map(align_values).collect())
}

/// Subtracts the minimum; the result's minimum is exactly zero.
pub fn align<T: Scalar>(curve: &ResponseCurve<T>) -> ResponseCurve<T> {
    ResponseCurve {
        values: align_values(&curve.values),
        sample_index: curve.sample_index,
        aligned: true,
    }
}

pub fn align_values<T: Scalar>(values: &[T]) -> Vec<T> {
    let min = values.iter().copied().fold(T::infinity(), T::min);
    values.iter().map(|&v| v - min).collect()
}

/// Aligned curves of every dataset sample over a shared grid.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet<T> {
    pub grid: CurveGrid<T>,
    pub curves: Vec<ResponseCurve<T>>,
}

impl<T: Scalar> CurveSet<T> {
    pub fn len(&self) -> usize {
        self.curves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.curves.is_empty()
    }

    /// `N x G` matrix of curve values.
    pub fn to_matrix(&self) -> Array2<T> {
        let g = self.grid.len();
        let mut m = Array2::zeros((self.curves.len(), g));
        for (mut row, c) in m.rows_mut().into_iter().zip(&self.curves) {
            for (o, &v) in row.iter_mut().zip(&c.values) {
                *o = v;
            }
        }
        m
    }
}

const CURVE_BATCH: usize = 64;

pub fn curve_set<T: Scalar, M: ResponseModel<T> + ?Sized>(
    model: &M,
    dataset: &Dataset<T>,
    grid: &CurveGrid<T>,
) -> Result<CurveSet<T>> {
    check_dim(model, dataset.n_features())?;
    let x = dataset.features();
    let mut curves = Vec::with_capacity(dataset.len());
    let indices: Vec<usize> = (0..dataset.len()).collect();
    for chunk in indices.chunks(CURVE_BATCH) {
        let rows: Vec<Vec<T>> = chunk.iter().map(|&j| x.row(j).to_vec()).collect();
        for (&j, values) in chunk.iter().zip(aligned_curves(model, &rows, grid)?) {
            curves.push(ResponseCurve {
                values,
                sample_index: j,
                aligned: true,
            });
        }
    }
    Ok(CurveSet {
        grid: grid.clone(),
        curves,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{generate_synthetic, SYNTHETIC_FEATURES};
    use crate::scalar::sigmoid;
    use ndarray::array;
    use proptest::prelude::*;

    /// Returns the value of one input coordinate.
    struct Coordinate(usize, usize);

    impl ResponseModel<f64> for Coordinate {
        fn input_dim(&self) -> usize {
            self.1
        }
        fn predict_rows(&self, inputs: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
            Ok(inputs.column(self.0).to_vec())
        }
    }

    fn unit_dataset() -> Dataset<f64> {
        Dataset::from_observed(
            array![[0.0, 5.0], [1.0, 6.0], [0.5, 7.0]],
            array![0.0, 0.0, 0.0],
            vec!["a".into(), "b".into()],
        )
        .unwrap()
    }

    #[test]
    fn grid_linspace() {
        let g = make_grid(&unit_dataset(), 0, 5).unwrap();
        assert_eq!(g.values(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
        let g = make_grid(&unit_dataset(), 1, 2).unwrap();
        assert_eq!(g.values(), &[5.0, 7.0]);
        assert!(make_grid(&unit_dataset(), 0, 1).is_err());
    }

    #[test]
    fn grid_rejects_constant_and_categorical() {
        let ds = Dataset::from_observed(array![[2.0], [2.0]], array![0.0, 1.0], vec!["c".into()]).unwrap();
        assert!(matches!(make_grid(&ds, 0, 10), Err(Error::ConstantActive(_))));

        let specs = vec![crate::data::FeatureSpec::categorical("k", vec!["a".into(), "b".into()])];
        let ds = Dataset::new(array![[0.0], [1.0]], array![0.0, 1.0], specs).unwrap();
        assert!(matches!(make_grid(&ds, 0, 10), Err(Error::CategoricalActive(_))));
    }

    #[test]
    fn identity_model_reproduces_grid() {
        let ds = unit_dataset();
        let g = make_grid(&ds, 0, 11).unwrap();
        let c = response_curve(&Coordinate(0, 2), &ds.sample(1), &g).unwrap();
        assert_eq!(c.values, g.values());
        assert!(!c.aligned);
    }

    #[test]
    fn active_value_is_overwritten() {
        let m = Mlp::<f64>::random(2, &[6], crate::regressor::Activation::Tanh, 3);
        let g = CurveGrid::linspace(0, 0.0, 1.0, 9).unwrap();
        let a = response_curve(&m, &Sample::new(0, vec![0.1, 0.4]), &g).unwrap();
        let b = response_curve(&m, &Sample::new(1, vec![0.9, 0.4]), &g).unwrap();
        assert_eq!(a.values, b.values);
    }

    #[test]
    fn synthetic_oracle_curve() {
        let g = CurveGrid::<f64>::linspace(0, 0.0, 1.0, 100).unwrap();
        let s = Sample::new(0, vec![0.3, 0.0, 1.0, 1.0, 0.0]);
        let c = response_curve(&SyntheticFunction::raw(), &s, &g).unwrap();
        for (v, t) in c.values.iter().zip(g.values()) {
            assert!((v - sigmoid(10.0 * t - 5.0)).abs() < 1e-15_f64);
        }
    }

    #[test]
    fn align_examples() {
        let c = ResponseCurve { values: vec![3.0, 4.0, 5.0], sample_index: 0, aligned: false };
        assert_eq!(align(&c).values, vec![0.0, 1.0, 2.0]);
        let flat = ResponseCurve { values: vec![7.0, 7.0], sample_index: 0, aligned: false };
        assert_eq!(align(&flat).values, vec![0.0, 0.0]);
        assert!(align(&flat).aligned);
    }

    #[test]
    fn curve_set_contract() {
        let ds = generate_synthetic::<f64>(3, 1).unwrap();
        let g = make_grid(&ds, 0, 20).unwrap();
        let set = curve_set(&SyntheticFunction::raw(), &ds, &g).unwrap();
        assert_eq!(set.len(), 3);
        for (j, c) in set.curves.iter().enumerate() {
            assert_eq!(c.sample_index, j);
            assert_eq!(c.values.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
            let direct = align(&response_curve(&SyntheticFunction::raw(), &ds.sample(j), &g).unwrap());
            assert_eq!(direct.values, c.values);
        }
        assert_eq!(set.to_matrix().dim(), (3, 20));
    }

    #[test]
    fn x5_only_variation_is_removed_by_alignment() {
        // same x1..x4, x5 varied: the oracle adds 10 x5, a pure vertical shift
        let rows: Vec<Vec<f64>> = [0.0, 0.37, 1.21, 2.0]
            .iter()
            .map(|&x5| vec![0.4, -1.2, 1.7, 1.3, x5])
            .collect();
        let x = ndarray::Array2::from_shape_vec((4, 5), rows.concat()).unwrap();
        let ds = Dataset::from_observed(x, ndarray::Array1::zeros(4), SYNTHETIC_FEATURES.iter().map(|s| s.to_string()).collect()).unwrap();
        let g = CurveGrid::linspace(0, 0.0, 1.0, 100).unwrap();
        let set = curve_set(&SyntheticFunction::raw(), &ds, &g).unwrap();
        for c in &set.curves[1..] {
            for (a, b) in c.values.iter().zip(&set.curves[0].values) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn reversed_grid_reverses_curve() {
        let m = Mlp::<f64>::random(3, &[7], crate::regressor::Activation::Relu, 8);
        let grid: Vec<f64> = (0..25).map(|g| g as f64 / 24.0).collect();
        let rev: Vec<f64> = grid.iter().rev().copied().collect();
        let f = [0.2, 0.5, 0.9];
        let mut fwd = sweep(&m, &f, 1, &grid).unwrap();
        let back = sweep(&m, &f, 1, &rev).unwrap();
        fwd.reverse();
        assert_eq!(fwd, back);
    }

    fn dyadic() -> impl Strategy<Value = f64> {
        (-(1i64 << 20)..(1i64 << 20)).prop_map(|k| k as f64 / 1024.0)
    }

    proptest! {
        // Values and shifts are dyadic with bounded magnitude, so every
        // subtraction below is exact and equality can be asserted bitwise.
        #[test]
        fn align_is_idempotent_and_shift_invariant(
            values in proptest::collection::vec(dyadic(), 2..50),
            c in dyadic(),
        ) {
            let curve = ResponseCurve { values: values.clone(), sample_index: 0, aligned: false };
            let once = align(&curve);
            prop_assert_eq!(&align(&once).values, &once.values);
            let shifted = ResponseCurve { values: values.iter().map(|v| v + c).collect(), sample_index: 0, aligned: false };
            prop_assert_eq!(&align(&shifted).values, &once.values);
            prop_assert_eq!(once.values.iter().copied().fold(f64::INFINITY, f64::min), 0.0);
        }

        #[test]
        fn align_preserves_pairwise_differences(values in proptest::collection::vec(-1e3f64..1e3, 2..30)) {
            let a = align_values(&values);
            for i in 1..values.len() {
                let d0: f64 = values[i] - values[0];
                let d1: f64 = a[i] - a[0];
                prop_assert!((d0 - d1).abs() <= 1e-12 * (1.0 + d0.abs()) * 1e3);
            }
        }
    }
}
