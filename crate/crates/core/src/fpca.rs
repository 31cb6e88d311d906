//! Functional PCA of aligned curves sampled on a shared grid.
//!
//! Curves are treated as functions under the trapezoidal inner product
//! `<u, v> = sum_g w_g u_g v_g`. The centered curve matrix is scaled
//! column-wise by `sqrt(w)` and decomposed by SVD; right singular vectors
//! divided by `sqrt(w)` are the eigenfunctions.

use log::warn;
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::curves::{CurveSet, ResponseCurve};
use crate::error::{Error, Result};
use crate::linalg::thin_svd;
use crate::scalar::Scalar;

/// Cumulative explained variance the retained components should reach.
pub const VARIANCE_TARGET: f64 = 0.995;

pub const DEFAULT_COMPONENTS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScoreVector<T>(pub Vec<T>);

impl<T: Scalar> ScoreVector<T> {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Euclidean distance between two score vectors.
pub fn distance<T: Scalar>(a: &ScoreVector<T>, b: &ScoreVector<T>) -> Result<T> {
    if a.len() != b.len() {
        return Err(Error::ScoreLengthMismatch(a.len(), b.len()));
    }
    Ok(a.0
        .iter()
        .zip(&b.0)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpcaModel<T> {
    pub mean_curve: Vec<T>,
    /// `K` eigenfunctions, each of grid length.
    pub eigenfunctions: Vec<Vec<T>>,
    /// Descending; sample covariance convention (`N - 1` divisor).
    pub eigenvalues: Vec<T>,
    pub explained_variance_ratio: Vec<T>,
    pub weights: Vec<T>,
}

/// Trapezoidal quadrature weights for an ascending grid.
pub fn trapezoid_weights<T: Scalar>(grid: &[T]) -> Vec<T> {
    let g = grid.len();
    let half = T::lit(0.5);
    (0..g)
        .map(|i| {
            let left = if i > 0 { grid[i] - grid[i - 1] } else { T::zero() };
            let right = if i + 1 < g { grid[i + 1] - grid[i] } else { T::zero() };
            (left + right) * half
        })
        .collect()
}

pub fn fit<T: Scalar>(curves: &CurveSet<T>, k: usize) -> Result<FpcaModel<T>> {
    fit_matrix(curves.to_matrix().view(), curves.grid.values(), k)
}

/// Fits on an `N x G` matrix of curve values sampled on `grid`.
pub fn fit_matrix<T: Scalar>(values: ArrayView2<'_, T>, grid: &[T], k: usize) -> Result<FpcaModel<T>> {
    let (n, g) = values.dim();
    if g != grid.len() {
        return Err(Error::GridMismatch {
            expected: grid.len(),
            found: g,
        });
    }
    if k == 0 {
        return Err(Error::InvalidConfig("number of components must be >= 1".into()));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} curves for {k} components")));
    }
    if k > g {
        return Err(Error::InvalidConfig(format!("{k} components exceed {g} grid points")));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("curve values".into()));
    }

    let weights = trapezoid_weights(grid);
    let sqrt_w: Vec<T> = weights.iter().map(|w| w.sqrt()).collect();
    // running mean: exact when all curves agree at a grid point
    let mut mean = vec![T::zero(); g];
    for (j, row) in values.rows().into_iter().enumerate() {
        let inv = T::one() / T::from_usize_lossy(j + 1);
        for (m, &v) in mean.iter_mut().zip(row) {
            *m += (v - *m) * inv;
        }
    }

    let mut centered = Array2::<T>::zeros((n, g));
    for (mut out, row) in centered.rows_mut().into_iter().zip(values.rows()) {
        for c in 0..g {
            out[c] = (row[c] - mean[c]) * sqrt_w[c];
        }
    }
    let svd = thin_svd(centered.view());
    let energy: Vec<T> = svd.singular_values.iter().map(|&s| s * s).collect();
    let total: T = energy.iter().copied().sum();
    let dof = T::from_usize_lossy(n.saturating_sub(1).max(1));

    let mut eigenfunctions = Vec::with_capacity(k);
    let mut eigenvalues = Vec::with_capacity(k);
    let mut ratios = Vec::with_capacity(k);
    for comp in 0..k {
        let mut xi: Vec<T> = (0..g).map(|c| svd.v[[c, comp]] / sqrt_w[c]).collect();
        let pivot = xi
            .iter()
            .copied()
            .fold(T::zero(), |best, v| if v.abs() > best.abs() { v } else { best });
        if pivot < T::zero() {
            xi.iter_mut().for_each(|v| *v = -*v);
        }
        eigenfunctions.push(xi);
        eigenvalues.push(energy[comp] / dof);
        ratios.push(if total > T::zero() { energy[comp] / total } else { T::zero() });
    }

    let model = FpcaModel {
        mean_curve: mean,
        eigenfunctions,
        eigenvalues,
        explained_variance_ratio: ratios,
        weights,
    };
    let cumulative = model.cumulative_explained().as_f64();
    if cumulative < VARIANCE_TARGET {
        warn!(
            "{k} functional components explain {:.4} of the variance (below {VARIANCE_TARGET})",
            cumulative
        );
    }
    Ok(model)
}

impl<T: Scalar> FpcaModel<T> {
    pub fn n_components(&self) -> usize {
        self.eigenfunctions.len()
    }

    pub fn grid_len(&self) -> usize {
        self.mean_curve.len()
    }

    pub fn cumulative_explained(&self) -> T {
        self.explained_variance_ratio.iter().copied().sum()
    }

    /// Weighted inner product on the model's grid.
    pub fn inner(&self, a: &[T], b: &[T]) -> T {
        self.weights
            .iter()
            .zip(a.iter().zip(b))
            .map(|(&w, (&x, &y))| w * x * y)
            .sum()
    }

    pub fn project(&self, curve: &ResponseCurve<T>) -> Result<ScoreVector<T>> {
        self.project_values(&curve.values)
    }

    pub fn project_values(&self, values: &[T]) -> Result<ScoreVector<T>> {
        if values.len() != self.grid_len() {
            return Err(Error::GridMismatch {
                expected: self.grid_len(),
                found: values.len(),
            });
        }
        let scores = self
            .eigenfunctions
            .iter()
            .map(|xi| {
                values
                    .iter()
                    .zip(&self.mean_curve)
                    .zip(xi.iter().zip(&self.weights))
                    .map(|((&c, &m), (&e, &w))| w * (c - m) * e)
                    .sum()
            })
            .collect();
        Ok(ScoreVector(scores))
    }

    /// `mean + sum_k v_k xi_k`
    pub fn reconstruct(&self, scores: &ScoreVector<T>) -> Result<Vec<T>> {
        if scores.len() != self.n_components() {
            return Err(Error::ScoreLengthMismatch(scores.len(), self.n_components()));
        }
        let mut out = self.mean_curve.clone();
        for (xi, &v) in self.eigenfunctions.iter().zip(&scores.0) {
            for (o, &e) in out.iter_mut().zip(xi) {
                *o += v * e;
            }
        }
        Ok(out)
    }

    /// `max |<xi_i, xi_j> - delta_ij|`
    pub fn orthonormality_residual(&self) -> T {
        let k = self.n_components();
        let mut worst = T::zero();
        for i in 0..k {
            for j in 0..k {
                let d = if i == j { T::one() } else { T::zero() };
                let ip = self.inner(&self.eigenfunctions[i], &self.eigenfunctions[j]);
                worst = worst.max((ip - d).abs());
            }
        }
        worst
    }
}
