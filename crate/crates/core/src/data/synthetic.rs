use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{Dataset, FeatureSpec, NormalizationParams};
use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

pub const SYNTHETIC_FEATURES: [&str; 5] = ["x1", "x2", "x3", "x4", "x5"];

/// Sampling supports of `x1`..`x5`.
pub const SYNTHETIC_BOUNDS: [(f64, f64); 5] = [(0.0, 1.0), (-3.0, 3.0), (1.0, 2.0), (1.0, 2.0), (0.0, 2.0)];

/// `y = sigmoid((10 x1 - 5) + x2) * x3^2 * x4 + 10 x5`
///
/// `x` must hold at least five values; extra values are ignored.
#[inline]
pub fn synthetic_response<T: Scalar>(x: &[T]) -> T {
    let ten = T::lit(10.0);
    let shape = sigmoid((ten * x[0] - T::lit(5.0)) + x[1]);
    shape * x[2] * x[2] * x[3] + ten * x[4]
}

/// Noise-free synthetic benchmark with `x1` as the active feature.
pub fn generate_synthetic<T: Scalar>(count: usize, seed: u64) -> Result<Dataset<T>> {
    generate(count, seed, None)
}

/// As [`generate_synthetic`] with additive Gaussian noise on the targets.
pub fn generate_synthetic_with_noise<T: Scalar>(
    count: usize,
    seed: u64,
    noise_std: f64,
) -> Result<Dataset<T>> {
    if !(noise_std >= 0.0 && noise_std.is_finite()) {
        return Err(Error::InvalidConfig(format!("noise std {noise_std} must be >= 0")));
    }
    generate(count, seed, Some(noise_std))
}

fn generate<T: Scalar>(count: usize, seed: u64, noise_std: Option<f64>) -> Result<Dataset<T>> {
    if count == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // separate stream so the noise flag leaves the feature draws untouched
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let noise = match noise_std {
        Some(s) if s > 0.0 => Some(Normal::new(0.0, s).expect("validated std")),
        _ => None,
    };
    let n = SYNTHETIC_BOUNDS.len();
    let mut features = Array2::<T>::zeros((count, n));
    let mut targets = Array1::<T>::zeros(count);
    for j in 0..count {
        let mut row = features.row_mut(j);
        for (i, &(lo, hi)) in SYNTHETIC_BOUNDS.iter().enumerate() {
            row[i] = T::lit(rng.gen_range(lo..hi));
        }
        let x = row.to_vec();
        let mut y = synthetic_response(&x);
        if let Some(dist) = &noise {
            y += T::lit(dist.sample(&mut noise_rng));
        }
        targets[j] = y;
    }
    let specs = SYNTHETIC_FEATURES
        .iter()
        .zip(SYNTHETIC_BOUNDS)
        .map(|(name, (lo, hi))| FeatureSpec::numeric(*name, T::lit(lo), T::lit(hi)))
        .collect();
    let mut ds = Dataset::new(features, targets, specs)?;
    ds.set_active(0)?;
    Ok(ds)
}

/// The closed-form synthetic function, usable wherever a trained model is.
///
/// When `normalization` is set, inputs are taken to be min-max normalized
/// and are mapped back to raw feature units before evaluation.
#[derive(Debug, Clone, Default)]
pub struct SyntheticFunction {
    pub normalization: Option<NormalizationParams>,
}

impl SyntheticFunction {
    pub fn raw() -> Self {
        Self { normalization: None }
    }

    pub fn on_normalized(params: NormalizationParams) -> Self {
        Self {
            normalization: Some(params),
        }
    }

    pub fn evaluate<T: Scalar>(&self, x: &[T]) -> T {
        match &self.normalization {
            None => synthetic_response(x),
            Some(p) => {
                let mut raw = [T::zero(); 5];
                for (i, r) in raw.iter_mut().enumerate() {
                    *r = p.invert_value(i, x[i]);
                }
                synthetic_response(&raw)
            }
        }
    }
}
