use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSplit {
    /// 1-based fold number.
    pub fold_id: usize,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

pub fn kfold_split<T: Scalar>(dataset: &Dataset<T>, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    kfold_indices(dataset.len(), k, seed)
}

/// Shuffled partition of `0..n` into `k` validation blocks whose sizes
/// differ by at most one; the first `n % k` blocks take the extra index.
pub fn kfold_indices(n: usize, k: usize, seed: u64) -> Result<Vec<FoldSplit>> {
    if k < 2 {
        return Err(Error::InvalidConfig(format!("k = {k}; need at least 2 folds")));
    }
    if n < k {
        return Err(Error::InsufficientData(format!("{n} samples for {k} folds")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let base = n / k;
    let extra = n % k;
    let mut folds = Vec::with_capacity(k);
    let mut start = 0;
    for f in 0..k {
        let size = base + usize::from(f < extra);
        let mut validation = order[start..start + size].to_vec();
        let mut train: Vec<usize> = order[..start]
            .iter()
            .chain(&order[start + size..])
            .copied()
            .collect();
        validation.sort_unstable();
        train.sort_unstable();
        folds.push(FoldSplit {
            fold_id: f + 1,
            train_indices: train,
            validation_indices: validation,
        });
        start += size;
    }
    Ok(folds)
}
