//! Thin singular value decomposition by one-sided (Hestenes) Jacobi rotations.

use ndarray::{Array1, Array2, ArrayView2};

use crate::scalar::Scalar;

#[derive(Debug, Clone)]
pub struct Svd<T> {
    /// `m x r`, orthonormal columns.
    pub u: Array2<T>,
    /// `r`, descending.
    pub singular_values: Array1<T>,
    /// `n x r`, orthonormal columns.
    pub v: Array2<T>,
}

const MAX_SWEEPS: usize = 60;

/// Thin SVD `a = u diag(s) v^T` with `r = min(m, n)`.
pub fn thin_svd<T: Scalar>(a: ArrayView2<'_, T>) -> Svd<T> {
    let (m, n) = a.dim();
    if m < n {
        let t = thin_svd(a.t());
        return Svd {
            u: t.v,
            singular_values: t.singular_values,
            v: t.u,
        };
    }
    // Columns of `a` are stored as contiguous rows of `w` (n x m).
    let mut w: Vec<Vec<T>> = (0..n).map(|j| a.column(j).to_vec()).collect();
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|j| (0..n).map(|i| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let tol = T::epsilon() * T::from_usize_lossy(m).sqrt();

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in p + 1..n {
                let (alpha, beta, gamma) = {
                    let (cp, cq) = (&w[p], &w[q]);
                    let mut alpha = T::zero();
                    let mut beta = T::zero();
                    let mut gamma = T::zero();
                    for (&x, &y) in cp.iter().zip(cq) {
                        alpha += x * x;
                        beta += y * y;
                        gamma += x * y;
                    }
                    (alpha, beta, gamma)
                };
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (T::lit(2.0) * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate(&mut w, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = w.iter().map(|c| c.iter().map(|&x| x * x).sum::<T>().sqrt()).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal).then(i.cmp(&j)));

    let mut u = Array2::zeros((m, n));
    let mut vv = Array2::zeros((n, n));
    let mut s = Array1::zeros(n);
    for (k, &j) in order.iter().enumerate() {
        s[k] = norms[j];
        if norms[j] > T::zero() {
            for i in 0..m {
                u[[i, k]] = w[j][i] / norms[j];
            }
        }
        for i in 0..n {
            vv[[i, k]] = v[j][i];
        }
    }
    complete_basis(&mut u, &s);
    Svd {
        u,
        singular_values: s,
        v: vv,
    }
}

/// Replaces the columns of `u` that belong to zero singular values with
/// unit vectors orthogonal to every other column (Gram-Schmidt against the
/// canonical basis).
fn complete_basis<T: Scalar>(u: &mut Array2<T>, s: &Array1<T>) {
    let (m, r) = u.dim();
    let mut filled: Vec<bool> = s.iter().map(|&v| v > T::zero()).collect();
    let mut next_basis = 0;
    for k in 0..r {
        if filled[k] {
            continue;
        }
        while next_basis < m {
            let mut cand = Array1::<T>::zeros(m);
            cand[next_basis] = T::one();
            next_basis += 1;
            for _ in 0..2 {
                for j in (0..r).filter(|&j| filled[j]) {
                    let col = u.column(j);
                    let proj = col.dot(&cand);
                    cand.scaled_add(-proj, &col);
                }
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > T::lit(0.5) {
                u.column_mut(k).assign(&(cand / norm));
                filled[k] = true;
                break;
            }
        }
    }
}

fn rotate<T: Scalar>(cols: &mut [Vec<T>], p: usize, q: usize, c: T, s: T) {
    let (lo, hi) = cols.split_at_mut(q);
    let (cp, cq) = (&mut lo[p], &mut hi[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (a, b) = (*x, *y);
        *x = c * a - s * b;
        *y = s * a + c * b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(m: usize, n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_simple_fn((m, n), || rng.gen_range(-1.0..1.0))
    }

    fn check(a: &Array2<f64>) {
        let svd = thin_svd(a.view());
        let r = a.nrows().min(a.ncols());
        assert_eq!(svd.singular_values.len(), r);
        let recon = svd.u.dot(&Array2::from_diag(&svd.singular_values)).dot(&svd.v.t());
        let err = (&recon - a).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12, "reconstruction {err}");
        let vtv = svd.v.t().dot(&svd.v);
        let utu = svd.u.t().dot(&svd.u);
        for i in 0..r {
            for j in 0..r {
                let d = if i == j { 1.0 } else { 0.0 };
                assert!((vtv[[i, j]] - d).abs() < 1e-12);
                assert!((utu[[i, j]] - d).abs() < 1e-10);
            }
        }
        assert!(svd.singular_values.windows(2).into_iter().all(|w| w[0] >= w[1]));
    }

    #[test]
    fn tall_wide_square() {
        check(&random(40, 7, 1));
        check(&random(6, 13, 2));
        check(&random(9, 9, 3));
    }

    #[test]
    fn rank_deficient() {
        let a = random(30, 1, 4);
        let b = random(1, 8, 5);
        let m = a.dot(&b);
        check(&m);
        let svd = thin_svd(m.view());
        assert!(svd.singular_values[1] < 1e-12 * svd.singular_values[0]);
    }

    #[test]
    fn known_singular_values() {
        // diag(3, 2) embedded in a 3x2 matrix
        let a: Array2<f64> = ndarray::array![[0.0, 2.0], [3.0, 0.0], [0.0, 0.0]];
        let svd = thin_svd(a.view());
        assert!((svd.singular_values[0] - 3.0).abs() < 1e-15);
        assert!((svd.singular_values[1] - 2.0).abs() < 1e-15);
    }

    #[test]
    fn zero_matrix() {
        let a = Array2::<f64>::zeros((5, 3));
        let svd = thin_svd(a.view());
        assert!(svd.singular_values.iter().all(|&s| s == 0.0));
        check(&a);
    }
}
