use std::cmp::Ordering;

use super::ObjectiveTriple;
use crate::scalar::Scalar;

/// Fast non-dominated sorting. Returns fronts of indices into `points`,
/// best front first, each front in ascending index order.
pub fn non_dominated_sort<T: Scalar>(points: &[ObjectiveTriple<T>]) -> Vec<Vec<usize>> {
    let n = points.len();
    let mut dominated_by_me: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut domination_count = vec![0usize; n];
    for p in 0..n {
        for q in p + 1..n {
            if points[p].dominates(&points[q]) {
                dominated_by_me[p].push(q);
                domination_count[q] += 1;
            } else if points[q].dominates(&points[p]) {
                dominated_by_me[q].push(p);
                domination_count[p] += 1;
            }
        }
    }
    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| domination_count[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &p in &current {
            for &q in &dominated_by_me[p] {
                domination_count[q] -= 1;
                if domination_count[q] == 0 {
                    next.push(q);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front. Boundary members of every
/// objective get `+inf`; gaps are normalized by the objective's range and
/// objectives with zero range contribute nothing.
pub fn crowding_distance<T: Scalar>(front: &[ObjectiveTriple<T>]) -> Vec<T> {
    let n = front.len();
    if n <= 2 {
        return vec![T::infinity(); n];
    }
    let mut dist = vec![T::zero(); n];
    let values: Vec<[T; 3]> = front.iter().map(ObjectiveTriple::as_array).collect();
    for m in 0..3 {
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            values[a][m]
                .partial_cmp(&values[b][m])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        let lo = values[order[0]][m];
        let hi = values[order[n - 1]][m];
        dist[order[0]] = T::infinity();
        dist[order[n - 1]] = T::infinity();
        let range = hi - lo;
        if range <= T::zero() {
            continue;
        }
        for w in 1..n - 1 {
            let i = order[w];
            if dist[i].is_finite() {
                dist[i] += (values[order[w + 1]][m] - values[order[w - 1]][m]) / range;
            }
        }
    }
    dist
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn t(g1: f64, g2: usize, g3: f64) -> ObjectiveTriple<f64> {
        ObjectiveTriple::new(g1, g2, g3)
    }

    /// Peels off the set of points no remaining point dominates.
    fn brute_force_fronts(points: &[ObjectiveTriple<f64>]) -> Vec<Vec<usize>> {
        let mut remaining: Vec<usize> = (0..points.len()).collect();
        let mut fronts = Vec::new();
        while !remaining.is_empty() {
            let front: Vec<usize> = remaining
                .iter()
                .copied()
                .filter(|&i| !remaining.iter().any(|&j| points[j].dominates(&points[i])))
                .collect();
            remaining.retain(|i| !front.contains(i));
            fronts.push(front);
        }
        fronts
    }

    #[test]
    fn examples() {
        assert_eq!(non_dominated_sort(&[t(1.0, 1, 1.0), t(2.0, 2, 2.0)]), vec![vec![0], vec![1]]);
        assert_eq!(non_dominated_sort(&[t(1.0, 2, 1.0), t(2.0, 1, 1.0)]), vec![vec![0, 1]]);
        assert!(non_dominated_sort::<f64>(&[]).is_empty());
    }

    #[test]
    fn crowding_boundaries() {
        let two = crowding_distance(&[t(0.0, 1, 0.0), t(1.0, 0, 1.0)]);
        assert!(two.iter().all(|d| d.is_infinite()));
        let line = crowding_distance(&[t(0.0, 0, 0.0), t(0.5, 1, 0.5), t(1.0, 2, 1.0)]);
        assert!(line[0].is_infinite() && line[2].is_infinite());
        assert!((line[1] - 3.0).abs() < 1e-12);
        // g2 constant: contributes nothing
        let flat = crowding_distance(&[t(0.0, 1, 0.0), t(0.25, 1, 0.5), t(1.0, 1, 1.0)]);
        assert!((flat[1] - (1.0 + 1.0)).abs() < 1e-12);
    }

    #[test]
    fn matches_brute_force_on_200_triples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pts: Vec<_> = (0..200)
            .map(|_| t(-rng.gen_range(0.0..0.8), rng.gen_range(0..5), rng.gen_range(0.0..1.0)))
            .collect();
        assert_eq!(non_dominated_sort(&pts), brute_force_fronts(&pts));
    }

    proptest! {
        #[test]
        fn sort_equals_oracle(seed in any::<u64>(), n in 1usize..120) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            // coarse values force plenty of ties
            let pts: Vec<_> = (0..n)
                .map(|_| t(-(rng.gen_range(0..6) as f64) / 5.0, rng.gen_range(0..4), rng.gen_range(0..5) as f64 / 4.0))
                .collect();
            prop_assert_eq!(non_dominated_sort(&pts), brute_force_fronts(&pts));
        }

        #[test]
        fn crowding_is_nonnegative_with_infinite_extremes(seed in any::<u64>(), n in 3usize..40) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..n).map(|_| t(-rng.gen_range(0.0..1.0), rng.gen_range(0..4), rng.gen_range(0.0..1.0))).collect();
            let d = crowding_distance(&pts);
            prop_assert!(d.iter().all(|&v| v >= 0.0));
            prop_assert!(d.iter().filter(|v| v.is_infinite()).count() >= 2);
        }
    }
}
