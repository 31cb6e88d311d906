//! Local explanations (which passive features a counterfactual modified),
//! per-fold global relevance and feature-combination counts, and their
//! aggregation across cross-validation folds.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::cfe::CfeResult;
use crate::data::Sample;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanation {
    pub sample_index: usize,
    /// Sorted indices of the modified passive features.
    pub alpha: Vec<usize>,
    pub epsilon: f64,
    pub success: bool,
}

/// Features `i != active` where the counterfactual differs from `original`
/// by more than `tie_tolerance`.
pub fn local_explanation<T: Scalar>(
    original: &Sample<T>,
    result: &CfeResult<T>,
    active: usize,
    tie_tolerance: T,
) -> LocalExplanation {
    let alpha = original
        .features
        .iter()
        .zip(&result.counterfactual.features)
        .enumerate()
        .filter(|&(i, (&a, &b))| i != active && (a - b).abs() > tie_tolerance)
        .map(|(i, _)| i)
        .collect();
    LocalExplanation {
        sample_index: original.index,
        alpha,
        epsilon: result.epsilon.as_f64(),
        success: result.success,
    }
}

/// `r_i`: fraction of explanations whose alpha contains feature `i`, for
/// every feature index below `n_features`.
pub fn global_relevance(locals: &[LocalExplanation], n_features: usize) -> Result<Vec<f64>> {
    if locals.is_empty() {
        return Err(Error::NoExplanations);
    }
    let mut counts = vec![0usize; n_features];
    for local in locals {
        for &i in &local.alpha {
            if i >= n_features {
                return Err(Error::DimensionMismatch {
                    expected: n_features,
                    found: i + 1,
                });
            }
            counts[i] += 1;
        }
    }
    let n = locals.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Combination {
    pub features: Vec<usize>,
    pub count: usize,
    pub ratio: f64,
}

fn count_sets(locals: &[LocalExplanation]) -> BTreeMap<Vec<usize>, usize> {
    let mut counts = BTreeMap::new();
    for local in locals {
        let mut set = local.alpha.clone();
        set.sort_unstable();
        set.dedup();
        *counts.entry(set).or_insert(0) += 1;
    }
    counts
}

/// Ranks by count, descending, ties broken by lexicographic feature
/// indices.
fn rank_counts(counts: &BTreeMap<Vec<usize>, usize>, k: usize, min_size: usize) -> Vec<(Vec<usize>, usize)> {
    let mut ranked: Vec<(Vec<usize>, usize)> = counts
        .iter()
        .filter(|(set, _)| set.len() >= min_size)
        .map(|(set, &c)| (set.clone(), c))
        .collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    ranked
}

/// The `k` most frequent alpha sets with at least `min_size` features.
/// Ratios are relative to all explanations, including those whose set was
/// filtered out by size.
pub fn top_combinations(locals: &[LocalExplanation], k: usize, min_size: usize) -> Vec<Combination> {
    let n = locals.len().max(1) as f64;
    rank_counts(&count_sets(locals), k, min_size)
        .into_iter()
        .map(|(features, count)| Combination {
            features,
            count,
            ratio: count as f64 / n,
        })
        .collect()
}

/// Relevance and combination counts of one fold at one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold_id: usize,
    pub epsilon: f64,
    pub active_index: usize,
    pub n_features: usize,
    /// Explanations counted (failed searches are dropped when excluded).
    pub n_samples: usize,
    pub n_failed: usize,
    pub relevance: Vec<f64>,
    #[serde(with = "pairs")]
    pub combination_counts: BTreeMap<Vec<usize>, usize>,
}

/// JSON object keys must be strings, so set counts travel as pairs.
mod pairs {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<Vec<usize>, usize>, s: S) -> Result<S::Ok, S::Error> {
        map.iter().collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<Vec<usize>, usize>, D::Error> {
        Ok(Vec::<(Vec<usize>, usize)>::deserialize(d)?.into_iter().collect())
    }
}

impl FoldReport {
    pub fn new(
        fold_id: usize,
        locals: &[LocalExplanation],
        n_features: usize,
        active_index: usize,
        include_failed: bool,
    ) -> Result<Self> {
        let epsilon = locals.first().ok_or(Error::NoExplanations)?.epsilon;
        if locals.iter().any(|l| l.epsilon != epsilon) {
            return Err(Error::FoldMismatch(format!("fold {fold_id} mixes thresholds")));
        }
        let n_failed = locals.iter().filter(|l| !l.success).count();
        let kept: Vec<LocalExplanation> = locals
            .iter()
            .filter(|l| include_failed || l.success)
            .cloned()
            .collect();
        if kept.iter().any(|l| l.alpha.contains(&active_index)) {
            return Err(Error::FoldMismatch(format!(
                "fold {fold_id} has an explanation that modifies the active feature"
            )));
        }
        Ok(Self {
            fold_id,
            epsilon,
            active_index,
            n_features,
            n_samples: kept.len(),
            n_failed,
            relevance: global_relevance(&kept, n_features)?,
            combination_counts: count_sets(&kept),
        })
    }

    pub fn ratio(&self, set: &[usize]) -> f64 {
        let count = self.combination_counts.get(set).copied().unwrap_or(0);
        count as f64 / self.n_samples.max(1) as f64
    }

    pub fn top_combinations(&self, k: usize, min_size: usize) -> Vec<Combination> {
        rank_counts(&self.combination_counts, k, min_size)
            .into_iter()
            .map(|(features, count)| Combination {
                ratio: count as f64 / self.n_samples.max(1) as f64,
                features,
                count,
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: f64,
    /// Sample standard deviation (`n - 1` divisor); 0 for a single value.
    pub std: f64,
}

impl MeanStd {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self { mean: 0.0, std: 0.0 };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRelevance {
    pub feature: usize,
    pub summary: MeanStd,
    pub per_fold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationSummary {
    pub features: Vec<usize>,
    pub total_count: usize,
    pub summary: MeanStd,
    pub per_fold: Vec<f64>,
}

/// Cross-fold aggregate for one threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub epsilon: f64,
    pub active_index: usize,
    pub folds: usize,
    /// Passive features only, in index order.
    pub relevance: Vec<FeatureRelevance>,
    /// Selected by total count across folds.
    pub combinations: Vec<CombinationSummary>,
}

impl GlobalReport {
    pub fn relevance_of(&self, feature: usize) -> Option<&FeatureRelevance> {
        self.relevance.iter().find(|r| r.feature == feature)
    }
}

/// Combines per-fold reports at one threshold. The `top_k` combinations
/// with at least `min_size` features are chosen by total count over all
/// folds; mean and sample std are taken over the per-fold ratios.
pub fn aggregate_folds(reports: &[FoldReport], top_k: usize, min_size: usize) -> Result<GlobalReport> {
    let first = reports.first().ok_or(Error::NoExplanations)?;
    for r in reports {
        if r.epsilon != first.epsilon || r.n_features != first.n_features || r.active_index != first.active_index {
            return Err(Error::FoldMismatch(format!(
                "fold {} (epsilon {}, {} features, active {}) does not match fold {}",
                r.fold_id, r.epsilon, r.n_features, r.active_index, first.fold_id
            )));
        }
    }
    let relevance = (0..first.n_features)
        .filter(|&i| i != first.active_index)
        .map(|i| {
            let per_fold: Vec<f64> = reports.iter().map(|r| r.relevance[i]).collect();
            FeatureRelevance {
                feature: i,
                summary: MeanStd::of(&per_fold),
                per_fold,
            }
        })
        .collect();

    let mut totals: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    for r in reports {
        for (set, &c) in &r.combination_counts {
            *totals.entry(set.clone()).or_insert(0) += c;
        }
    }
    let combinations = rank_counts(&totals, top_k, min_size)
        .into_iter()
        .map(|(features, total_count)| {
            let per_fold: Vec<f64> = reports.iter().map(|r| r.ratio(&features)).collect();
            CombinationSummary {
                summary: MeanStd::of(&per_fold),
                per_fold,
                features,
                total_count,
            }
        })
        .collect();

    Ok(GlobalReport {
        epsilon: first.epsilon,
        active_index: first.active_index,
        folds: reports.len(),
        relevance,
        combinations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceEntry {
    pub mean: f64,
    pub std: f64,
    pub per_fold: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationEntry {
    pub features: Vec<String>,
    pub mean_pct: f64,
    pub std_pct: f64,
    pub total_count: usize,
}

/// Named, serializable form of a [`GlobalReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub epsilon: f64,
    pub active: String,
    pub folds: usize,
    pub std_convention: String,
    pub relevance: BTreeMap<String, RelevanceEntry>,
    pub combinations: Vec<CombinationEntry>,
}

impl ReportDocument {
    pub fn new(report: &GlobalReport, names: &[String]) -> Result<Self> {
        let name = |i: usize| {
            names.get(i).cloned().ok_or(Error::DimensionMismatch {
                expected: names.len(),
                found: i + 1,
            })
        };
        let relevance = report
            .relevance
            .iter()
            .map(|r| {
                Ok((
                    name(r.feature)?,
                    RelevanceEntry {
                        mean: r.summary.mean,
                        std: r.summary.std,
                        per_fold: r.per_fold.clone(),
                    },
                ))
            })
            .collect::<Result<_>>()?;
        let combinations = report
            .combinations
            .iter()
            .map(|c| {
                Ok(CombinationEntry {
                    features: c.features.iter().map(|&i| name(i)).collect::<Result<_>>()?,
                    mean_pct: 100.0 * c.summary.mean,
                    std_pct: 100.0 * c.summary.std,
                    total_count: c.total_count,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            epsilon: report.epsilon,
            active: name(report.active_index)?,
            folds: report.folds,
            std_convention: "sample".into(),
            relevance,
            combinations,
        })
    }

    /// Flat rows: `kind,name,mean,std` with kind `relevance` or `combination`.
    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["epsilon", "kind", "name", "mean", "std"])?;
        let eps = self.epsilon.to_string();
        for (feature, r) in &self.relevance {
            w.write_record([&eps, "relevance", feature, &r.mean.to_string(), &r.std.to_string()])?;
        }
        for c in &self.combinations {
            let name = c.features.join("+");
            w.write_record([
                &eps,
                "combination",
                &name,
                &(c.mean_pct / 100.0).to_string(),
                &(c.std_pct / 100.0).to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cfe::{Candidate, FrontMember, ObjectiveTriple};
    use proptest::prelude::*;

    fn local(alpha: &[usize]) -> LocalExplanation {
        LocalExplanation {
            sample_index: 0,
            alpha: alpha.to_vec(),
            epsilon: 0.4,
            success: true,
        }
    }

    fn result_with(counterfactual: Vec<f64>) -> CfeResult<f64> {
        CfeResult {
            sample_index: 0,
            counterfactual: Sample::new(0, counterfactual),
            pareto_front: vec![FrontMember {
                candidate: Candidate {
                    passive_values: vec![],
                    change_mask: vec![],
                },
                objectives: ObjectiveTriple::new(0.0, 0, 0.0),
                distance: 0.0,
            }],
            selected: 0,
            distance: 0.0,
            success: false,
            epsilon: 0.4,
        }
    }

    #[test]
    fn local_alpha() {
        let x = Sample::new(3, vec![0.5, 0.1, 0.2, 0.3, 0.4]);
        let same = local_explanation(&x, &result_with(x.features.clone()), 0, 1e-9);
        assert!(same.alpha.is_empty());
        assert_eq!(same.sample_index, 3);
        let moved = local_explanation(&x, &result_with(vec![0.5, 0.1, 0.2, 0.9, 0.4 + 1e-12]), 0, 1e-9);
        assert_eq!(moved.alpha, vec![3]);
    }

    #[test]
    fn relevance_formula() {
        let r = global_relevance(&[local(&[1]), local(&[1, 2])], 3).unwrap();
        assert_eq!(r, vec![0.0, 1.0, 0.5]);
        assert_eq!(global_relevance(&[local(&[]), local(&[])], 3).unwrap(), vec![0.0; 3]);
        assert!(matches!(global_relevance(&[], 3), Err(Error::NoExplanations)));
    }

    #[test]
    fn combination_counting() {
        let locals = [local(&[1, 2]), local(&[2, 1]), local(&[3])];
        let top = top_combinations(&locals, 5, 1);
        assert_eq!(top.len(), 2);
        assert_eq!(top[0].features, vec![1, 2]);
        assert!((top[0].ratio - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(top[1].features, vec![3]);
        assert!((top[1].ratio - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(top_combinations(&locals, 1, 1).len(), 1);
        // size filter keeps the denominator
        let multi = top_combinations(&locals, 5, 2);
        assert_eq!(multi.len(), 1);
        assert!((multi[0].ratio - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn ties_break_lexicographically() {
        let locals = [local(&[2, 3]), local(&[1, 4]), local(&[1, 2])];
        let sets: Vec<_> = top_combinations(&locals, 3, 1).into_iter().map(|c| c.features).collect();
        assert_eq!(sets, vec![vec![1, 2], vec![1, 4], vec![2, 3]]);
    }

    fn fold(id: usize, locals: &[LocalExplanation]) -> FoldReport {
        FoldReport::new(id, locals, 4, 0, true).unwrap()
    }

    #[test]
    fn identical_folds_have_zero_std() {
        let locals = [local(&[1, 2]), local(&[3])];
        let g = aggregate_folds(&[fold(1, &locals), fold(2, &locals)], 5, 1).unwrap();
        assert!(g.relevance.iter().all(|r| r.summary.std == 0.0));
        assert!(g.combinations.iter().all(|c| c.summary.std == 0.0));
        assert_eq!(g.relevance.len(), 3);
    }

    #[test]
    fn sample_std_convention() {
        let s = MeanStd::of(&[0.1, 0.3]);
        assert!((s.mean - 0.2).abs() < 1e-15);
        assert!((s.std - 0.02_f64.sqrt()).abs() < 1e-15);
        assert_eq!(MeanStd::of(&[0.7]).std, 0.0);
    }

    #[test]
    fn combinations_chosen_by_total_count() {
        let a = fold(1, &[local(&[1, 2]), local(&[1, 2]), local(&[3]), local(&[3])]);
        let b = fold(2, &[local(&[3]), local(&[3]), local(&[3]), local(&[1])]);
        let g = aggregate_folds(&[a, b], 1, 1).unwrap();
        assert_eq!(g.combinations[0].features, vec![3]);
        assert_eq!(g.combinations[0].total_count, 5);
        assert_eq!(g.combinations[0].per_fold, vec![0.5, 0.75]);
    }

    #[test]
    fn fold_report_json_round_trip() {
        let a = fold(1, &[local(&[1, 2]), local(&[3])]);
        let text = serde_json::to_string(&a).unwrap();
        assert_eq!(serde_json::from_str::<FoldReport>(&text).unwrap(), a);
    }

    #[test]
    fn fold_mismatch_detected() {
        let a = fold(1, &[local(&[1])]);
        let b = FoldReport::new(2, &[local(&[1])], 5, 0, true).unwrap();
        assert!(matches!(aggregate_folds(&[a, b], 5, 1), Err(Error::FoldMismatch(_))));
        assert!(matches!(aggregate_folds(&[], 5, 1), Err(Error::NoExplanations)));
    }

    #[test]
    fn failed_searches_can_be_excluded() {
        let mut failed = local(&[1, 2, 3]);
        failed.success = false;
        let locals = [local(&[1]), failed];
        let inclusive = FoldReport::new(1, &locals, 4, 0, true).unwrap();
        let exclusive = FoldReport::new(1, &locals, 4, 0, false).unwrap();
        assert_eq!(inclusive.relevance, vec![0.0, 1.0, 0.5, 0.5]);
        assert_eq!(exclusive.relevance, vec![0.0, 1.0, 0.0, 0.0]);
        assert_eq!(exclusive.n_failed, 1);
    }

    #[test]
    fn document_uses_names() {
        let g = aggregate_folds(&[fold(1, &[local(&[1, 2]), local(&[3])])], 5, 2).unwrap();
        let names: Vec<String> = ["a", "b", "c", "d"].iter().map(|s| s.to_string()).collect();
        let doc = ReportDocument::new(&g, &names).unwrap();
        assert_eq!(doc.active, "a");
        assert_eq!(doc.relevance["b"].mean, 0.5);
        assert_eq!(doc.combinations[0].features, vec!["b", "c"]);
        assert_eq!(doc.combinations[0].mean_pct, 50.0);
        let mut buf = Vec::new();
        doc.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 + 1);
        assert!(text.contains("0.4,combination,b+c,0.5,0"));
    }

    fn alpha_sets() -> impl Strategy<Value = Vec<Vec<usize>>> {
        prop::collection::vec(prop::collection::btree_set(1usize..5, 0..4), 1..40)
            .prop_map(|v| v.into_iter().map(|s| s.into_iter().collect()).collect())
    }

    proptest! {
        #[test]
        fn relevance_in_unit_interval_and_ratios_sum_to_one(sets in alpha_sets()) {
            let locals: Vec<_> = sets.iter().map(|a| local(a)).collect();
            let r = global_relevance(&locals, 5).unwrap();
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
            let total: f64 = top_combinations(&locals, usize::MAX, 0).iter().map(|c| c.ratio).sum();
            prop_assert!((total - 1.0).abs() < 1e-12);
        }

        #[test]
        fn counting_ignores_sample_order(sets in alpha_sets(), seed in any::<u64>()) {
            use rand::seq::SliceRandom;
            use rand::SeedableRng;
            let locals: Vec<_> = sets.iter().map(|a| local(a)).collect();
            let mut shuffled = locals.clone();
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(top_combinations(&locals, 5, 1), top_combinations(&shuffled, 5, 1));
            prop_assert_eq!(global_relevance(&locals, 5).unwrap(), global_relevance(&shuffled, 5).unwrap());
        }
    }
}
