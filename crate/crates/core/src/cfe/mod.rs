//! Counterfactual search over the passive features of one sample.
//!
//! A candidate keeps the sample's active feature and replaces passive
//! values. Three objectives are minimized jointly with NSGA-II: the capped,
//! negated fPCA distance between the aligned curves (`g1`), the number of
//! modified features (`g2`) and the mean Gower distance (`g3`).

mod objectives;
mod search;
mod sorting;

use serde::{Deserialize, Serialize};

use crate::curves::{aligned_curves, CurveGrid, ResponseModel};
use crate::data::{Dataset, FeatureSpec, Sample};
use crate::error::{Error, Result};
use crate::fpca::{distance, FpcaModel, ScoreVector};
use crate::scalar::Scalar;

pub use objectives::{g1, g2, g3, ObjectiveTriple};
pub use search::nsga2_search_observed;
pub use sorting::{crowding_distance, non_dominated_sort};

use objectives::differs;
use search::Gene;

/// Default threshold below which two feature values count as equal.
pub const TIE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NsgaConfig {
    /// Even, at least 4.
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// Per-gene polynomial mutation probability; `None` means `1 / n_passive`.
    pub mutation_prob: Option<f64>,
    /// Per-gene probability of snapping back to the original value.
    pub reset_prob: f64,
    pub eta_crossover: f64,
    pub eta_mutation: f64,
    pub tie_tolerance: f64,
    pub seed: u64,
}

impl Default for NsgaConfig {
    fn default() -> Self {
        Self {
            population_size: 50,
            generations: 100,
            crossover_prob: 0.9,
            mutation_prob: None,
            reset_prob: 0.2,
            eta_crossover: 15.0,
            eta_mutation: 20.0,
            tie_tolerance: TIE_TOLERANCE,
            seed: 0,
        }
    }
}

impl NsgaConfig {
    pub fn validate(&self) -> Result<()> {
        if self.population_size < 4 || !self.population_size.is_multiple_of(2) {
            return Err(Error::InvalidConfig(format!(
                "population size {} must be even and >= 4",
                self.population_size
            )));
        }
        if self.generations == 0 {
            return Err(Error::InvalidConfig("generations must be >= 1".into()));
        }
        let probs = [
            Some(self.crossover_prob),
            self.mutation_prob,
            Some(self.reset_prob),
        ];
        if probs.iter().flatten().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::InvalidConfig("probabilities must lie in [0, 1]".into()));
        }
        if !(self.eta_crossover >= 0.0 && self.eta_mutation >= 0.0) {
            return Err(Error::InvalidConfig("distribution indices must be >= 0".into()));
        }
        if !(self.tie_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("tie tolerance must be >= 0".into()));
        }
        Ok(())
    }
}

/// Passive-feature values of a counterfactual and which of them moved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate<T> {
    pub passive_values: Vec<T>,
    pub change_mask: Vec<bool>,
}

impl<T: Scalar> Candidate<T> {
    pub fn changed(&self) -> usize {
        self.change_mask.iter().filter(|&&m| m).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation<T> {
    pub objectives: ObjectiveTriple<T>,
    /// Uncapped fPCA score distance to the original curve.
    pub distance: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrontMember<T> {
    pub candidate: Candidate<T>,
    pub objectives: ObjectiveTriple<T>,
    pub distance: T,
}

/// Everything needed to score candidates for one original sample.
pub struct CfeProblem<'a, T: Scalar, M: ResponseModel<T> + ?Sized> {
    model: &'a M,
    fpca: &'a FpcaModel<T>,
    grid: &'a CurveGrid<T>,
    passive_specs: Vec<&'a FeatureSpec<T>>,
    passive: Vec<usize>,
    original: Sample<T>,
    original_scores: ScoreVector<T>,
    epsilon: T,
    tie_tolerance: T,
}

impl<'a, T: Scalar, M: ResponseModel<T> + ?Sized> CfeProblem<'a, T, M> {
    pub fn new(
        model: &'a M,
        fpca: &'a FpcaModel<T>,
        grid: &'a CurveGrid<T>,
        specs: &'a [FeatureSpec<T>],
        original: &Sample<T>,
        epsilon: T,
        tie_tolerance: T,
    ) -> Result<Self> {
        if !(epsilon > T::zero() && epsilon.is_finite()) {
            return Err(Error::InvalidConfig(format!("epsilon {epsilon} must be > 0")));
        }
        if original.len() != model.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                found: original.len(),
            });
        }
        if specs.len() != original.len() {
            return Err(Error::DimensionMismatch {
                expected: specs.len(),
                found: original.len(),
            });
        }
        if fpca.grid_len() != grid.len() {
            return Err(Error::GridMismatch {
                expected: fpca.grid_len(),
                found: grid.len(),
            });
        }
        let active = grid.active_index();
        let passive: Vec<usize> = (0..original.len()).filter(|&i| i != active).collect();
        let curve = aligned_curves(model, &[&original.features[..]], grid)?;
        let original_scores = fpca.project_values(&curve[0])?;
        Ok(Self {
            model,
            fpca,
            grid,
            passive_specs: passive.iter().map(|&i| &specs[i]).collect(),
            passive,
            original: original.clone(),
            original_scores,
            epsilon,
            tie_tolerance,
        })
    }

    pub fn active_index(&self) -> usize {
        self.grid.active_index()
    }

    pub fn passive_indices(&self) -> &[usize] {
        &self.passive
    }

    pub fn original(&self) -> &Sample<T> {
        &self.original
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    pub fn original_passive(&self) -> Vec<T> {
        self.passive.iter().map(|&i| self.original.features[i]).collect()
    }

    /// Full feature vector: original active value, `passive_values` elsewhere.
    pub fn full_features(&self, passive_values: &[T]) -> Vec<T> {
        let mut x = self.original.features.clone();
        for (&i, &v) in self.passive.iter().zip(passive_values) {
            x[i] = v;
        }
        x
    }

    pub fn candidate(&self, passive_values: Vec<T>) -> Candidate<T> {
        let change_mask = self
            .passive
            .iter()
            .zip(&passive_values)
            .map(|(&i, &v)| differs(self.original.features[i], v, self.tie_tolerance))
            .collect();
        Candidate {
            passive_values,
            change_mask,
        }
    }

    pub(crate) fn genes(&self) -> Vec<Gene> {
        self.passive
            .iter()
            .zip(&self.passive_specs)
            .map(|(&i, spec)| {
                if spec.is_categorical() {
                    return Gene::Categorical {
                        levels: spec.levels.len().max(1),
                    };
                }
                let x = self.original.features[i];
                let lo = spec.observed_min.min(x).as_f64();
                let hi = spec.observed_max.max(x).as_f64();
                if hi > lo {
                    Gene::Numeric { lo, hi }
                } else {
                    Gene::Fixed
                }
            })
            .collect()
    }

    /// Objectives for a batch of passive-value vectors.
    pub fn evaluate_batch(&self, genomes: &[Vec<T>]) -> Result<Vec<Evaluation<T>>> {
        let rows: Vec<Vec<T>> = genomes.iter().map(|g| self.full_features(g)).collect();
        let curves = aligned_curves(self.model, &rows, self.grid)?;
        let original = self.original_passive();
        genomes
            .iter()
            .zip(curves)
            .map(|(g, curve)| {
                let scores = self.fpca.project_values(&curve)?;
                let d = distance(&self.original_scores, &scores)?;
                Ok(Evaluation {
                    objectives: ObjectiveTriple {
                        g1: g1(d, self.epsilon),
                        g2: g2(&original, g, self.tie_tolerance),
                        g3: g3(&original, g, &self.passive_specs, self.tie_tolerance),
                    },
                    distance: d,
                })
            })
            .collect()
    }
}

/// Objectives of a single candidate against `original`.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_candidate<T: Scalar, M: ResponseModel<T> + ?Sized>(
    model: &M,
    fpca: &FpcaModel<T>,
    grid: &CurveGrid<T>,
    specs: &[FeatureSpec<T>],
    original: &Sample<T>,
    candidate: &Candidate<T>,
    epsilon: T,
) -> Result<Evaluation<T>> {
    let problem = CfeProblem::new(model, fpca, grid, specs, original, epsilon, T::lit(TIE_TOLERANCE))?;
    if candidate.passive_values.len() != problem.passive.len() {
        return Err(Error::DimensionMismatch {
            expected: problem.passive.len(),
            found: candidate.passive_values.len(),
        });
    }
    Ok(problem.evaluate_batch(std::slice::from_ref(&candidate.passive_values))?[0])
}

pub fn nsga2_search<T: Scalar, M: ResponseModel<T> + ?Sized>(
    problem: &CfeProblem<'_, T, M>,
    config: &NsgaConfig,
) -> Result<Vec<FrontMember<T>>> {
    nsga2_search_observed(problem, config, |_, _| {})
}

/// Index of the chosen front member: lowest `g1`, then lowest `g2`, then
/// lowest `g3`, then lowest index.
pub fn select_solution<T: Scalar>(front: &[FrontMember<T>]) -> Result<usize> {
    if front.is_empty() {
        return Err(Error::EmptyFront);
    }
    let mut best = 0;
    for (i, m) in front.iter().enumerate().skip(1) {
        let (a, b) = (&m.objectives, &front[best].objectives);
        let better = a.g1 < b.g1
            || (a.g1 == b.g1 && (a.g2 < b.g2 || (a.g2 == b.g2 && a.g3 < b.g3)));
        if better {
            best = i;
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfeResult<T> {
    pub sample_index: usize,
    pub counterfactual: Sample<T>,
    pub pareto_front: Vec<FrontMember<T>>,
    /// Index into `pareto_front`.
    pub selected: usize,
    pub distance: T,
    pub success: bool,
    pub epsilon: T,
}

impl<T: Scalar> CfeResult<T> {
    pub fn selected_member(&self) -> &FrontMember<T> {
        &self.pareto_front[self.selected]
    }
}

/// SplitMix64 of `(base, index)`; per-sample seeds independent of scheduling.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    fn mix(mut z: u64) -> u64 {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }
    mix(base ^ mix(index))
}

/// Searches, selects, and packages the counterfactual of one dataset sample.
/// The search seed is derived from `config.seed` and the sample index.
pub fn generate_cfe<T: Scalar, M: ResponseModel<T> + ?Sized>(
    model: &M,
    fpca: &FpcaModel<T>,
    grid: &CurveGrid<T>,
    dataset: &Dataset<T>,
    sample_index: usize,
    epsilon: T,
    config: &NsgaConfig,
) -> Result<CfeResult<T>> {
    if sample_index >= dataset.len() {
        return Err(Error::InvalidConfig(format!(
            "sample {sample_index} out of range for {} samples",
            dataset.len()
        )));
    }
    let original = dataset.sample(sample_index);
    let problem = CfeProblem::new(
        model,
        fpca,
        grid,
        dataset.specs(),
        &original,
        epsilon,
        T::lit(config.tie_tolerance),
    )?;
    let seeded = NsgaConfig {
        seed: derive_seed(config.seed, sample_index as u64),
        ..config.clone()
    };
    let front = nsga2_search(&problem, &seeded)?;
    let selected = select_solution(&front)?;
    let member = &front[selected];
    let counterfactual = Sample::new(sample_index, problem.full_features(&member.candidate.passive_values));
    let distance = member.distance;
    Ok(CfeResult {
        sample_index,
        counterfactual,
        success: distance >= epsilon,
        distance,
        selected,
        pareto_front: front,
        epsilon,
    })
}
