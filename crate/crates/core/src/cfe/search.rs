use std::cmp::Ordering;
use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::sorting::{crowding_distance, non_dominated_sort};
use super::{CfeProblem, Evaluation, FrontMember, NsgaConfig};
use crate::curves::ResponseModel;
use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) enum Gene {
    Numeric { lo: f64, hi: f64 },
    Categorical { levels: usize },
    Fixed,
}

#[derive(Clone)]
struct Individual<T> {
    genome: Vec<T>,
    eval: Evaluation<T>,
}

fn key<T: Scalar>(genome: &[T]) -> Vec<u64> {
    genome.iter().map(|v| v.as_f64().to_bits()).collect()
}

struct Evaluator<'p, 'a, T: Scalar, M: ResponseModel<T> + ?Sized, F> {
    problem: &'p CfeProblem<'a, T, M>,
    cache: HashMap<Vec<u64>, Evaluation<T>>,
    observer: F,
}

impl<'p, 'a, T: Scalar, M: ResponseModel<T> + ?Sized, F: FnMut(&[T], &Evaluation<T>)> Evaluator<'p, 'a, T, M, F> {
    fn evaluate(&mut self, genomes: Vec<Vec<T>>) -> Result<Vec<Individual<T>>> {
        let mut fresh: Vec<Vec<T>> = Vec::new();
        let mut fresh_keys: Vec<Vec<u64>> = Vec::new();
        for g in &genomes {
            let k = key(g);
            if !self.cache.contains_key(&k) && !fresh_keys.contains(&k) {
                fresh.push(g.clone());
                fresh_keys.push(k);
            }
        }
        if !fresh.is_empty() {
            let evals = self.problem.evaluate_batch(&fresh)?;
            for ((g, k), e) in fresh.iter().zip(fresh_keys).zip(evals) {
                (self.observer)(g, &e);
                self.cache.insert(k, e);
            }
        }
        Ok(genomes
            .into_iter()
            .map(|g| {
                let eval = self.cache[&key(&g)];
                Individual { genome: g, eval }
            })
            .collect())
    }
}

/// Runs NSGA-II for one sample and returns the first front of the final
/// population, deduplicated by genome. `observer` sees every distinct
/// genome the first time it is evaluated.
pub fn nsga2_search_observed<T, M, F>(
    problem: &CfeProblem<'_, T, M>,
    config: &NsgaConfig,
    observer: F,
) -> Result<Vec<FrontMember<T>>>
where
    T: Scalar,
    M: ResponseModel<T> + ?Sized,
    F: FnMut(&[T], &Evaluation<T>),
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let genes = problem.genes();
    let original = problem.original_passive();
    let n_genes = genes.len();
    let mutation_prob = config
        .mutation_prob
        .unwrap_or(1.0 / n_genes.max(1) as f64);
    let size = config.population_size;

    let mut evaluator = Evaluator {
        problem,
        cache: HashMap::new(),
        observer,
    };

    let mut initial = vec![original.clone()];
    let movable: Vec<usize> = (0..n_genes).filter(|&i| !matches!(genes[i], Gene::Fixed)).collect();
    while initial.len() < size {
        let mut g = original.clone();
        if !movable.is_empty() {
            let count = rng.gen_range(1..=movable.len().min(3));
            for &i in rand::seq::index::sample(&mut rng, movable.len(), count).iter().map(|k| &movable[k]) {
                g[i] = random_value(genes[i], &mut rng);
            }
        }
        initial.push(g);
    }
    let mut population = evaluator.evaluate(initial)?;

    for _ in 0..config.generations {
        let (rank, crowd) = rank_and_crowd(&population);
        let mut children = Vec::with_capacity(size);
        while children.len() < size {
            let a = tournament(&rank, &crowd, &mut rng);
            let b = tournament(&rank, &crowd, &mut rng);
            let (mut c1, mut c2) = if rng.gen::<f64>() < config.crossover_prob {
                crossover(&population[a].genome, &population[b].genome, &genes, config.eta_crossover, &mut rng)
            } else {
                (population[a].genome.clone(), population[b].genome.clone())
            };
            for child in [&mut c1, &mut c2] {
                mutate(child, &genes, mutation_prob, config.eta_mutation, &mut rng);
                for (i, v) in child.iter_mut().enumerate() {
                    if rng.gen::<f64>() < config.reset_prob {
                        *v = original[i];
                    }
                }
            }
            children.push(c1);
            if children.len() < size {
                children.push(c2);
            }
        }
        let offspring = evaluator.evaluate(children)?;
        population = environmental_selection(population, offspring, size);
    }

    let objectives: Vec<_> = population.iter().map(|p| p.eval.objectives).collect();
    let fronts = non_dominated_sort(&objectives);
    let mut seen: Vec<Vec<u64>> = Vec::new();
    let mut front = Vec::new();
    for &i in fronts.first().map(Vec::as_slice).unwrap_or(&[]) {
        let k = key(&population[i].genome);
        if seen.contains(&k) {
            continue;
        }
        seen.push(k);
        front.push(FrontMember {
            candidate: problem.candidate(population[i].genome.clone()),
            objectives: population[i].eval.objectives,
            distance: population[i].eval.distance,
        });
    }
    Ok(front)
}

fn rank_and_crowd<T: Scalar>(population: &[Individual<T>]) -> (Vec<usize>, Vec<T>) {
    let objectives: Vec<_> = population.iter().map(|p| p.eval.objectives).collect();
    let mut rank = vec![0; population.len()];
    let mut crowd = vec![T::zero(); population.len()];
    for (r, front) in non_dominated_sort(&objectives).iter().enumerate() {
        let objs: Vec<_> = front.iter().map(|&i| objectives[i]).collect();
        for (&i, d) in front.iter().zip(crowding_distance(&objs)) {
            rank[i] = r;
            crowd[i] = d;
        }
    }
    (rank, crowd)
}

/// Binary tournament: lower rank wins, then larger crowding distance.
fn tournament<T: Scalar>(rank: &[usize], crowd: &[T], rng: &mut impl Rng) -> usize {
    let a = rng.gen_range(0..rank.len());
    let b = rng.gen_range(0..rank.len());
    match rank[a].cmp(&rank[b]) {
        Ordering::Less => a,
        Ordering::Greater => b,
        Ordering::Equal => {
            if crowd[b] > crowd[a] {
                b
            } else {
                a
            }
        }
    }
}

/// Elitist truncation of parents + offspring to `size`, after dropping
/// duplicate genomes. Duplicates refill the population only if there are
/// fewer than `size` distinct genomes.
fn environmental_selection<T: Scalar>(
    parents: Vec<Individual<T>>,
    offspring: Vec<Individual<T>>,
    size: usize,
) -> Vec<Individual<T>> {
    let mut unique = Vec::with_capacity(parents.len() + offspring.len());
    let mut dups = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for ind in parents.into_iter().chain(offspring) {
        if seen.insert(key(&ind.genome)) {
            unique.push(ind);
        } else {
            dups.push(ind);
        }
    }
    let objectives: Vec<_> = unique.iter().map(|p| p.eval.objectives).collect();
    let mut chosen: Vec<usize> = Vec::with_capacity(size);
    for front in non_dominated_sort(&objectives) {
        if chosen.len() + front.len() <= size {
            chosen.extend_from_slice(&front);
            continue;
        }
        let objs: Vec<_> = front.iter().map(|&i| objectives[i]).collect();
        let crowd = crowding_distance(&objs);
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| {
            crowd[b]
                .partial_cmp(&crowd[a])
                .unwrap_or(Ordering::Equal)
                .then(a.cmp(&b))
        });
        chosen.extend(order.iter().take(size - chosen.len()).map(|&k| front[k]));
        break;
    }
    let mut slots: Vec<Option<Individual<T>>> = unique.into_iter().map(Some).collect();
    let mut next: Vec<Individual<T>> = chosen.into_iter().filter_map(|i| slots[i].take()).collect();
    next.extend(dups.into_iter().take(size.saturating_sub(next.len())));
    next
}

fn random_value<T: Scalar>(gene: Gene, rng: &mut impl Rng) -> T {
    match gene {
        Gene::Numeric { lo, hi } => T::lit(rng.gen_range(lo..=hi)),
        Gene::Categorical { levels } => T::from_usize_lossy(rng.gen_range(0..levels)),
        Gene::Fixed => unreachable!("fixed genes are never resampled"),
    }
}

/// Simulated binary crossover (bounded form) on numeric genes; categorical
/// genes are swapped between the children with probability 1/2.
fn crossover<T: Scalar>(
    a: &[T],
    b: &[T],
    genes: &[Gene],
    eta: f64,
    rng: &mut impl Rng,
) -> (Vec<T>, Vec<T>) {
    let mut c1 = a.to_vec();
    let mut c2 = b.to_vec();
    for (i, gene) in genes.iter().enumerate() {
        match *gene {
            Gene::Fixed => {}
            Gene::Categorical { .. } => {
                if rng.gen::<f64>() < 0.5 {
                    std::mem::swap(&mut c1[i], &mut c2[i]);
                }
            }
            Gene::Numeric { lo, hi } => {
                if rng.gen::<f64>() >= 0.5 {
                    continue;
                }
                let (p1, p2) = (a[i].as_f64(), b[i].as_f64());
                if (p1 - p2).abs() <= 1e-14 {
                    continue;
                }
                let (y1, y2) = if p1 < p2 { (p1, p2) } else { (p2, p1) };
                let u: f64 = rng.gen();
                let spread = |beta: f64| {
                    let alpha = 2.0 - beta.powf(-(eta + 1.0));
                    if u <= 1.0 / alpha {
                        (u * alpha).powf(1.0 / (eta + 1.0))
                    } else {
                        (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
                    }
                };
                let bq1 = spread(1.0 + 2.0 * (y1 - lo) / (y2 - y1));
                let bq2 = spread(1.0 + 2.0 * (hi - y2) / (y2 - y1));
                let mut v1 = (0.5 * ((y1 + y2) - bq1 * (y2 - y1))).clamp(lo, hi);
                let mut v2 = (0.5 * ((y1 + y2) + bq2 * (y2 - y1))).clamp(lo, hi);
                if rng.gen::<f64>() < 0.5 {
                    std::mem::swap(&mut v1, &mut v2);
                }
                c1[i] = T::lit(v1);
                c2[i] = T::lit(v2);
            }
        }
    }
    (c1, c2)
}

/// Polynomial mutation on numeric genes, uniform level resampling on
/// categorical ones.
fn mutate<T: Scalar>(genome: &mut [T], genes: &[Gene], prob: f64, eta: f64, rng: &mut impl Rng) {
    for (v, gene) in genome.iter_mut().zip(genes) {
        match *gene {
            Gene::Fixed => {}
            Gene::Categorical { levels } => {
                if rng.gen::<f64>() < prob {
                    *v = T::from_usize_lossy(rng.gen_range(0..levels));
                }
            }
            Gene::Numeric { lo, hi } => {
                if rng.gen::<f64>() >= prob {
                    continue;
                }
                let y = v.as_f64();
                let width = hi - lo;
                let d1 = (y - lo) / width;
                let d2 = (hi - y) / width;
                let u: f64 = rng.gen();
                let pow = 1.0 / (eta + 1.0);
                let dq = if u < 0.5 {
                    let val = 2.0 * u + (1.0 - 2.0 * u) * (1.0 - d1).powf(eta + 1.0);
                    val.powf(pow) - 1.0
                } else {
                    let val = 2.0 * (1.0 - u) + 2.0 * (u - 0.5) * (1.0 - d2).powf(eta + 1.0);
                    1.0 - val.powf(pow)
                };
                *v = T::lit((y + dq * width).clamp(lo, hi));
            }
        }
    }
}
