//! End-to-end acceptance gate. Runs as a plain binary so the per-criterion
//! lines always reach the console; exits non-zero if any criterion fails.

use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use curvecf::cfe::{
    crowding_distance, derive_seed, non_dominated_sort, nsga2_search_observed, select_solution, CfeProblem,
    NsgaConfig, ObjectiveTriple,
};
use curvecf::curves::{align_values, curve_set, make_grid, CurveGrid, Rescaled};
use curvecf::data::{generate_synthetic, normalize, Dataset, Sample, SyntheticFunction};
use curvecf::fpca::{distance, FpcaModel, ScoreVector};
use curvecf::pipeline::{curve_factors, fit_fpca, run, CurveUnits, DataSource, Precision, RunConfig, RunOutcome};
use curvecf::regressor::{gradient_check, Activation, Mlp};

const EPSILONS: [f64; 3] = [0.4, 0.6, 0.8];
// Passive feature indices of the synthetic set.
const X2: usize = 1;
const X3: usize = 2;
const X4: usize = 3;
const X5: usize = 4;
/// Counterfactual searches per fold and threshold in the full run.
const CFE_SAMPLES: usize = 200;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn full_run() -> RunOutcome {
    let config = RunConfig {
        precision: Precision::F32,
        cfe_samples: Some(CFE_SAMPLES),
        write_curves: false,
        ..RunConfig::default()
    };
    run(&config, None).expect("full run")
}

fn regression_quality(outcome: &RunOutcome) -> Verdict {
    let mse: Vec<f64> = outcome.manifest.folds.iter().map(|f| f.validation_mse).collect();
    let mean = mse.iter().sum::<f64>() / mse.len() as f64;
    let worst = mse.iter().copied().fold(0.0, f64::max);
    verdict(
        mse.len() == 10 && mean <= 2e-2,
        format!("mean validation MSE {mean:.3e} over {} folds (worst {worst:.3e})", mse.len()),
    )
}

fn fpca_sufficiency(outcome: &RunOutcome) -> Verdict {
    let cum: Vec<f64> = outcome.manifest.folds.iter().map(|f| f.cumulative_explained).collect();
    let min = cum.iter().copied().fold(1.0, f64::min);
    verdict(
        cum.iter().all(|&c| c >= 0.995),
        format!("minimum cumulative explained variance {min:.5} (K=3, G=100)"),
    )
}

fn relevance_ranking(outcome: &RunOutcome) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for (e, folds) in outcome.fold_reports.iter().enumerate() {
        let good = folds
            .iter()
            .filter(|f| {
                let r = &f.relevance;
                r[X3] > r[X2] && r[X2] > r[X4] && r[X4] > r[X5] && r[X5] < 0.05
            })
            .count();
        pass &= good >= 9;
        parts.push(format!("eps {}: {good}/{}", EPSILONS[e], folds.len()));
    }
    verdict(pass, format!("folds with r3 > r2 > r4 > r5, r5 < 5%: {}", parts.join(", ")))
}

fn combination_table(outcome: &RunOutcome) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for report in &outcome.reports {
        let top: Vec<&[usize]> = report.combinations.iter().map(|c| c.features.as_slice()).collect();
        pass &= top.len() >= 2 && top[0] == [X2, X3] && top[1] == [X3, X4];
        let lead = report.combinations.first().map_or(0.0, |c| c.summary.mean);
        if report.epsilon == EPSILONS[2] {
            pass &= (0.216..=0.516).contains(&lead);
        }
        parts.push(format!("eps {}: {:?} {:.1}%", report.epsilon, &top[..top.len().min(2)], 100.0 * lead));
    }
    verdict(pass, parts.join("; "))
}

fn epsilon_monotonicity(outcome: &RunOutcome) -> Verdict {
    let means: Vec<f64> = outcome
        .reports
        .iter()
        .map(|r| r.relevance_of(X3).expect("x3 is passive").summary.mean)
        .collect();
    verdict(
        means.windows(2).all(|w| w[0] <= w[1]),
        format!("mean r3 over eps: {means:.3?}"),
    )
}

fn brute_force_fronts(points: &[ObjectiveTriple<f64>]) -> Vec<Vec<usize>> {
    let mut left: Vec<usize> = (0..points.len()).collect();
    let mut fronts = Vec::new();
    while !left.is_empty() {
        let front: Vec<usize> = left
            .iter()
            .copied()
            .filter(|&i| !left.iter().any(|&j| points[j].dominates(&points[i])))
            .collect();
        left.retain(|i| !front.contains(i));
        fronts.push(front);
    }
    fronts
}

fn random_triples(rng: &mut ChaCha8Rng, n: usize) -> Vec<ObjectiveTriple<f64>> {
    // Coarse values so ties and duplicates are common.
    (0..n)
        .map(|_| {
            ObjectiveTriple::new(
                -f64::from(rng.gen_range(0..9u8)) / 20.0,
                rng.gen_range(0..5),
                f64::from(rng.gen_range(0..11u8)) / 10.0,
            )
        })
        .collect()
}

fn nsga_oracle() -> Verdict {
    let mut mismatches = 0;
    let mut boundary_failures = 0;
    for seed in 0..100 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let points = random_triples(&mut rng, 200);
        let fronts = non_dominated_sort(&points);
        if fronts != brute_force_fronts(&points) {
            mismatches += 1;
        }
        for front in &fronts {
            let members: Vec<_> = front.iter().map(|&i| points[i]).collect();
            let dist = crowding_distance(&members);
            for m in 0..3 {
                let vals: Vec<f64> = members.iter().map(|p| p.as_array()[m]).collect();
                let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let hit = |t: f64| vals.iter().zip(&dist).any(|(&v, d)| v == t && d.is_infinite());
                if !(hit(lo) && hit(hi)) {
                    boundary_failures += 1;
                }
            }
        }
    }
    verdict(
        mismatches == 0 && boundary_failures == 0,
        format!("100 seeds x 200 triples: {mismatches} front mismatches, {boundary_failures} boundary failures"),
    )
}

struct OracleSetup {
    data: Dataset<f64>,
    model: Rescaled<f64, SyntheticFunction>,
    grid: CurveGrid<f64>,
    fpca: FpcaModel<f64>,
}

fn oracle_setup() -> OracleSetup {
    let raw = generate_synthetic::<f64>(2000, 21).expect("synthetic data");
    let (data, params) = normalize(&raw);
    let (response, axis) = curve_factors(&data, 0, CurveUnits::Standardized).expect("factors");
    let model = Rescaled {
        model: SyntheticFunction::on_normalized(params),
        factor: response,
    };
    let grid = make_grid(&data, 0, 100).expect("grid");
    let fpca = fit_fpca(&curve_set(&model, &data, &grid).expect("curves"), 3, axis).expect("fpca");
    OracleSetup {
        data,
        model,
        grid,
        fpca,
    }
}

fn numerical_invariants(oracle: &OracleSetup) -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut notes = Vec::new();

    let mut worst_grad = 0.0_f64;
    for seed in 0..5 {
        let model = Mlp::<f64>::random(5, &[100, 100], Activation::Relu, seed);
        for j in 0..4 {
            let x: Vec<f64> = (0..5).map(|_| rng.gen_range(0.0..1.0)).collect();
            let err = gradient_check(&model, &Sample::new(j, x), rng.gen_range(-1.0..1.0)).expect("gradient check");
            worst_grad = worst_grad.max(err);
        }
    }
    let grad_ok = worst_grad < 1e-4;
    notes.push(format!("gradient rel. error {worst_grad:.1e}"));

    let mut align_ok = true;
    for _ in 0..200 {
        let c: Vec<f64> = (0..50).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let once = align_values(&c);
        align_ok &= align_values(&once) == once;
        let d: Vec<f64> = (0..50).map(|_| f64::from(rng.gen_range(-4096..4096)) / 256.0).collect();
        let k = f64::from(rng.gen_range(-512..512)) / 64.0;
        let shifted: Vec<f64> = d.iter().map(|v| v + k).collect();
        align_ok &= align_values(&shifted) == align_values(&d);
    }
    notes.push(format!("align exact: {align_ok}"));

    let ortho = oracle.fpca.orthonormality_residual();
    let ortho_ok = ortho < 1e-8;
    notes.push(format!("orthonormality residual {ortho:.1e}"));

    let mut metric_ok = true;
    for _ in 0..1000 {
        let mut v = || ScoreVector((0..3).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>());
        let (a, b, c) = (v(), v(), v());
        let d = |x: &ScoreVector<f64>, y: &ScoreVector<f64>| distance(x, y).expect("same length");
        metric_ok &= d(&a, &a) == 0.0 && d(&a, &b) >= 0.0 && d(&a, &b) == d(&b, &a);
        metric_ok &= d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12;
        metric_ok &= a.0 == b.0 || d(&a, &b) > 0.0;
    }
    notes.push(format!("metric axioms: {metric_ok}"));

    // Every candidate the search evaluates, for the oracle and an untrained network.
    let network = Mlp::<f64>::random(5, &[16, 16], Activation::Relu, 3);
    let net_grid = oracle.grid.clone();
    let net_fpca = fit_fpca(&curve_set(&network, &oracle.data, &net_grid).expect("curves"), 3, 1.0).expect("fpca");
    let mut evaluated = 0usize;
    let mut violations = 0usize;
    let config = NsgaConfig {
        population_size: 20,
        generations: 20,
        ..NsgaConfig::default()
    };
    for &eps in &EPSILONS {
        for j in 0..5 {
            let s = oracle.data.sample(j);
            let mut check = |problem: &dyn Fn(&[f64]) -> Vec<f64>, g: &[f64], o: ObjectiveTriple<f64>| {
                evaluated += 1;
                let ok = (-eps..=0.0).contains(&o.g1)
                    && o.g2 <= 4
                    && (0.0..=1.0).contains(&o.g3)
                    && problem(g)[0] == s.features[0];
                violations += usize::from(!ok);
            };
            let p = CfeProblem::new(&oracle.model, &oracle.fpca, &oracle.grid, oracle.data.specs(), &s, eps, 1e-9)
                .expect("problem");
            nsga2_search_observed(&p, &config, |g, e| check(&|g| p.full_features(g), g, e.objectives))
                .expect("search");
            let p = CfeProblem::new(&network, &net_fpca, &net_grid, oracle.data.specs(), &s, eps, 1e-9)
                .expect("problem");
            nsga2_search_observed(&p, &config, |g, e| check(&|g| p.full_features(g), g, e.objectives))
                .expect("search");
        }
    }
    let bounds_ok = violations == 0 && evaluated > 0;
    notes.push(format!("{violations} bound violations in {evaluated} candidates"));

    verdict(grad_ok && align_ok && ortho_ok && metric_ok && bounds_ok, notes.join("; "))
}

fn oracle_end_to_end(oracle: &OracleSetup) -> Verdict {
    let base = NsgaConfig::default();
    let mut x5_only = 0usize;
    let mut worst = 0.0_f64;
    let mut successes = 0usize;
    let mut x5_selected = 0usize;
    let mut searches = 0usize;
    for &eps in &EPSILONS {
        for j in 0..40 {
            let s = oracle.data.sample(j);
            let problem =
                CfeProblem::new(&oracle.model, &oracle.fpca, &oracle.grid, oracle.data.specs(), &s, eps, 1e-9)
                    .expect("problem");
            let config = NsgaConfig {
                seed: derive_seed(base.seed, j as u64),
                ..base.clone()
            };
            let front = nsga2_search_observed(&problem, &config, |g, e| {
                if problem.candidate(g.to_vec()).change_mask == [false, false, false, true] {
                    x5_only += 1;
                    worst = worst.max(e.objectives.g1.abs());
                }
            })
            .expect("search");
            let chosen = &front[select_solution(&front).expect("non-empty front")];
            searches += 1;
            if chosen.distance >= eps {
                successes += 1;
                x5_selected += usize::from(chosen.candidate.change_mask[3]);
            }
        }
    }
    verdict(
        worst <= 1e-6 && x5_selected == 0 && x5_only > 0 && successes > 0,
        format!(
            "{x5_only} x5-only candidates, max |g1| {worst:.1e}; {successes}/{searches} successes, {x5_selected} select x5"
        ),
    )
}

fn determinism() -> Verdict {
    let config = RunConfig {
        source: DataSource::Synthetic {
            count: 200,
            seed: 5,
            noise_std: 0.0,
        },
        folds: 2,
        grid_size: 20,
        cfe_samples: Some(8),
        ..RunConfig::default()
    };
    let mut config = config;
    config.regressor.epochs = 5;
    config.regressor.hidden_layers = vec![16, 16];
    config.nsga.population_size = 12;
    config.nsga.generations = 6;

    let dir = tempfile::tempdir().expect("temp dir");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run(&config, Some(&a)).expect("first run");
    run(&config, Some(&b)).expect("second run");
    let reports = |p: &Path| -> Vec<(String, Vec<u8>)> {
        let mut out: Vec<_> = fs::read_dir(p)
            .expect("run dir")
            .map(|e| e.expect("entry").path())
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).expect("read")))
            .collect();
        out.sort();
        out
    };
    let (ra, rb) = (reports(&a), reports(&b));
    let n = ra.len();
    verdict(n >= 4 && ra == rb, format!("{n} JSON files compared byte for byte"))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut results: Vec<(&str, Verdict)> = Vec::new();
    let mut record = |name: &'static str, v: Verdict| {
        println!(
            "[{}] {name}: {} ({:.0}s)",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
        results.push((name, v));
    };

    record("6 NSGA-II oracle equivalence", nsga_oracle());
    let oracle = oracle_setup();
    record("7 numerical invariants", numerical_invariants(&oracle));
    record("8 oracle-model end-to-end", oracle_end_to_end(&oracle));
    record("9 determinism", determinism());

    println!("full run: 10 folds, {CFE_SAMPLES} counterfactual searches per fold and threshold ...");
    let outcome = full_run();
    record("1 synthetic regression quality", regression_quality(&outcome));
    record("2 fPCA sufficiency", fpca_sufficiency(&outcome));
    record("3 global relevance ranking", relevance_ranking(&outcome));
    record("4 top combination table", combination_table(&outcome));
    record("5 epsilon monotonicity of x3", epsilon_monotonicity(&outcome));

    let failed = results.iter().filter(|(_, v)| !v.pass).count();
    println!("acceptance: {}/{} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
