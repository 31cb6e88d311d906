//! Cross-validated end-to-end run. For every fold: fit the input
//! normalization and the regressor on the training part, build the curve set
//! and fPCA basis over the whole dataset, search counterfactuals, and count
//! the modified features. Fold results are then aggregated per threshold.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cfe::{derive_seed, generate_cfe, CfeResult, NsgaConfig};
use crate::curves::{curve_set, make_grid, CurveSet, Rescaled};
use crate::data::{
    generate_synthetic_with_noise, kfold_split, load_csv, CsvSchema, Dataset, FoldSplit, NormalizationParams,
};
use crate::error::{Error, Result};
use crate::explain::{aggregate_folds, local_explanation, FoldReport, GlobalReport, LocalExplanation, ReportDocument};
use crate::fpca::{fit_matrix, FpcaModel, DEFAULT_COMPONENTS};
use crate::regressor::{train, Mlp, RegressorConfig};
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.json";
const MANIFEST_FORMAT: &str = "curvecf-run";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSource {
    Synthetic {
        count: usize,
        seed: u64,
        #[serde(default)]
        noise_std: f64,
    },
    Csv {
        path: PathBuf,
        target: String,
        #[serde(default)]
        schema: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::Synthetic {
            count: 10_000,
            seed: 0,
            noise_std: 0.0,
        }
    }
}

impl DataSource {
    pub fn load<T: Scalar>(&self) -> Result<Dataset<T>> {
        match self {
            DataSource::Synthetic { count, seed, noise_std } => {
                generate_synthetic_with_noise(*count, *seed, *noise_std)
            }
            DataSource::Csv { path, target, schema } => {
                let schema = schema.as_ref().map(CsvSchema::load).transpose()?;
                load_csv(path, target, schema.as_ref())
            }
        }
    }
}

/// Units in which curve distances (and therefore epsilon) are measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveUnits {
    /// Model output units over the normalized active-feature axis.
    Raw,
    /// Responses divided by the training-target standard deviation and the
    /// quadrature taken over the active feature in its own standard
    /// deviations.
    #[default]
    Standardized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    #[default]
    F64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub source: DataSource,
    pub active: String,
    pub epsilons: Vec<f64>,
    pub folds: usize,
    pub grid_size: usize,
    pub components: usize,
    pub curve_units: CurveUnits,
    pub regressor: RegressorConfig,
    pub nsga: NsgaConfig,
    /// Seeds the fold split and the counterfactual subsample.
    pub seed: u64,
    /// Counterfactuals per fold; `None` searches every sample.
    pub cfe_samples: Option<usize>,
    pub include_failed: bool,
    pub top_k: usize,
    pub min_combination_size: usize,
    /// Worker threads for the per-sample searches; `None` uses all cores.
    pub threads: Option<usize>,
    pub precision: Precision,
    /// Write the per-fold curve and score dumps (large for big datasets).
    pub write_curves: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            source: DataSource::default(),
            active: "x1".into(),
            epsilons: vec![0.4, 0.6, 0.8],
            folds: 10,
            grid_size: 100,
            components: DEFAULT_COMPONENTS,
            curve_units: CurveUnits::default(),
            regressor: RegressorConfig::default(),
            nsga: NsgaConfig::default(),
            seed: 0,
            cfe_samples: None,
            include_failed: true,
            top_k: 5,
            min_combination_size: 2,
            threads: None,
            precision: Precision::default(),
            write_curves: true,
        }
    }
}

impl RunConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.epsilons.is_empty() {
            return Err(Error::InvalidConfig("at least one epsilon is required".into()));
        }
        if let Some(e) = self.epsilons.iter().find(|e| !(**e > 0.0 && e.is_finite())) {
            return Err(Error::InvalidConfig(format!("epsilon {e} must be > 0")));
        }
        if self.folds < 2 {
            return Err(Error::InvalidConfig("folds must be >= 2".into()));
        }
        if self.grid_size < 2 {
            return Err(Error::InvalidConfig("grid size must be >= 2".into()));
        }
        if self.components == 0 || self.top_k == 0 {
            return Err(Error::InvalidConfig("components and top_k must be >= 1".into()));
        }
        if self.cfe_samples == Some(0) {
            return Err(Error::InvalidConfig("cfe_samples must be >= 1".into()));
        }
        if self.threads == Some(0) {
            return Err(Error::InvalidConfig("threads must be >= 1".into()));
        }
        self.regressor.validate()?;
        self.nsga.validate()
    }
}

/// Per-fold facts recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold_id: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub validation_mse: f64,
    pub epochs_run: usize,
    pub regressor_seed: u64,
    pub search_seed: u64,
    pub response_factor: f64,
    pub axis_factor: f64,
    pub explained_variance_ratio: Vec<f64>,
    pub cumulative_explained: f64,
    /// Samples searched; `None` means every sample.
    pub cfe_samples: Option<Vec<usize>>,
    /// Fraction of successful searches, one entry per epsilon.
    pub success_rate: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: String,
    pub config: RunConfig,
    pub feature_names: Vec<String>,
    pub active_index: usize,
    pub n_samples: usize,
    pub folds: Vec<FoldSummary>,
}

impl Manifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::file(path, e))?;
        let manifest: Self = serde_json::from_reader(BufReader::new(file))?;
        if manifest.format != MANIFEST_FORMAT {
            return Err(Error::InvalidConfig(format!("{} is not a run manifest", path.display())));
        }
        Ok(manifest)
    }
}

pub struct RunOutcome {
    pub manifest: Manifest,
    /// One entry per epsilon, in config order.
    pub reports: Vec<GlobalReport>,
    /// `fold_reports[e][f]`: fold `f` at epsilon `e`.
    pub fold_reports: Vec<Vec<FoldReport>>,
}

impl RunOutcome {
    pub fn documents(&self) -> Result<Vec<ReportDocument>> {
        self.reports
            .iter()
            .map(|r| ReportDocument::new(r, &self.manifest.feature_names))
            .collect()
    }
}

/// One line of a counterfactual dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CfeRecord {
    pub sample_index: usize,
    pub epsilon: f64,
    pub success: bool,
    pub distance: f64,
    pub alpha: Vec<String>,
    /// Denormalized feature values.
    pub counterfactual: BTreeMap<String, f64>,
    pub front_size: usize,
}

impl CfeRecord {
    pub fn new<T: Scalar>(
        result: &CfeResult<T>,
        local: &LocalExplanation,
        names: &[String],
        params: &NormalizationParams,
    ) -> Self {
        let counterfactual = result
            .counterfactual
            .features
            .iter()
            .enumerate()
            .map(|(i, &v)| (names[i].clone(), params.invert_value(i, v).as_f64()))
            .collect();
        Self {
            sample_index: result.sample_index,
            epsilon: result.epsilon.as_f64(),
            success: result.success,
            distance: result.distance.as_f64(),
            alpha: local.alpha.iter().map(|&i| names[i].clone()).collect(),
            counterfactual,
            front_size: result.pareto_front.len(),
        }
    }

    pub fn local(&self, names: &[String]) -> Result<LocalExplanation> {
        let alpha = self
            .alpha
            .iter()
            .map(|a| {
                names
                    .iter()
                    .position(|n| n == a)
                    .ok_or_else(|| Error::UnknownFeature(a.clone()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LocalExplanation {
            sample_index: self.sample_index,
            alpha,
            epsilon: self.epsilon,
            success: self.success,
        })
    }
}

pub fn epsilon_label(epsilon: f64) -> String {
    format!("eps{epsilon}")
}

pub fn fold_dir(out: &Path, fold_id: usize) -> PathBuf {
    out.join(format!("fold_{fold_id:02}"))
}

/// Response multiplier and quadrature-axis multiplier for `units`, from the
/// (normalized) training data.
pub fn curve_factors<T: Scalar>(train: &Dataset<T>, active: usize, units: CurveUnits) -> Result<(f64, f64)> {
    match units {
        CurveUnits::Raw => Ok((1.0, 1.0)),
        CurveUnits::Standardized => {
            let sd = |values: Vec<f64>| {
                let n = values.len() as f64;
                let mean = values.iter().sum::<f64>() / n;
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0)).sqrt()
            };
            let y_sd = sd(train.targets().iter().map(|v| v.as_f64()).collect());
            let x_sd = sd(train.features().column(active).iter().map(|v| v.as_f64()).collect());
            if !(y_sd > 0.0 && x_sd > 0.0) {
                return Err(Error::InsufficientData(
                    "standardized curve units need non-constant targets and active feature".into(),
                ));
            }
            Ok((1.0 / y_sd, 1.0 / x_sd))
        }
    }
}

/// fPCA over a curve set whose quadrature axis is the grid times `axis_factor`.
pub fn fit_fpca<T: Scalar>(set: &CurveSet<T>, components: usize, axis_factor: f64) -> Result<FpcaModel<T>> {
    let axis: Vec<T> = set.grid.values().iter().map(|&g| g * T::lit(axis_factor)).collect();
    fit_matrix(set.to_matrix().view(), &axis, components)
}

/// `sample_index,grid_value,response` with the grid denormalized.
pub fn write_curves_csv<T: Scalar, W: Write>(set: &CurveSet<T>, params: &NormalizationParams, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["sample_index", "grid_value", "response"])?;
    let s = set.grid.active_index();
    let grid: Vec<String> = set
        .grid
        .values()
        .iter()
        .map(|&g| params.invert_value(s, g).as_f64().to_string())
        .collect();
    for curve in &set.curves {
        let j = curve.sample_index.to_string();
        for (g, v) in grid.iter().zip(&curve.values) {
            w.write_record([j.as_str(), g, &v.as_f64().to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `sample_index,v1..vK`.
pub fn write_scores_csv<T: Scalar, W: Write>(set: &CurveSet<T>, fpca: &FpcaModel<T>, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["sample_index".to_string()];
    header.extend((1..=fpca.n_components()).map(|k| format!("v{k}")));
    w.write_record(&header)?;
    for curve in &set.curves {
        let scores = fpca.project(curve)?;
        let mut row = vec![curve.sample_index.to_string()];
        row.extend(scores.0.iter().map(|v| v.as_f64().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).map_err(|e| Error::file(path, e))?))
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").map_err(|e| Error::file(path, e))?;
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn write_cfe_jsonl(path: &Path, records: &[CfeRecord]) -> Result<()> {
    let mut w = create(path)?;
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n").map_err(|e| Error::file(path, e))?;
    }
    w.flush().map_err(|e| Error::file(path, e))
}

pub fn read_cfe_jsonl(path: &Path) -> Result<Vec<CfeRecord>> {
    let file = File::open(path).map_err(|e| Error::file(path, e))?;
    let mut out = Vec::new();
    for line in BufReader::new(file).lines() {
        let line = line.map_err(|e| Error::file(path, e))?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

/// Writes `report_<eps>.json` and `report_<eps>.csv` under `out`.
pub fn write_report(out: &Path, doc: &ReportDocument) -> Result<()> {
    let label = epsilon_label(doc.epsilon);
    write_json(&out.join(format!("report_{label}.json")), doc)?;
    let path = out.join(format!("report_{label}.csv"));
    let w = create(&path)?;
    doc.write_csv(w)
}

fn choose_samples(n: usize, wanted: Option<usize>, seed: u64) -> Option<Vec<usize>> {
    let m = wanted?;
    if m >= n {
        return None;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, n, m).into_vec();
    picked.sort_unstable();
    Some(picked)
}

struct FoldOutput {
    summary: FoldSummary,
    reports: Vec<FoldReport>,
}

fn run_fold<T: Scalar>(
    config: &RunConfig,
    data: &Dataset<T>,
    split: &FoldSplit,
    pool: &rayon::ThreadPool,
    out: Option<&Path>,
) -> Result<FoldOutput> {
    let f = split.fold_id;
    let active = data.active_index().expect("active feature set by caller");
    let names = data.feature_names();

    let train_raw = data.subset(&split.train_indices)?;
    let val_raw = data.subset(&split.validation_indices)?;
    let params = NormalizationParams::fit(&train_raw);
    for i in params.constant_features() {
        warn!("fold {f}: feature `{}` is constant in the training split", names[i]);
    }
    let train_set = params.apply(&train_raw)?;
    let val_set = params.apply(&val_raw)?;
    let all = params.apply(data)?;

    let regressor_seed = derive_seed(config.regressor.seed, f as u64);
    let reg_config = RegressorConfig {
        seed: regressor_seed,
        ..config.regressor.clone()
    };
    let (mut model, report) = train(&train_set, &val_set, &reg_config).map_err(|e| e.context("training"))?;
    model.set_normalization(Some(params.clone()));
    let validation_mse = report.validation_mse;
    info!("fold {f}: validation MSE {validation_mse:.3e} after {} epochs", report.epochs_run);

    let grid = make_grid(&train_set, active, config.grid_size)?;
    let (response_factor, axis_factor) = curve_factors(&train_set, active, config.curve_units)?;
    let scaled = Rescaled {
        model: &model,
        factor: T::lit(response_factor),
    };
    let set = curve_set(&scaled, &all, &grid)?;
    let fpca = fit_fpca(&set, config.components, axis_factor)?;
    let cumulative_explained = fpca.cumulative_explained().as_f64();
    info!("fold {f}: {} fPCs explain {:.4}", config.components, cumulative_explained);

    let selection = choose_samples(all.len(), config.cfe_samples, derive_seed(config.seed, f as u64));
    let samples: Vec<usize> = selection.clone().unwrap_or_else(|| (0..all.len()).collect());
    let search_seed = derive_seed(config.nsga.seed, f as u64);
    let nsga = NsgaConfig {
        seed: search_seed,
        ..config.nsga.clone()
    };
    let tol = T::lit(config.nsga.tie_tolerance);

    let dir = out.map(|o| fold_dir(o, f));
    if let Some(dir) = &dir {
        fs::create_dir_all(dir).map_err(|e| Error::file(dir, e))?;
        model.save(dir.join("model.json"))?;
        write_json(&dir.join("fpca.json"), &fpca)?;
        if config.write_curves {
            write_curves_csv(&set, &params, create(&dir.join("curves.csv"))?)?;
            write_scores_csv(&set, &fpca, create(&dir.join("scores.csv"))?)?;
        }
    }

    let mut reports = Vec::with_capacity(config.epsilons.len());
    let mut success_rate = Vec::with_capacity(config.epsilons.len());
    for &eps in &config.epsilons {
        let results: Vec<CfeResult<T>> = pool.install(|| {
            samples
                .par_iter()
                .map(|&j| {
                    generate_cfe(&scaled, &fpca, &grid, &all, j, T::lit(eps), &nsga)
                        .map_err(|e| e.context(format!("fold {f}, sample {j}, epsilon {eps}")))
                })
                .collect::<Result<_>>()
        })?;
        let locals: Vec<LocalExplanation> = results
            .iter()
            .map(|r| LocalExplanation {
                // the configured value, not its round trip through `T`
                epsilon: eps,
                ..local_explanation(&all.sample(r.sample_index), r, active, tol)
            })
            .collect();
        let fold_report = FoldReport::new(f, &locals, all.n_features(), active, config.include_failed)?;
        let successes = results.iter().filter(|r| r.success).count();
        success_rate.push(successes as f64 / results.len() as f64);
        info!("fold {f}, epsilon {eps}: {successes}/{} searches reached the threshold", results.len());
        if let Some(dir) = &dir {
            let records: Vec<CfeRecord> = results
                .iter()
                .zip(&locals)
                .map(|(r, l)| CfeRecord {
                    epsilon: eps,
                    ..CfeRecord::new(r, l, &names, &params)
                })
                .collect();
            write_cfe_jsonl(&dir.join(format!("cfe_{}.jsonl", epsilon_label(eps))), &records)?;
        }
        reports.push(fold_report);
    }

    Ok(FoldOutput {
        summary: FoldSummary {
            fold_id: f,
            train_size: train_set.len(),
            validation_size: val_set.len(),
            validation_mse,
            epochs_run: report.epochs_run,
            regressor_seed,
            search_seed,
            response_factor,
            axis_factor,
            explained_variance_ratio: fpca.explained_variance_ratio.iter().map(|v| v.as_f64()).collect(),
            cumulative_explained,
            cfe_samples: selection,
            success_rate,
        },
        reports,
    })
}

fn run_typed<T: Scalar>(config: &RunConfig, out: Option<&Path>) -> Result<RunOutcome> {
    let data: Dataset<T> = config
        .source
        .load::<T>()
        .map_err(|e| e.context("loading data"))?
        .with_active_name(&config.active)?;
    let active = data.active_index().expect("just set");
    let splits = kfold_split(&data, config.folds, config.seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::InvalidConfig(format!("thread pool: {e}")))?;
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::file(out, e))?;
    }

    let mut summaries = Vec::with_capacity(splits.len());
    let mut fold_reports: Vec<Vec<FoldReport>> = vec![Vec::with_capacity(splits.len()); config.epsilons.len()];
    for split in &splits {
        let fold = run_fold(config, &data, split, &pool, out).map_err(|e| e.context(format!("fold {}", split.fold_id)))?;
        for (slot, r) in fold_reports.iter_mut().zip(fold.reports) {
            slot.push(r);
        }
        summaries.push(fold.summary);
    }

    let reports = fold_reports
        .iter()
        .map(|r| aggregate_folds(r, config.top_k, config.min_combination_size))
        .collect::<Result<Vec<_>>>()?;
    let outcome = RunOutcome {
        manifest: Manifest {
            format: MANIFEST_FORMAT.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config: config.clone(),
            feature_names: data.feature_names(),
            active_index: active,
            n_samples: data.len(),
            folds: summaries,
        },
        reports,
        fold_reports,
    };
    if let Some(out) = out {
        for doc in outcome.documents()? {
            write_report(out, &doc)?;
        }
        for (eps, folds) in config.epsilons.iter().zip(&outcome.fold_reports) {
            write_json(&out.join(format!("folds_{}.json", epsilon_label(*eps))), folds)?;
        }
        write_json(&out.join(MANIFEST_FILE), &outcome.manifest)?;
    }
    Ok(outcome)
}

/// Runs the whole cross-validated pipeline. With `out`, every artifact is
/// written below that directory.
pub fn run(config: &RunConfig, out: Option<&Path>) -> Result<RunOutcome> {
    config.validate()?;
    match config.precision {
        Precision::F32 => run_typed::<f32>(config, out),
        Precision::F64 => run_typed::<f64>(config, out),
    }
}

/// Recomputes the global reports of a finished run from its counterfactual
/// dumps, with new aggregation settings.
pub fn reaggregate(
    run_dir: &Path,
    top_k: usize,
    min_size: usize,
    include_failed: bool,
) -> Result<Vec<ReportDocument>> {
    let manifest = Manifest::load(run_dir.join(MANIFEST_FILE))?;
    let names = &manifest.feature_names;
    let mut docs = Vec::new();
    for &eps in &manifest.config.epsilons {
        let mut folds = Vec::new();
        for summary in &manifest.folds {
            let path = fold_dir(run_dir, summary.fold_id).join(format!("cfe_{}.jsonl", epsilon_label(eps)));
            let locals = read_cfe_jsonl(&path)?
                .iter()
                .map(|r| r.local(names))
                .collect::<Result<Vec<_>>>()?;
            folds.push(FoldReport::new(
                summary.fold_id,
                &locals,
                names.len(),
                manifest.active_index,
                include_failed,
            )?);
        }
        docs.push(ReportDocument::new(&aggregate_folds(&folds, top_k, min_size)?, names)?);
    }
    Ok(docs)
}

/// Loads a saved network; its stored normalization is required.
pub fn load_model<T: Scalar>(path: &Path) -> Result<(Mlp<T>, NormalizationParams)> {
    let model = Mlp::<T>::load(path)?;
    let params = model
        .normalization()
        .cloned()
        .ok_or_else(|| Error::CorruptModel("model has no stored input normalization".into()))?;
    Ok((model, params))
}
