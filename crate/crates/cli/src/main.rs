use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde_json::json;

use curvecf::cfe::{generate_cfe, NsgaConfig};
use curvecf::curves::{curve_set, CurveGrid, Rescaled};
use curvecf::data::{generate_synthetic_with_noise, kfold_split, load_csv, write_csv, CsvSchema, Dataset};
use curvecf::explain::local_explanation;
use curvecf::pipeline::{
    curve_factors, fit_fpca, load_model, reaggregate, run, write_cfe_jsonl, write_curves_csv, write_report,
    write_scores_csv, CfeRecord, CurveUnits, DataSource, Precision, RunConfig, MANIFEST_FILE,
};
use curvecf::regressor::{train, RegressorConfig};

#[derive(Parser)]
#[command(name = "curvecf", version, about = "Counterfactual explanations of response-curve shape")]
struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic benchmark dataset as CSV.
    Synth(SynthArgs),
    /// Train the regression network on a CSV dataset.
    Train(TrainArgs),
    /// Dump the aligned response curves of a trained model.
    Curves(CurvesArgs),
    /// Search counterfactuals for selected samples with a trained model.
    Cfe(CfeArgs),
    /// Run the full cross-validated pipeline.
    Run(RunArgs),
    /// Re-aggregate the reports of a finished run.
    Report(ReportArgs),
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value_t = 10_000)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Standard deviation of Gaussian noise added to the target.
    #[arg(long, default_value_t = 0.0)]
    noise_std: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DataArgs {
    /// CSV file with a header row.
    #[arg(long)]
    data: PathBuf,
    /// Name of the target column.
    #[arg(long, default_value = "y")]
    target: String,
    /// JSON sidecar declaring categorical columns.
    #[arg(long)]
    schema: Option<PathBuf>,
}

impl DataArgs {
    fn load(&self) -> Result<Dataset<f64>> {
        let schema = self.schema.as_ref().map(CsvSchema::load).transpose()?;
        Ok(load_csv(&self.data, &self.target, schema.as_ref())?)
    }
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    /// JSON regressor config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Hidden layer widths, e.g. `100,100`.
    #[arg(long, value_delimiter = ',')]
    hidden: Option<Vec<usize>>,
    #[arg(long)]
    seed: Option<u64>,
    /// The validation part is one fold of a k-fold split.
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[arg(long, default_value_t = 0)]
    split_seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum UnitsArg {
    Raw,
    Standardized,
}

impl From<UnitsArg> for CurveUnits {
    fn from(u: UnitsArg) -> Self {
        match u {
            UnitsArg::Raw => CurveUnits::Raw,
            UnitsArg::Standardized => CurveUnits::Standardized,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PrecisionArg {
    F32,
    F64,
}

#[derive(Args)]
struct CurveArgs {
    /// Model saved by `train` or `run`.
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "x1")]
    active: String,
    #[arg(long, default_value_t = 100)]
    grid: usize,
    #[arg(long, value_enum, default_value = "standardized")]
    units: UnitsArg,
}

#[derive(Args)]
struct CurvesArgs {
    #[command(flatten)]
    curve: CurveArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CfeArgs {
    #[command(flatten)]
    curve: CurveArgs,
    #[arg(long, value_delimiter = ',', default_value = "0.4,0.6,0.8")]
    epsilons: Vec<f64>,
    /// Sample indices; all samples when omitted.
    #[arg(long, value_delimiter = ',')]
    samples: Option<Vec<usize>>,
    #[arg(long, default_value_t = 3)]
    components: usize,
    /// JSON search config; flags below override it.
    #[arg(long)]
    nsga_config: Option<PathBuf>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use a CSV dataset instead of the synthetic one.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    target: Option<String>,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Synthetic sample count.
    #[arg(long, conflicts_with = "data")]
    count: Option<usize>,
    #[arg(long)]
    active: Option<String>,
    #[arg(long, value_delimiter = ',')]
    epsilons: Option<Vec<f64>>,
    #[arg(long)]
    folds: Option<usize>,
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    components: Option<usize>,
    #[arg(long, value_enum)]
    units: Option<UnitsArg>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    generations: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Counterfactual searches per fold (random subset).
    #[arg(long)]
    cfe_samples: Option<usize>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, value_enum)]
    precision: Option<PrecisionArg>,
    /// Drop failed searches from the global statistics.
    #[arg(long)]
    exclude_failed: bool,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    min_size: Option<usize>,
    /// Skip the per-fold curve and score dumps.
    #[arg(long)]
    no_curves: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ReportArgs {
    /// Output directory of a previous `run`.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = 5)]
    top_k: usize,
    #[arg(long, default_value_t = 2)]
    min_size: usize,
    #[arg(long)]
    exclude_failed: bool,
    #[arg(long)]
    out: PathBuf,
}

fn create_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))
}

fn create_file(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(
        File::create(path).with_context(|| format!("cannot write {}", path.display()))?,
    ))
}

fn write_manifest(out: &Path, value: serde_json::Value) -> Result<()> {
    let path = out.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&value)? + "\n";
    fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let ds = generate_synthetic_with_noise::<f64>(args.count, args.seed, args.noise_std)?;
    create_dir(&args.out)?;
    let path = args.out.join("data.csv");
    write_csv(&ds, create_file(&path)?, "y")?;
    write_manifest(
        &args.out,
        json!({
            "command": "synth",
            "version": env!("CARGO_PKG_VERSION"),
            "count": args.count,
            "seed": args.seed,
            "noise_std": args.noise_std,
            "files": ["data.csv"],
        }),
    )?;
    info!("wrote {} rows to {}", args.count, path.display());
    Ok(())
}

fn cmd_train(args: &TrainArgs) -> Result<()> {
    let mut config = match &args.config {
        Some(p) => serde_json::from_reader(File::open(p).with_context(|| format!("cannot read {}", p.display()))?)?,
        None => RegressorConfig::default(),
    };
    if let Some(v) = args.epochs {
        config.epochs = v;
    }
    if let Some(v) = args.learning_rate {
        config.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = &args.hidden {
        config.hidden_layers = v.clone();
    }
    if let Some(v) = args.seed {
        config.seed = v;
    }
    let data = args.data.load()?;
    let split = kfold_split(&data, args.folds, args.split_seed)?.remove(0);
    let train_raw = data.subset(&split.train_indices)?;
    let val_raw = data.subset(&split.validation_indices)?;
    let params = curvecf::data::NormalizationParams::fit(&train_raw);
    let (mut model, report) = train(&params.apply(&train_raw)?, &params.apply(&val_raw)?, &config)?;
    model.set_normalization(Some(params));
    create_dir(&args.out)?;
    model.save(args.out.join("model.json"))?;
    write_manifest(
        &args.out,
        json!({
            "command": "train",
            "version": env!("CARGO_PKG_VERSION"),
            "data": args.data.data,
            "target": args.data.target,
            "folds": args.folds,
            "split_seed": args.split_seed,
            "regressor": config,
            "validation_mse": report.validation_mse,
            "epochs_run": report.epochs_run,
            "files": ["model.json"],
        }),
    )?;
    println!("validation MSE {:.6e}", report.validation_mse);
    Ok(())
}

struct CurveContext {
    data: Dataset<f64>,
    model: curvecf::Mlp64,
    params: curvecf::data::NormalizationParams,
    grid: CurveGrid<f64>,
    factors: (f64, f64),
}

fn curve_context(args: &CurveArgs) -> Result<CurveContext> {
    let (model, params) = load_model::<f64>(&args.model)?;
    let raw = args.data.load()?.with_active_name(&args.active)?;
    let data = params.apply(&raw)?;
    let s = data.active_index().expect("set above");
    // The grid spans the model's training range, which normalizes to [0, 1].
    let grid = CurveGrid::linspace(s, 0.0, 1.0, args.grid)?;
    let factors = curve_factors(&data, s, args.units.into())?;
    Ok(CurveContext {
        data,
        model,
        params,
        grid,
        factors,
    })
}

fn cmd_curves(args: &CurvesArgs) -> Result<()> {
    let ctx = curve_context(&args.curve)?;
    let scaled = Rescaled {
        model: &ctx.model,
        factor: ctx.factors.0,
    };
    let set = curve_set(&scaled, &ctx.data, &ctx.grid)?;
    create_dir(&args.out)?;
    write_curves_csv(&set, &ctx.params, create_file(&args.out.join("curves.csv"))?)?;
    write_manifest(
        &args.out,
        json!({
            "command": "curves",
            "version": env!("CARGO_PKG_VERSION"),
            "model": args.curve.model,
            "data": args.curve.data.data,
            "active": args.curve.active,
            "grid": args.curve.grid,
            "response_factor": ctx.factors.0,
            "files": ["curves.csv"],
        }),
    )?;
    Ok(())
}

fn cmd_cfe(args: &CfeArgs) -> Result<()> {
    let ctx = curve_context(&args.curve)?;
    let mut nsga: NsgaConfig = match &args.nsga_config {
        Some(p) => serde_json::from_reader(File::open(p).with_context(|| format!("cannot read {}", p.display()))?)?,
        None => NsgaConfig::default(),
    };
    if let Some(v) = args.population {
        nsga.population_size = v;
    }
    if let Some(v) = args.generations {
        nsga.generations = v;
    }
    if let Some(v) = args.seed {
        nsga.seed = v;
    }
    nsga.validate()?;
    let samples = args.samples.clone().unwrap_or_else(|| (0..ctx.data.len()).collect());
    if let Some(&bad) = samples.iter().find(|&&j| j >= ctx.data.len()) {
        bail!("sample {bad} out of range for {} samples", ctx.data.len());
    }

    let scaled = Rescaled {
        model: &ctx.model,
        factor: ctx.factors.0,
    };
    let set = curve_set(&scaled, &ctx.data, &ctx.grid)?;
    let fpca = fit_fpca(&set, args.components, ctx.factors.1)?;
    let names = ctx.data.feature_names();
    let s = ctx.grid.active_index();
    create_dir(&args.out)?;
    serde_json::to_writer_pretty(create_file(&args.out.join("fpca.json"))?, &fpca)?;
    write_scores_csv(&set, &fpca, create_file(&args.out.join("scores.csv"))?)?;
    let mut files = vec!["fpca.json".to_string(), "scores.csv".to_string()];
    for &eps in &args.epsilons {
        let mut records = Vec::with_capacity(samples.len());
        for &j in &samples {
            let result = generate_cfe(&scaled, &fpca, &ctx.grid, &ctx.data, j, eps, &nsga)
                .with_context(|| format!("sample {j}, epsilon {eps}"))?;
            let local = local_explanation(&ctx.data.sample(j), &result, s, nsga.tie_tolerance);
            records.push(CfeRecord::new(&result, &local, &names, &ctx.params));
        }
        let name = format!("cfe_{}.jsonl", curvecf::pipeline::epsilon_label(eps));
        write_cfe_jsonl(&args.out.join(&name), &records)?;
        files.push(name);
    }
    write_manifest(
        &args.out,
        json!({
            "command": "cfe",
            "version": env!("CARGO_PKG_VERSION"),
            "model": args.curve.model,
            "data": args.curve.data.data,
            "active": args.curve.active,
            "grid": args.curve.grid,
            "components": args.components,
            "epsilons": args.epsilons,
            "samples": samples,
            "nsga": nsga,
            "response_factor": ctx.factors.0,
            "axis_factor": ctx.factors.1,
            "cumulative_explained": fpca.cumulative_explained(),
            "files": files,
        }),
    )?;
    Ok(())
}

fn run_config(args: &RunArgs) -> Result<RunConfig> {
    let mut c = match &args.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(path) = &args.data {
        c.source = DataSource::Csv {
            path: path.clone(),
            target: args.target.clone().unwrap_or_else(|| "y".into()),
            schema: args.schema.clone(),
        };
    } else if args.target.is_some() || args.schema.is_some() {
        bail!("--target and --schema need --data");
    }
    if let Some(count) = args.count {
        match &mut c.source {
            DataSource::Synthetic { count: n, .. } => *n = count,
            DataSource::Csv { .. } => bail!("--count applies to the synthetic source only"),
        }
    }
    if let Some(v) = &args.active {
        c.active = v.clone();
    }
    if let Some(v) = &args.epsilons {
        c.epsilons = v.clone();
    }
    if let Some(v) = args.folds {
        c.folds = v;
    }
    if let Some(v) = args.grid {
        c.grid_size = v;
    }
    if let Some(v) = args.components {
        c.components = v;
    }
    if let Some(v) = args.units {
        c.curve_units = v.into();
    }
    if let Some(v) = args.epochs {
        c.regressor.epochs = v;
    }
    if let Some(v) = args.population {
        c.nsga.population_size = v;
    }
    if let Some(v) = args.generations {
        c.nsga.generations = v;
    }
    if let Some(v) = args.seed {
        c.seed = v;
    }
    if let Some(v) = args.cfe_samples {
        c.cfe_samples = Some(v);
    }
    if let Some(v) = args.threads {
        c.threads = Some(v);
    }
    if let Some(v) = args.precision {
        c.precision = match v {
            PrecisionArg::F32 => Precision::F32,
            PrecisionArg::F64 => Precision::F64,
        };
    }
    if args.exclude_failed {
        c.include_failed = false;
    }
    if let Some(v) = args.top_k {
        c.top_k = v;
    }
    if let Some(v) = args.min_size {
        c.min_combination_size = v;
    }
    if args.no_curves {
        c.write_curves = false;
    }
    c.validate()?;
    Ok(c)
}

fn cmd_run(args: &RunArgs) -> Result<()> {
    let config = run_config(args)?;
    let outcome = run(&config, Some(&args.out))?;
    for doc in outcome.documents()? {
        println!("epsilon {}:", doc.epsilon);
        for (name, r) in &doc.relevance {
            println!("  r[{name}] = {:.1}% ± {:.1}", 100.0 * r.mean, 100.0 * r.std);
        }
        for c in &doc.combinations {
            println!("  [{}] {:.1}% ± {:.1}", c.features.join(", "), c.mean_pct, c.std_pct);
        }
    }
    Ok(())
}

fn cmd_report(args: &ReportArgs) -> Result<()> {
    let docs = reaggregate(&args.run, args.top_k, args.min_size, !args.exclude_failed)?;
    create_dir(&args.out)?;
    for doc in &docs {
        write_report(&args.out, doc)?;
    }
    write_manifest(
        &args.out,
        json!({
            "command": "report",
            "version": env!("CARGO_PKG_VERSION"),
            "run": args.run,
            "top_k": args.top_k,
            "min_size": args.min_size,
            "include_failed": !args.exclude_failed,
        }),
    )?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let result = match &cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Train(a) => cmd_train(a),
        Command::Curves(a) => cmd_curves(a),
        Command::Cfe(a) => cmd_cfe(a),
        Command::Run(a) => cmd_run(a),
        Command::Report(a) => cmd_report(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
