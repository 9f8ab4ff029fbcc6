//! `hgpp`: simulate, analyze, train, predict and evaluate daily GPP.

mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use hgpp_core::baselines::{baseline_daily, write_vi_gpp_csv, ViKind, ViModelSet};
use hgpp_core::eval::{evaluate, read_field_days};
use hgpp_core::forward_sim::{MeteoState, VcmaxMode};
use hgpp_core::gsa::{gpp_model, pawn_evaluate, pawn_indices_from, write_report, PawnConfig};
use hgpp_core::ml::forest::{fit_forest, ForestHyper};
use hgpp_core::ml::mlp::{fit_mlp, MlpHyper};
use hgpp_core::ml::{load_model, save_model, PreparedData, Target, TrainReport, TrainedModel};
use hgpp_core::pipeline::{aggregate_fields, predict_all, read_meteo, read_pixels, write_daily_csv, write_field_csv};
use hgpp_core::sampling::{generate_training_set, CorpusConfig, ParameterSpace, TrainingSet};
use hgpp_core::spectral::SensorSpec;

#[derive(Parser, Debug)]
#[command(name = "hgpp", version, about = "Hybrid GPP estimation from simulated canopy reflectance")]
#[command(args_override_self = true)]
struct Cli {
    /// Worker threads (defaults to all cores). Outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,

    /// JSON object of flag names to values; explicit flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a training corpus and its diagnostics.
    Simulate(SimulateArgs),
    /// PAWN sensitivity of simulated GPP to the model inputs.
    Gsa(GsaArgs),
    /// Fit a network or forest on a corpus.
    Train(TrainArgs),
    /// Daily GPP for observed pixels.
    Predict(PredictArgs),
    /// Daily GPP from a vegetation-index model.
    Baseline(BaselineArgs),
    /// Score daily GPP against reference values.
    Evaluate(EvaluateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Vcmax {
    Constant,
    CabCoupled,
}

impl From<Vcmax> for VcmaxMode {
    fn from(v: Vcmax) -> Self {
        match v {
            Vcmax::Constant => VcmaxMode::Constant,
            Vcmax::CabCoupled => VcmaxMode::CabCoupled,
        }
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    /// Main LHS rows.
    #[arg(long, default_value_t = 50_000)]
    n: usize,
    /// Extra rows with LAI forced to 0.001 and GPP to 0.
    #[arg(long, default_value_t = 3_000)]
    lowlai: usize,
    #[arg(long, default_value = "sentinel2")]
    sensor: String,
    /// `full`, `vegetation` or a JSON parameter-space file.
    #[arg(long, default_value = "full")]
    space: String,
    #[arg(long, value_enum, default_value = "cab-coupled")]
    vcmax: Vcmax,
    #[arg(long, default_value = "training.csv")]
    out: PathBuf,
    #[arg(long, default_value = "diagnostics.csv")]
    diagnostics: PathBuf,
}

#[derive(Args, Debug)]
struct GsaArgs {
    #[arg(long, default_value = "vegetation")]
    space: String,
    #[arg(long, default_value_t = 1000)]
    nu: usize,
    #[arg(long, default_value_t = 400)]
    nc: usize,
    #[arg(long, default_value_t = 30)]
    n_cond: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Output interval `lo:hi` (either end may be empty); repeatable.
    #[arg(long, value_parser = parse_subrange)]
    subrange: Vec<(f64, f64)>,
    /// Solar zenith of the sensitivity runs, degrees.
    #[arg(long, default_value_t = 30.0)]
    sza: f64,
    #[arg(long, value_enum, default_value = "cab-coupled")]
    vcmax: Vcmax,
    /// Skip the dummy input used for the significance threshold.
    #[arg(long)]
    no_dummy: bool,
    #[arg(long, default_value = "pawn.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelKind {
    Mlp,
    Forest,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long, default_value = "training.csv")]
    data: PathBuf,
    /// Diagnostics CSV; needed for fpar targets.
    #[arg(long)]
    diagnostics: Option<PathBuf>,
    /// Train on this sensor's bands (a subset of the corpus bands).
    #[arg(long)]
    sensor: Option<String>,
    #[arg(long, value_enum, default_value = "mlp")]
    model: ModelKind,
    /// Comma list from gpp, lai, fpar, fpar_cab.
    #[arg(long, default_value = "gpp")]
    targets: String,
    /// Hidden layer sizes.
    #[arg(long, default_value = "12,12")]
    arch: String,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value_t = 10)]
    patience: usize,
    #[arg(long, default_value_t = 100)]
    trees: usize,
    #[arg(long)]
    max_depth: Option<usize>,
    #[arg(long, default_value_t = 1)]
    min_leaf: usize,
    #[arg(long)]
    no_bootstrap: bool,
    /// Bootstrap weight of rows with GPP below 2.
    #[arg(long)]
    low_gpp_weight: Option<f64>,
    /// Seed of the 85/15 split; defaults to --seed.
    #[arg(long)]
    split_seed: Option<u64>,
    /// After scoring on the split, refit on every row for the best epoch count.
    #[arg(long)]
    refit_full: bool,
    #[arg(long, default_value = "model.json")]
    out: PathBuf,
    #[arg(long, default_value = "train_report.json")]
    report: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[arg(long, default_value = "model.json")]
    model: PathBuf,
    #[arg(long)]
    pixels: PathBuf,
    #[arg(long)]
    meteo: PathBuf,
    /// Sensor of the pixels; defaults to the model's.
    #[arg(long)]
    sensor: Option<String>,
    #[arg(long, default_value = "daily_gpp.csv")]
    out: PathBuf,
    /// Also write field means here.
    #[arg(long)]
    fields: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(long)]
    vi: String,
    #[arg(long)]
    pixels: PathBuf,
    #[arg(long)]
    meteo: PathBuf,
    #[arg(long, default_value = "sentinel2")]
    sensor: String,
    /// Coefficient table replacing the bundled one.
    #[arg(long)]
    models: Option<PathBuf>,
    #[arg(long, default_value = "vi_gpp.csv")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// CSV with field_id, date, gpp_gc_m2_d; pixel rows are averaged per field and date.
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, default_value = "eval.json")]
    out: PathBuf,
}

fn parse_subrange(s: &str) -> Result<(f64, f64), String> {
    let (lo, hi) = s.split_once(':').ok_or_else(|| format!("expected lo:hi, got {s:?}"))?;
    let bound = |v: &str, default: f64| -> Result<f64, String> {
        let v = v.trim();
        if v.is_empty() {
            Ok(default)
        } else {
            v.parse().map_err(|_| format!("bad bound {v:?}"))
        }
    };
    let (lo, hi) = (bound(lo, f64::NEG_INFINITY)?, bound(hi, f64::INFINITY)?);
    if lo >= hi {
        return Err(format!("empty interval {s:?}"));
    }
    Ok((lo, hi))
}

fn parse_arch(s: &str) -> Result<Vec<usize>> {
    let sizes: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().with_context(|| format!("bad layer size {p:?}")))
        .collect::<Result<_>>()?;
    if sizes.is_empty() || sizes.contains(&0) {
        bail!("architecture needs at least one non-empty hidden layer");
    }
    Ok(sizes)
}

fn resolve_space(name: &str) -> Result<ParameterSpace> {
    Ok(match name {
        "full" => ParameterSpace::full(),
        "vegetation" => ParameterSpace::vegetation(),
        path => ParameterSpace::load(path)?,
    })
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
}

fn simulate(args: &SimulateArgs, seed: u64) -> Result<()> {
    let space = resolve_space(&args.space)?;
    let sensor = SensorSpec::resolve(&args.sensor)?;
    let cfg = CorpusConfig {
        n_main: args.n,
        n_lowlai: args.lowlai,
        seed,
        vcmax_mode: args.vcmax.into(),
    };
    let set = generate_training_set(&space, &sensor, &cfg)?;
    set.write_csv(&args.out)?;
    set.write_diagnostics_csv(&args.diagnostics)?;
    eprintln!("{} rows written to {} ({} failed)", set.rows.len(), args.out.display(), set.failed);
    Ok(())
}

fn gsa(args: &GsaArgs, seed: u64) -> Result<()> {
    let space = resolve_space(&args.space)?;
    let cfg = PawnConfig {
        nu: args.nu,
        nc: args.nc,
        n_cond: args.n_cond,
        seed,
        subrange: None,
        dummy: !args.no_dummy,
        alpha: args.alpha,
    };
    eprintln!("{} model runs", cfg.budget(space.len()));
    let model = gpp_model(&space, MeteoState::default(), args.sza, args.vcmax.into());
    let samples = pawn_evaluate(model, &space, &cfg)?;
    let full = pawn_indices_from(&samples, None, args.alpha)?;
    let subs = args
        .subrange
        .iter()
        .map(|&r| pawn_indices_from(&samples, Some(r), args.alpha))
        .collect::<hgpp_core::Result<Vec<_>>>()?;
    write_report(&args.out, &full, &subs)?;
    println!("{:<12} {:>8}  influential", "input", "index");
    for i in full.ranking() {
        let flag = if full.above_threshold[i] { "yes" } else { "no" };
        println!("{:<12} {:>8.4}  {flag}", full.names[i], full.indices[i]);
    }
    println!("threshold {:.4}", full.threshold);
    for s in &subs {
        let (lo, hi) = s.subrange.expect("sub-range result");
        println!("GPP in ({lo}, {hi}]: {} influential inputs", s.n_above());
    }
    if samples.failed > 0 {
        eprintln!("{} runs failed and were left out", samples.failed);
    }
    Ok(())
}

fn load_corpus(args: &TrainArgs) -> Result<TrainingSet> {
    let mut set = TrainingSet::read_csv(&args.data, "corpus")?;
    if let Some(d) = &args.diagnostics {
        set.read_diagnostics_csv(d)?;
    }
    let sensor = match &args.sensor {
        Some(name) => SensorSpec::resolve(name)?,
        None => {
            let s2 = SensorSpec::sentinel2();
            if s2.bands.iter().map(|b| &b.id).eq(set.band_ids.iter()) {
                s2
            } else {
                bail!("corpus bands are not the Sentinel-2 set; pass --sensor");
            }
        }
    };
    if sensor.bands.iter().map(|b| &b.id).eq(set.band_ids.iter()) {
        set.sensor = sensor.name;
        Ok(set)
    } else {
        Ok(set.select_bands(&sensor)?)
    }
}

fn fit(args: &TrainArgs, data: &PreparedData, seed: u64, epochs: usize) -> Result<(TrainedModel, TrainReport)> {
    Ok(match args.model {
        ModelKind::Mlp => {
            let hyper = MlpHyper {
                hidden: parse_arch(&args.arch)?,
                epochs,
                batch: args.batch,
                lr: args.lr,
                patience: args.patience,
                seed,
            };
            let (m, r) = fit_mlp(data, &hyper)?;
            (TrainedModel::Mlp(m), r)
        }
        ModelKind::Forest => {
            let hyper = ForestHyper {
                trees: args.trees,
                max_depth: args.max_depth,
                min_leaf: args.min_leaf,
                bootstrap: !args.no_bootstrap,
                low_gpp_weight: args.low_gpp_weight,
                seed,
            };
            let (m, r) = fit_forest(data, &hyper)?;
            (TrainedModel::Forest(m), r)
        }
    })
}

fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let set = load_corpus(args)?;
    let targets = Target::parse_list(&args.targets)?;
    let data = PreparedData::new(&set, &targets, args.split_seed.unwrap_or(seed))?;
    let (mut model, report) = fit(args, &data, seed, args.epochs)?;
    for s in &report.scores {
        println!(
            "{:<9} r2 train {:.4}  r2 test {:.4}  rmse test {:.4}",
            s.target.name(),
            s.r2_train,
            s.r2_test,
            s.rmse_test
        );
    }
    eprintln!(
        "fit took {:.1} s over {} epochs, kept epoch {}",
        report.wall_time_s, report.epochs_run, report.best_epoch
    );
    if args.refit_full {
        let all = PreparedData::full(&set, &targets)?;
        model = fit(args, &all, seed, report.best_epoch.max(1))?.0;
    }
    save_model(&model, &args.out)?;
    write_json(&args.report, &report)?;
    Ok(())
}

fn predict(args: &PredictArgs) -> Result<()> {
    let model = load_model(&args.model)?;
    let sensor = match &args.sensor {
        Some(s) => SensorSpec::resolve(s)?,
        None => SensorSpec::resolve(&model.preprocessor().sensor)?,
    };
    let pixels = read_pixels(&args.pixels, &sensor)?;
    let meteo = read_meteo(&args.meteo)?;
    let records = predict_all(&pixels, &meteo, &model)?;
    write_daily_csv(&args.out, &records)?;
    if let Some(f) = &args.fields {
        write_field_csv(f, &aggregate_fields(&records))?;
    }
    eprintln!("{} pixel-days written to {}", records.len(), args.out.display());
    Ok(())
}

fn baseline(args: &BaselineArgs) -> Result<()> {
    let kind: ViKind = args.vi.parse()?;
    let models = match &args.models {
        Some(p) => ViModelSet::load(p)?,
        None => ViModelSet::default(),
    };
    let sensor = SensorSpec::resolve(&args.sensor)?;
    let pixels = read_pixels(&args.pixels, &sensor)?;
    let meteo = read_meteo(&args.meteo)?;
    let rows = baseline_daily(&pixels, &meteo, &models, kind)?;
    write_vi_gpp_csv(&args.out, &rows)?;
    eprintln!("{} pixel-days written to {}", rows.len(), args.out.display());
    Ok(())
}

fn evaluate_cmd(args: &EvaluateArgs) -> Result<()> {
    let pred = read_field_days(&args.pred).with_context(|| format!("reading {}", args.pred.display()))?;
    let reference =
        read_field_days(&args.reference).with_context(|| format!("reading {}", args.reference.display()))?;
    let report = evaluate(&pred, &reference)?;
    report.write_json(&args.out)?;
    print!("{}", report.to_table());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match &cli.command {
        Command::Simulate(a) => simulate(a, cli.seed),
        Command::Gsa(a) => gsa(a, cli.seed),
        Command::Train(a) => train(a, cli.seed),
        Command::Predict(a) => predict(a),
        Command::Baseline(a) => baseline(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    }
}

fn main() -> ExitCode {
    let args = match config::expand(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let start = Instant::now();
    let result = run(cli);
    eprintln!("wall time {:.2} s", start.elapsed().as_secs_f64());
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
