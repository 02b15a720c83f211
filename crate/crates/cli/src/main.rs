//! Command-line interface: load games from model files or synthetic specs,
//! run any estimator or oracle, run benchmark suites, and emit JSON or CSV
//! with confidence intervals.
//!
//! Exit codes: 0 success, 2 input/configuration error, 3 sample cap reached
//! without convergence.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use shapreg::diagnostics::{
    bias_variance, covariance_trace, forecast_accuracy, gv_matrix, shapley_exact,
    BiasVarianceReport, ForecastSummary, VariantSpec,
};
use shapreg::error::Error;
use shapreg::estimators::{
    estimate, estimate_stochastic, derive_seed, Estimate, EstimatorConfig, ForecastPoint, Variant,
};
use shapreg::games::{
    load_dataset, load_model, parse_game_spec, sage_game, shap_game, shapley_effects_game, Game,
    Loss, StochasticGame,
};
use shapreg::Result;

const EXIT_INPUT_ERROR: i32 = 2;
const EXIT_NOT_CONVERGED: i32 = 3;

#[derive(Parser)]
#[command(
    name = "shapreg",
    version,
    about = "Shapley value estimation via constrained weighted least squares"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact values by brute-force enumeration (small player counts).
    Exact(ExactArgs),
    /// Attribution values for one prediction of a tabular model.
    Explain(ExplainArgs),
    /// Global feature importance over a labeled dataset.
    Sage(SageArgs),
    /// Global sensitivity against the model's own predictions.
    Effects(EffectsArgs),
    /// Bias/variance, variance-scaling, speedup-ratio, and forecast tables.
    Bench(BenchArgs),
    /// The pairing cross-covariance matrix report.
    Gv(GvArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum EstimatorArg {
    Original,
    Unbiased,
}

impl From<EstimatorArg> for Variant {
    fn from(value: EstimatorArg) -> Variant {
        match value {
            EstimatorArg::Original => Variant::Original,
            EstimatorArg::Unbiased => Variant::Unbiased,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum LossArg {
    Squared,
    CrossEntropy,
}

#[derive(Args)]
struct IoArgs {
    /// Game source: a model JSON path or a synthetic spec string
    /// (e.g. `random:d=8,seed=7`, `unanimity:d=3,T=1,2`).
    #[arg(long)]
    game: String,
    /// Dataset CSV; defaults to the model's background CSV where one is
    /// needed.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Output path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = FormatArg::Json)]
    format: FormatArg,
}

#[derive(Args)]
struct EstimatorArgs {
    #[arg(long, value_enum, default_value_t = EstimatorArg::Original)]
    estimator: EstimatorArg,
    /// Pair each sampled coalition with its complement (the default).
    #[arg(long, overrides_with = "no_paired")]
    paired: bool,
    /// Disable paired sampling.
    #[arg(long)]
    no_paired: bool,
    /// Convergence threshold t in (0, 1).
    #[arg(long, default_value_t = 0.01)]
    threshold: f64,
    /// Samples between intermediate estimates and convergence checks
    /// (default max(32 d, 512)).
    #[arg(long)]
    batch: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1 << 20)]
    max_samples: u64,
    /// Include the covariance matrix in JSON output.
    #[arg(long)]
    covariance: bool,
}

impl EstimatorArgs {
    fn config(&self) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(self.estimator.into())
            .with_paired(!self.no_paired)
            .with_threshold(self.threshold)
            .with_seed(self.seed)
            .with_max_samples(self.max_samples);
        if let Some(batch) = self.batch {
            cfg = cfg.with_batch(batch);
        }
        cfg
    }
}

#[derive(Args)]
struct ExactArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Row of --data to explain (model games only).
    #[arg(long)]
    instance: Option<usize>,
}

#[derive(Args)]
struct ExplainArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Row of --data to explain.
    #[arg(long)]
    instance: usize,
}

#[derive(Args)]
struct SageArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Name of the label column in --data.
    #[arg(long)]
    labels: String,
    #[arg(long, value_enum, default_value_t = LossArg::Squared)]
    loss: LossArg,
}

#[derive(Args)]
struct EffectsArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// `cross-entropy` compares against the model probability as a soft
    /// label.
    #[arg(long, value_enum, default_value_t = LossArg::Squared)]
    loss: LossArg,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    io: IoArgs,
    #[command(flatten)]
    estimator: EstimatorArgs,
    /// Row of --data to explain (model games only).
    #[arg(long)]
    instance: Option<usize>,
    #[arg(long, default_value_t = 100)]
    runs: u32,
    /// Sample count for the bias/variance rows and evaluation budget for
    /// the ratio rows.
    #[arg(long, default_value_t = 2048)]
    n: u64,
}

#[derive(Args)]
struct GvArgs {
    #[command(flatten)]
    io: IoArgs,
    /// Row of --data to explain (model games only).
    #[arg(long)]
    instance: Option<usize>,
}

fn main() {
    init_thread_pool();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            EXIT_INPUT_ERROR
        }
    };
    std::process::exit(code);
}

/// `SHAPREG_THREADS` caps internal parallelism.
fn init_thread_pool() {
    if let Ok(value) = std::env::var("SHAPREG_THREADS") {
        if let Ok(threads) = value.parse::<usize>() {
            if threads >= 1 {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
            }
        }
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Exact(args) => cmd_exact(args),
        Command::Explain(args) => cmd_explain(args),
        Command::Sage(args) => cmd_sage(args),
        Command::Effects(args) => cmd_effects(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Gv(args) => cmd_gv(args),
    }
}

/// Resolves --game: an existing file is a model JSON (needing --instance
/// and a data row); anything else parses as a synthetic spec.
fn load_game(game: &str, instance: Option<usize>, data: &Option<PathBuf>) -> Result<Box<dyn Game>> {
    if Path::new(game).exists() {
        let model = load_model(game)?;
        let rows = load_rows(&model, data)?;
        let index = instance.ok_or_else(|| {
            Error::Config("--instance <row> is required for model games".into())
        })?;
        let row = rows
            .get(index)
            .ok_or_else(|| {
                Error::Config(format!("instance row {index} out of range ({} rows)", rows.len()))
            })?
            .clone();
        Ok(Box::new(shap_game(model, row)?))
    } else {
        parse_game_spec(game)
    }
}

fn load_rows(
    model: &shapreg::games::TabularModel,
    data: &Option<PathBuf>,
) -> Result<Vec<Vec<f64>>> {
    match data {
        Some(path) => Ok(load_dataset(path)?.rows),
        None => Ok(model.background().to_vec()),
    }
}

/// The JSON schema shared by every estimate-producing command.
#[derive(Serialize)]
struct EstimateOutput {
    values: Vec<f64>,
    std_errors: Option<Vec<f64>>,
    ci95: Option<Vec<[f64; 2]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    covariance: Option<Vec<Vec<f64>>>,
    n_samples: u64,
    game_evals: u64,
    converged: bool,
    forecasts: Vec<ForecastPoint>,
}

impl EstimateOutput {
    fn from_estimate(est: &Estimate, include_covariance: bool) -> Self {
        EstimateOutput {
            values: est.values.clone(),
            std_errors: est.std_errors.clone(),
            ci95: est.ci95().map(|cis| cis.into_iter().map(|(lo, hi)| [lo, hi]).collect()),
            covariance: if include_covariance { est.covariance.clone() } else { None },
            n_samples: est.n_samples,
            game_evals: est.game_evals,
            converged: est.converged,
            forecasts: est.forecasts.clone(),
        }
    }

    fn exact(values: Vec<f64>, game_evals: u64) -> Self {
        let zeros = vec![0.0; values.len()];
        let ci: Vec<[f64; 2]> = values.iter().map(|&v| [v, v]).collect();
        EstimateOutput {
            values,
            std_errors: Some(zeros),
            ci95: Some(ci),
            covariance: None,
            n_samples: 0,
            game_evals,
            converged: true,
            forecasts: Vec::new(),
        }
    }

    fn to_csv(&self) -> String {
        let mut out = String::from("index,value,std_error,ci_lo,ci_hi\n");
        for (i, v) in self.values.iter().enumerate() {
            let sigma = self.std_errors.as_ref().map(|s| s[i]);
            let ci = self.ci95.as_ref().map(|c| c[i]);
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                i,
                v,
                sigma.map_or(String::new(), |s| s.to_string()),
                ci.map_or(String::new(), |c| c[0].to_string()),
                ci.map_or(String::new(), |c| c[1].to_string()),
            ));
        }
        out
    }
}

fn write_output(io: &IoArgs, json: String, csv: String) -> Result<()> {
    let text = match io.format {
        FormatArg::Json => json,
        FormatArg::Csv => csv,
    };
    match &io.out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn emit_estimate(io: &IoArgs, output: &EstimateOutput) -> Result<i32> {
    let json = format!("{}\n", serde_json::to_string_pretty(output)?);
    write_output(io, json, output.to_csv())?;
    Ok(if output.converged { 0 } else { EXIT_NOT_CONVERGED })
}

fn cmd_exact(args: ExactArgs) -> Result<i32> {
    let game = load_game(&args.io.game, args.instance, &args.io.data)?;
    let values = shapley_exact(game.as_ref())?;
    let evals = 1u64 << game.player_count();
    let output = EstimateOutput::exact(values, evals);
    emit_estimate(&args.io, &output)
}

fn cmd_explain(args: ExplainArgs) -> Result<i32> {
    let game = load_game(&args.io.game, Some(args.instance), &args.io.data)?;
    let est = estimate(game.as_ref(), &args.estimator.config())?;
    let output = EstimateOutput::from_estimate(&est, args.estimator.covariance);
    emit_estimate(&args.io, &output)
}

fn cmd_sage(args: SageArgs) -> Result<i32> {
    let model = load_model(&args.io.game)?;
    let data_path = args.io.data.clone().ok_or_else(|| {
        Error::Config("sage requires --data <csv> containing the label column".into())
    })?;
    let dataset = load_dataset(&data_path)?;
    let (rows, labels, _) = dataset.split_label(&args.labels)?;
    let loss = match args.loss {
        LossArg::Squared => Loss::Squared,
        LossArg::CrossEntropy => Loss::CrossEntropy,
    };
    let game = sage_game(model, rows, labels, loss)?;
    run_stochastic(&args.io, &args.estimator, &game)
}

fn cmd_effects(args: EffectsArgs) -> Result<i32> {
    let model = load_model(&args.io.game)?;
    let rows = load_rows(&model, &args.io.data)?;
    let loss = match args.loss {
        LossArg::Squared => Loss::Squared,
        LossArg::CrossEntropy => Loss::SoftCrossEntropy,
    };
    let game = shapley_effects_game(model, rows, loss)?;
    run_stochastic(&args.io, &args.estimator, &game)
}

fn run_stochastic(
    io: &IoArgs,
    estimator: &EstimatorArgs,
    game: &dyn StochasticGame,
) -> Result<i32> {
    let est = estimate_stochastic(game, &estimator.config())?;
    let output = EstimateOutput::from_estimate(&est, estimator.covariance);
    emit_estimate(io, &output)
}

fn cmd_gv(args: GvArgs) -> Result<i32> {
    let game = load_game(&args.io.game, args.instance, &args.io.data)?;
    let report = gv_matrix(game.as_ref())?;
    let json = format!("{}\n", serde_json::to_string_pretty(&report)?);
    write_output(&args.io, json, report.to_csv())?;
    Ok(0)
}

#[derive(Serialize)]
struct ScalingRow {
    label: &'static str,
    n: u64,
    runs: u32,
    n_times_trace: f64,
}

#[derive(Serialize)]
struct RatioRow {
    baseline: &'static str,
    method: &'static str,
    evals: u64,
    runs: u32,
    ratio: f64,
}

#[derive(Serialize)]
struct BenchOutput {
    bias_variance: Vec<BiasVarianceReport>,
    variance_scaling: Vec<ScalingRow>,
    speedup_ratios: Vec<RatioRow>,
    forecast: ForecastSummary,
}

impl BenchOutput {
    fn to_csv(&self) -> String {
        let mut out =
            String::from("kind,label,n,runs,bias_sq,variance,mse,n_times_trace,ratio,value\n");
        for rep in &self.bias_variance {
            let spec = VariantSpec { variant: rep.variant, paired: rep.paired };
            out.push_str(&format!(
                "bias_variance,{},{},{},{},{},{},,,\n",
                spec.label(),
                rep.n,
                rep.runs,
                rep.bias_sq,
                rep.variance,
                rep.mse
            ));
        }
        for row in &self.variance_scaling {
            out.push_str(&format!(
                "variance_scaling,{},{},{},,,,{},,\n",
                row.label, row.n, row.runs, row.n_times_trace
            ));
        }
        for row in &self.speedup_ratios {
            out.push_str(&format!(
                "speedup_ratio,{}->{},{},{},,,,,{},\n",
                row.baseline, row.method, row.evals, row.runs, row.ratio
            ));
        }
        out.push_str(&format!(
            "forecast,within_factor_two,,{},,,,,,{}\n",
            self.forecast.runs, self.forecast.within_factor_two
        ));
        out
    }
}

fn cmd_bench(args: BenchArgs) -> Result<i32> {
    let game = load_game(&args.io.game, args.instance, &args.io.data)?;
    let cfg = args.estimator.config();
    let seed = cfg.seed;

    let mut bias_rows = Vec::new();
    for spec in VariantSpec::ALL {
        bias_rows.push(bias_variance(
            game.as_ref(),
            spec.variant,
            spec.paired,
            args.n,
            args.runs,
            derive_seed(seed, 10 + bias_rows.len() as u64),
        )?);
    }

    let configured = VariantSpec { variant: cfg.variant, paired: cfg.paired };
    let mut scaling_rows = Vec::new();
    for n in [1024u64, 2048, 4096, 8192] {
        let trace =
            covariance_trace(game.as_ref(), configured, n, args.runs, derive_seed(seed, 20 + n))?;
        scaling_rows.push(ScalingRow {
            label: configured.label(),
            n,
            runs: args.runs,
            n_times_trace: n as f64 * trace,
        });
    }

    // The six variant pairs, oriented so the expected ratio is >= 1
    // (baseline is the slower estimator).
    let unb = VariantSpec { variant: Variant::Unbiased, paired: false };
    let unb_p = VariantSpec { variant: Variant::Unbiased, paired: true };
    let orig = VariantSpec { variant: Variant::Original, paired: false };
    let orig_p = VariantSpec { variant: Variant::Original, paired: true };
    let pairs =
        [(unb, unb_p), (unb, orig), (unb, orig_p), (unb_p, orig), (unb_p, orig_p), (orig, orig_p)];
    let mut ratio_rows = Vec::new();
    for (i, (baseline, method)) in pairs.iter().enumerate() {
        let ratio = shapreg::diagnostics::speedup_ratio(
            game.as_ref(),
            *baseline,
            *method,
            args.n,
            args.runs,
            derive_seed(seed, 30 + i as u64),
        )?;
        ratio_rows.push(RatioRow {
            baseline: baseline.label(),
            method: method.label(),
            evals: args.n,
            runs: args.runs,
            ratio,
        });
    }

    let forecast = forecast_accuracy(game.as_ref(), &cfg, args.runs, derive_seed(seed, 40))?;

    let output = BenchOutput {
        bias_variance: bias_rows,
        variance_scaling: scaling_rows,
        speedup_ratios: ratio_rows,
        forecast,
    };
    let json = format!("{}\n", serde_json::to_string_pretty(&output)?);
    write_output(&args.io, json, output.to_csv())?;
    Ok(0)
}
