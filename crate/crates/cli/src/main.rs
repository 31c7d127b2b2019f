//! `rcfr`: run re-weighted counterfactual regression experiments and write
//! plot-ready CSV.
//!
//! Exit codes: 0 success, 1 usage or configuration error, 2 numerical abort,
//! 3 failed check.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{Map, Value};

use rcfr::experiments::{
    dataset_family, load_cate_csv, summarize, write_results_csv, CateMethod, CateSpec, CellOutcome, DaMethod, DaSpec,
    DatasetSpec, EffectFamily, ResultRow, SplitConfig, SweepConfig,
};
use rcfr::gradcheck::run_gradcheck;
use rcfr::nn::fault::with_flipped_elu;
use rcfr::par::Parallelism;
use rcfr::rcfr::{AlphaMode, ModelDocument, RcfrModel, TrainConfig};
use rcfr::Error;

const EXIT_CONFIG: u8 = 1;
const EXIT_NUMERICAL: u8 = 2;
const EXIT_CHECK: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "rcfr", version, about = "Re-weighted counterfactual regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Synthetic domain adaptation: Gaussian source and target designs, linear outcome.
    SynthDa(SynthDaArgs),
    /// Treatment-effect estimation on CSV realizations or synthetic data.
    Cate(CateArgs),
    /// Run a JSON-described grid of datasets, methods and settings.
    Sweep(SweepArgs),
    /// Check every analytic gradient against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Describe a data file, saved model or config file.
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// JSON object of training-config keys; explicit flags take precedence.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
    /// Results CSV path (standard output when absent).
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
    /// Master seed; every random draw derives from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Fill the wall_ms column (makes output timing-dependent).
    #[arg(long)]
    timing: bool,
    /// Write fitted networks as JSON: a file for one run, else `<stem>-<k>.json` per run.
    #[arg(long, value_name = "PATH")]
    save_model: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
}

#[derive(Args, Debug)]
struct SynthDaArgs {
    /// Source sample size.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Target sample size.
    #[arg(long, default_value_t = 1000)]
    m: usize,
    /// Dimension.
    #[arg(long, default_value_t = 10)]
    d: usize,
    /// One of rcfr, is, isc5, isc10, uniform (comma-separated for several).
    #[arg(long, default_value = "rcfr", value_delimiter = ',')]
    method: Vec<String>,
    /// Replicates; replicate r uses seed + r.
    #[arg(long, default_value_t = 1)]
    seeds: usize,
    /// Balance coefficient α.
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight penalty λ_w.
    #[arg(long)]
    lambda_w: Option<f64>,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Effect {
    Linear,
    Quadratic,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum AlphaModeArg {
    Fixed,
    Adaptive,
    Oracle,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("source").required(true).args(["data", "synthetic"]))]
struct CateArgs {
    /// CSV file or directory of realizations.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Generate data with this effect family instead of reading files.
    #[arg(long, value_enum)]
    synthetic: Option<Effect>,
    /// Use only the first K realizations of --data.
    #[arg(long, value_name = "K")]
    limit: Option<usize>,
    /// Synthetic sample size.
    #[arg(long, default_value_t = 500)]
    n: usize,
    /// Synthetic dimension.
    #[arg(long, default_value_t = 5)]
    d: usize,
    /// Synthetic confounding strength γ.
    #[arg(long, default_value_t = 2.0)]
    gamma: f64,
    /// Synthetic outcome noise standard deviation.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Synthetic realizations; realization r uses seed + r.
    #[arg(long, default_value_t = 10)]
    seeds: usize,
    /// One of rcfr, rcfr-uniform, ols, ols-ipw, ipm-wnn (comma-separated for several).
    #[arg(long, default_value = "rcfr", value_delimiter = ',')]
    method: Vec<String>,
    /// How α is chosen for the network methods.
    #[arg(long, value_enum)]
    alpha_mode: Option<AlphaModeArg>,
    /// Balance coefficient α (start value in adaptive mode).
    #[arg(long)]
    alpha: Option<f64>,
    /// Weight penalty λ_w.
    #[arg(long)]
    lambda_w: Option<f64>,
    /// Fraction of rows used for fitting.
    #[arg(long, default_value_t = 0.63)]
    train_fraction: f64,
    /// Fraction of rows used for early stopping.
    #[arg(long, default_value_t = 0.27)]
    validation_fraction: f64,
    /// Omit the mean and standard-error rows.
    #[arg(long)]
    no_summary: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Sweep description (JSON).
    #[arg(long, value_name = "JSON")]
    config: PathBuf,
    /// Results CSV path (standard output when absent).
    #[arg(long, value_name = "CSV")]
    out: Option<PathBuf>,
    /// Overrides the sweep file's master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    jobs: usize,
    /// Fill the wall_ms column.
    #[arg(long)]
    timing: bool,
    /// Append mean and standard-error rows per method and dataset.
    #[arg(long)]
    summary: bool,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    /// Seed for the random check inputs.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Flip the sign of the ELU derivative to confirm failures are caught.
    #[arg(long, hide = true)]
    inject_fault: bool,
}

#[derive(Args, Debug)]
#[command(group = clap::ArgGroup::new("what").required(true).args(["data", "model", "config"]))]
struct InspectArgs {
    /// CSV file or directory of realizations.
    #[arg(long, value_name = "PATH")]
    data: Option<PathBuf>,
    /// Saved model JSON.
    #[arg(long, value_name = "JSON")]
    model: Option<PathBuf>,
    /// Training or sweep config JSON.
    #[arg(long, value_name = "JSON")]
    config: Option<PathBuf>,
}

fn exit_code(e: &Error) -> u8 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn read_json_object(path: &Path) -> Result<Map<String, Value>, Error> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    match serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))? {
        Value::Object(m) => Ok(m),
        _ => Err(Error::Config(format!("{}: expected a JSON object", path.display()))),
    }
}

fn parallelism(jobs: usize) -> Parallelism {
    match jobs {
        0 => Parallelism::Auto,
        1 => Parallelism::Sequential,
        n => Parallelism::Threads(n),
    }
}

fn write_rows(out: Option<&Path>, rows: &[ResultRow]) -> Result<(), Error> {
    match out {
        Some(p) => write_results_csv(fs::File::create(p)?, rows),
        None => write_results_csv(io::stdout().lock(), rows),
    }
}

fn save_models(path: &Path, outcomes: &[CellOutcome], sweep: &rcfr::experiments::Sweep) -> Result<(), Error> {
    let models: Vec<(usize, &RcfrModel)> = outcomes.iter().enumerate().filter_map(|(i, o)| o.model.as_ref().map(|m| (i, m))).collect();
    let write = |p: &Path, i: usize, m: &RcfrModel| -> Result<(), Error> {
        let doc = m.to_document(&sweep.cells[i].config);
        fs::write(p, serde_json::to_string_pretty(&doc)?)?;
        Ok(())
    };
    match models.as_slice() {
        [] => {
            eprintln!("no network was fitted; nothing saved");
            Ok(())
        }
        [(i, m)] => write(path, *i, m),
        _ => {
            let stem = path.file_stem().map_or_else(|| "model".into(), |s| s.to_string_lossy().into_owned());
            for (i, m) in models {
                write(&path.with_file_name(format!("{stem}-{i}.json")), i, m)?;
            }
            Ok(())
        }
    }
}

/// Run a sweep built from flags, write rows, and turn the first cell error
/// into an exit code.
fn run_built(sweep_cfg: SweepConfig, common: &Common, summary: bool) -> Result<u8, Error> {
    let sweep = sweep_cfg.build()?;
    let outcomes = sweep.run_detailed(parallelism(common.jobs), common.timing);
    let mut rows: Vec<ResultRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    if summary {
        let s = summarize(&rows, dataset_family);
        print_table(&s);
        rows.extend(s);
    }
    write_rows(common.out.as_deref(), &rows)?;
    if let Some(p) = &common.save_model {
        save_models(p, &outcomes, &sweep)?;
    }
    let mut code = 0;
    for o in &outcomes {
        if let Some(e) = &o.error {
            eprintln!("{} on {} (seed {}): {e}", o.row.method, o.row.dataset, o.row.seed);
            code = code.max(exit_code(e));
        }
    }
    Ok(code)
}

/// `method  dataset  √ε_PEHE  mean ± se  target risk  mean ± se` on standard error.
fn print_table(summary: &[ResultRow]) {
    for pair in summary.chunks(2) {
        let [mean, se] = pair else { continue };
        let cell = |m: Option<f64>, s: Option<f64>| match (m, s) {
            (Some(m), Some(s)) => format!("{m:.2} ± {s:.2}"),
            _ => "-".into(),
        };
        eprintln!(
            "{:<16} {:<28} rmse_tau {:<14} target_risk {:<14} ({})",
            mean.method,
            mean.dataset,
            cell(mean.rmse_tau, se.rmse_tau),
            cell(mean.target_risk, se.target_risk),
            mean.status
        );
    }
}

fn base_overrides(common: &Common, flags: &[(&str, Option<Value>)]) -> Result<Map<String, Value>, Error> {
    let mut base = match &common.config {
        Some(p) => read_json_object(p)?,
        None => Map::new(),
    };
    for (k, v) in flags {
        if let Some(v) = v {
            base.insert((*k).into(), v.clone());
        }
    }
    Ok(base)
}

fn num(v: Option<f64>) -> Option<Value> {
    v.map(Value::from)
}

fn synth_da(args: SynthDaArgs) -> Result<u8, Error> {
    for m in &args.method {
        m.parse::<DaMethod>()?;
    }
    if args.seeds == 0 {
        return Err(Error::Config("--seeds must be at least 1".into()));
    }
    let base = base_overrides(&args.common, &[("alpha", num(args.alpha)), ("lambda_w", num(args.lambda_w))])?;
    let cfg = SweepConfig {
        seed: args.common.seed,
        replicates: args.seeds,
        base,
        grid: Default::default(),
        methods: args.method.clone(),
        datasets: vec![DatasetSpec::SyntheticDa(DaSpec::new(args.n, args.m, args.d))],
        split: SplitConfig::default(),
    };
    run_built(cfg, &args.common, args.seeds > 1)
}

fn cate(args: CateArgs) -> Result<u8, Error> {
    for m in &args.method {
        m.parse::<CateMethod>()?;
    }
    let mode = args.alpha_mode.map(|m| {
        let m = match m {
            AlphaModeArg::Fixed => AlphaMode::Fixed,
            AlphaModeArg::Adaptive => AlphaMode::Adaptive,
            AlphaModeArg::Oracle => AlphaMode::Oracle,
        };
        serde_json::to_value(m).expect("enum serializes")
    });
    let base = base_overrides(
        &args.common,
        &[("alpha_mode", mode), ("alpha", num(args.alpha)), ("lambda_w", num(args.lambda_w))],
    )?;
    let dataset = match (&args.data, args.synthetic) {
        (Some(path), _) => {
            if let Some(0) = args.limit {
                return Err(Error::Config("--limit must be at least 1".into()));
            }
            DatasetSpec::Csv {
                path: path.clone(),
                limit: args.limit,
            }
        }
        (None, Some(effect)) => {
            if args.seeds == 0 {
                return Err(Error::Config("--seeds must be at least 1".into()));
            }
            DatasetSpec::SyntheticCate(CateSpec {
                n: args.n,
                d: args.d,
                gamma: args.gamma,
                noise: args.noise,
                effect: match effect {
                    Effect::Linear => EffectFamily::Linear,
                    Effect::Quadratic => EffectFamily::Quadratic,
                },
                ..CateSpec::default()
            })
        }
        (None, None) => unreachable!("clap requires one data source"),
    };
    let cfg = SweepConfig {
        seed: args.common.seed,
        replicates: args.seeds,
        base,
        grid: Default::default(),
        methods: args.method.clone(),
        datasets: vec![dataset],
        split: SplitConfig {
            train: args.train_fraction,
            validation: args.validation_fraction,
        },
    };
    run_built(cfg, &args.common, !args.no_summary)
}

fn sweep(args: SweepArgs) -> Result<u8, Error> {
    let text = fs::read_to_string(&args.config).map_err(|e| Error::Config(format!("{}: {e}", args.config.display())))?;
    let mut cfg = SweepConfig::from_json(&text)?;
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    let common = Common {
        config: None,
        out: args.out,
        seed: cfg.seed,
        timing: args.timing,
        save_model: None,
        jobs: args.jobs,
    };
    let built = cfg.build()?;
    eprintln!("{} cells", built.len());
    run_built(cfg, &common, args.summary)
}

fn gradcheck(args: GradcheckArgs) -> Result<u8, Error> {
    let report = if args.inject_fault {
        with_flipped_elu(|| run_gradcheck(args.seed))?
    } else {
        run_gradcheck(args.seed)?
    };
    println!("{report}");
    Ok(if report.passed() { 0 } else { EXIT_CHECK })
}

fn inspect(args: InspectArgs) -> Result<u8, Error> {
    let mut out = io::stdout().lock();
    if let Some(path) = &args.data {
        let data = load_cate_csv(path)?;
        writeln!(out, "realizations: {}", data.len())?;
        for (i, d) in data.iter().enumerate() {
            let treated = d.t.iter().filter(|&&t| t == 1).count();
            writeln!(
                out,
                "  #{i}: {} rows, {} features, {treated} treated, counterfactuals {}, true effects {}",
                d.len(),
                d.dim(),
                if d.y_cfactual.is_some() { "yes" } else { "no" },
                if d.true_effects().is_some() { "yes" } else { "no" },
            )?;
        }
    } else if let Some(path) = &args.model {
        let text = fs::read_to_string(path)?;
        let doc: ModelDocument = serde_json::from_str(&text).map_err(|e| Error::Schema(e.to_string()))?;
        let model = RcfrModel::from_document(&doc)?;
        writeln!(out, "input dim: {}", model.input_dim())?;
        writeln!(out, "representation dim: {}", model.rep_dim())?;
        writeln!(out, "arms: {}", model.arm_count())?;
        writeln!(out, "final alpha: {}", model.alpha)?;
        writeln!(out, "weight normalization: {:?}", doc.header.weight_normalization)?;
        writeln!(out, "config: {}", serde_json::to_string(&doc.header.config)?)?;
    } else if let Some(path) = &args.config {
        let obj = read_json_object(path)?;
        if obj.contains_key("datasets") || obj.contains_key("methods") {
            let cfg: SweepConfig = serde_json::from_value(Value::Object(obj)).map_err(|e| Error::Config(e.to_string()))?;
            let built = cfg.build()?;
            writeln!(out, "sweep: {} cells, seed {}, {} replicates", built.len(), cfg.seed, cfg.replicates)?;
            for d in &cfg.datasets {
                writeln!(out, "  dataset {}", d.label())?;
            }
        } else {
            let cfg = rcfr::experiments::apply_overrides(&TrainConfig::default(), &obj)?;
            writeln!(out, "{}", serde_json::to_string_pretty(&cfg)?)?;
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    let result = match cli.command {
        Command::SynthDa(a) => synth_da(a),
        Command::Cate(a) => cate(a),
        Command::Sweep(a) => sweep(a),
        Command::Gradcheck(a) => gradcheck(a),
        Command::Inspect(a) => inspect(a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
