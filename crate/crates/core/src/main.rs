//! Command-line front end: fit probit mixed models from delimited
//! files, simulate datasets, run coverage experiments and discrepancy
//! sweeps, and emit per-group best predictions.
//!
//! Exit codes: 0 success, 2 input error, 3 convergence failure,
//! 4 internal error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use probit_ep::data::GroupedDataset;
use probit_ep::ep::{EpOptions, SweepMode};
use probit_ep::error::Error;
use probit_ep::linalg::SymMat;
use probit_ep::mle::{optimize, FitConfig, FitMethod};
use probit_ep::report;
use probit_ep::sim::{
    discrepancy_sweep, run_coverage, simulate, GroupSizeRule, SimConfig,
};

#[derive(Parser)]
#[command(
    name = "probit-ep",
    version,
    about = "Probit mixed models by expectation propagation: quadrature-free maximum likelihood, confidence intervals and best prediction"
)]
struct Cli {
    /// Worker threads for group-parallel evaluation (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model to a dataset and write the inferential report.
    Fit(FitArgs),
    /// Generate a dataset under the simulation design.
    Simulate(SimulateArgs),
    /// Confidence-interval coverage experiment over replications.
    Coverage(CoverageArgs),
    /// EP-versus-quadrature discrepancy table over group sizes.
    Sweep(SweepArgs),
    /// Fit a model, then emit per-group best predictions.
    Predict(FitArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Tsv,
}

#[derive(Args)]
struct FitArgs {
    /// Input dataset (header `group,y,xF1..,xR1..`).
    #[arg(long)]
    input: PathBuf,
    /// Report file to write.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Two-sided confidence level is 1 − alpha.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// EP fixed-point relative tolerance.
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    /// EP sweep budget per group.
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    /// Site-update schedule: `fresh` or `literal`.
    #[arg(long, default_value = "fresh")]
    sweep_mode: String,
}

#[derive(Args)]
struct SimulateArgs {
    /// Dataset file to write (CSV).
    #[arg(long)]
    output: PathBuf,
    /// True fixed-effect coefficients, comma separated; the design is
    /// an intercept plus Uniform(0,1) columns.
    #[arg(long)]
    beta: String,
    /// True random-effect covariance as its lower-triangle vech,
    /// comma separated (column-major).
    #[arg(long)]
    sigma: String,
    #[arg(long)]
    m: usize,
    /// Fixed group size.
    #[arg(long, conflicts_with_all = ["ni_min", "ni_max"])]
    ni: Option<usize>,
    /// Group-size range (inclusive), both ends required.
    #[arg(long, requires = "ni_max")]
    ni_min: Option<usize>,
    #[arg(long, requires = "ni_min")]
    ni_max: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct CoverageArgs {
    #[command(flatten)]
    sim: SimulateArgs,
    #[arg(long, default_value_t = 300)]
    reps: usize,
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Comma-separated subset of ep, laplace, aghq.
    #[arg(long, default_value = "ep")]
    methods: String,
    /// Quadrature order for the aghq method.
    #[arg(long, default_value_t = 100)]
    aghq_order: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Include wall-clock timing quantiles in the report (their values
    /// vary run to run, so equal-seed outputs stop being identical).
    #[arg(long, default_value_t = false)]
    timings: bool,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value = "fresh")]
    sweep_mode: String,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    beta: String,
    #[arg(long)]
    sigma: String,
    /// Comma-separated group sizes.
    #[arg(long, default_value = "2,8,32")]
    ni_grid: String,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long, default_value_t = 1e-5)]
    tol: f64,
    #[arg(long, default_value_t = 100)]
    max_iter: usize,
    #[arg(long, default_value = "fresh")]
    sweep_mode: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        // a duplicate initialisation (e.g. in tests) is harmless
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let outcome = match cli.command {
        Command::Fit(args) => cmd_fit(&args, false),
        Command::Predict(args) => cmd_fit(&args, true),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Coverage(args) => cmd_coverage(&args),
        Command::Sweep(args) => cmd_sweep(&args),
    };
    match outcome {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Parse { .. }
        | Error::Io(_)
        | Error::InvalidArgument(_)
        | Error::Dimension(_)
        | Error::OracleDimension(_) => 2,
        Error::NoConvergence(_) => 3,
        Error::NotPositiveDefinite(_) | Error::SiteUpdate(_) => 4,
    }
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse {what} entry '{s}'")))
        })
        .collect()
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>, Error> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| Error::InvalidArgument(format!("cannot parse {what} entry '{s}'")))
        })
        .collect()
}

fn fit_config(alpha: f64, tol: f64, max_iter: usize, sweep_mode: &str) -> Result<FitConfig, Error> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha must be in (0,1), got {alpha}"
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tolerance must be positive, got {tol}"
        )));
    }
    Ok(FitConfig {
        alpha,
        ep_tol: tol,
        ep_max_iter: max_iter,
        sweep: sweep_mode.parse::<SweepMode>()?,
        ..FitConfig::default()
    })
}

fn sim_config(args: &SimulateArgs) -> Result<SimConfig, Error> {
    let beta = parse_f64_list(&args.beta, "beta")?;
    let sigma = SymMat::from_vech(parse_f64_list(&args.sigma, "sigma")?)?;
    let size_rule = match (args.ni, args.ni_min, args.ni_max) {
        (Some(n), None, None) => GroupSizeRule::Fixed(n),
        (None, Some(lo), Some(hi)) => GroupSizeRule::UniformRange { lo, hi },
        _ => {
            return Err(Error::InvalidArgument(
                "specify either --ni or both --ni-min and --ni-max".into(),
            ))
        }
    };
    let config = SimConfig {
        beta,
        sigma,
        m: args.m,
        size_rule,
        seed: args.seed,
    };
    config.validate()?;
    Ok(config)
}

fn write_output(path: &PathBuf, contents: &str) -> Result<(), Error> {
    std::fs::write(path, contents)?;
    Ok(())
}

fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report serialization cannot fail");
    s.push('\n');
    s
}

fn cmd_fit(args: &FitArgs, predictions_only: bool) -> Result<ExitCode, Error> {
    let data = GroupedDataset::from_csv_path(&args.input)?;
    let config = fit_config(args.alpha, args.tol, args.max_iter, &args.sweep_mode)?;
    let result = optimize(&data, &config)?;

    if predictions_only {
        let contents = match args.format {
            Format::Json => to_json(&report::PredictReportJson {
                schema: report::SCHEMA_VERSION,
                command: "predict".into(),
                method: config.method.name().into(),
                predictions: report::predictions_json(&result.predictions),
            }),
            Format::Tsv => report::predictions_tsv(&result.predictions, data.d_r),
        };
        write_output(&args.output, &contents)?;
    } else {
        let contents = match args.format {
            Format::Json => to_json(&report::fit_report(
                &result,
                config.method.name(),
                data.d_f,
                data.d_r,
                data.n_groups(),
                data.n_total(),
            )),
            Format::Tsv => report::ci_table_text(&result),
        };
        write_output(&args.output, &contents)?;
        print!("{}", report::ci_table_text(&result));
    }

    if !result.diagnostics.stage2_converged {
        eprintln!("warning: optimizer stopped before meeting its convergence criteria; report written anyway");
        return Ok(ExitCode::from(3));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_simulate(args: &SimulateArgs) -> Result<ExitCode, Error> {
    let config = sim_config(args)?;
    let data = simulate(&config)?;
    write_output(&args.output, &data.to_csv_string())?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_coverage(args: &CoverageArgs) -> Result<ExitCode, Error> {
    let config = sim_config(&args.sim)?;
    let base = fit_config(args.alpha, args.tol, args.max_iter, &args.sweep_mode)?;
    let mut methods = Vec::new();
    for name in args.methods.split(',') {
        match name.trim() {
            "ep" => methods.push(FitMethod::Ep),
            "laplace" => methods.push(FitMethod::Laplace),
            "aghq" => methods.push(FitMethod::Aghq {
                order: args.aghq_order,
            }),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown method '{other}' (expected ep, laplace or aghq)"
                )))
            }
        }
    }
    let report_data = run_coverage(&config, args.reps, args.alpha, &methods, &base)?;
    for m in &report_data.methods {
        eprintln!(
            "{}: {}/{} replications usable, median fit {:.2}s",
            m.method,
            m.replications - m.excluded,
            m.replications,
            m.timing.median_s
        );
    }
    let contents = match args.format {
        Format::Json => to_json(&report::coverage_report(&report_data, args.timings)),
        Format::Tsv => report::coverage_tsv(&report_data),
    };
    write_output(&args.sim.output, &contents)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode, Error> {
    let beta = parse_f64_list(&args.beta, "beta")?;
    let sigma = SymMat::from_vech(parse_f64_list(&args.sigma, "sigma")?)?;
    let grid = parse_usize_list(&args.ni_grid, "ni-grid")?;
    let ep = EpOptions {
        tol: args.tol,
        max_iter: args.max_iter,
        sweep: args.sweep_mode.parse::<SweepMode>()?,
    };
    let rows = discrepancy_sweep(&beta, &sigma, &grid, args.reps, args.seed, &ep)?;
    let contents = match args.format {
        Format::Json => to_json(&report::sweep_report(&rows)),
        Format::Tsv => report::sweep_tsv(&rows),
    };
    write_output(&args.output, &contents)?;
    Ok(ExitCode::SUCCESS)
}
