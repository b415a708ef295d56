//! Command-line front end: fit the robust estimator, adjust it, run grid
//! experiments, and render plot-ready report tables.
//!
//! Exit codes: 0 success, 1 input or configuration error, 2 numeric
//! non-convergence (partial output is still written).

mod dataio;
mod records;

use std::path::PathBuf;
use std::process::ExitCode;

use adro::adjust::{
    adjust_closed_form_linear, adjust_newton, empirical_curvature_fn, NewtonOptions,
};
use adro::dataset::Dataset;
use adro::error::AdroError;
use adro::glm::{GlmKind, GlmModel};
use adro::report::render_report;
use adro::sim::{run_experiment, ExperimentConfig, ExperimentReport};
use adro::wdro::{fit_dro, WdroConfig};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use serde::Serialize;

use records::{AdjustFailureRecord, AdjustRecord, FitRecord, RECORD_SCHEMA_VERSION};

#[derive(Parser)]
#[command(
    name = "adro",
    version,
    about = "Distributionally robust GLM estimation with bias adjustment"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit the robust estimator on a CSV dataset.
    Fit(FitArgs),
    /// Invert the adjustment map at a fitted parameter.
    Adjust(AdjustArgs),
    /// Run a replicated grid experiment.
    Simulate(SimulateArgs),
    /// Render plot-ready tables from an experiment report.
    Report(ReportArgs),
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModelArg {
    Logistic,
    Linear,
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Dataset CSV with header x1,...,xd,y.
    #[arg(long)]
    data: PathBuf,
    /// Radius coefficient in rho = tau/sqrt(n).
    #[arg(long)]
    tau: f64,
    /// Sample size defining the radius: "auto" (dataset rows) or an integer.
    #[arg(long, default_value = "auto")]
    n_for_radius: String,
    /// Noise std of the linear model; recorded for adjustment defaults.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long, default_value_t = 0.3)]
    step_size: f64,
    #[arg(long, default_value_t = 50_000)]
    max_iters: usize,
    #[arg(long, default_value_t = 1e-7)]
    grad_tol: f64,
    #[arg(long, default_value_t = 1e-10)]
    inner_tol: f64,
    /// Optional explicit lambda bracket (both ends required).
    #[arg(long)]
    lambda_lo: Option<f64>,
    #[arg(long)]
    lambda_hi: Option<f64>,
    /// Output path for the fit record (stdout when absent).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AdjustArgs {
    /// Fit record produced by `adro fit`.
    #[arg(long)]
    fit: PathBuf,
    /// The dataset the fit was computed on.
    #[arg(long)]
    data: PathBuf,
    /// Use the isotropic linear closed form instead of Newton inversion.
    #[arg(long)]
    closed_form: bool,
    /// Noise std for the closed form (estimated from residuals when absent).
    #[arg(long)]
    sigma: Option<f64>,
    /// Isotropic curvature scale for the closed form (estimated from the
    /// feature second moments when absent).
    #[arg(long)]
    c_value: Option<f64>,
    #[arg(long, default_value_t = 1e-10)]
    newton_tol: f64,
    #[arg(long, default_value_t = 50)]
    newton_max_iters: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    model: ModelArg,
    /// Ground-truth parameter, comma-separated (e.g. "0.9487,-0.3162").
    #[arg(long)]
    beta_star: String,
    /// Noise std (linear model only).
    #[arg(long)]
    sigma: Option<f64>,
    /// Comma-separated sample sizes (e.g. "500,700,1000").
    #[arg(long)]
    n_grid: String,
    /// Comma-separated radius coefficients (e.g. "1,1.5,2,2.5").
    #[arg(long)]
    tau_grid: String,
    #[arg(long, default_value_t = 5)]
    replicates: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Experiment report JSON produced by `adro simulate`.
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write mse_series.csv and diff_boxplots.csv into this directory.
    #[arg(long)]
    csv: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1u8 } else { 0u8 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<u8> {
    configure_threads()?;
    match cli.command {
        Command::Fit(args) => cmd_fit(args),
        Command::Adjust(args) => cmd_adjust(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Report(args) => cmd_report(args),
    }
}

/// ADRO_THREADS caps simulate parallelism; unset means all cores.
fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("ADRO_THREADS") {
        let threads: usize = raw
            .trim()
            .parse()
            .ok()
            .filter(|&t| t >= 1)
            .with_context(|| format!("ADRO_THREADS must be a positive integer, got '{raw}'"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("initializing the worker pool")?;
    }
    Ok(())
}

fn write_json<T: Serialize>(out: &Option<PathBuf>, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_fit(args: FitArgs) -> Result<u8> {
    let model = match args.model {
        ModelArg::Logistic => GlmModel::logistic(),
        ModelArg::Linear => GlmModel::linear(args.sigma.unwrap_or(1.0))?,
    };
    let data = dataio::read_dataset_csv(&args.data, model.label_kind())?;
    let n_radius = if args.n_for_radius == "auto" {
        data.n_samples()
    } else {
        args.n_for_radius
            .parse::<usize>()
            .ok()
            .filter(|&n| n >= 1)
            .with_context(|| {
                format!("--n-for-radius must be 'auto' or a positive integer, got '{}'", args.n_for_radius)
            })?
    };
    let lambda_bracket = match (args.lambda_lo, args.lambda_hi) {
        (None, None) => None,
        (Some(lo), Some(hi)) => Some((lo, hi)),
        _ => bail!("--lambda-lo and --lambda-hi must be given together"),
    };
    let config = WdroConfig {
        tau: args.tau,
        n_radius,
        step_size: args.step_size,
        max_iters: args.max_iters,
        grad_tol: args.grad_tol,
        lambda_bracket,
        inner_tol: args.inner_tol,
    };
    config.validate()?;
    let fit = fit_dro(&model, &data, &config)?;
    let record = FitRecord {
        schema: RECORD_SCHEMA_VERSION,
        model: model.kind(),
        tau: args.tau,
        n_radius,
        sigma: args.sigma,
        beta_dro: fit.beta_dro.iter().copied().collect(),
        robust_loss: fit.robust_loss,
        lambda_star: fit.lambda_star,
        iterations: fit.iterations,
        converged: fit.converged,
        grad_norm: fit.grad_norm,
    };
    write_json(&args.out, &record)?;
    if !fit.converged {
        eprintln!(
            "fit did not converge: gradient norm {:.3e} after {} iterations",
            fit.grad_norm, fit.iterations
        );
        return Ok(2);
    }
    Ok(0)
}

fn cmd_adjust(args: AdjustArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.fit)
        .with_context(|| format!("reading {}", args.fit.display()))?;
    let fit: FitRecord = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.fit.display()))?;
    if fit.schema != RECORD_SCHEMA_VERSION {
        bail!("fit record schema {} is not supported (expected {})", fit.schema, RECORD_SCHEMA_VERSION);
    }
    let model = match fit.model {
        GlmKind::Logistic => GlmModel::logistic(),
        GlmKind::Linear => GlmModel::linear(fit.sigma.or(args.sigma).unwrap_or(1.0))?,
        GlmKind::Poisson => bail!("fit records for the Poisson model are not produced by this tool"),
    };
    let data = dataio::read_dataset_csv(&args.data, model.label_kind())?;
    let beta_dro = DVector::from_column_slice(&fit.beta_dro);
    if beta_dro.len() != data.dim() {
        bail!(
            "fit parameter has {} entries but the dataset has {} features",
            beta_dro.len(),
            data.dim()
        );
    }
    let n = fit.n_radius;

    if args.closed_form {
        if fit.model != GlmKind::Linear {
            bail!("--closed-form applies to linear fits only");
        }
        let sigma = match args.sigma.or(fit.sigma) {
            Some(s) => s,
            None => estimate_sigma(&data, &beta_dro)?,
        };
        let c = match args.c_value {
            Some(c) => c,
            None => estimate_c(&data),
        };
        let beta_adro = adjust_closed_form_linear(&beta_dro, fit.tau, sigma, c, n)?;
        // C⁻¹H(z) = (τσ/c)·z/‖z‖ has largest |eigenvalue| τσ/(c‖z‖).
        let existence_margin =
            (n as f64).sqrt() - fit.tau * sigma / (c * beta_adro.norm());
        let record = AdjustRecord {
            schema: RECORD_SCHEMA_VERSION,
            method: "closed_form".into(),
            beta_adro: beta_adro.iter().copied().collect(),
            newton_iterations: 0,
            residual_norm: 0.0,
            existence_margin,
            adjustment_distance: (&beta_adro - &beta_dro).norm(),
            sigma_used: Some(sigma),
            c_used: Some(c),
        };
        write_json(&args.out, &record)?;
        return Ok(0);
    }

    let curvature = empirical_curvature_fn(&model, &data, fit.tau);
    let opts = NewtonOptions {
        tol: args.newton_tol,
        max_iters: args.newton_max_iters,
        ..NewtonOptions::default()
    };
    match adjust_newton(&beta_dro, &curvature, n, &opts) {
        Ok(adj) => {
            let record = AdjustRecord {
                schema: RECORD_SCHEMA_VERSION,
                method: "newton".into(),
                beta_adro: adj.beta_adro.iter().copied().collect(),
                newton_iterations: adj.newton_iterations,
                residual_norm: adj.residual_norm,
                existence_margin: adj.existence_margin,
                adjustment_distance: adj.adjustment_distance,
                sigma_used: None,
                c_used: None,
            };
            write_json(&args.out, &record)?;
            Ok(0)
        }
        Err(AdroError::NewtonFailed { iterations, residual, last_iterate }) => {
            let record = AdjustFailureRecord {
                schema: RECORD_SCHEMA_VERSION,
                error: format!("Newton failed after {iterations} iterations"),
                last_iterate,
                residual_norm: residual,
            };
            write_json(&args.out, &record)?;
            eprintln!("adjustment did not converge (residual {residual:.3e})");
            Ok(2)
        }
        Err(e) => Err(e.into()),
    }
}

/// Residual std at the fitted parameter.
fn estimate_sigma(data: &Dataset, beta: &DVector<f64>) -> Result<f64> {
    let margins = data.margins(beta)?;
    let m2 = margins
        .iter()
        .zip(data.labels().iter())
        .map(|(s, y)| (s - y) * (s - y))
        .sum::<f64>()
        / data.n_samples() as f64;
    Ok(m2.sqrt())
}

/// Mean diagonal of the feature second-moment matrix.
fn estimate_c(data: &Dataset) -> f64 {
    let x = data.features();
    x.iter().map(|v| v * v).sum::<f64>() / (data.n_samples() * data.dim()) as f64
}

fn parse_f64_list(raw: &str, what: &str) -> Result<Vec<f64>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .with_context(|| format!("{what}: '{s}' is not a number"))
        })
        .collect()
}

fn parse_usize_list(raw: &str, what: &str) -> Result<Vec<usize>> {
    raw.split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .with_context(|| format!("{what}: '{s}' is not a positive integer"))
        })
        .collect()
}

fn cmd_simulate(args: SimulateArgs) -> Result<u8> {
    let config = ExperimentConfig {
        model_kind: match args.model {
            ModelArg::Logistic => GlmKind::Logistic,
            ModelArg::Linear => GlmKind::Linear,
        },
        beta_star: parse_f64_list(&args.beta_star, "--beta-star")?,
        sigma: args.sigma,
        n_grid: parse_usize_list(&args.n_grid, "--n-grid")?,
        tau_grid: parse_f64_list(&args.tau_grid, "--tau-grid")?,
        replicates: args.replicates,
        base_seed: args.seed,
    };
    let report = run_experiment(&config)?;
    write_json(&args.out, &report)?;
    Ok(0)
}

fn cmd_report(args: ReportArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&args.input)
        .with_context(|| format!("reading {}", args.input.display()))?;
    let report: ExperimentReport = serde_json::from_str(&text)
        .with_context(|| format!("parsing {}", args.input.display()))?;
    let output = render_report(&report)?;
    write_json(&args.out, &output)?;
    if let Some(dir) = &args.csv {
        dataio::write_report_csv(&output, dir)?;
    }
    Ok(0)
}
