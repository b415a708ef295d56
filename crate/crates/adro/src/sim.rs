//! Synthetic data generation and the replicated experiment harness.
//!
//! Data generators draw from the three reference designs (standard-normal
//! features with logistic or Gaussian labels, box-uniform features with
//! Poisson counts), keyed by a seed so every replicate is reproducible.
//! [`run_experiment`] sweeps a grid of sample sizes and radius coefficients,
//! fits the robust estimator, applies the bias adjustment, and records
//! squared errors and their differences per replicate. Summary operations
//! compute bias, normality diagnostics, and mean-squared-error gaps.

use nalgebra::DVector;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adjust::{adjust_closed_form_linear, adjust_newton, empirical_curvature_fn, NewtonOptions};
use crate::dataset::Dataset;
use crate::error::{AdroError, Result};
use crate::glm::{GlmKind, GlmModel};
use crate::stats;
use crate::wdro::{fit_dro, WdroConfig};

/// A sampling design for (X, Y): which model generates labels and how
/// features are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DistributionSpec {
    /// Standard-normal features, labels ±1 with
    /// P(Y=1|x) = 1/(1+exp(−⟨x,β*⟩)).
    Logistic { beta_star: DVector<f64> },
    /// Standard-normal features, Y|X ~ N(⟨x,β*⟩, σ²).
    Linear { beta_star: DVector<f64>, sigma: f64 },
    /// Features uniform on the box [low, high]^d, Y|X ~ Poisson(exp⟨x,β*⟩).
    PoissonBox { beta_star: DVector<f64>, low: f64, high: f64 },
}

impl DistributionSpec {
    /// Draws `n` observations with the given seed.
    pub fn sample(&self, n: usize, seed: u64) -> Result<Dataset> {
        match self {
            DistributionSpec::Logistic { beta_star } => generate_logistic(n, beta_star, seed),
            DistributionSpec::Linear { beta_star, sigma } => {
                generate_linear(n, beta_star, *sigma, seed)
            }
            DistributionSpec::PoissonBox { beta_star, low, high } => {
                generate_poisson(n, beta_star, *low, *high, seed)
            }
        }
    }
}

fn check_beta_star(beta_star: &DVector<f64>) -> Result<()> {
    if beta_star.len() == 0 || beta_star.norm() == 0.0 {
        return Err(AdroError::InvalidInput("beta_star must be a nonzero vector".into()));
    }
    if beta_star.iter().any(|v| !v.is_finite()) {
        return Err(AdroError::InvalidInput("beta_star must be finite".into()));
    }
    Ok(())
}

/// Standard-normal features with ±1 labels drawn from the logistic model.
pub fn generate_logistic(n: usize, beta_star: &DVector<f64>, seed: u64) -> Result<Dataset> {
    check_beta_star(beta_star)?;
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    let model = GlmModel::logistic();
    let d = beta_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let t: f64 = x.iter().zip(beta_star.iter()).map(|(a, b)| a * b).sum();
        let p = model.mean_response(t);
        let y = if rng.gen::<f64>() < p { 1.0 } else { -1.0 };
        rows.push(x);
        labels.push(y);
    }
    Dataset::from_rows(&rows, &labels, model.label_kind())
}

/// Standard-normal features with Gaussian labels of noise std `sigma`.
pub fn generate_linear(
    n: usize,
    beta_star: &DVector<f64>,
    sigma: f64,
    seed: u64,
) -> Result<Dataset> {
    check_beta_star(beta_star)?;
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(AdroError::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let d = beta_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let t: f64 = x.iter().zip(beta_star.iter()).map(|(a, b)| a * b).sum();
        let noise: f64 = rng.sample(StandardNormal);
        rows.push(x);
        labels.push(t + sigma * noise);
    }
    Dataset::from_rows(&rows, &labels, crate::dataset::LabelKind::Real)
}

/// Box-uniform features with Poisson counts of mean exp(⟨x, β*⟩).
pub fn generate_poisson(
    n: usize,
    beta_star: &DVector<f64>,
    box_low: f64,
    box_high: f64,
    seed: u64,
) -> Result<Dataset> {
    check_beta_star(beta_star)?;
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    if !(box_low < box_high) || !box_low.is_finite() || !box_high.is_finite() {
        return Err(AdroError::InvalidInput(format!(
            "invalid feature box [{box_low}, {box_high}]"
        )));
    }
    let d = beta_star.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for _ in 0..n {
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(box_low..box_high)).collect();
        let t: f64 = x.iter().zip(beta_star.iter()).map(|(a, b)| a * b).sum();
        let dist = Poisson::new(t.exp())
            .map_err(|e| AdroError::Evaluation(format!("Poisson rate: {e}")))?;
        let y: f64 = rng.sample(dist);
        rows.push(x);
        labels.push(y);
    }
    Dataset::from_rows(&rows, &labels, crate::dataset::LabelKind::Count)
}

/// Grid experiment configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub model_kind: GlmKind,
    pub beta_star: Vec<f64>,
    /// Noise std for the linear model; ignored for logistic.
    pub sigma: Option<f64>,
    pub n_grid: Vec<usize>,
    pub tau_grid: Vec<f64>,
    pub replicates: usize,
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.model_kind == GlmKind::Poisson {
            return Err(AdroError::InvalidInput(
                "experiments support the logistic and linear models only".into(),
            ));
        }
        check_beta_star(&DVector::from_column_slice(&self.beta_star))?;
        if self.n_grid.is_empty() || self.tau_grid.is_empty() {
            return Err(AdroError::Config("n and tau grids must be nonempty".into()));
        }
        if self.n_grid.iter().any(|&n| n == 0) {
            return Err(AdroError::Config("sample sizes must be positive".into()));
        }
        if self.tau_grid.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
            return Err(AdroError::Config("tau values must be finite and >= 0".into()));
        }
        if self.replicates == 0 {
            return Err(AdroError::Config("replicates must be >= 1".into()));
        }
        if self.model_kind == GlmKind::Linear {
            match self.sigma {
                Some(s) if s > 0.0 && s.is_finite() => {}
                _ => {
                    return Err(AdroError::Config(
                        "the linear model needs a positive sigma".into(),
                    ))
                }
            }
        }
        Ok(())
    }

    fn model(&self) -> Result<GlmModel> {
        match self.model_kind {
            GlmKind::Logistic => Ok(GlmModel::logistic()),
            GlmKind::Linear => GlmModel::linear(self.sigma.unwrap_or(1.0)),
            GlmKind::Poisson => Err(AdroError::InvalidInput(
                "experiments support the logistic and linear models only".into(),
            )),
        }
    }
}

/// One replicate of one (n, τ) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub n: usize,
    pub tau: f64,
    pub replicate: usize,
    pub seed: u64,
    pub beta_dro: Vec<f64>,
    pub beta_adro: Vec<f64>,
    /// ‖β_fit − β*‖².
    pub sq_err_dro: f64,
    /// ‖β_adjusted − β*‖².
    pub sq_err_adro: f64,
    /// sq_err_dro − sq_err_adro.
    pub diff: f64,
    pub norm_dro: f64,
    /// ‖β_fit − β_adjusted‖.
    pub adjustment_distance: f64,
    pub fit_converged: bool,
    /// Set when the fit or adjustment failed; numeric fields are zero and the
    /// record is excluded from summaries.
    pub error: Option<String>,
}

/// Per-cell aggregate over successful replicates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub n: usize,
    pub tau: f64,
    pub replicates_ok: usize,
    pub failed: usize,
    pub mean_sq_err_dro: f64,
    pub mean_sq_err_adro: f64,
    /// Fraction of replicates with diff > 0.
    pub positive_diff_fraction: f64,
    /// mean ‖β_fit‖ − ‖β*‖.
    pub bias_of_norm_dro: f64,
    /// mean ‖β_adjusted‖ − ‖β*‖.
    pub bias_of_norm_adro: f64,
}

/// Full experiment output: configuration, per-replicate records in canonical
/// (n, τ, replicate) order, and per-cell summaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    /// Schema version of this document.
    pub schema: u32,
    pub config: ExperimentConfig,
    pub records: Vec<CellRecord>,
    pub summaries: Vec<CellSummary>,
}

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic per-replicate seed derived from (base, n, τ, replicate), so
/// cells can run in any order or in parallel with identical results.
pub fn replicate_seed(base_seed: u64, n: usize, tau: f64, replicate: usize) -> u64 {
    let mut h = splitmix64(base_seed ^ 0xadf0_1d5e_11e0_usize as u64);
    h = splitmix64(h ^ n as u64);
    h = splitmix64(h ^ tau.to_bits());
    h = splitmix64(h ^ replicate as u64);
    h
}

fn run_replicate(
    config: &ExperimentConfig,
    model: &GlmModel,
    beta_star: &DVector<f64>,
    n: usize,
    tau: f64,
    replicate: usize,
) -> CellRecord {
    let seed = replicate_seed(config.base_seed, n, tau, replicate);
    let failed = |msg: String| CellRecord {
        n,
        tau,
        replicate,
        seed,
        beta_dro: vec![],
        beta_adro: vec![],
        sq_err_dro: 0.0,
        sq_err_adro: 0.0,
        diff: 0.0,
        norm_dro: 0.0,
        adjustment_distance: 0.0,
        fit_converged: false,
        error: Some(msg),
    };

    let data = match config.model_kind {
        GlmKind::Logistic => generate_logistic(n, beta_star, seed),
        GlmKind::Linear => generate_linear(n, beta_star, config.sigma.unwrap(), seed),
        GlmKind::Poisson => unreachable!("validated"),
    };
    let data = match data {
        Ok(d) => d,
        Err(e) => return failed(format!("generate: {e}")),
    };
    let wdro_config = match WdroConfig::new(tau, n) {
        Ok(c) => c,
        Err(e) => return failed(format!("config: {e}")),
    };
    let fit = match fit_dro(model, &data, &wdro_config) {
        Ok(f) => f,
        Err(e) => return failed(format!("fit: {e}")),
    };

    // Logistic: Newton inversion with the empirical plug-ins at N = n.
    // Linear: closed form with the ground-truth sigma and c = 1 (the
    // generator draws standard-normal features, so E[XXᵀ] is the identity).
    let beta_adro = match config.model_kind {
        GlmKind::Logistic => {
            let curvature = empirical_curvature_fn(model, &data, tau);
            match adjust_newton(&fit.beta_dro, &curvature, n, &NewtonOptions::default()) {
                Ok(adj) => adj.beta_adro,
                Err(e) => return failed(format!("adjust: {e}")),
            }
        }
        GlmKind::Linear => {
            if tau == 0.0 {
                fit.beta_dro.clone()
            } else {
                match adjust_closed_form_linear(
                    &fit.beta_dro,
                    tau,
                    config.sigma.unwrap(),
                    1.0,
                    n,
                ) {
                    Ok(b) => b,
                    Err(e) => return failed(format!("adjust: {e}")),
                }
            }
        }
        GlmKind::Poisson => unreachable!("validated"),
    };

    let sq_err_dro = (&fit.beta_dro - beta_star).norm_squared();
    let sq_err_adro = (&beta_adro - beta_star).norm_squared();
    CellRecord {
        n,
        tau,
        replicate,
        seed,
        beta_dro: fit.beta_dro.iter().copied().collect(),
        beta_adro: beta_adro.iter().copied().collect(),
        sq_err_dro,
        sq_err_adro,
        diff: sq_err_dro - sq_err_adro,
        norm_dro: fit.beta_dro.norm(),
        adjustment_distance: (&fit.beta_dro - &beta_adro).norm(),
        fit_converged: fit.converged,
        error: None,
    }
}

/// Runs the full grid. Replicates execute in parallel; records are assembled
/// in canonical (n, τ, replicate) order, so the output is deterministic for a
/// fixed configuration.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let model = config.model()?;
    let beta_star = DVector::from_column_slice(&config.beta_star);

    let mut cells = Vec::new();
    for &n in &config.n_grid {
        for &tau in &config.tau_grid {
            for replicate in 0..config.replicates {
                cells.push((n, tau, replicate));
            }
        }
    }
    let records: Vec<CellRecord> = cells
        .par_iter()
        .map(|&(n, tau, replicate)| run_replicate(config, &model, &beta_star, n, tau, replicate))
        .collect();

    let norm_star = beta_star.norm();
    let mut summaries = Vec::new();
    for &n in &config.n_grid {
        for &tau in &config.tau_grid {
            let cell: Vec<&CellRecord> = records
                .iter()
                .filter(|r| r.n == n && r.tau == tau)
                .collect();
            let ok: Vec<&&CellRecord> = cell.iter().filter(|r| r.error.is_none()).collect();
            let failed = cell.len() - ok.len();
            let sq_dro: Vec<f64> = ok.iter().map(|r| r.sq_err_dro).collect();
            let sq_adro: Vec<f64> = ok.iter().map(|r| r.sq_err_adro).collect();
            let positive = ok.iter().filter(|r| r.diff > 0.0).count();
            let norms_dro: Vec<f64> = ok.iter().map(|r| r.norm_dro).collect();
            let norms_adro: Vec<f64> = ok
                .iter()
                .map(|r| DVector::from_column_slice(&r.beta_adro).norm())
                .collect();
            summaries.push(CellSummary {
                n,
                tau,
                replicates_ok: ok.len(),
                failed,
                mean_sq_err_dro: stats::mean(&sq_dro),
                mean_sq_err_adro: stats::mean(&sq_adro),
                positive_diff_fraction: if ok.is_empty() {
                    0.0
                } else {
                    positive as f64 / ok.len() as f64
                },
                bias_of_norm_dro: stats::mean(&norms_dro) - norm_star,
                bias_of_norm_adro: stats::mean(&norms_adro) - norm_star,
            });
        }
    }

    Ok(ExperimentReport { schema: REPORT_SCHEMA_VERSION, config: config.clone(), records, summaries })
}

/// Per-cell empirical bias of both estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasCell {
    pub n: usize,
    pub tau: f64,
    pub replicates: usize,
    /// mean(β_fit) − β*, componentwise, with standard errors.
    pub mean_dev_dro: Vec<f64>,
    pub se_dev_dro: Vec<f64>,
    pub mean_dev_adro: Vec<f64>,
    pub se_dev_adro: Vec<f64>,
    /// mean ‖β_fit‖ − ‖β*‖ with standard error.
    pub norm_bias_dro: f64,
    pub norm_bias_se_dro: f64,
    pub norm_bias_adro: f64,
    pub norm_bias_se_adro: f64,
}

/// Empirical bias per cell: componentwise deviations and norm bias, with
/// standard errors. Needs at least two successful replicates per cell.
pub fn bias_summary(report: &ExperimentReport) -> Result<Vec<BiasCell>> {
    let beta_star = DVector::from_column_slice(&report.config.beta_star);
    let d = beta_star.len();
    let norm_star = beta_star.norm();
    let mut out = Vec::new();
    for &n in &report.config.n_grid {
        for &tau in &report.config.tau_grid {
            let ok: Vec<&CellRecord> = report
                .records
                .iter()
                .filter(|r| r.n == n && r.tau == tau && r.error.is_none())
                .collect();
            if ok.len() < 2 {
                return Err(AdroError::InsufficientData(format!(
                    "cell (n={n}, tau={tau}) has {} successful replicates; need >= 2",
                    ok.len()
                )));
            }
            let mut mean_dev_dro = Vec::with_capacity(d);
            let mut se_dev_dro = Vec::with_capacity(d);
            let mut mean_dev_adro = Vec::with_capacity(d);
            let mut se_dev_adro = Vec::with_capacity(d);
            for j in 0..d {
                let devs_dro: Vec<f64> =
                    ok.iter().map(|r| r.beta_dro[j] - beta_star[j]).collect();
                let devs_adro: Vec<f64> =
                    ok.iter().map(|r| r.beta_adro[j] - beta_star[j]).collect();
                mean_dev_dro.push(stats::mean(&devs_dro));
                se_dev_dro.push(stats::standard_error(&devs_dro));
                mean_dev_adro.push(stats::mean(&devs_adro));
                se_dev_adro.push(stats::standard_error(&devs_adro));
            }
            let norms_dro: Vec<f64> = ok.iter().map(|r| r.norm_dro - norm_star).collect();
            let norms_adro: Vec<f64> = ok
                .iter()
                .map(|r| DVector::from_column_slice(&r.beta_adro).norm() - norm_star)
                .collect();
            out.push(BiasCell {
                n,
                tau,
                replicates: ok.len(),
                mean_dev_dro,
                se_dev_dro,
                mean_dev_adro,
                se_dev_adro,
                norm_bias_dro: stats::mean(&norms_dro),
                norm_bias_se_dro: stats::standard_error(&norms_dro),
                norm_bias_adro: stats::mean(&norms_adro),
                norm_bias_se_adro: stats::standard_error(&norms_adro),
            });
        }
    }
    Ok(out)
}

/// Histogram of one coordinate of the scaled deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

/// Moment diagnostics for one coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinateDiagnostics {
    pub skewness: f64,
    pub excess_kurtosis: f64,
    /// Set when the coordinate shows no variation; moments are reported as 0.
    pub degenerate: bool,
    pub histogram: Histogram,
}

/// Normality diagnostics of √n(β̂ − center) over a set of estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityDiagnostics {
    /// The scaling √n applied to the deviations.
    pub scale: f64,
    /// Mean of the scaled deviations per coordinate.
    pub mean_offset: Vec<f64>,
    pub coordinates: Vec<CoordinateDiagnostics>,
}

/// Moment-based normality diagnostics (no hypothesis test): skewness, excess
/// kurtosis, and histogram bins of √n(β̂ − center) per coordinate. Requires
/// at least 30 estimates.
pub fn normality_diagnostics(
    estimates: &[DVector<f64>],
    center: &DVector<f64>,
    n: usize,
) -> Result<NormalityDiagnostics> {
    if estimates.len() < 30 {
        return Err(AdroError::InsufficientData(format!(
            "normality diagnostics need >= 30 estimates, got {}",
            estimates.len()
        )));
    }
    let d = center.len();
    if estimates.iter().any(|e| e.len() != d) {
        return Err(AdroError::DimensionMismatch("estimate/center dimensions differ".into()));
    }
    let scale = (n as f64).sqrt();
    let m = estimates.len();
    let bins = ((m as f64).sqrt().floor() as usize).max(10);
    let mut mean_offset = Vec::with_capacity(d);
    let mut coordinates = Vec::with_capacity(d);
    for j in 0..d {
        let zs: Vec<f64> = estimates.iter().map(|e| scale * (e[j] - center[j])).collect();
        mean_offset.push(stats::mean(&zs));
        let var = stats::sample_variance(&zs);
        let degenerate = var <= 1e-20 * (1.0 + stats::mean(&zs).powi(2));
        let (lo, hi) = if degenerate {
            (zs[0] - 0.5, zs[0] + 0.5)
        } else {
            let lo = zs.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = zs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (lo, hi)
        };
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &z in &zs {
            let idx = (((z - lo) / width) as usize).min(bins - 1);
            counts[idx] += 1;
        }
        coordinates.push(CoordinateDiagnostics {
            skewness: if degenerate { 0.0 } else { stats::skewness(&zs) },
            excess_kurtosis: if degenerate { 0.0 } else { stats::excess_kurtosis(&zs) },
            degenerate,
            histogram: Histogram { lo, hi, counts },
        });
    }
    Ok(NormalityDiagnostics { scale, mean_offset, coordinates })
}

/// Per-cell mean-squared-error comparison with the theoretical gap in the
/// isotropic linear case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AmseCell {
    pub n: usize,
    pub tau: f64,
    pub replicates: usize,
    pub mse_dro: f64,
    pub mse_adro: f64,
    /// Mean of per-replicate diff with its standard error.
    pub gap_mean: f64,
    pub gap_se: f64,
    /// (τσ/c)²/n for the linear isotropic design, absent for logistic.
    pub predicted_gap: Option<f64>,
}

/// Empirical MSE per estimator per cell and the gap against the theoretical
/// (τσ/c)²/n prediction where one is available.
pub fn amse_summary(report: &ExperimentReport) -> Vec<AmseCell> {
    let mut out = Vec::new();
    for &n in &report.config.n_grid {
        for &tau in &report.config.tau_grid {
            let ok: Vec<&CellRecord> = report
                .records
                .iter()
                .filter(|r| r.n == n && r.tau == tau && r.error.is_none())
                .collect();
            let sq_dro: Vec<f64> = ok.iter().map(|r| r.sq_err_dro).collect();
            let sq_adro: Vec<f64> = ok.iter().map(|r| r.sq_err_adro).collect();
            let diffs: Vec<f64> = ok.iter().map(|r| r.diff).collect();
            let predicted_gap = match report.config.model_kind {
                GlmKind::Linear => report
                    .config
                    .sigma
                    .map(|sigma| (tau * sigma).powi(2) / n as f64),
                _ => None,
            };
            out.push(AmseCell {
                n,
                tau,
                replicates: ok.len(),
                mse_dro: stats::mean(&sq_dro),
                mse_adro: stats::mean(&sq_adro),
                gap_mean: stats::mean(&diffs),
                gap_se: stats::standard_error(&diffs),
                predicted_gap,
            });
        }
    }
    out
}
