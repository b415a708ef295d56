//! Worst-case (robust) loss evaluation and fitting.
//!
//! The robust loss of a parameter β over an ambiguity ball of radius ρ around
//! the empirical distribution is evaluated through its dual form
//!
//! ```text
//! Ψ(β) = inf_{λ} [ λρ² + (1/n) Σ_i sup_x { L(⟨x,β⟩, y_i) − λ‖x − X_i‖² } ]
//! ```
//!
//! where only features move (transporting a sample to a different label costs
//! infinity, so labels stay fixed). Because the loss depends on x only through
//! the margin ⟨x, β⟩ and the transport cost is squared Euclidean, the optimal
//! perturbation moves along β and each per-sample supremum reduces to one
//! dimension: `sup_t { L(t, y_i) − λ (t − ⟨X_i, β⟩)² / ‖β‖² }`.
//!
//! The reduced problem is strictly concave only when λ exceeds the concavity
//! threshold `‖β‖² κ / 2`, with κ the supremum of the loss curvature; the λ
//! search is restricted to that range. The outer λ minimization is a
//! golden-section search on a bracketed interval, and [`fit_dro`] runs
//! fixed-step gradient descent on β, with the gradient of Ψ obtained from the
//! envelope rule at the per-sample inner maximizers.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{AdroError, Result};
use crate::glm::{GlmKind, GlmModel, Margin};
use crate::scalar::golden_section_min;

/// Hyperparameters of the robust fit: radius coefficient, sample size that
/// defines the radius ρ = τ/√n, and solver tolerances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WdroConfig {
    /// Radius coefficient τ ≥ 0 in ρ = τ/√n.
    pub tau: f64,
    /// Sample size n defining the radius (usually the dataset size).
    pub n_radius: usize,
    /// Gradient-descent step size.
    pub step_size: f64,
    /// Gradient-descent iteration cap.
    pub max_iters: usize,
    /// Termination threshold on the gradient norm.
    pub grad_tol: f64,
    /// Optional explicit λ-search bracket; derived automatically when absent.
    pub lambda_bracket: Option<(f64, f64)>,
    /// Relative interval tolerance of the golden-section λ search.
    pub inner_tol: f64,
}

impl WdroConfig {
    /// Defaults: step 0.3, cap 50000, gradient tolerance 1e-7, inner tolerance
    /// 1e-10, automatic λ bracket.
    pub fn new(tau: f64, n_radius: usize) -> Result<Self> {
        let cfg = Self {
            tau,
            n_radius,
            step_size: 0.3,
            max_iters: 50_000,
            grad_tol: 1e-7,
            lambda_bracket: None,
            inner_tol: 1e-10,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return Err(AdroError::Config(format!("tau must be finite and >= 0, got {}", self.tau)));
        }
        if self.n_radius == 0 {
            return Err(AdroError::Config("n_radius must be positive".into()));
        }
        if !(self.step_size > 0.0) {
            return Err(AdroError::Config("step_size must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(AdroError::Config("max_iters must be positive".into()));
        }
        if !(self.grad_tol > 0.0) || !(self.inner_tol > 0.0) {
            return Err(AdroError::Config("tolerances must be positive".into()));
        }
        if let Some((lo, hi)) = self.lambda_bracket {
            if !(lo > 0.0 && hi > lo) {
                return Err(AdroError::Config(format!(
                    "lambda bracket must satisfy 0 < low < high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    /// The ambiguity radius ρ = τ/√n; always derived, never set directly.
    pub fn rho(&self) -> f64 {
        self.tau / (self.n_radius as f64).sqrt()
    }
}

/// Result of [`fit_dro`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub beta_dro: DVector<f64>,
    /// Robust loss Ψ at the returned parameter.
    pub robust_loss: f64,
    /// Optimal dual multiplier; `None` at zero radius, where the dual has no
    /// finite minimizer and Ψ equals the empirical loss.
    pub lambda_star: Option<f64>,
    /// Total gradient steps taken (initializer stage included).
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Concavity threshold `‖β‖² κ / 2` below which the reduced inner problem is
/// not strictly concave (and unbounded for the linear loss).
fn concavity_threshold(model: &GlmModel, beta_norm_sq: f64) -> f64 {
    0.5 * beta_norm_sq * model.max_curvature()
}

/// Safeguarded Newton for the logistic inner problem: the unique root of
/// `L'(t, y) = μ (t − s)`. |L'| < 1 pins the root inside [s − 1/μ, s + 1/μ];
/// each iteration shares one exp between the sigmoid and its derivative.
#[inline]
fn logistic_margin_root(mu: f64, s: f64, y: f64, warm: f64) -> f64 {
    let mut lo = s - 1.0 / mu;
    let mut hi = s + 1.0 / mu;
    let mut t = if warm.is_finite() { warm.clamp(lo, hi) } else { s };
    for _ in 0..100 {
        let m = y * t;
        let z = (-m.abs()).exp();
        let sig_neg = if m >= 0.0 { z / (1.0 + z) } else { 1.0 / (1.0 + z) }; // σ(−m)
        let q = -y * sig_neg - mu * (t - s);
        if q > 0.0 {
            lo = t;
        } else {
            hi = t;
        }
        let opz = 1.0 + z;
        let slope = z / (opz * opz) - mu; // L'' − μ < 0 above the threshold
        let mut next = t - q / slope;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - t).abs() <= 1e-9 * (1.0 + t.abs()) {
            return next;
        }
        t = next;
    }
    t
}

/// Solves the reduced per-sample problem: the unique root of
/// `L'(t, y) = μ (t − s)` with `μ = 2λ/‖β‖²` above the concavity threshold.
fn solve_margin(model: &GlmModel, mu: f64, s: f64, y: f64, warm: f64) -> f64 {
    match model.kind() {
        GlmKind::Linear => (mu * s - y) / (mu - 1.0),
        GlmKind::Logistic => logistic_margin_root(mu, s, y, warm),
        GlmKind::Poisson => unreachable!("Poisson curvature is unbounded; guarded by threshold"),
    }
}

/// Per-sample worst-case loss at multiplier λ:
/// `sup_t { L(t, y) − λ (t − ⟨x,β⟩)² / ‖β‖² }` together with the maximizing
/// margin. Requires β ≠ 0 and λ above the concavity threshold.
pub fn inner_worst_case(
    model: &GlmModel,
    lambda: f64,
    beta: &DVector<f64>,
    x_i: &DVector<f64>,
    y_i: f64,
) -> Result<(f64, Margin)> {
    if x_i.len() != beta.len() {
        return Err(AdroError::DimensionMismatch(format!(
            "x has {} entries, beta has {}",
            x_i.len(),
            beta.len()
        )));
    }
    model.label_kind().check(y_i)?;
    let b2 = beta.norm_squared();
    if b2 == 0.0 {
        return Err(AdroError::DegenerateParameter);
    }
    let threshold = concavity_threshold(model, b2);
    if !(lambda > threshold) {
        return Err(AdroError::UnboundedInnerProblem { lambda, threshold });
    }
    let s = x_i.dot(beta);
    let mu = 2.0 * lambda / b2;
    let t = solve_margin(model, mu, s, y_i, f64::NAN);
    let value = model.loss_unchecked(t, y_i) - 0.5 * mu * (t - s) * (t - s);
    Ok((value, Margin(t)))
}

/// Internal evaluation of the dual robust loss at one β.
pub(crate) struct DualEval {
    pub psi: f64,
    pub lambda_star: Option<f64>,
    /// Per-sample maximizing margins t*.
    pub margins: Vec<f64>,
    /// Per-sample base margins s = ⟨X_i, β⟩.
    pub base_margins: DVector<f64>,
    /// Slope ∂φ/∂λ = ρ² − (1/n)Σ(t_i*−s_i)²/‖β‖² at λ*, kept when λ* sits on
    /// the concavity-threshold floor (zero at an interior optimum).
    pub pinned_slope: f64,
}

fn dual_objective(
    model: &GlmModel,
    base: &DVector<f64>,
    labels: &DVector<f64>,
    b2: f64,
    rho2: f64,
    lambda: f64,
    t_cache: &mut [f64],
) -> f64 {
    let mu = 2.0 * lambda / b2;
    let n = base.len();
    let mut sum = 0.0;
    match model.kind() {
        GlmKind::Linear => {
            for i in 0..n {
                let s = base[i];
                let y = labels[i];
                let t = (mu * s - y) / (mu - 1.0);
                t_cache[i] = t;
                let r = t - y;
                sum += 0.5 * r * r - 0.5 * mu * (t - s) * (t - s);
            }
        }
        GlmKind::Logistic => {
            for i in 0..n {
                let s = base[i];
                let y = labels[i];
                let t = logistic_margin_root(mu, s, y, t_cache[i]);
                t_cache[i] = t;
                let m = y * t;
                let z = (-m.abs()).exp();
                let loss = z.ln_1p() + (-m).max(0.0);
                sum += loss - 0.5 * mu * (t - s) * (t - s);
            }
        }
        GlmKind::Poisson => unreachable!("guarded by the concavity threshold"),
    }
    lambda * rho2 + sum / n as f64
}

/// Evaluates Ψ(β). `warm_lambda` narrows the λ bracket around a previous
/// optimum; `t_cache` warm-starts the per-sample inner solves.
pub(crate) fn robust_loss_core(
    model: &GlmModel,
    data: &Dataset,
    beta: &DVector<f64>,
    config: &WdroConfig,
    warm_lambda: Option<f64>,
    t_cache: &mut Vec<f64>,
) -> Result<DualEval> {
    if data.label_kind() != model.label_kind() {
        return Err(AdroError::InvalidInput(format!(
            "dataset labels are {:?} but the model needs {:?}",
            data.label_kind(),
            model.label_kind()
        )));
    }
    let base = data.margins(beta)?;
    let labels = data.labels();
    let n = data.n_samples();
    let empirical_loss =
        (0..n).map(|i| model.loss_unchecked(base[i], labels[i])).sum::<f64>() / n as f64;
    let rho = config.rho();

    if rho == 0.0 {
        return Ok(DualEval {
            psi: empirical_loss,
            lambda_star: None,
            margins: base.iter().copied().collect(),
            base_margins: base,
            pinned_slope: 0.0,
        });
    }

    let b2 = beta.norm_squared();
    if b2 == 0.0 {
        return Err(AdroError::DegenerateParameter);
    }
    let threshold = concavity_threshold(model, b2);
    if !threshold.is_finite() {
        return Err(AdroError::InvalidInput(
            "the worst-case loss is unbounded for this model: the loss curvature has no finite supremum"
                .into(),
        ));
    }
    let floor = threshold * (1.0 + 1e-6) + f64::MIN_POSITIVE;
    let rho2 = rho * rho;
    let default_hi = threshold + 10.0 * (1.0 + empirical_loss) / rho2;

    let user_bracket = config.lambda_bracket.is_some();
    let (mut lo, mut hi) = match config.lambda_bracket {
        Some((blo, bhi)) => {
            if bhi <= threshold {
                return Err(AdroError::Config(format!(
                    "lambda bracket high {bhi} is at or below the concavity threshold {threshold}"
                )));
            }
            (blo.max(floor), bhi)
        }
        None => match warm_lambda {
            Some(l) if l.is_finite() && l > floor => ((l / 4.0).max(floor), 4.0 * l),
            _ => (floor, default_hi),
        },
    };
    if hi <= lo {
        hi = default_hi.max(2.0 * lo);
    }

    if t_cache.len() != n {
        t_cache.clear();
        t_cache.extend(base.iter());
    }

    let mut solution = None;
    for _ in 0..=8 {
        let (lam, val) = golden_section_min(
            |l| Ok(dual_objective(model, &base, labels, b2, rho2, l, t_cache)),
            lo,
            hi,
            config.inner_tol,
        )?;
        let edge = 4.0 * config.inner_tol * (1.0 + hi.abs());
        if !user_bracket && hi - lam <= edge {
            lo = lam / 2.0;
            hi *= 4.0;
            continue;
        }
        if !user_bracket && lam - lo <= edge && lo > floor * (1.0 + 1e-12) {
            hi = 2.0 * lam;
            lo = (lo / 4.0).max(floor);
            continue;
        }
        solution = Some((lam, val));
        break;
    }
    let (lambda_star, psi) = solution.ok_or_else(|| {
        AdroError::Config("lambda search failed to bracket the dual minimizer".into())
    })?;
    // Refresh the cache at the returned multiplier.
    let psi_final = dual_objective(model, &base, labels, b2, rho2, lambda_star, t_cache);
    debug_assert!((psi_final - psi).abs() <= 1e-9 * (1.0 + psi.abs()));

    // When the minimizer sits on the threshold floor, the objective still
    // slopes upward in λ there; the gradient in β then picks up a term
    // through the β-dependence of the floor itself.
    let pinned_slope = if lambda_star <= floor * (1.0 + 1e-5) + 1e-12 {
        let mean_cost = t_cache
            .iter()
            .zip(base.iter())
            .map(|(t, s)| (t - s) * (t - s))
            .sum::<f64>()
            / (n as f64 * b2);
        (rho2 - mean_cost).max(0.0)
    } else {
        0.0
    };

    Ok(DualEval {
        psi: psi_final,
        lambda_star: Some(lambda_star),
        margins: t_cache.clone(),
        base_margins: base,
        pinned_slope,
    })
}

/// Gradient of Ψ in β by the envelope rule: the average of the per-sample
/// loss gradients evaluated at the inner maximizers
/// `x_i* = X_i + (t_i* − s_i) β / ‖β‖²`.
fn envelope_gradient(
    model: &GlmModel,
    data: &Dataset,
    beta: &DVector<f64>,
    eval: &DualEval,
) -> DVector<f64> {
    let n = data.n_samples();
    let labels = data.labels();
    let mut weights = DVector::zeros(n);
    let mut correction = 0.0;
    for i in 0..n {
        let w = model.dloss_unchecked(eval.margins[i], labels[i]);
        weights[i] = w;
        correction += w * (eval.margins[i] - eval.base_margins[i]);
    }
    let mut grad = data.features().transpose() * weights / n as f64;
    let b2 = beta.norm_squared();
    if b2 > 0.0 && correction != 0.0 {
        grad += beta * (correction / (n as f64 * b2));
    }
    if eval.pinned_slope > 0.0 {
        // λ* = floor(β) = (1+1e-6)·κ‖β‖²/2, so ∇_β floor = (1+1e-6)·κβ.
        grad += beta * (eval.pinned_slope * model.max_curvature() * (1.0 + 1e-6));
    }
    grad
}

/// Robust loss Ψ(β) and the optimal dual multiplier (None at zero radius).
pub fn robust_loss(
    model: &GlmModel,
    data: &Dataset,
    beta: &DVector<f64>,
    config: &WdroConfig,
) -> Result<(f64, Option<f64>)> {
    config.validate()?;
    if beta.norm_squared() == 0.0 {
        return Err(AdroError::DegenerateParameter);
    }
    let mut cache = Vec::new();
    let eval = robust_loss_core(model, data, beta, config, None, &mut cache)?;
    Ok((eval.psi, eval.lambda_star))
}

struct DescentOutcome {
    beta: DVector<f64>,
    psi: f64,
    lambda_star: Option<f64>,
    iterations: usize,
    converged: bool,
    grad_norm: f64,
}

fn gradient_descent(
    model: &GlmModel,
    data: &Dataset,
    config: &WdroConfig,
    mut beta: DVector<f64>,
) -> Result<DescentOutcome> {
    let mut t_cache = Vec::new();
    let mut warm = None;
    let mut eval = robust_loss_core(model, data, &beta, config, warm, &mut t_cache)?;
    warm = eval.lambda_star;
    let mut iterations = 0;
    let mut converged = false;
    let mut grad_norm;
    let mut stalled = 0;
    loop {
        let grad = envelope_gradient(model, data, &beta, &eval);
        grad_norm = grad.norm();
        if !grad_norm.is_finite() || !eval.psi.is_finite() {
            return Err(AdroError::SolverDiverged(format!(
                "non-finite objective or gradient at iteration {iterations}"
            )));
        }
        if grad_norm <= config.grad_tol {
            converged = true;
            break;
        }
        if iterations >= config.max_iters || stalled >= 3 {
            break;
        }
        iterations += 1;

        // Fixed step with halving on objective increase.
        let mut step = config.step_size;
        let mut accepted = false;
        for _ in 0..40 {
            let candidate = &beta - &grad * step;
            if config.rho() > 0.0 && candidate.norm_squared() == 0.0 {
                step *= 0.5;
                continue;
            }
            match robust_loss_core(model, data, &candidate, config, warm, &mut t_cache) {
                Ok(cand_eval)
                    if cand_eval.psi.is_finite()
                        && cand_eval.psi <= eval.psi + 1e-15 * (1.0 + eval.psi.abs()) =>
                {
                    // Track objective stagnation at numerical precision.
                    if eval.psi - cand_eval.psi <= 1e-15 * (1.0 + eval.psi.abs()) {
                        stalled += 1;
                    } else {
                        stalled = 0;
                    }
                    beta = candidate;
                    warm = cand_eval.lambda_star;
                    eval = cand_eval;
                    accepted = true;
                    break;
                }
                _ => step *= 0.5,
            }
        }
        if !accepted {
            // Objective floor reached; the final gradient check decides.
            let grad = envelope_gradient(model, data, &beta, &eval);
            grad_norm = grad.norm();
            converged = grad_norm <= config.grad_tol;
            break;
        }
    }
    Ok(DescentOutcome {
        beta,
        psi: eval.psi,
        lambda_star: eval.lambda_star,
        iterations,
        converged,
        grad_norm,
    })
}

/// Fits the robust estimator by gradient descent on Ψ, initialized at the
/// empirical-risk solution (the zero-radius fit). Supports the logistic and
/// linear models.
pub fn fit_dro(model: &GlmModel, data: &Dataset, config: &WdroConfig) -> Result<FitResult> {
    config.validate()?;
    if model.kind() == GlmKind::Poisson {
        return Err(AdroError::InvalidInput(
            "robust fitting is not defined for the Poisson model (unbounded loss curvature)"
                .into(),
        ));
    }
    if data.label_kind() != model.label_kind() {
        return Err(AdroError::InvalidInput(format!(
            "dataset labels are {:?} but the model needs {:?}",
            data.label_kind(),
            model.label_kind()
        )));
    }

    let erm_config = WdroConfig { tau: 0.0, lambda_bracket: None, ..config.clone() };
    let erm = gradient_descent(model, data, &erm_config, DVector::zeros(data.dim()))?;

    if config.rho() == 0.0 {
        return Ok(FitResult {
            beta_dro: erm.beta,
            robust_loss: erm.psi,
            lambda_star: None,
            iterations: erm.iterations,
            converged: erm.converged,
            grad_norm: erm.grad_norm,
        });
    }

    let mut init = erm.beta;
    if init.norm() < 1e-10 {
        // Degenerate initializer: nudge off the origin deterministically.
        init = DVector::zeros(data.dim());
        init[0] = 1e-3;
    }
    let robust = gradient_descent(model, data, config, init)?;
    Ok(FitResult {
        beta_dro: robust.beta,
        robust_loss: robust.psi,
        lambda_star: robust.lambda_star,
        iterations: erm.iterations + robust.iterations,
        converged: robust.converged,
        grad_norm: robust.grad_norm,
    })
}

/// Closed form of the robust loss for the linear model with squared
/// feature-transport cost: `½ (√m₂ + ρ‖β‖)²` where
/// `m₂ = (1/n) Σ (⟨X_i,β⟩ − y_i)²`. At ρ = 0 this is the empirical mean loss.
/// Serves as the independent oracle for the dual evaluator.
pub fn linear_robust_loss_closed_form(
    data: &Dataset,
    beta: &DVector<f64>,
    rho: f64,
) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(AdroError::InvalidInput(format!("rho must be finite and >= 0, got {rho}")));
    }
    if beta.norm_squared() == 0.0 {
        return Err(AdroError::DegenerateParameter);
    }
    let margins = data.margins(beta)?;
    let labels = data.labels();
    let m2 = margins
        .iter()
        .zip(labels.iter())
        .map(|(s, y)| (s - y) * (s - y))
        .sum::<f64>()
        / data.n_samples() as f64;
    let root = m2.sqrt() + rho * beta.norm();
    Ok(0.5 * root * root)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::LabelKind;
    use crate::numdiff::central_gradient;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    /// Independent brute-force oracle for the reduced inner problem:
    /// dense grid over t followed by golden-section refinement.
    fn grid_refine_max(f: impl Fn(f64) -> f64, lo: f64, hi: f64, points: usize) -> (f64, f64) {
        let mut best_t = lo;
        let mut best_v = f(lo);
        for k in 1..=points {
            let t = lo + (hi - lo) * k as f64 / points as f64;
            let v = f(t);
            if v > best_v {
                best_v = v;
                best_t = t;
            }
        }
        let half = (hi - lo) / points as f64;
        let (t, neg_v) =
            golden_section_min(|t| Ok(-f(t)), best_t - half, best_t + half, 1e-14).unwrap();
        (t, -neg_v)
    }

    fn random_dataset(
        model: &GlmModel,
        n: usize,
        d: usize,
        rng: &mut ChaCha8Rng,
    ) -> Dataset {
        let rows: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect();
        let labels: Vec<f64> = rows
            .iter()
            .map(|_| match model.kind() {
                GlmKind::Logistic => {
                    if rng.gen::<bool>() {
                        1.0
                    } else {
                        -1.0
                    }
                }
                GlmKind::Linear => rng.gen_range(-2.0..2.0),
                GlmKind::Poisson => rng.gen_range(0..6) as f64,
            })
            .collect();
        Dataset::from_rows(&rows, &labels, model.label_kind()).unwrap()
    }

    #[test]
    fn inner_linear_matches_closed_form_and_grid() {
        let model = GlmModel::linear(0.5).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let beta = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0f64).max(0.05));
            let x = DVector::from_fn(2, |_, _| rng.gen_range(-2.0..2.0));
            let y = rng.gen_range(-2.0..2.0);
            let b2 = beta.norm_squared();
            let lambda = 0.5 * b2 * (1.0 + rng.gen_range(0.2..4.0));
            let (value, t_star) = inner_worst_case(&model, lambda, &beta, &x, y).unwrap();

            let s = x.dot(&beta);
            let kappa = 2.0 * lambda / b2;
            let t_closed = (kappa * s - y) / (kappa - 1.0);
            let v_closed = 0.5 * (t_closed - y).powi(2) - lambda * (t_closed - s).powi(2) / b2;
            assert_relative_eq!(t_star.value(), t_closed, epsilon = 1e-9);
            assert_relative_eq!(value, v_closed, epsilon = 1e-10);

            let f = |t: f64| 0.5 * (t - y) * (t - y) - lambda * (t - s) * (t - s) / b2;
            let (_, v_grid) = grid_refine_max(f, -60.0, 60.0, 30_000);
            assert!((value - v_grid).abs() < 1e-8, "value {value} vs grid {v_grid}");
        }
    }

    #[test]
    fn inner_logistic_matches_grid_oracle() {
        let model = GlmModel::logistic();
        let beta = DVector::from_column_slice(&[1.0, 0.0]);
        let x = DVector::from_column_slice(&[0.0, 0.0]);
        let (value, t_star) = inner_worst_case(&model, 1.0, &beta, &x, 1.0).unwrap();
        let f = |t: f64| model.loss_unchecked(t, 1.0) - (t - 0.0) * (t - 0.0);
        let (t_grid, v_grid) = grid_refine_max(f, -50.0, 50.0, 100_000);
        assert!((value - v_grid).abs() < 1e-8);
        assert!((t_star.value() - t_grid).abs() < 1e-6);
    }

    #[test]
    fn inner_large_lambda_pins_to_sample() {
        let model = GlmModel::logistic();
        let beta = DVector::from_column_slice(&[0.7, -1.2]);
        let x = DVector::from_column_slice(&[0.4, 0.9]);
        let y = -1.0;
        let (value, t_star) = inner_worst_case(&model, 1e8, &beta, &x, y).unwrap();
        let s = x.dot(&beta);
        assert!((t_star.value() - s).abs() < 1e-4);
        assert!((value - model.loss(s, y).unwrap()).abs() < 1e-4);
    }

    #[test]
    fn inner_rejects_lambda_below_threshold() {
        let model = GlmModel::linear(1.0).unwrap();
        let beta = DVector::from_column_slice(&[2.0, 0.0]);
        let x = DVector::from_column_slice(&[1.0, 1.0]);
        // threshold = ‖β‖²/2 = 2
        let err = inner_worst_case(&model, 1.9, &beta, &x, 0.0).unwrap_err();
        assert!(matches!(err, AdroError::UnboundedInnerProblem { .. }));
    }

    #[test]
    fn inner_rejects_zero_beta() {
        let model = GlmModel::logistic();
        let beta = DVector::zeros(2);
        let x = DVector::from_column_slice(&[1.0, 0.0]);
        let err = inner_worst_case(&model, 1.0, &beta, &x, 1.0).unwrap_err();
        assert!(matches!(err, AdroError::DegenerateParameter));
    }

    #[test]
    fn zero_radius_recovers_empirical_loss() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = GlmModel::logistic();
        let data = random_dataset(&model, 40, 2, &mut rng);
        let beta = DVector::from_column_slice(&[0.4, -0.9]);
        let config = WdroConfig::new(0.0, data.n_samples()).unwrap();
        let (psi, lambda) = robust_loss(&model, &data, &beta, &config).unwrap();
        let margins = data.margins(&beta).unwrap();
        let emp = margins
            .iter()
            .zip(data.labels().iter())
            .map(|(&s, &y)| model.loss(s, y).unwrap())
            .sum::<f64>()
            / data.n_samples() as f64;
        assert!((psi - emp).abs() < 1e-8);
        assert!(lambda.is_none());
    }

    #[test]
    fn dual_matches_linear_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let model = GlmModel::linear(0.3).unwrap();
        for _ in 0..5 {
            let data = random_dataset(&model, 60, 2, &mut rng);
            let beta = DVector::from_fn(2, |_, _| rng.gen_range(-1.5..1.5f64));
            if beta.norm() < 0.1 {
                continue;
            }
            let config = WdroConfig::new(rng.gen_range(0.2..2.0), data.n_samples()).unwrap();
            let (psi, _) = robust_loss(&model, &data, &beta, &config).unwrap();
            let oracle = linear_robust_loss_closed_form(&data, &beta, config.rho()).unwrap();
            assert!(
                (psi - oracle).abs() / oracle.abs().max(1e-12) < 1e-4,
                "dual {psi} vs closed form {oracle}"
            );
        }
    }

    #[test]
    fn closed_form_examples() {
        // Zero residuals, ρ = 0.1, ‖β‖ = 1 → ½ (0 + 0.1)² = 0.005.
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let beta = DVector::from_column_slice(&[0.6, 0.8]);
        let labels: Vec<f64> = rows
            .iter()
            .map(|r| r[0] * beta[0] + r[1] * beta[1])
            .collect();
        let data = Dataset::from_rows(&rows, &labels, LabelKind::Real).unwrap();
        let v = linear_robust_loss_closed_form(&data, &beta, 0.1).unwrap();
        assert_relative_eq!(v, 0.005, epsilon = 1e-15);

        // ρ = 0 → empirical mean loss.
        let labels2 = [1.0, -1.0];
        let data2 = Dataset::from_rows(&rows, &labels2, LabelKind::Real).unwrap();
        let v0 = linear_robust_loss_closed_form(&data2, &beta, 0.0).unwrap();
        let model = GlmModel::linear(1.0).unwrap();
        let emp = (model.loss(0.6, 1.0).unwrap() + model.loss(0.8, -1.0).unwrap()) / 2.0;
        assert_relative_eq!(v0, emp, epsilon = 1e-14);
    }

    #[test]
    fn psi_dominates_empirical_loss_and_grows_with_tau() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for model in [GlmModel::logistic(), GlmModel::linear(0.5).unwrap()] {
            let data = random_dataset(&model, 30, 2, &mut rng);
            let beta = DVector::from_column_slice(&[0.8, -0.3]);
            let margins = data.margins(&beta).unwrap();
            let emp = margins
                .iter()
                .zip(data.labels().iter())
                .map(|(&s, &y)| model.loss(s, y).unwrap())
                .sum::<f64>()
                / data.n_samples() as f64;
            let mut last = f64::NEG_INFINITY;
            for tau in [0.0, 0.5, 1.0, 2.0] {
                let config = WdroConfig::new(tau, data.n_samples()).unwrap();
                let (psi, _) = robust_loss(&model, &data, &beta, &config).unwrap();
                assert!(psi >= emp - 1e-10, "psi {psi} below empirical {emp} at tau {tau}");
                assert!(psi >= last - 1e-10, "psi not monotone in tau");
                last = psi;
            }
        }
    }

    /// Any feasible perturbation of the features (mean squared move ≤ ρ²,
    /// labels fixed) yields an empirical loss at most Ψ.
    #[test]
    fn weak_duality_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let model = GlmModel::logistic();
        let data = random_dataset(&model, 25, 2, &mut rng);
        let beta = DVector::from_column_slice(&[1.1, 0.4]);
        let config = WdroConfig::new(1.5, data.n_samples()).unwrap();
        let rho = config.rho();
        let (psi, _) = robust_loss(&model, &data, &beta, &config).unwrap();
        let n = data.n_samples();
        for _ in 0..50 {
            // Random direction per sample, scaled so (1/n)Σ‖δ_i‖² ≤ ρ².
            let deltas: Vec<DVector<f64>> = (0..n)
                .map(|_| DVector::from_fn(2, |_, _| rng.gen_range(-1.0..1.0)))
                .collect();
            let total: f64 = deltas.iter().map(|d| d.norm_squared()).sum();
            let scale = rng.gen_range(0.0..1.0) * rho * (n as f64 / total).sqrt();
            let mut perturbed_loss = 0.0;
            for i in 0..n {
                let x = data.sample(i) + &deltas[i] * scale;
                perturbed_loss += model.loss(x.dot(&beta), data.labels()[i]).unwrap();
            }
            perturbed_loss /= n as f64;
            assert!(perturbed_loss <= psi + 1e-8, "{perturbed_loss} > {psi}");
        }
    }

    #[test]
    fn envelope_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for model in [GlmModel::logistic(), GlmModel::linear(0.5).unwrap()] {
            let data = random_dataset(&model, 30, 2, &mut rng);
            let config = WdroConfig::new(1.0, data.n_samples()).unwrap();
            let beta = DVector::from_column_slice(&[0.9, -0.6]);
            let mut cache = Vec::new();
            let eval = robust_loss_core(&model, &data, &beta, &config, None, &mut cache).unwrap();
            let grad = envelope_gradient(&model, &data, &beta, &eval);
            let fd = central_gradient(
                |b| robust_loss(&model, &data, b, &config).map(|(p, _)| p),
                &beta,
                1e-5,
            )
            .unwrap();
            let rel = (&grad - &fd).norm() / grad.norm().max(1e-8);
            assert!(rel < 1e-4, "envelope {grad} vs fd {fd} (rel {rel})");
        }
    }

    fn ols(data: &Dataset) -> DVector<f64> {
        let x = data.features();
        let xtx = x.transpose() * x;
        let xty = x.transpose() * data.labels();
        xtx.lu().solve(&xty).unwrap()
    }

    #[test]
    fn zero_radius_fit_matches_ols() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let model = GlmModel::linear(0.2).unwrap();
        let rows: Vec<Vec<f64>> =
            (0..80).map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]).collect();
        let labels: Vec<f64> = rows
            .iter()
            .map(|r| 1.3 * r[0] - 0.7 * r[1] + 0.2 * rng.gen_range(-1.0..1.0f64))
            .collect();
        let data = Dataset::from_rows(&rows, &labels, LabelKind::Real).unwrap();
        let config = WdroConfig::new(0.0, data.n_samples()).unwrap();
        let fit = fit_dro(&model, &data, &config).unwrap();
        assert!(fit.converged);
        assert!(fit.lambda_star.is_none());
        let reference = ols(&data);
        assert!((&fit.beta_dro - &reference).norm() < 1e-6);
    }

    #[test]
    fn fit_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let model = GlmModel::logistic();
        let data = random_dataset(&model, 50, 2, &mut rng);
        let config = WdroConfig::new(1.0, data.n_samples()).unwrap();
        let a = fit_dro(&model, &data, &config).unwrap();
        let b = fit_dro(&model, &data, &config).unwrap();
        assert_eq!(a.beta_dro, b.beta_dro);
        assert_eq!(a.robust_loss.to_bits(), b.robust_loss.to_bits());
        assert_eq!(a.iterations, b.iterations);
    }

    /// A dataset made of one repeated sample: the minimizer lies along the
    /// sample direction, so the fit must match direct one-dimensional
    /// minimization of Ψ along it.
    #[test]
    fn single_repeated_sample_matches_1d_oracle() {
        let model = GlmModel::logistic();
        let x = vec![1.2, -0.5];
        let rows = vec![x.clone(); 6];
        let labels = vec![1.0; 6];
        let data = Dataset::from_rows(&rows, &labels, LabelKind::BinaryPm1).unwrap();
        let config = WdroConfig::new(1.0, data.n_samples()).unwrap();
        let fit = fit_dro(&model, &data, &config).unwrap();
        assert!(fit.converged);

        let u = DVector::from_column_slice(&x).normalize();
        let psi_1d = |alpha: f64| -> Result<f64> {
            if alpha.abs() < 1e-12 {
                return Ok(f64::INFINITY);
            }
            robust_loss(&model, &data, &(&u * alpha), &config).map(|(p, _)| p)
        };
        let (alpha_star, psi_star) = golden_section_min(psi_1d, 1e-6, 50.0, 1e-12).unwrap();
        let oracle_beta = &u * alpha_star;
        assert!(
            (&fit.beta_dro - &oracle_beta).norm() < 1e-4,
            "fit {} vs 1-d oracle {oracle_beta}",
            fit.beta_dro
        );
        assert!((fit.robust_loss - psi_star).abs() < 1e-8);
    }

    #[test]
    fn poisson_fit_is_rejected() {
        let model = GlmModel::poisson();
        let rows = vec![vec![0.5, 0.2], vec![-0.3, 0.1]];
        let data = Dataset::from_rows(&rows, &[1.0, 2.0], LabelKind::Count).unwrap();
        let config = WdroConfig::new(1.0, 2).unwrap();
        assert!(fit_dro(&model, &data, &config).is_err());
        let beta = DVector::from_column_slice(&[0.1, 0.1]);
        assert!(robust_loss(&model, &data, &beta, &config).is_err());
    }

    #[test]
    fn user_bracket_below_threshold_is_config_error() {
        let model = GlmModel::linear(1.0).unwrap();
        let rows = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let data = Dataset::from_rows(&rows, &[0.5, -0.5], LabelKind::Real).unwrap();
        let beta = DVector::from_column_slice(&[3.0, 0.0]); // threshold 4.5
        let mut config = WdroConfig::new(1.0, 2).unwrap();
        config.lambda_bracket = Some((0.1, 2.0));
        let err = robust_loss(&model, &data, &beta, &config).unwrap_err();
        assert!(matches!(err, AdroError::Config(_)));
    }
}
