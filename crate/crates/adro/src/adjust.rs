//! Bias adjustment of the robust estimator.
//!
//! The robust estimator is asymptotically normal around a shifted target
//! `K_n(β*) = β* − C(β*)⁻¹H(β*)/√n`, where `C` is the expected loss Hessian
//! in β and `H` is τ times the gradient of the root-mean-square feature
//! gradient of the loss. Inverting the map `K_n` at the fitted parameter
//! removes the first-order bias. This module provides the empirical plug-ins
//! for `C` and `H`, the map `K_n` itself, its inversion by a damped Newton
//! iteration on the equivalent root system
//!
//! ```text
//! G(β) = C(β) β − H(β)/√n − C(β) β_fit = 0,
//! ```
//!
//! a closed form for the isotropic linear special case, a bisection inverse
//! for norm-only maps, and an existence diagnostic based on the Jacobian of
//! `C⁻¹H`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{AdroError, Result};
use crate::glm::GlmModel;
use crate::numdiff::central_jacobian;
use crate::scalar::bisect_root;
use crate::sim::DistributionSpec;

/// Condition-number cutoff above which the curvature matrix is treated as
/// singular (the population curvature is assumed positive definite, so
/// near-singularity signals an assumption failure and is reported).
pub const CONDITION_LIMIT: f64 = 1e12;

/// A curvature matrix together with the robustness-gradient vector, both
/// evaluated at the same parameter.
pub type CurvaturePair = (DMatrix<f64>, DVector<f64>);

/// Empirical curvature at a parameter: the plug-in Hessian `Ĉ(β)`, the
/// plug-in robustness gradient `Ĥ(β)`, and the evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Curvature {
    pub hessian: DMatrix<f64>,
    pub robustness_gradient: DVector<f64>,
    pub at_beta: DVector<f64>,
}

impl Curvature {
    /// Checks the structural invariants: `hessian` symmetric with eigenvalues
    /// ≥ −1e−10, and the robustness gradient collinear with `at_beta`.
    pub fn validate(&self) -> Result<()> {
        let h = &self.hessian;
        if (h - h.transpose()).abs().max() > 1e-10 * (1.0 + h.abs().max()) {
            return Err(AdroError::Evaluation("curvature matrix is not symmetric".into()));
        }
        let eigs = h.clone().symmetric_eigenvalues();
        if eigs.iter().any(|&e| e < -1e-10) {
            return Err(AdroError::Evaluation(format!(
                "curvature matrix has eigenvalue {} below -1e-10",
                eigs.min()
            )));
        }
        let norm = self.at_beta.norm();
        if norm == 0.0 {
            return Err(AdroError::DegenerateParameter);
        }
        let u = &self.at_beta / norm;
        let g = &self.robustness_gradient;
        let residual = g - &u * g.dot(&u);
        if residual.norm() > 1e-10 * g.norm().max(f64::MIN_POSITIVE) {
            return Err(AdroError::Evaluation(
                "robustness gradient is not collinear with the parameter".into(),
            ));
        }
        Ok(())
    }
}

/// Plug-in Hessian `Ĉ(β) = (1/N) Σ_j d²L/dt² (⟨X_j,β⟩, Y_j) · X_j X_jᵀ`.
pub fn empirical_hessian(
    model: &GlmModel,
    data: &Dataset,
    beta: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let margins = data.margins(beta)?;
    let labels = data.labels();
    let x = data.features();
    let (n, d) = (data.n_samples(), data.dim());
    let mut acc = DMatrix::zeros(d, d);
    for i in 0..n {
        let w = model.d2loss_dt2(margins[i], labels[i])?;
        for j in 0..d {
            let xj = x[(i, j)];
            for k in 0..=j {
                acc[(j, k)] += w * xj * x[(i, k)];
            }
        }
    }
    acc /= n as f64;
    for j in 0..d {
        for k in (j + 1)..d {
            acc[(j, k)] = acc[(k, j)];
        }
    }
    Ok(acc)
}

/// Plug-in robustness gradient
/// `Ĥ(β) = τ (β/‖β‖) √( (1/N) Σ_j (dL/dt(⟨X_j,β⟩, Y_j))² )`.
///
/// Collinear with β by construction. When the mean squared margin gradient is
/// exactly zero the result is the zero vector (continuity).
pub fn empirical_robustness_gradient(
    model: &GlmModel,
    data: &Dataset,
    beta: &DVector<f64>,
    tau: f64,
) -> Result<DVector<f64>> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(AdroError::InvalidInput(format!("tau must be finite and >= 0, got {tau}")));
    }
    let norm = beta.norm();
    if norm == 0.0 {
        return Err(AdroError::DegenerateParameter);
    }
    let margins = data.margins(beta)?;
    let labels = data.labels();
    let mut msq = 0.0;
    for i in 0..data.n_samples() {
        let g = model.dloss_dt(margins[i], labels[i])?;
        msq += g * g;
    }
    msq /= data.n_samples() as f64;
    Ok(beta * (tau * msq.sqrt() / norm))
}

/// Both plug-ins at once.
pub fn empirical_curvature(
    model: &GlmModel,
    data: &Dataset,
    beta: &DVector<f64>,
    tau: f64,
) -> Result<Curvature> {
    Ok(Curvature {
        hessian: empirical_hessian(model, data, beta)?,
        robustness_gradient: empirical_robustness_gradient(model, data, beta, tau)?,
        at_beta: beta.clone(),
    })
}

/// Curvature handle backed by a dataset, for use with the Newton inversion.
pub fn empirical_curvature_fn<'a>(
    model: &'a GlmModel,
    data: &'a Dataset,
    tau: f64,
) -> impl Fn(&DVector<f64>) -> Result<CurvaturePair> + 'a {
    move |beta| {
        Ok((
            empirical_hessian(model, data, beta)?,
            empirical_robustness_gradient(model, data, beta, tau)?,
        ))
    }
}

/// Analytic curvature of the isotropic linear case: `C = c·I`,
/// `H(z) = τσ z/‖z‖`.
pub fn isotropic_linear_curvature(
    c: f64,
    tau: f64,
    sigma: f64,
) -> impl Fn(&DVector<f64>) -> Result<CurvaturePair> {
    move |z| {
        let norm = z.norm();
        if norm == 0.0 {
            return Err(AdroError::DegenerateParameter);
        }
        let d = z.len();
        Ok((DMatrix::identity(d, d) * c, z * (tau * sigma / norm)))
    }
}

/// Solves `C x = rhs`, failing when the condition number exceeds
/// [`CONDITION_LIMIT`].
fn solve_checked(c: &DMatrix<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
    let svd = c.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let cond = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if !cond.is_finite() || cond > CONDITION_LIMIT {
        return Err(AdroError::IllConditionedCurvature { cond });
    }
    svd.solve(rhs, 0.0).map_err(|e| AdroError::Evaluation(e.to_string()))
}

/// The adjustment map `K_n(β) = β − C(β)⁻¹H(β)/√n`.
pub fn adjustment_map<F>(beta: &DVector<f64>, curvature: &F, n: usize) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<CurvaturePair>,
{
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    let (c, h) = curvature(beta)?;
    let shift = solve_checked(&c, &h)?;
    Ok(beta - shift / (n as f64).sqrt())
}

/// Options for the damped Newton inversion of the adjustment map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    /// Termination threshold on ‖G‖∞.
    pub tol: f64,
    pub max_iters: usize,
    /// Maximum number of step halvings per iteration.
    pub max_damping: usize,
    /// Finite-difference step scale for the Jacobian of G.
    pub fd_step: f64,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self { tol: 1e-10, max_iters: 50, max_damping: 30, fd_step: 1e-5 }
    }
}

/// Result of the Newton inversion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdjustResult {
    pub beta_adro: DVector<f64>,
    pub newton_iterations: usize,
    /// ‖G(β_adjusted)‖∞ at the returned iterate.
    pub residual_norm: f64,
    /// `√n − |λ_max(∇(C⁻¹H))|` at the adjusted parameter; positive means the
    /// local-invertibility condition is verified, nonpositive leaves it open.
    pub existence_margin: f64,
    /// ‖β_fit − β_adjusted‖₂.
    pub adjustment_distance: f64,
}

/// Inverts the adjustment map at `beta_dro`: finds β with
/// `K_n(β) = beta_dro` by damped Newton on `G(β) = C(β)(β − β_dro) − H(β)/√n`
/// with a central finite-difference Jacobian, initialized at `beta_dro`.
pub fn adjust_newton<F>(
    beta_dro: &DVector<f64>,
    curvature: &F,
    n: usize,
    opts: &NewtonOptions,
) -> Result<AdjustResult>
where
    F: Fn(&DVector<f64>) -> Result<CurvaturePair>,
{
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    let sqrt_n = (n as f64).sqrt();
    let residual = |beta: &DVector<f64>| -> Result<DVector<f64>> {
        let (c, h) = curvature(beta)?;
        Ok(&c * beta - h / sqrt_n - c * beta_dro)
    };

    let mut beta = beta_dro.clone();
    let mut g = residual(&beta)?;
    let mut g_norm = g.amax();
    let mut iterations = 0;
    while g_norm > opts.tol {
        if iterations >= opts.max_iters {
            return Err(AdroError::NewtonFailed {
                iterations,
                residual: g_norm,
                last_iterate: beta.iter().copied().collect(),
            });
        }
        iterations += 1;
        let step_scale = opts.fd_step * (1.0 + beta.norm());
        let jac = central_jacobian(&residual, &beta, step_scale)?;
        let step = match solve_checked(&jac, &(-&g)) {
            Ok(p) => p,
            Err(_) => {
                return Err(AdroError::NewtonFailed {
                    iterations,
                    residual: g_norm,
                    last_iterate: beta.iter().copied().collect(),
                })
            }
        };
        // Halve until the residual decreases.
        let mut accepted = false;
        let mut scale = 1.0;
        for _ in 0..=opts.max_damping {
            let candidate = &beta + &step * scale;
            if let Ok(g_new) = residual(&candidate) {
                let norm_new = g_new.amax();
                if norm_new < g_norm {
                    beta = candidate;
                    g = g_new;
                    g_norm = norm_new;
                    accepted = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !accepted {
            return Err(AdroError::NewtonFailed {
                iterations,
                residual: g_norm,
                last_iterate: beta.iter().copied().collect(),
            });
        }
    }

    let margin = existence_margin(curvature, &beta, n)?;
    Ok(AdjustResult {
        adjustment_distance: (beta_dro - &beta).norm(),
        newton_iterations: iterations,
        residual_norm: g_norm,
        existence_margin: margin,
        beta_adro: beta,
    })
}

/// Closed-form adjustment for the isotropic linear case: same direction,
/// norm increased by `τσ/(c√n)`.
pub fn adjust_closed_form_linear(
    beta_dro: &DVector<f64>,
    tau: f64,
    sigma: f64,
    c: f64,
    n: usize,
) -> Result<DVector<f64>> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return Err(AdroError::InvalidInput(format!("tau must be finite and >= 0, got {tau}")));
    }
    if !(sigma > 0.0) || !(c > 0.0) {
        return Err(AdroError::InvalidInput("sigma and c must be positive".into()));
    }
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    let norm = beta_dro.norm();
    if norm == 0.0 {
        return Err(AdroError::DegenerateParameter);
    }
    let grown = norm + tau * sigma / (c * (n as f64).sqrt());
    Ok(beta_dro * (grown / norm))
}

/// Inverts the scalar norm map `F(x) = x − x·c(x u)·h(x u)/√n` (u the unit
/// direction of `theta`) at `target_norm` by bisection, searching above the
/// target where the pre-image lies. Returns x with |F(x) − target_norm| <
/// 1e−10.
pub fn invert_norm_map<Hf, Cf>(
    theta: &DVector<f64>,
    n: usize,
    h_fn: &Hf,
    c_fn: &Cf,
    target_norm: f64,
) -> Result<f64>
where
    Hf: Fn(&DVector<f64>) -> Result<f64>,
    Cf: Fn(&DVector<f64>) -> Result<f64>,
{
    const VALUE_TOL: f64 = 1e-10;
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    if !(target_norm > 0.0) {
        return Err(AdroError::InvalidInput(format!(
            "target norm must be positive, got {target_norm}"
        )));
    }
    let norm = theta.norm();
    if norm == 0.0 {
        return Err(AdroError::DegenerateParameter);
    }
    let u = theta / norm;
    let sqrt_n = (n as f64).sqrt();
    let f_map = |x: f64| -> Result<f64> {
        let z = &u * x;
        Ok(x - x * c_fn(&z)? * h_fn(&z)? / sqrt_n)
    };
    let adjustment_at_target = (target_norm - f_map(target_norm)?).abs();
    if adjustment_at_target < VALUE_TOL {
        return Ok(target_norm);
    }
    let hi = target_norm + 10.0 * adjustment_at_target;
    bisect_root(|x| Ok(f_map(x)? - target_norm), target_norm, hi, VALUE_TOL)
}

/// Existence diagnostic: `√n − |λ_max(∇_z(C(z)⁻¹H(z)))|` at `beta`, with the
/// Jacobian taken by central finite differences (step `1e−5·(1+‖β‖)`).
/// Positive means the local-invertibility condition holds at `beta`.
pub fn existence_margin<F>(curvature: &F, beta: &DVector<f64>, n: usize) -> Result<f64>
where
    F: Fn(&DVector<f64>) -> Result<CurvaturePair>,
{
    if n == 0 {
        return Err(AdroError::InvalidInput("n must be positive".into()));
    }
    let map = |z: &DVector<f64>| -> Result<DVector<f64>> {
        let (c, h) = curvature(z)?;
        solve_checked(&c, &h)
    };
    let step = 1e-5 * (1.0 + beta.norm());
    let jac = central_jacobian(map, beta, step)?;
    let spectral = jac
        .complex_eigenvalues()
        .iter()
        .map(|e| e.norm())
        .fold(0.0f64, f64::max);
    Ok((n as f64).sqrt() - spectral)
}

/// Monte Carlo estimate of the population curvature pair at `beta`: draws
/// `mc_samples` observations from `spec` and evaluates the empirical
/// plug-ins on them. Serves as the large-sample oracle for the plug-ins.
pub fn population_curvature_mc(
    model: &GlmModel,
    spec: &DistributionSpec,
    beta: &DVector<f64>,
    tau: f64,
    mc_samples: usize,
    seed: u64,
) -> Result<CurvaturePair> {
    let data = spec.sample(mc_samples, seed)?;
    Ok((
        empirical_hessian(model, &data, beta)?,
        empirical_robustness_gradient(model, &data, beta, tau)?,
    ))
}
