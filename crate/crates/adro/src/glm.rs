//! Generalized linear models: losses, link functions, and derivatives.
//!
//! Three models are supported, each with the maximum-likelihood loss written
//! in terms of the margin `t = ⟨x, β⟩`:
//!
//! * logistic: `L(t, y) = log(1 + exp(-y t))` with labels `y ∈ {-1, +1}`,
//! * Poisson: `L(t, y) = exp(t) - y t` with count labels,
//! * linear: `L(t, y) = ½ (t - y)²` with real labels.
//!
//! All derivatives are exposed with respect to the margin, to `β`, and to the
//! feature vector `x`, assuming the linear hypothesis `f(x, β) = ⟨x, β⟩`
//! throughout.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::dataset::LabelKind;
use crate::error::{AdroError, Result};

/// Margin cap for the Poisson loss; exp(t) overflows well before f64::MAX,
/// and legitimate inputs (bounded feature boxes) never get near this.
pub const POISSON_MARGIN_CAP: f64 = 500.0;

/// Which regression model a [`GlmModel`] represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GlmKind {
    Logistic,
    Poisson,
    Linear,
}

/// A margin value t = ⟨x, β⟩, the one-dimensional variable of the reduced
/// per-sample worst-case problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Margin(pub f64);

impl Margin {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// A generalized linear model: loss, link, and all derivatives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlmModel {
    kind: GlmKind,
    /// Conditional noise standard deviation, present only for the linear model.
    noise_sigma: Option<f64>,
}

/// Numerically stable 1 / (1 + exp(m)).
#[inline]
fn sigmoid_neg(m: f64) -> f64 {
    if m >= 0.0 {
        let z = (-m).exp();
        z / (1.0 + z)
    } else {
        1.0 / (1.0 + m.exp())
    }
}

impl GlmModel {
    pub fn logistic() -> Self {
        Self { kind: GlmKind::Logistic, noise_sigma: None }
    }

    pub fn poisson() -> Self {
        Self { kind: GlmKind::Poisson, noise_sigma: None }
    }

    /// Linear regression with conditional noise standard deviation `sigma > 0`.
    pub fn linear(noise_sigma: f64) -> Result<Self> {
        if !(noise_sigma > 0.0) || !noise_sigma.is_finite() {
            return Err(AdroError::InvalidInput(format!(
                "noise_sigma must be a positive finite real, got {noise_sigma}"
            )));
        }
        Ok(Self { kind: GlmKind::Linear, noise_sigma: Some(noise_sigma) })
    }

    pub fn kind(&self) -> GlmKind {
        self.kind
    }

    pub fn noise_sigma(&self) -> Option<f64> {
        self.noise_sigma
    }

    /// The label kind this model's loss is defined for.
    pub fn label_kind(&self) -> LabelKind {
        match self.kind {
            GlmKind::Logistic => LabelKind::BinaryPm1,
            GlmKind::Poisson => LabelKind::Count,
            GlmKind::Linear => LabelKind::Real,
        }
    }

    /// Supremum of the loss curvature in the margin: ¼ (logistic),
    /// 1 (linear), unbounded (Poisson).
    pub fn max_curvature(&self) -> f64 {
        match self.kind {
            GlmKind::Logistic => 0.25,
            GlmKind::Linear => 1.0,
            GlmKind::Poisson => f64::INFINITY,
        }
    }

    /// Link function G with G(E[Y|X=x]) = ⟨x, β⟩:
    /// logit, log, identity.
    pub fn link(&self, mean: f64) -> f64 {
        match self.kind {
            GlmKind::Logistic => (mean / (1.0 - mean)).ln(),
            GlmKind::Poisson => mean.ln(),
            GlmKind::Linear => mean,
        }
    }

    /// Inverse link: the conditional mean response at margin `t`. For the
    /// logistic model this is P(Y = 1 | margin t).
    pub fn mean_response(&self, t: f64) -> f64 {
        match self.kind {
            GlmKind::Logistic => sigmoid_neg(-t),
            GlmKind::Poisson => t.exp(),
            GlmKind::Linear => t,
        }
    }

    fn check_margin(&self, t: f64) -> Result<()> {
        if !t.is_finite() {
            return Err(AdroError::InvalidInput(format!("non-finite margin {t}")));
        }
        if self.kind == GlmKind::Poisson && t > POISSON_MARGIN_CAP {
            return Err(AdroError::MarginOverflow { margin: t, cap: POISSON_MARGIN_CAP });
        }
        Ok(())
    }

    fn check_label(&self, y: f64) -> Result<()> {
        self.label_kind().check(y)
    }

    /// Loss L(t, y) at margin `t`.
    pub fn loss(&self, t: f64, y: f64) -> Result<f64> {
        self.check_margin(t)?;
        self.check_label(y)?;
        Ok(self.loss_unchecked(t, y))
    }

    /// First derivative of the loss in the margin.
    pub fn dloss_dt(&self, t: f64, y: f64) -> Result<f64> {
        self.check_margin(t)?;
        self.check_label(y)?;
        Ok(self.dloss_unchecked(t, y))
    }

    /// Second derivative of the loss in the margin. For the logistic model
    /// this lies in (0, ¼]; for the linear model it is exactly 1.
    pub fn d2loss_dt2(&self, t: f64, y: f64) -> Result<f64> {
        self.check_margin(t)?;
        self.check_label(y)?;
        Ok(self.d2loss_unchecked(t, y))
    }

    #[inline]
    pub(crate) fn loss_unchecked(&self, t: f64, y: f64) -> f64 {
        match self.kind {
            // log(1 + exp(-yt)) = log1p(exp(-|yt|)) + max(0, -yt), stable for |t| > 700.
            GlmKind::Logistic => {
                let m = y * t;
                (-m.abs()).exp().ln_1p() + (-m).max(0.0)
            }
            GlmKind::Poisson => t.exp() - y * t,
            GlmKind::Linear => 0.5 * (t - y) * (t - y),
        }
    }

    #[inline]
    pub(crate) fn dloss_unchecked(&self, t: f64, y: f64) -> f64 {
        match self.kind {
            GlmKind::Logistic => -y * sigmoid_neg(y * t),
            GlmKind::Poisson => t.exp() - y,
            GlmKind::Linear => t - y,
        }
    }

    #[inline]
    pub(crate) fn d2loss_unchecked(&self, t: f64, y: f64) -> f64 {
        match self.kind {
            // z/(1+z)² with z = exp(-|yt|) stays positive up to |yt| ≈ 709,
            // where σ(yt)·σ(-yt) would already underflow near |yt| ≈ 37.
            GlmKind::Logistic => {
                let z = (-(y * t).abs()).exp();
                z / ((1.0 + z) * (1.0 + z))
            }
            GlmKind::Poisson => t.exp(),
            GlmKind::Linear => 1.0,
        }
    }

    fn check_dims(&self, x: &DVector<f64>, beta: &DVector<f64>) -> Result<()> {
        if x.len() != beta.len() {
            return Err(AdroError::DimensionMismatch(format!(
                "x has {} entries, beta has {}",
                x.len(),
                beta.len()
            )));
        }
        Ok(())
    }

    /// Gradient of the loss in `β`: `dloss_dt(⟨x,β⟩, y) · x`.
    pub fn grad_beta(&self, x: &DVector<f64>, beta: &DVector<f64>, y: f64) -> Result<DVector<f64>> {
        self.check_dims(x, beta)?;
        let g = self.dloss_dt(x.dot(beta), y)?;
        Ok(x * g)
    }

    /// Hessian of the loss in `β`: `d2loss_dt2(⟨x,β⟩, y) · x xᵀ`,
    /// a rank-one positive semidefinite matrix.
    pub fn hess_beta(&self, x: &DVector<f64>, beta: &DVector<f64>, y: f64) -> Result<DMatrix<f64>> {
        self.check_dims(x, beta)?;
        let h = self.d2loss_dt2(x.dot(beta), y)?;
        Ok(x * x.transpose() * h)
    }

    /// Gradient of the loss in the feature vector: `dloss_dt(⟨x,β⟩, y) · β`.
    pub fn grad_x(&self, x: &DVector<f64>, beta: &DVector<f64>, y: f64) -> Result<DVector<f64>> {
        self.check_dims(x, beta)?;
        let g = self.dloss_dt(x.dot(beta), y)?;
        Ok(beta * g)
    }
}
