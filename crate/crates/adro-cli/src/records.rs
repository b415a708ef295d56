//! Versioned JSON records written and read by the CLI.

use adro::glm::GlmKind;
use serde::{Deserialize, Serialize};

pub const RECORD_SCHEMA_VERSION: u32 = 1;

/// Output of `adro fit`, and input to `adro adjust`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FitRecord {
    pub schema: u32,
    pub model: GlmKind,
    pub tau: f64,
    /// Sample size defining the radius ρ = τ/√n.
    pub n_radius: usize,
    /// Noise std recorded for the linear model (used by adjustment defaults).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    pub beta_dro: Vec<f64>,
    pub robust_loss: f64,
    pub lambda_star: Option<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub grad_norm: f64,
}

/// Output of `adro adjust`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjustRecord {
    pub schema: u32,
    /// "newton" or "closed_form".
    pub method: String,
    pub beta_adro: Vec<f64>,
    pub newton_iterations: usize,
    pub residual_norm: f64,
    pub existence_margin: f64,
    pub adjustment_distance: f64,
    /// sigma and c actually used (supplied or estimated).
    pub sigma_used: Option<f64>,
    pub c_used: Option<f64>,
}

/// Written on a Newton failure before exiting with code 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdjustFailureRecord {
    pub schema: u32,
    pub error: String,
    pub last_iterate: Vec<f64>,
    pub residual_norm: f64,
}
