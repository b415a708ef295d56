//! Feature/label container with per-model label validation.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{AdroError, Result};

/// What the label column is allowed to contain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    /// Binary labels, strictly -1 or +1.
    BinaryPm1,
    /// Nonnegative integer counts.
    Count,
    /// Any finite real.
    Real,
}

impl LabelKind {
    /// Validates a single label against this kind.
    pub fn check(self, y: f64) -> Result<()> {
        let ok = match self {
            LabelKind::BinaryPm1 => y == 1.0 || y == -1.0,
            LabelKind::Count => y.is_finite() && y >= 0.0 && y.fract() == 0.0,
            LabelKind::Real => y.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(AdroError::LabelMismatch { label: y, kind: self })
        }
    }
}

/// An n-by-d feature matrix with a label vector of length n.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    labels: DVector<f64>,
    label_kind: LabelKind,
}

impl Dataset {
    /// Builds a dataset, validating shapes, finiteness, and label kind.
    pub fn new(features: DMatrix<f64>, labels: DVector<f64>, label_kind: LabelKind) -> Result<Self> {
        if features.nrows() == 0 || features.ncols() == 0 {
            return Err(AdroError::InvalidInput(
                "dataset needs at least one sample and one feature".into(),
            ));
        }
        if features.nrows() != labels.len() {
            return Err(AdroError::DimensionMismatch(format!(
                "{} feature rows vs {} labels",
                features.nrows(),
                labels.len()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(AdroError::InvalidInput("non-finite feature entry".into()));
        }
        for &y in labels.iter() {
            label_kind.check(y)?;
        }
        Ok(Self { features, labels, label_kind })
    }

    /// Builds a dataset from row slices.
    pub fn from_rows(rows: &[Vec<f64>], labels: &[f64], label_kind: LabelKind) -> Result<Self> {
        if rows.is_empty() {
            return Err(AdroError::InvalidInput("no samples".into()));
        }
        let d = rows[0].len();
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != d) {
            return Err(AdroError::DimensionMismatch(format!(
                "row {} has {} features, expected {}",
                i,
                r.len(),
                d
            )));
        }
        let features = DMatrix::from_row_iterator(rows.len(), d, rows.iter().flatten().copied());
        let labels = DVector::from_column_slice(labels);
        Self::new(features, labels, label_kind)
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn label_kind(&self) -> LabelKind {
        self.label_kind
    }

    /// The i-th feature row as a column vector.
    pub fn sample(&self, i: usize) -> DVector<f64> {
        self.features.row(i).transpose()
    }

    /// Margins ⟨x_i, beta⟩ for every sample.
    pub fn margins(&self, beta: &DVector<f64>) -> Result<DVector<f64>> {
        if beta.len() != self.dim() {
            return Err(AdroError::DimensionMismatch(format!(
                "beta has {} entries, features have {} columns",
                beta.len(),
                self.dim()
            )));
        }
        Ok(&self.features * beta)
    }
}
