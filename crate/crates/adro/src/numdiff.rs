//! Central finite differences for gradients and Jacobians.
//!
//! Used by the adjustment solver (Jacobian of the root system, existence
//! margin) and as the independent oracle in derivative tests.

use nalgebra::{DMatrix, DVector};

use crate::error::{AdroError, Result};

/// Central-difference gradient of a scalar function at `x` with step `h`.
pub fn central_gradient<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> Result<f64>,
{
    let mut grad = DVector::zeros(x.len());
    let mut probe = x.clone();
    for i in 0..x.len() {
        probe[i] = x[i] + h;
        let fp = f(&probe)?;
        probe[i] = x[i] - h;
        let fm = f(&probe)?;
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    if grad.iter().any(|v| !v.is_finite()) {
        return Err(AdroError::Evaluation("non-finite finite-difference gradient".into()));
    }
    Ok(grad)
}

/// Central-difference Jacobian of a vector function at `x` with step `h`.
/// Column j holds ∂f/∂x_j.
pub fn central_jacobian<F>(f: F, x: &DVector<f64>, h: f64) -> Result<DMatrix<f64>>
where
    F: Fn(&DVector<f64>) -> Result<DVector<f64>>,
{
    let m = f(x)?.len();
    let mut jac = DMatrix::zeros(m, x.len());
    let mut probe = x.clone();
    for j in 0..x.len() {
        probe[j] = x[j] + h;
        let fp = f(&probe)?;
        probe[j] = x[j] - h;
        let fm = f(&probe)?;
        probe[j] = x[j];
        if fp.len() != m || fm.len() != m {
            return Err(AdroError::DimensionMismatch(
                "function output length changed between evaluations".into(),
            ));
        }
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    if jac.iter().any(|v| !v.is_finite()) {
        return Err(AdroError::Evaluation("non-finite finite-difference Jacobian".into()));
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn gradient_of_quadratic() {
        let f = |v: &DVector<f64>| Ok(v[0] * v[0] + 2.0 * v[0] * v[1]);
        let x = DVector::from_column_slice(&[1.0, 2.0]);
        let g = central_gradient(f, &x, 1e-6).unwrap();
        assert_relative_eq!(g[0], 6.0, epsilon = 1e-8);
        assert_relative_eq!(g[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn jacobian_of_affine_map() {
        let f = |v: &DVector<f64>| {
            Ok(DVector::from_column_slice(&[3.0 * v[0] - v[1], v[0] + 4.0 * v[1]]))
        };
        let x = DVector::from_column_slice(&[0.3, -0.7]);
        let j = central_jacobian(f, &x, 1e-6).unwrap();
        assert_relative_eq!(j[(0, 0)], 3.0, epsilon = 1e-8);
        assert_relative_eq!(j[(0, 1)], -1.0, epsilon = 1e-8);
        assert_relative_eq!(j[(1, 0)], 1.0, epsilon = 1e-8);
        assert_relative_eq!(j[(1, 1)], 4.0, epsilon = 1e-8);
    }
}
