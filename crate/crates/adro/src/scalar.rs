//! One-dimensional search primitives: golden-section minimization and
//! bisection root finding.

use crate::error::{AdroError, Result};

const INV_GOLDEN: f64 = 0.618_033_988_749_894_9; // (√5 − 1) / 2

/// Minimizes a unimodal function on `[lo, hi]` by golden-section search.
///
/// Shrinks the interval until `hi − lo ≤ tol · (1 + |hi|)` and returns the
/// midpoint with its function value.
pub fn golden_section_min<F>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<(f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    if !(lo < hi) {
        return Err(AdroError::Config(format!("empty search interval [{lo}, {hi}]")));
    }
    let mut a = hi - INV_GOLDEN * (hi - lo);
    let mut b = lo + INV_GOLDEN * (hi - lo);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    while hi - lo > tol * (1.0 + hi.abs()) {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - INV_GOLDEN * (hi - lo);
            fa = f(a)?;
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + INV_GOLDEN * (hi - lo);
            fb = f(b)?;
        }
    }
    let x = 0.5 * (lo + hi);
    let fx = f(x)?;
    Ok((x, fx))
}

/// Finds a root of `f` on `[lo, hi]` by bisection, assuming `f(lo) ≤ 0 ≤ f(hi)`.
///
/// Stops when `|f(mid)| < value_tol` and returns the midpoint. Fails with a
/// bracket error if the endpoint signs do not straddle zero.
pub fn bisect_root<F>(mut f: F, mut lo: f64, mut hi: f64, value_tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let flo = f(lo)?;
    let fhi = f(hi)?;
    if flo.abs() < value_tol {
        return Ok(lo);
    }
    if fhi.abs() < value_tol {
        return Ok(hi);
    }
    if flo > 0.0 || fhi < 0.0 {
        return Err(AdroError::BracketFailure(format!(
            "no sign change on [{lo}, {hi}]: f(lo) = {flo:.6e}, f(hi) = {fhi:.6e}"
        )));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid)?;
        if fm.abs() < value_tol {
            return Ok(mid);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < f64::EPSILON * (1.0 + hi.abs()) {
            break;
        }
    }
    let mid = 0.5 * (lo + hi);
    let fm = f(mid)?;
    if fm.abs() < value_tol {
        Ok(mid)
    } else {
        Err(AdroError::BracketFailure(format!(
            "bisection stalled at {mid} with residual {fm:.3e}"
        )))
    }
}
