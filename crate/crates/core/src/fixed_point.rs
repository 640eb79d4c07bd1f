//! Solver for the scalar consistency equation
//! `1 = prod_i (1 - g_i + g_i * r_i / r0)`.
//!
//! Both the population positive rate (membership frequencies and group
//! positive rates) and the population retention rate (positive-conditional
//! membership frequencies and group retentions) are defined by it.

use crate::error::{Error, Result};

pub(crate) const RESIDUAL_TOL: f64 = 1e-12;
const BRACKET_CAP: f64 = (1u64 << 60) as f64;

/// `prod_i (1 - g_i + g_i * r_i * u) - 1`, increasing in `u`.
pub(crate) fn residual(weights: &[f64], rates: &[f64], u: f64) -> f64 {
    weights
        .iter()
        .zip(rates)
        .map(|(&g, &r)| 1.0 - g + g * r * u)
        .product::<f64>()
        - 1.0
}

/// Returns `r0`. Bisection runs on `u = 1 / r0` starting from `[1, 2 / min r]`,
/// doubling the right end until the sign changes.
pub(crate) fn solve(weights: &[f64], rates: &[f64]) -> Result<f64> {
    debug_assert_eq!(weights.len(), rates.len());
    let f = |u: f64| residual(weights, rates, u);
    let mut lo = 1.0;
    let flo = f(lo);
    if flo.abs() <= RESIDUAL_TOL {
        return Ok(1.0);
    }
    if flo > 0.0 {
        // Only possible when some rate exceeds 1.
        return Err(Error::NoRoot);
    }
    let min_rate = rates.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min_rate > 0.0) {
        return Err(Error::NoRoot);
    }
    let mut hi = (2.0 / min_rate).max(2.0);
    while f(hi) <= 0.0 {
        if hi >= BRACKET_CAP {
            return Err(Error::NoRoot);
        }
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= RESIDUAL_TOL || mid <= lo || mid >= hi {
            return Ok(1.0 / mid);
        }
        if fm < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(2.0 / (lo + hi))
}
