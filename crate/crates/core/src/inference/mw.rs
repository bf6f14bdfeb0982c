//! Multiplicative-weights inference.

use alloc::vec::Vec;

use super::{norm2, residual, Estimate, MeasurementSet};
use crate::error::{Error, Result};

/// Repeats `x <- x * exp(g / N)` with `g = 0.5 Q^T (y - Q x)`, rescaling to
/// total `n_total` after every step.
pub fn mult_weights(ms: &MeasurementSet, x_init: &[f64], n_total: f64, iters: usize) -> Result<Estimate> {
    if x_init.len() != ms.n() {
        return Err(Error::dim("initial estimate", ms.n(), x_init.len()));
    }
    if !(n_total > 0.0) || x_init.iter().any(|&v| !(v > 0.0)) {
        return Err(Error::invalid("multiplicative weights needs a positive start and total"));
    }
    let (q, y) = ms.plain_system()?;
    let mut x: Vec<f64> = x_init.to_vec();
    for _ in 0..iters {
        let r = residual(&q, &x, &y);
        let g = q.apply_t(&r);
        let top = g.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        for (xi, gi) in x.iter_mut().zip(g) {
            *xi *= libm::exp(0.5 * (gi - top) / n_total);
        }
        let s: f64 = x.iter().sum();
        x.iter_mut().for_each(|v| *v *= n_total / s);
    }
    let r = residual(&q, &x, &y);
    Ok(Estimate {
        x_hat: x,
        iterations: iters,
        residual_norm: norm2(&r),
        converged: true,
    })
}
