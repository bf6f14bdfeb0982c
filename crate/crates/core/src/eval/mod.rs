//! Error metrics, analytic error oracles and trial aggregation.

pub mod synthetic;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::clock::Clock;
use crate::error::{Error, Result};
use crate::matrix::{Dense, LinOp};

/// `sqrt(||W x_hat - W x||^2 / m) / scale` with `m = rows(W)`.
pub fn per_query_error(w: &LinOp, x_hat: &[f64], x_true: &[f64], scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::invalid("error scale must be positive"));
    }
    if x_hat.len() != x_true.len() {
        return Err(Error::dim("estimate length", x_true.len(), x_hat.len()));
    }
    let diff: Vec<f64> = x_hat.iter().zip(x_true).map(|(a, b)| a - b).collect();
    let r = w.matvec(&diff)?;
    let m = w.rows().max(1) as f64;
    Ok(libm::sqrt(r.iter().map(|v| v * v).sum::<f64>() / m) / scale)
}

/// Default error scale: the true record count, or 1 for an empty vector.
pub fn default_scale(x_true: &[f64]) -> f64 {
    let s: f64 = x_true.iter().sum();
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

const SUPPORT_TOL: f64 = 1e-8;

/// `||q Q^+||_2^2`: the variance of the least-squares answer to `q` when
/// every row of `Q` is measured with unit-variance noise.
pub fn unit_noise_error(q: &[f64], big_q: &Dense) -> Result<f64> {
    let n = big_q.cols();
    if q.len() != n {
        return Err(Error::dim("query length", n, q.len()));
    }
    let gram = big_q.transpose().matmul(big_q)?;
    let (vals, vecs) = gram.symmetric_eigen()?;
    let top = vals.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let cutoff = top * 1e-12 * n as f64;
    let mut err = 0.0;
    let mut proj = alloc::vec![0.0; n];
    for (k, &lam) in vals.iter().enumerate() {
        if lam <= cutoff {
            continue;
        }
        let c: f64 = (0..n).map(|i| q[i] * vecs.get(i, k)).sum();
        err += c * c / lam;
        for (i, p) in proj.iter_mut().enumerate() {
            *p += c * vecs.get(i, k);
        }
    }
    let qn = libm::sqrt(q.iter().map(|v| v * v).sum::<f64>());
    let resid = libm::sqrt(q.iter().zip(&proj).map(|(a, b)| (a - b) * (a - b)).sum::<f64>());
    if resid > SUPPORT_TOL * qn.max(1.0) {
        return Err(Error::Support { residual: resid });
    }
    Ok(err)
}

/// `||Q||_1^2 ||q Q^+||_2^2`: expected squared error of `q` under the
/// Laplace mechanism on `Q` followed by least squares, up to a constant.
pub fn expected_error_oracle(q: &[f64], big_q: &Dense) -> Result<f64> {
    let sens = (0..big_q.cols())
        .map(|j| (0..big_q.rows()).map(|i| big_q.get(i, j).abs()).sum::<f64>())
        .fold(0.0, f64::max);
    Ok(sens * sens * unit_noise_error(q, big_q)?)
}

/// Sum of [`expected_error_oracle`] over the rows of a workload.
pub fn workload_error_oracle(w: &Dense, big_q: &Dense) -> Result<f64> {
    (0..w.rows()).map(|i| expected_error_oracle(w.row(i), big_q)).sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub seed: u64,
    pub error: f64,
    pub runtime_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub trials: Vec<TrialRow>,
    pub mean: f64,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean_runtime_ms: f64,
}

/// Linear-interpolated quantile of sorted values.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let pos = p * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let t = pos - lo as f64;
    sorted[lo] * (1.0 - t) + sorted[hi] * t
}

impl TrialSummary {
    pub fn from_rows(trials: Vec<TrialRow>) -> Result<Self> {
        if trials.is_empty() {
            return Err(Error::invalid("at least one trial is required"));
        }
        let k = trials.len() as f64;
        let mut errs: Vec<f64> = trials.iter().map(|t| t.error).collect();
        errs.sort_by(f64::total_cmp);
        Ok(TrialSummary {
            mean: trials.iter().map(|t| t.error).sum::<f64>() / k,
            min: errs[0],
            q25: quantile(&errs, 0.25),
            median: quantile(&errs, 0.5),
            q75: quantile(&errs, 0.75),
            max: errs[errs.len() - 1],
            mean_runtime_ms: trials.iter().map(|t| t.runtime_ms).sum::<f64>() / k,
            trials,
        })
    }
}

/// Runs `estimate(seed)` once per seed and scores each estimate with
/// [`per_query_error`].
pub fn run_trials(
    clock: &dyn Clock,
    w: &LinOp,
    x_true: &[f64],
    scale: f64,
    seeds: &[u64],
    mut estimate: impl FnMut(u64) -> Result<Vec<f64>>,
) -> Result<TrialSummary> {
    let mut rows = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let t0 = clock.now_ns();
        let x_hat = estimate(seed)?;
        let t1 = clock.now_ns();
        rows.push(TrialRow {
            seed,
            error: per_query_error(w, &x_hat, x_true, scale)?,
            runtime_ms: t1.saturating_sub(t0) as f64 / 1e6,
        });
    }
    TrialSummary::from_rows(rows)
}
