//! Post-processing of noisy measurements into an estimate of the data
//! vector. Only products with `Q` and `Q^T` are used, so every solver works
//! on implicit operators.

mod lsmr;
mod mw;
mod nnls;

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

pub use lsmr::lsmr;
pub use mw::mult_weights;
pub use nnls::{kkt_residual, nnls, nnls_from};

use crate::error::{Error, Result};
use crate::kernel::{Kernel, SourceRef};
use crate::matrix::LinOp;
use crate::measurement::Measurement;

/// Noisy answers `values ~ query x + Lap(noise_scale)` on a common domain.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasuredQuery {
    pub query: LinOp,
    pub values: Vec<f64>,
    pub noise_scale: f64,
}

/// Measurements that all address the same vector of `n` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementSet {
    n: usize,
    items: Vec<MeasuredQuery>,
}

impl MeasurementSet {
    pub fn new(n: usize) -> Self {
        MeasurementSet { n, items: Vec::new() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn items(&self) -> &[MeasuredQuery] {
        &self.items
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn push(&mut self, query: LinOp, values: Vec<f64>, noise_scale: f64) -> Result<()> {
        if query.cols() != self.n {
            return Err(Error::dim("measurement columns", self.n, query.cols()));
        }
        if query.rows() != values.len() {
            return Err(Error::dim("measurement values", query.rows(), values.len()));
        }
        if !(noise_scale >= 0.0 && noise_scale.is_finite()) {
            return Err(Error::invalid("noise scale must be finite and nonnegative"));
        }
        self.items.push(MeasuredQuery {
            query,
            values,
            noise_scale,
        });
        Ok(())
    }

    /// Adds a kernel measurement, composing its query with the linear map
    /// from `target` to the measured source.
    pub fn push_measurement(&mut self, kernel: &Kernel, target: SourceRef, m: &Measurement) -> Result<()> {
        let q = if m.source == target {
            m.query.clone()
        } else {
            LinOp::product(m.query.clone(), kernel.lineage_from(target, m.source)?)?
        };
        self.push(q, m.values.clone(), m.noise_scale)
    }

    pub fn from_measurements(kernel: &Kernel, target: SourceRef, ms: &[Measurement]) -> Result<Self> {
        let mut set = MeasurementSet::new(kernel.len(target)?);
        for m in ms {
            set.push_measurement(kernel, target, m)?;
        }
        Ok(set)
    }

    fn weight(scale: f64) -> f64 {
        if scale > 0.0 {
            1.0 / scale
        } else {
            1.0
        }
    }

    /// Rows scaled by `1 / noise_scale`, stacked into one operator, with the
    /// matching right-hand side.
    pub fn weighted_system(&self) -> Result<(LinOp, Vec<f64>)> {
        if self.items.is_empty() {
            return Err(Error::invalid("no measurements"));
        }
        let mut ops = Vec::with_capacity(self.items.len());
        let mut rhs = Vec::new();
        for it in &self.items {
            let w = Self::weight(it.noise_scale);
            ops.push(if w == 1.0 { it.query.clone() } else { LinOp::weighted(w, it.query.clone()) });
            rhs.extend(it.values.iter().map(|v| v * w));
        }
        let a = if ops.len() == 1 { ops.pop().unwrap() } else { LinOp::union(ops)? };
        Ok((a, rhs))
    }

    /// Unweighted stacked system.
    pub fn plain_system(&self) -> Result<(LinOp, Vec<f64>)> {
        if self.items.is_empty() {
            return Err(Error::invalid("no measurements"));
        }
        let mut ops: Vec<LinOp> = self.items.iter().map(|it| it.query.clone()).collect();
        let rhs = self.items.iter().flat_map(|it| it.values.iter().copied()).collect();
        let a = if ops.len() == 1 { ops.pop().unwrap() } else { LinOp::union(ops)? };
        Ok((a, rhs))
    }
}

/// Result of an inference operator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub x_hat: Vec<f64>,
    pub iterations: usize,
    pub residual_norm: f64,
    pub converged: bool,
}

/// Default iteration cap for least squares on `n` unknowns.
pub fn default_max_iter(n: usize) -> usize {
    (2 * n).max(20)
}

/// Weighted least squares by LSMR; the minimum-norm minimizer.
pub fn least_squares(ms: &MeasurementSet, tol: f64, max_iter: usize) -> Result<Estimate> {
    let (a, b) = ms.weighted_system()?;
    Ok(lsmr(&a, &b, tol, max_iter))
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(v.iter().map(|x| x * x).sum())
}

pub(crate) fn residual(a: &LinOp, x: &[f64], b: &[f64]) -> Vec<f64> {
    let mut r = a.apply(x);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    r
}
