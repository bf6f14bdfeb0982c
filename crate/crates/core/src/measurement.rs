//! Laplace-noise query operators.

use alloc::vec::Vec;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{Answer, Epsilon, Kernel, QueryOp, SourceRef};
use crate::matrix::{LinOp, OpDesc};

/// One Laplace(scale) draw by inverting the CDF.
pub fn laplace<R: RngCore + ?Sized>(scale: f64, rng: &mut R) -> f64 {
    loop {
        let u = rng.gen::<f64>() - 0.5;
        let t = 1.0 - 2.0 * u.abs();
        if t > 0.0 {
            return -scale * u.signum() * libm::log(t);
        }
    }
}

/// `count` i.i.d. Laplace(scale) draws.
pub fn sample_laplace<R: RngCore + ?Sized>(scale: f64, count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| laplace(scale, rng)).collect()
}

/// `Q x + Lap(||Q||_1 / eps)`; returns the noisy answers and the noise scale.
pub(crate) fn laplace_answer<R: RngCore + ?Sized>(
    q: &LinOp,
    x: &[f64],
    eps: f64,
    rng: &mut R,
) -> Result<(Vec<f64>, f64)> {
    let scale = q.sensitivity_l1()? / eps;
    let mut y = q.matvec(x)?;
    if scale > 0.0 {
        for v in &mut y {
            *v += laplace(scale, rng);
        }
    }
    Ok((y, scale))
}

/// Noisy answers to `query` on the vector held by `source`.
#[derive(Clone, Debug, PartialEq)]
pub struct Measurement {
    pub query: LinOp,
    pub values: Vec<f64>,
    pub noise_scale: f64,
    pub source: SourceRef,
}

/// Serializable form of a [`Measurement`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementBundle {
    pub query: OpDesc,
    pub values: Vec<f64>,
    pub noise_scale: f64,
    pub source_id: u32,
}

impl Measurement {
    pub fn bundle(&self) -> MeasurementBundle {
        MeasurementBundle {
            query: self.query.describe(),
            values: self.values.clone(),
            noise_scale: self.noise_scale,
            source_id: self.source.id(),
        }
    }
}

/// Vector Laplace mechanism, charged through the kernel.
pub fn vector_laplace(kernel: &mut Kernel, sv: SourceRef, q: LinOp, eps: &Epsilon) -> Result<Measurement> {
    match kernel.measure(sv, &QueryOp::VectorLaplace(q.clone()), eps)? {
        Answer::Noisy { values, noise_scale } => Ok(Measurement {
            query: q,
            values,
            noise_scale,
            source: sv,
        }),
        _ => Err(Error::Type("unexpected answer kind".into())),
    }
}

/// Noisy row count of a table source.
pub fn noisy_count(kernel: &mut Kernel, sv: SourceRef, eps: &Epsilon) -> Result<f64> {
    match kernel.measure(sv, &QueryOp::NoisyCount, eps)? {
        Answer::Count(c) => Ok(c),
        _ => Err(Error::Type("unexpected answer kind".into())),
    }
}
