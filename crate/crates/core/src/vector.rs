use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cell counts over a discretized domain, stored row-major over
/// `domain_shape`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataVector {
    values: Vec<f64>,
    domain_shape: Vec<usize>,
}

impl DataVector {
    pub fn new(values: Vec<f64>, domain_shape: Vec<usize>) -> Result<Self> {
        let n: usize = domain_shape.iter().product();
        if domain_shape.is_empty() || n != values.len() {
            return Err(Error::dim("data vector shape", n, values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("data vector entries must be finite"));
        }
        Ok(DataVector { values, domain_shape })
    }

    /// One-dimensional vector.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        DataVector::new(values, vec![n])
    }

    pub fn zeros(domain_shape: Vec<usize>) -> Self {
        let n = domain_shape.iter().product();
        DataVector {
            values: vec![0.0; n],
            domain_shape,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn domain_shape(&self) -> &[usize] {
        &self.domain_shape
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }
}
