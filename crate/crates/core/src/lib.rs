//! Differentially private answering of linear counting queries.
//!
//! The crate is `no_std` (with `alloc`). It provides a protected kernel that
//! owns private data and enforces a privacy budget, a matrix-free linear
//! operator engine, selection/partition/measurement/inference operators and
//! a catalog of plans composed from them.

#![no_std]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod clock;
pub mod error;
pub mod eval;
pub mod inference;
pub mod kernel;
pub mod matrix;
pub mod measurement;
pub mod partition;
pub mod plans;
pub mod selection;
pub mod table;
pub mod transform;
pub mod vector;
pub mod workload;

pub use error::{Error, Result};
pub use kernel::{Epsilon, Kernel, SourceRef};
pub use matrix::{Csr, Dense, LinOp};
pub use transform::PartitionMap;
pub use vector::DataVector;
