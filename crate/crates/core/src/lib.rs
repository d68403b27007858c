//! Sparse sign random projection into a higher dimension followed by a top-k
//! magnitude cap, `A(s) = c_k(M s)`.
//!
//! Besides the transform itself the crate ships Monte Carlo suites that check
//! the projection's distance preservation, invertibility and norm behaviour,
//! and a small benchmark harness (feature datasets, a linear SVM and
//! parameter sweeps) for measuring classification accuracy before and after
//! the transform.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod cap;
pub mod classifier;
pub mod cli;
pub mod dataset;
pub mod error;
pub mod experiments;
pub mod matrix;
pub mod output;
pub mod rng;
pub mod transform;
pub mod verify;

pub use cap::{cap, cap_error_bound, CapResult};
pub use error::{Error, Result};
pub use matrix::{EntryStats, SparseSignMatrix};
pub use transform::{Transform, TransformConfig};
