//! Multiscale stick-breaking mixtures of Gaussian kernels: prior, Gibbs
//! sampler, density summaries and synthetic data.

// `!(a < b)` comparisons are deliberate: they reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basemeasures;
pub mod density;
pub mod error;
pub mod experiment;
pub mod gauss;
pub mod random;
pub mod sampler;
pub mod simdata;
pub mod tree;
pub mod weights;

pub use error::{Error, Result};
