//! Surrogate models of bubble-column gas holdup fields.
//!
//! A first-order Takagi-Sugeno fuzzy system is seeded by fuzzy c-means
//! clustering of the normalized inputs, and its Gaussian premises are tuned
//! by a continuous-domain ant colony optimizer while the linear consequents
//! are refit by damped least squares at every candidate evaluation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod aco;
pub mod cli;
pub mod dataset;
pub mod fcm;
pub mod fis;
pub mod modelfile;
pub mod rng;
pub mod synthfield;
pub mod trainer;
