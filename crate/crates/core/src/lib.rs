//! Decentralized nonconvex–strongly-concave minimax optimization.
//!
//! A network of clients jointly solves `min_x max_y (1/n) Σ_i f_i(x, y)`
//! with Dec-FedTrack: `K` local gradient descent–ascent steps per round,
//! corrected by gradient-tracking terms, followed by one gossip exchange
//! through a doubly-stochastic mixing matrix.
//!
//! Modules:
//! - [`topology`]: mixing matrices and their contraction factor.
//! - [`objectives`]: robust logistic regression, the saddle quadratic, projections.
//! - [`data`]: LIBSVM parsing, client partitions, deterministic mini-batches.
//! - [`algorithm`]: the Dec-FedTrack rounds and the no-tracking baseline.
//! - [`metrics`]: primal function, Danskin gradient, consensus and drift.
//! - [`attacks`]: FGSM, PGD and universal perturbations on the linear model.
//! - [`config`] / [`cli`]: the experiment harness.

// `!(v > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod algorithm;
pub mod attacks;
pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod objectives;
pub mod topology;

pub use error::{Error, Result};
