//! Power control for K-link Gaussian interference networks.
//!
//! The crate is organised bottom-up:
//!
//! * [`channel_model`] generates short-range outdoor D2D scenarios and
//!   persists them as JSON-lines datasets.
//! * [`interference`] holds the interference-function abstraction, the
//!   affine and Rayleigh models, randomized axiom checkers and the classic
//!   fixed-point power control iteration.
//! * [`solvers_dc`] implements the weighted sum rate objectives, the closed
//!   form fixed-point solver for the log-SINR problem and the primal-dual
//!   difference-of-convex solver for the full problem.
//! * [`fplinq`] is the fractional-programming benchmark.
//! * [`unfolding`] is the learned primal-dual algorithm: reverse-mode tape,
//!   MLP, Adam and the training loop.
//! * [`harness`] wires the above into evaluation metrics and traces.

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel_model;
pub mod error;
pub mod fplinq;
pub mod harness;
pub mod interference;
pub mod rng;
pub mod solvers_dc;
pub mod unfolding;

pub use error::{Error, Result};
