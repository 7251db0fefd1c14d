//! Event probabilities of a mean-reverting diffusion by fitted Q-iteration.
//!
//! The crate simulates Vasicek paths, learns a risk-penalised hedge and a
//! quadratic Q-function backward in time over the Monte Carlo cross-sections,
//! and reads the probability `P(S_T ≥ K)` off the Q-values at `t = 0`. A
//! Black–Scholes digital reference and an experiment harness sit alongside.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod basis;
pub mod bsm;
pub mod config;
pub mod error;
pub mod experiments;
pub mod io;
pub mod learner;
pub mod linalg;
pub mod matrix;
pub mod vasicek;

pub use error::{MqlvError, Result};
pub use learner::{event_probability, fit, FitResult, LearnerConfig, ProbabilityEstimate};
pub use matrix::PathMatrix;
pub use vasicek::{simulate, PathGrid, VasicekParams};
