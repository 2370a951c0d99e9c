//! Device-independent key-distribution analysis.
//!
//! The crate goes from a Bell inequality and a table of observed (or simulated)
//! correlations to a certified bound on the adversary's guessing probability,
//! and from there to asymptotic and finite-size key rates:
//!
//! * [`bell`]: scenarios, inequalities, correlation tables, local bounds.
//! * [`quantum`]: a small dense simulator for the reference qubit/qutrit models.
//! * [`ncpoly`]: noncommutative polynomials over measurement operators and the
//!   CHSH sum-of-squares certificate.
//! * [`npa`]: moment-matrix relaxations of the guessing-probability problem.
//! * [`sdp`]: a dense primal-dual interior-point SDP solver.
//! * [`rate`]: tradeoff curves, min-entropy and key-rate accounting.
//! * [`protocol`]: Monte Carlo simulation of a full protocol run, including
//!   Toeplitz privacy amplification.
//!
//! Grid sweeps, strategy enumeration and batched Monte Carlo runs go through
//! [`Execution`], which uses rayon when the `parallel` feature is enabled and
//! falls back to plain iteration otherwise. Results never depend on the mode.

// `!(x > 0.0)` style checks are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bell;
pub mod error;
mod exec;
pub mod ncpoly;
pub mod npa;
pub mod protocol;
pub mod quantum;
pub mod rate;
pub mod sdp;

pub use error::{Error, Result};
pub use exec::Execution;
