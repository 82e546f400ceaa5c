//! Single-excitation energy transport on a ring of antenna molecules feeding
//! a reaction-centre sink.
//!
//! The crate integrates non-Markovian stochastic Schrödinger trajectories with
//! first-order post-Markov memory terms, the matching master equation, and the
//! momentum-space diagnostics used to read off transport efficiency.

pub mod bath;
pub mod config;
pub mod engine;
pub mod error;
pub mod model;
pub mod noise;
pub mod observables;
pub mod propagation;
pub mod rng;

pub use error::{Error, Result};
pub use num_complex::Complex64;
