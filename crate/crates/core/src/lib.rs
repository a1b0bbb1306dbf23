//! Modeling and analysis toolkit for ladder-type warm-vapor optical memories.
//!
//! The crate covers vapor-cell thermodynamics, spinwave dephasing models and
//! their Monte-Carlo counterpart, photon-counting trace analysis, model
//! fitting, spectral acceptance-window extraction, and single-photon source
//! benchmarks. The `laddermem` binary wraps each piece as a subcommand.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod cli;
pub mod constants;
pub mod error;
pub mod fit;
pub mod mc;
pub mod species;
pub mod spectral;
pub mod spinwave;
pub mod trace;
pub mod vapor;

pub use error::{Error, Result};
