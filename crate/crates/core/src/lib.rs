//! Coupled maintenance and machine-assignment planning with Markov
//! decision processes.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod assignment;
pub mod chain;
pub mod codec;
pub mod config;
pub mod degradation;
pub mod error;
pub mod io;
pub mod maintenance;
pub mod mdp;
pub mod simulator;

pub use error::{Error, Result};
