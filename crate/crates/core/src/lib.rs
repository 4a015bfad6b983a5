//! Bayes factor estimation between simulator-defined models.
//!
//! A binary classifier trained to tell datasets simulated under model 1
//! from datasets simulated under model 2 recovers the Bayes factor through
//! `D / (1 - D)`. Around that estimator the crate provides a stratified
//! rank-based ABC baseline, closed-form marginal likelihoods for the toy
//! model pairs, an evaluation toolkit and a classifier-based model
//! criticism check.

pub mod abc;
pub mod cli;
pub mod criticism;
pub mod deepbf;
pub mod error;
pub mod evalkit;
pub mod io;
pub mod models;
pub mod nn;
pub mod rngdist;

pub use error::{Error, Result};
