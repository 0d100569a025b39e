//! Adaptively calibrated critics.
//!
//! A small, dependency-light reinforcement-learning library: distributional
//! quantile critics with truncated targets, a return-driven calibrator that
//! tunes the truncation (or the TD3 target mix) online, desk-scale
//! environments, and an experiment harness with deterministic CSV logs.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod agents;
pub mod calibrator;
pub mod critic;
pub mod envs;
mod error;
pub mod harness;
pub mod nn;
pub mod replay;
pub mod rng;

pub use error::{Error, Result};
