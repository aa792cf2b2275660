//! Experiment runner for gossip-based matrix factorization.
//!
//! Reads a flat config file ([`config`]), loads or generates ratings
//! ([`movielens`], [`gossipmf_core::synthetic`]), trains with one of the
//! engines of [`gossipmf_core::sim`] ([`experiment`]) and writes metrics
//! ([`emit`]). The `gossipmf` binary wraps all of it.

#![forbid(unsafe_code)]

pub mod config;
pub mod emit;
mod error;
pub mod experiment;
pub mod movielens;

pub use config::{Budget, DatasetSpec, Engine, RawConfig, RunConfig};
pub use error::{Error, Result};
pub use experiment::{cross_validate, run_experiment, CvReport, ExperimentReport, Metric};
pub use gossipmf_core;
