//! Decentralized matrix factorization for recommender systems.
//!
//! Users hold their own rating rows and a user profile; item profiles live on
//! separate router nodes. Profiles are exchanged by gossip and each receiver
//! applies a single-sided stochastic gradient step to its own profile only.
//!
//! This crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation:
//!
//! * [`factor`]: profiles, predictions, the regularized squared loss, the two
//!   update rules and the evaluation metrics.
//! * [`ratings`]: the sparse observed rating matrix.
//! * [`synthetic`]: the low-rank synthetic benchmark generator and mean
//!   centering.
//! * [`sim`]: the deterministic discrete-event gossip simulator, the
//!   sequential-sampling engine that it is equivalent to, and the centralized
//!   paired-update SGD baseline.
//!
//! File formats, configuration parsing and the command-line runner live in
//! the `gossipmf` crate.
#![no_std]
#![forbid(unsafe_code)]
#![warn(missing_docs)]

extern crate alloc;
#[cfg(test)]
extern crate std;

mod error;
pub mod factor;
pub mod ratings;
pub mod rng;
pub mod sim;
pub mod synthetic;

pub use error::{Error, Result};
pub use factor::{FactorMatrix, FactorVector, Hyperparams};
pub use ratings::{Rating, SparseRatings};
pub use synthetic::DenseTruth;
