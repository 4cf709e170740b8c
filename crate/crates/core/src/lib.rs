//! Supervised contrastive regression for tabular data.
//!
//! The crate is organised bottom-up:
//!
//! - [`nncore`]: dense MLP layers with explicit forward/backward passes, Adam,
//!   a finite-difference gradient checker and the text checkpoint codec.
//! - [`data`]: datasets, CSV ingestion, splitting, standardization and a
//!   synthetic generator with known informative features.
//! - [`augment`]: random feature corruption from training-column pools.
//! - [`contrastive`]: label-threshold pair masks, L2 normalization and the
//!   supervised contrastive loss with analytic gradients.
//! - [`pipeline`]: contrastive pretraining, frozen-encoder fine-tuning,
//!   ablations, prediction, ensembling and bundle persistence.
//! - [`metrics`]: Pearson's r and MSE.
//! - [`interpret`]: grouped permutation feature importance.
//! - [`cli`]: the `scr` command-line front end.
//!
//! All arithmetic is `f64` and every random draw flows from an explicit seed.

pub mod augment;
pub mod cli;
pub mod contrastive;
pub mod data;
pub mod error;
pub mod interpret;
pub mod metrics;
pub mod nncore;
pub mod pipeline;
pub mod seed;

pub use error::{Result, ScrError};
