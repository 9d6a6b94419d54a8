//! Imbalance-aware text classification toolkit.
//!
//! Text normalization, similarity-based minority augmentation, TF-IDF
//! classifiers trained with cross-entropy, weighted BCE or focal loss,
//! soft and hard voting ensembles with exhaustive subset search, and
//! two-stage category → fine-label prediction, all driven by a declarative
//! experiment runner.

pub mod augment;
pub mod cli;
pub mod corpus;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod metrics;
pub mod models;
pub mod pipeline;
pub mod synth;
pub mod textnorm;

pub use error::{Error, Result};
