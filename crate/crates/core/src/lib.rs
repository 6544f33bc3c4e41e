//! Attentive aspect-based recommendation.
//!
//! Review aspects of a user and a candidate item are embedded, paired through
//! element-wise interactions, pooled by two attention layers and combined with
//! a latent-factor term to produce a ranking score trained with a pairwise
//! (BPR) objective.

pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod corpus;
pub mod error;
pub mod evaluation;
pub mod introspection;
pub mod manifest;
pub mod matrix;
pub mod model;
pub mod parallel;
pub mod pretrain;
pub mod synthetic;
pub mod training;
pub mod variants;

pub use error::{AarmError, Result};
