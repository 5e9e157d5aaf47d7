//! Minimal-pair distributivity datasets and log-odds causal mediation
//! analysis for natural language inference classifiers.

pub mod analysis;
pub mod cli;
pub mod dataset;
pub mod effects;
pub mod error;
pub mod lexicon;
pub mod model;
mod parallel;
pub mod stats;

pub use error::{Error, Result};
