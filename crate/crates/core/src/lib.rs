//! Gene regulatory edge inference from knockdown expression experiments.
//!
//! Knockdown and control experiments are standardized to plate-level
//! z-scores, each knocked-down gene is regressed against every other gene,
//! and the closed-form g-prior Bayes factor gives a posterior probability per
//! regulator-target edge. The crate also evaluates ranked edge lists against
//! reference edge sets and simulates plate-structured datasets with a known
//! network.
//!
//! Modules follow the data flow: [`ingest`] -> [`baseline`] -> [`inference`]
//! -> [`edgelist`] -> [`eval`], with [`pipeline`] and [`cli`] tying them
//! together and [`simgen`] producing synthetic inputs.

pub mod baseline;
pub mod cli;
pub mod edgelist;
pub mod error;
pub mod eval;
pub mod inference;
pub mod ingest;
pub mod pipeline;
pub mod simgen;

pub use error::{Error, Result};
