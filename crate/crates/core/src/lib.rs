//! Knowledge-centric process mining.

pub mod error;
pub mod event_log;
pub mod knowledge_graph;
pub mod rule_mining;
pub mod dependency_mining;
pub mod conformance;
pub mod augmentation;
pub mod synth;
pub mod variant_analysis;
pub mod pipeline;
pub mod cli;
mod optim;

pub use error::{Error, Result};
