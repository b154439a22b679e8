//! Bounded path context search for knowledge-graph question answering.
//!
//! A beam-search controller walks a question-local triple graph, asking a
//! pluggable selector which outgoing relations to follow. Complete paths are
//! kept symbolically while the selector is shown only the last `K` hops of
//! each beam. The crate also carries the evaluation harness around it:
//! dataset loading, checkpointed runs, metrics, paired statistics and a
//! synthetic benchmark generator with matching oracles.

pub mod backend;
pub mod controller;
pub mod dataset;
mod error;
pub mod graph;
pub mod harness;
pub mod metrics;
pub mod path;
pub mod prompt;
pub mod stats;
pub mod synth;

pub use error::Error;
