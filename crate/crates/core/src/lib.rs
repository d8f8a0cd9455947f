//! Insertion-only adversarial perturbation of behavior sequences.
//!
//! The pipeline mines frequent benign patterns into a directed-graph
//! perturbation action set, trains desk-scale sequence classifiers (and a
//! black-box surrogate distilled from hard labels), learns a DQN insertion
//! policy, and runs a heuristic backtracking search that inserts
//! graph-legal benign fragments at gradient-selected positions until the
//! classifier flips. A micro-program weaver then maps the perturbation
//! plan onto located statements and verifies the re-executed trace equals
//! the adversarial sequence.

pub mod error;
pub mod exec;
pub mod mine;
pub mod attack;
pub mod dqn;
pub mod model;
pub mod report;
pub mod seq;
pub mod weaver;

pub use error::{Error, Result};
