//! Causal parent discovery from multi-environment data by searching for
//! invariant covariate sets with minimal prediction error.

pub mod dataset;
pub mod discover;
pub mod error;
pub mod evalkit;
pub mod graphs;
pub mod invariance;
pub mod regress;
pub mod rng;
pub mod scm;
pub mod sweep;

pub use dataset::{Dataset, GroundTruth};
pub use error::{Error, Result};
pub use graphs::{Dag, NodeId, Relation, Role};
