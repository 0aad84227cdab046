//! Data-poisoning attacks on matrix-factorization node embeddings.
//!
//! DeepWalk and second-order LINE are modelled through the closed-form
//! proximity matrices they implicitly factorize. An attack relaxes the
//! adjacency matrix to `[0, 1]`, descends the attacker's loss using the
//! stationarity condition of the masked factorization to differentiate the
//! embedding, and rounds the result to a budget of edge additions or
//! deletions. Baseline attacks and a link-prediction evaluation harness
//! are included for comparison.

pub mod attack;
pub mod baseline;
pub mod error;
pub mod eval;
pub mod factorize;
pub mod generate;
pub mod graph;
pub mod proximity;
pub mod seed;

pub use error::{Error, Result};
pub use graph::{Action, Graph, LinkSplit, Pair, Perturbation};
pub use proximity::{Method, ProximitySpec};
