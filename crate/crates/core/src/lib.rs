//! Graph-based multi-hop retrieval and answering.
//!
//! An offline [`indexer`] turns a passage corpus into an entity-passage graph
//! with typed edges. At query time [`retrieval`] selects seed entities from
//! gated fact triples and ranks passages by personalized PageRank plus a
//! symbolic-overlap bonus; [`answer`] builds the evidence-first prompt and
//! [`eval`] scores whole datasets.

pub mod answer;
pub mod eval;
pub mod error;
pub mod indexer;
pub mod prompts;
pub mod providers;
pub mod retrieval;
pub mod sparse;
pub mod text;

pub use error::{Error, ErrorClass, Result};
