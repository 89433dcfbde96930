//! Corpus curation: substring sanitizing, heuristic quality filtering and
//! cross-dataset MinHash-LSH deduplication with retention by dataset rank,
//! plus audit tooling for the dedup stage and a checkpointed stage pipeline.

pub mod audit;
pub mod corpus;
pub mod error;
pub mod exec;
pub mod filters;
pub mod lsh;
pub mod pipeline;
pub mod sanitize;
pub mod shingle;

pub use error::{Error, Result};
pub use exec::Execution;
