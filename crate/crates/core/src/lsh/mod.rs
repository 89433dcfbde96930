//! Banded LSH over MinHash signatures, candidate pair emission and
//! cluster-based retention.

mod cluster;
mod index;
mod params;

pub use cluster::{cluster_and_retain, Clustering, DuplicateCluster, UnionFind};
pub use index::{band_key, collides, emit_pairs, pair_set, DuplicatePair, PairEmission};
pub use params::{collision_probability, LshParams, Preset, TheoreticalRates};
