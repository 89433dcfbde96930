use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};
use xxhash_rust::xxh3::xxh3_64;

use super::LshParams;
use crate::corpus::{DocId, Registry};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::shingle::MinHashSignature;

type Emitted = (u32, u32, u32);

/// Bucket key of one band: a hash of that band's `rows` signature components.
pub fn band_key(sig: &MinHashSignature, band: usize, params: &LshParams) -> u64 {
    debug_assert!(band < params.bands);
    let start = band * params.rows;
    let mut bytes = [0u8; 8 * 32];
    let slice = &sig.minima[start..start + params.rows];
    if slice.len() <= 32 {
        for (chunk, v) in bytes.chunks_exact_mut(8).zip(slice) {
            chunk.copy_from_slice(&v.to_le_bytes());
        }
        xxh3_64(&bytes[..slice.len() * 8])
    } else {
        let buf: Vec<u8> = slice.iter().flat_map(|v| v.to_le_bytes()).collect();
        xxh3_64(&buf)
    }
}

/// Candidate duplicate pair. `doc_a` was inserted into the index before
/// `doc_b`; `band` is the lowest band in which they collide.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DuplicatePair {
    pub doc_a: DocId,
    pub doc_b: DocId,
    pub band: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairEmission {
    pub pairs: Vec<DuplicatePair>,
    /// Occupants skipped because a bucket exceeded the per-insertion cap.
    pub truncated: u64,
    /// Documents inserted into the index.
    pub inserted: usize,
}

/// Builds the banded index and emits candidate pairs.
///
/// Documents are inserted dataset by dataset in registry insertion order,
/// and by doc id within a dataset. Each insertion pairs the new document
/// with up to `bucket_cap` earlier occupants of each of its buckets. Bands
/// are processed independently and their pair lists merged, so the output
/// is the same in sequential and parallel execution.
pub fn emit_pairs(
    signatures: &[(DocId, MinHashSignature)],
    registry: &Registry,
    params: &LshParams,
    bucket_cap: Option<usize>,
    exec: Execution,
) -> Result<PairEmission> {
    let mut order: Vec<(u32, &DocId, &MinHashSignature)> = Vec::with_capacity(signatures.len());
    for (id, sig) in signatures {
        if sig.k() != params.num_perm {
            return Err(Error::config(format!(
                "signature of {id} has {} components, LSH expects {}",
                sig.k(),
                params.num_perm
            )));
        }
        order.push((registry.require(&id.dataset)?.insertion_order, id, sig));
    }
    order.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
    if let Some(w) = order.windows(2).find(|w| w[0].1 == w[1].1) {
        return Err(Error::data(format!("document {} inserted twice", w[0].1)));
    }

    let cap = bucket_cap.unwrap_or(usize::MAX);
    // per band: (position, earlier position, band) triples and the truncation count
    let per_band: Vec<(Vec<Emitted>, u64)> = exec.map_indexed(params.bands, |band| {
        let mut buckets: HashMap<u64, Vec<u32>> = HashMap::new();
        let mut found = Vec::new();
        let mut truncated = 0u64;
        for (pos, (_, _, sig)) in order.iter().enumerate() {
            let bucket = buckets.entry(band_key(sig, band, params)).or_default();
            for &prior in bucket.iter().take(cap) {
                found.push((pos as u32, prior, band as u32));
            }
            truncated += bucket.len().saturating_sub(cap) as u64;
            bucket.push(pos as u32);
        }
        (found, truncated)
    });

    let truncated = per_band.iter().map(|(_, t)| t).sum();
    let mut triples: Vec<(u32, u32, u32)> = per_band.into_iter().flat_map(|(f, _)| f).collect();
    // keep the lowest band per pair, then order by (insertion position, band)
    triples.sort_unstable_by_key(|&(pos, prior, band)| (pos, prior, band));
    triples.dedup_by_key(|&mut (pos, prior, _)| (pos, prior));
    triples.sort_unstable_by_key(|&(pos, prior, band)| (pos, band, prior));

    let pairs = triples
        .into_iter()
        .map(|(pos, prior, band)| DuplicatePair {
            doc_a: order[prior as usize].1.clone(),
            doc_b: order[pos as usize].1.clone(),
            band: band as usize,
        })
        .collect();
    Ok(PairEmission {
        pairs,
        truncated,
        inserted: order.len(),
    })
}

/// Whether two signatures share at least one band bucket.
pub fn collides(a: &MinHashSignature, b: &MinHashSignature, params: &LshParams) -> bool {
    (0..params.bands).any(|band| band_key(a, band, params) == band_key(b, band, params))
}

/// Unordered pair set, for callers that only care about membership.
pub fn pair_set(pairs: &[DuplicatePair]) -> HashSet<(DocId, DocId)> {
    pairs
        .iter()
        .map(|p| {
            if p.doc_a <= p.doc_b {
                (p.doc_a.clone(), p.doc_b.clone())
            } else {
                (p.doc_b.clone(), p.doc_a.clone())
            }
        })
        .collect()
}
