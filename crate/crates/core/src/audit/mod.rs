//! Empirical checks of the dedup stage: exact Jaccard and edit similarity
//! of sampled candidate pairs, false-positive estimates, length-conditioned
//! FP curves and duplicate provenance.

mod levenshtein;
mod provenance;

use std::collections::HashMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, DocumentRecord};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lsh::{DuplicateCluster, DuplicatePair};
use crate::shingle::{ShingleSet, Signer};

pub use levenshtein::levenshtein;
pub use provenance::{provenance_matrix, ProvenanceMatrix};

pub const DEFAULT_EDIT_LENGTH_CAP: usize = 20_000;
pub const HISTOGRAM_BINS: usize = 100;

pub fn exact_jaccard(a: &ShingleSet, b: &ShingleSet) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::data("Jaccard similarity of an empty shingle set"));
    }
    let (inter, union) = a.intersection_union(b);
    Ok(inter as f64 / union as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EditSimilarity {
    pub value: f64,
    /// True when either text was truncated to the length cap.
    pub capped: bool,
}

/// `1 - levenshtein(a, b) / max(|a|, |b|)` over characters, 1 for two
/// empty texts. Texts longer than `cap` characters are compared on their
/// first `cap` characters.
pub fn edit_similarity(a: &str, b: &str, cap: usize) -> EditSimilarity {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let capped = a.len() > cap || b.len() > cap;
    let (a, b) = (&a[..a.len().min(cap)], &b[..b.len().min(cap)]);
    let longest = a.len().max(b.len());
    let value = if longest == 0 {
        1.0
    } else {
        1.0 - levenshtein(a, b) as f64 / longest as f64
    };
    EditSimilarity { value, capped }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAudit {
    pub pair: DuplicatePair,
    pub exact_jaccard: f64,
    pub edit_similarity: f64,
    pub edit_capped: bool,
    /// Larger word count of the two documents.
    pub length_words: usize,
}

/// Fixed-width histogram over [0, 1]; the value 1.0 falls in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(values: impl IntoIterator<Item = f64>) -> Self {
        let mut counts = vec![0u64; HISTOGRAM_BINS];
        for v in values {
            // nudge so that e.g. 0.29 lands in bin 29 despite rounding
            let bin = ((v * HISTOGRAM_BINS as f64) + 1e-9).floor() as usize;
            counts[bin.min(HISTOGRAM_BINS - 1)] += 1;
        }
        Histogram {
            bin_width: 1.0 / HISTOGRAM_BINS as f64,
            counts,
        }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Per-bin share of the total; all zeros for an empty histogram.
    pub fn mass(&self) -> Vec<f64> {
        let t = self.total();
        self.counts
            .iter()
            .map(|&c| if t == 0 { 0.0 } else { c as f64 / t as f64 })
            .collect()
    }

    /// Share of values at or above `threshold`.
    pub fn mass_at_or_above(&self, threshold: f64) -> f64 {
        let from = ((threshold * HISTOGRAM_BINS as f64) + 1e-9).floor() as usize;
        self.mass().iter().skip(from).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub sample_size: usize,
    pub threshold: f64,
    pub seed: u64,
    pub edit_length_cap: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditSample {
    pub audits: Vec<PairAudit>,
    pub population: usize,
    /// True when the requested sample was at least the population.
    pub full_population: bool,
    pub empirical_fp_jaccard: f64,
    pub empirical_fp_edit: f64,
    pub capped_pairs: usize,
    pub histogram_jaccard: Histogram,
    pub histogram_edit: Histogram,
}

/// Seeded uniform sample of pair indices without replacement, ascending.
pub fn sample_indices(population: usize, sample_size: usize, seed: u64) -> Vec<usize> {
    if sample_size >= population {
        return (0..population).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx = sample(&mut rng, population, sample_size).into_vec();
    idx.sort_unstable();
    idx
}

fn fraction_below(values: impl Iterator<Item = f64>, threshold: f64) -> f64 {
    let (mut below, mut n) = (0usize, 0usize);
    for v in values {
        n += 1;
        if v < threshold {
            below += 1;
        }
    }
    if n == 0 {
        0.0
    } else {
        below as f64 / n as f64
    }
}

pub fn sample_and_audit(
    pairs: &[DuplicatePair],
    corpus: &HashMap<DocId, DocumentRecord>,
    signer: &Signer,
    config: &AuditConfig,
    exec: Execution,
) -> Result<AuditSample> {
    let picked = sample_indices(pairs.len(), config.sample_size, config.seed);
    let audits = exec.try_map(&picked, |&i| {
        let pair = &pairs[i];
        let lookup = |id: &DocId| {
            corpus
                .get(id)
                .ok_or_else(|| Error::data(format!("pair member {id} not in corpus")))
        };
        let (a, b) = (lookup(&pair.doc_a)?, lookup(&pair.doc_b)?);
        let exact = exact_jaccard(&signer.shingles(a.text()), &signer.shingles(b.text()))?;
        let edit = edit_similarity(a.text(), b.text(), config.edit_length_cap);
        Ok(PairAudit {
            pair: pair.clone(),
            exact_jaccard: exact,
            edit_similarity: edit.value,
            edit_capped: edit.capped,
            length_words: a.word_count().max(b.word_count()),
        })
    })?;
    Ok(AuditSample {
        population: pairs.len(),
        full_population: config.sample_size >= pairs.len(),
        empirical_fp_jaccard: fraction_below(
            audits.iter().map(|a| a.exact_jaccard),
            config.threshold,
        ),
        empirical_fp_edit: fraction_below(
            audits.iter().map(|a| a.edit_similarity),
            config.threshold,
        ),
        capped_pairs: audits.iter().filter(|a| a.edit_capped).count(),
        histogram_jaccard: Histogram::new(audits.iter().map(|a| a.exact_jaccard)),
        histogram_edit: Histogram::new(audits.iter().map(|a| a.edit_similarity)),
        audits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub length_words: usize,
    /// Pairs with length at most `length_words`.
    pub pairs: usize,
    pub fp_jaccard: f64,
    pub fp_edit: f64,
}

/// FP rate among audited pairs no longer than each distinct length.
pub fn cumulative_fp_by_length(audits: &[PairAudit], threshold: f64) -> Vec<CurvePoint> {
    let mut sorted: Vec<&PairAudit> = audits.iter().collect();
    sorted.sort_by_key(|a| a.length_words);
    let mut curve: Vec<CurvePoint> = Vec::new();
    let (mut n, mut fp_j, mut fp_e) = (0usize, 0usize, 0usize);
    for (i, a) in sorted.iter().enumerate() {
        n += 1;
        fp_j += usize::from(a.exact_jaccard < threshold);
        fp_e += usize::from(a.edit_similarity < threshold);
        let last_of_length = sorted
            .get(i + 1)
            .is_none_or(|next| next.length_words != a.length_words);
        if last_of_length {
            curve.push(CurvePoint {
                length_words: a.length_words,
                pairs: n,
                fp_jaccard: fp_j as f64 / n as f64,
                fp_edit: fp_e as f64 / n as f64,
            });
        }
    }
    curve
}

/// Human-readable dump of `n` randomly chosen clusters with member texts.
pub fn dump_clusters(
    clusters: &[DuplicateCluster],
    corpus: &HashMap<DocId, DocumentRecord>,
    n: usize,
    seed: u64,
    max_chars: usize,
) -> String {
    let mut out = String::new();
    for i in sample_indices(clusters.len(), n, seed) {
        let c = &clusters[i];
        let _ = writeln!(
            out,
            "=== cluster {} ({} members, kept {}) ===",
            c.cluster_id,
            c.members.len(),
            c.kept_doc_id
        );
        for m in &c.members {
            let mark = if *m == c.kept_doc_id { "KEEP" } else { "DROP" };
            let text: String = corpus
                .get(m)
                .map(|d| d.text().chars().take(max_chars).collect())
                .unwrap_or_default();
            let _ = writeln!(out, "--- [{mark}] {m}\n{text}");
        }
        out.push('\n');
    }
    out
}
