//! Synthetic corpora shared by the integration tests.
#![allow(dead_code)]

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::IndexedRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/corpus50")
}

/// Lowercase pseudo-words; normalization leaves them unchanged.
pub fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    while seen.len() < size {
        let len = rng.random_range(3..9);
        let w: String = (0..len)
            .map(|_| rng.random_range(b'a'..=b'z') as char)
            .collect();
        seen.insert(w);
    }
    let mut v: Vec<String> = seen.into_iter().collect();
    v.sort();
    v
}

pub fn random_words(
    rng: &mut ChaCha8Rng,
    vocab: &[String],
    len: std::ops::Range<usize>,
) -> Vec<String> {
    let len = rng.random_range(len);
    (0..len)
        .map(|_| vocab.choose(rng).unwrap().clone())
        .collect()
}

/// Exact Jaccard of the `n`-word window sets, computed directly on words.
pub fn window_jaccard(a: &[String], b: &[String], n: usize) -> f64 {
    let sa: HashSet<&[String]> = a.windows(n).collect();
    let sb: HashSet<&[String]> = b.windows(n).collect();
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

/// Replaces random words until one more edit would drop the window Jaccard
/// below `floor`, or until it reaches `target`. Returns the copy and its
/// exact Jaccard with the original.
pub fn near_copy(
    rng: &mut ChaCha8Rng,
    vocab: &[String],
    original: &[String],
    n: usize,
    floor: f64,
    target: f64,
) -> (Vec<String>, f64) {
    let mut copy = original.to_vec();
    let mut j = 1.0;
    for _ in 0..original.len() {
        if j <= target {
            break;
        }
        let mut next = copy.clone();
        let pos = rng.random_range(0..next.len());
        next[pos] = vocab.choose(rng).unwrap().clone();
        let nj = window_jaccard(original, &next, n);
        if nj < floor {
            break;
        }
        copy = next;
        j = nj;
    }
    (copy, j)
}

/// Writes `shards[i]` as `part-{i}.jsonl` records of `{text, source}`.
pub fn write_corpus(dir: &Path, shards: &[Vec<(String, String)>]) {
    fs::create_dir_all(dir).unwrap();
    for (i, docs) in shards.iter().enumerate() {
        let mut out = String::new();
        for (source, text) in docs {
            out.push_str(&serde_json::json!({"text": text, "source": source}).to_string());
            out.push('\n');
        }
        fs::write(dir.join(format!("part-{i}.jsonl")), out).unwrap();
    }
}

/// A multi-shard corpus over every reference dataset with planted
/// near-duplicates that cross shards and datasets.
pub fn synthetic_corpus(
    rng: &mut ChaCha8Rng,
    docs: usize,
    planted: usize,
    shards: usize,
) -> Vec<Vec<(String, String)>> {
    const DATASETS: [&str; 7] = [
        "pile-uncopyrighted",
        "c4-en",
        "pes2o",
        "arxiv_s2orc_parsed",
        "refinedweb",
        "slimpajama",
        "starcoder",
    ];
    let vocab = vocabulary(rng, 4000);
    let mut out = vec![Vec::new(); shards];
    let mut originals = Vec::new();
    for _ in 0..docs {
        let words = random_words(rng, &vocab, 40..160);
        let ds = DATASETS.choose(rng).unwrap().to_string();
        out[rng.random_range(0..shards)].push((ds, words.join(" ")));
        originals.push(words);
    }
    for _ in 0..planted {
        let base = originals.choose(rng).unwrap();
        let target = rng.random_range(0.3..1.0);
        let (copy, _) = near_copy(rng, &vocab, base, 13, 0.0, target);
        let ds = DATASETS.choose(rng).unwrap().to_string();
        out[rng.random_range(0..shards)].push((ds, copy.join(" ")));
    }
    out
}
