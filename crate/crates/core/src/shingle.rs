//! Dedup-side normalization, word n-gram shingles and MinHash signatures.

use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;
use xxhash_rust::xxh3::xxh3_64_with_seed;

use crate::error::{Error, Result};

pub const DEFAULT_SHINGLE_WIDTH: usize = 13;
pub const DEFAULT_NUM_PERM: usize = 128;

fn punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[\p{P}\p{S}]+").unwrap())
}

/// Text prepared for shingling: NFC, lowercase, no punctuation or symbols
/// (Unicode categories P and S), single spaces between words.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.0.split(' ').filter(|w| !w.is_empty())
    }

    pub fn into_string(self) -> String {
        self.0
    }
}

pub fn normalize(text: &str) -> NormalizedText {
    let lowered = text.nfc().collect::<String>().to_lowercase();
    let stripped = punctuation().replace_all(&lowered, "");
    let collapsed = stripped.split_whitespace().collect::<Vec<_>>().join(" ");
    // stripping a symbol can bring a base character next to a combining mark
    NormalizedText(collapsed.nfc().collect())
}

/// Distinct hashes of the n-word windows of a normalized text, sorted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShingleSet {
    n: usize,
    hashes: Vec<u64>,
}

impl ShingleSet {
    /// Builds a set directly from element hashes.
    pub fn from_hashes(n: usize, mut hashes: Vec<u64>) -> Self {
        hashes.sort_unstable();
        hashes.dedup();
        ShingleSet { n, hashes }
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn hashes(&self) -> &[u64] {
        &self.hashes
    }

    pub fn len(&self) -> usize {
        self.hashes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hashes.is_empty()
    }

    /// |A ∩ B| and |A ∪ B| by merging the sorted hash lists.
    pub fn intersection_union(&self, other: &ShingleSet) -> (usize, usize) {
        let (a, b) = (&self.hashes, &other.hashes);
        let (mut i, mut j, mut inter) = (0, 0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    inter += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        (inter, a.len() + b.len() - inter)
    }
}

/// Hashes every window of `n` consecutive words. Texts with fewer than `n`
/// words produce an empty set.
pub fn shingle(norm: &NormalizedText, n: usize, seed: u64) -> Result<ShingleSet> {
    if n == 0 {
        return Err(Error::config("shingle width must be at least 1"));
    }
    let text = norm.as_str();
    let mut bounds = Vec::new();
    let mut offset = 0;
    for w in text.split(' ') {
        if !w.is_empty() {
            bounds.push((offset, offset + w.len()));
        }
        offset += w.len() + 1;
    }
    if bounds.len() < n {
        return Ok(ShingleSet {
            n,
            hashes: Vec::new(),
        });
    }
    let hashes = (0..=bounds.len() - n)
        .map(|i| {
            let window = &text[bounds[i].0..bounds[i + n - 1].1];
            xxh3_64_with_seed(window.as_bytes(), seed)
        })
        .collect();
    Ok(ShingleSet::from_hashes(n, hashes))
}

#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    mix64(*state)
}

#[inline]
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `k` seed-derived bijective mixers over 64-bit shingle hashes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HashFamily {
    seed: u64,
    keys: Vec<u64>,
}

impl HashFamily {
    pub fn new(k: usize, seed: u64) -> Result<Self> {
        if k == 0 {
            return Err(Error::config("signature size must be at least 1"));
        }
        let mut state = seed;
        let keys = (0..k).map(|_| splitmix64(&mut state)).collect();
        Ok(HashFamily { seed, keys })
    }

    pub fn k(&self) -> usize {
        self.keys.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The i-th family member applied to one element hash.
    #[inline]
    pub fn hash(&self, i: usize, x: u64) -> u64 {
        mix64(x ^ self.keys[i])
    }

    pub fn signature(&self, set: &ShingleSet) -> Result<MinHashSignature> {
        self.signature_of(set.hashes())
    }

    pub fn signature_of(&self, elements: &[u64]) -> Result<MinHashSignature> {
        if elements.is_empty() {
            return Err(Error::data("cannot sign an empty shingle set"));
        }
        let mut minima = vec![u64::MAX; self.keys.len()];
        for &x in elements {
            for (m, &key) in minima.iter_mut().zip(&self.keys) {
                let h = mix64(x ^ key);
                if h < *m {
                    *m = h;
                }
            }
        }
        Ok(MinHashSignature {
            seed: self.seed,
            minima,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MinHashSignature {
    pub seed: u64,
    pub minima: Vec<u64>,
}

impl MinHashSignature {
    pub fn k(&self) -> usize {
        self.minima.len()
    }

    fn check_compatible(&self, other: &MinHashSignature) -> Result<()> {
        if self.k() != other.k() || self.seed != other.seed {
            return Err(Error::data(format!(
                "incompatible signatures (k={}, seed={}) vs (k={}, seed={})",
                self.k(),
                self.seed,
                other.k(),
                other.seed
            )));
        }
        Ok(())
    }

    /// Fraction of positions where the two signatures agree; estimates the
    /// Jaccard similarity of the underlying shingle sets.
    pub fn resemblance(&self, other: &MinHashSignature) -> Result<f64> {
        self.check_compatible(other)?;
        let same = self
            .minima
            .iter()
            .zip(&other.minima)
            .filter(|(a, b)| a == b)
            .count();
        Ok(same as f64 / self.k() as f64)
    }

    /// Signature of the union of both underlying sets.
    pub fn union(&self, other: &MinHashSignature) -> Result<MinHashSignature> {
        self.check_compatible(other)?;
        Ok(MinHashSignature {
            seed: self.seed,
            minima: self
                .minima
                .iter()
                .zip(&other.minima)
                .map(|(a, b)| *a.min(b))
                .collect(),
        })
    }
}

/// Normalizes, shingles and signs document texts.
#[derive(Debug, Clone)]
pub struct Signer {
    n: usize,
    family: HashFamily,
}

impl Signer {
    pub fn new(n: usize, k: usize, seed: u64) -> Result<Self> {
        if n == 0 {
            return Err(Error::config("shingle width must be at least 1"));
        }
        Ok(Signer {
            n,
            family: HashFamily::new(k, seed)?,
        })
    }

    pub fn width(&self) -> usize {
        self.n
    }

    pub fn family(&self) -> &HashFamily {
        &self.family
    }

    pub fn shingles(&self, text: &str) -> ShingleSet {
        shingle(&normalize(text), self.n, self.family.seed).expect("width checked in new")
    }

    /// `None` for texts with fewer than `n` words after normalization.
    pub fn sign(&self, text: &str) -> Option<MinHashSignature> {
        let set = self.shingles(text);
        if set.is_empty() {
            None
        } else {
            self.family.signature(&set).ok()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("Hello,  WORLD!\n").as_str(), "hello world");
        assert_eq!(normalize("abc").as_str(), "abc");
        assert_eq!(normalize("!!! ???").as_str(), "");
        assert_eq!(
            normalize("\tmixed\r\n tabs  and\u{a0}spaces ").as_str(),
            "mixed tabs and spaces"
        );
        // e + combining acute composes under NFC
        assert_eq!(normalize("Cafe\u{301}").as_str(), "caf\u{e9}");
        assert_eq!(normalize("a+b=c $5").as_str(), "abc 5");
    }

    fn words(n: usize) -> String {
        (0..n)
            .map(|i| format!("w{i}"))
            .collect::<Vec<_>>()
            .join(" ")
    }

    #[test]
    fn shingle_count_boundaries() {
        let s = |n_words| shingle(&normalize(&words(n_words)), 13, 7).unwrap().len();
        assert_eq!(s(13), 1);
        assert_eq!(s(12), 0);
        assert_eq!(s(20), 20 - 13 + 1);
        assert_eq!(s(0), 0);
        assert!(shingle(&normalize("a"), 0, 7).is_err());
    }

    #[test]
    fn repeated_windows_are_deduplicated() {
        let text = ["a b"; 20].join(" ");
        assert_eq!(shingle(&normalize(&text), 3, 1).unwrap().len(), 2);
    }

    #[test]
    fn signature_basics() {
        let fam = HashFamily::new(128, 11).unwrap();
        let a = ShingleSet::from_hashes(13, vec![1, 2, 3]);
        let sa = fam.signature(&a).unwrap();
        assert_eq!(sa.k(), 128);
        assert_eq!(sa, fam.signature(&a).unwrap());
        assert_eq!(sa.resemblance(&sa).unwrap(), 1.0);
        assert!(fam.signature(&ShingleSet::from_hashes(13, vec![])).is_err());

        let sx = fam.signature_of(&[42]).unwrap();
        let sy = fam.signature_of(&[43]).unwrap();
        for i in 0..128 {
            assert_eq!(sx.minima[i], fam.hash(i, 42));
            assert_eq!(sy.minima[i], fam.hash(i, 43));
        }
    }

    #[test]
    fn mismatched_signatures_rejected() {
        let a = HashFamily::new(128, 1).unwrap().signature_of(&[1]).unwrap();
        let b = HashFamily::new(128, 2).unwrap().signature_of(&[1]).unwrap();
        let c = HashFamily::new(64, 1).unwrap().signature_of(&[1]).unwrap();
        assert!(a.resemblance(&b).is_err());
        assert!(a.resemblance(&c).is_err());
    }

    fn random_set(rng: &mut ChaCha8Rng, n: usize) -> Vec<u64> {
        (0..n).map(|_| rng.random()).collect()
    }

    #[test]
    fn disjoint_sets_resemble_near_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let fam = HashFamily::new(128, 99).unwrap();
        let a = fam.signature_of(&random_set(&mut rng, 1000)).unwrap();
        let b = fam.signature_of(&random_set(&mut rng, 1000)).unwrap();
        assert!(a.resemblance(&b).unwrap() <= 0.05);
    }

    #[test]
    fn half_overlap_estimate() {
        // |A|=|B|=100 with 66 shared elements: J = 66/134 ≈ 0.4925
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let shared = random_set(&mut rng, 66);
        let mut a = shared.clone();
        a.extend(random_set(&mut rng, 34));
        let mut b = shared;
        b.extend(random_set(&mut rng, 34));
        let (sa, sb) = (ShingleSet::from_hashes(1, a), ShingleSet::from_hashes(1, b));
        let (i, u) = sa.intersection_union(&sb);
        let exact = i as f64 / u as f64;
        let fam = HashFamily::new(128, 17).unwrap();
        let est = fam
            .signature(&sa)
            .unwrap()
            .resemblance(&fam.signature(&sb).unwrap())
            .unwrap();
        assert!((est - exact).abs() <= 0.15, "est {est} exact {exact}");
    }

    #[test]
    fn estimator_mean_over_seeds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let shared = random_set(&mut rng, 60);
        let mut a = shared.clone();
        a.extend(random_set(&mut rng, 40));
        let mut b = shared;
        b.extend(random_set(&mut rng, 40));
        let exact = 60.0 / 140.0;
        let seeds = 300;
        let mean = (0..seeds)
            .map(|s| {
                let fam = HashFamily::new(128, s).unwrap();
                fam.signature_of(&a)
                    .unwrap()
                    .resemblance(&fam.signature_of(&b).unwrap())
                    .unwrap()
            })
            .sum::<f64>()
            / seeds as f64;
        // standard error of the mean over seeds
        let sigma = (exact * (1.0 - exact) / 128.0 / seeds as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * sigma,
            "mean {mean} exact {exact}"
        );
    }

    proptest! {
        #[test]
        fn normalize_invariants(s in "\\PC{0,40}") {
            let n = normalize(&s);
            let t = n.as_str();
            let again = normalize(t);
            prop_assert_eq!(again.as_str(), t);
            prop_assert!(!t.starts_with(' ') && !t.ends_with(' '));
            prop_assert!(!t.contains("  "));
            prop_assert!(!punctuation().is_match(t));
        }

        #[test]
        fn union_property(a in proptest::collection::vec(any::<u64>(), 1..50),
                          b in proptest::collection::vec(any::<u64>(), 1..50),
                          seed in any::<u64>()) {
            let fam = HashFamily::new(32, seed).unwrap();
            let sa = fam.signature_of(&a).unwrap();
            let sb = fam.signature_of(&b).unwrap();
            let mut both = a.clone();
            both.extend(&b);
            prop_assert_eq!(sa.union(&sb).unwrap(), fam.signature_of(&both).unwrap());
        }

        #[test]
        fn order_invariant(mut a in proptest::collection::vec(any::<u64>(), 1..50)) {
            let fam = HashFamily::new(16, 0).unwrap();
            let before = fam.signature_of(&a).unwrap();
            a.reverse();
            prop_assert_eq!(before, fam.signature_of(&a).unwrap());
        }

        #[test]
        fn window_count(w in 0usize..60, n in 1usize..15) {
            let set = shingle(&normalize(&words(w)), n, 0).unwrap();
            prop_assert_eq!(set.len(), (w + 1).saturating_sub(n));
        }
    }
}
