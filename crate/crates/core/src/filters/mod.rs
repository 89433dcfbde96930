//! Document-level quality filtering.
//!
//! A filter battery is an ordered list of [`FilterSpec`]s. Each spec
//! measures one statistic of a document and compares it with a threshold:
//! `max_*` kinds remove documents whose statistic exceeds the threshold,
//! `min_*` kinds remove documents below it. Filters run in priority order
//! and the first violation is credited with the removal.

mod pii;
mod report;
mod stats;
mod wordlist;

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::corpus::{DocId, DocumentRecord, Registry};
use crate::error::{Error, Result};

pub use pii::{classify as classify_pii, count_pii, trim_token as trim_pii_token, PiiKind};
pub use report::{DatasetRemovals, FilterReport, FilterReportRow};
pub use stats::{max_repeated_line_count, pattern_count, pattern_fraction, DocumentStats};
pub use wordlist::{word_tokens, WordList, WordListHits};

/// Names of the shipped word lists.
pub const WORDLIST_NAMES: [&str; 4] = [
    "sexual_word_list",
    "profanity_word_list",
    "zh_pornsignals",
    "cursed_substrings",
];

const PLACEHOLDER_LISTS: [(&str, &str); 4] = [
    (
        "sexual_word_list",
        include_str!("../../assets/wordlists/sexual_word_list.json"),
    ),
    (
        "profanity_word_list",
        include_str!("../../assets/wordlists/profanity_word_list.json"),
    ),
    (
        "zh_pornsignals",
        include_str!("../../assets/wordlists/zh_pornsignals.json"),
    ),
    (
        "cursed_substrings",
        include_str!("../../assets/wordlists/cursed_substrings.json"),
    ),
];

/// JSON source of a shipped placeholder word list.
pub fn placeholder_wordlist(name: &str) -> Option<&'static str> {
    PLACEHOLDER_LISTS
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(_, raw)| *raw)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterKind {
    MinLength,
    MaxMeanWordLength,
    MinMeanWordLength,
    MaxFractionNonAlphanumeric,
    MaxFractionNumerical,
    MaxCountPattern,
    MaxFractionPattern,
    MaxCountWordlist,
    MaxFractionWordlist,
    MaxPiiItemsCount,
    MaxRepeatedSubstrings,
}

impl FilterKind {
    fn is_min(self) -> bool {
        matches!(self, FilterKind::MinLength | FilterKind::MinMeanWordLength)
    }

    fn needs_pattern(self) -> bool {
        matches!(
            self,
            FilterKind::MaxCountPattern | FilterKind::MaxFractionPattern
        )
    }

    fn needs_wordlist(self) -> bool {
        matches!(
            self,
            FilterKind::MaxCountWordlist | FilterKind::MaxFractionWordlist
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub filter_id: String,
    pub kind: FilterKind,
    pub threshold: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wordlist: Option<String>,
    pub priority: u32,
}

impl FilterSpec {
    fn new(kind: FilterKind, threshold: f64, priority: u32) -> Self {
        let filter_id = serde_json::to_value(kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_string))
            .unwrap_or_default();
        FilterSpec {
            filter_id,
            kind,
            threshold,
            pattern: None,
            wordlist: None,
            priority,
        }
    }

    fn pattern(kind: FilterKind, pattern: &str, threshold: f64, priority: u32) -> Self {
        let op = if kind == FilterKind::MaxCountPattern {
            "max_count"
        } else {
            "max_fraction"
        };
        FilterSpec {
            filter_id: format!("{op}:{pattern}"),
            pattern: Some(pattern.to_string()),
            ..FilterSpec::new(kind, threshold, priority)
        }
    }

    fn wordlist(kind: FilterKind, list: &str, threshold: f64, priority: u32) -> Self {
        let op = if kind == FilterKind::MaxCountWordlist {
            "max_count"
        } else {
            "max_fraction"
        };
        FilterSpec {
            filter_id: format!("{op}:{list}"),
            wordlist: Some(list.to_string()),
            ..FilterSpec::new(kind, threshold, priority)
        }
    }

    /// Whether a measured statistic violates this filter.
    pub fn violated_by(&self, value: f64) -> bool {
        if self.kind.is_min() {
            value < self.threshold
        } else {
            value > self.threshold
        }
    }
}

/// The shipped battery, in evaluation order. Only `min_length = 100`
/// characters is a published value; the other thresholds are starting
/// points meant to be tuned against manual review of removed documents.
pub fn default_battery() -> Vec<FilterSpec> {
    use FilterKind::*;
    vec![
        FilterSpec::new(MinMeanWordLength, 3.0, 1),
        FilterSpec::new(MinLength, 100.0, 2),
        FilterSpec::pattern(MaxFractionPattern, "https://", 0.05, 3),
        FilterSpec::new(MaxFractionNumerical, 0.25, 4),
        FilterSpec::pattern(MaxFractionPattern, "<", 0.05, 5),
        FilterSpec::pattern(MaxFractionPattern, "\":", 0.04, 6),
        FilterSpec::new(MaxPiiItemsCount, 10.0, 7),
        FilterSpec::new(MaxFractionNonAlphanumeric, 0.3, 8),
        FilterSpec::wordlist(MaxFractionWordlist, "sexual_word_list", 0.02, 9),
        FilterSpec::new(MaxMeanWordLength, 12.0, 10),
        FilterSpec::pattern(MaxCountPattern, "xml", 10.0, 11),
        FilterSpec::wordlist(MaxCountWordlist, "sexual_word_list", 5.0, 12),
        FilterSpec::pattern(MaxCountPattern, "<?xml version=", 0.0, 13),
        FilterSpec::wordlist(MaxFractionWordlist, "cursed_substrings", 0.05, 14),
        FilterSpec::wordlist(MaxFractionWordlist, "profanity_word_list", 0.05, 15),
        FilterSpec::new(MaxRepeatedSubstrings, 10.0, 16),
        FilterSpec::pattern(MaxFractionPattern, "www.", 0.05, 17),
        FilterSpec::wordlist(MaxCountWordlist, "zh_pornsignals", 2.0, 18),
        FilterSpec::pattern(MaxCountPattern, "lorem ipsum", 0.0, 19),
    ]
}

pub fn load_battery(path: &Path) -> Result<Vec<FilterSpec>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io("reading filter config", path, e))?;
    serde_json::from_str(&raw)
        .map_err(|e| Error::config(format!("filter config {}: {e}", path.display())))
}

/// Where word lists come from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WordListSource {
    /// The tiny placeholder lists compiled into the crate.
    Placeholder,
    /// `<dir>/<name>.json` for each referenced list.
    Dir(PathBuf),
}

impl WordListSource {
    pub fn load(&self, name: &str) -> Result<WordList> {
        match self {
            WordListSource::Placeholder => {
                let raw = placeholder_wordlist(name)
                    .ok_or_else(|| Error::config(format!("no placeholder word list {name:?}")))?;
                let entries: Vec<String> =
                    serde_json::from_str(raw).map_err(|e| Error::config(e.to_string()))?;
                WordList::new(name, entries)
            }
            WordListSource::Dir(dir) => WordList::load(&dir.join(format!("{name}.json"))),
        }
    }
}

/// Outcome of the battery for one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterVerdict {
    pub doc_id: DocId,
    pub kept: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub removed_by: Option<String>,
    /// The statistic that crossed the threshold, for removed documents.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measured_value: Option<f64>,
}

/// A validated battery with its word lists loaded, sorted by priority.
#[derive(Debug, Clone)]
pub struct FilterEngine {
    filters: Vec<FilterSpec>,
    wordlists: BTreeMap<String, WordList>,
}

/// Statistics bundle with every pattern and word-list measurement the
/// battery uses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StatsBundle {
    #[serde(flatten)]
    pub base: DocumentStats,
    pub pattern_counts: BTreeMap<String, usize>,
    pub pattern_fractions: BTreeMap<String, f64>,
    pub wordlist_counts: BTreeMap<String, usize>,
    pub wordlist_fractions: BTreeMap<String, f64>,
}

impl FilterEngine {
    pub fn new(mut filters: Vec<FilterSpec>, source: &WordListSource) -> Result<Self> {
        let mut priorities = HashSet::new();
        let mut ids = HashSet::new();
        for f in &filters {
            if !(f.threshold.is_finite() && f.threshold >= 0.0) {
                return Err(Error::config(format!(
                    "filter {}: threshold must be finite and non-negative",
                    f.filter_id
                )));
            }
            if !priorities.insert(f.priority) {
                return Err(Error::config(format!(
                    "filter {}: priority {} is not unique",
                    f.filter_id, f.priority
                )));
            }
            if !ids.insert(f.filter_id.as_str()) {
                return Err(Error::config(format!(
                    "duplicate filter id {:?}",
                    f.filter_id
                )));
            }
            let has_pattern = f.pattern.as_deref().is_some_and(|p| !p.is_empty());
            if f.kind.needs_pattern() != has_pattern {
                return Err(Error::config(format!(
                    "filter {}: pattern operand {}",
                    f.filter_id,
                    if has_pattern {
                        "not allowed"
                    } else {
                        "required"
                    }
                )));
            }
            if f.kind.needs_wordlist() != f.wordlist.is_some() {
                return Err(Error::config(format!(
                    "filter {}: word-list operand {}",
                    f.filter_id,
                    if f.wordlist.is_some() {
                        "not allowed"
                    } else {
                        "required"
                    }
                )));
            }
        }
        let mut wordlists = BTreeMap::new();
        for name in filters.iter().filter_map(|f| f.wordlist.as_ref()) {
            if !wordlists.contains_key(name) {
                wordlists.insert(name.clone(), source.load(name)?);
            }
        }
        filters.sort_by_key(|f| f.priority);
        Ok(FilterEngine { filters, wordlists })
    }

    pub fn filters(&self) -> &[FilterSpec] {
        &self.filters
    }

    pub fn wordlist(&self, name: &str) -> Option<&WordList> {
        self.wordlists.get(name)
    }

    /// Every statistic the battery can measure on `text`.
    pub fn document_stats(&self, text: &str) -> StatsBundle {
        let base = DocumentStats::compute(text);
        let tokens = word_tokens(text);
        let mut bundle = StatsBundle {
            pattern_counts: BTreeMap::new(),
            pattern_fractions: BTreeMap::new(),
            wordlist_counts: BTreeMap::new(),
            wordlist_fractions: BTreeMap::new(),
            base,
        };
        for p in self.filters.iter().filter_map(|f| f.pattern.as_ref()) {
            bundle
                .pattern_counts
                .insert(p.clone(), pattern_count(text, p));
            bundle.pattern_fractions.insert(
                p.clone(),
                pattern_fraction(text, bundle.base.char_length, p),
            );
        }
        for (name, list) in &self.wordlists {
            let hits = list.hits_in_tokens(&tokens);
            bundle.wordlist_counts.insert(name.clone(), hits.count);
            bundle
                .wordlist_fractions
                .insert(name.clone(), words_fraction(hits, bundle.base.word_count));
        }
        bundle
    }

    /// Statistic `filter` compares against its threshold.
    pub fn measure(&self, filter: &FilterSpec, text: &str, stats: &DocumentStats) -> f64 {
        match filter.kind {
            FilterKind::MinLength => stats.char_length as f64,
            FilterKind::MaxMeanWordLength | FilterKind::MinMeanWordLength => stats.mean_word_length,
            FilterKind::MaxFractionNonAlphanumeric => stats.fraction_non_alphanumeric,
            FilterKind::MaxFractionNumerical => stats.fraction_numerical,
            FilterKind::MaxPiiItemsCount => stats.pii_items_count as f64,
            FilterKind::MaxRepeatedSubstrings => stats.max_repeated_line_count as f64,
            FilterKind::MaxCountPattern => {
                pattern_count(text, filter.pattern.as_deref().unwrap_or_default()) as f64
            }
            FilterKind::MaxFractionPattern => pattern_fraction(
                text,
                stats.char_length,
                filter.pattern.as_deref().unwrap_or_default(),
            ),
            FilterKind::MaxCountWordlist | FilterKind::MaxFractionWordlist => {
                let hits = filter
                    .wordlist
                    .as_ref()
                    .and_then(|n| self.wordlists.get(n))
                    .map(|l| l.hits(text))
                    .unwrap_or_default();
                if filter.kind == FilterKind::MaxCountWordlist {
                    hits.count as f64
                } else {
                    words_fraction(hits, stats.word_count)
                }
            }
        }
    }

    /// Evaluates one text against the battery; returns the first violated
    /// filter and its measured value.
    pub fn first_violation(&self, text: &str) -> Option<(&FilterSpec, f64)> {
        let stats = DocumentStats::compute(text);
        self.filters.iter().find_map(|f| {
            let v = self.measure(f, text, &stats);
            f.violated_by(v).then_some((f, v))
        })
    }

    /// Every filter `text` violates, in priority order.
    pub fn all_violations(&self, text: &str) -> Vec<&FilterSpec> {
        let stats = DocumentStats::compute(text);
        self.filters
            .iter()
            .filter(|f| f.violated_by(self.measure(f, text, &stats)))
            .collect()
    }

    pub fn apply(&self, doc: &DocumentRecord, registry: &Registry) -> Result<FilterVerdict> {
        let exempt = registry.require(doc.source())?.filter_exempt;
        let violation = if exempt {
            None
        } else {
            self.first_violation(doc.text())
        };
        Ok(match violation {
            Some((f, v)) => FilterVerdict {
                doc_id: doc.id().clone(),
                kept: false,
                removed_by: Some(f.filter_id.clone()),
                measured_value: Some(v),
            },
            None => FilterVerdict {
                doc_id: doc.id().clone(),
                kept: true,
                removed_by: None,
                measured_value: None,
            },
        })
    }
}

fn words_fraction(hits: WordListHits, word_count: usize) -> f64 {
    if word_count == 0 {
        0.0
    } else {
        hits.matched_words as f64 / word_count as f64
    }
}
