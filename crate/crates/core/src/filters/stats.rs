use std::collections::HashMap;

use serde::Serialize;

use super::pii;

/// Pattern-independent document statistics.
///
/// Character fractions are over non-whitespace characters; a document with
/// none (or with no words) reports zeros.
#[derive(Debug, Clone, PartialEq, Serialize, Default)]
pub struct DocumentStats {
    pub char_length: usize,
    pub word_count: usize,
    pub mean_word_length: f64,
    pub fraction_non_alphanumeric: f64,
    pub fraction_numerical: f64,
    pub pii_items_count: usize,
    pub max_repeated_line_count: usize,
}

impl DocumentStats {
    pub fn compute(text: &str) -> Self {
        let mut char_length = 0usize;
        let mut non_ws = 0usize;
        let mut non_alnum = 0usize;
        let mut numeric = 0usize;
        for ch in text.chars() {
            char_length += 1;
            if ch.is_whitespace() {
                continue;
            }
            non_ws += 1;
            if !ch.is_alphanumeric() {
                non_alnum += 1;
            }
            if ch.is_numeric() {
                numeric += 1;
            }
        }

        let mut word_count = 0usize;
        let mut word_chars = 0usize;
        for w in text.split_whitespace() {
            word_count += 1;
            word_chars += w.chars().count();
        }

        let ratio = |num: usize, den: usize| {
            if den == 0 {
                0.0
            } else {
                num as f64 / den as f64
            }
        };
        DocumentStats {
            char_length,
            word_count,
            mean_word_length: ratio(word_chars, word_count),
            fraction_non_alphanumeric: ratio(non_alnum, non_ws),
            fraction_numerical: ratio(numeric, non_ws),
            pii_items_count: pii::count_pii(text),
            max_repeated_line_count: max_repeated_line_count(text),
        }
    }
}

/// Occurrences of the most frequent non-empty (trimmed) line.
pub fn max_repeated_line_count(text: &str) -> usize {
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for line in text.split('\n') {
        let line = line.trim();
        if !line.is_empty() {
            *counts.entry(line).or_default() += 1;
        }
    }
    counts.into_values().max().unwrap_or(0)
}

/// Non-overlapping, case-sensitive occurrences of a literal pattern.
pub fn pattern_count(text: &str, pattern: &str) -> usize {
    if pattern.is_empty() {
        return 0;
    }
    text.matches(pattern).count()
}

/// Share of the document's characters covered by occurrences of `pattern`.
pub fn pattern_fraction(text: &str, char_length: usize, pattern: &str) -> f64 {
    if char_length == 0 {
        return 0.0;
    }
    let covered = pattern_count(text, pattern) * pattern.chars().count();
    covered as f64 / char_length as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_counted_example() {
        let s = DocumentStats::compute("ab 12");
        assert_eq!(s.fraction_numerical, 0.5);
        assert_eq!(s.fraction_non_alphanumeric, 0.0);
        assert_eq!(s.word_count, 2);
        assert_eq!(s.mean_word_length, 2.0);
        assert_eq!(s.char_length, 5);
    }

    #[test]
    fn empty_document_is_all_zero() {
        assert_eq!(DocumentStats::compute(""), DocumentStats::default());
        let ws = DocumentStats::compute(" \n\t ");
        assert_eq!(ws.word_count, 0);
        assert_eq!(ws.mean_word_length, 0.0);
        assert_eq!(ws.fraction_numerical, 0.0);
    }

    #[test]
    fn pattern_counts() {
        let t = "see http://x.com and http://y.com";
        assert_eq!(pattern_count(t, "http://"), 2);
        assert_eq!(pattern_count("aaaa", "aa"), 2);
        assert_eq!(pattern_count("Lorem Ipsum", "lorem ipsum"), 0);
        let f = pattern_fraction(t, t.chars().count(), "http://");
        assert!((f - 14.0 / 33.0).abs() < 1e-12);
    }

    #[test]
    fn repeated_lines() {
        assert_eq!(max_repeated_line_count("a\nb\n a \n\n\na"), 3);
        assert_eq!(max_repeated_line_count("\n\n"), 0);
    }
}
