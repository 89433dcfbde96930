use std::collections::HashMap;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Splits text into lowercase runs of word characters (alphanumerics and `_`).
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !(c.is_alphanumeric() || c == '_'))
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Case-insensitive whole-word phrase list.
///
/// An entry may span several words; it matches a run of consecutive word
/// tokens in the text. Matching is greedy (longest entry first) and
/// non-overlapping, scanning left to right.
#[derive(Debug, Clone)]
pub struct WordList {
    name: String,
    len: usize,
    // first token -> token sequences, longest first
    index: HashMap<String, Vec<Vec<String>>>,
}

/// Matches of a word list in one document.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct WordListHits {
    /// Number of entry occurrences.
    pub count: usize,
    /// Word tokens covered by those occurrences.
    pub matched_words: usize,
}

impl WordList {
    pub fn new<I, S>(name: impl Into<String>, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let name = name.into();
        let mut index: HashMap<String, Vec<Vec<String>>> = HashMap::new();
        let mut len = 0;
        for entry in entries {
            let tokens = word_tokens(entry.as_ref());
            let Some(first) = tokens.first().cloned() else {
                return Err(Error::config(format!(
                    "word list {name}: entry {:?} has no word characters",
                    entry.as_ref()
                )));
            };
            let bucket = index.entry(first).or_default();
            if !bucket.contains(&tokens) {
                bucket.push(tokens);
                len += 1;
            }
        }
        if len == 0 {
            return Err(Error::config(format!("word list {name} is empty")));
        }
        for seqs in index.values_mut() {
            seqs.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        }
        Ok(WordList { name, len, index })
    }

    /// Loads a JSON array of strings. The list is named after the file stem.
    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("word list {}: {e}", path.display())))?;
        let entries: Vec<String> = serde_json::from_str(&raw)
            .map_err(|e| Error::config(format!("word list {}: {e}", path.display())))?;
        let name = path
            .file_stem()
            .and_then(|s| s.to_str())
            .unwrap_or_default()
            .to_string();
        WordList::new(name, entries)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn hits(&self, text: &str) -> WordListHits {
        self.hits_in_tokens(&word_tokens(text))
    }

    pub fn hits_in_tokens(&self, tokens: &[String]) -> WordListHits {
        let mut hits = WordListHits::default();
        let mut i = 0;
        while i < tokens.len() {
            let matched = self.index.get(&tokens[i]).and_then(|seqs| {
                seqs.iter()
                    .find(|seq| tokens[i..].starts_with(seq))
                    .map(Vec::len)
            });
            match matched {
                Some(n) => {
                    hits.count += 1;
                    hits.matched_words += n;
                    i += n;
                }
                None => i += 1,
            }
        }
        hits
    }
}
