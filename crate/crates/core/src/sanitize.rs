//! Substring replacement that collapses pathological character runs.
//!
//! Rules are data: an ordered list of `{rule_id, pattern, replacement}`
//! entries. A pass applies every rule in order, each globally over the
//! current text; passes repeat until none fires, so the output is always a
//! fixed point of the rule set.

use std::fs;
use std::path::Path;

use regex::{NoExpand, Regex};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on passes; every shipped rule strictly shortens the text so
/// this is never reached with the defaults.
const MAX_PASSES: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuleSpec {
    pub rule_id: String,
    pub pattern: String,
    pub replacement: String,
}

#[derive(Debug, Clone)]
pub struct ReplacementRule {
    spec: RuleSpec,
    regex: Regex,
}

impl ReplacementRule {
    pub fn new(spec: RuleSpec) -> Result<Self> {
        let regex = Regex::new(&spec.pattern)
            .map_err(|e| Error::config(format!("rule {}: {e}", spec.rule_id)))?;
        if regex.is_match("") {
            return Err(Error::config(format!(
                "rule {} matches the empty string",
                spec.rule_id
            )));
        }
        Ok(ReplacementRule { spec, regex })
    }

    pub fn id(&self) -> &str {
        &self.spec.rule_id
    }

    pub fn spec(&self) -> &RuleSpec {
        &self.spec
    }
}

#[derive(Debug, Clone)]
pub struct Sanitizer {
    rules: Vec<ReplacementRule>,
}

/// Text after sanitizing plus how often each rule fired, in rule order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sanitized {
    pub text: String,
    pub counts: Vec<u64>,
}

impl Sanitizer {
    pub fn new(specs: Vec<RuleSpec>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        let mut rules = Vec::with_capacity(specs.len());
        for spec in specs {
            if !seen.insert(spec.rule_id.clone()) {
                return Err(Error::config(format!(
                    "duplicate rule id {:?}",
                    spec.rule_id
                )));
            }
            rules.push(ReplacementRule::new(spec)?);
        }
        Ok(Sanitizer { rules })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read_to_string(path).map_err(|e| Error::io("reading rules", path, e))?;
        let specs: Vec<RuleSpec> = serde_json::from_str(&raw)
            .map_err(|e| Error::config(format!("rule file {}: {e}", path.display())))?;
        Sanitizer::new(specs)
    }

    pub fn rules(&self) -> &[ReplacementRule] {
        &self.rules
    }

    pub fn specs(&self) -> Vec<RuleSpec> {
        self.rules.iter().map(|r| r.spec.clone()).collect()
    }

    pub fn sanitize(&self, text: &str) -> Sanitized {
        let mut counts = vec![0u64; self.rules.len()];
        let mut current = text.to_string();
        for _ in 0..MAX_PASSES {
            let mut fired = false;
            for (rule, count) in self.rules.iter().zip(counts.iter_mut()) {
                let n = rule.regex.find_iter(&current).count();
                if n == 0 {
                    continue;
                }
                let replaced = rule
                    .regex
                    .replace_all(&current, NoExpand(&rule.spec.replacement))
                    .into_owned();
                if replaced != current {
                    *count += n as u64;
                    fired = true;
                    current = replaced;
                }
            }
            if !fired {
                break;
            }
        }
        Sanitized {
            text: current,
            counts,
        }
    }
}

impl Default for Sanitizer {
    fn default() -> Self {
        Sanitizer::new(default_rules()).expect("default rules compile")
    }
}

/// Shipped rule set. Runs of three or more of a single formatting character
/// collapse to one; runs of four or more full stops collapse to an ellipsis;
/// three or more repeats of a two-character punctuation motif collapse to
/// one motif. "--" and "..." survive.
pub fn default_rules() -> Vec<RuleSpec> {
    let mut rules = Vec::new();
    let mut push = |id: &str, pattern: &str, replacement: &str| {
        rules.push(RuleSpec {
            rule_id: id.to_string(),
            pattern: pattern.to_string(),
            replacement: replacement.to_string(),
        })
    };
    for (id, motif) in [
        ("dash_equals", "-="),
        ("equals_dash", "=-"),
        ("star_dash", "*-"),
        ("dash_star", "-*"),
        ("tilde_dash", "~-"),
        ("dash_tilde", "-~"),
        ("underscore_dash", "_-"),
        ("dash_underscore", "-_"),
    ] {
        push(
            &format!("pair_{id}"),
            &format!("(?:{}){{3,}}", regex::escape(motif)),
            motif,
        );
    }
    push("linebreaks", r"\n{3,}", "\n");
    push("carriage_returns", r"\r{3,}", "\r");
    push("crlf", r"(?:\r\n){3,}", "\r\n");
    push("tabs", r"\t{3,}", "\t");
    push("nbsp", "\u{a0}{3,}", "\u{a0}");
    push("dashes", r"-{3,}", "-");
    push("full_stops", r"\.{4,}", "...");
    for (id, ch) in [
        ("underscores", '_'),
        ("equals", '='),
        ("asterisks", '*'),
        ("tildes", '~'),
        ("hashes", '#'),
        ("pluses", '+'),
        ("exclamations", '!'),
        ("questions", '?'),
        ("commas", ','),
        ("semicolons", ';'),
        ("colons", ':'),
        ("pipes", '|'),
        ("backslashes", '\\'),
        ("carets", '^'),
        ("bullets", '\u{2022}'),
        ("em_dashes", '\u{2014}'),
    ] {
        let escaped = regex::escape(&ch.to_string());
        push(id, &format!("{escaped}{{3,}}"), &ch.to_string());
    }
    rules
}
