//! Token-level detection of emails, phone numbers and IPv4 addresses.
//!
//! Each whitespace-delimited token, after trimming surrounding brackets,
//! quotes and sentence punctuation, counts as at most one PII item.

use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PiiKind {
    Email,
    Phone,
    Ipv4,
}

const TRIM: &[char] = &[
    '"', '\'', '(', ')', '[', ']', '<', '>', '{', '}', ',', ';', ':', '!', '?',
];

struct Patterns {
    email: Regex,
    ipv4: Regex,
    phone_chars: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| {
        let octet = r"(?:25[0-5]|2[0-4][0-9]|1[0-9][0-9]|[1-9]?[0-9])";
        Patterns {
            email: Regex::new(r"^[A-Za-z0-9._%+-]+@(?:[A-Za-z0-9-]+\.)+[A-Za-z]{2,}$").unwrap(),
            ipv4: Regex::new(&format!(r"^(?:{octet}\.){{3}}{octet}$")).unwrap(),
            phone_chars: Regex::new(r"^\+?[0-9().-]+$").unwrap(),
        }
    })
}

/// Strips wrapping punctuation from a token; a trailing full stop is
/// treated as sentence punctuation.
pub fn trim_token(token: &str) -> &str {
    token
        .trim_matches(TRIM)
        .trim_end_matches('.')
        .trim_matches(TRIM)
}

pub fn classify(token: &str) -> Option<PiiKind> {
    let p = patterns();
    let t = trim_token(token);
    if t.is_empty() {
        return None;
    }
    if p.ipv4.is_match(t) {
        return Some(PiiKind::Ipv4);
    }
    if p.email.is_match(t) {
        return Some(PiiKind::Email);
    }
    if p.phone_chars.is_match(t) {
        let digits = t.bytes().filter(u8::is_ascii_digit).count();
        let separated = t.starts_with('+') || t.contains(['-', '(', '.']);
        if (10..=15).contains(&digits) && separated {
            return Some(PiiKind::Phone);
        }
    }
    None
}

pub fn count_pii(text: &str) -> usize {
    text.split_whitespace()
        .filter(|t| classify(t).is_some())
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn recognizes_each_kind() {
        assert_eq!(classify("jane.doe@example.com"), Some(PiiKind::Email));
        assert_eq!(classify("<jane@mail.example.org>,"), Some(PiiKind::Email));
        assert_eq!(classify("192.168.0.1."), Some(PiiKind::Ipv4));
        assert_eq!(classify("+1-555-123-4567"), Some(PiiKind::Phone));
        assert_eq!(classify("(555)123-4567"), Some(PiiKind::Phone));
    }

    #[test]
    fn rejects_near_misses() {
        assert_eq!(classify("256.1.1.1"), None);
        assert_eq!(classify("01.2.3.4"), None);
        assert_eq!(classify("1.2.3"), None);
        assert_eq!(classify("user@localhost"), None);
        assert_eq!(classify("a@b.c"), None);
        assert_eq!(classify("1234567890"), None);
        assert_eq!(classify("555-1234"), None);
        assert_eq!(classify("..."), None);
    }

    #[test]
    fn counts_tokens() {
        let text = "mail a@b.io or call +44-20-7946-0958 from 10.0.0.1 now";
        assert_eq!(count_pii(text), 3);
        assert_eq!(count_pii(""), 0);
    }
}
