//! Text normalization into the training-data schema.
//!
//! Usernames, URLs, e-mail addresses, phone numbers and currency symbols are
//! replaced by bracketed tokens, non-ASCII letters are transliterated, and
//! casing and punctuation are left as they are.

use std::collections::{BTreeMap, HashSet};
use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::{Regex, RegexBuilder};
use serde::{Deserialize, Serialize};
use unicode_normalization::char::is_combining_mark;
use unicode_normalization::UnicodeNormalization;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenMap {
    pub username: String,
    pub url: String,
    pub email: String,
    pub phone: String,
    pub currency: String,
}

impl Default for TokenMap {
    fn default() -> Self {
        TokenMap {
            username: "[USER]".into(),
            url: "[URL]".into(),
            email: "[EMAIL]".into(),
            phone: "[PHONE]".into(),
            currency: "[CUR]".into(),
        }
    }
}

impl TokenMap {
    fn in_precedence_order(&self) -> [&str; 5] {
        [
            &self.url,
            &self.email,
            &self.username,
            &self.phone,
            &self.currency,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transliteration {
    #[default]
    DecomposeStrip,
    Off,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct NormConfig {
    pub tokens: TokenMap,
    pub transliteration: Transliteration,
    /// word → replacement candidates, matched case-insensitively on whole words.
    pub substitutions: BTreeMap<String, Vec<String>>,
    pub substitution_seed: u64,
}

impl NormConfig {
    pub fn validate(&self) -> Result<()> {
        let tokens = self.tokens.in_precedence_order();
        let mut seen = HashSet::new();
        for t in tokens {
            if t.is_empty() || t.chars().any(char::is_whitespace) {
                return Err(Error::InvalidNormConfig(format!(
                    "token `{t}` must be non-empty without whitespace"
                )));
            }
            if !seen.insert(t) {
                return Err(Error::InvalidNormConfig(format!("token `{t}` repeated")));
            }
            if replace_patterns(t, &self.tokens) != t {
                return Err(Error::InvalidNormConfig(format!(
                    "token `{t}` matches a replacement pattern"
                )));
            }
        }
        for (word, list) in &self.substitutions {
            if list.is_empty() {
                return Err(Error::InvalidNormConfig(format!(
                    "substitution list for `{word}` is empty"
                )));
            }
        }
        Ok(())
    }
}

struct Patterns {
    url: Regex,
    email: Regex,
    username: Regex,
    phone: Regex,
    currency: Regex,
}

fn patterns() -> &'static Patterns {
    static P: OnceLock<Patterns> = OnceLock::new();
    P.get_or_init(|| Patterns {
        url: Regex::new(r"(?:[A-Za-z][A-Za-z0-9+.\-]*://|www\.)\S+").unwrap(),
        email: Regex::new(r"[A-Za-z0-9._%+\-]+@[A-Za-z0-9\-]+(?:\.[A-Za-z0-9\-]+)*\.[A-Za-z]{2,}")
            .unwrap(),
        username: Regex::new(r"@\w+").unwrap(),
        phone: Regex::new(r"\+?\(?\d(?:[ \-.()]*\d){6,}").unwrap(),
        currency: Regex::new(r"[$£€¥]").unwrap(),
    })
}

const URL_TRAILING: &[char] = &['.', ',', '!', '?', ';', ':', '\'', '"', ')'];

/// Replace every pattern match by its token. Earlier categories win overlaps.
fn replace_patterns(text: &str, tokens: &TokenMap) -> String {
    let p = patterns();
    let surfaces = tokens.in_precedence_order();
    let regexes = [&p.url, &p.email, &p.username, &p.phone, &p.currency];

    // (start, end, category); claimed spans never overlap
    let mut claimed: Vec<(usize, usize, usize)> = Vec::new();
    for (cat, re) in regexes.iter().enumerate() {
        for m in re.find_iter(text) {
            let (start, mut end) = (m.start(), m.end());
            if cat == 0 {
                end = start + text[start..end].trim_end_matches(URL_TRAILING).len();
            }
            if claimed.iter().all(|&(s, e, _)| end <= s || start >= e) {
                claimed.push((start, end, cat));
            }
        }
    }
    claimed.sort_unstable();
    let mut out = String::with_capacity(text.len());
    let mut pos = 0;
    for (s, e, cat) in claimed {
        out.push_str(&text[pos..s]);
        out.push_str(surfaces[cat]);
        pos = e;
    }
    out.push_str(&text[pos..]);
    out
}

/// Letters and punctuation that have no compatibility decomposition but an
/// obvious ASCII spelling.
fn ascii_fold(c: char) -> Option<&'static str> {
    Some(match c {
        '\u{2018}' | '\u{2019}' | '\u{201A}' | '\u{201B}' | '\u{2032}' => "'",
        '\u{201C}' | '\u{201D}' | '\u{201E}' | '\u{201F}' | '\u{2033}' => "\"",
        '\u{2010}'..='\u{2015}' | '\u{2212}' => "-",
        'ß' => "ss",
        'æ' => "ae",
        'Æ' => "AE",
        'œ' => "oe",
        'Œ' => "OE",
        'ø' => "o",
        'Ø' => "O",
        'đ' => "d",
        'Đ' => "D",
        'ł' => "l",
        'Ł' => "L",
        'þ' => "th",
        'Þ' => "Th",
        'ð' => "d",
        'Ð' => "D",
        'ı' => "i",
        _ => return None,
    })
}

/// Compatibility decomposition with combining marks removed. Characters that
/// stay non-ASCII are kept for the later deletion pass (currency symbols must
/// survive until pattern replacement).
fn decompose(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for c in text.chars() {
        if c.is_ascii() {
            out.push(c);
        } else if let Some(s) = ascii_fold(c) {
            out.push_str(s);
        } else {
            out.extend(c.to_string().nfkd().filter(|&d| !is_combining_mark(d)));
        }
    }
    out
}

/// Normalize one text. Total and idempotent.
pub fn normalize(text: &str, cfg: &NormConfig) -> String {
    let strip = cfg.transliteration == Transliteration::DecomposeStrip;
    let mut current = if strip {
        decompose(text)
    } else {
        text.to_string()
    };
    // Deleting symbols can join digits or words into a new match, so repeat
    // until nothing changes. Valid tokens never match a pattern, so each
    // round strictly shrinks the untokenized text.
    for _ in 0..MAX_ROUNDS {
        let mut next = replace_patterns(&current, &cfg.tokens);
        if strip {
            next.retain(|c| c.is_ascii());
        }
        if next == current {
            return next;
        }
        current = next;
    }
    current
}

const MAX_ROUNDS: usize = 64;

fn substitution_regex(cfg: &NormConfig) -> Option<Regex> {
    if cfg.substitutions.is_empty() {
        return None;
    }
    let mut keys: Vec<&String> = cfg.substitutions.keys().collect();
    keys.sort_by(|a, b| b.len().cmp(&a.len()).then(a.cmp(b)));
    let alternation = keys
        .iter()
        .map(|k| regex::escape(k))
        .collect::<Vec<_>>()
        .join("|");
    Some(
        RegexBuilder::new(&format!(r"\b(?:{alternation})\b"))
            .case_insensitive(true)
            .build()
            .expect("escaped alternation compiles"),
    )
}

fn match_case(original: &str, replacement: &str) -> String {
    let leading_upper = original.chars().next().is_some_and(char::is_uppercase);
    if !leading_upper {
        return replacement.to_string();
    }
    let mut chars = replacement.chars();
    match chars.next() {
        Some(first) => first.to_uppercase().chain(chars).collect(),
        None => String::new(),
    }
}

/// Replace whole-word occurrences of substitution keys with a seeded choice
/// from their lists, keeping a leading capital.
pub fn substitute_lexical(text: &str, cfg: &NormConfig) -> String {
    substitute_lexical_seeded(text, cfg, cfg.substitution_seed)
}

pub fn substitute_lexical_seeded(text: &str, cfg: &NormConfig, seed: u64) -> String {
    let Some(re) = substitution_regex(cfg) else {
        return text.to_string();
    };
    let lookup: BTreeMap<String, &Vec<String>> = cfg
        .substitutions
        .iter()
        .map(|(k, v)| (k.to_lowercase(), v))
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    re.replace_all(text, |caps: &regex::Captures| {
        let word = &caps[0];
        let list = lookup[&word.to_lowercase()];
        let choice = &list[rng.gen_range(0..list.len())];
        match_case(word, choice)
    })
    .into_owned()
}
