//! Tokenization, sentence splitting and vocabulary construction.
//!
//! Noise removal rules: whitespace-delimited chunks that look like URLs or
//! e-mail addresses are dropped whole; everything else is split into runs of
//! alphanumeric characters, keeping hyphens only between two alphanumerics.
//! Tokens are lowercased and filtered by character length.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::ops::Range;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifies the tokenization rules. Stored in corpus headers so that token
/// indices in gold spans stay meaningful.
pub const TOKENIZER_VERSION: &str = "rfd-tok-1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    /// Minimum token length in characters.
    pub min_len: usize,
    /// Maximum token length in characters.
    pub max_len: usize,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            min_len: 2,
            max_len: 25,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    /// Byte range of the token in the source text.
    pub span: Range<usize>,
}

fn is_url_or_email(chunk: &str) -> bool {
    let lower = chunk
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    if lower.starts_with("http://") || lower.starts_with("https://") || lower.starts_with("www.")
    {
        return true;
    }
    if lower.contains("://") {
        return true;
    }
    match lower.find('@') {
        Some(at) => {
            let domain = &lower[at + 1..];
            at > 0 && domain.contains('.') && domain.chars().next().is_some_and(char::is_alphanumeric)
        }
        None => false,
    }
}

pub fn tokenize(text: &str, config: &TokenizerConfig) -> Vec<Token> {
    let mut out = Vec::new();
    let mut offset = 0;
    for chunk in text.split_inclusive(char::is_whitespace) {
        let start = offset;
        offset += chunk.len();
        let trimmed = chunk.trim_end();
        if trimmed.is_empty() || is_url_or_email(trimmed) {
            continue;
        }
        scan_chunk(trimmed, start, config, &mut out);
    }
    out
}

fn scan_chunk(chunk: &str, base: usize, config: &TokenizerConfig, out: &mut Vec<Token>) {
    let chars: Vec<(usize, char)> = chunk.char_indices().collect();
    let mut i = 0;
    while i < chars.len() {
        if !chars[i].1.is_alphanumeric() {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        loop {
            if end < chars.len() && chars[end].1.is_alphanumeric() {
                end += 1;
            } else if end + 1 < chars.len()
                && chars[end].1 == '-'
                && chars[end + 1].1.is_alphanumeric()
            {
                end += 2;
            } else {
                break;
            }
        }
        let byte_start = chars[start].0;
        let byte_end = if end < chars.len() {
            chars[end].0
        } else {
            chunk.len()
        };
        let raw = &chunk[byte_start..byte_end];
        let n_chars = end - start;
        if n_chars >= config.min_len && n_chars <= config.max_len {
            out.push(Token {
                surface: raw.to_lowercase(),
                span: base + byte_start..base + byte_end,
            });
        }
        i = end;
    }
}

/// Convenience: token surfaces only.
pub fn tokenize_surfaces(text: &str, config: &TokenizerConfig) -> Vec<String> {
    tokenize(text, config)
        .into_iter()
        .map(|t| t.surface)
        .collect()
}

const ABBREVIATIONS: &[&str] = &[
    "u.s.", "u.k.", "u.n.", "e.u.", "mr.", "mrs.", "ms.", "dr.", "prof.", "sen.", "rep.", "gov.",
    "gen.", "col.", "lt.", "sgt.", "st.", "jr.", "sr.", "inc.", "corp.", "ltd.", "co.", "vs.",
    "e.g.", "i.e.", "etc.", "no.", "jan.", "feb.", "mar.", "apr.", "aug.", "sept.", "oct.",
    "nov.", "dec.",
];

/// Rule-based sentence splitter: break after `.`, `!` or `?` (optionally
/// followed by closing quotes or brackets) when the next non-space character
/// is uppercase or a digit, unless the word before the break is a known
/// abbreviation.
pub fn split_sentences(text: &str) -> Vec<String> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut sentences = Vec::new();
    let mut sent_start = 0usize;
    let mut i = 0;
    while i < chars.len() {
        let (_, c) = chars[i];
        if matches!(c, '.' | '!' | '?') {
            let mut j = i + 1;
            while j < chars.len() && matches!(chars[j].1, '"' | '\'' | ')' | ']' | '”' | '’') {
                j += 1;
            }
            let end_byte = if j < chars.len() { chars[j].0 } else { text.len() };
            let mut k = j;
            let mut saw_space = false;
            while k < chars.len() && chars[k].1.is_whitespace() {
                saw_space = true;
                k += 1;
            }
            let next_ok = k < chars.len()
                && saw_space
                && (chars[k].1.is_uppercase() || chars[k].1.is_ascii_digit());
            if next_ok && !(c == '.' && ends_with_abbreviation(&text[sent_start..end_byte])) {
                push_trimmed(&mut sentences, &text[sent_start..end_byte]);
                sent_start = chars[k].0;
                i = k;
                continue;
            }
        }
        i += 1;
    }
    push_trimmed(&mut sentences, &text[sent_start..]);
    sentences
}

fn push_trimmed(out: &mut Vec<String>, s: &str) {
    let s = s.trim();
    if !s.is_empty() {
        out.push(s.to_string());
    }
}

fn ends_with_abbreviation(fragment: &str) -> bool {
    let last = fragment
        .split_whitespace()
        .last()
        .unwrap_or("")
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&last.as_str())
}

/// Token vocabulary with dense, frequency-sorted ids.
///
/// Ids run `0..len()`; [`Vocabulary::oov_id`] (== `len()`) is reserved for
/// out-of-vocabulary tokens.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    freqs: Vec<u64>,
    #[serde(skip)]
    index: HashMap<String, usize>,
    total_count: u64,
}

impl Vocabulary {
    /// Build from `(token, frequency)` pairs. Sorts by frequency descending
    /// with lexicographic tie-breaking.
    pub fn from_counts(counts: impl IntoIterator<Item = (String, u64)>) -> Self {
        let mut entries: Vec<(String, u64)> = counts.into_iter().collect();
        entries.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
        let total_count = entries.iter().map(|e| e.1).sum();
        let (tokens, freqs): (Vec<_>, Vec<_>) = entries.into_iter().unzip();
        let mut vocab = Self {
            tokens,
            freqs,
            index: HashMap::new(),
            total_count,
        };
        vocab.reindex();
        vocab
    }

    fn reindex(&mut self) {
        self.index = self
            .tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn oov_id(&self) -> usize {
        self.tokens.len()
    }

    pub fn get(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn id_or_oov(&self, token: &str) -> usize {
        self.get(token).unwrap_or(self.oov_id())
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn freq(&self, id: usize) -> u64 {
        self.freqs[id]
    }

    pub fn freqs(&self) -> &[u64] {
        &self.freqs
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Sum of frequencies of in-vocabulary tokens.
    pub fn total_count(&self) -> u64 {
        self.total_count
    }

    /// Writes one `token frequency` pair per line.
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        for (t, f) in self.tokens.iter().zip(&self.freqs) {
            writeln!(w, "{t} {f}").map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut counts = Vec::new();
        for (n, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(tok), Some(freq), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(Error::Parse {
                    line: n + 1,
                    message: "expected `token frequency`".into(),
                });
            };
            let freq = freq.parse::<u64>().map_err(|e| Error::Parse {
                line: n + 1,
                message: e.to_string(),
            })?;
            counts.push((tok.to_string(), freq));
        }
        Ok(Self::from_counts(counts))
    }

    pub(crate) fn restore_index(&mut self) {
        if self.index.len() != self.tokens.len() {
            self.reindex();
        }
    }
}

/// Count tokens across units and keep those with frequency >= `min_count`.
pub fn build_vocab<S: AsRef<str>>(units: &[Vec<S>], min_count: u64) -> Vocabulary {
    let min_count = min_count.max(1);
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for unit in units {
        for tok in unit {
            *counts.entry(tok.as_ref()).or_default() += 1;
        }
    }
    Vocabulary::from_counts(
        counts
            .into_iter()
            .filter(|&(_, c)| c >= min_count)
            .map(|(t, c)| (t.to_string(), c)),
    )
}
