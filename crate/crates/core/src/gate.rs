//! DocContainsAI keyword gate.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::textprep::{tokenize_surfaces, TokenizerConfig};
use crate::{Error, Result};

/// Single-token keywords plus multi-token phrases, all lowercased.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordSet {
    tokens: BTreeSet<String>,
    phrases: Vec<Vec<String>>,
}

impl KeywordSet {
    /// Build from raw entries; multi-word entries become phrases.
    pub fn new<S: AsRef<str>>(entries: &[S]) -> Result<Self> {
        let tok = TokenizerConfig {
            min_len: 1,
            ..Default::default()
        };
        let mut seqs: Vec<Vec<String>> = Vec::new();
        for e in entries {
            let seq = tokenize_surfaces(e.as_ref(), &tok);
            if seq.is_empty() {
                return Err(Error::config(format!(
                    "keyword {:?} has no tokens",
                    e.as_ref()
                )));
            }
            seqs.push(seq);
        }
        if seqs.is_empty() {
            return Err(Error::config("keyword set is empty"));
        }
        for (i, a) in seqs.iter().enumerate() {
            for b in &seqs[i + 1..] {
                if a.starts_with(b) || b.starts_with(a) {
                    return Err(Error::config(format!(
                        "keyword {:?} duplicates a prefix of {:?}",
                        a.join(" "),
                        b.join(" ")
                    )));
                }
            }
        }
        let mut tokens = BTreeSet::new();
        let mut phrases = Vec::new();
        for seq in seqs {
            if seq.len() == 1 {
                tokens.extend(seq);
            } else {
                phrases.push(seq);
            }
        }
        Ok(Self { tokens, phrases })
    }

    pub fn tokens(&self) -> &BTreeSet<String> {
        &self.tokens
    }

    pub fn phrases(&self) -> &[Vec<String>] {
        &self.phrases
    }

    pub fn contains_phrase(&self, phrase: &str) -> bool {
        let words: Vec<&str> = phrase.split_whitespace().collect();
        match words.as_slice() {
            [single] => self.tokens.contains(*single),
            _ => self.phrases.iter().any(|p| p.iter().eq(words.iter())),
        }
    }

    /// Entries as strings, phrases space-joined.
    pub fn entries(&self) -> Vec<String> {
        self.tokens
            .iter()
            .cloned()
            .chain(self.phrases.iter().map(|p| p.join(" ")))
            .collect()
    }

    /// Matches over one token sequence as `(start, end, keyword)`.
    pub fn find_matches(&self, tokens: &[String]) -> Vec<(usize, usize, String)> {
        let mut out = Vec::new();
        for (i, t) in tokens.iter().enumerate() {
            if self.tokens.contains(t) {
                out.push((i, i + 1, t.clone()));
            }
            for p in &self.phrases {
                if tokens[i..].starts_with(p) {
                    out.push((i, i + p.len(), p.join(" ")));
                }
            }
        }
        out
    }
}

pub fn default_keywords() -> KeywordSet {
    KeywordSet::new(&[
        "ai",
        "artificial intelligence",
        "machine learning",
        "deep learning",
        "neural network",
        "neural networks",
    ])
    .expect("default keywords are valid")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordMatch {
    pub paragraph: usize,
    pub start_token: usize,
    pub end_token: usize,
    pub keyword: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateResult {
    pub contains_ai: bool,
    pub matches: Vec<KeywordMatch>,
}

/// True iff any keyword token or phrase occurs in any paragraph.
pub fn contains_ai(doc: &Document, keywords: &KeywordSet, config: &TokenizerConfig) -> GateResult {
    let mut matches = Vec::new();
    for p in &doc.paragraphs {
        let tokens = p.tokens(config);
        for (start, end, keyword) in keywords.find_matches(&tokens) {
            matches.push(KeywordMatch {
                paragraph: p.index,
                start_token: start,
                end_token: end,
                keyword,
            });
        }
    }
    GateResult {
        contains_ai: !matches.is_empty(),
        matches,
    }
}
