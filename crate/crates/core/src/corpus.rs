//! Annotated documents, JSONL ingestion and synthetic corpus generation.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use log::warn;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::textprep::{tokenize_surfaces, TokenizerConfig, TOKENIZER_VERSION};
use crate::{seeded_rng, Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

/// A frame span as token indices into the paragraph's tokenization.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpanAnnotation {
    pub start_token: usize,
    /// Exclusive.
    pub end_token: usize,
    #[serde(default)]
    pub surface: String,
}

impl SpanAnnotation {
    pub fn new(start_token: usize, end_token: usize) -> Self {
        Self {
            start_token,
            end_token,
            surface: String::new(),
        }
    }

    pub fn with_surface(mut self, surface: impl Into<String>) -> Self {
        self.surface = surface.into();
        self
    }

    pub fn len(&self) -> usize {
        self.end_token.saturating_sub(self.start_token)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Paragraph {
    /// Position within the document; assigned on load.
    #[serde(skip)]
    pub index: usize,
    pub text: String,
    #[serde(
        rename = "par_contains_frame",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub gold_par_contains_frame: Option<bool>,
    #[serde(
        rename = "frame_spans",
        default,
        skip_serializing_if = "Vec::is_empty"
    )]
    pub gold_frame_spans: Vec<SpanAnnotation>,
}

impl Paragraph {
    pub fn new(index: usize, text: impl Into<String>) -> Self {
        Self {
            index,
            text: text.into(),
            gold_par_contains_frame: None,
            gold_frame_spans: Vec::new(),
        }
    }

    pub fn tokens(&self, config: &TokenizerConfig) -> Vec<String> {
        tokenize_surfaces(&self.text, config)
    }

    /// 0-1 encoding of gold spans over `n_tokens` positions.
    pub fn span_mask(&self, n_tokens: usize) -> Vec<u8> {
        let mut mask = vec![0u8; n_tokens];
        for s in &self.gold_frame_spans {
            for m in mask
                .iter_mut()
                .take(s.end_token.min(n_tokens))
                .skip(s.start_token)
            {
                *m = 1;
            }
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub text: String,
    #[serde(default)]
    pub paragraphs: Vec<Paragraph>,
    #[serde(
        rename = "doc_contains_ai",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub gold_doc_contains_ai: Option<bool>,
    #[serde(
        rename = "doc_contains_frame",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub gold_doc_contains_frame: Option<bool>,
}

impl Document {
    /// Document from flat text; paragraphs split on blank lines.
    pub fn from_text(id: impl Into<String>, source: impl Into<String>, text: &str) -> Self {
        let mut doc = Self {
            id: id.into(),
            source: source.into(),
            text: text.to_string(),
            paragraphs: Vec::new(),
            gold_doc_contains_ai: None,
            gold_doc_contains_frame: None,
        };
        doc.ensure_paragraphs();
        doc
    }

    fn ensure_paragraphs(&mut self) {
        if self.paragraphs.is_empty() && !self.text.trim().is_empty() {
            self.paragraphs = split_paragraphs(&self.text)
                .into_iter()
                .map(|p| Paragraph::new(0, p))
                .collect();
        }
        for (i, p) in self.paragraphs.iter_mut().enumerate() {
            p.index = i;
        }
    }

    /// Identifier of paragraph `index`, used to key external paragraph embeddings.
    pub fn paragraph_id(&self, index: usize) -> String {
        format!("{}#{}", self.id, index)
    }

    /// All paragraph tokens concatenated.
    pub fn tokens(&self, config: &TokenizerConfig) -> Vec<String> {
        self.paragraphs
            .iter()
            .flat_map(|p| p.tokens(config))
            .collect()
    }

    /// Checks the label hierarchy and span invariants.
    pub fn validate(&self, config: &TokenizerConfig) -> Result<()> {
        let fail = |message: String| Error::Validation {
            id: self.id.clone(),
            message,
        };
        if self.id.is_empty() {
            return Err(fail("empty id".into()));
        }
        if !self.text.trim().is_empty() && self.paragraphs.is_empty() {
            return Err(fail("text present but no paragraphs".into()));
        }
        if self.gold_doc_contains_frame == Some(true)
            && !self
                .paragraphs
                .iter()
                .any(|p| p.gold_par_contains_frame == Some(true))
        {
            return Err(fail(
                "doc_contains_frame is true but no paragraph contains a frame".into(),
            ));
        }
        for p in &self.paragraphs {
            let positive = p.gold_par_contains_frame == Some(true);
            if positive != !p.gold_frame_spans.is_empty() {
                return Err(fail(format!(
                    "paragraph {}: frame_spans must be non-empty iff par_contains_frame is true",
                    p.index
                )));
            }
            if p.gold_frame_spans.is_empty() {
                continue;
            }
            let n_tokens = p.tokens(config).len();
            let mut spans: Vec<&SpanAnnotation> = p.gold_frame_spans.iter().collect();
            spans.sort_by_key(|s| s.start_token);
            for s in &spans {
                if s.start_token >= s.end_token || s.end_token > n_tokens {
                    return Err(fail(format!(
                        "paragraph {}: span {}..{} outside token bounds 0..{}",
                        p.index, s.start_token, s.end_token, n_tokens
                    )));
                }
            }
            for w in spans.windows(2) {
                if w[1].start_token < w[0].end_token {
                    return Err(fail(format!("paragraph {}: overlapping spans", p.index)));
                }
            }
        }
        Ok(())
    }
}

/// Split flat text into paragraphs on blank lines.
pub fn split_paragraphs(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for line in text.lines() {
        if line.trim().is_empty() {
            if !current.is_empty() {
                out.push(current.join("\n"));
                current.clear();
            }
        } else {
            current.push(line.trim_end());
        }
    }
    if !current.is_empty() {
        out.push(current.join("\n"));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHeader {
    pub schema_version: u32,
    pub tokenizer_version: String,
}

impl Default for FileHeader {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            tokenizer_version: TOKENIZER_VERSION.to_string(),
        }
    }
}

/// Record skipped during lenient loading.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkippedRecord {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadedCorpus {
    pub documents: Vec<Document>,
    pub skipped: Vec<SkippedRecord>,
}

/// Load a JSONL corpus. The first non-blank line must be the header record.
///
/// In strict mode any malformed or invalid record aborts; otherwise such
/// records are logged, skipped and counted. Duplicate ids always abort.
pub fn load_corpus(path: &Path, strict: bool) -> Result<LoadedCorpus> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_corpus(BufReader::new(file), strict)
}

pub fn read_corpus<R: BufRead>(reader: R, strict: bool) -> Result<LoadedCorpus> {
    let tok_config = TokenizerConfig::default();
    let mut out = LoadedCorpus::default();
    let mut seen: HashSet<String> = HashSet::new();
    let mut header_seen = false;

    for (n, line) in reader.lines().enumerate() {
        let line_no = n + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if !header_seen {
            let value: serde_json::Value =
                serde_json::from_str(&line).map_err(|_| Error::MissingHeader)?;
            if value.get("schema_version").is_none() {
                return Err(Error::MissingHeader);
            }
            let header: FileHeader = serde_json::from_value(value).map_err(|e| Error::Parse {
                line: line_no,
                message: format!("bad header: {e}"),
            })?;
            if header.schema_version > SCHEMA_VERSION {
                return Err(Error::Version {
                    found: header.schema_version,
                    supported: SCHEMA_VERSION,
                });
            }
            if header.tokenizer_version != TOKENIZER_VERSION {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!(
                        "tokenizer version {:?} does not match {TOKENIZER_VERSION:?}",
                        header.tokenizer_version
                    ),
                });
            }
            header_seen = true;
            continue;
        }

        match parse_document(&line, line_no, &tok_config) {
            Ok(doc) => {
                if !seen.insert(doc.id.clone()) {
                    return Err(Error::DuplicateId(doc.id));
                }
                out.documents.push(doc);
            }
            Err(e) if strict => return Err(e),
            Err(e) => {
                warn!("skipping line {line_no}: {e}");
                out.skipped.push(SkippedRecord {
                    line: line_no,
                    reason: e.to_string(),
                });
            }
        }
    }
    if !header_seen {
        return Err(Error::MissingHeader);
    }
    Ok(out)
}

/// Parse and validate one document record; `line_no` is used in errors.
pub fn parse_document(line: &str, line_no: usize, config: &TokenizerConfig) -> Result<Document> {
    let mut doc = serde_json::from_str::<Document>(line).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })?;
    doc.ensure_paragraphs();
    doc.validate(config)?;
    Ok(doc)
}

/// True for the `schema_version` header record that opens corpus files.
pub fn is_header_line(line: &str) -> bool {
    serde_json::from_str::<serde_json::Value>(line)
        .is_ok_and(|v| v.get("schema_version").is_some() && v.get("id").is_none())
}

pub fn write_corpus<W: Write>(mut w: W, docs: &[Document]) -> Result<()> {
    serde_json::to_writer(&mut w, &FileHeader::default())?;
    writeln!(w)?;
    for doc in docs {
        serde_json::to_writer(&mut w, doc)?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_corpus(path: &Path, docs: &[Document]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_corpus(BufWriter::new(file), docs)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub yes: usize,
    pub no: usize,
}

impl ClassCounts {
    fn add(&mut self, label: Option<bool>) {
        match label {
            Some(true) => self.yes += 1,
            Some(false) => self.no += 1,
            None => {}
        }
    }

    pub fn total(&self) -> usize {
        self.yes + self.no
    }

    /// Majority over minority count; `None` when a class is empty.
    pub fn imbalance_ratio(&self) -> Option<f64> {
        let (lo, hi) = (self.yes.min(self.no), self.yes.max(self.no));
        (lo > 0).then(|| hi as f64 / lo as f64)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub doc_contains_ai: ClassCounts,
    pub doc_contains_frame: ClassCounts,
    pub par_contains_frame: ClassCounts,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub documents: usize,
    pub totals: LabelCounts,
    pub by_source: BTreeMap<String, LabelCounts>,
}

impl CorpusStats {
    pub fn doc_frame_ratio(&self) -> Option<f64> {
        self.totals.doc_contains_frame.imbalance_ratio()
    }

    pub fn par_frame_ratio(&self) -> Option<f64> {
        self.totals.par_contains_frame.imbalance_ratio()
    }
}

impl fmt::Display for CorpusStats {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ratio = |c: &ClassCounts| {
            c.imbalance_ratio()
                .map(|r| format!("{r:.2}:1"))
                .unwrap_or_else(|| "-".into())
        };
        writeln!(f, "documents: {}", self.documents)?;
        writeln!(
            f,
            "{:<20} {:<6} {:>10}  per source",
            "task", "class", "total"
        )?;
        let rows: [(&str, fn(&LabelCounts) -> ClassCounts); 3] = [
            ("DocContainsAI", |c| c.doc_contains_ai),
            ("DocContainsFrame", |c| c.doc_contains_frame),
            ("ParContainsFrame", |c| c.par_contains_frame),
        ];
        for (name, get) in rows {
            let total = get(&self.totals);
            for (class, pick) in [("Yes", true), ("No", false)] {
                let count = |c: ClassCounts| if pick { c.yes } else { c.no };
                let per: Vec<String> = self
                    .by_source
                    .iter()
                    .map(|(s, c)| format!("{s}={}", count(get(c))))
                    .collect();
                writeln!(
                    f,
                    "{:<20} {:<6} {:>10}  {}",
                    name,
                    class,
                    count(total),
                    per.join(" ")
                )?;
            }
            writeln!(f, "{:<20} ratio  {:>10}", name, ratio(&total))?;
        }
        Ok(())
    }
}

/// Per-class label totals; unlabeled records are not counted.
pub fn compute_stats(corpus: &[Document]) -> CorpusStats {
    let mut stats = CorpusStats {
        documents: corpus.len(),
        ..Default::default()
    };
    for doc in corpus {
        let per = stats.by_source.entry(doc.source.clone()).or_default();
        for counts in [&mut stats.totals, per] {
            counts.doc_contains_ai.add(doc.gold_doc_contains_ai);
            counts.doc_contains_frame.add(doc.gold_doc_contains_frame);
            for p in &doc.paragraphs {
                counts.par_contains_frame.add(p.gold_par_contains_frame);
            }
        }
    }
    stats
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    /// Number of distinct filler words.
    pub vocab_size: usize,
    pub docs: usize,
    /// Inclusive range of paragraphs per document.
    pub paragraphs: (usize, usize),
    /// Inclusive range of filler tokens per paragraph.
    pub paragraph_tokens: (usize, usize),
    pub frame_phrases: Vec<String>,
    /// Negative to positive document ratio for DocContainsFrame.
    pub imbalance_ratio: f64,
    /// Negative to positive paragraph ratio. When unset, `imbalance_ratio` is
    /// used, capped by how many paragraphs the positive documents hold.
    pub paragraph_imbalance_ratio: Option<f64>,
    /// Probability that a frame-free document still mentions an AI keyword.
    pub ai_keyword_rate: f64,
    pub ai_keywords: Vec<String>,
    /// Probability that a negative paragraph contains a lone word taken
    /// from a multi-word frame phrase.
    pub distractor_rate: f64,
    pub sources: Vec<String>,
}

pub fn default_frame_phrases() -> Vec<String> {
    [
        "arms race",
        "race for supremacy",
        "technological supremacy",
        "outpacing",
        "compete",
        "competition",
        "falling behind",
        "winning the race",
        "great power rivalry",
        "beats its rivals",
        "global dominance",
        "lead the world",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect()
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            vocab_size: 2000,
            docs: 140,
            paragraphs: (3, 8),
            paragraph_tokens: (20, 40),
            frame_phrases: default_frame_phrases(),
            imbalance_ratio: 13.0,
            paragraph_imbalance_ratio: None,
            ai_keyword_rate: 0.5,
            ai_keywords: vec![
                "ai".into(),
                "artificial intelligence".into(),
                "machine learning".into(),
            ],
            distractor_rate: 0.3,
            sources: vec![
                "reuters".into(),
                "defense-one".into(),
                "foreign-affairs".into(),
                "lexisnexis".into(),
            ],
        }
    }
}

const ONSETS: &[&str] = &[
    "b", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "tr", "st", "pl",
    "gr", "sh",
];
const NUCLEI: &[&str] = &["a", "e", "i", "o", "u", "ai", "ou", "ea"];

fn filler_vocabulary<R: Rng>(size: usize, reserved: &HashSet<String>, rng: &mut R) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut words = Vec::with_capacity(size);
    let mut attempts = 0usize;
    while words.len() < size {
        attempts += 1;
        let syllables = 2 + (attempts / (size * 50 + 1)).min(3) + rng.random_range(0..2);
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(ONSETS.choose(rng).unwrap());
            w.push_str(NUCLEI.choose(rng).unwrap());
        }
        if rng.random_bool(0.3) {
            w.push('n');
        }
        if !reserved.contains(&w) && seen.insert(w.clone()) {
            words.push(w);
        }
    }
    words
}

/// Render token lists as sentences and return the text plus spans for each
/// planted phrase. `plants` are `(position, phrase tokens)` with positions
/// referring to `filler` before insertion; later plants account for earlier ones.
pub fn build_paragraph(
    filler: &[String],
    plants: &[(usize, Vec<String>)],
) -> (Vec<String>, Vec<SpanAnnotation>) {
    let mut plants: Vec<&(usize, Vec<String>)> = plants.iter().collect();
    plants.sort_by_key(|p| p.0);
    let mut tokens = Vec::with_capacity(filler.len() + 8);
    let mut spans = Vec::new();
    let mut next = plants.into_iter().peekable();
    for pos in 0..=filler.len() {
        while let Some((_, phrase)) = next.next_if(|p| p.0 == pos) {
            let start = tokens.len();
            tokens.extend(phrase.iter().cloned());
            spans.push(SpanAnnotation::new(start, tokens.len()).with_surface(phrase.join(" ")));
        }
        if let Some(w) = filler.get(pos) {
            tokens.push(w.clone());
        }
    }
    (tokens, spans)
}

fn render_sentences<R: Rng>(tokens: &[String], rng: &mut R) -> String {
    let mut out = String::new();
    let mut i = 0;
    while i < tokens.len() {
        let len = rng.random_range(6..=14).min(tokens.len() - i);
        for (j, tok) in tokens[i..i + len].iter().enumerate() {
            if !out.is_empty() {
                out.push(' ');
            }
            if j == 0 {
                let mut chars = tok.chars();
                if let Some(c) = chars.next() {
                    out.extend(c.to_uppercase());
                    out.push_str(chars.as_str());
                }
            } else {
                out.push_str(tok);
            }
            if j + 1 < len && rng.random_bool(0.05) {
                out.push(',');
            }
        }
        out.push('.');
        i += len;
    }
    out
}

/// Generate a labelled corpus with planted frame phrases. Pure function of
/// `(config, seed)`.
pub fn synthesize_corpus(config: &SynthConfig, seed: u64) -> Result<Vec<Document>> {
    if !(config.imbalance_ratio >= 1.0) {
        return Err(Error::config("imbalance_ratio must be >= 1"));
    }
    let par_ratio = config
        .paragraph_imbalance_ratio
        .unwrap_or(config.imbalance_ratio);
    if !(par_ratio >= 1.0) {
        return Err(Error::config("paragraph_imbalance_ratio must be >= 1"));
    }
    let n_pos_docs = (config.docs as f64 / (config.imbalance_ratio + 1.0)).round() as usize;
    if n_pos_docs > 0 && config.frame_phrases.is_empty() {
        return Err(Error::config("frame phrase inventory is empty"));
    }
    let (pmin, pmax) = config.paragraphs;
    let (tmin, tmax) = config.paragraph_tokens;
    if pmin == 0 || pmin > pmax || tmin == 0 || tmin > tmax {
        return Err(Error::config("invalid paragraph or token ranges"));
    }
    if config.vocab_size == 0 {
        return Err(Error::config("vocab_size must be positive"));
    }

    let tok = TokenizerConfig::default();
    let phrases: Vec<Vec<String>> = config
        .frame_phrases
        .iter()
        .map(|p| tokenize_surfaces(p, &tok))
        .collect();
    if phrases.iter().any(Vec::is_empty) {
        return Err(Error::config("frame phrase tokenizes to nothing"));
    }
    let keywords: Vec<Vec<String>> = config
        .ai_keywords
        .iter()
        .map(|k| tokenize_surfaces(k, &tok))
        .filter(|k| !k.is_empty())
        .collect();
    let distractors: Vec<String> = phrases
        .iter()
        .filter(|p| p.len() > 1)
        .flatten()
        .cloned()
        .collect();
    let reserved: HashSet<String> = phrases.iter().chain(&keywords).flatten().cloned().collect();

    let mut rng = seeded_rng(seed);
    let filler = filler_vocabulary(config.vocab_size, &reserved, &mut rng);
    let zipf = WeightedIndex::new((0..filler.len()).map(|r| 1.0 / (r as f64 + 1.0)))
        .expect("positive weights");

    let mut order: Vec<usize> = (0..config.docs).collect();
    order.shuffle(&mut rng);
    let mut doc_positive = vec![false; config.docs];
    for &d in &order[..n_pos_docs] {
        doc_positive[d] = true;
    }
    let par_counts: Vec<usize> = (0..config.docs)
        .map(|_| rng.random_range(pmin..=pmax))
        .collect();
    let total_pars: usize = par_counts.iter().sum();
    let capacity: usize = (0..config.docs)
        .filter(|&d| doc_positive[d])
        .map(|d| par_counts[d])
        .sum();
    let mut n_pos_pars = ((total_pars as f64 / (par_ratio + 1.0)).round() as usize).max(n_pos_docs);
    if config.paragraph_imbalance_ratio.is_none() {
        n_pos_pars = n_pos_pars.min(capacity);
    }
    if n_pos_pars > capacity {
        return Err(Error::config(format!(
            "need {n_pos_pars} positive paragraphs but positive documents hold only {capacity}"
        )));
    }

    // Positive paragraph assignment: one per positive document, the rest spread uniformly.
    let mut par_positive: Vec<Vec<bool>> = par_counts.iter().map(|&n| vec![false; n]).collect();
    let mut free_slots = Vec::new();
    for d in 0..config.docs {
        if !doc_positive[d] {
            continue;
        }
        let first = rng.random_range(0..par_counts[d]);
        par_positive[d][first] = true;
        free_slots.extend((0..par_counts[d]).filter(|&p| p != first).map(|p| (d, p)));
    }
    free_slots.shuffle(&mut rng);
    for &(d, p) in free_slots.iter().take(n_pos_pars - n_pos_docs) {
        par_positive[d][p] = true;
    }

    let mut docs = Vec::with_capacity(config.docs);
    for d in 0..config.docs {
        let mentions_ai =
            !keywords.is_empty() && (doc_positive[d] || rng.random_bool(config.ai_keyword_rate));
        let ai_paragraph = rng.random_range(0..par_counts[d]);
        let mut paragraphs = Vec::with_capacity(par_counts[d]);
        for (p, &positive) in par_positive[d].iter().enumerate() {
            let len = rng.random_range(tmin..=tmax);
            let filler_tokens: Vec<String> = (0..len)
                .map(|_| filler[zipf.sample(&mut rng)].clone())
                .collect();
            let mut plants: Vec<(usize, Vec<String>)> = Vec::new();
            let mut frame_plants = 0;
            if positive {
                frame_plants = if rng.random_bool(0.2) { 2 } else { 1 };
                for _ in 0..frame_plants {
                    let phrase = phrases.choose(&mut rng).unwrap().clone();
                    plants.push((rng.random_range(0..=len), phrase));
                }
            } else if !distractors.is_empty() && rng.random_bool(config.distractor_rate) {
                let w = distractors.choose(&mut rng).unwrap().clone();
                plants.push((rng.random_range(0..=len), vec![w]));
            }
            if mentions_ai && p == ai_paragraph {
                let k = keywords.choose(&mut rng).unwrap().clone();
                plants.push((rng.random_range(0..=len), k));
            }
            // Keep frame plants first so positions are unique and ordered deterministically.
            let frame_keys: Vec<(usize, Vec<String>)> = plants[..frame_plants].to_vec();
            let (tokens, spans) = build_paragraph(&filler_tokens, &plants);
            let gold: Vec<SpanAnnotation> = spans
                .into_iter()
                .filter(|s| {
                    let toks: Vec<String> = tokens[s.start_token..s.end_token].to_vec();
                    frame_keys.iter().any(|(_, ph)| *ph == toks)
                })
                .collect();
            let gold = merge_touching(gold, &tokens);
            let text = render_sentences(&tokens, &mut rng);
            paragraphs.push(Paragraph {
                index: p,
                text,
                gold_par_contains_frame: Some(positive),
                gold_frame_spans: if positive { gold } else { Vec::new() },
            });
        }
        let text = paragraphs
            .iter()
            .map(|p| p.text.as_str())
            .collect::<Vec<_>>()
            .join("\n\n");
        let source = if config.sources.is_empty() {
            String::new()
        } else {
            config.sources[rng.random_range(0..config.sources.len())].clone()
        };
        docs.push(Document {
            id: format!("synth-{seed}-{d:05}"),
            source,
            text,
            paragraphs,
            gold_doc_contains_ai: Some(mentions_ai),
            gold_doc_contains_frame: Some(doc_positive[d]),
        });
    }
    Ok(docs)
}

/// Adjacent planted phrases become one span so annotated spans never touch.
fn merge_touching(mut spans: Vec<SpanAnnotation>, tokens: &[String]) -> Vec<SpanAnnotation> {
    spans.sort_by_key(|s| s.start_token);
    let mut out: Vec<SpanAnnotation> = Vec::with_capacity(spans.len());
    for s in spans {
        match out.last_mut() {
            Some(last) if s.start_token <= last.end_token => {
                last.end_token = last.end_token.max(s.end_token);
                last.surface = tokens[last.start_token..last.end_token].join(" ");
            }
            _ => out.push(s),
        }
    }
    out
}

/// Every distinct token in the corpus, in first-seen order.
pub fn corpus_tokens(docs: &[Document], config: &TokenizerConfig) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for doc in docs {
        for p in &doc.paragraphs {
            for t in p.tokens(config) {
                if seen.insert(t.clone()) {
                    out.push(t);
                }
            }
        }
    }
    out
}

/// Labelled paragraphs for the ParContainsFrame task.
#[derive(Debug, Clone, PartialEq)]
pub struct ParagraphExample {
    pub doc_id: String,
    pub index: usize,
    pub tokens: Vec<String>,
    pub label: bool,
    pub spans: Vec<SpanAnnotation>,
}

/// Collect labelled paragraphs. With `frame_docs_only`, only paragraphs of
/// documents whose DocContainsFrame label is true are used.
pub fn paragraph_examples(
    docs: &[Document],
    config: &TokenizerConfig,
    frame_docs_only: bool,
) -> Vec<ParagraphExample> {
    docs.iter()
        .filter(|d| !frame_docs_only || d.gold_doc_contains_frame == Some(true))
        .flat_map(|d| {
            d.paragraphs.iter().filter_map(move |p| {
                p.gold_par_contains_frame.map(|label| ParagraphExample {
                    doc_id: d.id.clone(),
                    index: p.index,
                    tokens: p.tokens(config),
                    label,
                    spans: p.gold_frame_spans.clone(),
                })
            })
        })
        .collect()
}
