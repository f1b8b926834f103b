//! Hierarchical orchestration: keyword gate, document classifier, paragraph
//! model and span extraction, with bundle persistence and HTML reports.

mod bundle;
mod features;
mod report;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::attention::extract_frame_spans;
use crate::corpus::{Document, SpanAnnotation};
use crate::gate::{contains_ai, KeywordMatch};
use crate::Result;

pub use bundle::{
    load_bundle, save_bundle, BundleInfo, ParagraphStage, PipelineBundle, BUNDLE_MAGIC, BUNDLE_VERSION,
};
pub use features::{doc_dataset, paragraph_dataset, train_corpus_embeddings, FeatureSource, LabelledFeatures};
pub use report::{emit_report, render_report};

/// Wall-clock microseconds spent in each stage. Stages that did not run are absent.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub gate_us: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paragraph_us: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub span_us: Option<u64>,
    pub total_us: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParagraphResult {
    pub index: usize,
    pub par_contains_frame: bool,
    /// Probability, vote fraction or margin, depending on the model.
    pub score: f64,
    /// Attention weights over the paragraph's tokens (attention models only).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spans: Vec<SpanAnnotation>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineResult {
    pub doc_id: String,
    pub doc_contains_ai: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ai_keywords: Vec<KeywordMatch>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_contains_frame: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_frame_score: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub paragraphs: Option<Vec<ParagraphResult>>,
    pub timing: StageTiming,
}

impl PipelineResult {
    /// Downstream fields are absent whenever an upstream stage said No.
    pub fn respects_short_circuit(&self) -> bool {
        let frame_ok = self.doc_contains_ai
            || (self.doc_contains_frame.is_none() && self.doc_frame_score.is_none());
        let par_ok = self.doc_contains_frame == Some(true) || self.paragraphs.is_none();
        let spans_ok = self.paragraphs.iter().flatten().all(|p| p.par_contains_frame || p.spans.is_empty());
        frame_ok && par_ok && spans_ok
    }

    /// Copy with timings zeroed, for comparing predictions across runs.
    pub fn without_timing(&self) -> Self {
        Self {
            timing: StageTiming::default(),
            ..self.clone()
        }
    }

    pub fn flagged_paragraphs(&self) -> impl Iterator<Item = &ParagraphResult> {
        self.paragraphs.iter().flatten().filter(|p| p.par_contains_frame)
    }
}

fn micros(start: Instant) -> u64 {
    start.elapsed().as_micros() as u64
}

/// Run one document through every stage, stopping at the first No.
pub fn run_pipeline(doc: &Document, bundle: &PipelineBundle) -> Result<PipelineResult> {
    let start = Instant::now();
    let gate = contains_ai(doc, &bundle.keywords, &bundle.tokenizer);
    let mut result = PipelineResult {
        doc_id: doc.id.clone(),
        doc_contains_ai: gate.contains_ai,
        ai_keywords: gate.matches,
        doc_contains_frame: None,
        doc_frame_score: None,
        paragraphs: None,
        timing: StageTiming {
            gate_us: micros(start),
            ..Default::default()
        },
    };
    if !result.doc_contains_ai {
        result.timing.total_us = micros(start);
        return Ok(result);
    }

    let t = Instant::now();
    let doc_tokens = doc.tokens(&bundle.tokenizer);
    let x = bundle.features.infer(&doc.id, &doc_tokens)?;
    let (is_frame, score) = bundle.doc_classifier.predict_one(&x)?;
    result.doc_contains_frame = Some(is_frame);
    result.doc_frame_score = Some(score);
    result.timing.doc_us = Some(micros(t));
    if !is_frame {
        result.timing.total_us = micros(start);
        return Ok(result);
    }

    let t = Instant::now();
    let mut span_us = 0;
    let mut paragraphs = Vec::with_capacity(doc.paragraphs.len());
    for p in &doc.paragraphs {
        let tokens = p.tokens(&bundle.tokenizer);
        let mut out = ParagraphResult {
            index: p.index,
            par_contains_frame: false,
            score: 0.0,
            attention: None,
            spans: Vec::new(),
            truncated: false,
        };
        if tokens.is_empty() {
            paragraphs.push(out);
            continue;
        }
        match &bundle.paragraph_model {
            ParagraphStage::Classical(model) => {
                let x = bundle.features.infer(&doc.paragraph_id(p.index), &tokens)?;
                (out.par_contains_frame, out.score) = model.predict_one(&x)?;
            }
            ParagraphStage::Attention(model) => {
                let o = model.forward(&tokens)?;
                out.par_contains_frame = o.label();
                out.score = o.p_yes();
                out.truncated = o.truncated;
                if out.par_contains_frame {
                    let ts = Instant::now();
                    out.spans = extract_frame_spans(&o.weights, bundle.span_threshold)?
                        .into_iter()
                        .map(|s| {
                            let surface = tokens[s.start_token..s.end_token].join(" ");
                            s.with_surface(surface)
                        })
                        .collect();
                    span_us += micros(ts);
                }
                out.attention = Some(o.weights);
            }
        }
        paragraphs.push(out);
    }
    result.paragraphs = Some(paragraphs);
    result.timing.paragraph_us = Some(micros(t).saturating_sub(span_us));
    if matches!(bundle.paragraph_model, ParagraphStage::Attention(_)) {
        result.timing.span_us = Some(span_us);
    }
    result.timing.total_us = micros(start);
    Ok(result)
}
