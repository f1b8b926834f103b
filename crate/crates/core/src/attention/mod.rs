//! BiLSTM + self-attention paragraph classifier, optionally guided toward
//! annotated frame spans by a KL term between the normalized span encoding
//! and the attention distribution.

mod lstm;
mod model;
mod train;

use serde::{Deserialize, Serialize};

use crate::classify::ClassWeights;
use crate::corpus::SpanAnnotation;
use crate::{Error, Result};

pub use model::{attention_forward, attention_gradient_check, AttentionModel, AttnOutput, ATT_MAGIC, ATT_VERSION};
pub use train::{train_attention_model, EpochLog, TrainingLog};

/// Which KL divergence the guidance term uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlDirection {
    /// `KL(g ‖ a) = Σ_{g_t>0} g_t · ln(g_t / (a_t + ε))`.
    GoldToAttention,
    /// `KL(a ‖ g) = Σ_t a_t · ln((a_t + ε) / (g_t + ε))`.
    AttentionToGold,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttnConfig {
    /// LSTM hidden size per direction.
    pub hidden: usize,
    /// Attention projection size.
    pub d_a: usize,
    /// Attention hops; only 1 is supported.
    pub hops: usize,
    /// Guidance weight; 0 gives the unguided baseline.
    pub lambda: f64,
    pub epsilon: f64,
    pub kl_direction: KlDirection,
    /// Dropout on the pooled paragraph vector during training.
    pub dropout: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step size.
    pub learning_rate: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub patience: usize,
    pub validation_fraction: f64,
    /// Token cap; longer paragraphs are truncated.
    pub max_len: usize,
    pub class_weighted: bool,
    /// Span decoding threshold factor `c` (tokens with `a_t ≥ c/L`).
    pub span_threshold: f64,
    pub seed: u64,
}

impl Default for AttnConfig {
    fn default() -> Self {
        Self {
            hidden: 128,
            d_a: 64,
            hops: 1,
            lambda: 1.0,
            epsilon: 1e-8,
            kl_direction: KlDirection::GoldToAttention,
            dropout: 0.0,
            epochs: 30,
            batch_size: 32,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            patience: 3,
            validation_fraction: 0.1,
            max_len: 200,
            class_weighted: true,
            span_threshold: 2.0,
            seed: 0,
        }
    }
}

impl AttnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::config(m.to_string()));
        if self.hidden == 0 || self.d_a == 0 {
            return bad("hidden and d_a must be positive");
        }
        if self.hops != 1 {
            return bad("only a single attention hop is supported");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be >= 0");
        }
        if !(self.epsilon >= 0.0) {
            return bad("epsilon must be >= 0");
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must be in [0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be >= 1");
        }
        if self.batch_size == 0 || self.max_len == 0 {
            return bad("batch_size and max_len must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) {
            return bad("learning_rate and clip_norm must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must be in [0, 1)");
        }
        if !(self.span_threshold > 0.0) {
            return bad("span_threshold must be positive");
        }
        Ok(())
    }

    pub fn guidance(&self) -> Guidance {
        Guidance {
            lambda: self.lambda,
            epsilon: self.epsilon,
            direction: self.kl_direction,
        }
    }
}

/// Weight, smoothing and direction of the KL term.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Guidance {
    pub lambda: f64,
    pub epsilon: f64,
    pub direction: KlDirection,
}

impl Guidance {
    pub fn new(lambda: f64) -> Self {
        Self {
            lambda,
            epsilon: 1e-8,
            direction: KlDirection::GoldToAttention,
        }
    }
}

/// Normalized 0-1 span encoding over a paragraph's tokens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpanDistribution {
    pub probs: Vec<f64>,
    /// True when no token was annotated; such paragraphs get no KL term.
    pub empty: bool,
}

impl SpanDistribution {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }
}

pub fn normalize_span_encoding(binary: &[u8]) -> SpanDistribution {
    let total: f64 = binary.iter().map(|&b| f64::from(b)).sum();
    if total == 0.0 {
        return SpanDistribution {
            probs: vec![0.0; binary.len()],
            empty: true,
        };
    }
    SpanDistribution {
        probs: binary.iter().map(|&b| f64::from(b) / total).collect(),
        empty: false,
    }
}

/// KL divergence in the configured direction.
pub fn kl_divergence(g: &[f64], a: &[f64], epsilon: f64, direction: KlDirection) -> Result<f64> {
    if g.len() != a.len() {
        return Err(Error::DimMismatch {
            expected: g.len(),
            got: a.len(),
        });
    }
    Ok(match direction {
        KlDirection::GoldToAttention => g
            .iter()
            .zip(a)
            .filter(|(gt, _)| **gt > 0.0)
            .map(|(gt, at)| gt * (gt / (at + epsilon)).ln())
            .sum(),
        KlDirection::AttentionToGold => a
            .iter()
            .zip(g)
            .filter(|(at, _)| **at > 0.0)
            .map(|(at, gt)| at * ((at + epsilon) / (gt + epsilon)).ln())
            .sum(),
    })
}

/// `∂(λ·KL)/∂a_t`; all zeros when `λ = 0` or `g` is empty.
pub fn kl_gradient(g: &SpanDistribution, a: &[f64], guidance: &Guidance) -> Vec<f64> {
    if guidance.lambda == 0.0 || g.empty {
        return vec![0.0; a.len()];
    }
    let eps = guidance.epsilon;
    match guidance.direction {
        KlDirection::GoldToAttention => g
            .probs
            .iter()
            .zip(a)
            .map(|(&gt, &at)| {
                if gt > 0.0 {
                    -guidance.lambda * gt / (at + eps)
                } else {
                    0.0
                }
            })
            .collect(),
        KlDirection::AttentionToGold => g
            .probs
            .iter()
            .zip(a)
            .map(|(&gt, &at)| {
                if at > 0.0 {
                    guidance.lambda * (((at + eps) / (gt + eps)).ln() + at / (at + eps))
                } else {
                    0.0
                }
            })
            .collect(),
    }
}

/// Class-weighted cross-entropy plus `λ · KL`, the KL term skipped for empty `g`.
pub fn guided_loss(
    probs: [f64; 2],
    label: bool,
    a: &[f64],
    g: &SpanDistribution,
    weights: &ClassWeights,
    guidance: &Guidance,
) -> Result<f64> {
    if a.len() != g.len() {
        return Err(Error::DimMismatch {
            expected: g.len(),
            got: a.len(),
        });
    }
    let p = probs[usize::from(label)];
    let ce = -weights.weight(label) * p.ln();
    if guidance.lambda == 0.0 || g.empty {
        return Ok(ce);
    }
    Ok(ce + guidance.lambda * kl_divergence(&g.probs, a, guidance.epsilon, guidance.direction)?)
}

/// Attention mass on the tokens marked in `mask`.
pub fn gold_span_mass(a: &[f64], mask: &[u8]) -> f64 {
    a.iter().zip(mask).filter(|(_, &m)| m > 0).map(|(w, _)| w).sum()
}

/// Tokens with `a_t ≥ c / L`, merged into maximal runs of adjacent tokens.
pub fn extract_frame_spans(a: &[f64], c: f64) -> Result<Vec<SpanAnnotation>> {
    if a.is_empty() {
        return Err(Error::input("cannot decode spans over zero tokens"));
    }
    let threshold = c / a.len() as f64;
    let mut spans = Vec::new();
    let mut start = None;
    for (t, &w) in a.iter().enumerate() {
        match (w >= threshold, start) {
            (true, None) => start = Some(t),
            (false, Some(s)) => {
                spans.push(SpanAnnotation::new(s, t));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push(SpanAnnotation::new(s, a.len()));
    }
    Ok(spans)
}
