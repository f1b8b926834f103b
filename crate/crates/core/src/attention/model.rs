use std::collections::HashMap;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::lstm::{dot, Lstm, LstmTrace};
use super::{guided_loss, kl_gradient, normalize_span_encoding, AttnConfig, Guidance, SpanDistribution};
use crate::binio;
use crate::classify::ClassWeights;
use crate::corpus::ParagraphExample;
use crate::embed::ExternalEmbeddingTable;
use crate::gradcheck::{self, GradCheckReport, ParamGroups};
use crate::{seeded_rng, Error, Result};

pub const ATT_MAGIC: &[u8; 7] = b"RFD-ATT";
pub const ATT_VERSION: u16 = 1;

/// Trainable parameters. Word embeddings are frozen and live outside.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct AttnParams {
    pub fwd: Lstm,
    pub bwd: Lstm,
    /// `d_a × 2H`.
    pub w_a: Vec<f64>,
    pub u: Vec<f64>,
    /// `2 × 2H`; row 0 scores No, row 1 scores Yes.
    pub w_o: Vec<f64>,
    pub b_o: [f64; 2],
}

impl AttnParams {
    fn init(word_dim: usize, hidden: usize, d_a: usize, rng: &mut impl Rng) -> Self {
        let mut uniform = |n: usize, fan_in: usize, fan_out: usize| -> Vec<f64> {
            let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
            (0..n).map(|_| rng.random_range(-b..b)).collect()
        };
        let lstm = |uniform: &mut dyn FnMut(usize, usize, usize) -> Vec<f64>| {
            let mut l = Lstm::zeros(word_dim, hidden);
            l.w = uniform(l.w.len(), word_dim + hidden, 4 * hidden);
            // Forget-gate bias starts at 1.
            l.b[hidden..2 * hidden].iter_mut().for_each(|b| *b = 1.0);
            l
        };
        let fwd = lstm(&mut uniform);
        let bwd = lstm(&mut uniform);
        let two_h = 2 * hidden;
        Self {
            fwd,
            bwd,
            w_a: uniform(d_a * two_h, two_h, d_a),
            u: uniform(d_a, d_a, 1),
            w_o: uniform(2 * two_h, two_h, 2),
            b_o: [0.0; 2],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            fwd: Lstm::zeros(self.fwd.input, self.fwd.hidden),
            bwd: Lstm::zeros(self.bwd.input, self.bwd.hidden),
            w_a: vec![0.0; self.w_a.len()],
            u: vec![0.0; self.u.len()],
            w_o: vec![0.0; self.w_o.len()],
            b_o: [0.0; 2],
        }
    }

    fn hidden(&self) -> usize {
        self.fwd.hidden
    }

    fn d_a(&self) -> usize {
        self.u.len()
    }

    pub fn groups(&self) -> Vec<&[f64]> {
        vec![
            &self.fwd.w,
            &self.fwd.b,
            &self.bwd.w,
            &self.bwd.b,
            &self.w_a,
            &self.u,
            &self.w_o,
            &self.b_o,
        ]
    }
}

impl ParamGroups for AttnParams {
    fn group_names(&self) -> Vec<&'static str> {
        vec!["lstm_fwd_w", "lstm_fwd_b", "lstm_bwd_w", "lstm_bwd_b", "attn_w", "attn_u", "out_w", "out_b"]
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.fwd.w,
            &mut self.fwd.b,
            &mut self.bwd.w,
            &mut self.bwd.b,
            &mut self.w_a,
            &mut self.u,
            &mut self.w_o,
            &mut self.b_o,
        ]
    }
}

/// Forward activations for one paragraph.
struct Trace {
    fwd: LstmTrace,
    bwd: LstmTrace,
    /// Concatenated states `[h_fwd; h_bwd]`, `L × 2H`.
    hs: Vec<Vec<f64>>,
    /// `tanh(W_a h_t)`, `L × d_a`.
    e: Vec<Vec<f64>>,
    a: Vec<f64>,
    /// Pooled vector after dropout.
    m: Vec<f64>,
    dropout: Option<Vec<f64>>,
    probs: [f64; 2],
}

fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    v.iter_mut().for_each(|x| *x /= sum);
}

impl AttnParams {
    fn forward(&self, xs: &[Vec<f64>], dropout: Option<Vec<f64>>) -> Trace {
        let h = self.hidden();
        let d_a = self.d_a();
        let two_h = 2 * h;
        let fwd_in: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let bwd_in: Vec<&[f64]> = xs.iter().rev().map(Vec::as_slice).collect();
        let fwd = self.fwd.forward(&fwd_in);
        let bwd = self.bwd.forward(&bwd_in);
        let len = xs.len();
        let hs: Vec<Vec<f64>> = (0..len)
            .map(|t| {
                let mut v = fwd.hs[t].clone();
                v.extend_from_slice(&bwd.hs[len - 1 - t]);
                v
            })
            .collect();
        let e: Vec<Vec<f64>> = hs
            .iter()
            .map(|ht| {
                (0..d_a)
                    .map(|r| dot(&self.w_a[r * two_h..(r + 1) * two_h], ht).tanh())
                    .collect()
            })
            .collect();
        let mut a: Vec<f64> = e.iter().map(|et| dot(&self.u, et)).collect();
        softmax_in_place(&mut a);
        let mut m = vec![0.0; two_h];
        for (at, ht) in a.iter().zip(&hs) {
            for (mj, hj) in m.iter_mut().zip(ht) {
                *mj += at * hj;
            }
        }
        if let Some(mask) = &dropout {
            for (mj, k) in m.iter_mut().zip(mask) {
                *mj *= k;
            }
        }
        let mut probs = [
            dot(&self.w_o[..two_h], &m) + self.b_o[0],
            dot(&self.w_o[two_h..], &m) + self.b_o[1],
        ];
        softmax_in_place(&mut probs);
        Trace {
            fwd,
            bwd,
            hs,
            e,
            a,
            m,
            dropout,
            probs,
        }
    }

    /// Adds `scale · ∂loss/∂θ` into `grads`.
    #[allow(clippy::too_many_arguments)]
    fn backward(
        &self,
        xs: &[Vec<f64>],
        tr: &Trace,
        label: bool,
        class_weight: f64,
        g: &SpanDistribution,
        guidance: &Guidance,
        scale: f64,
        grads: &mut AttnParams,
    ) {
        let h = self.hidden();
        let two_h = 2 * h;
        let len = xs.len();
        let target = usize::from(label);
        let dlogits: [f64; 2] = std::array::from_fn(|k| {
            let y = if k == target { 1.0 } else { 0.0 };
            scale * class_weight * (tr.probs[k] - y)
        });
        let mut dm = vec![0.0; two_h];
        for k in 0..2 {
            grads.b_o[k] += dlogits[k];
            let row = &self.w_o[k * two_h..(k + 1) * two_h];
            let grow = &mut grads.w_o[k * two_h..(k + 1) * two_h];
            for j in 0..two_h {
                grow[j] += dlogits[k] * tr.m[j];
                dm[j] += dlogits[k] * row[j];
            }
        }
        if let Some(mask) = &tr.dropout {
            for (d, k) in dm.iter_mut().zip(mask) {
                *d *= k;
            }
        }
        let kl = kl_gradient(g, &tr.a, guidance);
        let da: Vec<f64> = (0..len)
            .map(|t| dot(&dm, &tr.hs[t]) + scale * kl[t])
            .collect();
        let mean_da: f64 = tr.a.iter().zip(&da).map(|(a, d)| a * d).sum();
        let mut dhs: Vec<Vec<f64>> = tr.a.iter().map(|&at| dm.iter().map(|d| at * d).collect()).collect();
        for t in 0..len {
            let ds = tr.a[t] * (da[t] - mean_da);
            if ds == 0.0 {
                continue;
            }
            for (r, &er) in tr.e[t].iter().enumerate() {
                grads.u[r] += ds * er;
                let dpre = ds * self.u[r] * (1.0 - er * er);
                let row = &self.w_a[r * two_h..(r + 1) * two_h];
                let grow = &mut grads.w_a[r * two_h..(r + 1) * two_h];
                for j in 0..two_h {
                    grow[j] += dpre * tr.hs[t][j];
                    dhs[t][j] += dpre * row[j];
                }
            }
        }
        let d_fwd: Vec<Vec<f64>> = dhs.iter().map(|d| d[..h].to_vec()).collect();
        let d_bwd: Vec<Vec<f64>> = dhs.iter().rev().map(|d| d[h..].to_vec()).collect();
        let fwd_in: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let bwd_in: Vec<&[f64]> = xs.iter().rev().map(Vec::as_slice).collect();
        self.fwd.backward(&fwd_in, &tr.fwd, &d_fwd, &mut grads.fwd.w, &mut grads.fwd.b);
        self.bwd.backward(&bwd_in, &tr.bwd, &d_bwd, &mut grads.bwd.w, &mut grads.bwd.b);
    }
}

/// A paragraph ready for training: embedding rows, label and span distribution.
#[derive(Debug, Clone)]
pub(crate) struct Prepared {
    pub ids: Vec<Option<usize>>,
    pub label: bool,
    pub g: SpanDistribution,
}

pub(crate) enum Preparation {
    Ready(Prepared, bool),
    Empty,
    SpanBeyondCap,
}

/// Class probabilities and attention weights for one paragraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttnOutput {
    /// `[p(No), p(Yes)]`.
    pub probs: [f64; 2],
    pub weights: Vec<f64>,
    /// True if the paragraph was cut at the length cap.
    pub truncated: bool,
}

impl AttnOutput {
    pub fn p_yes(&self) -> f64 {
        self.probs[1]
    }

    pub fn label(&self) -> bool {
        self.probs[1] > 0.5
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AttentionModel {
    pub(crate) config: AttnConfig,
    word_dim: usize,
    vocab: Vec<String>,
    index: HashMap<String, usize>,
    embeddings: Vec<f32>,
    pub(crate) params: AttnParams,
}

impl AttentionModel {
    /// Fresh model with randomly initialized weights over `table`.
    pub fn new(config: AttnConfig, table: &ExternalEmbeddingTable) -> Result<Self> {
        config.validate()?;
        if table.dim() == 0 {
            return Err(Error::input("word embedding table is empty"));
        }
        let mut rng = seeded_rng(config.seed);
        let params = AttnParams::init(table.dim(), config.hidden, config.d_a, &mut rng);
        let vocab: Vec<String> = table.keys().to_vec();
        let mut embeddings = Vec::with_capacity(vocab.len() * table.dim());
        for k in &vocab {
            embeddings.extend_from_slice(table.get(k).expect("key from table"));
        }
        let index = vocab.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(Self {
            config,
            word_dim: table.dim(),
            vocab,
            index,
            embeddings,
            params,
        })
    }

    pub fn config(&self) -> &AttnConfig {
        &self.config
    }

    pub fn word_dim(&self) -> usize {
        self.word_dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn hidden(&self) -> usize {
        self.params.hidden()
    }

    pub(crate) fn ids<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<Option<usize>> {
        tokens.iter().map(|t| self.index.get(t.as_ref()).copied()).collect()
    }

    /// Embedding rows in `f64`; unknown tokens map to the zero vector.
    pub(crate) fn embed(&self, ids: &[Option<usize>]) -> Vec<Vec<f64>> {
        let d = self.word_dim;
        ids.iter()
            .map(|id| match id {
                Some(i) => self.embeddings[i * d..(i + 1) * d].iter().map(|&v| f64::from(v)).collect(),
                None => vec![0.0; d],
            })
            .collect()
    }

    pub(crate) fn prepare(&self, ex: &ParagraphExample, guided: bool) -> Preparation {
        if ex.tokens.is_empty() {
            return Preparation::Empty;
        }
        let cap = self.config.max_len;
        let truncated = ex.tokens.len() > cap;
        if guided && ex.spans.iter().any(|s| s.end_token > cap) {
            return Preparation::SpanBeyondCap;
        }
        let n = ex.tokens.len().min(cap);
        let mut mask = vec![0u8; n];
        for s in &ex.spans {
            for m in mask.iter_mut().take(s.end_token.min(n)).skip(s.start_token) {
                *m = 1;
            }
        }
        let g = normalize_span_encoding(&mask);
        Preparation::Ready(
            Prepared {
                ids: self.ids(&ex.tokens[..n]),
                label: ex.label,
                g,
            },
            truncated,
        )
    }

    /// Mean guided loss over `batch` and its gradient (into `grads`, overwritten).
    pub(crate) fn loss_grad(
        &self,
        batch: &[&Prepared],
        weights: &ClassWeights,
        guidance: &Guidance,
        dropout: Option<(f64, &mut dyn rand::RngCore)>,
        grads: &mut AttnParams,
    ) -> f64 {
        *grads = self.params.zeros_like();
        let scale = 1.0 / batch.len() as f64;
        let mut total = 0.0;
        let mut dropout = dropout;
        for ex in batch {
            let xs = self.embed(&ex.ids);
            let mask = dropout.as_mut().and_then(|(p, rng)| {
                (*p > 0.0).then(|| {
                    (0..2 * self.hidden())
                        .map(|_| if rng.random::<f64>() < *p { 0.0 } else { 1.0 / (1.0 - *p) })
                        .collect()
                })
            });
            let tr = self.params.forward(&xs, mask);
            total += guided_loss(tr.probs, ex.label, &tr.a, &ex.g, weights, guidance).expect("lengths agree");
            self.params
                .backward(&xs, &tr, ex.label, weights.weight(ex.label), &ex.g, guidance, scale, grads);
        }
        total * scale
    }

    pub(crate) fn loss(&self, batch: &[&Prepared], weights: &ClassWeights, guidance: &Guidance) -> f64 {
        batch
            .iter()
            .map(|ex| {
                let tr = self.params.forward(&self.embed(&ex.ids), None);
                guided_loss(tr.probs, ex.label, &tr.a, &ex.g, weights, guidance).expect("lengths agree")
            })
            .sum::<f64>()
            / batch.len() as f64
    }

    pub(crate) fn forward_ids(&self, ids: &[Option<usize>]) -> ([f64; 2], Vec<f64>) {
        let tr = self.params.forward(&self.embed(ids), None);
        (tr.probs, tr.a)
    }

    /// Inference on one paragraph; paragraphs over the length cap are truncated.
    pub fn forward<S: AsRef<str>>(&self, tokens: &[S]) -> Result<AttnOutput> {
        if tokens.is_empty() {
            return Err(Error::input("empty token list"));
        }
        let cap = self.config.max_len;
        let truncated = tokens.len() > cap;
        let ids = self.ids(&tokens[..tokens.len().min(cap)]);
        let (probs, weights) = self.forward_ids(&ids);
        Ok(AttnOutput {
            probs,
            weights,
            truncated,
        })
    }

    /// Batched inference; weights are zero-padded to the longest paragraph.
    pub fn forward_batch<S: AsRef<str>>(&self, batch: &[Vec<S>]) -> Result<Vec<AttnOutput>> {
        let outs: Vec<AttnOutput> = batch.iter().map(|t| self.forward(t)).collect::<Result<_>>()?;
        let width = outs.iter().map(|o| o.weights.len()).max().unwrap_or(0);
        Ok(outs
            .into_iter()
            .map(|mut o| {
                o.weights.resize(width, 0.0);
                o
            })
            .collect())
    }

    /// Finite-difference check of the full guided objective over `batch`.
    pub fn gradient_check(
        &self,
        batch: &[ParagraphExample],
        weights: &ClassWeights,
        guidance: &Guidance,
    ) -> GradCheckReport {
        let prepared: Vec<Prepared> = batch
            .iter()
            .filter_map(|ex| match self.prepare(ex, guidance.lambda > 0.0) {
                Preparation::Ready(p, _) => Some(p),
                _ => None,
            })
            .collect();
        let refs: Vec<&Prepared> = prepared.iter().collect();
        let mut grads = self.params.zeros_like();
        self.loss_grad(&refs, weights, guidance, None, &mut grads);
        let analytic: Vec<Vec<f64>> = grads.groups().into_iter().map(<[f64]>::to_vec).collect();
        let mut model = self.clone();
        gradcheck::check(&mut model, &analytic, |m| m.loss(&refs, weights, guidance))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = binio::Writer::new(ATT_MAGIC, ATT_VERSION, 0);
        w.json(&AttHeader {
            config: self.config,
            word_dim: self.word_dim,
            vocab_size: self.vocab.len(),
        })?;
        w.bytes(self.vocab.join("\n").as_bytes());
        w.f32s(&self.embeddings);
        for g in self.params.groups() {
            w.f64s(g);
        }
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = binio::Reader::open(bytes, ATT_MAGIC, ATT_VERSION)?;
        let header: AttHeader = r.json()?;
        header.config.validate()?;
        let text = std::str::from_utf8(r.bytes()?).map_err(|_| Error::BadFormat("vocabulary is not UTF-8".into()))?;
        let vocab: Vec<String> = if header.vocab_size == 0 {
            Vec::new()
        } else {
            text.split('\n').map(str::to_string).collect()
        };
        let embeddings = r.f32s()?;
        if vocab.len() != header.vocab_size || embeddings.len() != vocab.len() * header.word_dim {
            return Err(Error::BadFormat("embedding table shape".into()));
        }
        let mut params = AttnParams {
            fwd: Lstm::zeros(header.word_dim, header.config.hidden),
            bwd: Lstm::zeros(header.word_dim, header.config.hidden),
            w_a: vec![0.0; header.config.d_a * 2 * header.config.hidden],
            u: vec![0.0; header.config.d_a],
            w_o: vec![0.0; 4 * header.config.hidden],
            b_o: [0.0; 2],
        };
        for g in params.groups_mut() {
            let data = r.f64s()?;
            if data.len() != g.len() {
                return Err(Error::BadFormat("parameter shape".into()));
            }
            g.copy_from_slice(&data);
        }
        r.finish()?;
        let index = vocab.iter().enumerate().map(|(i, k)| (k.clone(), i)).collect();
        Ok(Self {
            config: header.config,
            word_dim: header.word_dim,
            vocab,
            index,
            embeddings,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

impl ParamGroups for AttentionModel {
    fn group_names(&self) -> Vec<&'static str> {
        self.params.group_names()
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        self.params.groups_mut()
    }
}

#[derive(Serialize, Deserialize)]
struct AttHeader {
    config: AttnConfig,
    word_dim: usize,
    vocab_size: usize,
}

pub fn attention_forward<S: AsRef<str>>(tokens: &[S], model: &AttentionModel) -> Result<AttnOutput> {
    model.forward(tokens)
}

/// Gradient check on a tiny model (word dim 6, hidden 5, `d_a` 4) and a
/// three-paragraph batch, one of which carries a gold span.
pub fn attention_gradient_check(guidance: &Guidance, seed: u64) -> GradCheckReport {
    let words = ["ai", "race", "arms", "the", "china", "lead", "oov"];
    let table = crate::embed::synthesize_word_embeddings(&words[..6], 6, seed);
    let config = AttnConfig {
        hidden: 5,
        d_a: 4,
        lambda: guidance.lambda,
        seed,
        ..Default::default()
    };
    let model = AttentionModel::new(config, &table).expect("valid config");
    let ex = |tokens: &[&str], label: bool, spans: Vec<crate::corpus::SpanAnnotation>| ParagraphExample {
        doc_id: "check".into(),
        index: 0,
        tokens: tokens.iter().map(|s| s.to_string()).collect(),
        label,
        spans,
    };
    let batch = vec![
        ex(
            &["the", "ai", "arms", "race", "with", "china"],
            true,
            vec![crate::corpus::SpanAnnotation::new(2, 4)],
        ),
        ex(&["lead", "the", "oov", "ai"], false, vec![]),
        ex(&["china", "race", "lead"], true, vec![crate::corpus::SpanAnnotation::new(1, 2)]),
    ];
    model.gradient_check(&batch, &ClassWeights { no: 0.8, yes: 1.7 }, guidance)
}
