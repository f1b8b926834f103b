//! Paragraph-vector embeddings (PV-DBOW / PV-DM with hierarchical softmax or
//! negative sampling) and loading of precomputed embedding tables.

mod external;
mod huffman;
pub mod pv;
mod sampling;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio;
use crate::gradcheck::{self, GradCheckReport, ParamGroups};
use crate::textprep::{build_vocab, Vocabulary};
use crate::{seeded_rng, Error, Result};

pub use external::{
    load_unit_embeddings, load_word_embeddings, read_unit_embeddings, read_word_embeddings,
    synthesize_word_embeddings, ExternalEmbeddingTable,
};
pub use huffman::HuffmanTree;
pub use pv::{OutputLayer, PvExample, PvParams};
pub use sampling::{NoiseDistribution, NOISE_POWER};

use pv::{forward_backward, scatter_input_grad, scatter_output_grad, Scratch};

pub const EMB_MAGIC: &[u8; 7] = b"RFD-EMB";
pub const EMB_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PvArch {
    /// Distributed bag of words: the unit vector alone predicts tokens.
    Dbow,
    /// Distributed memory: mean of unit and context vectors predicts the center token.
    Dm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PvObjective {
    Hs,
    Neg,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub arch: PvArch,
    pub objective: PvObjective,
    pub dim: usize,
    /// Context words on each side (DM).
    pub window: usize,
    /// Negative samples per target (NEG).
    pub negative: usize,
    pub epochs: usize,
    /// Initial learning rate, decayed linearly to `min_alpha`.
    pub alpha: f64,
    pub min_alpha: f64,
    pub min_count: u64,
    pub infer_epochs: usize,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self {
            arch: PvArch::Dbow,
            objective: PvObjective::Hs,
            dim: 300,
            window: 5,
            negative: 5,
            epochs: 20,
            alpha: 0.025,
            min_alpha: 0.0001,
            min_count: 5,
            infer_epochs: 50,
            seed: 1,
        }
    }
}

impl EmbedConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::config("embedding dim must be > 0"));
        }
        if self.window == 0 {
            return Err(Error::config("window must be >= 1"));
        }
        if self.objective == PvObjective::Neg && self.negative == 0 {
            return Err(Error::config("negative must be >= 1 for negative sampling"));
        }
        if self.epochs == 0 {
            return Err(Error::config("epochs must be >= 1"));
        }
        if !(self.alpha > 0.0) || self.min_alpha < 0.0 || self.min_alpha > self.alpha {
            return Err(Error::config("need 0 <= min_alpha <= alpha, alpha > 0"));
        }
        Ok(())
    }

    pub fn variant_name(&self) -> String {
        let arch = match self.arch {
            PvArch::Dbow => "DBOW",
            PvArch::Dm => "DM",
        };
        let obj = match self.objective {
            PvObjective::Hs => "HS",
            PvObjective::Neg => "NEG",
        };
        format!("PV-{arch}-{obj}")
    }
}

/// How unseen texts obtain vectors from a trained model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbeddingMode {
    /// Optimize a fresh unit vector with frozen word/output parameters.
    Infer,
    /// Use the unit vector learned during training (units must be in the training set).
    Trained,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InferredVector {
    pub vector: Vec<f32>,
    /// Set when no token was in vocabulary; `vector` is then all zeros.
    pub all_oov: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingModel {
    config: EmbedConfig,
    vocab: Vocabulary,
    params: PvParams<f32>,
    unit_ids: Vec<String>,
    unit_index: HashMap<String, usize>,
    tree: Option<HuffmanTree>,
    noise: Option<NoiseDistribution>,
    epoch_losses: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct EmbHeader {
    config: EmbedConfig,
    vocab: Vocabulary,
    unit_ids: Vec<String>,
    epoch_losses: Vec<f64>,
}

fn init_uniform<R: Rng>(n: usize, dim: usize, rng: &mut R) -> Vec<f32> {
    let scale = 0.5 / dim as f32;
    (0..n * dim)
        .map(|_| (rng.random::<f32>() - 0.5) * 2.0 * scale)
        .collect()
}

/// Train paragraph vectors, one per unit; units are identified by position.
pub fn train_paragraph_vectors<S: AsRef<str>>(
    units: &[Vec<S>],
    config: &EmbedConfig,
) -> Result<EmbeddingModel> {
    let ids = (0..units.len()).map(|i| i.to_string()).collect();
    train_paragraph_vectors_with_ids(ids, units, config)
}

/// Train paragraph vectors for units carrying explicit ids.
pub fn train_paragraph_vectors_with_ids<S: AsRef<str>>(
    unit_ids: Vec<String>,
    units: &[Vec<S>],
    config: &EmbedConfig,
) -> Result<EmbeddingModel> {
    config.validate()?;
    if units.is_empty() {
        return Err(Error::input("empty training corpus"));
    }
    if unit_ids.len() != units.len() {
        return Err(Error::input("unit id count does not match unit count"));
    }
    let vocab = build_vocab(units, config.min_count);
    if vocab.is_empty() {
        return Err(Error::input("no token reaches min_count"));
    }
    let tree = match config.objective {
        PvObjective::Hs => Some(HuffmanTree::build(vocab.freqs())?),
        PvObjective::Neg => None,
    };
    let noise = match config.objective {
        PvObjective::Neg => Some(NoiseDistribution::from_counts(vocab.freqs())),
        PvObjective::Hs => None,
    };
    let dim = config.dim;
    let mut rng = seeded_rng(config.seed);
    let n_out = match config.objective {
        PvObjective::Hs => vocab.len() - 1,
        PvObjective::Neg => vocab.len(),
    };
    let mut params = PvParams {
        dim,
        words: init_uniform(vocab.len(), dim, &mut rng),
        units: init_uniform(units.len(), dim, &mut rng),
        outputs: vec![0.0; n_out * dim],
    };
    let encoded: Vec<Vec<usize>> = units
        .iter()
        .map(|u| u.iter().filter_map(|t| vocab.get(t.as_ref())).collect())
        .collect();
    let total_words: usize = encoded.iter().map(Vec::len).sum();
    let total_steps = (total_words * config.epochs).max(1) as f64;

    let output = match &tree {
        Some(t) => OutputLayer::Hierarchical(t),
        None => OutputLayer::Negative,
    };
    let mut scratch = Scratch::<f32>::new(dim);
    let mut ex = PvExample {
        unit: 0,
        context: Vec::with_capacity(2 * config.window),
        target: 0,
        negatives: Vec::with_capacity(config.negative),
    };
    let mut order: Vec<usize> = (0..units.len()).collect();
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut step = 0usize;
    for _ in 0..config.epochs {
        use rand::seq::SliceRandom;
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0f64;
        let mut n_examples = 0usize;
        for &u in &order {
            let ids = &encoded[u];
            for (pos, &target) in ids.iter().enumerate() {
                let alpha = config.alpha
                    - (config.alpha - config.min_alpha) * (step as f64 / total_steps);
                step += 1;
                ex.unit = u;
                ex.target = target;
                fill_context(config.arch, ids, pos, config.window, &mut ex.context);
                if let Some(noise) = &noise {
                    noise.negative_sample_into(config.negative, target, &mut rng, &mut ex.negatives);
                }
                let loss = forward_backward(
                    config.arch,
                    &output,
                    &params.words,
                    &params.outputs,
                    params.unit(u),
                    dim,
                    &ex,
                    &mut scratch,
                );
                epoch_loss += loss as f64;
                n_examples += 1;
                let lr = -(alpha as f32);
                let PvParams {
                    words,
                    units,
                    outputs,
                    ..
                } = &mut params;
                scatter_output_grad(&scratch, lr, dim, outputs);
                scatter_input_grad(
                    config.arch,
                    &ex.context,
                    &scratch.grad_h,
                    lr,
                    dim,
                    Some(words),
                    PvParams::row_mut(units, dim, u),
                );
            }
        }
        epoch_losses.push(epoch_loss / n_examples.max(1) as f64);
    }

    let unit_index = unit_ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), i))
        .collect();
    Ok(EmbeddingModel {
        config: config.clone(),
        vocab,
        params,
        unit_ids,
        unit_index,
        tree,
        noise,
        epoch_losses,
    })
}

fn fill_context(arch: PvArch, ids: &[usize], pos: usize, window: usize, out: &mut Vec<usize>) {
    out.clear();
    if arch == PvArch::Dm {
        let lo = pos.saturating_sub(window);
        let hi = (pos + window + 1).min(ids.len());
        out.extend((lo..hi).filter(|&j| j != pos).map(|j| ids[j]));
    }
}

impl EmbeddingModel {
    pub fn config(&self) -> &EmbedConfig {
        &self.config
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn params(&self) -> &PvParams<f32> {
        &self.params
    }

    pub fn dim(&self) -> usize {
        self.config.dim
    }

    pub fn n_units(&self) -> usize {
        self.unit_ids.len()
    }

    pub fn unit_ids(&self) -> &[String] {
        &self.unit_ids
    }

    pub fn tree(&self) -> Option<&HuffmanTree> {
        self.tree.as_ref()
    }

    pub fn noise(&self) -> Option<&NoiseDistribution> {
        self.noise.as_ref()
    }

    /// Mean per-example loss of each training epoch.
    pub fn epoch_losses(&self) -> &[f64] {
        &self.epoch_losses
    }

    pub fn unit_vector(&self, index: usize) -> &[f32] {
        self.params.unit(index)
    }

    pub fn unit_vector_by_id(&self, id: &str) -> Option<&[f32]> {
        self.unit_index.get(id).map(|&i| self.unit_vector(i))
    }

    fn output_layer(&self) -> OutputLayer<'_> {
        match &self.tree {
            Some(t) => OutputLayer::Hierarchical(t),
            None => OutputLayer::Negative,
        }
    }

    /// Fit a new unit vector for `tokens` with all other parameters frozen.
    pub fn infer_vector<S: AsRef<str>>(&self, tokens: &[S], infer_epochs: usize, seed: u64) -> InferredVector {
        let dim = self.config.dim;
        let ids: Vec<usize> = tokens
            .iter()
            .filter_map(|t| self.vocab.get(t.as_ref()))
            .collect();
        if ids.is_empty() {
            return InferredVector {
                vector: vec![0.0; dim],
                all_oov: true,
            };
        }
        let mut rng = seeded_rng(seed);
        let mut vector = init_uniform(1, dim, &mut rng);
        let output = self.output_layer();
        let mut scratch = Scratch::<f32>::new(dim);
        let mut ex = PvExample {
            unit: 0,
            context: Vec::new(),
            target: 0,
            negatives: Vec::new(),
        };
        let epochs = infer_epochs.max(1);
        let total = (epochs * ids.len()) as f64;
        let mut step = 0usize;
        for _ in 0..epochs {
            for (pos, &target) in ids.iter().enumerate() {
                let alpha = self.config.alpha
                    - (self.config.alpha - self.config.min_alpha) * (step as f64 / total);
                step += 1;
                ex.target = target;
                fill_context(self.config.arch, &ids, pos, self.config.window, &mut ex.context);
                if let Some(noise) = &self.noise {
                    noise.negative_sample_into(self.config.negative, target, &mut rng, &mut ex.negatives);
                }
                forward_backward(
                    self.config.arch,
                    &output,
                    &self.params.words,
                    &self.params.outputs,
                    &vector,
                    dim,
                    &ex,
                    &mut scratch,
                );
                scatter_input_grad(
                    self.config.arch,
                    &ex.context,
                    &scratch.grad_h,
                    -(alpha as f32),
                    dim,
                    None,
                    &mut vector,
                );
            }
        }
        InferredVector {
            vector,
            all_oov: false,
        }
    }

    /// Average per-example loss of `units` under the current parameters,
    /// using the trained unit vectors (ids are positions).
    pub fn mean_loss<S: AsRef<str>>(&self, units: &[Vec<S>], seed: u64) -> f64 {
        let mut rng = seeded_rng(seed);
        let output = self.output_layer();
        let mut scratch = Scratch::<f32>::new(self.config.dim);
        let mut total = 0.0;
        let mut n = 0usize;
        for (u, unit) in units.iter().enumerate().take(self.n_units()) {
            let ids: Vec<usize> = unit.iter().filter_map(|t| self.vocab.get(t.as_ref())).collect();
            for (pos, &target) in ids.iter().enumerate() {
                let mut ex = PvExample {
                    unit: u,
                    context: Vec::new(),
                    target,
                    negatives: Vec::new(),
                };
                fill_context(self.config.arch, &ids, pos, self.config.window, &mut ex.context);
                if let Some(noise) = &self.noise {
                    ex.negatives = noise.negative_sample(self.config.negative, target, &mut rng);
                }
                total += forward_backward(
                    self.config.arch,
                    &output,
                    &self.params.words,
                    &self.params.outputs,
                    self.params.unit(u),
                    self.config.dim,
                    &ex,
                    &mut scratch,
                ) as f64;
                n += 1;
            }
        }
        total / n.max(1) as f64
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = binio::Writer::new(EMB_MAGIC, EMB_VERSION, 0);
        w.json(&EmbHeader {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            unit_ids: self.unit_ids.clone(),
            epoch_losses: self.epoch_losses.clone(),
        })?;
        w.f32s(&self.params.words)
            .f32s(&self.params.units)
            .f32s(&self.params.outputs);
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = binio::Reader::open(bytes, EMB_MAGIC, EMB_VERSION)?;
        let header: EmbHeader = r.json()?;
        let words = r.f32s()?;
        let units = r.f32s()?;
        let outputs = r.f32s()?;
        r.finish()?;
        let EmbHeader {
            config,
            mut vocab,
            unit_ids,
            epoch_losses,
        } = header;
        config.validate()?;
        vocab.restore_index();
        let dim = config.dim;
        let n_out = match config.objective {
            PvObjective::Hs => vocab.len().saturating_sub(1),
            PvObjective::Neg => vocab.len(),
        };
        if words.len() != vocab.len() * dim
            || units.len() != unit_ids.len() * dim
            || outputs.len() != n_out * dim
        {
            return Err(Error::BadFormat("matrix shapes do not match header".into()));
        }
        if words.iter().chain(&units).chain(&outputs).any(|x| !x.is_finite()) {
            return Err(Error::BadFormat("non-finite parameter".into()));
        }
        let tree = match config.objective {
            PvObjective::Hs => Some(HuffmanTree::build(vocab.freqs())?),
            PvObjective::Neg => None,
        };
        let noise = match config.objective {
            PvObjective::Neg => Some(NoiseDistribution::from_counts(vocab.freqs())),
            PvObjective::Hs => None,
        };
        let unit_index = unit_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        Ok(Self {
            config,
            vocab,
            params: PvParams {
                dim,
                words,
                units,
                outputs,
            },
            unit_ids,
            unit_index,
            tree,
            noise,
            epoch_losses,
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

impl fmt::Display for EmbeddingModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} dim={} vocab={} units={}",
            self.config.variant_name(),
            self.config.dim,
            self.vocab.len(),
            self.n_units()
        )
    }
}

struct PvCheckModel {
    params: PvParams<f64>,
}

impl ParamGroups for PvCheckModel {
    fn group_names(&self) -> Vec<&'static str> {
        vec!["words", "units", "outputs"]
    }

    fn groups_mut(&mut self) -> Vec<&mut [f64]> {
        let PvParams {
            words,
            units,
            outputs,
            ..
        } = &mut self.params;
        vec![words, units, outputs]
    }
}

/// Finite-difference check of the paragraph-vector gradients on a small
/// random problem (dim 6, 7-token vocabulary, 3 units).
pub fn gradient_check(arch: PvArch, objective: PvObjective, seed: u64) -> GradCheckReport {
    let mut rng = seeded_rng(seed);
    let freqs: Vec<u64> = vec![9, 7, 5, 4, 3, 2, 1];
    let v = freqs.len();
    let dim = 6;
    let n_units = 3;
    let tree = HuffmanTree::build(&freqs).expect("v >= 2");
    let noise = NoiseDistribution::from_counts(&freqs);
    let n_out = match objective {
        PvObjective::Hs => v - 1,
        PvObjective::Neg => v,
    };
    let mut rand_vec = |n: usize| -> Vec<f64> { (0..n).map(|_| rng.random::<f64>() - 0.5).collect() };
    let params = PvParams {
        dim,
        words: rand_vec(v * dim),
        units: rand_vec(n_units * dim),
        outputs: rand_vec(n_out * dim),
    };
    let mut rng = seeded_rng(seed ^ 0xA5A5);
    let examples: Vec<PvExample> = (0..10)
        .map(|i| {
            let target = rng.random_range(0..v);
            let context = match arch {
                PvArch::Dm => (0..rng.random_range(0..4)).map(|_| rng.random_range(0..v)).collect(),
                PvArch::Dbow => Vec::new(),
            };
            let negatives = match objective {
                PvObjective::Neg => noise.negative_sample(3, target, &mut rng),
                PvObjective::Hs => Vec::new(),
            };
            PvExample {
                unit: i % n_units,
                context,
                target,
                negatives,
            }
        })
        .collect();
    let output = match objective {
        PvObjective::Hs => OutputLayer::Hierarchical(&tree),
        PvObjective::Neg => OutputLayer::Negative,
    };
    let (_, grads) = pv::batch_loss_grad(arch, &output, &params, &examples);
    let mut model = PvCheckModel { params };
    gradcheck::check(
        &mut model,
        &[grads.words, grads.units, grads.outputs],
        |m| pv::batch_loss(arch, &output, &m.params, &examples),
    )
}
