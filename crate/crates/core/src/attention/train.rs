use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{AttentionModel, Preparation, Prepared};
use super::AttnConfig;
use crate::classify::{compute_class_weights, ClassWeights};
use crate::corpus::ParagraphExample;
use crate::embed::ExternalEmbeddingTable;
use crate::eval::prf;
use crate::gradcheck::ParamGroups;
use crate::{derive_seed, seeded_rng, Error, Result};

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    /// Unweighted cross-entropy on the validation split.
    pub val_loss: f64,
    pub val_macro_f1: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    /// Epoch whose weights were restored.
    pub best_epoch: usize,
    pub stopped_early: bool,
    pub train_size: usize,
    pub val_size: usize,
    pub truncated: usize,
    /// Examples dropped because a gold span lies past the length cap.
    pub dropped_long_spans: usize,
    pub dropped_empty: usize,
}

impl TrainingLog {
    /// One JSON object per epoch.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for e in &self.epochs {
            serde_json::to_writer(&mut w, e)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn best(&self) -> Option<&EpochLog> {
        self.epochs.iter().find(|e| e.epoch == self.best_epoch)
    }
}

/// Splits `n_c · fraction` (rounded, at least one when the class has two or
/// more members) of each class into validation.
fn stratified_holdout(labels: &[bool], fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut rng = seeded_rng(seed);
    let mut train = Vec::new();
    let mut val = Vec::new();
    for class in [true, false] {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        idx.shuffle(&mut rng);
        let n = idx.len();
        let k = if fraction <= 0.0 || n < 2 {
            0
        } else {
            ((n as f64 * fraction).round() as usize).clamp(1, n - 1)
        };
        val.extend_from_slice(&idx[..k]);
        train.extend_from_slice(&idx[k..]);
    }
    train.sort_unstable();
    val.sort_unstable();
    (train, val)
}

/// Trains with Adam on minibatches, monitors validation cross-entropy, and
/// restores the best epoch's weights once it fails to improve for
/// `patience` epochs.
pub fn train_attention_model(
    examples: &[ParagraphExample],
    config: &AttnConfig,
    embeddings: &ExternalEmbeddingTable,
) -> Result<(AttentionModel, TrainingLog)> {
    let mut model = AttentionModel::new(*config, embeddings)?;
    let guided = config.lambda > 0.0;
    let mut log = TrainingLog::default();
    let mut data: Vec<Prepared> = Vec::with_capacity(examples.len());
    for ex in examples {
        match model.prepare(ex, guided) {
            Preparation::Ready(p, truncated) => {
                log.truncated += usize::from(truncated);
                data.push(p);
            }
            Preparation::Empty => log.dropped_empty += 1,
            Preparation::SpanBeyondCap => log.dropped_long_spans += 1,
        }
    }
    if log.truncated > 0 {
        log::warn!("{} paragraphs truncated to {} tokens", log.truncated, config.max_len);
    }
    if log.dropped_long_spans > 0 {
        log::warn!(
            "{} paragraphs dropped: gold span beyond the {}-token cap",
            log.dropped_long_spans,
            config.max_len
        );
    }
    let labels: Vec<bool> = data.iter().map(|p| p.label).collect();
    if !labels.contains(&true) || !labels.contains(&false) {
        return Err(Error::SingleClass);
    }
    let (train_idx, mut val_idx) = stratified_holdout(&labels, config.validation_fraction, derive_seed(config.seed, 1));
    if val_idx.is_empty() {
        val_idx = train_idx.clone();
    }
    log.train_size = train_idx.len();
    log.val_size = val_idx.len();
    let train_labels: Vec<bool> = train_idx.iter().map(|&i| labels[i]).collect();
    let weights = if config.class_weighted {
        compute_class_weights(&train_labels).unwrap_or(ClassWeights::UNIFORM)
    } else {
        ClassWeights::UNIFORM
    };
    let guidance = config.guidance();

    let mut rng = seeded_rng(derive_seed(config.seed, 2));
    let mut grads = model.params.zeros_like();
    let mut adam_m = model.params.zeros_like();
    let mut adam_v = model.params.zeros_like();
    let mut step = 0i32;
    let mut order = train_idx.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_params = model.params.clone();
    let mut wait = 0;
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<&Prepared> = chunk.iter().map(|&i| &data[i]).collect();
            let dropout = (config.dropout > 0.0).then_some((config.dropout, &mut rng as &mut dyn rand::RngCore));
            let loss = model.loss_grad(&batch, &weights, &guidance, dropout, &mut grads);
            epoch_loss += loss * batch.len() as f64;
            let norm = grads
                .groups()
                .iter()
                .flat_map(|g| g.iter())
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            let clip = if norm > config.clip_norm { config.clip_norm / norm } else { 1.0 };
            step += 1;
            let bias1 = 1.0 - ADAM_BETA1.powi(step);
            let bias2 = 1.0 - ADAM_BETA2.powi(step);
            for ((p, g), (m, v)) in model
                .params
                .groups_mut()
                .into_iter()
                .zip(grads.groups())
                .zip(adam_m.groups_mut().into_iter().zip(adam_v.groups_mut()))
            {
                for k in 0..p.len() {
                    let gk = g[k] * clip;
                    m[k] = ADAM_BETA1 * m[k] + (1.0 - ADAM_BETA1) * gk;
                    v[k] = ADAM_BETA2 * v[k] + (1.0 - ADAM_BETA2) * gk * gk;
                    p[k] -= config.learning_rate * (m[k] / bias1) / ((v[k] / bias2).sqrt() + ADAM_EPS);
                }
            }
        }
        let (val_loss, val_macro_f1) = validate(&model, &data, &val_idx)?;
        let entry = EpochLog {
            epoch,
            train_loss: epoch_loss / order.len() as f64,
            val_loss,
            val_macro_f1,
        };
        log::info!(
            "epoch {epoch}: train {:.4} val {:.4} macro-F1 {:.3}",
            entry.train_loss,
            val_loss,
            val_macro_f1
        );
        log.epochs.push(entry);
        if val_loss < best_loss {
            best_loss = val_loss;
            best_params = model.params.clone();
            log.best_epoch = epoch;
            wait = 0;
        } else {
            wait += 1;
            if wait >= config.patience {
                log.stopped_early = true;
                break;
            }
        }
    }
    model.params = best_params;
    Ok((model, log))
}

fn validate(model: &AttentionModel, data: &[Prepared], idx: &[usize]) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut gold = Vec::with_capacity(idx.len());
    let mut pred = Vec::with_capacity(idx.len());
    for &i in idx {
        let (probs, _) = model.forward_ids(&data[i].ids);
        let label = data[i].label;
        loss -= probs[usize::from(label)].max(f64::MIN_POSITIVE).ln();
        gold.push(label);
        pred.push(probs[1] > 0.5);
    }
    let f1 = prf(&gold, &pred)?.macro_f1();
    Ok((loss / idx.len() as f64, f1))
}
