//! Fixed-length features for the classical document and paragraph classifiers.

use rayon::prelude::*;

use crate::corpus::Document;
use crate::embed::{
    train_paragraph_vectors_with_ids, EmbedConfig, EmbeddingMode, EmbeddingModel, ExternalEmbeddingTable,
};
use crate::textprep::TokenizerConfig;
use crate::{Error, Result};

/// Train paragraph vectors over every document and every paragraph.
/// Unit ids are document ids and `doc#paragraph` ids.
pub fn train_corpus_embeddings(
    docs: &[Document],
    tokenizer: &TokenizerConfig,
    config: &EmbedConfig,
) -> Result<EmbeddingModel> {
    let mut ids = Vec::new();
    let mut units = Vec::new();
    for d in docs {
        ids.push(d.id.clone());
        units.push(d.tokens(tokenizer));
        for p in &d.paragraphs {
            ids.push(d.paragraph_id(p.index));
            units.push(p.tokens(tokenizer));
        }
    }
    train_paragraph_vectors_with_ids(ids, &units, config)
}

/// Where unit vectors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    /// Paragraph-vector model; unseen texts go through `infer_vector` with a fixed seed.
    Inferred {
        model: EmbeddingModel,
        infer_epochs: usize,
        seed: u64,
    },
    /// Precomputed vectors keyed by document id or `doc#paragraph` id.
    External(ExternalEmbeddingTable),
}

impl FeatureSource {
    /// Paragraph-vector source trained with [`train_corpus_embeddings`].
    pub fn train(docs: &[Document], tokenizer: &TokenizerConfig, config: &EmbedConfig) -> Result<Self> {
        Ok(Self::from_model(train_corpus_embeddings(docs, tokenizer, config)?))
    }

    pub fn from_model(model: EmbeddingModel) -> Self {
        let infer_epochs = model.config().infer_epochs;
        let seed = model.config().seed;
        Self::Inferred {
            model,
            infer_epochs,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::Inferred { model, .. } => model.dim(),
            Self::External(t) => t.dim(),
        }
    }

    pub fn mode_name(&self) -> &'static str {
        match self {
            Self::Inferred { .. } => "infer_vector",
            Self::External(_) => "external",
        }
    }

    /// Vector for a unit. `mode` selects trained or inferred vectors for
    /// paragraph-vector sources; external tables are always looked up by id.
    pub fn vector(&self, id: &str, tokens: &[String], mode: EmbeddingMode) -> Result<Vec<f64>> {
        let v = match self {
            Self::External(t) => t.lookup(id)?.to_vec(),
            Self::Inferred { model, .. } if mode == EmbeddingMode::Trained => model
                .unit_vector_by_id(id)
                .ok_or_else(|| Error::MissingEmbedding(id.to_string()))?
                .to_vec(),
            Self::Inferred {
                model,
                infer_epochs,
                seed,
            } => model.infer_vector(tokens, *infer_epochs, *seed).vector,
        };
        Ok(v.into_iter().map(f64::from).collect())
    }

    pub fn infer(&self, id: &str, tokens: &[String]) -> Result<Vec<f64>> {
        self.vector(id, tokens, EmbeddingMode::Infer)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelledFeatures {
    pub ids: Vec<String>,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<bool>,
}

fn collect(items: Vec<(String, Vec<String>, bool)>, source: &FeatureSource, mode: EmbeddingMode) -> Result<LabelledFeatures> {
    let features = items
        .par_iter()
        .map(|(id, tokens, _)| source.vector(id, tokens, mode))
        .collect::<Result<Vec<_>>>()?;
    let (ids, labels) = items.into_iter().map(|(id, _, l)| (id, l)).unzip();
    Ok(LabelledFeatures {
        ids,
        features,
        labels,
    })
}

/// Documents with a DocContainsFrame label.
pub fn doc_dataset(
    docs: &[Document],
    source: &FeatureSource,
    tokenizer: &TokenizerConfig,
    mode: EmbeddingMode,
) -> Result<LabelledFeatures> {
    let items = docs
        .iter()
        .filter_map(|d| {
            d.gold_doc_contains_frame
                .map(|l| (d.id.clone(), d.tokens(tokenizer), l))
        })
        .collect();
    collect(items, source, mode)
}

/// Paragraphs with a ParContainsFrame label, optionally only from frame documents.
pub fn paragraph_dataset(
    docs: &[Document],
    source: &FeatureSource,
    tokenizer: &TokenizerConfig,
    mode: EmbeddingMode,
    frame_docs_only: bool,
) -> Result<LabelledFeatures> {
    let items = docs
        .iter()
        .filter(|d| !frame_docs_only || d.gold_doc_contains_frame == Some(true))
        .flat_map(|d| {
            d.paragraphs.iter().filter_map(move |p| {
                p.gold_par_contains_frame
                    .map(|l| (d.paragraph_id(p.index), p.tokens(tokenizer), l))
            })
        })
        .collect();
    collect(items, source, mode)
}
