//! Everything `run_pipeline` needs, persisted as one checksummed file.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::FeatureSource;
use crate::attention::AttentionModel;
use crate::binio;
use crate::classify::ClassifierModel;
use crate::embed::{EmbeddingModel, ExternalEmbeddingTable};
use crate::gate::KeywordSet;
use crate::textprep::{TokenizerConfig, TOKENIZER_VERSION};
use crate::{Error, Result};

pub const BUNDLE_MAGIC: &[u8; 7] = b"RFD-BDL";
pub const BUNDLE_VERSION: u16 = 1;

const TAG_INFER: u64 = 0;
const TAG_EXTERNAL: u64 = 1;
const TAG_CLASSICAL: u64 = 0;
const TAG_ATTENTION: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum ParagraphStage {
    /// Classifier over paragraph features; yields no attention or spans.
    Classical(ClassifierModel),
    Attention(AttentionModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineBundle {
    pub keywords: KeywordSet,
    pub tokenizer: TokenizerConfig,
    pub features: FeatureSource,
    pub doc_classifier: ClassifierModel,
    pub paragraph_model: ParagraphStage,
    /// Span decoder constant: tokens with weight ≥ threshold / L are kept.
    pub span_threshold: f64,
}

/// Human-readable summary of a bundle, recorded in its header.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleInfo {
    pub bundle_version: u16,
    pub library_version: String,
    pub tokenizer_version: String,
    pub feature_source: String,
    pub feature_dim: usize,
    pub doc_classifier: String,
    pub paragraph_model: String,
}

#[derive(Serialize, Deserialize)]
struct Header {
    info: BundleInfo,
    keywords: KeywordSet,
    tokenizer: TokenizerConfig,
    span_threshold: f64,
}

impl PipelineBundle {
    pub fn new(
        keywords: KeywordSet,
        tokenizer: TokenizerConfig,
        features: FeatureSource,
        doc_classifier: ClassifierModel,
        paragraph_model: ParagraphStage,
        span_threshold: f64,
    ) -> Result<Self> {
        let bundle = Self {
            keywords,
            tokenizer,
            features,
            doc_classifier,
            paragraph_model,
            span_threshold,
        };
        bundle.check()?;
        Ok(bundle)
    }

    /// Stage models must agree on the feature dimension.
    pub fn check(&self) -> Result<()> {
        let dim = self.features.dim();
        if self.doc_classifier.dim != dim {
            return Err(Error::DimMismatch {
                expected: dim,
                got: self.doc_classifier.dim,
            });
        }
        if let ParagraphStage::Classical(m) = &self.paragraph_model {
            if m.dim != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    got: m.dim,
                });
            }
        }
        if !(self.span_threshold.is_finite() && self.span_threshold > 0.0) {
            return Err(Error::config("span threshold must be positive"));
        }
        Ok(())
    }

    pub fn info(&self) -> BundleInfo {
        BundleInfo {
            bundle_version: BUNDLE_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            tokenizer_version: TOKENIZER_VERSION.to_string(),
            feature_source: self.features.mode_name().to_string(),
            feature_dim: self.features.dim(),
            doc_classifier: self.doc_classifier.spec.hyper.to_string(),
            paragraph_model: match &self.paragraph_model {
                ParagraphStage::Classical(m) => m.spec.hyper.to_string(),
                ParagraphStage::Attention(m) => {
                    format!("attention(hidden={}, lambda={})", m.hidden(), m.config().lambda)
                }
            },
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check()?;
        let mut w = binio::Writer::new(BUNDLE_MAGIC, BUNDLE_VERSION, 0);
        w.json(&Header {
            info: self.info(),
            keywords: self.keywords.clone(),
            tokenizer: self.tokenizer.clone(),
            span_threshold: self.span_threshold,
        })?;
        match &self.features {
            FeatureSource::Inferred {
                model,
                infer_epochs,
                seed,
            } => {
                w.u64(TAG_INFER).u64(*infer_epochs as u64).u64(*seed);
                w.bytes(&model.to_bytes()?);
            }
            FeatureSource::External(table) => {
                w.u64(TAG_EXTERNAL);
                table.write_to(&mut w)?;
            }
        }
        w.bytes(&self.doc_classifier.to_bytes()?);
        match &self.paragraph_model {
            ParagraphStage::Classical(m) => w.u64(TAG_CLASSICAL).bytes(&m.to_bytes()?),
            ParagraphStage::Attention(m) => w.u64(TAG_ATTENTION).bytes(&m.to_bytes()?),
        };
        Ok(w.finish())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = binio::Reader::open(bytes, BUNDLE_MAGIC, BUNDLE_VERSION)?;
        let header: Header = r.json()?;
        let features = match r.u64()? {
            TAG_INFER => {
                let infer_epochs = r.u64()? as usize;
                let seed = r.u64()?;
                FeatureSource::Inferred {
                    model: EmbeddingModel::from_bytes(r.bytes()?)?,
                    infer_epochs,
                    seed,
                }
            }
            TAG_EXTERNAL => FeatureSource::External(ExternalEmbeddingTable::read_from(&mut r)?),
            t => return Err(Error::BadFormat(format!("unknown feature source tag {t}"))),
        };
        let doc_classifier = ClassifierModel::from_bytes(r.bytes()?)?;
        let paragraph_model = match r.u64()? {
            TAG_CLASSICAL => ParagraphStage::Classical(ClassifierModel::from_bytes(r.bytes()?)?),
            TAG_ATTENTION => ParagraphStage::Attention(AttentionModel::from_bytes(r.bytes()?)?),
            t => return Err(Error::BadFormat(format!("unknown paragraph model tag {t}"))),
        };
        r.finish()?;
        if header.info.tokenizer_version != TOKENIZER_VERSION {
            return Err(Error::BadFormat(format!(
                "bundle uses tokenizer {:?}, this build has {:?}",
                header.info.tokenizer_version, TOKENIZER_VERSION
            )));
        }
        Self::new(
            header.keywords,
            header.tokenizer,
            features,
            doc_classifier,
            paragraph_model,
            header.span_threshold,
        )
    }
}

pub fn save_bundle(bundle: &PipelineBundle, path: &Path) -> Result<()> {
    std::fs::write(path, bundle.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_bundle(path: &Path) -> Result<PipelineBundle> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    PipelineBundle::from_bytes(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::run_pipeline;
    use crate::pipeline::tests::{small_bundle, small_corpus};

    #[test]
    fn round_trip_preserves_predictions() {
        let docs = small_corpus(30, 6);
        let bundle = small_bundle(&docs, 6);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.rfd");
        save_bundle(&bundle, &path).unwrap();
        let loaded = load_bundle(&path).unwrap();
        assert_eq!(loaded, bundle);
        for d in &docs {
            let a = run_pipeline(d, &bundle).unwrap().without_timing();
            let b = run_pipeline(d, &loaded).unwrap().without_timing();
            assert_eq!(a, b);
        }
        assert_eq!(loaded.to_bytes().unwrap(), bundle.to_bytes().unwrap());
    }

    #[test]
    fn corrupt_and_truncated_files_fail_checksum() {
        let docs = small_corpus(20, 7);
        let bytes = small_bundle(&docs, 7).to_bytes().unwrap();
        assert!(matches!(
            PipelineBundle::from_bytes(&bytes[..bytes.len() - 10]),
            Err(Error::Checksum)
        ));
        let mut flipped = bytes.clone();
        flipped[100] ^= 1;
        assert!(matches!(PipelineBundle::from_bytes(&flipped), Err(Error::Checksum)));
    }

    #[test]
    fn newer_major_version_is_refused() {
        let w = binio::Writer::new(BUNDLE_MAGIC, BUNDLE_VERSION + 1, 0);
        let err = PipelineBundle::from_bytes(&w.finish()).unwrap_err();
        assert!(matches!(err, Error::Version { found: 2, supported: 1 }));
        assert!(err.to_string().contains("unsupported version"));
    }

    #[test]
    fn inconsistent_dims_rejected() {
        let docs = small_corpus(20, 8);
        let mut bundle = small_bundle(&docs, 8);
        bundle.features = FeatureSource::External(ExternalEmbeddingTable::new(3));
        assert!(matches!(bundle.check(), Err(Error::DimMismatch { .. })));
        assert!(bundle.to_bytes().is_err());
    }

    #[test]
    fn external_table_bundle_round_trips() {
        let docs = small_corpus(20, 9);
        let mut bundle = small_bundle(&docs, 9);
        let mut table = ExternalEmbeddingTable::new(bundle.features.dim());
        for d in &docs {
            let v: Vec<f32> = (0..table.dim()).map(|i| (i as f32 + d.id.len() as f32).sin()).collect();
            table.insert(d.id.clone(), &v).unwrap();
        }
        bundle.features = FeatureSource::External(table);
        let loaded = PipelineBundle::from_bytes(&bundle.to_bytes().unwrap()).unwrap();
        assert_eq!(loaded, bundle);
        assert_eq!(loaded.info().feature_source, "external");
    }
}
