use std::path::Path;

use serde::{Deserialize, Serialize};

use framedetect::attention::AttnConfig;
use framedetect::classify::{
    Activation, ClassifierKind, ClassifierSettings, Hyperparams, Kernel, LearningRate, MaxFeatures, Penalty,
};
use framedetect::corpus::SynthConfig;
use framedetect::embed::EmbedConfig;
use framedetect::gate::{default_keywords, KeywordSet};
use framedetect::textprep::TokenizerConfig;
use framedetect::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GateConfig {
    /// Replaces the default keyword set when present.
    pub keywords: Option<Vec<String>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub folds: usize,
    pub repeats: usize,
    /// Folds used by `grid-search`.
    pub grid_folds: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            repeats: 3,
            grid_folds: 10,
        }
    }
}

/// Pipeline configuration file. Every section is optional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub tokenizer: TokenizerConfig,
    pub gate: GateConfig,
    pub synth: SynthConfig,
    pub embed: EmbedConfig,
    pub doc_classifier: Hyperparams,
    pub paragraph_classifier: Hyperparams,
    pub classifier_settings: ClassifierSettings,
    pub attention: AttnConfig,
    /// Dimension of random word vectors used when no word-embedding file is given.
    pub word_dim: usize,
    pub eval: EvalConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            tokenizer: TokenizerConfig::default(),
            gate: GateConfig::default(),
            synth: SynthConfig::default(),
            embed: EmbedConfig::default(),
            doc_classifier: default_hyperparams(ClassifierKind::LogisticRegression),
            paragraph_classifier: default_hyperparams(ClassifierKind::LogisticRegression),
            classifier_settings: ClassifierSettings::default(),
            attention: AttnConfig::default(),
            word_dim: 50,
            eval: EvalConfig::default(),
        }
    }
}

/// Starting hyperparameters when only a classifier family is named.
pub fn default_hyperparams(kind: ClassifierKind) -> Hyperparams {
    match kind {
        ClassifierKind::LogisticRegression => Hyperparams::LogisticRegression {
            penalty: Penalty::L2,
            c: 1.0,
        },
        ClassifierKind::Svm => Hyperparams::Svm {
            kernel: Kernel::Rbf,
            c: 1.0,
            degree: None,
        },
        ClassifierKind::RandomForest => Hyperparams::RandomForest {
            n_estimators: 100,
            max_features: MaxFeatures::Sqrt,
        },
        ClassifierKind::Mlp => Hyperparams::Mlp {
            hidden: 100,
            learning_rate: LearningRate::Constant,
            activation: Activation::Relu,
            alpha: 0.0001,
        },
    }
}

impl Config {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// A `--seed` flag overrides every seed in the file.
    pub fn apply_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.embed.seed = seed;
        self.attention.seed = seed;
    }

    pub fn keywords(&self) -> Result<KeywordSet> {
        match &self.gate.keywords {
            Some(k) => KeywordSet::new(k),
            None => Ok(default_keywords()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.embed.validate()?;
        self.attention.validate()?;
        self.doc_classifier.validate()?;
        self.paragraph_classifier.validate()?;
        self.keywords()?;
        if self.word_dim == 0 {
            return Err(Error::Config("word_dim must be > 0".into()));
        }
        if self.eval.folds < 2 || self.eval.grid_folds < 2 || self.eval.repeats == 0 {
            return Err(Error::Config("eval needs folds >= 2 and repeats >= 1".into()));
        }
        Ok(())
    }
}
