#![allow(dead_code)]

use framedetect::attention::{train_attention_model, AttnConfig};
use framedetect::classify::{
    compute_class_weights, train_classifier, ClassifierSettings, ClassifierSpec, Hyperparams, Penalty,
};
use framedetect::corpus::{
    corpus_tokens, paragraph_examples, synthesize_corpus, Document, Paragraph, SpanAnnotation, SynthConfig,
};
use framedetect::embed::{synthesize_word_embeddings, EmbedConfig, EmbeddingMode, PvArch};
use framedetect::gate::default_keywords;
use framedetect::pipeline::{doc_dataset, FeatureSource, ParagraphStage, PipelineBundle};
use framedetect::textprep::TokenizerConfig;

/// Per-source label counts of the annotated news corpus:
/// `(source, ai yes, ai no, frame yes, frame no, paragraph yes, paragraph no)`.
pub const NEWS_COUNTS: [(&str, usize, usize, usize, usize, usize, usize); 4] = [
    ("Reuters", 3496, 4205, 249, 3247, 391, 4934),
    ("DefenseOne", 537, 667, 43, 494, 79, 798),
    ("ForeignAffairs", 55, 11, 1, 54, 1, 29),
    ("LexisNexis", 9984, 16, 649, 9335, 1032, 13998),
];

fn labelled_paragraph(positive: bool) -> Paragraph {
    let mut p = Paragraph::new(0, if positive { "an arms race in AI" } else { "a quiet quarter" });
    p.gold_par_contains_frame = Some(positive);
    if positive {
        p.gold_frame_spans = vec![SpanAnnotation::new(1, 3).with_surface("arms race")];
    }
    p
}

/// Label-only corpus with the news corpus's per-source counts. Positive
/// paragraphs go round-robin to frame documents, negative paragraphs to all
/// AI documents; documents without a labelled paragraph get an unlabelled one.
pub fn news_shaped_corpus() -> Vec<Document> {
    let mut docs = Vec::new();
    for (source, ai_yes, ai_no, frame_yes, _frame_no, par_yes, par_no) in NEWS_COUNTS {
        let mut ai_docs: Vec<Vec<Paragraph>> = vec![Vec::new(); ai_yes];
        for i in 0..par_yes {
            ai_docs[i % frame_yes].push(labelled_paragraph(true));
        }
        for i in 0..par_no {
            ai_docs[i % ai_yes].push(labelled_paragraph(false));
        }
        for (i, mut paragraphs) in ai_docs.into_iter().enumerate() {
            if paragraphs.is_empty() {
                paragraphs.push(Paragraph::new(0, "background"));
            }
            for (k, p) in paragraphs.iter_mut().enumerate() {
                p.index = k;
            }
            docs.push(Document {
                id: format!("{source}-ai-{i}"),
                source: source.to_string(),
                text: String::new(),
                paragraphs,
                gold_doc_contains_ai: Some(true),
                gold_doc_contains_frame: Some(i < frame_yes),
            });
        }
        for i in 0..ai_no {
            docs.push(Document {
                id: format!("{source}-other-{i}"),
                source: source.to_string(),
                text: String::new(),
                paragraphs: vec![Paragraph::new(0, "markets")],
                gold_doc_contains_ai: Some(false),
                gold_doc_contains_frame: None,
            });
        }
    }
    docs
}

pub fn synth(docs: usize, seed: u64) -> Vec<Document> {
    let cfg = SynthConfig {
        vocab_size: 400,
        docs,
        paragraphs: (2, 4),
        paragraph_tokens: (10, 18),
        imbalance_ratio: 3.0,
        ai_keyword_rate: 0.5,
        ..Default::default()
    };
    synthesize_corpus(&cfg, seed).expect("synthetic corpus")
}

pub fn attention_config(seed: u64) -> AttnConfig {
    AttnConfig {
        hidden: 8,
        d_a: 8,
        epochs: 20,
        learning_rate: 0.01,
        patience: 5,
        seed,
        ..Default::default()
    }
}

/// PV-DBOW features, LR document classifier and a guided attention model.
pub fn attention_bundle(docs: &[Document], seed: u64) -> PipelineBundle {
    let tok = TokenizerConfig::default();
    let embed = EmbedConfig {
        arch: PvArch::Dbow,
        dim: 8,
        epochs: 5,
        min_count: 1,
        infer_epochs: 10,
        seed,
        ..Default::default()
    };
    let features = FeatureSource::train(docs, &tok, &embed).expect("embeddings");
    let data = doc_dataset(docs, &features, &tok, EmbeddingMode::Trained).expect("doc features");
    let weights = compute_class_weights(&data.labels).expect("two classes");
    let spec = ClassifierSpec::new(
        Hyperparams::LogisticRegression {
            penalty: Penalty::L2,
            c: 1.0,
        },
        seed,
    );
    let settings = ClassifierSettings {
        linear_epochs: 30,
        ..Default::default()
    };
    let doc_clf =
        train_classifier(&data.features, &data.labels, &spec, &weights, &settings).expect("doc classifier");
    let words = synthesize_word_embeddings(&corpus_tokens(docs, &tok), 12, seed);
    let cfg = attention_config(seed);
    let examples = paragraph_examples(docs, &tok, false);
    let (attn, _) = train_attention_model(&examples, &cfg, &words).expect("attention model");
    PipelineBundle::new(
        default_keywords(),
        tok,
        features,
        doc_clf,
        ParagraphStage::Attention(attn),
        cfg.span_threshold,
    )
    .expect("consistent bundle")
}
