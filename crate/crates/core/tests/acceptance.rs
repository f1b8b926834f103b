//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

mod common;

use std::collections::HashSet;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use framedetect::attention::{
    attention_gradient_check, gold_span_mass, kl_divergence, normalize_span_encoding, train_attention_model,
    AttnConfig, Guidance, KlDirection,
};
use framedetect::classify::{
    compute_class_weights, grid_search, lr_grid, mlp_gradient_check, logistic_gradient_check, mlp_grid, rf_grid,
    svm_grid, train_classifier, Activation, ClassifierSettings, ClassifierSpec, Hyperparams, Kernel, LearningRate,
    MaxFeatures, Penalty,
};
use framedetect::corpus::{
    compute_stats, corpus_tokens, paragraph_examples, synthesize_corpus, write_corpus, ParagraphExample,
    SynthConfig,
};
use framedetect::embed::{self, synthesize_word_embeddings, train_paragraph_vectors, EmbedConfig, PvArch, PvObjective};
use framedetect::eval::{prf, repeated_stratified_kfold, stratified_kfold, ClassMetrics, Prf};
use framedetect::gradcheck::GradCheckReport;
use framedetect::pipeline::{run_pipeline, PipelineBundle, PipelineResult};
use framedetect::seeded_rng;
use framedetect::textprep::TokenizerConfig;

const SEEDS: [u64; 5] = [11, 12, 13, 14, 15];

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

/// Per-seed comparison of the guided and unguided attention models on a
/// held-out fifth of the synthetic paragraphs.
struct SeedRun {
    seed: u64,
    guided_mass: Vec<f64>,
    unguided_mass: Vec<f64>,
    /// Positive test paragraphs, and how many of them got at least 3x the uniform mass.
    positives: usize,
    guided_above_3x: usize,
    guided_recall: f64,
    unguided_recall: f64,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

fn localization_corpus(seed: u64) -> Vec<ParagraphExample> {
    let cfg = SynthConfig {
        docs: 500,
        vocab_size: 2000,
        paragraphs: (3, 5),
        paragraph_tokens: (15, 30),
        imbalance_ratio: 3.0,
        paragraph_imbalance_ratio: Some(13.0),
        ..Default::default()
    };
    let docs = synthesize_corpus(&cfg, seed).expect("synthetic corpus");
    paragraph_examples(&docs, &TokenizerConfig::default(), false)
}

fn attn_config(lambda: f64, seed: u64) -> AttnConfig {
    AttnConfig {
        hidden: 16,
        d_a: 16,
        lambda,
        epochs: 30,
        batch_size: 32,
        learning_rate: 0.01,
        patience: 6,
        seed,
        ..Default::default()
    }
}

fn run_seed(seed: u64) -> SeedRun {
    let examples = localization_corpus(seed);
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    let fold = stratified_kfold(&labels, 5, seed).expect("folds").remove(0);
    let train: Vec<ParagraphExample> = fold.train.iter().map(|&i| examples[i].clone()).collect();
    let test: Vec<&ParagraphExample> = fold.test.iter().map(|&i| &examples[i]).collect();
    let mut vocab: Vec<String> = examples.iter().flat_map(|e| e.tokens.clone()).collect();
    vocab.sort();
    vocab.dedup();
    let words = synthesize_word_embeddings(&vocab, 16, seed);

    let (guided, unguided) = rayon::join(
        || train_attention_model(&train, &attn_config(1.0, seed), &words).expect("guided").0,
        || train_attention_model(&train, &attn_config(0.0, seed), &words).expect("unguided").0,
    );

    let mut g_mass = Vec::new();
    let mut u_mass = Vec::new();
    let mut above = 0;
    let (mut g_hits, mut u_hits) = (0usize, 0usize);
    for ex in test.iter().filter(|e| e.label) {
        let mask = span_mask(ex);
        let uniform = mask.iter().filter(|&&m| m > 0).count() as f64 / mask.len() as f64;
        let g = guided.forward(&ex.tokens).expect("forward");
        let u = unguided.forward(&ex.tokens).expect("forward");
        let gm = gold_span_mass(&g.weights, &mask);
        if gm >= 3.0 * uniform {
            above += 1;
        }
        g_mass.push(gm);
        u_mass.push(gold_span_mass(&u.weights, &mask));
        g_hits += usize::from(g.label());
        u_hits += usize::from(u.label());
    }
    let positives = g_mass.len();
    SeedRun {
        seed,
        guided_mass: g_mass,
        unguided_mass: u_mass,
        positives,
        guided_above_3x: above,
        guided_recall: g_hits as f64 / positives as f64,
        unguided_recall: u_hits as f64 / positives as f64,
    }
}

fn span_mask(ex: &ParagraphExample) -> Vec<u8> {
    let mut mask = vec![0u8; ex.tokens.len()];
    for s in &ex.spans {
        mask[s.start_token..s.end_token].iter_mut().for_each(|m| *m = 1);
    }
    mask
}

/// Medians are taken over the positive test paragraphs of all seeds together.
fn criterion_localization(runs: &[SeedRun]) -> Outcome {
    let guided = median(runs.iter().flat_map(|r| r.guided_mass.clone()).collect());
    let unguided = median(runs.iter().flat_map(|r| r.unguided_mass.clone()).collect());
    let seed_wins = runs
        .iter()
        .filter(|r| median(r.guided_mass.clone()) > median(r.unguided_mass.clone()))
        .count();
    let positives: usize = runs.iter().map(|r| r.positives).sum();
    let above: usize = runs.iter().map(|r| r.guided_above_3x).sum();
    let share = above as f64 / positives as f64;
    outcome(
        guided > unguided && share >= 0.8,
        format!(
            "median gold mass guided {guided:.3} vs unguided {unguided:.3} (guided ahead in {seed_wins}/5 seeds); \
             guided >= 3x uniform on {above}/{positives} ({:.1}%)",
            share * 100.0
        ),
    )
}

fn criterion_recall(runs: &[SeedRun]) -> Outcome {
    let wins = runs.iter().filter(|r| r.guided_recall >= r.unguided_recall).count();
    let recalls: Vec<String> = runs
        .iter()
        .map(|r| format!("{}:{:.3}/{:.3}", r.seed, r.guided_recall, r.unguided_recall))
        .collect();
    outcome(
        wins >= 4,
        format!("guided >= unguided Yes-recall in {wins}/5 seeds ({})", recalls.join(" ")),
    )
}

fn criterion_kl() -> Outcome {
    let g = normalize_span_encoding(&[1, 0, 1, 0, 0]);
    let normalized = g.probs == [0.5, 0.0, 0.5, 0.0, 0.0];
    let self_kl = kl_divergence(&g.probs, &g.probs, 0.0, KlDirection::GoldToAttention).unwrap();
    let ln2 = kl_divergence(&[1.0, 0.0], &[0.5, 0.5], 1e-8, KlDirection::GoldToAttention).unwrap();
    outcome(
        normalized && self_kl.abs() <= 1e-9 && (ln2 - std::f64::consts::LN_2).abs() <= 1e-6,
        format!("normalized {:?}; KL(g||g) = {self_kl:e}; KL([1,0]||[.5,.5]) = {ln2:.9}", g.probs),
    )
}

fn criterion_gradients() -> Outcome {
    let started = Instant::now();
    let mut checks: Vec<(String, GradCheckReport)> = vec![
        ("attention l=0".into(), attention_gradient_check(&Guidance::new(0.0), 1)),
        ("attention l=1".into(), attention_gradient_check(&Guidance::new(1.0), 1)),
        ("lr l2".into(), logistic_gradient_check(Penalty::L2, 1)),
        ("lr elasticnet".into(), logistic_gradient_check(Penalty::Elasticnet, 1)),
    ];
    for a in [Activation::Logistic, Activation::Identity, Activation::Tanh, Activation::Relu] {
        checks.push((format!("mlp {a:?}"), mlp_gradient_check(a, 1)));
    }
    for arch in [PvArch::Dbow, PvArch::Dm] {
        for objective in [PvObjective::Hs, PvObjective::Neg] {
            checks.push((format!("pv {arch:?}-{objective:?}"), embed::gradient_check(arch, objective, 1)));
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let worst = checks
        .iter()
        .max_by(|a, b| a.1.max_rel_error.total_cmp(&b.1.max_rel_error))
        .unwrap();
    let failing: Vec<&str> = checks.iter().filter(|c| !c.1.passes(1e-4)).map(|c| c.0.as_str()).collect();
    outcome(
        failing.is_empty() && elapsed < 120.0,
        format!(
            "{} checks, worst {} at {:.2e}, {elapsed:.1}s{}",
            checks.len(),
            worst.0,
            worst.1.max_rel_error,
            if failing.is_empty() { String::new() } else { format!("; failing {failing:?}") }
        ),
    )
}

fn fold_balance_holds(labels: &[bool], seed: u64) -> bool {
    let k = 5;
    let Ok(folds) = repeated_stratified_kfold(labels, k, 3, seed) else {
        return false;
    };
    let n_yes = labels.iter().filter(|&&l| l).count();
    let n_no = labels.len() - n_yes;
    let within = |count: usize, total: usize| count == total / k || count == total.div_ceil(k);
    folds.chunks(k).all(|repeat| {
        let mut seen = HashSet::new();
        let sizes: Vec<usize> = repeat.iter().map(|f| f.test.len()).collect();
        let spread = sizes.iter().max().unwrap() - sizes.iter().min().unwrap();
        let disjoint = repeat.iter().flat_map(|f| &f.test).all(|&i| seen.insert(i));
        let classes = repeat.iter().all(|f| {
            let yes = f.test.iter().filter(|&&i| labels[i]).count();
            within(yes, n_yes) && within(f.test.len() - yes, n_no) && f.train.len() + f.test.len() == labels.len()
        });
        disjoint && seen.len() == labels.len() && spread <= 1 && classes
    })
}

fn criterion_metrics() -> Outcome {
    let class = |f1: f64| ClassMetrics {
        f1,
        ..Default::default()
    };
    let m = Prf::from_class_metrics(class(0.81), class(0.98)).macro_f1();
    let three = format!("{m:.3}");
    let gold = [true, true, false, false, false];
    let pred = [true, false, false, false, true];
    let counted = prf(&gold, &pred).unwrap();
    let by_hand = (0.5 + 2.0 / 3.0) / 2.0;
    let counted_ok = (counted.macro_f1() - by_hand).abs() < 1e-12;

    let mut rng = seeded_rng(5);
    let mut bad = 0;
    for trial in 0..1000u64 {
        let n = rng.random_range(10..300);
        let p = rng.random_range(0.05..0.95);
        let mut labels: Vec<bool> = (0..n).map(|_| rng.random_bool(p)).collect();
        for i in 0..5 {
            labels[i] = true;
            labels[n - 1 - i] = false;
        }
        bad += usize::from(!fold_balance_holds(&labels, trial));
    }
    outcome(
        three == "0.895" && (m - 0.895).abs() < 1e-12 && counted_ok && bad == 0,
        format!("macro F1 from (0.81, 0.98) = {three}; fold balance violated on {bad}/1000 label vectors"),
    )
}

fn criterion_grids() -> Outcome {
    let poly_only = svm_grid().iter().all(|h| match h {
        Hyperparams::Svm { kernel, degree, .. } => (*kernel == Kernel::Poly) == degree.is_some(),
        _ => false,
    });
    let mut rng = seeded_rng(8);
    let x: Vec<Vec<f64>> = (0..40).map(|_| (0..3).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<bool> = x.iter().map(|r| r[0] + 0.3 * r[1] > 0.2).collect();
    let settings = ClassifierSettings {
        linear_epochs: 10,
        mlp_epochs: 10,
        ..Default::default()
    };
    let searched: Vec<usize> = [lr_grid(), svm_grid(), mlp_grid(), rf_grid()]
        .par_iter()
        .map(|g| grid_search(&x, &y, g, 3, 1, &settings).map(|r| r.entries.len()).unwrap_or(0))
        .collect();
    let sizes = [lr_grid().len(), svm_grid().len(), mlp_grid().len(), rf_grid().len()];
    outcome(
        sizes == [15, 30, 48, 12] && searched == sizes && poly_only,
        format!(
            "LR {} / SVM {} / MLP {} / RF {} configs searched; SVM = 5 C x (rbf + linear + 4 poly degrees), \
             degree set on poly only",
            searched[0], searched[1], searched[2], searched[3]
        ),
    )
}

fn criterion_weights() -> Outcome {
    let stats = compute_stats(&common::news_shaped_corpus());
    let counts = stats.totals.doc_contains_frame;
    let labels: Vec<bool> = (0..counts.total()).map(|i| i < counts.yes).collect();
    let w = compute_class_weights(&labels).unwrap();
    let ratio = w.yes / w.no;
    outcome(
        (counts.yes, counts.no) == (942, 13130) && (ratio - 13130.0 / 942.0).abs() <= 1e-9,
        format!("w_yes {:.6} / w_no {:.6} = {ratio:.12}", w.yes, w.no),
    )
}

fn criterion_pipeline() -> Outcome {
    let bundle = common::attention_bundle(&common::synth(150, 40), 40);
    let docs = common::synth(1000, 41);
    let results: Vec<PipelineResult> = docs.par_iter().map(|d| run_pipeline(d, &bundle).unwrap()).collect();
    let violations = results.iter().filter(|r| !r.respects_short_circuit()).count();
    let bytes = bundle.to_bytes().unwrap();
    let reloaded = PipelineBundle::from_bytes(&bytes).unwrap();
    let again: Vec<PipelineResult> = docs.par_iter().map(|d| run_pipeline(d, &reloaded).unwrap()).collect();
    let identical = results
        .iter()
        .zip(&again)
        .filter(|(a, b)| a.without_timing() == b.without_timing())
        .count();
    let same_bytes = reloaded.to_bytes().unwrap() == bytes;
    let reached = results.iter().filter(|r| r.paragraphs.is_some()).count();
    outcome(
        violations == 0 && identical == docs.len() && same_bytes,
        format!(
            "{} documents, {violations} short-circuit violations, {reached} reached the paragraph stage; \
             {identical} identical after reload, bundle bytes {}",
            docs.len(),
            if same_bytes { "identical" } else { "differ" }
        ),
    )
}

/// Runs `train` twice and reports whether the persisted bytes agree.
fn twice<F: Fn() -> Vec<u8> + Sync>(train: F) -> bool {
    let (a, b) = rayon::join(&train, &train);
    a == b
}

fn criterion_determinism() -> Outcome {
    let docs = common::synth(60, 50);
    let tok = TokenizerConfig::default();
    let units: Vec<Vec<String>> = docs.iter().map(|d| d.tokens(&tok)).collect();
    let mut checks: Vec<(String, bool)> = Vec::new();

    let synth_bytes = || {
        let mut out = Vec::new();
        write_corpus(&mut out, &common::synth(60, 50)).unwrap();
        out
    };
    checks.push(("synthesize_corpus".into(), twice(synth_bytes)));
    for arch in [PvArch::Dbow, PvArch::Dm] {
        for objective in [PvObjective::Hs, PvObjective::Neg] {
            let cfg = EmbedConfig {
                arch,
                objective,
                dim: 8,
                epochs: 3,
                min_count: 1,
                ..Default::default()
            };
            let ok = twice(|| train_paragraph_vectors(&units, &cfg).unwrap().to_bytes().unwrap());
            checks.push((format!("train_paragraph_vectors {}", cfg.variant_name()), ok));
        }
    }

    let mut rng = seeded_rng(3);
    let x: Vec<Vec<f64>> = (0..60).map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
    let y: Vec<bool> = x.iter().map(|r| r[0] - r[2] > 0.3).collect();
    let weights = compute_class_weights(&y).unwrap();
    let settings = ClassifierSettings {
        linear_epochs: 10,
        mlp_epochs: 20,
        ..Default::default()
    };
    let hypers = [
        Hyperparams::LogisticRegression {
            penalty: Penalty::Elasticnet,
            c: 10.0,
        },
        Hyperparams::Svm {
            kernel: Kernel::Rbf,
            c: 1.0,
            degree: None,
        },
        Hyperparams::Svm {
            kernel: Kernel::Linear,
            c: 1.0,
            degree: None,
        },
        Hyperparams::RandomForest {
            n_estimators: 10,
            max_features: MaxFeatures::Sqrt,
        },
        Hyperparams::Mlp {
            hidden: 100,
            learning_rate: LearningRate::Adaptive,
            activation: Activation::Tanh,
            alpha: 0.001,
        },
    ];
    for h in hypers {
        let spec = ClassifierSpec::new(h, 4);
        let ok = twice(|| train_classifier(&x, &y, &spec, &weights, &settings).unwrap().to_bytes().unwrap());
        checks.push((format!("train_classifier {h}"), ok));
    }
    let ok = twice(|| {
        let r = grid_search(&x, &y, &lr_grid(), 3, 2, &settings).unwrap();
        let mut out = serde_json::to_vec(&r.entries).unwrap();
        out.extend(r.model.to_bytes().unwrap());
        out
    });
    checks.push(("grid_search".into(), ok));

    let examples = paragraph_examples(&docs, &tok, false);
    let words = synthesize_word_embeddings(&corpus_tokens(&docs, &tok), 8, 1);
    for lambda in [0.0, 1.0] {
        let cfg = AttnConfig {
            hidden: 6,
            d_a: 4,
            epochs: 3,
            lambda,
            ..Default::default()
        };
        let ok = twice(|| train_attention_model(&examples, &cfg, &words).unwrap().0.to_bytes().unwrap());
        checks.push((format!("train_attention_model lambda={lambda}"), ok));
    }
    checks.push((
        "pipeline bundle".into(),
        twice(|| common::attention_bundle(&docs, 6).to_bytes().unwrap()),
    ));

    let failing: Vec<&str> = checks.iter().filter(|c| !c.1).map(|c| c.0.as_str()).collect();
    outcome(
        failing.is_empty(),
        format!(
            "{}/{} training entry points byte-identical across runs{}",
            checks.len() - failing.len(),
            checks.len(),
            if failing.is_empty() { String::new() } else { format!("; differing {failing:?}") }
        ),
    )
}

fn main() {
    let started = Instant::now();
    let runs: Vec<SeedRun> = SEEDS.par_iter().map(|&s| run_seed(s)).collect();
    let results = vec![
        (1, "guided attention localizes frames", criterion_localization(&runs)),
        (2, "guided Yes-recall ordering", criterion_recall(&runs)),
        (3, "KL objective", criterion_kl()),
        (4, "gradient checks", criterion_gradients()),
        (5, "metrics and fold balance", criterion_metrics()),
        (6, "grid conformance", criterion_grids()),
        (7, "balanced class weights", criterion_weights()),
        (8, "pipeline contract and bundle round trip", criterion_pipeline()),
        (9, "training determinism", criterion_determinism()),
    ];
    let mut failed = 0;
    for (n, name, o) in &results {
        let tag = if o.passed { "PASS" } else { "FAIL" };
        failed += usize::from(!o.passed);
        println!("criterion {n}: {tag} {name}: {}", o.detail);
    }
    println!("acceptance: {} passed, {failed} failed in {:.1}s", results.len() - failed, started.elapsed().as_secs_f64());
    if failed > 0 {
        std::process::exit(1);
    }
}
