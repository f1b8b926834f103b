use std::fmt::Display;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::{info, warn};
use serde_json::json;

use framedetect::attention::{train_attention_model, AttentionModel, AttnConfig};
use framedetect::classify::{
    compute_class_weights, grid_for, grid_search, train_classifier, ClassifierKind, ClassifierModel, ClassifierSpec,
    Hyperparams,
};
use framedetect::corpus::{
    compute_stats, corpus_tokens, is_header_line, load_corpus, paragraph_examples, parse_document, read_corpus,
    save_corpus, Document, ParagraphExample,
};
use framedetect::embed::{
    load_unit_embeddings, load_word_embeddings, synthesize_word_embeddings, EmbeddingMode, EmbeddingModel,
    ExternalEmbeddingTable,
};
use framedetect::eval::evaluate_model;
use framedetect::pipeline::{
    doc_dataset, emit_report, load_bundle, paragraph_dataset, run_pipeline, save_bundle, train_corpus_embeddings,
    FeatureSource, LabelledFeatures, ParagraphStage, PipelineBundle, PipelineResult,
};
use framedetect::textprep::TokenizerConfig;

use crate::config::{default_hyperparams, Config};
use crate::{Cli, Command, EvalTask, FeatureArgs, Mode, Task};

/// A failed command: exit code 1 for input errors, 2 for model or configuration errors.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(e: impl Display) -> Self {
        Self {
            code: 1,
            message: e.to_string(),
        }
    }

    fn model(e: impl Display) -> Self {
        Self {
            code: 2,
            message: e.to_string(),
        }
    }
}

impl From<framedetect::Error> for Failure {
    fn from(e: framedetect::Error) -> Self {
        if e.is_model_error() {
            Self::model(e)
        } else {
            Self::input(e)
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::BrokenPipe {
            // Downstream reader went away; not an error for a streaming filter.
            std::process::exit(0);
        }
        Self::input(e)
    }
}

type CmdResult<T = ()> = Result<T, Failure>;

/// Writes to stdout; a closed pipe (`| head`) ends the process quietly.
fn emit(args: std::fmt::Arguments<'_>, newline: bool) {
    let mut out = io::stdout().lock();
    let res = out
        .write_fmt(args)
        .and_then(|_| if newline { out.write_all(b"\n") } else { Ok(()) });
    if let Err(e) = res {
        if e.kind() == io::ErrorKind::BrokenPipe {
            std::process::exit(0);
        }
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

macro_rules! say {
    ($($arg:tt)*) => { emit(format_args!($($arg)*), true) };
}

macro_rules! say_raw {
    ($($arg:tt)*) => { emit(format_args!($($arg)*), false) };
}

struct Ctx {
    config: Config,
    model: Option<PathBuf>,
}

pub fn run(cli: Cli) -> CmdResult {
    let mut config = match &cli.config {
        Some(p) => Config::load(p).map_err(Failure::model)?,
        None => Config::default(),
    };
    if let Some(seed) = cli.seed {
        config.apply_seed(seed);
    }
    config.validate().map_err(Failure::model)?;
    let ctx = Ctx {
        config,
        model: cli.model,
    };
    match cli.command {
        Command::Ingest { corpus, lenient, json } => ingest(&corpus, lenient, json),
        Command::Synth {
            out,
            docs,
            ratio,
            paragraph_ratio,
        } => synth(&ctx, &out, docs, ratio, paragraph_ratio),
        Command::TrainEmbed {
            corpus,
            out,
            arch,
            objective,
            dim,
            epochs,
            min_count,
        } => {
            let mut cfg = ctx.config.embed.clone();
            if let Some(a) = arch {
                cfg.arch = parse_enum(&a)?;
            }
            if let Some(o) = objective {
                cfg.objective = parse_enum(&o)?;
            }
            cfg.dim = dim.unwrap_or(cfg.dim);
            cfg.epochs = epochs.unwrap_or(cfg.epochs);
            cfg.min_count = min_count.unwrap_or(cfg.min_count);
            cfg.validate().map_err(Failure::model)?;
            let docs = load_docs(&corpus)?;
            let t = Instant::now();
            let model = train_corpus_embeddings(&docs, &ctx.config.tokenizer, &cfg)?;
            model.save(&out)?;
            say!(
                "trained {model} in {:.1}s; final epoch loss {:.4}",
                t.elapsed().as_secs_f64(),
                model.epoch_losses().last().copied().unwrap_or(f64::NAN)
            );
            Ok(())
        }
        Command::TrainClf {
            corpus,
            task,
            features,
            classifier,
            out,
        } => train_clf(&ctx, &corpus, task, &features, classifier.as_deref(), &out),
        Command::TrainAttn {
            corpus,
            word_embeddings,
            lambda,
            frame_docs_only,
            out,
            log,
        } => {
            let docs = load_docs(&corpus)?;
            let cfg = attn_config(&ctx, lambda)?;
            let examples = paragraph_examples(&docs, &ctx.config.tokenizer, frame_docs_only);
            let words = word_table(&ctx, word_embeddings.as_deref(), &docs)?;
            let t = Instant::now();
            let (model, training) = train_attention_model(&examples, &cfg, &words)?;
            model.save(&out)?;
            if let Some(p) = log {
                let f = File::create(&p).map_err(|e| Failure::input(format!("{}: {e}", p.display())))?;
                training.write_jsonl(BufWriter::new(f))?;
            }
            let best = training.best();
            say!(
                "trained {} model on {} paragraphs ({} validation) in {:.1}s; best epoch {} (val loss {:.4}, val macro-F1 {:.3}){}",
                if cfg.lambda > 0.0 { "guided self-attention" } else { "self-attention" },
                training.train_size,
                training.val_size,
                t.elapsed().as_secs_f64(),
                training.best_epoch,
                best.map_or(f64::NAN, |e| e.val_loss),
                best.map_or(f64::NAN, |e| e.val_macro_f1),
                if training.stopped_early { ", stopped early" } else { "" }
            );
            Ok(())
        }
        Command::GridSearch {
            corpus,
            task,
            features,
            classifier,
            folds,
            out,
            results,
        } => grid(&ctx, &corpus, task, &features, &classifier, folds, out.as_deref(), results.as_deref()),
        Command::Evaluate {
            corpus,
            task,
            features,
            classifier,
            word_embeddings,
            lambda,
            folds,
            repeats,
            out,
        } => {
            let folds = folds.unwrap_or(ctx.config.eval.folds);
            let repeats = repeats.unwrap_or(ctx.config.eval.repeats);
            let docs = load_docs(&corpus)?;
            let (report, embedding, model_name) = match task {
                EvalTask::Attention => {
                    let cfg = attn_config(&ctx, lambda)?;
                    let words = word_table(&ctx, word_embeddings.as_deref(), &docs)?;
                    let examples = paragraph_examples(&docs, &ctx.config.tokenizer, features.frame_docs_only);
                    let name = if cfg.lambda > 0.0 { "GuidedSelfAttention" } else { "SelfAttention" };
                    let provenance = json!({
                        "task": "paragraph",
                        "embedding": "word vectors",
                        "classifier": name,
                        "attention": cfg,
                        "folds": folds,
                        "repeats": repeats,
                        "seed": ctx.config.seed,
                    });
                    let report = evaluate_attention(&examples, &cfg, &words, folds, repeats, ctx.config.seed, provenance)?;
                    (report, "word vectors".to_string(), name.to_string())
                }
                EvalTask::Doc | EvalTask::Paragraph => {
                    let task = if task == EvalTask::Doc { Task::Doc } else { Task::Paragraph };
                    let hyper = hyperparams(&ctx, task, classifier.as_deref())?;
                    let source = feature_source(&features)?;
                    let data = dataset(&ctx, &docs, task, &source, &features)?;
                    let embedding = match &source {
                        FeatureSource::Inferred { model, .. } => model.config().variant_name(),
                        FeatureSource::External(_) => "external".to_string(),
                    };
                    let provenance = json!({
                        "task": if task == Task::Doc { "doc" } else { "paragraph" },
                        "embedding": embedding,
                        "embedding_mode": mode_name(&source, features.mode),
                        "classifier": hyper.kind().to_string(),
                        "hyperparams": hyper,
                        "folds": folds,
                        "repeats": repeats,
                        "seed": ctx.config.seed,
                    });
                    let settings = ctx.config.classifier_settings;
                    let report = evaluate_model(
                        |train: &[usize], seed| {
                            let (x, y) = subset(&data, train);
                            let w = compute_class_weights(&y)?;
                            train_classifier(&x, &y, &ClassifierSpec::new(hyper, seed), &w, &settings)
                        },
                        |model: &ClassifierModel, test: &[usize]| {
                            let (x, _) = subset(&data, test);
                            Ok(model.predict(&x)?.labels)
                        },
                        &data.labels,
                        folds,
                        repeats,
                        ctx.config.seed,
                        provenance,
                    )?;
                    (report, embedding, hyper.kind().to_string())
                }
            };
            say_raw!("{}", report.table(&embedding, &model_name));
            if report.zero_division {
                say!("note: some folds had a zero denominator; those metrics count as 0");
            }
            if let Some(p) = out {
                write_json(&p, &report)?;
            }
            Ok(())
        }
        Command::Bundle {
            embed,
            unit_embeddings,
            doc_clf,
            par_clf,
            attn,
            out,
        } => {
            let features = feature_source(&FeatureArgs {
                embed,
                unit_embeddings,
                mode: Mode::Infer,
                frame_docs_only: false,
            })?;
            let doc_classifier = ClassifierModel::load(&doc_clf).map_err(Failure::model)?;
            let (paragraph_model, span_threshold) = match (par_clf, attn) {
                (Some(p), _) => (
                    ParagraphStage::Classical(ClassifierModel::load(&p).map_err(Failure::model)?),
                    ctx.config.attention.span_threshold,
                ),
                (None, Some(a)) => {
                    let m = AttentionModel::load(&a).map_err(Failure::model)?;
                    let c = m.config().span_threshold;
                    (ParagraphStage::Attention(m), c)
                }
                (None, None) => return Err(Failure::model("need --par-clf or --attn")),
            };
            let bundle = PipelineBundle::new(
                ctx.config.keywords().map_err(Failure::model)?,
                ctx.config.tokenizer.clone(),
                features,
                doc_classifier,
                paragraph_model,
                span_threshold,
            )
            .map_err(Failure::model)?;
            save_bundle(&bundle, &out)?;
            say!("{}", serde_json::to_string_pretty(&bundle.info()).map_err(Failure::input)?);
            Ok(())
        }
        Command::Detect { input, output, lenient } => detect(&ctx, &input, &output, lenient),
        Command::Report { input, results, out } => {
            let (results, docs, tokenizer) = match results {
                Some(r) => {
                    let docs = read_documents(&input, &ctx.config.tokenizer)?;
                    (read_results(&r)?, docs, ctx.config.tokenizer.clone())
                }
                None => {
                    let bundle = bundle(&ctx)?;
                    let docs = read_documents(&input, &bundle.tokenizer)?;
                    let results = docs
                        .iter()
                        .map(|d| run_pipeline(d, &bundle))
                        .collect::<Result<Vec<_>, _>>()?;
                    (results, docs, bundle.tokenizer.clone())
                }
            };
            emit_report(&results, &docs, &tokenizer, &out)?;
            let flagged: usize = results.iter().map(|r| r.flagged_paragraphs().count()).sum();
            say!("wrote {} ({} documents, {flagged} flagged paragraphs)", out.display(), results.len());
            Ok(())
        }
    }
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> CmdResult<T> {
    serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
        .map_err(|e| Failure::model(format!("{s:?}: {e}")))
}

fn load_docs(path: &Path) -> CmdResult<Vec<Document>> {
    let loaded = if path == Path::new("-") {
        read_corpus(io::stdin().lock(), true)
    } else {
        load_corpus(path, true)
    }
    .map_err(Failure::input)?;
    Ok(loaded.documents)
}

fn ingest(path: &Path, lenient: bool, as_json: bool) -> CmdResult {
    let loaded = load_corpus(path, !lenient).map_err(Failure::input)?;
    let stats = compute_stats(&loaded.documents);
    if as_json {
        let out = json!({
            "documents": loaded.documents.len(),
            "skipped": loaded.skipped.len(),
            "stats": stats,
        });
        say!("{}", serde_json::to_string_pretty(&out).map_err(Failure::input)?);
    } else {
        say_raw!("{stats}");
        if !loaded.skipped.is_empty() {
            say!("skipped {} invalid records:", loaded.skipped.len());
            for s in &loaded.skipped {
                say!("  line {}: {}", s.line, s.reason);
            }
        }
    }
    Ok(())
}

fn synth(ctx: &Ctx, out: &Path, docs: Option<usize>, ratio: Option<f64>, paragraph_ratio: Option<f64>) -> CmdResult {
    let mut cfg = ctx.config.synth.clone();
    cfg.docs = docs.unwrap_or(cfg.docs);
    cfg.imbalance_ratio = ratio.unwrap_or(cfg.imbalance_ratio);
    cfg.paragraph_imbalance_ratio = paragraph_ratio.or(cfg.paragraph_imbalance_ratio);
    let corpus = framedetect::corpus::synthesize_corpus(&cfg, ctx.config.seed).map_err(Failure::model)?;
    save_corpus(out, &corpus)?;
    say_raw!("{}", compute_stats(&corpus));
    Ok(())
}

fn feature_source(args: &FeatureArgs) -> CmdResult<FeatureSource> {
    match (&args.embed, &args.unit_embeddings) {
        (Some(p), _) => Ok(FeatureSource::from_model(
            EmbeddingModel::load(p).map_err(Failure::model)?,
        )),
        (None, Some(p)) => Ok(FeatureSource::External(load_unit_embeddings(p)?)),
        (None, None) => Err(Failure::model("need --embed or --unit-embeddings")),
    }
}

fn mode_of(mode: Mode) -> EmbeddingMode {
    match mode {
        Mode::Trained => EmbeddingMode::Trained,
        Mode::Infer => EmbeddingMode::Infer,
    }
}

fn mode_name(source: &FeatureSource, mode: Mode) -> &'static str {
    match (source, mode) {
        (FeatureSource::External(_), _) => "external",
        (_, Mode::Trained) => "trained",
        (_, Mode::Infer) => "infer_vector",
    }
}

fn dataset(
    ctx: &Ctx,
    docs: &[Document],
    task: Task,
    source: &FeatureSource,
    args: &FeatureArgs,
) -> CmdResult<LabelledFeatures> {
    let tok = &ctx.config.tokenizer;
    let mode = mode_of(args.mode);
    let data = match task {
        Task::Doc => doc_dataset(docs, source, tok, mode)?,
        Task::Paragraph => paragraph_dataset(docs, source, tok, mode, args.frame_docs_only)?,
    };
    if data.labels.is_empty() {
        return Err(Failure::input("corpus has no labelled examples for this task"));
    }
    Ok(data)
}

fn subset(data: &LabelledFeatures, idx: &[usize]) -> (Vec<Vec<f64>>, Vec<bool>) {
    idx.iter()
        .map(|&i| (data.features[i].clone(), data.labels[i]))
        .unzip()
}

fn hyperparams(ctx: &Ctx, task: Task, classifier: Option<&str>) -> CmdResult<Hyperparams> {
    let configured = match task {
        Task::Doc => ctx.config.doc_classifier,
        Task::Paragraph => ctx.config.paragraph_classifier,
    };
    match classifier {
        None => Ok(configured),
        Some(name) => {
            let kind: ClassifierKind = name.parse().map_err(Failure::model)?;
            Ok(if configured.kind() == kind {
                configured
            } else {
                default_hyperparams(kind)
            })
        }
    }
}

fn train_clf(
    ctx: &Ctx,
    corpus: &Path,
    task: Task,
    features: &FeatureArgs,
    classifier: Option<&str>,
    out: &Path,
) -> CmdResult {
    let hyper = hyperparams(ctx, task, classifier)?;
    let docs = load_docs(corpus)?;
    let source = feature_source(features)?;
    let data = dataset(ctx, &docs, task, &source, features)?;
    let w = compute_class_weights(&data.labels)?;
    let spec = ClassifierSpec::new(hyper, ctx.config.seed);
    let t = Instant::now();
    let model = train_classifier(&data.features, &data.labels, &spec, &w, &ctx.config.classifier_settings)?;
    model.save(out)?;
    let pred = model.predict(&data.features)?;
    let correct = pred.labels.iter().zip(&data.labels).filter(|(a, b)| a == b).count();
    say!(
        "trained {hyper} on {} examples ({} Yes, weights No={:.3} Yes={:.3}) in {:.1}s; training accuracy {:.3}",
        data.labels.len(),
        data.labels.iter().filter(|&&l| l).count(),
        w.no,
        w.yes,
        t.elapsed().as_secs_f64(),
        correct as f64 / data.labels.len() as f64
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn grid(
    ctx: &Ctx,
    corpus: &Path,
    task: Task,
    features: &FeatureArgs,
    classifier: &str,
    folds: Option<usize>,
    out: Option<&Path>,
    results: Option<&Path>,
) -> CmdResult {
    let kind: ClassifierKind = classifier.parse().map_err(Failure::model)?;
    let docs = load_docs(corpus)?;
    let source = feature_source(features)?;
    let data = dataset(ctx, &docs, task, &source, features)?;
    let folds = folds.unwrap_or(ctx.config.eval.grid_folds);
    let grid = grid_for(kind);
    info!("searching {} {kind} configurations with {folds} folds", grid.len());
    let r = grid_search(
        &data.features,
        &data.labels,
        &grid,
        folds,
        ctx.config.seed,
        &ctx.config.classifier_settings,
    )?;
    for (i, e) in r.entries.iter().enumerate() {
        say!(
            "{} {:.4} ± {:.4}  {}",
            if i == r.best { "*" } else { " " },
            e.macro_f1.mean,
            e.macro_f1.std,
            e.hyper
        );
    }
    say!("best: {}", r.best_entry().hyper);
    if let Some(p) = out {
        r.model.save(p)?;
    }
    if let Some(p) = results {
        write_json(p, &json!({ "best": r.best, "entries": r.entries }))?;
    }
    Ok(())
}

fn attn_config(ctx: &Ctx, lambda: Option<f64>) -> CmdResult<AttnConfig> {
    let mut cfg = ctx.config.attention;
    if let Some(l) = lambda {
        cfg.lambda = l;
    }
    cfg.validate().map_err(Failure::model)?;
    Ok(cfg)
}

fn word_table(ctx: &Ctx, path: Option<&Path>, docs: &[Document]) -> CmdResult<ExternalEmbeddingTable> {
    match path {
        Some(p) => Ok(load_word_embeddings(p)?),
        None => {
            warn!(
                "no --word-embeddings given; using random {}-dimensional word vectors",
                ctx.config.word_dim
            );
            Ok(synthesize_word_embeddings(
                &corpus_tokens(docs, &ctx.config.tokenizer),
                ctx.config.word_dim,
                ctx.config.seed,
            ))
        }
    }
}

fn evaluate_attention(
    examples: &[ParagraphExample],
    cfg: &AttnConfig,
    words: &ExternalEmbeddingTable,
    folds: usize,
    repeats: usize,
    seed: u64,
    provenance: serde_json::Value,
) -> CmdResult<framedetect::eval::EvalReport> {
    let labels: Vec<bool> = examples.iter().map(|e| e.label).collect();
    let report = evaluate_model(
        |train: &[usize], fold_seed| {
            let subset: Vec<ParagraphExample> = train.iter().map(|&i| examples[i].clone()).collect();
            let cfg = AttnConfig {
                seed: fold_seed,
                ..*cfg
            };
            Ok(train_attention_model(&subset, &cfg, words)?.0)
        },
        |model: &AttentionModel, test: &[usize]| {
            test.iter()
                .map(|&i| {
                    let tokens = &examples[i].tokens;
                    if tokens.is_empty() {
                        Ok(false)
                    } else {
                        Ok(model.forward(tokens)?.label())
                    }
                })
                .collect()
        },
        &labels,
        folds,
        repeats,
        seed,
        provenance,
    )?;
    Ok(report)
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> CmdResult {
    let f = File::create(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let mut w = BufWriter::new(f);
    serde_json::to_writer_pretty(&mut w, value).map_err(Failure::input)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn bundle(ctx: &Ctx) -> CmdResult<PipelineBundle> {
    let path = ctx
        .model
        .as_deref()
        .ok_or_else(|| Failure::model("this command needs --model <bundle>"))?;
    load_bundle(path).map_err(Failure::model)
}

fn open_input(path: &Path) -> CmdResult<Box<dyn BufRead>> {
    if path == Path::new("-") {
        Ok(Box::new(BufReader::new(io::stdin())))
    } else {
        let f = File::open(path).map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
        Ok(Box::new(BufReader::new(f)))
    }
}

/// Streams document records one at a time; corpus header lines are skipped.
fn for_each_document(
    path: &Path,
    tokenizer: &TokenizerConfig,
    lenient: bool,
    mut f: impl FnMut(Document) -> CmdResult,
) -> CmdResult<usize> {
    let mut skipped = 0;
    for (n, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || is_header_line(&line) {
            continue;
        }
        match parse_document(&line, n + 1, tokenizer) {
            Ok(doc) => f(doc)?,
            Err(e) if lenient => {
                warn!("skipping line {}: {e}", n + 1);
                skipped += 1;
            }
            Err(e) => return Err(Failure::input(e)),
        }
    }
    Ok(skipped)
}

fn read_documents(path: &Path, tokenizer: &TokenizerConfig) -> CmdResult<Vec<Document>> {
    let mut docs = Vec::new();
    for_each_document(path, tokenizer, false, |d| {
        docs.push(d);
        Ok(())
    })?;
    Ok(docs)
}

fn read_results(path: &Path) -> CmdResult<Vec<PipelineResult>> {
    let mut out = Vec::new();
    for (n, line) in open_input(path)?.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|e| Failure::input(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

fn detect(ctx: &Ctx, input: &Path, output: &Path, lenient: bool) -> CmdResult {
    let bundle = bundle(ctx)?;
    let mut w: Box<dyn Write> = if output == Path::new("-") {
        Box::new(BufWriter::new(io::stdout().lock()))
    } else {
        let f = File::create(output).map_err(|e| Failure::input(format!("{}: {e}", output.display())))?;
        Box::new(BufWriter::new(f))
    };
    let (mut n, mut ai, mut frames, mut flagged, mut total_us) = (0usize, 0usize, 0usize, 0usize, 0u64);
    let skipped = for_each_document(input, &bundle.tokenizer, lenient, |doc| {
        let r = run_pipeline(&doc, &bundle)?;
        n += 1;
        ai += usize::from(r.doc_contains_ai);
        frames += usize::from(r.doc_contains_frame == Some(true));
        flagged += r.flagged_paragraphs().count();
        total_us += r.timing.total_us;
        serde_json::to_writer(&mut w, &r).map_err(Failure::input)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    })?;
    eprintln!(
        "{n} documents ({skipped} skipped): {ai} mention AI, {frames} contain a frame, {flagged} flagged paragraphs; mean latency {:.2} ms",
        if n > 0 { total_us as f64 / n as f64 / 1000.0 } else { 0.0 }
    );
    Ok(())
}
