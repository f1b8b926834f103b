use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

const CONFIG: &str = r#"{
  "synth": {"docs": 60, "vocab_size": 300, "paragraphs": [2, 4], "paragraph_tokens": [10, 18], "imbalance_ratio": 3.0},
  "embed": {"dim": 8, "epochs": 5, "min_count": 1, "infer_epochs": 10},
  "attention": {"hidden": 8, "d_a": 4, "epochs": 6},
  "word_dim": 8,
  "classifier_settings": {"linear_epochs": 20},
  "eval": {"folds": 3, "repeats": 2}
}"#;

struct Workdir {
    dir: tempfile::TempDir,
}

impl Workdir {
    fn new() -> Self {
        let w = Self {
            dir: tempfile::tempdir().unwrap(),
        };
        std::fs::write(w.path("cfg.json"), CONFIG).unwrap();
        w
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_framedetect"));
        c.current_dir(self.dir.path()).arg("--config").arg("cfg.json").args(args);
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn with_stdin(&self, args: &[&str], input: &[u8]) -> Output {
        let mut child = self
            .cmd(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap();
        child.stdin.take().unwrap().write_all(input).unwrap();
        child.wait_with_output().unwrap()
    }

    /// Synthetic corpus plus embedding, document classifier and attention model.
    fn trained(&self) {
        self.ok(&["--seed", "3", "synth", "-o", "corpus.jsonl"]);
        self.ok(&["train-embed", "corpus.jsonl", "-o", "embed.bin"]);
        self.ok(&["train-clf", "corpus.jsonl", "--task", "doc", "--embed", "embed.bin", "-o", "doc.clf"]);
        self.ok(&["train-attn", "corpus.jsonl", "-o", "par.att", "--log", "attn.jsonl"]);
    }
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn jsonl(text: &str) -> Vec<Value> {
    text.lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn check_short_circuit(r: &Value) {
    if r["doc_contains_ai"] == false {
        assert!(r.get("doc_contains_frame").is_none(), "{r}");
    }
    if r.get("doc_contains_frame") != Some(&Value::Bool(true)) {
        assert!(r.get("paragraphs").is_none(), "{r}");
    }
}

#[test]
fn end_to_end_attention_bundle() {
    let w = Workdir::new();
    w.trained();
    let stats = w.ok(&["ingest", "corpus.jsonl"]);
    assert!(stats.contains("ParContainsFrame"));
    let log = std::fs::read_to_string(w.path("attn.jsonl")).unwrap();
    for e in jsonl(&log) {
        for key in ["epoch", "train_loss", "val_loss", "val_macro_f1"] {
            assert!(e.get(key).is_some(), "{e}");
        }
    }

    let info = w.ok(&["bundle", "--embed", "embed.bin", "--doc-clf", "doc.clf", "--attn", "par.att", "-o", "b.bdl"]);
    assert!(info.contains("\"feature_source\": \"infer_vector\""));

    // Streaming from stdin to stdout.
    let corpus = std::fs::read(w.path("corpus.jsonl")).unwrap();
    let out = w.with_stdin(&["--model", "b.bdl", "detect"], &corpus);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = jsonl(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(results.len(), 60);
    results.iter().for_each(check_short_circuit);
    for r in &results {
        for p in r["paragraphs"].as_array().into_iter().flatten() {
            assert!(p["attention"].is_array());
        }
    }

    w.ok(&["--model", "b.bdl", "detect", "--input", "corpus.jsonl", "--output", "results.jsonl"]);
    let html = w.ok(&["report", "--input", "corpus.jsonl", "--results", "results.jsonl", "-o", "r.html"]);
    assert!(html.contains("60 documents"));
    let page = std::fs::read_to_string(w.path("r.html")).unwrap();
    assert!(page.starts_with("<!DOCTYPE html>"));
    assert_eq!(page.matches("<section>").count(), 60);
    w.ok(&["--model", "b.bdl", "report", "--input", "corpus.jsonl", "-o", "r2.html"]);
    assert_eq!(page, std::fs::read_to_string(w.path("r2.html")).unwrap());
}

#[test]
fn classical_bundle_and_external_features() {
    let w = Workdir::new();
    w.trained();
    w.ok(&["train-clf", "corpus.jsonl", "--task", "paragraph", "--embed", "embed.bin", "--classifier", "svm", "-o", "par.clf"]);
    w.ok(&["bundle", "--embed", "embed.bin", "--doc-clf", "doc.clf", "--par-clf", "par.clf", "-o", "c.bdl"]);
    w.ok(&["--model", "c.bdl", "detect", "--input", "corpus.jsonl", "--output", "out.jsonl"]);
    let results = jsonl(&std::fs::read_to_string(w.path("out.jsonl")).unwrap());
    results.iter().for_each(check_short_circuit);
    assert!(results
        .iter()
        .flat_map(|r| r["paragraphs"].as_array().into_iter().flatten())
        .all(|p| p.get("attention").is_none()));

    // Unit embeddings keyed by document id drive a document classifier.
    let corpus = std::fs::read_to_string(w.path("corpus.jsonl")).unwrap();
    let mut units = String::new();
    for (i, doc) in jsonl(&corpus).iter().skip(1).enumerate() {
        let id = doc["id"].as_str().unwrap();
        let v: Vec<f64> = (0..4).map(|k| ((i * 7 + k) as f64).sin()).collect();
        units.push_str(&serde_json::json!({"id": id, "vector": v}).to_string());
        units.push('\n');
    }
    std::fs::write(w.path("units.jsonl"), units).unwrap();
    let out = w.ok(&["train-clf", "corpus.jsonl", "--task", "doc", "--unit-embeddings", "units.jsonl", "--classifier", "rf", "-o", "ext.clf"]);
    assert!(out.contains("RF("));
}

#[test]
fn grid_search_and_evaluate_write_json() {
    let w = Workdir::new();
    w.trained();
    let out = w.ok(&[
        "grid-search", "corpus.jsonl", "--task", "doc", "--embed", "embed.bin", "--classifier", "lr", "--folds", "3",
        "--results", "grid.json", "-o", "best.clf",
    ]);
    assert!(out.contains("best: LR("));
    let grid: Value = serde_json::from_str(&std::fs::read_to_string(w.path("grid.json")).unwrap()).unwrap();
    assert_eq!(grid["entries"].as_array().unwrap().len(), 15);
    assert!(w.path("best.clf").exists());

    let table = w.ok(&["evaluate", "corpus.jsonl", "--task", "doc", "--embed", "embed.bin", "-o", "eval.json"]);
    assert!(table.contains("Macro-average"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(w.path("eval.json")).unwrap()).unwrap();
    assert_eq!(report["folds"].as_array().unwrap().len(), 6);
    assert_eq!(report["provenance"]["embedding_mode"], "trained");

    let table = w.ok(&["evaluate", "corpus.jsonl", "--task", "attention", "--lambda", "0", "--repeats", "1"]);
    assert!(table.contains("SelfAttention") && !table.contains("Guided"));
}

#[test]
fn seeded_training_is_reproducible() {
    let w = Workdir::new();
    w.ok(&["--seed", "5", "synth", "-o", "a.jsonl"]);
    w.ok(&["--seed", "5", "synth", "-o", "b.jsonl"]);
    let a = std::fs::read(w.path("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(w.path("b.jsonl")).unwrap());
    for name in ["e1.bin", "e2.bin"] {
        w.ok(&["--seed", "5", "train-embed", "a.jsonl", "-o", name]);
    }
    assert_eq!(std::fs::read(w.path("e1.bin")).unwrap(), std::fs::read(w.path("e2.bin")).unwrap());
    w.ok(&["--seed", "6", "train-embed", "a.jsonl", "-o", "e3.bin"]);
    assert_ne!(std::fs::read(w.path("e1.bin")).unwrap(), std::fs::read(w.path("e3.bin")).unwrap());
}

#[test]
fn flags_override_config() {
    let w = Workdir::new();
    w.ok(&["synth", "-o", "c.jsonl", "--docs", "14", "--ratio", "6"]);
    let stats = w.ok(&["ingest", "c.jsonl", "--json"]);
    let v: Value = serde_json::from_str(&stats).unwrap();
    assert_eq!(v["documents"], 14);
}

#[test]
fn exit_codes() {
    let w = Workdir::new();
    w.ok(&["synth", "-o", "c.jsonl", "--docs", "20"]);

    // Model and configuration problems exit with 2.
    assert_eq!(code(&w.run(&["detect", "--input", "c.jsonl"])), 2);
    assert_eq!(code(&w.run(&["--model", "missing.bdl", "detect", "--input", "c.jsonl"])), 2);
    std::fs::write(w.path("trunc.bdl"), b"RFD-BDL\x01\x00").unwrap();
    assert_eq!(code(&w.run(&["--model", "trunc.bdl", "detect", "--input", "c.jsonl"])), 2);
    std::fs::write(w.path("bad.json"), r#"{"embed": {"dim": 0}}"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_framedetect"))
        .current_dir(w.dir.path())
        .args(["--config", "bad.json", "ingest", "c.jsonl"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert_eq!(code(&w.run(&["train-clf", "c.jsonl", "--task", "doc", "-o", "x.clf"])), 2);
    assert_eq!(code(&w.run(&["no-such-command"])), 2);

    // Input problems exit with 1.
    assert_eq!(code(&w.run(&["ingest", "nope.jsonl"])), 1);
    std::fs::write(w.path("garbled.jsonl"), "{\"schema_version\":1,\"tokenizer_version\":\"rfd-tok-1\"}\n{oops\n").unwrap();
    assert_eq!(code(&w.run(&["ingest", "garbled.jsonl"])), 1);
    assert_eq!(code(&w.run(&["ingest", "garbled.jsonl", "--lenient"])), 0);
}

#[test]
fn detect_lenient_skips_bad_lines() {
    let w = Workdir::new();
    w.trained();
    w.ok(&["bundle", "--embed", "embed.bin", "--doc-clf", "doc.clf", "--attn", "par.att", "-o", "b.bdl"]);
    let input = b"{\"id\":\"a\",\"text\":\"The AI race is on.\"}\nnot json\n{\"id\":\"b\",\"text\":\"Weather today.\"}\n";
    let strict = w.with_stdin(&["--model", "b.bdl", "detect"], input);
    assert_eq!(code(&strict), 1);
    let lenient = w.with_stdin(&["--model", "b.bdl", "detect", "--lenient"], input);
    assert!(lenient.status.success());
    let results = jsonl(&String::from_utf8(lenient.stdout).unwrap());
    assert_eq!(results.len(), 2);
    assert_eq!(results[0]["doc_contains_ai"], true);
    assert_eq!(results[1]["doc_contains_ai"], false);
    assert!(String::from_utf8_lossy(&lenient.stderr).contains("1 skipped"));
}

#[test]
fn help_lists_subcommands() {
    let out = Command::new(env!("CARGO_BIN_EXE_framedetect")).arg("--help").output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    for sub in [
        "ingest", "synth", "train-embed", "train-clf", "train-attn", "grid-search", "evaluate", "detect", "report",
    ] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
    assert!(Path::new(env!("CARGO_BIN_EXE_framedetect")).exists());
}
