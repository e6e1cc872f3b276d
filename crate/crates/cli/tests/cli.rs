use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use asmlm::embedder::EmbeddingTable;
use asmlm::sampler::read_samples;
use tempfile::TempDir;

const TINY: &str = r#"{
  "hidden_dim": 16, "num_layers": 1, "num_heads": 2, "ffn_dim": 32,
  "batch_size": 8, "total_steps": 12, "learning_rate": 0.001,
  "checkpoint_every": 6, "eval_every": 6
}"#;

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn asmlm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_asmlm")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = asmlm(args);
    assert!(
        out.status.success(),
        "{args:?} exited {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

struct Run {
    _dir: TempDir,
    root: PathBuf,
}

impl Run {
    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }
}

/// build-vocab, sample and pretrain on the demo corpus with a tiny model.
fn pipeline(seed: &str) -> Run {
    let dir = TempDir::new().unwrap();
    let root = dir.path().to_path_buf();
    let run = Run { _dir: dir, root };
    let corpus = data("demo_corpus.jsonl");
    fs::write(run.path("train.json"), TINY).unwrap();
    ok(&["build-vocab", "--input", s(&corpus), "--min-count", "1", "--out", s(&run.path("vocab.json"))]);
    for (name, n) in [("samples.bin", "200"), ("heldout.bin", "20")] {
        ok(&[
            "sample", "--input", s(&corpus), "--vocab", s(&run.path("vocab.json")), "--cwp-window", "4",
            "--n", n, "--seed", seed, "--out", s(&run.path(name)),
        ]);
    }
    ok(&[
        "pretrain", "--samples", s(&run.path("samples.bin")), "--vocab", s(&run.path("vocab.json")),
        "--config", s(&run.path("train.json")), "--heldout", s(&run.path("heldout.bin")),
        "--seed", seed, "--out", s(&run.path("ckpt")),
    ]);
    run
}

#[test]
fn no_arguments_prints_usage_and_fails() {
    let out = asmlm(&[]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
}

#[test]
fn help_succeeds() {
    let out = ok(&["--help"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("pretrain"));
}

#[test]
fn missing_input_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let out = asmlm(&["build-vocab", "--input", "/nonexistent/corpus.jsonl", "--out", s(&dir.path().join("v.json"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!out.stderr.is_empty());
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("bad.json");
    fs::write(&cfg, r#"{"hiden_dim": 8}"#).unwrap();
    let out = asmlm(&["pretrain", "--config", s(&cfg), "--samples", "x", "--vocab", "y", "--out", "z"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden_dim"));
}

#[test]
fn diverging_run_exits_with_numeric_failure() {
    let run = pipeline("3");
    fs::write(run.path("hot.json"), TINY.replace("0.001", "1e300")).unwrap();
    let out = asmlm(&[
        "pretrain", "--samples", s(&run.path("samples.bin")), "--vocab", s(&run.path("vocab.json")),
        "--config", s(&run.path("hot.json")), "--out", s(&run.path("hot")),
    ]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn tokenize_writes_one_line_per_instruction() {
    let dir = TempDir::new().unwrap();
    let corpus = data("demo_corpus.jsonl");
    let vocab = dir.path().join("vocab.json");
    let out = dir.path().join("tokens.jsonl");
    ok(&["build-vocab", "--input", s(&corpus), "--out", s(&vocab)]);
    ok(&["tokenize", "--input", s(&corpus), "--vocab", s(&vocab), "--out", s(&out)]);
    let n = asmlm::corpus::load_corpus(&corpus).unwrap().instructions().count();
    let text = fs::read_to_string(out).unwrap();
    assert_eq!(text.lines().count(), n);
    let first: serde_json::Value = serde_json::from_str(text.lines().next().unwrap()).unwrap();
    assert_eq!(first["tokens"].as_array().unwrap().len(), first["ids"].as_array().unwrap().len());
}

#[test]
fn full_pipeline_produces_every_artifact() {
    let run = pipeline("11");
    let ckpt = run.path("ckpt");
    for f in ["manifest.json", "params.bin", "optimizer.bin", "train_config.json", "metrics.csv", "heldout.csv", "vocab.json"] {
        assert!(ckpt.join(f).exists(), "missing {f}");
    }
    let metrics = fs::read_to_string(ckpt.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("step,loss,mlm_loss,cwp_loss,dup_loss,mlm_acc,cwp_acc,dup_acc,lr,seconds\n"));
    assert_eq!(metrics.lines().count(), 13);
    assert_eq!(read_samples(&run.path("samples.bin")).unwrap().len(), 400);

    let corpus = data("demo_corpus.jsonl");
    ok(&["embed", "--ckpt", s(&ckpt), "--input", s(&corpus), "--out", s(&run.path("emb.jsonl"))]);
    let emb = fs::read_to_string(run.path("emb.jsonl")).unwrap();
    let row: serde_json::Value = serde_json::from_str(emb.lines().next().unwrap()).unwrap();
    assert_eq!(row["vec"].as_array().unwrap().len(), 16);
    assert!(row["text"].is_string());

    ok(&["export-table", "--ckpt", s(&ckpt), "--corpus", s(&corpus), "--top-n", "10", "--out", s(&run.path("table.bin"))]);
    let table = EmbeddingTable::load(&run.path("table.bin")).unwrap();
    assert_eq!(table.len(), 10);

    ok(&[
        "eval", "outlier", "--ckpt", s(&ckpt), "--corpus", s(&corpus), "--taxonomy", "opcode", "--n", "50",
        "--seed", "1", "--baseline", "--out", s(&run.path("report.json")),
    ]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(run.path("report.json")).unwrap()).unwrap();
    assert_eq!(report["sets"], 50);
    assert!(report["accuracy"].as_f64().is_some());
    assert!(report["skipgram"]["accuracy"].as_f64().is_some());

    // The equivalence corpus shares the demo vocabulary.
    ok(&[
        "eval", "bbsearch", "--ckpt", s(&ckpt), "--corpus", s(&data("bbsearch_corpus.jsonl")),
        "--truth", s(&data("bbsearch_classes.jsonl")), "--out", s(&run.path("roc.csv")),
    ]);
    let roc = fs::read_to_string(run.path("roc.csv")).unwrap();
    assert!(roc.starts_with("fpr,tpr\n"));
    assert!(roc.lines().last().unwrap().starts_with("# auc="));
}

#[test]
fn same_seed_reproduces_samples_and_metrics() {
    let (a, b) = (pipeline("5"), pipeline("5"));
    for f in ["samples.bin", "ckpt/metrics.csv", "ckpt/heldout.csv", "ckpt/params.bin"] {
        assert!(fs::read(a.path(f)).unwrap() == fs::read(b.path(f)).unwrap(), "{f} differs");
    }
    let c = pipeline("6");
    assert!(fs::read(a.path("samples.bin")).unwrap() != fs::read(c.path("samples.bin")).unwrap());
}

#[test]
fn resume_of_finished_run_extends_it() {
    let run = pipeline("8");
    let before = fs::read_to_string(run.path("ckpt/metrics.csv")).unwrap();
    ok(&[
        "pretrain", "--samples", s(&run.path("samples.bin")), "--vocab", s(&run.path("vocab.json")),
        "--out", s(&run.path("ckpt")), "--resume", "--steps", "15",
    ]);
    let after = fs::read_to_string(run.path("ckpt/metrics.csv")).unwrap();
    assert!(after.starts_with(&before));
    assert_eq!(after.lines().count(), 16);
}
