use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn toy_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/toy_corpus.jsonl")
}

/// A tiny run over the bundled corpus; `corpus` is written verbatim.
fn write_config(dir: &Path, corpus: &Path) -> PathBuf {
    let text = format!(
        r#"
name = "tiny"
seed = 3

[corpus]
path = "{}"
format = "jsonl"

[tokenizer]
vocab_size = 300

[encoder]
d_model = 8
n_heads = 2
n_layers = 1
d_ff = 16
max_seq_len = 48

[decoder]
d_model = 8
n_heads = 2
n_layers = 1
d_ff = 16
max_seq_len = 96

[train.encoder]
init_lr = 0.1
total_steps = 3

[train.decoder]
init_lr = 0.1
total_steps = 3

[train.finetune]
init_lr = 0.1
total_steps = 3

[prompts]
k = 1
limit = 4

[eval]
max_length = 96
"#,
        corpus.display()
    );
    let path = dir.join("tiny.toml");
    std::fs::write(&path, text).unwrap();
    path
}

fn medqa(config: &Path, out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medqa"))
        .arg("-c")
        .arg(config)
        .arg("-o")
        .arg(out)
        .args(args)
        .env_remove("MEDQA_SEED")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn missing_input_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere.jsonl");
    let cfg = write_config(dir.path(), &missing);
    let o = medqa(&cfg, &dir.path().join("out"), &["prepare"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere.jsonl"), "{}", stderr(&o));
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_corpus());
    let out = dir.path().join("out");
    let o = medqa(&cfg, &out, &["--set", "encoder.n_heads=3", "prepare"]);
    assert_eq!(o.status.code(), Some(2));
    let o = medqa(&dir.path().join("absent.toml"), &out, &["prepare"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.toml"));
    let o = medqa(&cfg, &out, &["train", "--stage", "sideways"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn stages_need_their_prerequisites() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_corpus());
    let out = dir.path().join("out");
    let o = medqa(&cfg, &out, &["train", "--stage", "tokenizer"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("medqa prepare"), "{}", stderr(&o));

    assert!(medqa(&cfg, &out, &["prepare"]).status.success());
    assert!(medqa(&cfg, &out, &["train", "--stage", "tokenizer"]).status.success());
    let o = medqa(&cfg, &out, &["train", "--stage", "prompts"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.contains("encoder.ckpt") && err.contains("medqa train --stage encoder"), "{err}");

    let o = medqa(&cfg, &out, &["eval", "--mode", "generation"]);
    assert_eq!(o.status.code(), Some(2));
    let o = medqa(&cfg, &out, &["report"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn artifacts_from_another_tokenizer_are_refused() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_corpus());
    let out = dir.path().join("out");
    assert!(medqa(&cfg, &out, &["prepare"]).status.success());
    assert!(medqa(&cfg, &out, &["train", "--stage", "tokenizer"]).status.success());
    assert!(medqa(&cfg, &out, &["train", "--stage", "encoder"]).status.success());
    let o = medqa(&cfg, &out, &["--set", "tokenizer.vocab_size=280", "train", "--stage", "tokenizer"]);
    assert!(o.status.success());
    let o = medqa(&cfg, &out, &["train", "--stage", "prompts"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("encoder.ckpt"), "{}", stderr(&o));
}

#[test]
fn prepare_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_corpus());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert!(medqa(&cfg, &a, &["prepare"]).status.success());
    assert!(medqa(&cfg, &b, &["prepare"]).status.success());
    for f in ["data/train.jsonl", "data/val.jsonl", "data/test.jsonl", "data/stats.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let split = |d: &Path| std::fs::read_to_string(d.join("data/test.jsonl")).unwrap();
    assert_eq!(split(&a).lines().count(), 5);

    // the environment seed reshuffles the split
    let c = dir.path().join("c");
    let o = Command::new(env!("CARGO_BIN_EXE_medqa"))
        .arg("-c")
        .arg(&cfg)
        .arg("-o")
        .arg(&c)
        .arg("prepare")
        .env("MEDQA_SEED", "99")
        .output()
        .unwrap();
    assert!(o.status.success());
    assert_ne!(split(&a), split(&c));
}

#[test]
fn no_overwrite_keeps_existing_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_corpus());
    let out = dir.path().join("out");
    assert!(medqa(&cfg, &out, &["prepare"]).status.success());
    let stats = out.join("data/stats.json");
    std::fs::write(&stats, "kept").unwrap();
    assert!(medqa(&cfg, &out, &["--no-overwrite", "prepare"]).status.success());
    assert_eq!(std::fs::read_to_string(&stats).unwrap(), "kept");
    assert!(medqa(&cfg, &out, &["prepare"]).status.success());
    assert_ne!(std::fs::read_to_string(&stats).unwrap(), "kept");
}

#[test]
fn full_tiny_run_records_hashes_and_modes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), &toy_corpus());
    let out = dir.path().join("out");
    for args in [
        &["prepare"][..],
        &["train", "--stage", "all"],
        &["eval", "--mode", "retrieval"],
        &["eval", "--mode", "generation"],
        &["report"],
    ] {
        let o = medqa(&cfg, &out, args);
        assert!(o.status.success(), "{args:?}: {}", stderr(&o));
    }
    let loaded = medqa::config::load(&cfg, &[], None).unwrap();
    for ckpt in ["encoder.ckpt", "decoder.ckpt", "finetuned.ckpt"] {
        let (_, meta) = medqa::formats::decode_checkpoint(&std::fs::read(out.join(ckpt)).unwrap()).unwrap();
        assert_eq!(meta.config_hash, loaded.hash, "{ckpt}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 2);
    let generation = rows.iter().find(|r| r["mode"] == "generation").unwrap();
    assert_eq!(generation["match_rule"]["rule"], "token_f1");
    let text = std::fs::read_to_string(out.join("report.txt")).unwrap();
    assert!(text.contains("0.762") && text.contains("paper-reported, not reproduced"));
}
