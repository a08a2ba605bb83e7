//! Exit codes and output contracts of the `subbasis` binary.

use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "seed = 2\n[corpus]\ndysarthric_per_group = [1, 1, 1, 1]\ncontrol_speakers = 1\nvocab_size = 4\n";

fn subbasis(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_subbasis"))
        .current_dir(dir)
        .env("RUST_LOG", "error")
        .args(args)
        .output()
        .expect("binary runs")
}

fn small_corpus(dir: &Path) {
    std::fs::write(dir.join("small.toml"), SMALL).unwrap();
    let out = subbasis(dir, &["--config", "small.toml", "gen-corpus", "--out", "corpus"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn summary(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap()
}

#[test]
fn unknown_config_key_exits_2_and_names_it() {
    let dir = tempfile::tempdir().unwrap();
    let out = subbasis(dir.path(), &["--set", "classifier.hiden_dim=3", "grad-check"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("hiden_dim"));
}

#[test]
fn invalid_value_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = subbasis(dir.path(), &["--set", "subspace.window=0", "gen-corpus", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("subspace.window"));
}

#[test]
fn bad_arguments_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(subbasis(dir.path(), &["extract"]).status.code(), Some(2));
    assert_eq!(subbasis(dir.path(), &["bogus"]).status.code(), Some(2));
}

#[test]
fn empty_manifest_gives_empty_set() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("m.csv"), "path,speaker_id,block_id,word_id,intelligibility\n").unwrap();
    let out = subbasis(dir.path(), &["extract", "--manifest", "m.csv", "--out", "feats"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("feats"));
    assert_eq!(s["total"], 0);
    assert_eq!(s["extracted"], 0);
}

#[test]
fn ten_rows_give_ten_vectors_of_410() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let text = std::fs::read_to_string(dir.path().join("corpus/manifest.csv")).unwrap();
    let ten: Vec<&str> = text.lines().take(11).collect();
    std::fs::write(dir.path().join("corpus/ten.csv"), ten.join("\n") + "\n").unwrap();

    let out = subbasis(dir.path(), &["extract", "--manifest", "corpus/ten.csv", "--out", "feats"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let s = summary(&dir.path().join("feats"));
    assert_eq!(s["extracted"], 10);
    assert_eq!(s["feature_dim"], 410);
    let stbf: Vec<_> = std::fs::read_dir(dir.path().join("feats"))
        .unwrap()
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "stbf"))
        .collect();
    assert_eq!(stbf.len(), 10);
    for e in stbf {
        // 4 magic + 2 version + 1 dtype + 1 dims + 8 shape + payload + 4 crc
        assert_eq!(std::fs::metadata(e.path()).unwrap().len(), 20 + 410 * 8);
    }
}

#[test]
fn unreadable_rows_are_skipped_and_fail_the_run() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let text = std::fs::read_to_string(dir.path().join("corpus/manifest.csv")).unwrap();
    let mut lines: Vec<String> = text.lines().take(6).map(str::to_owned).collect();
    lines.push("missing.wav,X1,B1,W00,VL".into());
    std::fs::write(dir.path().join("corpus/bad.csv"), lines.join("\n") + "\n").unwrap();

    let out = subbasis(dir.path(), &["extract", "--manifest", "corpus/bad.csv", "--out", "feats"]);
    assert_eq!(out.status.code(), Some(1));
    let s = summary(&dir.path().join("feats"));
    assert_eq!(s["skipped"], 1);
    assert_eq!(s["extracted"], 5);
}

#[test]
fn mismatched_features_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    small_corpus(dir.path());
    let p = dir.path();
    let run = |args: &[&str]| {
        let mut full = vec!["--config", "small.toml", "--set", "classifier.max_epochs=1"];
        full.extend_from_slice(args);
        subbasis(p, &full)
    };
    assert!(run(&["extract", "--manifest", "corpus/manifest.csv", "--out", "feats"]).status.success());
    assert!(run(&["train", "--features", "feats", "--out", "clf.ckpt"]).status.success());
    let out = run(&["--set", "subspace.spectral_bases=3", "extract", "--manifest", "corpus/manifest.csv", "--out", "f3"]);
    assert!(out.status.success());
    let out = run(&["assess", "--model", "clf.ckpt", "--features", "f3", "--out", "r"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    let out = run(&["assess", "--model", "clf.ckpt", "--features", "feats", "--mode", "binary", "--out", "r"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(p.join("r.csv")).unwrap();
    assert!(csv.contains("DYS"), "{csv}");
}
