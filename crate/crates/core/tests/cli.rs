use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bitext_filter::synthetic::{SyntheticConfig, SyntheticLanguage};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bitext-filter"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin()
        .current_dir(dir)
        .args(args)
        .arg("--log-level")
        .arg("warn")
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn files(dir: &Path) -> Vec<String> {
    let mut v: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    v.sort();
    v
}

fn write_lines(path: &Path, lines: impl IntoIterator<Item = String>) {
    let text: String = lines.into_iter().map(|l| l + "\n").collect();
    fs::write(path, text).unwrap();
}

/// Clean training data, a candidate corpus and monolingual text.
fn fixture(dir: &Path) {
    let lang = SyntheticLanguage::new(SyntheticConfig::default());
    let clean = lang.parallel(1500, 1);
    write_lines(&dir.join("clean.tsv"), clean.iter().map(|(s, t)| format!("{s}\t{t}")));
    write_lines(
        &dir.join("news.txt"),
        lang.parallel(1500, 2).into_iter().map(|(_, t)| t),
    );
    let cand = lang.parallel(300, 3);
    write_lines(&dir.join("cand.src"), cand.iter().map(|(s, _)| s.clone()));
    write_lines(&dir.join("cand.tgt"), cand.iter().map(|(_, t)| t.clone()));
    write_lines(&dir.join("cand.tsv"), cand.iter().map(|(s, t)| format!("{s}\t{t}")));
    write_lines(&dir.join("third.txt"), lang.third_language(100, 4));
}

fn train_models(dir: &Path) {
    ok(
        dir,
        &["train-tm", "--in", "clean.tsv", "--direction", "fwd", "--out", "fwd.tm"],
    );
    ok(
        dir,
        &["train-tm", "--in", "clean.tsv", "--direction", "rev", "--out", "rev.tm"],
    );
    ok(dir, &["train-lm", "--in", "news.txt", "--out", "in.lm"]);
    ok(dir, &["train-lm", "--in", "cand.tgt", "--out", "out.lm"]);
}

const SCORE: &[&str] = &[
    "score",
    "--fwd-model",
    "fwd.tm",
    "--rev-model",
    "rev.tm",
    "--in-lm",
    "in.lm",
    "--out-lm",
    "out.lm",
];

#[test]
fn subcommands_end_to_end() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    train_models(dir);
    assert!(dir.join("fwd.tm.conf").exists());

    let mut args = SCORE.to_vec();
    args.extend(["--in", "cand.tsv", "--out", "s.tsv"]);
    ok(dir, &args);
    let scores = fs::read_to_string(dir.join("s.tsv")).unwrap();
    assert_eq!(scores.lines().count(), 301);
    assert!(scores.starts_with("id\th_fwd\th_rev\th_in\th_out\tadq\tdom\tcombined\tflags\n"));

    // twin input scores identically
    let mut args = SCORE.to_vec();
    args.extend(["--in-src", "cand.src", "--in-tgt", "cand.tgt", "--out", "s2.tsv"]);
    ok(dir, &args);
    assert_eq!(scores, fs::read_to_string(dir.join("s2.tsv")).unwrap());

    ok(
        dir,
        &[
            "select",
            "--scores",
            "s.tsv",
            "--top-n",
            "100",
            "--in-src",
            "cand.src",
            "--in-tgt",
            "cand.tgt",
            "--out-prefix",
            "sel",
        ],
    );
    let src = fs::read_to_string(dir.join("sel.src")).unwrap();
    let tgt = fs::read_to_string(dir.join("sel.tgt")).unwrap();
    let ids = fs::read_to_string(dir.join("sel.ids")).unwrap();
    assert_eq!(src.lines().count(), 100);
    assert_eq!(tgt.lines().count(), 100);
    let cand_src: Vec<String> = fs::read_to_string(dir.join("cand.src"))
        .unwrap()
        .lines()
        .map(String::from)
        .collect();
    for (line, id) in src.lines().zip(ids.lines()) {
        assert_eq!(line, cand_src[id.parse::<usize>().unwrap()]);
    }

    ok(
        dir,
        &["weights", "--scores", "s.tsv", "--out", "w.txt", "--in", "cand.tsv"],
    );
    let short = run(
        dir,
        &["weights", "--scores", "s.tsv", "--out", "w2.txt", "--in", "clean.tsv"],
    );
    assert_eq!(short.status.code(), Some(1));
    assert!(!dir.join("w2.txt").exists());
    let weights = fs::read_to_string(dir.join("w.txt")).unwrap();
    assert_eq!(weights.lines().count(), 300);
    assert!(weights
        .lines()
        .all(|w| (0.0..=1.0).contains(&w.parse::<f64>().unwrap())));

    let stats = run(dir, &["stats", "--scores", "s.tsv"]);
    assert!(stats.status.success());
    let text = String::from_utf8(stats.stdout).unwrap();
    assert!(text.starts_with("records\t300\n"));
    assert!(text.contains("keep_25%\t"));

    ok(
        dir,
        &[
            "corrupt",
            "--in",
            "cand.tsv",
            "--rate",
            "0.2",
            "--seed",
            "7",
            "--third-lang",
            "third.txt",
            "--out-prefix",
            "noisy",
        ],
    );
    let labels = fs::read_to_string(dir.join("noisy.labels")).unwrap();
    assert_eq!(labels.lines().filter(|l| l.contains("\tcorrupted\t")).count(), 60);
    let mut args = SCORE.to_vec();
    args.extend(["--in", "noisy.tsv", "--out", "ns.tsv"]);
    ok(dir, &args);
    ok(
        dir,
        &[
            "evaluate",
            "--scores",
            "ns.tsv",
            "--labels",
            "noisy.labels",
            "--report",
            "report.tsv",
        ],
    );
    let report = fs::read_to_string(dir.join("report.tsv")).unwrap();
    assert!(report.contains("auc_combined\t"));
    assert!(report.contains("k\t240\n"));

    assert!(files(dir).iter().all(|f| !f.ends_with(".partial")));
}

#[test]
fn trusted_flag_fixes_adequacy() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    train_models(dir);
    let mut args = SCORE.to_vec();
    args.extend(["--in", "cand.tsv", "--trusted", "--out", "t.tsv"]);
    ok(dir, &args);
    let text = fs::read_to_string(dir.join("t.tsv")).unwrap();
    for line in text.lines().skip(1) {
        let cols: Vec<&str> = line.split('\t').collect();
        assert_eq!(cols[5], "1");
        assert_eq!(cols[7], cols[6]);
        assert_eq!(cols[8], "trusted");
    }
}

#[test]
fn usage_errors_exit_two_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    for args in [
        vec!["score", "--in", "c.tsv", "--out", "s.tsv"],
        vec!["select", "--scores", "s.tsv", "--in", "c.tsv", "--out-prefix", "x"],
        vec![
            "select",
            "--scores",
            "s.tsv",
            "--top-n",
            "1",
            "--threshold",
            "0.5",
            "--in",
            "c.tsv",
            "--out-prefix",
            "x",
        ],
        vec!["frobnicate"],
        vec!["weights", "--scores", "s.tsv", "--out", "w", "--extra"],
    ] {
        let out = run(dir, &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
    assert!(files(dir).is_empty(), "{:?}", files(dir));
}

#[test]
fn data_errors_exit_one_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("bad.tsv"), "id\th_fwd\n0\t1\n").unwrap();
    let out = run(dir, &["weights", "--scores", "bad.tsv", "--out", "w.txt"]);
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(files(dir), ["bad.tsv"]);

    // length mismatch between twin files
    fs::write(dir.join("a.src"), "x\ny\n").unwrap();
    fs::write(dir.join("a.tgt"), "x\n").unwrap();
    let out = run(
        dir,
        &["train-tm", "--in-src", "a.src", "--in-tgt", "a.tgt", "--out", "m.tm"],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    assert!(!dir.join("m.tm").exists());
}

#[test]
fn failed_score_leaves_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    train_models(dir);
    // external scores missing the last pair
    let ext: String = (0..299).map(|i| format!("{i}\t1.5\n")).collect();
    fs::write(dir.join("ext.tsv"), ext).unwrap();
    let before = files(dir);
    let out = run(
        dir,
        &[
            "score",
            "--fwd-external",
            "ext.tsv",
            "--rev-model",
            "rev.tm",
            "--in-lm",
            "in.lm",
            "--out-lm",
            "out.lm",
            "--in",
            "cand.tsv",
            "--out",
            "s.tsv",
        ],
    );
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("299"));
    assert_eq!(files(dir), before);
}

fn pipeline_config(dir: &Path, prefix: &str) -> PathBuf {
    let path = dir.join(format!("{prefix}.toml"));
    fs::write(
        &path,
        format!(
            "candidate = [\"cand.src\", \"cand.tgt\"]\n\
             trusted = \"clean.tsv\"\n\
             tm_train = \"clean.tsv\"\n\
             in_domain = \"news.txt\"\n\
             out_prefix = \"{prefix}/run\"\n\
             top_n = 120\n\
             seed = 5\n\
             workers = 2\n"
        ),
    )
    .unwrap();
    path
}

#[test]
fn pipeline_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fixture(dir);
    for prefix in ["a", "b"] {
        let cfg = pipeline_config(dir, prefix);
        ok(dir, &["pipeline", "--config", cfg.to_str().unwrap()]);
    }
    let produced = files(&dir.join("a"));
    for name in [
        "run.scores.tsv",
        "run.weights",
        "run.selected.src",
        "run.selected.tgt",
        "run.selected.weights",
        "run.trusted.scores.tsv",
        "run.trusted.weights",
        "run.resolved.toml",
        "run.fwd.tm",
        "run.in.lm",
    ] {
        assert!(produced.contains(&name.to_string()), "{name} missing from {produced:?}");
    }
    for name in &produced {
        let a = fs::read(dir.join("a").join(name)).unwrap();
        let b = fs::read(dir.join("b").join(name)).unwrap();
        if name.ends_with(".toml") {
            continue;
        }
        assert_eq!(a, b, "{name} differs between runs");
    }
    let selected = fs::read_to_string(dir.join("a/run.selected.src")).unwrap();
    assert_eq!(selected.lines().count(), 120);
    let trusted = fs::read_to_string(dir.join("a/run.trusted.weights")).unwrap();
    assert_eq!(trusted.lines().count(), 1500);
}

#[test]
fn pipeline_config_errors_exit_two() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("p.toml"), "candidate = \"c.tsv\"\nout_prefix = \"o\"\n").unwrap();
    let out = run(dir, &["pipeline", "--config", "p.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(files(dir), ["p.toml"]);
}
