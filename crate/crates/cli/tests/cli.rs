use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use seqclass::engine::synthetic::{separable_corpus, write_csv, TopicCorpus};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_seqclass"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn seqclass")
}

fn run_stdin(args: &[&str], input: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    // A child that fails before reading stdin closes the pipe early.
    if let Err(e) = child.stdin.take().unwrap().write_all(input.as_bytes()) {
        assert_eq!(e.kind(), std::io::ErrorKind::BrokenPipe, "{e}");
    }
    child.wait_with_output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Separable binary corpus of `docs` rows, preprocessed into `dir/prep`.
fn prepared(dir: &Path, docs: usize, extra: &[&str]) -> PathBuf {
    let csv = dir.join("corpus.csv");
    write_csv(&csv, "text", "label", &separable_corpus(2, docs, 11), false).unwrap();
    let prep = dir.join("prep");
    let mut args = vec!["preprocess", "--input", s(&csv), "--out-dir", s(&prep)];
    args.extend_from_slice(extra);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    prep
}

#[test]
fn preprocess_reports_five_classes_and_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bbc.csv");
    write_csv(&csv, "text", "category", &TopicCorpus::news(6).generate(3), true).unwrap();
    let args = |out: &Path| {
        run(&[
            "preprocess",
            "--input",
            s(&csv),
            "--out-dir",
            s(out),
            "--label_column",
            "category",
            "--max-len",
            "50",
        ])
    };
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let o = args(&a);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("classes=5"), "{out}");
    for c in ["business", "entertainment", "politics", "sport", "tech"] {
        assert!(out.contains(&format!("class.{c}=6")), "{out}");
    }
    assert!(out.contains("oov_rate="));
    assert!(stderr(&o).contains("max_len = 50"), "config echo missing");
    assert_eq!(code(&args(&b)), 0);
    for f in ["vocab.tsv", "dataset.tsv", "stats.txt", "config.txt"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn preprocess_rejects_empty_and_missing_input() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.csv");
    std::fs::write(&empty, "").unwrap();
    let o = run(&["preprocess", "--input", s(&empty), "--out-dir", s(&dir.path().join("o"))]);
    assert_ne!(code(&o), 0);
    assert!(!dir.path().join("o").join("dataset.tsv").exists());
    let o = run(&["preprocess", "--input", "/nonexistent/x.csv", "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("/nonexistent/x.csv"));
}

#[test]
fn bad_csv_row_names_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("bad.csv");
    std::fs::write(&csv, "text,label\n\"good one\",pos\nbroken,row,extra\n").unwrap();
    let o = run(&["preprocess", "--input", s(&csv), "--out-dir", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    assert!(stderr(&o).contains("line 3") || stderr(&o).contains("line: 3"), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.cfg");
    std::fs::write(&cfg, "cell = lstm\nhiden_size = 8\n").unwrap();
    let csv = dir.path().join("c.csv");
    write_csv(&csv, "text", "label", &separable_corpus(2, 8, 1), false).unwrap();
    let o = run(&["preprocess", "--input", s(&csv), "--out-dir", s(&dir.path().join("o")), "--config", s(&cfg)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hiden_size"), "{}", stderr(&o));
    let o = run(&["preprocess", "--input", s(&csv), "--out-dir", "x", "--hiden_size", "8"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("hiden_size"), "{}", stderr(&o));
    let o = run(&["preprocess", "--input", s(&csv), "--out-dir", "x", "--cell", "transformer"]);
    assert_eq!(code(&o), 1, "{}", stderr(&o));
}

#[test]
fn zero_epochs_writes_initial_checkpoint_and_empty_curve() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 20, &["--max_len", "40"]);
    let out = dir.path().join("run");
    let o = run(&["train", "--data", s(&prep), "--out-dir", s(&out), "--epochs", "0"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(
        std::fs::read_to_string(out.join("curve.csv")).unwrap(),
        "epoch,train_loss,train_acc,test_loss,test_acc\n"
    );
    assert!(out.join("model.ckpt").exists() && out.join("metrics.txt").exists());
}

#[test]
fn task_chosen_at_train_time_picks_its_own_loss_and_rate() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 20, &["--max_len", "40"]);
    let out = dir.path().join("r");
    let o = run(&["train", "--data", s(&prep), "--out-dir", s(&out), "--epochs", "1", "--task", "multiclass"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let echo = stderr(&o);
    assert!(echo.contains("loss = sparse_categorical_crossentropy"), "{echo}");
    assert!(echo.contains("learning_rate = 0.005"), "{echo}");
}

#[test]
fn train_refuses_pipeline_changes_after_preprocess() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 12, &["--max_len", "40"]);
    let o = run(&["train", "--data", s(&prep), "--out-dir", s(&dir.path().join("r")), "--max_len", "30"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("max_len"), "{}", stderr(&o));
}

#[test]
fn default_config_fits_the_separable_corpus_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 400, &[]);
    let out = dir.path().join("run");
    let o = run(&["train", "--data", s(&prep), "--out-dir", s(&out), "-q"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let table = stdout(&o);
    assert!(table.contains("Accuracy") && table.contains("F1 Score"), "{table}");
    let curve = std::fs::read_to_string(out.join("curve.csv")).unwrap();
    assert_eq!(curve.lines().count(), 31);
    assert!(std::fs::read_to_string(out.join("metrics.txt")).unwrap().contains("accuracy="));

    let ckpt = out.join("model.ckpt");
    let o = run(&["evaluate", "--model", s(&ckpt), "--data", s(&prep), "--split", "train", "-q"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let row = stdout(&o).lines().nth(1).unwrap().to_string();
    assert!(row.starts_with("GRU"), "{row}");
    let cols: Vec<&str> = row.split_whitespace().collect();
    assert_eq!(cols[1..], ["100.00", "100.00", "100.00", "100.00"], "{row}");
    assert!(out.join("metrics_train.txt").exists());

    // Two identical lines, an all-OOV line and an empty line.
    let marker = "clsaxa clsaxb fillc";
    let o = run_stdin(&["predict", "--model", s(&ckpt), "-q"], &format!("{marker}\n{marker}\nzzz qqq\n\n"));
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let lines: Vec<String> = stdout(&o).lines().map(str::to_string).collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], lines[1]);
    for l in &lines {
        let (class, p) = l.split_once('\t').unwrap();
        assert!(class == "A" || class == "B", "{l}");
        let p: f64 = p.parse().unwrap();
        assert!((0.0..=1.0).contains(&p));
    }
    assert!(lines[0].starts_with("A\t"), "{}", lines[0]);
}

#[test]
fn training_is_byte_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 40, &["--max_len", "40"]);
    let train = |name: &str, extra: &[&str]| {
        let out = dir.path().join(name);
        let mut args = vec!["train", "--data", s(&prep), "--out-dir", s(&out), "--epochs", "5", "--dropout", "0.2"];
        args.extend_from_slice(extra);
        let o = run(&args);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        out
    };
    let (a, b, c) = (train("a", &[]), train("b", &[]), train("c", &["--sequential"]));
    for f in ["model.ckpt", "curve.csv", "metrics.txt"] {
        let fa = std::fs::read(a.join(f)).unwrap();
        assert_eq!(fa, std::fs::read(b.join(f)).unwrap(), "{f} differs between runs");
        assert_eq!(fa, std::fs::read(c.join(f)).unwrap(), "{f} differs in sequential mode");
    }
}

#[test]
fn evaluate_and_predict_failures() {
    let dir = tempfile::tempdir().unwrap();
    let prep = prepared(dir.path(), 12, &["--max_len", "40"]);
    let o = run(&["evaluate", "--model", s(&dir.path().join("missing.ckpt")), "--data", s(&prep)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = run_stdin(&["predict", "--model", s(&dir.path().join("missing.ckpt"))], "x\n");
    assert_ne!(code(&o), 0);

    let out = dir.path().join("run");
    assert_eq!(code(&run(&["train", "--data", s(&prep), "--out-dir", s(&out), "--epochs", "1", "-q"])), 0);
    let ckpt = out.join("model.ckpt");

    // A dataset built with another vocabulary.
    let csv = dir.path().join("other.csv");
    write_csv(&csv, "text", "label", &[("alpha beta".into(), "A".into()), ("gamma".into(), "B".into())], false).unwrap();
    let other = dir.path().join("other");
    assert_eq!(code(&run(&["preprocess", "--input", s(&csv), "--out-dir", s(&other), "--max_len", "40"])), 0);
    let o = run(&["evaluate", "--model", s(&ckpt), "--data", s(&other)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("vocabulary mismatch"), "{}", stderr(&o));

    // Truncated checkpoint.
    let bytes = std::fs::read(&ckpt).unwrap();
    let cut = dir.path().join("cut.ckpt");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let o = run_stdin(&["predict", "--model", s(&cut)], "x\n");
    assert_eq!(code(&o), 2);
    assert!(stdout(&o).is_empty());
    assert!(stderr(&o).contains("integrity"), "{}", stderr(&o));

    let o = run_stdin(&["predict", "--model", s(&ckpt), "-q"], "");
    assert_eq!(code(&o), 0);
    assert!(stdout(&o).is_empty() && stderr(&o).is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&run(&[])), 1);
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["--help"])), 0);
}
