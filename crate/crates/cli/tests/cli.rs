use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use tglm_core::eval::read_reports;

fn sample_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/sample")
}

fn tglm(data: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tglm"))
        .arg("--data-dir")
        .arg(data)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(data: &Path, args: &[&str]) -> String {
    let out = tglm(data, args);
    assert!(
        out.status.success(),
        "tglm {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn preprocessed() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    ok(dir.path(), &["preprocess", "--corpus", sample_dir().to_str().unwrap()]);
    dir
}

const SMALL: [&str; 6] = ["--set", "hidden=16", "--set", "embed=8", "--set", "enc_hidden=16"];

fn small<'a>(rest: &[&'a str]) -> Vec<&'a str> {
    let mut v: Vec<&str> = SMALL.to_vec();
    v.extend_from_slice(rest);
    v
}

#[test]
fn untrained_lstm_perplexity_is_near_vocabulary_size() {
    let d = preprocessed();
    ok(d.path(), &["train", "--model", "lstm", "--max-epochs", "0"]);
    let out = ok(d.path(), &["eval", "ppl", "--model", "lstm"]);
    let v: f64 = std::fs::read_to_string(d.path().join("prep/manifest.txt"))
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix("vocab_size="))
        .unwrap()
        .parse()
        .unwrap();
    let line: serde_like::Report = serde_like::parse(out.lines().next().unwrap());
    assert_eq!(line.metric, "ppl");
    assert!((line.value - v).abs() / v <= 0.05, "ppl {} vs V {v}", line.value);
}

/// Minimal field extraction so the test does not depend on the report type's layout.
mod serde_like {
    pub struct Report {
        pub metric: String,
        pub value: f64,
    }

    pub fn parse(line: &str) -> Report {
        let field = |k: &str| {
            let start = line.find(&format!("\"{k}\":")).unwrap() + k.len() + 3;
            let rest = &line[start..];
            let end = rest.find([',', '}']).unwrap();
            rest[..end].trim_matches('"').to_string()
        };
        Report {
            metric: field("metric"),
            value: field("value").parse().unwrap(),
        }
    }
}

#[test]
fn lda_coherence_follows_the_protocol() {
    let d = preprocessed();
    ok(d.path(), &["train", "--model", "lda", "--set", "lda.iterations=50"]);
    let out = ok(d.path(), &["eval", "coherence", "--model", "lda"]);
    let metrics: Vec<String> = out.lines().map(|l| serde_like::parse(l).metric).collect();
    assert_eq!(metrics, ["npmi@5", "npmi@10", "npmi@15", "npmi@20", "npmi"]);
    let topics = ok(d.path(), &["topics", "--model", "lda", "--show", "4"]);
    assert_eq!(topics.lines().count(), 10);
    assert!(topics.lines().all(|l| l.split_whitespace().count() == 2 + 4));
    let lstm = tglm(d.path(), &small(&["eval", "coherence", "--model", "lstm"]));
    assert_ne!(lstm.status.code(), Some(0));
}

#[test]
fn report_renders_mean_and_std_over_seeds() {
    let d = preprocessed();
    let file = d.path().join("ppl.jsonl");
    ok(d.path(), &small(&["train", "--model", "lstm", "--seeds", "1,2,3", "--max-epochs", "1"]));
    ok(d.path(), &small(&["eval", "ppl", "--model", "lstm", "--seeds", "1,2,3", "--out", file.to_str().unwrap()]));
    let reports = read_reports(&file).unwrap();
    assert_eq!(reports.len(), 3);
    let vals: Vec<f64> = reports.iter().map(|r| r.value).collect();
    let mean = vals.iter().sum::<f64>() / 3.0;
    let std = (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    let table = ok(d.path(), &["report", file.to_str().unwrap()]);
    assert!(table.contains(&format!("{mean:.2} ({std:.2})")), "{table}");

    // The same seeds again would duplicate rows; a different configuration would mix rows.
    ok(d.path(), &small(&["eval", "ppl", "--model", "lstm", "--seeds", "1", "--out", file.to_str().unwrap()]));
    let dup = tglm(d.path(), &["report", file.to_str().unwrap()]);
    assert_eq!(dup.status.code(), Some(1));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn preprocessing_is_deterministic_and_min_count_is_monotone() {
    let d = tempfile::tempdir().unwrap();
    let corpus = sample_dir();
    let c = corpus.to_str().unwrap();
    let a = d.path().join("a");
    let b = d.path().join("b");
    ok(d.path(), &["preprocess", "--corpus", c, "--out", a.to_str().unwrap()]);
    ok(d.path(), &["preprocess", "--corpus", c, "--out", b.to_str().unwrap()]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));

    let size = |m: &str| -> usize {
        let out = ok(d.path(), &["preprocess", "--corpus", c, "--min-count", m, "--out", d.path().join(m).to_str().unwrap()]);
        out.lines().find_map(|l| l.strip_prefix("vocab_size=")).unwrap().parse().unwrap()
    };
    let sizes: Vec<usize> = ["1", "2", "5", "10"].iter().map(|m| size(m)).collect();
    assert!(sizes.windows(2).all(|w| w[0] >= w[1]), "{sizes:?}");
}

#[test]
fn exit_codes() {
    let d = tempfile::tempdir().unwrap();
    assert_eq!(tglm(d.path(), &["train", "--model", "gpt"]).status.code(), Some(2));
    assert_eq!(tglm(d.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(tglm(d.path(), &["--set", "nope=1", "eval", "ppl", "--model", "lstm"]).status.code(), Some(2));
    let missing = tglm(d.path(), &["preprocess", "--corpus", "/nonexistent/corpus"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/corpus"));
    assert_eq!(tglm(d.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn checkpoints_are_refused_after_the_data_changes() {
    let d = preprocessed();
    ok(d.path(), &small(&["train", "--model", "lstm", "--max-epochs", "1"]));
    ok(d.path(), &["preprocess", "--corpus", sample_dir().to_str().unwrap(), "--min-count", "3"]);
    let out = tglm(d.path(), &["eval", "ppl", "--model", "lstm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("different preprocessed data"));
}

#[test]
fn config_files_include_and_flags_override() {
    let d = preprocessed();
    let base = d.path().join("base.conf");
    let run = d.path().join("run.conf");
    std::fs::write(&base, "hidden = 12\nembed = 6 # comment\nmax_epochs = 3\n").unwrap();
    std::fs::write(&run, "include = base.conf\nmax_epochs = 1\n").unwrap();
    let conf = run.to_str().unwrap();
    let out = ok(d.path(), &["--config", conf, "--set", "embed=5", "train", "--model", "lstm"]);
    assert!(out.contains("epochs 1 "), "{out}");
    let ck = tglm_core::checkpoint::Checkpoint::read(&d.path().join("runs/lstm/seed1/model.ckpt")).unwrap();
    assert_eq!(ck.config_value("hidden"), Some("12"));
    assert_eq!(ck.config_value("embed"), Some("5"));

    std::fs::write(&base, "include = run.conf\n").unwrap();
    assert_eq!(tglm(d.path(), &["--config", conf, "report", "x"]).status.code(), Some(2));
}

#[test]
fn interrupted_training_resumes_on_the_same_curve() {
    let d = preprocessed();
    let args = small(&["train", "--model", "lstm", "--max-epochs", "3"]);
    ok(d.path(), &args);
    let full = std::fs::read_to_string(d.path().join("runs/lstm/seed1/train_log.tsv")).unwrap();
    let full_ck = std::fs::read(d.path().join("runs/lstm/seed1/model.ckpt")).unwrap();
    std::fs::remove_dir_all(d.path().join("runs")).unwrap();

    let mut first = args.clone();
    first.extend(["--stop-after", "1"]);
    let out = ok(d.path(), &first);
    assert!(out.contains("interrupted"));
    let mut rest = args.clone();
    rest.push("--resume");
    ok(d.path(), &rest);
    let resumed = std::fs::read_to_string(d.path().join("runs/lstm/seed1/train_log.tsv")).unwrap();
    assert_eq!(full, resumed);
    assert_eq!(full_ck, std::fs::read(d.path().join("runs/lstm/seed1/model.ckpt")).unwrap());
}

#[test]
fn both_conditionings_train_on_the_sample_corpus() {
    let d = preprocessed();
    for c in ["sentence", "document"] {
        let t = Instant::now();
        let out = ok(d.path(), &["train", "--model", "lstm", "--conditioning", c]);
        assert!(t.elapsed().as_secs() < 600, "{c} took {:?}", t.elapsed());
        assert!(out.contains("best valid ppl"));
    }
    let ppl = |m: &str| serde_like::parse(ok(d.path(), &["eval", "ppl", "--model", m]).trim()).value;
    assert!(ppl("lstm").is_finite() && ppl("lstm-sentence").is_finite());
}

#[test]
fn topic_models_train_and_evaluate_end_to_end() {
    let d = preprocessed();
    for m in ["topicrnn", "vrtm", "tdlm", "lstm-gru"] {
        ok(d.path(), &small(&["train", "--model", m, "--max-epochs", "1"]));
        let r = serde_like::parse(ok(d.path(), &small(&["eval", "ppl", "--model", m])).trim());
        assert!(r.value.is_finite() && r.value > 1.0);
    }
    for m in ["topicrnn", "vrtm", "tdlm"] {
        assert_eq!(ok(d.path(), &small(&["eval", "coherence", "--model", m])).lines().count(), 5);
    }
    ok(d.path(), &small(&["train", "--model", "lstm", "--max-epochs", "1"]));
    let probe = ok(d.path(), &small(&["eval", "probe", "--lm", "lstm", "--tglm", "tdlm"]));
    let metrics: Vec<String> = probe.lines().map(|l| serde_like::parse(l).metric).collect();
    assert_eq!(metrics, ["acc1", "acc5", "r2", "acc1", "acc5", "r2"]);
    assert!(probe.contains("lstm-init>tdlm"));
}
