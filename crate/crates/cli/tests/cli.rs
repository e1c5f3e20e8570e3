use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use wordrbm::format::{read_model, read_windows, Model};
use wordrbm::trainer::{corpus_proposal, TrainConfig, TrainerState};
use wordrbm::wrrbm::WrrbmLayout;

const CORPUS: &str = "the cat sat on the mat\n\
the dog sat on the log\n\
a cat and a dog met in 1999\n\
the mat was red and the log was brown\n";

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_wordrbm"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn run_err(dir: &Path, args: &[&str]) -> String {
    let out = bin().current_dir(dir).args(args).output().unwrap();
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.starts_with("error: kind="), "stderr: {err}");
    err
}

const TRAIN_FLAGS: &[&str] = &[
    "--hidden-units",
    "5",
    "--embedding-dim",
    "3",
    "--num-chains",
    "4",
    "--minibatch-size",
    "4",
    "--steps-per-update",
    "5",
    "--log-interval",
    "1",
    "--threads",
    "1",
];

fn prepare(dir: &Path) {
    fs::write(dir.join("corpus.txt"), CORPUS).unwrap();
    run(dir, &["build-vocab", "--corpus", "corpus.txt", "--max-size", "8", "--out", "vocab.tsv"]);
    run(dir, &["extract-windows", "--corpus", "corpus.txt", "--vocab", "vocab.tsv", "--n", "3", "--out", "win.bin"]);
}

fn train(dir: &Path, out: &str, seed: &str, extra: &[&str]) {
    let mut args = vec!["train", "--windows", "win.bin", "--out", out, "--seed", seed];
    args.extend_from_slice(TRAIN_FLAGS);
    args.extend_from_slice(extra);
    run(dir, &args);
}

fn load(path: PathBuf) -> Model {
    read_model(fs::File::open(path).unwrap()).unwrap()
}

#[test]
fn build_vocab_keeps_max_size_plus_unknown() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("c.txt"), "x y z\n").unwrap();
    run(dir.path(), &["build-vocab", "--corpus", "c.txt", "--max-size", "2", "--out", "v.tsv"]);
    let tsv = fs::read_to_string(dir.path().join("v.tsv")).unwrap();
    assert_eq!(tsv, "0\tx\t1\n1\ty\t1\n2\t<unk>\t1\n");
}

#[test]
fn zero_updates_checkpoint_is_initialization() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    train(dir.path(), "m.bin", "17", &["--updates", "0"]);
    let trained = load(dir.path().join("m.bin")).into_wrrbm().unwrap();

    let corpus = read_windows(fs::File::open(dir.path().join("win.bin")).unwrap()).unwrap();
    let cfg = TrainConfig {
        hidden_units: 5,
        embedding_dim: 3,
        num_chains: 4,
        seed: 17,
        ..TrainConfig::default()
    };
    let layout = WrrbmLayout::new(3, corpus.vocab_size(), 3, 5).unwrap();
    let proposal = corpus_proposal(&corpus, cfg.proposal_smoothing).unwrap();
    let init = TrainerState::initialize(layout, &proposal, &cfg).unwrap();
    assert_eq!(trained, init.params);
}

#[test]
fn zero_weight_model_mixing_tv_is_zero() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    train(dir.path(), "zero.bin", "3", &["--updates", "0", "--init-std", "0"]);
    run(
        dir.path(),
        &[
            "diagnose-mixing", "--model", "zero.bin", "--windows", "win.bin", "--seed", "5",
            "--iterations", "10", "--out", "mix.csv", "--aggregate-out", "agg.csv",
        ],
    );
    let csv = fs::read_to_string(dir.path().join("mix.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("window_id,group,iteration,sym_kl,tv"));
    let mut rows = 0;
    for line in lines {
        let tv: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(tv.abs() < 1e-12, "{line}");
        rows += 1;
    }
    assert_eq!(rows, 6 * 3 * 11);
    let agg = fs::read_to_string(dir.path().join("agg.csv")).unwrap();
    assert_eq!(agg.lines().count(), 1 + 6 * 11);
}

#[test]
fn inspect_model_round_trips_bitwise() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    train(dir.path(), "m.bin", "2", &["--updates", "4"]);
    let out = run(dir.path(), &["inspect-model", "--model", "m.bin", "--rewrite", "copy.bin"]);
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.starts_with("mode=wrrbm n=3 K=9 D=3 H=5"), "{summary}");
    let a = fs::read(dir.path().join("m.bin")).unwrap();
    let b = fs::read(dir.path().join("copy.bin")).unwrap();
    assert_eq!(a, b);
    assert_eq!(load(dir.path().join("m.bin")), load(dir.path().join("copy.bin")));
}

fn pipeline(dir: &Path) -> Vec<(String, Vec<u8>)> {
    prepare(dir);
    let ckpt = dir.join("ckpt");
    let ckpt = ckpt.to_str().unwrap();
    train(
        dir,
        "m.bin",
        "9",
        &["--updates", "6", "--metrics", "metrics.csv", "--checkpoint-dir", ckpt, "--checkpoint-interval", "3"],
    );
    train(dir, "neg.bin", "10", &["--updates", "6"]);
    run(dir, &["export-embeddings", "--model", "m.bin", "--vocab", "vocab.tsv", "--out", "emb.txt"]);
    run(
        dir,
        &["diagnose-mixing", "--model", "m.bin", "--windows", "win.bin", "--seed", "4", "--iterations", "5", "--out", "mix.csv", "--threads", "1"],
    );
    fs::write(dir.join("docs.tsv"), "pos\tthe cat sat on the mat\nneg\tthe dog met a log\n\ta cat sat\n").unwrap();
    run(
        dir,
        &[
            "score-docs", "--pos-model", "m.bin", "--neg-model", "neg.bin", "--vocab", "vocab.tsv",
            "--docs", "docs.tsv", "--out", "feat.csv",
        ],
    );
    let mut files: Vec<(String, Vec<u8>)> = ["vocab.tsv", "win.bin", "m.bin", "neg.bin", "emb.txt", "mix.csv", "feat.csv"]
        .iter()
        .map(|f| (f.to_string(), fs::read(dir.join(f)).unwrap()))
        .collect();
    for u in [3, 6] {
        let name = format!("ckpt/checkpoint_{u:08}.bin");
        files.push((name.clone(), fs::read(dir.join(&name)).unwrap()));
    }
    // wall_ms is the only nondeterministic column
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    let stripped: String = metrics
        .lines()
        .map(|l| l.rsplit_once(',').unwrap().0.to_string() + "\n")
        .collect();
    files.push(("metrics.csv".into(), stripped.into_bytes()));
    files
}

#[test]
fn pipeline_is_reproducible() {
    let (a, b) = (TempDir::new().unwrap(), TempDir::new().unwrap());
    let fa = pipeline(a.path());
    let fb = pipeline(b.path());
    for ((name, x), (_, y)) in fa.iter().zip(&fb) {
        assert!(x == y, "{name} differs between runs");
    }
    let feat = String::from_utf8(fa.iter().find(|f| f.0 == "feat.csv").unwrap().1.clone()).unwrap();
    assert_eq!(feat.lines().next(), Some("doc_id,fe_pos_scaled,fe_neg_scaled,score,label_if_known"));
    assert!(feat.lines().nth(3).unwrap().ends_with(','));
}

#[test]
fn classify_reports_threshold_and_accuracy() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());
    train(dir.path(), "pos.bin", "1", &["--updates", "3"]);
    train(dir.path(), "neg.bin", "2", &["--updates", "3"]);
    fs::write(dir.path().join("train.tsv"), "pos\tthe cat sat on the mat\nneg\tthe dog sat on the log\n").unwrap();
    fs::write(dir.path().join("test.tsv"), "pos\tthe cat sat\nneg\ta dog\n").unwrap();
    let out = run(
        dir.path(),
        &[
            "classify", "--pos-model", "pos.bin", "--neg-model", "neg.bin", "--vocab", "vocab.tsv",
            "--train-docs", "train.tsv", "--test-docs", "test.tsv", "--out", "pred.tsv",
        ],
    );
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("threshold=") && text.contains("accuracy="), "{text}");
    let pred = fs::read_to_string(dir.path().join("pred.tsv")).unwrap();
    assert_eq!(pred.lines().count(), 2);
    // "a dog" is shorter than n: no windows, no score, negative
    assert_eq!(pred.lines().nth(1), Some("1\t\tneg"));
}

#[test]
fn errors_are_single_machine_readable_lines() {
    let dir = TempDir::new().unwrap();
    prepare(dir.path());

    let err = run_err(dir.path(), &["train", "--windows", "win.bin", "--out", "m.bin", "--seed", "1", "--no-such-flag"]);
    assert!(err.starts_with("error: kind=usage"), "{err}");

    let err = run_err(dir.path(), &["train", "--windows", "win.bin", "--out", "m.bin"]);
    assert!(err.contains("--seed"), "{err}");

    let bytes = fs::read(dir.path().join("win.bin")).unwrap();
    fs::write(dir.path().join("cut.bin"), &bytes[..bytes.len() - 2]).unwrap();
    let err = run_err(dir.path(), &["train", "--windows", "cut.bin", "--out", "m.bin", "--seed", "1"]);
    assert!(err.starts_with("error: kind=malformed_file"), "{err}");
    assert!(err.contains("at byte"), "{err}");

    fs::write(dir.path().join("small.tsv"), "0\tthe\t1\n1\t<unk>\t1\n").unwrap();
    train(dir.path(), "m.bin", "1", &["--updates", "0"]);
    let err = run_err(dir.path(), &["export-embeddings", "--model", "m.bin", "--vocab", "small.tsv", "--out", "e.txt"]);
    assert!(err.starts_with("error: kind=dimension_mismatch"), "{err}");

    fs::write(dir.path().join("bad.tsv"), "0\tthe\t1\nnot a row\n").unwrap();
    let err = run_err(dir.path(), &["export-embeddings", "--model", "m.bin", "--vocab", "bad.tsv", "--out", "e.txt"]);
    assert!(err.contains("malformed file at byte 8"), "{err}");

    let err = run_err(dir.path(), &["neighbors", "--model", "m.bin", "--vocab", "vocab.tsv", "--query", "zebra"]);
    assert!(err.starts_with("error: kind=unknown_word"), "{err}");
}
