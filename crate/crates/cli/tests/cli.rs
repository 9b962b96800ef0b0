//! End-to-end tests against the built binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

fn bornseq() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bornseq"))
}

fn run(args: &[&str]) -> Output {
    bornseq().args(args).output().expect("binary runs")
}

fn write_fasta(path: &Path, count: usize, length: usize, seed: u64) {
    let letters = ['A', 'C', 'G', 'U'];
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut text = String::new();
    for i in 0..count {
        let seq: String = (0..length).map(|_| letters[rng.gen_range(0..4)]).collect();
        text.push_str(&format!(">seq_{}\n{}\n", i, seq));
    }
    fs::write(path, text).unwrap();
}

fn write_config(path: &Path, data: &Path, out_dir: &Path, extra: &str) {
    let text = format!(
        "data = {:?}\ntarget_n = 4\nlength_policy = \"reject\"\ntest_fraction = 0.25\n\
         d_max = 2\np = 2\nbatch_size = 16\nepochs = 3\nseed = 11\nout_dir = {:?}\n{}",
        data.display().to_string(),
        out_dir.display().to_string(),
        extra
    );
    fs::write(path, text).unwrap();
}

struct TrainedRun {
    _dir: tempfile::TempDir,
    out: PathBuf,
}

fn train_small(extra: &str) -> TrainedRun {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("corpus.fasta");
    write_fasta(&data, 48, 4, 3);
    let config = dir.path().join("run.toml");
    let out = dir.path().join("out");
    write_config(&config, &data, &out, extra);
    let output = run(&["train", "--config", config.to_str().unwrap()]);
    assert!(
        output.status.success(),
        "train failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    TrainedRun { _dir: dir, out }
}

#[test]
fn missing_data_file_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    let missing = dir.path().join("nowhere.fasta");
    write_config(&config, &missing, &dir.path().join("out"), "");
    let output = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&output.stderr);
    assert!(stderr.contains("nowhere.fasta"), "stderr: {}", stderr);
}

#[test]
fn missing_config_file_exits_2() {
    let output = run(&["train", "--config", "/definitely/not/here.toml"]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("corpus.fasta");
    write_fasta(&data, 8, 4, 1);
    let config = dir.path().join("run.toml");
    write_config(&config, &data, &dir.path().join("out"), "mystery_key = 3\n");
    let output = run(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn train_emits_checkpoint_history_manifest() {
    let trained = train_small("");
    for file in ["checkpoint.json", "history.csv", "manifest.toml", "rejections.csv"] {
        assert!(trained.out.join(file).exists(), "{} missing", file);
    }
    let history = fs::read_to_string(trained.out.join("history.csv")).unwrap();
    assert!(history.starts_with("epoch,train_nll,test_nll,max_isometry_dev,wall_seconds"));
    assert_eq!(history.lines().count(), 1 + 3);
}

#[test]
fn one_hot_mode_forces_p_to_vocab_size_and_freezes() {
    let trained = train_small("embedding = \"one-hot\"\n");
    let checkpoint = fs::read_to_string(trained.out.join("checkpoint.json")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&checkpoint).unwrap();
    assert_eq!(doc["embedding"], "one-hot");
    assert_eq!(doc["phys_dim"], 4);
    assert_eq!(doc["vocab_size"], 4);
    assert_eq!(doc["config"]["freeze_embedding"], true);
    let manifest = fs::read_to_string(trained.out.join("manifest.toml")).unwrap();
    assert!(manifest.contains("p = 4"), "manifest: {}", manifest);
}

#[test]
fn manifest_alone_reproduces_the_checkpoint() {
    let trained = train_small("");
    let first = fs::read_to_string(trained.out.join("checkpoint.json")).unwrap();
    let rerun_out = trained.out.join("rerun");
    let output = run(&[
        "train",
        "--config",
        trained.out.join("manifest.toml").to_str().unwrap(),
        "--out",
        rerun_out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "rerun failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let second = fs::read_to_string(rerun_out.join("checkpoint.json")).unwrap();
    assert_eq!(first, second, "checkpoint must be byte-identical");
}

#[test]
fn sample_zero_count_writes_empty_fasta() {
    let trained = train_small("");
    let out = trained.out.join("empty.fasta");
    let output = run(&[
        "sample",
        "--checkpoint",
        trained.out.join("checkpoint.json").to_str().unwrap(),
        "--count",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_eq!(fs::read_to_string(out).unwrap(), "");
}

#[test]
fn sampling_is_deterministic_per_seed_and_order() {
    let trained = train_small("");
    let checkpoint = trained.out.join("checkpoint.json");
    let mut bytes = Vec::new();
    for name in ["a.fasta", "b.fasta"] {
        let out = trained.out.join(name);
        let output = run(&[
            "sample",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--count",
            "12",
            "--order",
            "reverse",
            "--seed",
            "21",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success());
        bytes.push(fs::read(out).unwrap());
    }
    assert_eq!(bytes[0], bytes[1]);
    assert!(!bytes[0].is_empty());

    let other = trained.out.join("c.fasta");
    let output = run(&[
        "sample",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--count",
        "12",
        "--order",
        "reverse",
        "--seed",
        "22",
        "--out",
        other.to_str().unwrap(),
    ]);
    assert!(output.status.success());
    assert_ne!(bytes[0], fs::read(other).unwrap());
}

#[test]
fn sample_supports_masks_and_explicit_order() {
    let trained = train_small("");
    let checkpoint = trained.out.join("checkpoint.json");
    let masked = trained.out.join("masked.fasta");
    let output = run(&[
        "sample",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--count",
        "3",
        "--mask",
        "A??G",
        "--seed",
        "5",
        "--out",
        masked.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "mask sampling failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let text = fs::read_to_string(&masked).unwrap();
    for line in text.lines().filter(|l| !l.starts_with('>')) {
        assert!(line.starts_with('A') && line.ends_with('G'), "line {}", line);
    }

    let bad_mask = run(&[
        "sample",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--mask",
        "A?",
        "--out",
        trained.out.join("bad.fasta").to_str().unwrap(),
    ]);
    assert_eq!(bad_mask.status.code(), Some(2));

    let explicit = run(&[
        "sample",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--count",
        "2",
        "--order",
        "explicit",
        "--order-sites",
        "2,0,3,1",
        "--out",
        trained.out.join("explicit.fasta").to_str().unwrap(),
    ]);
    assert!(explicit.status.success());
}

#[test]
fn eval_writes_metrics_and_scatter() {
    let trained = train_small("");
    let eval_out = trained.out.join("eval");
    let data = trained.out.join("heldout.fasta");
    write_fasta(&data, 24, 4, 77);
    let output = run(&[
        "eval",
        "--checkpoint",
        trained.out.join("checkpoint.json").to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(eval_out.join("metrics.json")).unwrap()).unwrap();
    assert!(metrics["test_nll"].as_f64().unwrap() > 0.0);
    assert_eq!(metrics["site_rows"], 4 * 4);
    let scatter = fs::read_to_string(eval_out.join("scatter.csv")).unwrap();
    assert!(scatter.contains("feature_type,i,j,xi,xj,data_value,model_value"));
}

#[test]
fn eval_missing_data_exits_2() {
    let trained = train_small("");
    let output = run(&[
        "eval",
        "--checkpoint",
        trained.out.join("checkpoint.json").to_str().unwrap(),
        "--data",
        "/no/such/file.fasta",
        "--out",
        trained.out.join("eval").to_str().unwrap(),
    ]);
    assert_eq!(output.status.code(), Some(2));
}

#[test]
fn check_passes_on_fresh_model_and_fails_on_corruption() {
    let trained = train_small("");
    let checkpoint = trained.out.join("checkpoint.json");
    let output = run(&["check", "--checkpoint", checkpoint.to_str().unwrap()]);
    assert_eq!(
        output.status.code(),
        Some(0),
        "check failed: {}",
        String::from_utf8_lossy(&output.stdout)
    );
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&output.stdout)).unwrap();
    assert_eq!(report["all_pass"], true);

    // Corrupt one tensor entry; the isometry check must catch it.
    let text = fs::read_to_string(&checkpoint).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
    let entry = doc["tensors"][0][0][0].as_f64().unwrap();
    let target = format!("{}", entry);
    let corrupted = text.replacen(&target, &format!("{}", entry + 0.05), 1);
    assert_ne!(text, corrupted);
    let bad_path = trained.out.join("corrupted.json");
    fs::write(&bad_path, corrupted).unwrap();
    let output = run(&["check", "--checkpoint", bad_path.to_str().unwrap()]);
    assert_eq!(output.status.code(), Some(1));
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&output.stdout)).unwrap();
    assert_eq!(report["all_pass"], false);
}

#[test]
fn thread_env_var_is_respected() {
    let trained = train_small("");
    let out = trained.out.join("threads.fasta");
    let output = bornseq()
        .env("BORNSEQ_THREADS", "1")
        .args([
            "sample",
            "--checkpoint",
            trained.out.join("checkpoint.json").to_str().unwrap(),
            "--count",
            "2",
            "--out",
            out.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(output.status.success());
}

/// A chain that generates one fixed sequence with probability 1.
fn deterministic_bundle(targets: &[usize]) -> bornseq_core::ModelBundle {
    use bornseq_core::*;
    use num_complex::Complex64;
    let v = 4usize;
    let tensors = targets
        .iter()
        .map(|&x| {
            let mut t = ComplexTensor::zeros(&[1, v, 1]);
            t.set(&[0, x, 0], Complex64::new(1.0, 0.0));
            t
        })
        .collect();
    ModelBundle {
        embedding: Embedding::OneHot { vocab_size: v },
        mps: IsometricMps::from_tensors(v, tensors).unwrap(),
        vocab: Vocab::nucleotide(),
        config: TrainConfig::default(),
        seed: 0,
    }
}

#[test]
fn deterministic_checkpoint_samples_identical_records() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("det.json");
    bornseq_core::save_checkpoint(&deterministic_bundle(&[0, 1, 2, 3]), &checkpoint).unwrap();
    let out = dir.path().join("det.fasta");
    for order in ["forward", "reverse", "random"] {
        let output = run(&[
            "sample",
            "--checkpoint",
            checkpoint.to_str().unwrap(),
            "--count",
            "6",
            "--order",
            order,
            "--seed",
            "9",
            "--out",
            out.to_str().unwrap(),
        ]);
        assert!(output.status.success());
        let text = fs::read_to_string(&out).unwrap();
        let bodies: Vec<&str> = text.lines().filter(|l| !l.starts_with('>')).collect();
        assert_eq!(bodies.len(), 6);
        assert!(bodies.iter().all(|b| *b == "ACGU"), "order {}: {:?}", order, bodies);
    }
}

#[test]
fn eval_on_single_site_model_has_no_pair_rows() {
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("one.json");
    bornseq_core::save_checkpoint(&deterministic_bundle(&[2]), &checkpoint).unwrap();
    let data = dir.path().join("one.fasta");
    fs::write(&data, ">a\nG\n>b\nG\n>c\nA\n").unwrap();
    let out = dir.path().join("eval");
    let output = run(&[
        "eval",
        "--checkpoint",
        checkpoint.to_str().unwrap(),
        "--data",
        data.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(
        output.status.success(),
        "eval failed: {}",
        String::from_utf8_lossy(&output.stderr)
    );
    let metrics: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["pair_rows"], 0);
    assert_eq!(metrics["site_rows"], 4);
}

#[test]
fn check_skips_enumeration_on_large_models() {
    use bornseq_core::*;
    let dir = tempfile::tempdir().unwrap();
    let checkpoint = dir.path().join("big.json");
    let bundle = ModelBundle {
        embedding: Embedding::Trainable(EmbeddingParams::random(4, 2, 5).unwrap()),
        mps: IsometricMps::random(40, 2, 2, 6).unwrap(),
        vocab: Vocab::nucleotide(),
        config: TrainConfig::default(),
        seed: 5,
    };
    save_checkpoint(&bundle, &checkpoint).unwrap();
    let output = run(&["check", "--checkpoint", checkpoint.to_str().unwrap()]);
    assert_eq!(
        output.status.code(),
        Some(0),
        "skipped checks must not fail: {}",
        String::from_utf8_lossy(&output.stdout)
    );
    let report: serde_json::Value =
        serde_json::from_str(&String::from_utf8_lossy(&output.stdout)).unwrap();
    let checks = report["checks"].as_array().unwrap();
    let brute = checks
        .iter()
        .find(|c| c["name"] == "normalization_brute_force")
        .unwrap();
    assert!(brute["skipped"].as_str().unwrap().contains("too large"));
}
