//! End-to-end runs of the `jamident` binary at toy scale.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const TINY_CONFIG: &str = r#"
[dataset]
seed = 3
isnr_grid_db = [-14.0, 8.0]
samples_per_type_per_isnr = 4

[train]
epochs = 1
batch_size = 16

[mask]
branches = 2

[attack]
eps_255 = [0.0, 8.0]
"#;

fn jamident(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jamident"))
        .args(args)
        .env("JAMIDENT_THREADS", "1")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn csv_accuracy(path: &Path) -> f64 {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find(|l| l.starts_with("accuracy,"))
        .unwrap()
        .split(',')
        .nth(1)
        .unwrap()
        .parse()
        .unwrap()
}

#[test]
fn baseline_pipeline_end_to_end() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let cfg = path_str(&cfg);

    // Dataset generation is reproducible byte for byte.
    let ds1 = root.path().join("ds1");
    let ds2 = root.path().join("ds2");
    ok(&jamident(&["gen-dataset", "--config", cfg, "--out", path_str(&ds1)]));
    ok(&jamident(&["gen-dataset", "--config", cfg, "--out", path_str(&ds2)]));
    assert_eq!(
        fs::read(ds1.join("images.f32")).unwrap(),
        fs::read(ds2.join("images.f32")).unwrap()
    );

    // Training emits one JSON line per epoch and writes a checkpoint.
    let run = root.path().join("run");
    let out = jamident(&[
        "train",
        "--config",
        cfg,
        "--dataset",
        path_str(&ds1),
        "--out",
        path_str(&run),
    ]);
    ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    let epoch_lines: Vec<serde_json::Value> = stdout
        .lines()
        .map(|l| serde_json::from_str(l).expect("stdout is JSONL"))
        .filter(|v: &serde_json::Value| v.get("epoch").is_some())
        .collect();
    assert_eq!(epoch_lines.len(), 1);
    assert!(run.join("checkpoint.json").exists());
    assert!(run.join("checkpoint.bin").exists());
    assert_eq!(
        fs::read_to_string(run.join("train_log.jsonl")).unwrap().lines().count(),
        1
    );

    // Clean evaluation writes the report set.
    let eval_dir = root.path().join("eval");
    ok(&jamident(&[
        "eval",
        "--config",
        cfg,
        "--dataset",
        path_str(&ds1),
        "--checkpoint",
        path_str(&run),
        "--out",
        path_str(&eval_dir),
    ]));
    for f in ["summary.csv", "accuracy_by_isnr.csv", "confusion.csv"] {
        assert!(eval_dir.join(f).exists(), "missing {}", f);
    }
    let clean_acc = csv_accuracy(&eval_dir.join("summary.csv"));

    // A zero-budget attack reproduces the clean accuracy exactly.
    let adv_dir = root.path().join("adv");
    ok(&jamident(&[
        "attack-eval",
        "--config",
        cfg,
        "--dataset",
        path_str(&ds1),
        "--checkpoint",
        path_str(&run),
        "--out",
        path_str(&adv_dir),
    ]));
    let adv = fs::read_to_string(adv_dir.join("adversarial.csv")).unwrap();
    let zero_row: Vec<&str> = adv
        .lines()
        .find(|l| l.starts_with("0,"))
        .expect("eps 0 row present")
        .split(',')
        .collect();
    let zero_acc: f64 = zero_row[3].parse().unwrap();
    assert!((zero_acc - clean_acc).abs() < 1e-9);
    assert!(adv_dir.join("adversarial_by_isnr.csv").exists());
}

#[test]
fn masked_training_defends_with_the_ensemble() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let cfg = path_str(&cfg);

    let ds = root.path().join("ds");
    ok(&jamident(&["gen-dataset", "--config", cfg, "--out", path_str(&ds)]));
    let run = root.path().join("masked");
    ok(&jamident(&[
        "train",
        "--config",
        cfg,
        "--dataset",
        path_str(&ds),
        "--strategy",
        "masked",
        "--out",
        path_str(&run),
    ]));
    let header = fs::read_to_string(run.join("checkpoint.json")).unwrap();
    assert!(header.contains("\"strategy\": \"masked\""));

    let adv_dir = root.path().join("adv");
    let out = jamident(&[
        "attack-eval",
        "--config",
        cfg,
        "--dataset",
        path_str(&ds),
        "--checkpoint",
        path_str(&run),
        "--eps",
        "8",
        "--out",
        path_str(&adv_dir),
    ]);
    ok(&out);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"strategy\":\"masked\""), "{}", stdout);
    assert!(adv_dir.join("adversarial.csv").exists());
}

#[test]
fn missing_checkpoint_exits_with_2() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    let ds = root.path().join("ds");
    ok(&jamident(&[
        "gen-dataset",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&ds),
    ]));
    let out = jamident(&[
        "eval",
        "--dataset",
        path_str(&ds),
        "--checkpoint",
        path_str(&root.path().join("nope")),
        "--out",
        path_str(&root.path().join("eval")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("error"));
}

#[test]
fn bad_config_key_exits_with_2() {
    let root = tempfile::tempdir().unwrap();
    let cfg = root.path().join("run.toml");
    fs::write(&cfg, "[train]\nepochz = 3\n").unwrap();
    let out = jamident(&[
        "gen-dataset",
        "--config",
        path_str(&cfg),
        "--out",
        path_str(&root.path().join("ds")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epochz"));
}

#[test]
fn flops_out_of_band_exits_nonzero_but_prints_the_breakdown() {
    let out = jamident(&["flops"]);
    // The full model's faithful count sits above the design band, so the
    // band check must fail loudly rather than pass quietly.
    assert_eq!(out.status.code(), Some(2));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("total,11002152"), "{}", stdout);
    assert!(stdout.contains("in_band,false"));
}
