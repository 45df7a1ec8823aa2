use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const TINY: &str = r#"{
  "dataset": { "synth": { "n": 600, "fraud_rate": 0.1 } },
  "ccnets": {
    "explain_size": 3,
    "hidden_size": 8,
    "explainer": { "inner_network_number_of_layer": 1, "final_activation": "sigmoid" },
    "reasoner": { "inner_network": "deepfm", "inner_network_number_of_layer": 1 },
    "producer": { "inner_network": "resmlp", "inner_network_number_of_layer": 1 }
  },
  "train": { "epochs": 3, "batch_size": 64 },
  "baselines": { "epochs": 3, "batch_size": 64 },
  "experiment": { "amplify_factor": 4 }
}"#;

struct Env {
    dir: TempDir,
}

impl Env {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("tiny.json"), TINY).unwrap();
        Env { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    /// Runs a subcommand with the tiny config and `--out <dir>/<out>`.
    fn run(&self, cmd: &str, out: &str, extra: &[&str]) -> Output {
        Command::new(env!("CARGO_BIN_EXE_ccnets"))
            .arg(cmd)
            .arg("--config")
            .arg(self.path("tiny.json"))
            .arg("--out")
            .arg(self.path(out))
            .arg("--quiet")
            .args(extra)
            .output()
            .unwrap()
    }
}

fn raw(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ccnets")).args(args).output().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_ok(o: &Output) {
    assert!(o.status.success(), "exit {:?}\n{}", o.status.code(), stderr(o));
}

fn csv_rows(path: &Path) -> usize {
    fs::read_to_string(path).unwrap().lines().count() - 1
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(raw(&[]).status.code(), Some(1));
    assert_eq!(raw(&["exp1"]).status.code(), Some(1));
    assert_eq!(raw(&["--help"]).status.code(), Some(0));

    let o = raw(&["exp1", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("not found"));
    assert!(stderr(&o).contains("Usage"));

    let env = Env::new();
    fs::write(env.path("bad.json"), r#"{ "train": { "epochz": 3 } }"#).unwrap();
    let o = raw(&["train", "--config", env.path("bad.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epochz"));
}

#[test]
fn data_errors_exit_2() {
    let env = Env::new();
    fs::write(env.path("short.csv"), "Time,V1,Class\n0,1.0,0\n").unwrap();
    let o = env.run("prepare-data", "out", &["--data", env.path("short.csv").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("missing column"));

    let o = env.run("eval", "out", &["--checkpoint", env.path("none.ckpt.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_dataset_falls_back_with_notice() {
    let env = Env::new();
    let o = env.run("prepare-data", "prep", &["--data", "/nonexistent/creditcard.csv"]);
    assert_ok(&o);
    assert!(stderr(&o).contains("notice"));
    assert_eq!(csv_rows(&env.path("prep/train.csv")), 180);
    assert_eq!(csv_rows(&env.path("prep/test.csv")), 420);
    assert!(env.path("prep/normalization.json").is_file());
}

#[test]
fn prepared_csv_round_trips_through_data_flag() {
    let env = Env::new();
    assert_ok(&env.run("prepare-data", "a", &[]));
    // Re-preparing the exported training split splits it again 30/70.
    let train = env.path("a/train.csv");
    assert_ok(&env.run("prepare-data", "b", &["--data", train.to_str().unwrap()]));
    assert_eq!(csv_rows(&env.path("b/train.csv")), 54);
    assert_eq!(csv_rows(&env.path("b/test.csv")), 126);
}

#[test]
fn train_then_reuse_checkpoint() {
    let env = Env::new();
    assert_ok(&env.run("train", "t", &[]));
    for f in ["ccnets.ckpt.json", "curves_ccnets.csv", "epochs.csv", "train_summary.json"] {
        assert!(env.path("t").join(f).is_file(), "{f}");
    }
    assert_eq!(csv_rows(&env.path("t/epochs.csv")), 6);
    let ck = env.path("t/ccnets.ckpt.json");
    let ck = ck.to_str().unwrap();

    assert_ok(&env.run("eval", "e", &["--checkpoint", ck]));
    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(env.path("e/metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["tp"].as_u64().unwrap() + metrics["fp"].as_u64().unwrap() + metrics["fn"].as_u64().unwrap() + metrics["tn"].as_u64().unwrap(), 420);

    assert_ok(&env.run("generate", "g", &["--checkpoint", ck, "--mode", "reconstruction"]));
    assert_eq!(csv_rows(&env.path("g/reconstructed.csv")), 180);
    assert_ok(&env.run("amplify", "g", &["--checkpoint", ck, "--factor", "3"]));
    assert_eq!(csv_rows(&env.path("g/amplified.csv")), 540);

    assert_ok(&env.run("exp3", "x3", &["--checkpoint", ck]));
    let report = fs::read_to_string(env.path("x3/report.json")).unwrap();
    assert!(report.contains("amplified_x4"));
    // A reused checkpoint is not retrained, so no CCNETS curves are written.
    assert!(!env.path("x3/curves_ccnets.csv").exists());
}

#[test]
fn experiment_outputs_and_report() {
    let env = Env::new();
    let o = env.run("exp1", "x1", &["--seed", "3"]);
    assert_ok(&o);
    let printed = String::from_utf8_lossy(&o.stdout);
    assert!(printed.contains("ccnets") && printed.contains("autoencoder_mlp"));
    for f in [
        "report.json",
        "metrics.json",
        "epochs.csv",
        "curves_ccnets.csv",
        "curves_autoencoder.csv",
        "curves_autoencoder_mlp.csv",
        "ccnets.ckpt.json",
        "autoencoder.ckpt.json",
        "autoencoder_mlp.ckpt.json",
    ] {
        assert!(env.path("x1").join(f).is_file(), "{f}");
    }
    let metrics = fs::read_to_string(env.path("x1/metrics.json")).unwrap();
    assert!(!metrics.contains("wall_clock"));
    assert!(fs::read_to_string(env.path("x1/report.json")).unwrap().contains("wall_clock_seconds"));
    assert_eq!(
        fs::read_to_string(env.path("x1/curves_ccnets.csv")).unwrap().lines().next(),
        Some("epoch,phase,series,value")
    );

    assert_ok(&env.run("exp2", "x2", &[]));
    let o = raw(&["report", env.path("x1").to_str().unwrap(), env.path("x2").to_str().unwrap()]);
    assert_ok(&o);
    let text = String::from_utf8_lossy(&o.stdout);
    assert!(text.contains("exp1 (seed 3)") && text.contains("reconstruction"));
}

#[test]
fn baseline_commands() {
    let env = Env::new();
    assert_ok(&env.run("train-ae", "ae", &[]));
    assert!(env.path("ae/autoencoder.ckpt.json").is_file());
    assert_ok(&env.run("train-mlp", "mlp", &["--epochs", "2"]));
    assert_eq!(csv_rows(&env.path("mlp/curves_mlp.csv")), 4);
}
