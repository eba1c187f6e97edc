//! The command-line pipeline: simulate → train → evaluate → explain.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use poetree::data::Normalizer;
use poetree::io::{write_trajectory_file, ModelFile, ModelMetadata};
use poetree::synth::{generate_dataset, SynthConfig};
use poetree::tree::{Dims, InnerParams, LeafParams, NodeParams, ParamSet, RecurrenceModel, TreePolicy, TreeTopology};
use serde_json::Value;
use tempfile::TempDir;

fn poetree(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_poetree")).args(args).current_dir(dir).output().unwrap()
}

fn ok_json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn error_line(out: &Output) -> Value {
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).unwrap()
}

const QUICK: &str = r#"{"training": {"max_epochs": 20, "max_restarts": 0}, "growth": {"max_depth": 3}}"#;

#[test]
fn simulate_writes_requested_shape_and_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let summary = ok_json(&poetree(&["simulate", "--patients", "10", "--horizon", "9", "--seed", "4", "--out", "a.jsonl"], dir.path()));
    assert_eq!(summary["patients"], 10);
    ok_json(&poetree(&["simulate", "--patients", "10", "--horizon", "9", "--seed", "4", "--out", "b.jsonl"], dir.path()));
    let a = fs::read(dir.path().join("a.jsonl")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.jsonl")).unwrap());
    let lines: Vec<Value> = String::from_utf8(a).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines.len(), 10);
    assert!(lines.iter().all(|l| l["actions"].as_array().unwrap().len() == 9));
}

#[test]
fn train_evaluate_explain_round_trip() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    fs::write(d.join("quick.json"), QUICK).unwrap();
    ok_json(&poetree(&["simulate", "--patients", "20", "--seed", "1", "--out", "d.jsonl"], d));
    let train = |model: &str| {
        poetree(
            &["train", "--data", "d.jsonl", "--config", "quick.json", "--seed", "7", "--out-model", model, "--log", "loss.csv", "--growth-log", "growth.jsonl"],
            d,
        )
    };
    let first = ok_json(&train("m1.json"));
    let second = ok_json(&train("m2.json"));
    assert_eq!(first, second);
    assert_eq!(fs::read(d.join("m1.json")).unwrap(), fs::read(d.join("m2.json")).unwrap());
    ModelFile::load(&d.join("m1.json")).unwrap().to_policy().unwrap();
    let log = fs::read_to_string(d.join("loss.csv")).unwrap();
    assert!(log.starts_with("epoch,total,action,mse,kl,split,val_auroc\n"));

    let report = ok_json(&poetree(&["evaluate", "--model", "m1.json", "--data", "d.jsonl", "--out-report", "r.json", "--flags", "f.csv"], d));
    let full: Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    for key in ["accuracy", "auroc", "auprc", "brier", "evolution_relative_error", "anomalies", "low_value", "confidence"] {
        assert!(full.get(key).is_some(), "report lacks {key}");
    }
    let data: Vec<Value> = fs::read_to_string(d.join("d.jsonl")).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let acts: Vec<u64> = data.iter().flat_map(|t| t["actions"].as_array().unwrap().iter().map(|a| a.as_u64().unwrap())).collect();
    let treat = acts.iter().filter(|&&a| a == 1).count() as f64 / acts.len() as f64;
    assert!(report["accuracy"].as_f64().unwrap() >= treat.max(1.0 - treat) - 1e-12);
    assert_eq!(fs::read_to_string(d.join("f.csv")).unwrap().lines().count(), acts.len() + 1);

    let explained = ok_json(&poetree(
        &["explain", "--model", "m1.json", "--data", "d.jsonl", "--trajectory-id", "patient-3", "--timestep", "1", "--timestep", "4", "--out-dot", "e.dot", "--out-json", "e.json"],
        d,
    ));
    assert_eq!(explained["timesteps"], serde_json::json!([1, 4]));
    let dot = fs::read_to_string(d.join("e.dot")).unwrap();
    assert_eq!(dot.matches("digraph ").count(), 2);
    assert_eq!(dot.matches('{').count(), dot.matches('}').count());
    let doc: Value = serde_json::from_str(&fs::read_to_string(d.join("e.json")).unwrap()).unwrap();
    assert!(doc["trees"][0]["history"].as_array().unwrap().iter().all(|h| h.as_f64() == Some(0.0)));
}

#[test]
fn failures_exit_with_code_two_and_json_errors() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    ok_json(&poetree(&["simulate", "--patients", "5", "--seed", "2", "--out", "d.jsonl"], d));
    fs::write(d.join("bad.json"), "{\"training\": {\"lambda\": \"lots\"}}").unwrap();
    let e = error_line(&poetree(&["train", "--data", "d.jsonl", "--config", "bad.json", "--out-model", "m.json"], d));
    assert_eq!(e["error"], "config");
    let e = error_line(&poetree(&["train", "--data", "missing.jsonl", "--out-model", "m.json"], d));
    assert_eq!(e["error"], "io");
    let e = error_line(&poetree(&["simulate", "--out", "no/such/dir/x.jsonl"], d));
    assert_eq!(e["error"], "io");
    fs::write(d.join("ragged.jsonl"), "{\"id\":\"a\",\"observations\":[[1,2]],\"actions\":[0]}\n{\"id\":\"b\",\"observations\":[[1]],\"actions\":[0]}\n").unwrap();
    let e = error_line(&poetree(&["train", "--data", "ragged.jsonl", "--out-model", "m.json"], d));
    assert!(e["message"].as_str().unwrap().contains("line 2"));
    assert_eq!(error_line(&poetree(&["train", "--bogus"], d))["error"], "usage");
}

/// A one-step expert (treat iff the current test is positive) is matched
/// exactly by a stump on the test dimension.
#[test]
fn oracle_stub_scores_perfectly() {
    let dir = TempDir::new().unwrap();
    let d = dir.path();
    let data = generate_dataset(&SynthConfig { n_patients: 50, window: 1, n_noise_dims: 2, seed: 3, ..Default::default() }).unwrap();
    write_trajectory_file(&d.join("d.jsonl"), &data).unwrap();
    let dims = Dims { obs: 3, actions: 2, history: 1 };
    let leaf = |a: f64| {
        let mut l = LeafParams::zeros(dims, RecurrenceModel::FixedTanh);
        l.theta_a = vec![-a, a];
        NodeParams::Leaf(l)
    };
    let stump = TreePolicy::new(
        TreeTopology::complete(1),
        ParamSet { nodes: vec![NodeParams::Inner(InnerParams::linear(vec![0.0, 50.0, 0.0, 0.0], -25.0)), leaf(-20.0), leaf(20.0)] },
        dims,
        RecurrenceModel::FixedTanh,
        Normalizer::identity(3),
    )
    .unwrap();
    ModelFile::from_policy(&stump, ModelMetadata::default()).save(&d.join("oracle.json")).unwrap();
    let r = ok_json(&poetree(&["evaluate", "--model", "oracle.json", "--data", "d.jsonl", "--out-report", "r.json"], d));
    assert_eq!(r["auroc"], 1.0);
    assert_eq!(r["accuracy"], 1.0);
    assert!(r["brier"].as_f64().unwrap() < 1e-6);
}
