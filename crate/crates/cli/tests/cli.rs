//! End-to-end runs of the `skelact` binary: the synth -> train -> eval
//! pipeline, the replay stream, and the documented exit codes.

use std::path::Path;
use std::process::{Command, Output};

fn skelact(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skelact"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).to_string()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).to_string()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn full_pipeline_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let model_path = dir.path().join("model.json");
    let report_path = dir.path().join("train_report.json");

    // synth
    let out = skelact(&[
        "synth",
        "--topology",
        "jhmdb15",
        "--classes",
        "2",
        "--per-class",
        "6",
        "--frames-min",
        "20",
        "--frames-max",
        "36",
        "--noise",
        "0.03",
        "--seed",
        "3",
        "--out",
        path_str(&data_dir),
    ]);
    assert!(out.status.success(), "synth failed: {}", stderr(&out));
    let manifest = data_dir.join("manifest.json");
    assert!(manifest.exists());
    assert!(data_dir.join("sequences").read_dir().unwrap().count() == 12);

    // train (tiny settings)
    let out = skelact(&[
        "train",
        "--manifest",
        path_str(&manifest),
        "--model-out",
        path_str(&model_path),
        "--report-out",
        path_str(&report_path),
        "--epochs",
        "6",
        "--base-filters",
        "2",
        "--fc-width",
        "8",
        "--batch-size",
        "4",
        "--seed",
        "5",
    ]);
    assert!(out.status.success(), "train failed: {}", stderr(&out));
    assert!(model_path.exists());
    let schema_path = dir.path().join("model.json.schema.json");
    assert!(schema_path.exists(), "default schema path written");
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["epochs"].as_array().unwrap().len(), 6);

    // eval-offline
    let eval_report = dir.path().join("offline.json");
    let confusion_csv = dir.path().join("confusion.csv");
    let out = skelact(&[
        "eval-offline",
        "--manifest",
        path_str(&manifest),
        "--model",
        path_str(&model_path),
        "--schema",
        path_str(&schema_path),
        "--report-out",
        path_str(&eval_report),
        "--confusion-csv",
        path_str(&confusion_csv),
    ]);
    assert!(out.status.success(), "eval-offline failed: {}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval_report).unwrap()).unwrap();
    assert_eq!(report["mode"], "offline");
    assert_eq!(report["total_sequences"], 6);
    let csv = std::fs::read_to_string(&confusion_csv).unwrap();
    assert_eq!(csv.lines().count(), 3);

    // eval-online with a prediction log (schema found at the default path)
    let log_path = dir.path().join("predictions.jsonl");
    let out = skelact(&[
        "eval-online",
        "--manifest",
        path_str(&manifest),
        "--model",
        path_str(&model_path),
        "--method",
        "memory-group",
        "--averaging",
        "pairwise",
        "--log",
        path_str(&log_path),
    ]);
    assert!(out.status.success(), "eval-online failed: {}", stderr(&out));
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["mode"], "online-memory-group");
    assert_eq!(report["averaging"], "pairwise");
    let log = std::fs::read_to_string(&log_path).unwrap();
    for line in log.lines() {
        let record: serde_json::Value = serde_json::from_str(line).unwrap();
        assert!(record["probs_averaged"].is_array());
        assert!(record["class"].is_string());
    }

    // sliding-window route through the same artifacts
    let out = skelact(&[
        "eval-online",
        "--manifest",
        path_str(&manifest),
        "--model",
        path_str(&model_path),
        "--method",
        "sliding-window",
        "--averaging",
        "cumulative",
    ]);
    assert!(out.status.success());
    let report: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["mode"], "online-sliding-window");
}

#[test]
fn replay_streams_the_sequence() {
    let dir = tempfile::tempdir().unwrap();
    let data_dir = dir.path().join("data");
    let out = skelact(&[
        "synth",
        "--topology",
        "jhmdb15",
        "--classes",
        "1",
        "--per-class",
        "1",
        "--frames-min",
        "8",
        "--frames-max",
        "8",
        "--out",
        path_str(&data_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let seq = data_dir.join("sequences");
    let file = seq.read_dir().unwrap().next().unwrap().unwrap().path();
    let out = skelact(&["replay", "--sequence", path_str(&file)]);
    assert!(out.status.success());
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 9); // 8 frames + end sentinel
    assert!(lines[0].starts_with("{\"i\":0,"));
    assert_eq!(lines[8], "{\"end\":true}");
}

#[test]
fn gradcheck_reports_pass() {
    let out = skelact(&[
        "gradcheck",
        "--channels",
        "4",
        "--classes",
        "2",
        "--base-filters",
        "2",
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("PASS"));
    assert!(text.contains("max relative error"));
}

#[test]
fn usage_error_exits_1() {
    let out = skelact(&["train", "--no-such-flag"]);
    assert_eq!(out.status.code(), Some(1));
    let out = skelact(&["not-a-command"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn data_error_exits_2() {
    let out = skelact(&[
        "eval-offline",
        "--manifest",
        "/nonexistent/manifest.json",
        "--model",
        "/nonexistent/model.json",
    ]);
    assert_eq!(out.status.code(), Some(2), "stderr: {}", stderr(&out));

    let dir = tempfile::tempdir().unwrap();
    let out = skelact(&[
        "convert",
        "--format",
        "jhmdb",
        "--src",
        path_str(dir.path()),
        "--out",
        path_str(&dir.path().join("out")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no sequences found"));
}

#[test]
fn custom_topology_file_via_flag() {
    let dir = tempfile::tempdir().unwrap();
    let topo_path = dir.path().join("path3.json");
    std::fs::write(
        &topo_path,
        serde_json::json!({
            "name": "path3",
            "dim": 2,
            "joint_names": ["a", "b", "c"],
            "edges": [[0, 1], [1, 2]],
            "end_joints": [0, 2],
            "root_joint": 1,
            "plane_triples": [],
        })
        .to_string(),
    )
    .unwrap();
    let data_dir = dir.path().join("data");
    let out = skelact(&[
        "synth",
        "--topology",
        path_str(&topo_path),
        "--classes",
        "2",
        "--per-class",
        "2",
        "--frames-min",
        "18",
        "--frames-max",
        "20",
        "--out",
        path_str(&data_dir),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    // manifest points back at the topology file
    let manifest = std::fs::read_to_string(data_dir.join("manifest.json")).unwrap();
    assert!(manifest.contains("path3.json"));
}
