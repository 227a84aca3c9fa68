//! End-to-end checks of the `fedspace` binary: exit codes, stdout
//! contracts, and byte-identical outputs on identical invocations.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn fedspace(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fedspace"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("fedspace_cli_{name}"));
    let _ = fs::remove_dir_all(&dir);
    dir
}

#[test]
fn no_arguments_prints_usage_and_exits_1() {
    let out = fedspace(&[]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");
}

#[test]
fn unknown_flag_rejected() {
    let out = fedspace(&["topology", "--ring", "10", "1", "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn version_includes_config_schema() {
    let out = fedspace(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("config-schema"), "stdout: {stdout}");
}

#[test]
fn topology_prints_spectral_summary_json() {
    let out = fedspace(&["topology", "--ring", "10", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value =
        serde_json::from_slice(&out.stdout).expect("stdout is JSON");
    let lambda2 = json["lambda2"].as_f64().unwrap();
    assert!((lambda2 - 0.38).abs() < 0.01, "lambda2 {lambda2}");
    assert_eq!(json["n"], 10);
}

#[test]
fn topology_dump_writes_canonical_json() {
    let dir = tmp_dir("topo");
    fs::create_dir_all(&dir).unwrap();
    let path = dir.join("topo.json");
    let out = fedspace(&["topology", "--ring", "3", "1", "--dump", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        fs::read_to_string(&path).unwrap(),
        r#"{"n":3,"edges":[[0,1],[0,2],[1,2]]}"#
    );
}

#[test]
fn invalid_topology_parameters_exit_1() {
    let out = fedspace(&["topology", "--ring", "10", "5"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn bounds_prints_constants() {
    let out = fedspace(&["bounds", "--ring", "10", "1", "--eps", "0.1", "--eta", "0.01", "--lm", "1.0"]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(json["c1"].is_null());
    let kappa2 = json["kappa2"].as_f64().unwrap();
    assert!((kappa2 - (1.0 - 0.1 * 0.381966)).abs() < 1e-6);
    assert!(json["limit_best_gap"].as_f64().unwrap() > 0.0);
}

#[test]
fn toy_reaches_the_shared_optimum() {
    let out = fedspace(&["toy", "--init", "0.5,0.5,-2,-1", "--scheme", "distill"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    // both printed products are 1.000000 at the default step budget
    assert_eq!(stdout.matches("product = 1.000000").count(), 2, "{stdout}");
}

#[test]
fn meta_run_is_replayable_byte_for_byte() {
    let dir = tmp_dir("meta_replay");
    let run = || -> (String, String) {
        let out = fedspace(&[
            "meta",
            "--epochs",
            "50",
            "--epsilon",
            "0.25",
            "--out-dir",
            dir.to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let trace = fs::read_to_string(dir.join("metatrace.csv")).unwrap();
        let config = fs::read_to_string(dir.join("resolved_config.json")).unwrap();
        (trace, config)
    };
    let (trace_a, config_a) = run();
    let (trace_b, config_b) = run();
    assert_eq!(trace_a, trace_b);
    assert_eq!(config_a, config_b);
    // timestamps are confined to the log file
    let dir_b = dir;
    assert!(dir_b.join("run.log").exists());
    assert!(!trace_b.contains(':'), "no timestamps in machine outputs");
    let header = trace_b.lines().next().unwrap();
    assert_eq!(header, "epoch,D_t,gamma_t,loss_mean,loss_best,thm2_rhs");
}

#[test]
fn cmfd_run_writes_all_outputs() {
    let dir = tmp_dir("cmfd");
    let cfg = serde_json::json!({
        "topology": {"kind": "ring", "n": 4, "k": 1},
        "epochs": 3,
        "eta": {"kind": "constant", "value": 0.0005},
        "epsilon": 0.01,
        "minibatch": 20,
        "distill_minibatch": 10,
        "public_size": 40,
        "dataset": {
            "kind": "blobs",
            "classes": 4, "per_class": 60, "spread": 0.2, "seed": 3,
            "test_per_class": 10,
            "partition": {"rule": "ring", "labels_per_device": 2, "per_device": 20, "seed": 4}
        },
        "models": [{"layers": [2, 8, 4], "head": "softmax"}]
    });
    fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("config.json");
    fs::write(&cfg_path, serde_json::to_string_pretty(&cfg).unwrap()).unwrap();
    let out = fedspace(&[
        "cmfd",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out-dir",
        dir.to_str().unwrap(),
        "--telemetry",
        "--dump-checkpoints",
        "--threads",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,device,acc,top5,distill_loss,d_t,bytes\n"));
    assert_eq!(metrics.lines().count(), 1 + 3 * 4);
    assert!(dir.join("metrics.jsonl").exists());
    assert!(dir.join("summary.json").exists());
    assert!(dir.join("resolved_config.json").exists());
    // telemetry: one digest per device per epoch
    let digests = fs::read_to_string(dir.join("broadcasts.jsonl")).unwrap();
    assert_eq!(digests.lines().count(), 3 * 4);
    assert!(digests.lines().next().unwrap().contains("\"outputs_digest\":"));
    // checkpoints parse back
    let cp = fs::read_to_string(dir.join("checkpoint_dev0.json")).unwrap();
    let parsed: serde_json::Value = serde_json::from_str(&cp).unwrap();
    assert_eq!(parsed["layers"], serde_json::json!([2, 8, 4]));
}

#[test]
fn paramavg_rejects_heterogeneous_models_exit_1() {
    let dir = tmp_dir("pa_hetero");
    let cfg = serde_json::json!({
        "topology": {"kind": "ring", "n": 4, "k": 1},
        "epochs": 2,
        "dataset": {
            "kind": "blobs",
            "classes": 4, "per_class": 60, "spread": 0.2, "seed": 3,
            "test_per_class": 10,
            "partition": {"rule": "ring", "labels_per_device": 2, "per_device": 20, "seed": 4}
        },
        "models": [
            {"layers": [2, 8, 4]}, {"layers": [2, 8, 4]},
            {"layers": [2, 6, 4]}, {"layers": [2, 8, 4]}
        ]
    });
    fs::create_dir_all(&dir).unwrap();
    let cfg_path = dir.join("config.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let out = fedspace(&["paramavg", "--config", cfg_path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("one architecture"), "{stderr}");
}

#[test]
fn data_validate_idx_roundtrip() {
    use fedspace_core::data::{encode_idx_images, encode_idx_labels, IdxImages};
    let dir = tmp_dir("idx");
    fs::create_dir_all(&dir).unwrap();
    let images = IdxImages {
        rows: 2,
        cols: 2,
        pixels: vec![0; 8],
    };
    let ipath = dir.join("images.idx");
    let lpath = dir.join("labels.idx");
    fs::write(&ipath, encode_idx_images(&images)).unwrap();
    fs::write(&lpath, encode_idx_labels(&[1, 2])).unwrap();
    let out = fedspace(&[
        "data",
        "--validate-idx",
        ipath.to_str().unwrap(),
        lpath.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(json["images"]["count"], 2);
    assert_eq!(json["consistent"], true);

    // swapped files: configuration error with the bad magic reported
    let out = fedspace(&[
        "data",
        "--validate-idx",
        lpath.to_str().unwrap(),
        ipath.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("magic"));
}

#[test]
fn data_blobs_partition_manifest() {
    let dir = tmp_dir("blobs");
    let out = fedspace(&[
        "data",
        "--blobs",
        "10",
        "40",
        "0.3",
        "--seed",
        "7",
        "--partition",
        "ring",
        "--devices",
        "10",
        "--per-device",
        "20",
        "--out-dir",
        dir.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["source"], "blobs");
    assert_eq!(manifest["rule"], "ring");
    assert_eq!(manifest["per_device"], 20);
    assert_eq!(manifest["devices"].as_array().unwrap().len(), 10);
    assert_eq!(manifest["devices"][3]["classes"], serde_json::json!([3, 4]));
    let csv = fs::read_to_string(dir.join("dataset.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "x_0,x_1,label");
    assert_eq!(csv.lines().count(), 401);
}
