//! End-to-end tests of the `lfrecon` binary: every subcommand, the exit-code
//! contract, and artifact reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn lfrecon(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lfrecon"))
        .args(args)
        .env_remove("LFRECON_THREADS")
        .output()
        .expect("binary should spawn")
}

fn assert_code(out: &Output, want: i32) {
    assert_eq!(
        out.status.code(),
        Some(want),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// Renders a tiny dataset and returns (dataset dir, parsed manifest JSON).
fn tiny_dataset(dir: &Path, scenes: usize, seed: u64) -> (PathBuf, serde_json::Value) {
    let data = dir.join("data");
    let out = lfrecon(&[
        "synth",
        "--scenes",
        &scenes.to_string(),
        "--poses",
        "frontal",
        "--res",
        "32,32",
        "--angular",
        "3,3",
        "--seed",
        &seed.to_string(),
        "--out",
        data.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(data.join("manifest.json")).unwrap()).unwrap();
    (data, manifest)
}

fn entry_path(data: &Path, manifest: &serde_json::Value, i: usize, key: &str) -> PathBuf {
    data.join(manifest["entries"][i][key].as_str().unwrap())
}

#[test]
fn help_and_version_exit_zero() {
    for args in [
        &["--help"][..],
        &["--version"][..],
        &["synth", "--help"][..],
        &["pipeline", "--help"][..],
    ] {
        let out = lfrecon(args);
        assert_code(&out, 0);
    }
    let help = lfrecon(&["--help"]);
    let text = String::from_utf8_lossy(&help.stdout).into_owned();
    for sub in ["synth", "epi", "train", "infer", "fuse", "eval", "pipeline"] {
        assert!(text.contains(sub), "help lists {sub}:\n{text}");
    }
}

#[test]
fn bad_invocations_exit_one() {
    // Unknown flag / missing required flag are usage errors.
    assert_code(&lfrecon(&["--bogus"]), 1);
    assert_code(&lfrecon(&["synth"]), 1);
    assert_code(&lfrecon(&["frobnicate"]), 1);

    // Unknown stage name.
    let dir = tempfile::tempdir().unwrap();
    let out = lfrecon(&[
        "pipeline",
        "--out",
        dir.path().to_str().unwrap(),
        "--stages",
        "nope",
    ]);
    assert_code(&out, 1);
    assert!(stderr(&out).contains("unknown stage"), "{}", stderr(&out));

    // Non-contiguous stage selection.
    let out = lfrecon(&[
        "pipeline",
        "--out",
        dir.path().to_str().unwrap(),
        "--stages",
        "synth,fuse",
    ]);
    assert_code(&out, 1);
    assert!(stderr(&out).contains("contiguous"), "{}", stderr(&out));

    // Invalid thread-count variable.
    let out = Command::new(env!("CARGO_BIN_EXE_lfrecon"))
        .args(["synth", "--out", dir.path().join("x").to_str().unwrap()])
        .env("LFRECON_THREADS", "many")
        .output()
        .unwrap();
    assert_code(&out, 1);
    assert!(
        stderr(&out).contains("LFRECON_THREADS"),
        "{}",
        stderr(&out)
    );
}

#[test]
fn unknown_config_field_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"sarch": {"coarse_steps": 4}}"#).unwrap();
    let out = lfrecon(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        dir.path().join("run").to_str().unwrap(),
    ]);
    assert_code(&out, 1);
    assert!(stderr(&out).contains("sarch"), "{}", stderr(&out));
}

#[test]
fn synth_writes_a_complete_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = tiny_dataset(dir.path(), 2, 7);
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 2);
    assert_eq!(manifest["partial"], serde_json::Value::Bool(false));
    for i in 0..2 {
        assert!(entry_path(&data, &manifest, i, "container").is_dir());
        assert!(entry_path(&data, &manifest, i, "ground_truth").is_file());
        assert!(entry_path(&data, &manifest, i, "mask").is_file());
    }
}

#[test]
fn epi_then_fuse_then_eval_produce_readable_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = tiny_dataset(dir.path(), 1, 11);
    let container = entry_path(&data, &manifest, 0, "container");
    let prefix = dir.path().join("depth").join("pair");

    let out = lfrecon(&[
        "epi",
        "--in",
        container.to_str().unwrap(),
        "--oracle",
        "--steps",
        "48",
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let h = dir.path().join("depth/pair_h.pfm");
    let v = dir.path().join("depth/pair_v.pfm");
    let meta_path = dir.path().join("depth/pair_meta.json");
    assert!(h.is_file() && v.is_file() && meta_path.is_file());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&meta_path).unwrap()).unwrap();
    assert_eq!(meta["estimator"], "oracle");
    assert_eq!(meta["spatial_res"][0], 32);

    // Standalone pairs carry no mask/landmarks; fuse and eval still work.
    let ply = dir.path().join("surf.ply");
    let out = lfrecon(&[
        "fuse",
        "--h",
        h.to_str().unwrap(),
        "--v",
        v.to_str().unwrap(),
        "--meta",
        meta_path.to_str().unwrap(),
        "--grid",
        "24,24",
        "--out",
        ply.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(ply.is_file());
    assert!(dir.path().join("surf_grid.pfm").is_file());
    let axes: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("surf_axes.json")).unwrap())
            .unwrap();
    assert_eq!(axes["x_axis"].as_array().unwrap().len(), 24);
    assert_eq!(axes["y_axis"].as_array().unwrap().len(), 24);
    let ply_head = fs::read_to_string(&ply).unwrap();
    assert!(ply_head.starts_with("ply\n"), "{}", &ply_head[..40]);

    let gt = entry_path(&data, &manifest, 0, "ground_truth");
    let report = dir.path().join("report.json");
    let heatmap = dir.path().join("heat.png");
    let out = lfrecon(&[
        "eval",
        "--pred",
        ply.to_str().unwrap(),
        "--gt",
        gt.to_str().unwrap(),
        "--meta",
        meta_path.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
        "--heatmap",
        heatmap.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let rep: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert!(rep["n"].as_u64().unwrap() > 0);
    assert!(rep["rmse"].as_f64().unwrap().is_finite());
    // No landmarks in a standalone meta, so no normalized mesh error.
    assert!(rep["nme"].is_null());
    assert!(heatmap.is_file());
}

fn small_net_config(path: &Path) {
    fs::write(
        path,
        r#"{"train": {"fc_hidden": 64, "batch": 8}}"#,
    )
    .unwrap();
}

#[test]
fn train_then_infer_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (data, manifest) = tiny_dataset(dir.path(), 2, 13);
    let manifest_path = data.join("manifest.json");
    let cfg = dir.path().join("cfg.json");
    small_net_config(&cfg);

    let mut models = Vec::new();
    for orient in ["h", "v"] {
        let model = dir.path().join(format!("model_{orient}.lfw"));
        let out = lfrecon(&[
            "train",
            "--config",
            cfg.to_str().unwrap(),
            "--manifest",
            manifest_path.to_str().unwrap(),
            "--orientation",
            orient,
            "--width",
            "32",
            "--iters",
            "12",
            "--seed",
            "5",
            "--out",
            model.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
        assert!(model.is_file());
        models.push(model);
    }

    // Width mismatch is rejected up front.
    let out = lfrecon(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--manifest",
        manifest_path.to_str().unwrap(),
        "--orientation",
        "h",
        "--width",
        "64",
        "--iters",
        "1",
        "--out",
        dir.path().join("bad.lfw").to_str().unwrap(),
    ]);
    assert_code(&out, 1);

    let container = entry_path(&data, &manifest, 0, "container");
    let prefix = dir.path().join("pred").join("item");
    let out = lfrecon(&[
        "infer",
        "--lf",
        container.to_str().unwrap(),
        "--hmodel",
        models[0].to_str().unwrap(),
        "--vmodel",
        models[1].to_str().unwrap(),
        "--out",
        prefix.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    assert!(dir.path().join("pred/item_h.pfm").is_file());
    assert!(dir.path().join("pred/item_v.pfm").is_file());
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("pred/item_meta.json")).unwrap())
            .unwrap();
    assert_eq!(meta["estimator"], "network");

    // Feeding a model trained for the wrong orientation is rejected.
    let out = lfrecon(&[
        "infer",
        "--lf",
        container.to_str().unwrap(),
        "--hmodel",
        models[1].to_str().unwrap(),
        "--vmodel",
        models[0].to_str().unwrap(),
        "--out",
        dir.path().join("pred2").to_str().unwrap(),
    ]);
    assert_code(&out, 1);
    assert!(stderr(&out).contains("trained for"), "{}", stderr(&out));
}

#[test]
fn diverged_training_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let (data, _) = tiny_dataset(dir.path(), 1, 17);
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"train": {"fc_hidden": 32, "batch": 8, "base_lr": 1e15}}"#,
    )
    .unwrap();
    let out = lfrecon(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--manifest",
        data.join("manifest.json").to_str().unwrap(),
        "--orientation",
        "h",
        "--iters",
        "8",
        "--out",
        dir.path().join("m.lfw").to_str().unwrap(),
    ]);
    assert_code(&out, 2);
    assert!(stderr(&out).contains("diverged"), "{}", stderr(&out));
}

#[test]
fn pipeline_oracle_chain_is_complete_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"seed": 3,
            "synth": {"scenes": 2, "poses": "frontal", "res": [32, 32], "angular": [3, 3]},
            "search": {"coarse_steps": 48}}"#,
    )
    .unwrap();

    let run = |out_dir: &Path| {
        let out = lfrecon(&[
            "pipeline",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
        ]);
        assert_code(&out, 0);
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a);
    run(&b);

    // Every stage of the oracle chain is recorded with its artifacts.
    let run_manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("run.json")).unwrap()).unwrap();
    let stages: Vec<&str> = run_manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["synth", "epi", "fuse", "eval"]);
    for stage in run_manifest["stages"].as_array().unwrap() {
        for artifact in stage["artifacts"].as_array().unwrap() {
            assert!(
                a.join(artifact.as_str().unwrap()).is_file(),
                "artifact {artifact} exists"
            );
        }
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join("reports/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["n_items"], 2);
    assert!(summary["mean_rmse"].as_f64().unwrap().is_finite());
    assert!(summary["mean_nme"].as_f64().unwrap().is_finite());

    // Same configuration, same seed: byte-identical artifacts.
    for rel in [
        "run.json",
        "data/manifest.json",
        "depth/item_0000_h.pfm",
        "depth/item_0001_v.pfm",
        "surfaces/item_0000.ply",
        "reports/summary.json",
    ] {
        assert_eq!(
            fs::read(a.join(rel)).unwrap(),
            fs::read(b.join(rel)).unwrap(),
            "{rel} is reproducible"
        );
    }
}

#[test]
fn pipeline_stage_subsets_resume_and_missing_artifacts_fail_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"seed": 9,
            "synth": {"scenes": 1, "poses": "frontal", "res": [32, 32], "angular": [3, 3]},
            "search": {"coarse_steps": 48}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let run_stages = |stages: &str| {
        lfrecon(&[
            "pipeline",
            "--config",
            cfg.to_str().unwrap(),
            "--out",
            out_dir.to_str().unwrap(),
            "--stages",
            stages,
        ])
    };

    // Later stages without their inputs: a missing-artifact input error.
    let out = run_stages("fuse,eval");
    assert_code(&out, 1);
    assert!(
        stderr(&out).contains("missing artifact"),
        "{}",
        stderr(&out)
    );

    // Running the prefix first, then resuming, completes the chain.
    assert_code(&run_stages("synth,epi"), 0);
    assert_code(&run_stages("fuse,eval"), 0);
    assert!(out_dir.join("reports/summary.json").is_file());
}

#[test]
fn pipeline_network_chain_runs_via_estimator_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    fs::write(
        &cfg,
        r#"{"seed": 4,
            "synth": {"scenes": 2, "poses": "frontal", "res": [32, 32], "angular": [3, 3]},
            "train": {"fc_hidden": 48, "batch": 8, "max_iters": 10, "hold_out": 1}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("run");
    let out = lfrecon(&[
        "pipeline",
        "--config",
        cfg.to_str().unwrap(),
        "--estimator",
        "network",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert_code(&out, 0);
    let run_manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("run.json")).unwrap()).unwrap();
    let stages: Vec<&str> = run_manifest["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["synth", "train", "infer", "fuse", "eval"]);
    assert!(out_dir.join("models/model_h.lfw").is_file());
    assert!(out_dir.join("models/model_v.lfw").is_file());
    // The held-out item is excluded from the training manifest but still
    // inferred and evaluated.
    let train_manifest: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out_dir.join("data/train_manifest.json")).unwrap(),
    )
    .unwrap();
    assert_eq!(train_manifest["entries"].as_array().unwrap().len(), 1);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("reports/summary.json")).unwrap())
            .unwrap();
    assert_eq!(summary["n_items"], 2);
}
