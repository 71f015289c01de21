use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn cnnret(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cnnret"))
        .args(args)
        .env_remove("CNNRET_WORKERS")
        .output()
        .expect("run cnnret")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// 3 classes x 4 images, 8 channels, one 3x3 grid unless `extra` sets grids.
fn synth(dir: &Path, extra: &[&str]) -> PathBuf {
    let data = dir.join("data");
    let mut args = vec!["synth", "--out", s(&data), "--classes", "3", "--per-class", "4", "--channels", "8", "--seed", "4"];
    if !extra.contains(&"--grids") {
        args.extend(["--grids", "full:3x3"]);
    }
    args.extend_from_slice(extra);
    let o = cnnret(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    data.join("manifest.json")
}

#[test]
fn step_by_step_workflow() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let out = dir.path().join("out");
    let common = ["--manifest", s(&manifest), "--layer", "synthetic", "--method", "bow", "--k", "4", "--pca-dim", "3", "--seed", "1", "--out", s(&out)];
    let with = |cmd: &str, extra: &[&str]| {
        let mut a = vec![cmd];
        a.extend_from_slice(extra);
        a.extend_from_slice(&common);
        cnnret(&a)
    };

    let o = with("fit", &["--kind", "codebook"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("final objective"));
    let model = out.join("models/codebook-k4.rma");
    let first = fs::read(&model).unwrap();
    assert_eq!(code(&with("fit", &["--kind", "codebook"])), 0);
    assert_eq!(fs::read(&model).unwrap(), first);

    assert_eq!(code(&with("fit", &["--kind", "pca"])), 0);
    let o = with("aggregate", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("12 descriptors of dimension 3"));
    assert_eq!(fs::read_dir(out.join("descriptors")).unwrap().count(), 12);

    for cmd in ["index", "query"] {
        let o = with(cmd, &[]);
        assert_eq!(code(&o), 0, "{cmd}: {}", stderr(&o));
    }
    let ranked = fs::read_to_string(out.join("ranked.jsonl")).unwrap();
    assert_eq!(ranked.lines().count(), 12);
    let first_line: serde_json::Value = serde_json::from_str(ranked.lines().next().unwrap()).unwrap();
    assert_eq!(first_line["results"].as_array().unwrap().len(), 11);

    let o = with("evaluate", &[]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("ANMRR"));
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["per_query"].as_array().unwrap().len(), 12);
    assert!(out.join("report.txt").exists());
}

#[test]
fn config_file_with_overrides() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let cfg = dir.path().join("run.json");
    fs::write(
        &cfg,
        r#"{"manifest": "data/manifest.json", "layer_id": "synthetic", "method": "mean", "pca_dim": "none", "output_dir": "out"}"#,
    )
    .unwrap();
    let o = cnnret(&["aggregate", "--config", s(&cfg), "--method", "hybrid"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    // hybrid doubles the 8 channels; relative paths resolve against the config's directory
    assert!(stdout(&o).contains("dimension 16"));
    assert!(dir.path().join("out/descriptors").is_dir());
}

#[test]
fn missing_model_is_a_user_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let out = dir.path().join("out");
    let o = cnnret(&["aggregate", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "ifk", "--pca-dim", "none", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("IFK requires gmm model"), "{}", stderr(&o));
}

#[test]
fn training_without_seed_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let o = cnnret(&["fit", "--kind", "gmm", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "ifk", "--k", "2", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("seed"));
}

#[test]
fn pca_beyond_rank_fails() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let o = cnnret(&["fit", "--kind", "pca", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "max", "--pca-dim", "9", "--out", s(&dir.path().join("o"))]);
    assert_ne!(code(&o), 0);
    assert!(stderr(&o).contains("PCA") || stderr(&o).contains("rank"), "{}", stderr(&o));
}

#[test]
fn corrupt_tensor_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    fs::write(dir.path().join("data/tensors/c01_002_full.rft"), b"NOPE").unwrap();
    let o = cnnret(&["aggregate", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "max", "--pca-dim", "none", "--out", s(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad magic"));
}

#[test]
fn model_from_another_dataset_needs_force() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let other = tempfile::tempdir().unwrap();
    let other_manifest = synth(other.path(), &["--dataset-id", "elsewhere"]);
    let out = dir.path().join("out");
    let o = cnnret(&["fit", "--kind", "codebook", "--manifest", s(&other_manifest), "--layer", "synthetic", "--method", "bow", "--k", "3", "--seed", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));

    let agg = ["aggregate", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "bow", "--k", "3", "--pca-dim", "none", "--out", s(&out)];
    let o = cnnret(&agg);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--force"));
    let mut forced = agg.to_vec();
    forced.push("--force");
    assert_eq!(code(&cnnret(&forced)), 0);
}

#[test]
fn pipeline_sweep_and_failing_cell() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let out = dir.path().join("sweep");
    let base = ["pipeline", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "mean", "--out", s(&out)];

    let mut ok = base.to_vec();
    ok.extend(["--sweep-dims", "2,4,6", "--sweep-metrics", "euclidean,cosine"]);
    let o = cnnret(&ok);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 7);
    assert!(csv.starts_with("dataset,network,layer,method,dim,metric,anmrr,map"));
    assert_eq!(fs::read_dir(out.join("cells")).unwrap().count(), 6);

    let mut bad = base.to_vec();
    bad.extend(["--pca-dim", "4", "--sweep-metrics", "chisquare,euclidean"]);
    let o = cnnret(&bad);
    assert_eq!(code(&o), 1);
    assert!(stdout(&o).contains("FAILED"));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn pipeline_without_sweep_is_one_cell() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let out = dir.path().join("single");
    let o = cnnret(&["pipeline", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "vlad", "--k", "2", "--pca-dim", "4", "--seed", "3", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(out.join("results.csv")).unwrap().lines().count(), 2);
}

#[test]
fn usage_errors_and_help() {
    assert_eq!(code(&cnnret(&["aggregate", "--method", "nope"])), 1);
    assert_eq!(code(&cnnret(&["frobnicate"])), 1);
    assert_eq!(code(&cnnret(&["--help"])), 0);
    let o = cnnret(&["index", "--layer", "l", "--method", "max", "--out", "o"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--manifest"));
}

#[test]
fn workers_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = synth(dir.path(), &[]);
    let out = dir.path().join("o");
    let args = ["aggregate", "--manifest", s(&manifest), "--layer", "synthetic", "--method", "max", "--pca-dim", "none", "--out", s(&out)];
    let run = |workers: &str| {
        Command::new(env!("CARGO_BIN_EXE_cnnret"))
            .args(args)
            .env("CNNRET_WORKERS", workers)
            .output()
            .unwrap()
    };
    assert_eq!(code(&run("0")), 1);
    assert_eq!(code(&run("2")), 0);
}

#[test]
fn multipatch_mode() {
    let dir = tempfile::tempdir().unwrap();
    let grids: Vec<String> = (0..20).map(|i| format!("patch{i:02}:1x1")).collect();
    let grids = grids.join(",");
    let manifest = synth(dir.path(), &["--layer", "fc7", "--grids", &grids]);
    let out = dir.path().join("o");
    let o = cnnret(&["aggregate", "--manifest", s(&manifest), "--layer", "fc7", "--patch-mode", "--method", "hybrid", "--pca-dim", "none", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(stdout(&o).contains("dimension 16"));
    let o = cnnret(&["aggregate", "--manifest", s(&manifest), "--layer", "fc7", "--patch-mode", "--method", "spoc", "--pca-dim", "none", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("spatial weighting based pooling not applicable to patch sets"));
}
