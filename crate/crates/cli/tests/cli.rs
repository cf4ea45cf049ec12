use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ivus_core::data::{load_frame, read_label_png, write_label_png, FrameOptions, LabelMap, Tissue};
use ivus_core::forest::ForestModel;
use ivus_core::pipeline::segment_frame;
use ivus_core::PipelineConfig;

const SMALL: &str = "polar.n_scanlines = 48\npolar.n_depth = 48\nforest.n_trees = 6\nforest.min_leaf = 5\nforest.samples_per_class = 150\nrun.rng_seed = 3\n";

fn ivus(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivus"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Small phantom corpus plus a matching config file.
fn fixture(count: usize) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("cfg.txt"), SMALL).unwrap();
    let n = count.to_string();
    ok(&ivus(dir.path(), &["phantom-gen", "--count", &n, "--seed", "5", "--size", "80", "--polar", "48", "--out", "ph"]));
    dir
}

fn files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn phantom_gen_writes_pairs_and_is_reproducible() {
    let dir = fixture(3);
    ok(&ivus(dir.path(), &["phantom-gen", "--count", "3", "--seed", "5", "--size", "80", "--polar", "48", "--out", "again"]));
    let first = files(&dir.path().join("ph"));
    let second = files(&dir.path().join("again"));
    assert_eq!(first.len(), 3 * 3 + 1);
    for (a, b) in first.iter().zip(&second) {
        assert_eq!(a.file_name(), b.file_name());
        assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{}", a.display());
    }
    let labels = read_label_png(dir.path().join("ph/phantom_000_labels.png")).unwrap();
    assert_eq!(labels.dim(), (80, 80));
}

#[test]
fn zero_count_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = ivus(dir.path(), &["phantom-gen", "--count", "0", "--out", "ph"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.txt"), "forest.trees = 3\n").unwrap();
    let out = ivus(dir.path(), &["--config", "bad.txt", "phantom-gen", "--count", "1", "--out", "ph"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_reports_holdout_and_is_deterministic() {
    let dir = fixture(3);
    let stdout = ok(&ivus(dir.path(), &["--config", "cfg.txt", "train", "--data", "ph", "--model", "a.json"]));
    assert!(stdout.contains("holdout accuracy"), "{stdout}");
    ok(&ivus(dir.path(), &["--config", "cfg.txt", "--jobs", "1", "train", "--data", "ph", "--model", "b.json"]));
    let a = std::fs::read(dir.path().join("a.json")).unwrap();
    let b = std::fs::read(dir.path().join("b.json")).unwrap();
    assert_eq!(a, b);
    let log: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("a.train.json")).unwrap()).unwrap();
    let acc = log["holdout_accuracy"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));
    assert_eq!(log["holdout_counts"]["media"].as_u64().unwrap(), 45);
    assert!(ForestModel::load(dir.path().join("a.json")).is_ok());
}

#[test]
fn corpus_missing_a_class_names_it() {
    let dir = fixture(1);
    let ph = dir.path().join("ph");
    let labels = read_label_png(ph.join("phantom_000_labels.png")).unwrap();
    let no_media = LabelMap::new(labels.labels().mapv(|t| if t == Tissue::Media { Tissue::Externa } else { t }));
    write_label_png(ph.join("phantom_000_labels.png"), &no_media).unwrap();
    let out = ivus(dir.path(), &["--config", "cfg.txt", "train", "--data", "ph", "--model", "m.json"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("media"));
}

#[test]
fn segment_writes_all_outputs() {
    let dir = fixture(2);
    ok(&ivus(dir.path(), &["--config", "cfg.txt", "train", "--data", "ph", "--model", "m.json"]));
    ok(&ivus(
        dir.path(),
        &["--config", "cfg.txt", "segment", "--model", "m.json", "--out", "seg", "ph/phantom_001_frame.png"],
    ));
    let seg = dir.path().join("seg");
    for suffix in ["pred.png", "overlay.png", "segment.json", "posterior_lumen.f32", "posterior_media.f32", "posterior_externa.f32"] {
        assert!(seg.join(format!("phantom_001_{suffix}")).exists(), "{suffix}");
    }
    assert!(seg.join("config.txt").exists());
    let raw = image::open(seg.join("phantom_001_pred.png")).unwrap().to_luma8();
    assert!(raw.pixels().all(|p| (1..=3).contains(&p.0[0])));
    let sidecar: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(seg.join("phantom_001_segment.json")).unwrap()).unwrap();
    assert!(sidecar["seeding_fallback"].is_boolean());
    let echo = PipelineConfig::from_text(&std::fs::read_to_string(seg.join("config.txt")).unwrap()).unwrap();
    assert_eq!(echo, PipelineConfig::from_text(SMALL).unwrap());
}

#[test]
fn no_topology_emits_raw_argmax() {
    let dir = fixture(2);
    ok(&ivus(dir.path(), &["--config", "cfg.txt", "train", "--data", "ph", "--model", "m.json"]));
    ok(&ivus(
        dir.path(),
        &["--config", "cfg.txt", "segment", "--no-topology", "--model", "m.json", "--out", "seg", "ph/phantom_000_frame.png"],
    ));
    let mut config = PipelineConfig::from_text(SMALL).unwrap();
    config.topology = false;
    let model = ForestModel::load(dir.path().join("m.json")).unwrap();
    let frame = load_frame(dir.path().join("ph/phantom_000_frame.png"), &FrameOptions::default()).unwrap();
    let expected = segment_frame(&model, &frame, &config).unwrap();
    let written = read_label_png(dir.path().join("seg/phantom_000_pred.png")).unwrap();
    assert_eq!(written, expected.labels);
    let echo = std::fs::read_to_string(dir.path().join("seg/config.txt")).unwrap();
    assert!(echo.contains("walker.topology = false"));
}

#[test]
fn missing_model_is_a_usage_error() {
    let dir = fixture(1);
    let out = ivus(
        dir.path(),
        &["segment", "--model", "absent.json", "--out", "seg", "ph/phantom_000_frame.png"],
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn evaluate_ground_truth_scores_perfectly() {
    let dir = fixture(2);
    let pred = dir.path().join("pred");
    std::fs::create_dir(&pred).unwrap();
    for i in 0..2 {
        std::fs::copy(
            dir.path().join(format!("ph/phantom_00{i}_labels.png")),
            pred.join(format!("phantom_00{i}_pred.png")),
        )
        .unwrap();
    }
    ok(&ivus(dir.path(), &["evaluate", "--pred", "pred", "--truth", "ph", "--out", "ev"]));
    let csv = std::fs::read_to_string(dir.path().join("ev/report.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for row in rows {
        let cells: Vec<&str> = row.split(',').collect();
        assert_eq!(cells[4], "1.000000");
        assert_eq!(cells[7], "1.000000");
    }
}

#[test]
fn crossval_writes_report_and_rejects_too_many_folds() {
    let dir = fixture(2);
    let stdout = ok(&ivus(dir.path(), &["--config", "cfg.txt", "crossval", "--data", "ph", "--folds", "2", "--out", "cv"]));
    assert!(stdout.contains("walker"));
    let csv = std::fs::read_to_string(dir.path().join("cv/report.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    assert!(dir.path().join("cv/config.txt").exists());

    let out = ivus(dir.path(), &["--config", "cfg.txt", "crossval", "--data", "ph", "--folds", "3", "--out", "cv"]);
    assert_eq!(out.status.code(), Some(2));
}
