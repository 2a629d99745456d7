use std::path::Path;
use std::process::{Command, Output};

use rssloc::dataset::Dataset;

const SMALL: &str = r#"{"width": 40, "height": 40, "buildings": 3, "splits": {"train": 2, "val": 1, "test": 1},
    "source_counts": [1, 3], "placements": 1, "intervals_s": [2.0, 8.0]}"#;

fn rssloc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rssloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

fn small_dataset(dir: &Path, seed: &str) -> String {
    let cfg = dir.join("config.json");
    std::fs::write(&cfg, SMALL).unwrap();
    let out = s(&dir.join(format!("ds{seed}")));
    let o = rssloc(&["generate", "--config", &s(&cfg), "--out", &out, "--seed", seed]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn generate_writes_every_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let ds = Dataset::open(small_dataset(dir.path(), "1")).unwrap();
    assert_eq!(ds.index.entries.len(), 8);
    for e in &ds.index.entries {
        assert_eq!(e.samples.len(), 2);
        assert!(ds.path(&e.global_map).exists());
        assert!(ds.path(&e.local_map).exists());
    }
}

#[test]
fn seed_flag_changes_content_not_structure() {
    let dir = tempfile::tempdir().unwrap();
    let a = Dataset::open(small_dataset(dir.path(), "1")).unwrap();
    let b = Dataset::open(small_dataset(dir.path(), "2")).unwrap();
    let ids = |d: &Dataset| d.index.entries.iter().map(|e| e.id.clone()).collect::<Vec<_>>();
    assert_eq!(ids(&a), ids(&b));
    let map = |d: &Dataset| std::fs::read(d.path(&d.index.entries[0].global_map)).unwrap();
    assert_ne!(map(&a), map(&b));
}

#[test]
fn missing_config_is_a_usage_error_and_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let o = rssloc(&["generate", "--config", &s(&dir.path().join("nope.json")), "--out", &s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&o.stderr).is_empty());
    assert!(!out.exists());
}

#[test]
fn invalid_config_value_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("config.json");
    std::fs::write(&cfg, r#"{"width": 0}"#).unwrap();
    let o = rssloc(&["generate", "--config", &s(&cfg), "--out", &s(&dir.path().join("ds"))]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn unknown_estimator_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path(), "1");
    let o = rssloc(&["pipeline", "--dataset", &ds, "--out", &s(&dir.path().join("run")), "--estimator", "median"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = rssloc(&["pipeline", "--dataset", &s(&dir.path().join("none")), "--out", &s(&dir.path().join("run"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn help_lists_estimators_and_reconstructors() {
    let o = rssloc(&["pipeline", "--help"]);
    assert_eq!(o.status.code(), Some(0));
    let text = String::from_utf8_lossy(&o.stdout);
    for name in ["argmax", "center-of-mass", "four-neighborhood", "oracle", "idw", "kriging"] {
        assert!(text.contains(name), "{name} missing from help");
    }
}

#[test]
fn pipeline_then_evaluate() {
    let dir = tempfile::tempdir().unwrap();
    let ds = small_dataset(dir.path(), "1");
    let run = dir.path().join("run");
    let o = rssloc(&["pipeline", "--dataset", &ds, "--out", &s(&run)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&o.stdout).contains("oracle+center-of-mass"));
    let report = s(&run.join("report.json"));
    let table = rssloc(&["evaluate", &report]);
    assert_eq!(table.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&table.stdout).contains("OSPA"));
    let scored = rssloc(&["evaluate", "--dataset", &ds, "--predictions", &s(&run), "--json"]);
    assert_eq!(scored.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&scored.stdout).unwrap();
    assert_eq!(v["predictions"]["scenarios"], 8);
}

#[test]
fn missing_external_maps_are_partial_failures() {
    let dir = tempfile::tempdir().unwrap();
    let ds_path = small_dataset(dir.path(), "1");
    let ds = Dataset::open(&ds_path).unwrap();
    let maps = dir.path().join("maps");
    std::fs::create_dir(&maps).unwrap();
    for e in ds.index.entries.iter().take(5) {
        std::fs::copy(ds.path(&e.local_map), maps.join(format!("{}.pgm", e.id))).unwrap();
    }
    let run = dir.path().join("run");
    let o = rssloc(&["pipeline", "--dataset", &ds_path, "--out", &s(&run), "--local-map-dir", &s(&maps)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(run.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["method"], "external+center-of-mass");
    assert_eq!(report["overall"]["failed"], 3);
    assert_eq!(report["overall"]["scenarios"], 8);
}

#[test]
fn render_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ds_path = small_dataset(dir.path(), "1");
    let ds = Dataset::open(&ds_path).unwrap();
    let e = &ds.index.entries[0];
    let scenario: serde_json::Value = serde_json::from_slice(&std::fs::read(ds.path(&e.scenario)).unwrap()).unwrap();
    let layout = s(&ds.path(scenario["layout"].as_str().unwrap()));
    let mut images = Vec::new();
    for name in ["a.ppm", "b.ppm"] {
        let out = dir.path().join(name);
        let o = rssloc(&[
            "render", "--map", &s(&ds.path(&e.global_map)), "--layout", &layout, "--scenario",
            &s(&ds.path(&e.scenario)), "--scale", "2", "--out", &s(&out),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        images.push(std::fs::read(out).unwrap());
    }
    assert_eq!(images[0], images[1]);
    assert!(images[0].starts_with(b"P6\n80 80\n255\n"));
}
