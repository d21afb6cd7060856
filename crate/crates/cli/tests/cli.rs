use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const SMALL_SPEC: &str = r#"{
  "grid": { "width": 12, "height": 12, "cell_km": 0.5 },
  "hours": 48,
  "spinup_hours": 12,
  "n_sensors": 12,
  "seed": 5
}"#;

fn graphy(args: &[&str]) -> Output {
    graphy_env(args, &[])
}

fn graphy_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_graphy"));
    cmd.args(args).env_remove("GRAPHY_DATA_DIR").env("RUST_LOG", "info");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn ok(o: &Output) {
    assert_eq!(o.status.code(), Some(0), "stderr: {}", stderr(o));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// A small synthetic dataset plus a 2-seed ensemble trained for 2 epochs.
struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    models: PathBuf,
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let spec = dir.path().join("spec.json");
        std::fs::write(&spec, SMALL_SPEC).unwrap();
        let data = dir.path().join("data");
        ok(&graphy(&["synth", "--spec", s(&spec), "--out", s(&data)]));
        let models = dir.path().join("models");
        ok(&graphy(&[
            "train",
            "--dataset",
            s(&data),
            "--out",
            s(&models),
            "--seeds",
            "0,1",
            "--set",
            "max_epochs=2",
            "--set",
            "lr=1e-3",
        ]));
        Fixture { _dir: dir, data, models }
    })
}

fn read(p: &Path) -> String {
    std::fs::read_to_string(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

fn json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&read(p)).unwrap()
}

fn config_value(text: &str, key: &str) -> String {
    text.lines()
        .filter_map(|l| l.split_once('='))
        .find(|(k, _)| k.trim() == key)
        .map(|(_, v)| v.trim().to_string())
        .unwrap_or_else(|| panic!("missing key {key}"))
}

#[test]
fn synth_is_deterministic_and_writes_a_manifest() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("spec.json");
    std::fs::write(&spec, SMALL_SPEC).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&graphy(&["synth", "--spec", s(&spec), "--out", s(&a)]));
    ok(&graphy(&["synth", "--spec", s(&spec), "--out", s(&b)]));
    assert!(a.join("manifest.json").exists());
    assert_eq!(std::fs::read(a.join("pm25.csv")).unwrap(), std::fs::read(b.join("pm25.csv")).unwrap());
    assert_eq!(json(&a.join("manifest.json"))["sensors"], 12);
    let c = dir.path().join("c");
    ok(&graphy(&["synth", "--spec", s(&spec), "--seed", "6", "--out", s(&c)]));
    assert_ne!(std::fs::read(a.join("pm25.csv")).unwrap(), std::fs::read(c.join("pm25.csv")).unwrap());
}

#[test]
fn synth_rejects_an_invalid_grid() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("bad.json");
    std::fs::write(&spec, r#"{ "grid": { "width": 0, "height": 12, "cell_km": 0.5 } }"#).unwrap();
    let o = graphy(&["synth", "--spec", s(&spec), "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

fn write_raw(dir: &Path, with_wind: bool) {
    std::fs::create_dir_all(dir).unwrap();
    let mut sensors = String::from("sensor_id,latitude,longitude\n");
    let mut pm = String::from("sensor_id,timestamp,value\n");
    for k in 0..5 {
        sensors.push_str(&format!("S{k},36.7{k},-119.7{k}\n"));
        for h in 0..6 {
            pm.push_str(&format!("S{k},2024-02-01T{h:02}:10:00Z,{}\n", 5.0 + k as f64 + h as f64));
        }
    }
    pm.push_str("S0,not-a-time,3\n");
    std::fs::write(dir.join("sensors.csv"), sensors).unwrap();
    std::fs::write(dir.join("pm25_raw.csv"), pm).unwrap();
    if with_wind {
        let mut wind = String::from("timestamp,wind_speed_kmh,wind_dir_deg\n");
        for h in 0..6 {
            wind.push_str(&format!("2024-02-01T{h:02}:00:00Z,5,270\n"));
        }
        std::fs::write(dir.join("wind_raw.csv"), wind).unwrap();
    }
}

#[test]
fn ingest_writes_a_dataset_and_reports_skipped_rows() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw");
    write_raw(&raw, true);
    let out = dir.path().join("ds");
    let o = graphy(&["ingest", "--raw", s(&raw), "--out", s(&out)]);
    ok(&o);
    assert!(out.join("manifest.json").exists());
    assert!(stderr(&o).contains("1 skipped"), "{}", stderr(&o));
    assert_eq!(json(&out.join("ingest_report.json"))["skipped_rows"], 1);
}

#[test]
fn ingest_without_wind_names_the_missing_file() {
    let dir = TempDir::new().unwrap();
    let raw = dir.path().join("raw");
    write_raw(&raw, false);
    let o = graphy(&["ingest", "--raw", s(&raw), "--out", s(&dir.path().join("ds"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wind_raw.csv"), "{}", stderr(&o));
}

#[test]
fn train_writes_checkpoints_history_and_resolved_config() {
    let f = fixture();
    let cfg = read(&f.models.join("run_config.txt"));
    assert_eq!(config_value(&cfg, "seeds"), "0,1");
    assert_eq!(config_value(&cfg, "max_epochs"), "2");
    assert_eq!(config_value(&cfg, "preset"), "S");
    for seed in [0, 1] {
        let d = f.models.join(format!("seed_{seed}"));
        for file in ["best.ckpt", "best.json", "last.ckpt", "last.json", "history.json"] {
            assert!(d.join(file).exists(), "{}", d.join(file).display());
        }
        let side = json(&d.join("best.json"));
        assert_eq!(side["config"]["layers"], 3);
        assert_eq!(side["config"]["hidden"], 128);
        assert_eq!(json(&d.join("history.json"))["history"].as_array().unwrap().len(), 2);
    }
    let split = json(&f.models.join("split.json"));
    assert_eq!(split["test"].as_array().unwrap().len(), 3);
}

#[test]
fn training_is_reproducible_from_the_resolved_config() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let again = dir.path().join("again");
    let cfg = f.models.join("run_config.txt");
    ok(&graphy(&["train", "--config", s(&cfg), "--out", s(&again)]));
    for seed in [0, 1] {
        let a = std::fs::read(f.models.join(format!("seed_{seed}/best.ckpt"))).unwrap();
        let b = std::fs::read(again.join(format!("seed_{seed}/best.ckpt"))).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn interrupted_training_resumes() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("run");
    let base = ["train", "--dataset", s(&f.data), "--out", s(&out), "--seeds", "3", "--set", "lr=1e-3"];
    ok(&graphy(&[&base[..], &["--set", "max_epochs=1"]].concat()));
    let o = graphy(&[&base[..], &["--set", "max_epochs=2"]].concat());
    ok(&o);
    assert!(stderr(&o).contains("resuming seed 3 after epoch 1"), "{}", stderr(&o));
    let straight = dir.path().join("straight");
    ok(&graphy(&[
        "train",
        "--dataset",
        s(&f.data),
        "--out",
        s(&straight),
        "--seeds",
        "3",
        "--set",
        "lr=1e-3",
        "--set",
        "max_epochs=2",
    ]));
    assert_eq!(
        std::fs::read(out.join("seed_3/last.ckpt")).unwrap(),
        std::fs::read(straight.join("seed_3/last.ckpt")).unwrap()
    );
}

#[test]
fn preset_l_is_recorded_in_the_sidecar() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("l");
    ok(&graphy(&[
        "train",
        "--dataset",
        s(&f.data),
        "--out",
        s(&out),
        "--preset",
        "L",
        "--seeds",
        "0",
        "--set",
        "max_epochs=1",
    ]));
    let side = json(&out.join("seed_0/best.json"));
    assert_eq!(side["config"]["layers"], 5);
    assert_eq!(side["config"]["hidden"], 512);
}

#[test]
fn evaluate_reports_every_model_and_a_consistent_summary() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("eval");
    let o = graphy(&["evaluate", "--models", s(&f.models), "--out", s(&out)]);
    ok(&o);
    let cfg = read(&out.join("run_config.txt"));
    assert_eq!(config_value(&cfg, "seeds"), "0,1", "seeds are inherited from the models directory");
    assert_eq!(config_value(&cfg, "dataset"), s(&f.data));
    let summary = json(&out.join("summary.json"));
    let report = json(&out.join("report.json"));
    let text = read(&out.join("report.txt"));
    assert_eq!(stdout(&o), text);
    for model in ["MeanFill", "IDW", "Okriging", "GP", "GraPhy"] {
        let row = report["rows"]
            .as_array()
            .unwrap()
            .iter()
            .find(|r| r["experiment"] == "main" && r["model"] == model)
            .unwrap_or_else(|| panic!("no main row for {model}"));
        let mae = row["metrics"]["mae"].as_f64().unwrap();
        assert_eq!(summary[format!("main.{model}.mae")].as_f64().unwrap(), mae);
        assert!(text.contains(model));
        let pcts: Vec<_> =
            summary.as_object().unwrap().keys().filter(|k| k.starts_with(&format!("density.{model}."))).collect();
        assert_eq!(pcts.len(), 5, "{pcts:?}");
    }
    let csv = read(&out.join("predictions.csv"));
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "sensor_id,timestamp,truth,sh,MeanFill,IDW,Okriging,GP,GraPhy");
    assert_eq!(lines.count(), 3 * 48);
}

#[test]
fn interpolate_single_hour_range_and_grid() {
    let f = fixture();
    let m = s(&f.models);
    let one =
        graphy(&["interpolate", "--models", m, "--lat", "36.75", "--lon", "-119.78", "--hour", "2024-01-01T05:00:00Z"]);
    ok(&one);
    let lines: Vec<String> = stdout(&one).lines().map(String::from).collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], "latitude,longitude,timestamp,pm25");
    let fields: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&fields[..3], &["36.75", "-119.78", "2024-01-01T05:00:00Z"]);
    assert!(fields[3].parse::<f64>().unwrap().is_finite());

    let range = graphy(&[
        "interpolate",
        "--models",
        m,
        "--lat",
        "36.75",
        "--lon",
        "-119.78",
        "--hour",
        "2024-01-01T05:00:00Z",
        "--to",
        "2024-01-01T07:00:00Z",
    ]);
    ok(&range);
    let out = stdout(&range);
    assert_eq!(out.lines().count(), 4);
    assert_eq!(out.lines().nth(1).unwrap(), lines[1], "batching does not change the prediction");

    let grid = graphy(&[
        "interpolate",
        "--models",
        m,
        "--grid",
        "36.74,36.76,-119.80,-119.77,2,3",
        "--hour",
        "2024-01-01T05:00:00Z",
    ]);
    ok(&grid);
    let rows: Vec<String> = stdout(&grid).lines().skip(1).map(String::from).collect();
    assert_eq!(rows.len(), 6);
    assert!(rows.iter().all(|r| r.split(',').count() == 4));
}

#[test]
fn interpolate_outside_the_dataset_is_a_user_error() {
    let f = fixture();
    let o = graphy(&[
        "interpolate",
        "--models",
        s(&f.models),
        "--lat",
        "36.75",
        "--lon",
        "-119.78",
        "--hour",
        "2030-01-01T00:00:00Z",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("outside the dataset"), "{}", stderr(&o));
}

#[test]
fn config_precedence_and_validation() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "# comment\nidw_power = 2\nhour_stride = 4\ndensity = false\n").unwrap();
    let out = dir.path().join("eval");
    let data = s(&f.data);
    ok(&graphy_env(
        &["evaluate", "--config", s(&cfg), "--models", s(&f.models), "--out", s(&out), "--idw-power", "3"],
        &[("GRAPHY_DATA_DIR", data)],
    ));
    let resolved = read(&out.join("run_config.txt"));
    assert_eq!(config_value(&resolved, "idw_power"), "3");
    assert_eq!(config_value(&resolved, "hour_stride"), "4");
    assert_eq!(config_value(&resolved, "density"), "false");
    assert_eq!(json(&out.join("baselines.json"))["idw_power"], 3.0);

    std::fs::write(&cfg, "idw_powr = 2\n").unwrap();
    let o = graphy(&["evaluate", "--config", s(&cfg), "--models", s(&f.models), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("idw_powr"));

    let o = graphy(&["train", "--dataset", data, "--out", s(&out), "--seeds", "1,1"]);
    assert_eq!(o.status.code(), Some(2));
    let o = graphy(&["train", "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("GRAPHY_DATA_DIR"));
    let o = graphy(&["train", "--dataset", s(&dir.path().join("missing")), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn data_dir_environment_variable_supplies_the_dataset() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("t");
    ok(&graphy_env(
        &["train", "--out", s(&out), "--seeds", "0", "--set", "max_epochs=1", "--workers", "1"],
        &[("GRAPHY_DATA_DIR", s(&f.data))],
    ));
    assert_eq!(config_value(&read(&out.join("run_config.txt")), "dataset"), s(&f.data));
    assert_eq!(config_value(&read(&out.join("run_config.txt")), "workers"), "1");
}
