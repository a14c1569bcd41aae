use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_indoorloc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// A copy of the oval config with `edit` applied to its JSON.
fn edited_config(dir: &Path, edit: impl FnOnce(&mut serde_json::Value)) -> PathBuf {
    let text = fs::read_to_string(configs().join("oval.json")).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&text).unwrap();
    v["map"] = serde_json::Value::String(s(&configs().join("maps/oval.json")).to_owned());
    edit(&mut v);
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    path
}

#[test]
fn simulate_writes_three_files_for_each_bundled_config() {
    for name in ["oval", "crossroads"] {
        let out = tempfile::tempdir().unwrap();
        let cfg = configs().join(format!("{name}.json"));
        let o = run(&["simulate", "--config", s(&cfg), "--out", s(out.path())]);
        assert!(o.status.success(), "{}", stderr(&o));
        for f in ["sensor_log.csv", "truth.csv", "resolved_config.json"] {
            assert!(out.path().join(f).is_file(), "{name}: {f} missing");
        }
        let log = fs::read_to_string(out.path().join("sensor_log.csv")).unwrap();
        assert!(log.starts_with("# generated by indoorloc"));
        let echo = fs::read_to_string(out.path().join("resolved_config.json")).unwrap();
        assert!(echo.contains("\"markers\""), "map should be inlined");
    }
}

#[test]
fn resolved_config_reproduces_the_log() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("oval.json");
    let flags = ["--no-header-timestamp"];
    assert!(run(&[&["simulate", "--config", s(&cfg), "--out", s(a.path())][..], &flags[..]].concat())
        .status
        .success());
    let echo = a.path().join("resolved_config.json");
    assert!(run(&[&["simulate", "--config", s(&echo), "--out", s(b.path())][..], &flags[..]].concat())
        .status
        .success());
    for f in ["sensor_log.csv", "truth.csv", "resolved_config.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn seed_flag_overrides_the_config() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = configs().join("oval.json");
    run(&["simulate", "--config", s(&cfg), "--out", s(a.path()), "--no-header-timestamp"]);
    run(&["simulate", "--config", s(&cfg), "--out", s(b.path()), "--no-header-timestamp", "--seed", "9"]);
    let read = |d: &Path| fs::read(d.join("sensor_log.csv")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
    let echo = fs::read_to_string(b.path().join("resolved_config.json")).unwrap();
    assert!(echo.contains("\"seed\": 9"));
}

#[test]
fn missing_map_file_exits_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), |v| v["map"] = "no/such/map.json".into());
    let o = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("map.json"), "{}", stderr(&o));
}

#[test]
fn invalid_fields_are_named() {
    let dir = tempfile::tempdir().unwrap();
    let cases: Vec<(Box<dyn FnOnce(&mut serde_json::Value)>, &str)> = vec![
        (Box::new(|v| v["filters"][1]["alpha_q"] = 0.0.into()), "filters[1].alpha_q"),
        (Box::new(|v| v["noise"]["outlier_prob"] = 1.5.into()), "noise.outlier_prob"),
        (Box::new(|v| v["filters"] = serde_json::json!([])), "filters"),
        (Box::new(|v| v["colour"] = "red".into()), "colour"),
        (Box::new(|v| { v.as_object_mut().unwrap().remove("seed"); }), "seed"),
        (Box::new(|v| v["schema_version"] = 2.into()), "schema_version"),
    ];
    for (edit, field) in cases {
        let cfg = edited_config(dir.path(), edit);
        let o = run(&["simulate", "--config", s(&cfg), "--out", s(dir.path())]);
        assert_eq!(o.status.code(), Some(2), "{field}");
        assert!(stderr(&o).contains(field), "{field}: {}", stderr(&o));
    }
}

#[test]
fn unparseable_log_row_is_reported_with_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    fs::write(&log, "t,kind,data\n0,imu,1.0\n0.01,enc,0.5,0.5\n0.02,imu,abc\n").unwrap();
    let cfg = configs().join("oval.json");
    let o = run(&["fuse", "--config", s(&cfg), "--log", s(&log), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("row 4"), "{}", stderr(&o));
}

#[test]
fn unknown_marker_in_log_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.csv");
    fs::write(&log, "t,kind,data\n0,marker,99,1,0,0,0,1,0,0,0,1,0,0,1\n").unwrap();
    let cfg = configs().join("oval.json");
    let o = run(&["fuse", "--config", s(&cfg), "--log", s(&log), "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("marker 99"), "{}", stderr(&o));
}

fn last_row(path: &Path) -> Vec<f64> {
    let text = fs::read_to_string(path).unwrap();
    text.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect()
}

#[test]
fn noiseless_fuse_ends_at_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), |v| {
        v["noise"] = serde_json::json!({
            "sigma_x": 0.0, "sigma_y": 0.0, "sigma_phi": 0.0, "sigma_omega": 0.0,
            "gyro_drift_rate": 0.0, "sigma_speed": 0.0, "outlier_prob": 0.0, "outlier_offset": 0.0
        });
        v["filters"] = serde_json::json!([
            {"mode": "ekf"}, {"mode": "aekf"}, {"mode": "chi2"}, {"mode": "aekf_chi2"}
        ]);
    });
    let d = s(dir.path());
    assert!(run(&["simulate", "--config", s(&cfg), "--out", d]).status.success());
    let log = dir.path().join("sensor_log.csv");
    let o = run(&["fuse", "--config", s(&cfg), "--log", s(&log), "--out", d]);
    assert!(o.status.success(), "{}", stderr(&o));
    let truth = last_row(&dir.path().join("truth.csv"));
    for mode in ["ekf", "aekf", "chi2", "aekf_chi2"] {
        let fused = last_row(&dir.path().join(format!("fused_{mode}.csv")));
        let err = (fused[1] - truth[1]).hypot(fused[2] - truth[2]);
        assert!(err < 0.01, "{mode}: {err}");
        assert!(stdout(&o).contains(&format!("{mode}: ")));
    }
}

#[test]
fn open_gate_output_matches_ekf_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = edited_config(dir.path(), |v| {
        v["filters"] = serde_json::json!([{"mode": "ekf"}, {"mode": "chi2", "chi2_threshold": "inf"}]);
    });
    let d = s(dir.path());
    run(&["simulate", "--config", s(&cfg), "--out", d, "--no-header-timestamp"]);
    let log = dir.path().join("sensor_log.csv");
    let o = run(&["fuse", "--config", s(&cfg), "--log", s(&log), "--out", d, "--no-header-timestamp"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("fused_ekf.csv"), read("fused_chi2.csv"));
    // step logs differ only in the mode column
    let strip = |f: &str| String::from_utf8(read(f)).unwrap().replace(",chi2,", ",ekf,");
    assert_eq!(strip("steps_ekf.csv"), strip("steps_chi2.csv"));
}

#[test]
fn fuse_can_select_one_mode() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("oval.json");
    let d = s(dir.path());
    run(&["simulate", "--config", s(&cfg), "--out", d]);
    let log = dir.path().join("sensor_log.csv");
    let o = run(&["fuse", "--config", s(&cfg), "--log", s(&log), "--out", d, "--mode", "chi2"]);
    assert!(o.status.success());
    assert!(dir.path().join("fused_chi2.csv").is_file());
    assert!(!dir.path().join("fused_ekf.csv").exists());
    let o = run(&["fuse", "--config", s(&cfg), "--log", s(&log), "--out", d, "--mode", "aekf_chi2"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn evaluate_identical_files_gives_zero() {
    let dir = tempfile::tempdir().unwrap();
    let truth = dir.path().join("truth.csv");
    let rows: String = (0..50)
        .map(|i| {
            let a = i as f64 * 0.1;
            format!("{a},{},{}\n", a.cos(), a.sin())
        })
        .collect();
    fs::write(&truth, format!("# a comment\nt,x,y\n{rows}")).unwrap();
    let fused = dir.path().join("fused_copy.csv");
    fs::copy(&truth, &fused).unwrap();
    let o = run(&["evaluate", "--fused", s(&fused), "--truth", s(&truth), "--out", s(dir.path()), "--no-header-timestamp"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("rmse_summary.csv")).unwrap();
    assert_eq!(summary, "series,samples,final_rmse\ncopy,50,0\n");
    let long = fs::read_to_string(dir.path().join("rmse_long.csv")).unwrap();
    assert!(long.starts_with("series,t,value\ncopy,0,0\n"));
    assert_eq!(long.lines().count(), 51);

    let o = run(&[
        "evaluate", "--fused", s(&fused), "--truth", s(&truth), "--out", s(dir.path()), "--time-offset", "0",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("final RMSE 0.000000"));
}

#[test]
fn evaluate_reports_chi2_below_ekf_on_the_bundled_scenario() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = configs().join("oval.json");
    let d = s(dir.path());
    run(&["simulate", "--config", s(&cfg), "--out", d]);
    let log = dir.path().join("sensor_log.csv");
    run(&["fuse", "--config", s(&cfg), "--log", s(&log), "--out", d]);
    let truth = dir.path().join("truth.csv");
    let (ekf, chi2) = (dir.path().join("fused_ekf.csv"), dir.path().join("fused_chi2.csv"));
    let o = run(&["evaluate", "--fused", s(&ekf), s(&chi2), "--truth", s(&truth), "--out", d]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary = fs::read_to_string(dir.path().join("rmse_summary.csv")).unwrap();
    let value = |series: &str| -> f64 {
        summary
            .lines()
            .find(|l| l.starts_with(&format!("{series},")))
            .unwrap()
            .rsplit(',')
            .next()
            .unwrap()
            .parse()
            .unwrap()
    };
    assert!(value("chi2") < value("ekf"), "{summary}");
}

fn write_cloud(path: &Path, rows: &[(f64, f64, f64, f64, u8)]) {
    let mut text = String::from("t,x,y,z,ring\n");
    for (t, x, y, z, r) in rows {
        text.push_str(&format!("{t},{x},{y},{z},{r}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn groundtruth_collinear_returns_give_a_line() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("cloud.csv");
    // single horizontal returns (ring 7 is at -1 deg) moving along x = 2
    let e = (-1.0f64).to_radians();
    let rows: Vec<_> = (0..6)
        .map(|i| {
            let y = -0.5 + 0.2 * i as f64;
            let range = 2.0f64.hypot(y);
            (i as f64 * 0.1, 2.0, y, range * e.tan(), 7)
        })
        .collect();
    write_cloud(&cloud, &rows);
    let o = run(&[
        "groundtruth", "--cloud", s(&cloud), "--radius", "0.05", "--mount-height", "0.4", "--out", s(dir.path()),
        "--no-header-timestamp",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(dir.path().join("reference.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t_or_param,x,y"));
    let pts: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(pts.len(), 6);
    // all radius-corrected centers lie on one line through the origin-facing rays
    let (a, b) = (&pts[0], &pts[5]);
    for p in &pts {
        let cross = (b[1] - a[1]) * (p[2] - a[2]) - (b[2] - a[2]) * (p[1] - a[1]);
        assert!(cross.abs() < 0.01, "{p:?}");
    }
    let diag: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("reference.json")).unwrap()).unwrap();
    assert_eq!(diag["sample_count"], 6);
}

#[test]
fn groundtruth_with_too_few_samples_fails_with_a_diagnostic() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = dir.path().join("cloud.csv");
    write_cloud(&cloud, &[]);
    let o = run(&["groundtruth", "--cloud", s(&cloud), "--radius", "0.05", "--mount-height", "0.4", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("4"), "{}", stderr(&o));

    let o = run(&["groundtruth", "--cloud", "/no/such.csv", "--radius", "0.05", "--mount-height", "0.4"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["groundtruth", "--cloud", s(&cloud), "--radius", "-1", "--mount-height", "0.4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn bad_arguments_exit_with_2() {
    assert_eq!(run(&["simulate"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let cfg = configs().join("oval.json");
    assert_eq!(run(&["fuse", "--config", s(&cfg), "--log", "x", "--mode", "ukf"]).status.code(), Some(2));
}
