use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tdoa_core::evaluation::{builtin_scenario, triangular_deployment, TRIANGULAR_TARGET};
use tdoa_core::geometry::{distance, true_distance_differences};
use tdoa_core::io::{anchors_to_json, round_sig, tdoa_to_csv};
use tdoa_core::{AnchorSet, Point, SPEED_OF_LIGHT};
use tempfile::TempDir;

fn tdoa(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tdoa")).args(args).output().expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}", String::from_utf8_lossy(&out.stdout));
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_anchors(dir: &Path, name: &str, anchors: &AnchorSet) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string_pretty(&anchors_to_json(anchors)).unwrap()).unwrap();
    path
}

fn noise_free_fixture(dir: &Path) -> (PathBuf, PathBuf) {
    let anchors = triangular_deployment();
    let a = write_anchors(dir, "anchors.json", &anchors);
    let d = true_distance_differences(TRIANGULAR_TARGET, &anchors);
    let t = dir.join("tdoa.csv");
    std::fs::write(&t, tdoa_to_csv(&d)).unwrap();
    (a, t)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn locate_recovers_noise_free_fixture() {
    let dir = TempDir::new().unwrap();
    let (a, t) = noise_free_fixture(dir.path());
    for est in ["linear-central:1", "linear-central:3", "linear-symmetric", "gauss-newton"] {
        let out = tdoa(&["locate", s(&a), s(&t), "--estimator", est]);
        assert!(out.status.success(), "{est}: {}", stderr(&out));
        let v = stdout_json(&out);
        let p = Point::new(v["x"].as_f64().unwrap(), v["y"].as_f64().unwrap());
        assert!(distance(p, TRIANGULAR_TARGET) <= 1e-6, "{est}: {p:?}");
        assert_eq!(v["estimator"], est);
        assert!(v["diagnostics"]["sigma_min"].as_f64().unwrap() > 0.0);
    }
}

#[test]
fn locate_accepts_timestamp_csv() {
    let dir = TempDir::new().unwrap();
    let anchors = triangular_deployment();
    let a = write_anchors(dir.path(), "anchors.json", &anchors);
    let mut csv = String::from("anchor,timestamp_s\n");
    for (k, p) in anchors.points().iter().enumerate() {
        csv.push_str(&format!("{},{:e}\n", k + 1, 0.25 + distance(*p, TRIANGULAR_TARGET) / SPEED_OF_LIGHT));
    }
    let t = dir.path().join("toa.csv");
    std::fs::write(&t, csv).unwrap();
    let out = tdoa(&["locate", s(&a), s(&t)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = stdout_json(&out);
    let p = Point::new(v["x"].as_f64().unwrap(), v["y"].as_f64().unwrap());
    // The 0.25 s epoch costs ~1e-17 s of timestamp resolution, i.e. a few nm.
    assert!(distance(p, TRIANGULAR_TARGET) <= 1e-5, "{p:?}");
}

#[test]
fn missing_anchor_file_names_the_path() {
    let dir = TempDir::new().unwrap();
    let (_, t) = noise_free_fixture(dir.path());
    let missing = dir.path().join("no-such-anchors.json");
    let out = tdoa(&["locate", s(&missing), s(&t)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)), "{}", stderr(&out));
}

#[test]
fn malformed_csv_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let (a, t) = noise_free_fixture(dir.path());
    std::fs::write(&t, "pair_i,pair_j,d_ij_m\n1,2,abc\n").unwrap();
    let out = tdoa(&["locate", s(&a), s(&t)]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
}

#[test]
fn three_anchors_with_linear_estimator_is_a_geometry_error() {
    let dir = TempDir::new().unwrap();
    let anchors = AnchorSet::new(vec![Point::new(0.0, 0.0), Point::new(10.0, 0.0), Point::new(0.0, 10.0)]).unwrap();
    let a = write_anchors(dir.path(), "three.json", &anchors);
    let t = dir.path().join("tdoa.csv");
    std::fs::write(&t, tdoa_to_csv(&true_distance_differences(Point::new(3.0, 3.0), &anchors))).unwrap();
    let out = tdoa(&["locate", s(&a), s(&t), "--estimator", "linear-symmetric"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("requires ≥ 4 anchors"), "{}", stderr(&out));
    let out = tdoa(&["locate", s(&a), s(&t), "--estimator", "gauss-newton", "--init", "2,2"]);
    assert!(out.status.success(), "{}", stderr(&out));
}

#[test]
fn strict_flags_non_convergence() {
    let dir = TempDir::new().unwrap();
    let (a, t) = noise_free_fixture(dir.path());
    let out = tdoa(&["locate", s(&a), s(&t), "--max-iter", "1", "--init", "15,60"]);
    assert!(out.status.success());
    assert_eq!(stdout_json(&out)["diagnostics"]["converged"], false);
    let out = tdoa(&["--strict", "locate", s(&a), s(&t), "--max-iter", "1", "--init", "15,60"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn unknown_flags_are_rejected() {
    let out = tdoa(&["eval", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dop_map_best_cell_inside_square_hull() {
    let dir = TempDir::new().unwrap();
    let square = AnchorSet::new(vec![
        Point::new(0.0, 0.0),
        Point::new(10.0, 0.0),
        Point::new(10.0, 10.0),
        Point::new(0.0, 10.0),
    ])
    .unwrap();
    let a = write_anchors(dir.path(), "square.json", &square);
    let out_file = dir.path().join("map.json");
    let out = tdoa(&[
        "--json", "dop-map", s(&a), "--kind", "nonlinear-kappa", "--bounds", "-5,15,-5,15", "--res", "60", "--out",
        s(&out_file),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout_json(&out);
    let best = Point::new(summary["best"]["x"].as_f64().unwrap(), summary["best"]["y"].as_f64().unwrap());
    assert!(square.hull_contains(best), "{best:?}");

    // The reported cell holds the file's maximum (the symmetric layout has ties).
    let grid: Value = serde_json::from_str(&std::fs::read_to_string(&out_file).unwrap()).unwrap();
    let values = grid["values"].as_array().unwrap();
    let max = values.iter().filter_map(Value::as_f64).fold(f64::NEG_INFINITY, f64::max);
    let (i, j) = (summary["best"]["i"].as_u64().unwrap(), summary["best"]["j"].as_u64().unwrap());
    assert_eq!(values[(j * 60 + i) as usize].as_f64(), Some(max));
}

#[test]
fn dop_map_is_byte_identical_across_runs() {
    let dir = TempDir::new().unwrap();
    let (a, _) = noise_free_fixture(dir.path());
    let mut outputs = Vec::new();
    for k in 0..2 {
        let f = dir.path().join(format!("map{k}.csv"));
        let out = tdoa(&["dop-map", s(&a), "--kind", "linear-cond", "--central", "3", "--res", "80,50", "--out", s(&f)]);
        assert!(out.status.success(), "{}", stderr(&out));
        outputs.push(std::fs::read(&f).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let text = String::from_utf8(outputs.remove(0)).unwrap();
    assert!(text.starts_with("# bounds="));
    assert!(text.lines().next().unwrap().contains("res=80,50"));
    assert_eq!(text.lines().count(), 51);
}

#[test]
fn malformed_bounds_exit_2() {
    let dir = TempDir::new().unwrap();
    let (a, _) = noise_free_fixture(dir.path());
    for bounds in ["1,0,0,1", "0,1,0", "0,1,a,2"] {
        let out = tdoa(&["dop-map", s(&a), "--bounds", bounds]);
        assert_eq!(out.status.code(), Some(2), "{bounds}");
    }
}

#[test]
fn builtin_scenarios_run_without_files() {
    let out = tdoa(&["--json", "eval", "table4-triangular-linear", "--seed", "4"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = stdout_json(&out);
    assert_eq!(v["runs"][0]["scenario"], "static-triangular-linear");
    let out = tdoa(&["simulate", "table4-triangular-linear", "--seed", "4"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().count(), 1 + 500 * 6);
}

#[test]
fn seed_repeat_gives_identical_reports() {
    let dir = TempDir::new().unwrap();
    let mut files = Vec::new();
    for k in 0..2 {
        let f = dir.path().join(format!("report{k}.json"));
        let out = tdoa(&["eval", "static-triangular-nonlinear", "track-rectangular-linear", "--seed", "9", "--out", s(&f)]);
        assert!(out.status.success(), "{}", stderr(&out));
        files.push((std::fs::read(&f).unwrap(), out.stdout));
    }
    assert_eq!(files[0], files[1]);
    let other = tdoa(&["eval", "static-triangular-nonlinear", "--seed", "10"]);
    assert_ne!(other.stdout, files[0].1);
}

#[test]
fn eval_table_equals_library_reports() {
    let out = tdoa(&["--json", "eval", "--seed", "21", "--sigma", "0.3"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v = stdout_json(&out);
    let table = v["table"].as_array().unwrap();
    assert_eq!(table.len(), 4);
    for row in table {
        for (deployment, rmse) in row["rmse"].as_object().unwrap() {
            let kind = if row["estimator"] == "gauss-newton" { "nonlinear" } else { "linear" };
            let name = format!("{}-{deployment}-{kind}", row["pipeline"].as_str().unwrap());
            let report = builtin_scenario(&name).unwrap().with_sigma(0.3).run(21).unwrap();
            assert_eq!(rmse.as_f64().unwrap(), round_sig(report.rmse), "{name}");
        }
    }
}

#[test]
fn track_writes_trajectory_and_rejects_static_scenarios() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("traj.csv");
    let out = tdoa(&["--json", "track", "table5-triangular-nonlinear", "--seed", "2", "--out", s(&f)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = stdout_json(&out);
    let report = builtin_scenario("track-triangular-nonlinear").unwrap().run(2).unwrap();
    assert_eq!(summary["rmse"].as_f64().unwrap(), round_sig(report.rmse));
    let text = std::fs::read_to_string(&f).unwrap();
    assert!(text.starts_with("time_index,x,y,cov_xx,cov_xy,cov_yy,innovation,quality\n"));
    assert_eq!(text.lines().count(), 51);
    let out = tdoa(&["track", "static-triangular-linear"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn scenario_files_round_trip_through_the_cli() {
    let dir = TempDir::new().unwrap();
    let f = dir.path().join("scenario.json");
    let anchors = anchors_to_json(&triangular_deployment())["anchors"].clone();
    let scenario = serde_json::json!({
        "name": "custom",
        "anchors": anchors,
        "deployment": "triangular",
        "target": { "x": 22.65, "y": 66.667 },
        "sigma_d": 0.2,
        "samples": 50,
        "estimator": "gauss-newton",
        "seed": 5,
    });
    std::fs::write(&f, scenario.to_string()).unwrap();
    let a = tdoa(&["--json", "eval", s(&f)]);
    let b = tdoa(&["--json", "eval", s(&f), "--seed", "5"]);
    assert!(a.status.success(), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout_json(&a)["seed"], 5);
}
