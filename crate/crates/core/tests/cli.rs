//! The `fracperim` binary: exit codes, artifacts and manifest reruns.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracperim::specfun::eigenvalue;
use fracperim::FracParams;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fracperim"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name)
}

fn csv_rows(path: &Path) -> Vec<csv::StringRecord> {
    csv::Reader::from_path(path).unwrap().records().map(|r| r.unwrap()).collect()
}

#[test]
fn spectrum_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("spectrum");
    let o = run(&["spectrum", "--N", "2", "--s", "0.25", "--kmax", "6", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("spectrum.csv"));
    assert_eq!(rows.len(), 7);
    assert_eq!(rows[0][2].parse::<f64>().unwrap(), 0.0);
    let p = FracParams::new(2, 0.25).unwrap();
    for (k, r) in rows.iter().enumerate() {
        let v: f64 = r[2].parse().unwrap();
        assert!((v - eigenvalue(p, k)).abs() <= 1e-11 * v.abs().max(1.0));
    }
    let m: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(m["schema"], 1);
    assert_eq!(m["config"]["command"], "spectrum");
    assert!(m["wall_ms"].as_f64().unwrap() >= 0.0);
}

#[test]
fn invalid_order_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["spectrum", "--s", "0.7", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert!(err["error"]["message"].as_str().unwrap().contains("(0, 1/2)"));
    assert_eq!(err["error"]["kind"], "invalid_parameter");

    let o = run(&["no-such-command"]);
    assert_eq!(o.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["kind"], "usage");
}

#[test]
fn bad_config_schema_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"schema": 99, "command": "spectrum", "args": {}}"#).unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    // the unit ball does not fit around ξ = (9, 0) in Ω_ε = 10·B_1
    let o = run(&["reduce", "--eps", "0.1", "--xi", "9,0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    let err: serde_json::Value = serde_json::from_slice(&o.stderr).unwrap();
    assert_eq!(err["error"]["exit_code"], 1);
}

#[test]
fn manifest_reruns_reproduce_the_csv() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let o = run(&[
        "perimeter",
        "--set",
        data("dumbbell.json").to_str().unwrap(),
        "--method",
        "mc",
        "--samples",
        "20000",
        "--seed",
        "11",
        "--workers",
        "1",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest = a.join("manifest.json");

    let b = dir.path().join("b");
    let o = run(&["--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(
        std::fs::read(a.join("perimeter.csv")).unwrap(),
        std::fs::read(b.join("perimeter.csv")).unwrap()
    );

    let c = dir.path().join("c");
    let o = run(&["--config", manifest.to_str().unwrap(), "--workers", "3", "--out", c.to_str().unwrap()]);
    assert!(o.status.success());
    let (ra, rc) = (csv_rows(&a.join("perimeter.csv")), csv_rows(&c.join("perimeter.csv")));
    let (va, vc): (f64, f64) = (ra[0][5].parse().unwrap(), rc[0][5].parse().unwrap());
    assert!((va - vc).abs() <= 1e-12 * va.abs(), "{va} vs {vc}");
}

#[test]
fn halfspace_writes_profile_and_diagnostics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("h");
    let o = run(&["halfspace", "--intervals", "8", "--volume", "0.5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("profile.csv"));
    assert_eq!(rows.len(), 9);
    let d: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("diagnostics.json")).unwrap()).unwrap();
    assert!(d["perimeter"].as_f64().unwrap() < d["half_ball_perimeter"].as_f64().unwrap());
    assert!((d["volume"].as_f64().unwrap() - 0.5).abs() < 1e-9);
}

#[test]
fn potential_profile_along_a_ray() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("v");
    let o = run(&["potential", "--samples", "10", "--multistart", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("potential_profile.csv"));
    let v: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!((v[0] - 4.0 * std::f64::consts::PI).abs() < 1e-6);
    assert!(v.windows(2).all(|w| w[1] > w[0]));
    let crit = csv_rows(&out.join("critical_points.csv"));
    assert_eq!(crit.len(), 1);
    assert_eq!(&crit[0][4], "min");
}

#[test]
fn locate_finds_two_cmc_centers_in_the_dumbbell() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("loc");
    let o = run(&[
        "locate",
        "--domain",
        data("dumbbell.json").to_str().unwrap(),
        "--eps",
        "0.05",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&out.join("cmc.csv"));
    let good = rows
        .iter()
        .filter(|r| &r[9] == "true" && r[6].parse::<f64>().unwrap() <= 1e-6)
        .count();
    assert!(good >= 2, "{rows:?}");
}
