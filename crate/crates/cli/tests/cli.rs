use offaxis::io;
use offaxis::pencil_beam::gaussian_spatial_marginal;
use offaxis::scenario::Scenario;
use serde_json::Value;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_offaxis"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn example() -> Value {
    serde_json::from_str(&fs::read_to_string(data("example_scenario.json")).unwrap()).unwrap()
}

fn write_scenario(dir: &Path, v: &Value) -> PathBuf {
    let p = dir.join("scenario.json");
    fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    let out = bin().args(args).output().unwrap();
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn bundled_example_parses() {
    Scenario::load(data("example_scenario.json")).unwrap();
}

#[test]
fn run_recovers_z0_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let sc = data("example_scenario.json");
    assert!(run(&["run", "--scenario", s(&sc), "--out", s(&a)]).status.success());
    assert!(run(&["--threads", "1", "run", "--scenario", s(&sc), "--out", s(&b)]).status.success());
    let ta = fs::read(a.join("summary.json")).unwrap();
    assert_eq!(ta, fs::read(b.join("summary.json")).unwrap());
    assert_eq!(fs::read(a.join("recovered.json")).unwrap(), fs::read(b.join("recovered.json")).unwrap());

    let summary: Value = serde_json::from_slice(&ta).unwrap();
    let dz0 = summary["relative_deltas"]["z0"].as_f64().unwrap();
    assert!(dz0.abs() < 0.02, "z0 relative error {dz0}");
    let hash = Scenario::load(&sc).unwrap().hash();
    assert_eq!(summary["provenance"]["scenario_hash"], hash.as_str());
    for f in ["stations/station_0.csv", "stations/profile_2.csv", "cameras/camera_1.csv"] {
        let t = io::read_csv(a.join(f)).unwrap();
        assert!(t.meta.iter().any(|(k, v)| k == "scenario_hash" && *v == hash), "{f}");
        assert!(t.meta.iter().any(|(k, _)| k == "params"), "{f}");
    }
}

#[test]
fn stages_compose_through_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let sc = data("example_scenario.json");
    assert!(run(&["synthesize", "--scenario", s(&sc), "--out", s(out)]).status.success());
    assert!(run(&["triangulate", "--scenario", s(&sc), "--out", s(out)]).status.success());
    let axis = out.join("axis.json");
    let st = out.join("st");
    assert!(run(&["synthesize", "--scenario", s(&sc), "--out", s(&st), "--axis", s(&axis)]).status.success());
    assert!(run(&["recover", "--scenario", s(&sc), "--out", s(&st)]).status.success());
    let rec: Value = serde_json::from_str(&fs::read_to_string(st.join("recovered.json")).unwrap()).unwrap();
    let truth = Scenario::load(&sc).unwrap().medium;
    let lambda = rec["params"]["lambda"].as_f64().unwrap();
    assert!((lambda - truth.lambda).abs() < 0.02 * truth.lambda, "lambda {lambda}");
}

#[test]
fn missing_cameras_is_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = example();
    v.as_object_mut().unwrap().remove("cameras");
    let p = write_scenario(tmp.path(), &v);
    let out = run(&["run", "--scenario", s(&p), "--out", s(&tmp.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cameras"), "{err}");
}

#[test]
fn invert_radon_reproduces_gaussian() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path();
    let input = data("gaussian_sinogram.csv");
    assert!(run(&["invert-radon", "--input", s(&input), "--out", s(out)]).status.success());
    let t = io::read_csv(out.join("profile.csv")).unwrap();
    let (r, g) = (t.column("r").unwrap(), t.column("value").unwrap());
    assert_eq!(r.len(), 256);
    let err = r.iter().zip(&g).map(|(r, g)| (g - (-r * r).exp()).abs()).fold(0.0, f64::max);
    assert!(err < 1e-3, "L-inf error {err}");
}

#[test]
fn simulate_beam_matches_gaussian_marginal() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = example();
    v["medium"]["s"] = 1.0.into();
    let p = write_scenario(tmp.path(), &v);
    let out = tmp.path().join("o");
    assert!(run(&["simulate-beam", "--scenario", s(&p), "--out", s(&out)]).status.success());
    let sc = Scenario::load(&p).unwrap();
    let z = sc.beam_grid.unwrap().z;
    let t = io::read_csv(out.join("beam_grid.csv")).unwrap();
    let (x, y, val) = (t.column("x").unwrap(), t.column("y").unwrap(), t.column("value").unwrap());
    let peak = val.iter().cloned().fold(0.0, f64::max);
    let mut err: f64 = 0.0;
    for k in 0..x.len() {
        let exact = gaussian_spatial_marginal([x[k], y[k]], z, &sc.medium).unwrap();
        err = err.max((val[k] - exact).abs() / peak);
    }
    assert!(err < 1e-6, "relative error {err}");
}

#[test]
fn validate_writes_comparison_csv() {
    let tmp = tempfile::tempdir().unwrap();
    let mut v = example();
    v["medium"]["s"] = 1.0.into();
    v["medium"]["D"] = 1.5.into();
    v["validation"] = serde_json::json!({ "eps": [0.1], "particles": 5000, "dz": 0.01, "z": 1.0, "centroids": 64 });
    let p = write_scenario(tmp.path(), &v);
    let out = tmp.path().join("o");
    assert!(run(&["validate", "--scenario", s(&p), "--out", s(&out), "--seed", "3"]).status.success());
    let t = io::read_csv(out.join("comparison.csv")).unwrap();
    for c in ["eps", "kappa", "d_fpb", "d_ballistic"] {
        assert_eq!(t.column(c).unwrap().len(), 1, "{c}");
    }
    assert!(t.meta.iter().any(|(k, _)| k == "ordering_fpb_below_ballistic"));
    assert!(t.meta.iter().any(|(k, v)| k == "seed" && v == "3"));
}

#[test]
fn validate_rejects_fractional_s() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run(&["validate", "--scenario", s(&data("example_scenario.json")), "--out", s(tmp.path())]);
    assert_ne!(out.status.code(), Some(0));
}
