use serde_json::Value;
use std::f64::consts::PI;
use std::path::Path;
use std::process::{Command, Output};

fn catuni(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catuni")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn user_row(report: &Value) -> &Value {
    report["points"].as_array().unwrap().iter().rev().find(|p| p["reason"] == "user").expect("user point row")
}

fn origin_points(dir: &Path) -> String {
    let p = dir.join("origin.json");
    std::fs::write(&p, "[[0.0, 0.0, 0.0]]").unwrap();
    p.display().to_string()
}

fn dirichlet(dir: &Path, boundary: &str, level: &str, sub: &str) -> (Output, std::path::PathBuf) {
    let out = dir.join(sub);
    let pts = origin_points(dir);
    let o = catuni(&[
        "dirichlet", "--target", "flat-disk", "--boundary", boundary, "--level", level, "--points", &pts, "--out", out.to_str().unwrap(),
    ]);
    (o, out)
}

#[test]
fn tetrahedron_fails_validation_with_named_violations() {
    let o = catuni(&["validate", "--target", "tetrahedron"]);
    assert_eq!(code(&o), 1);
    let s = text(&o.stdout);
    assert_eq!(s.matches("link condition fails at vertex").count(), 4, "{s}");
}

#[test]
fn sphere_refinement_passes_validation() {
    let o = catuni(&["validate", "--target", "round-sphere"]);
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
}

#[test]
fn malformed_document_is_a_parse_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.json");
    std::fs::write(&p, "{\"topology\": \"sphere\", \"kappa\": ").unwrap();
    let o = catuni(&["validate", "--target", p.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let e = text(&o.stderr);
    assert!(e.contains("target_surface") && e.contains("parse error"), "{e}");
}

#[test]
fn missing_target_and_bad_flags_are_usage_errors() {
    assert_eq!(code(&catuni(&["validate", "--target", "/nonexistent/target.json"])), 2);
    assert_eq!(code(&catuni(&["validate"])), 2);
    assert_eq!(code(&catuni(&["uniformize", "--target", "round-sphere", "--tol", "-1"])), 2);
}

#[test]
fn invalid_target_is_not_run() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = catuni(&["uniformize", "--target", "doubled-square", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 1);
    assert!(text(&o.stderr).contains("target_surface: target is not an admissible CAT surface"));
    assert!(!out.exists());
}

#[test]
fn unknown_config_fields_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"max_sweep\": 10}").unwrap();
    let o = catuni(&["uniformize", "--target", "round-sphere", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).starts_with("error: harmonic_solver:"));
}

#[test]
fn identity_boundary_gives_trivial_tables() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = dirichlet(dir.path(), "power:1", "4", "id");
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
    let r = read_json(&out.join("report.json"));
    assert_eq!(r["verdict"], "harmonic embedding (degree 1)");
    let row = user_row(&r);
    assert!((row["ord"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6, "{row}");
    assert!(row["fit"]["k"]["value"].as_f64().unwrap() < 1e-6);
    assert!((row["h"]["value"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert_eq!(row["winding"], 1);
}

#[test]
fn square_map_has_an_order_two_row_at_the_origin() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = dirichlet(dir.path(), "power:2", "5", "sq");
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
    let pts = origin_points(dir.path());
    let again = dir.path().join("again");
    let o = catuni(&["analyze", out.join("map.json").to_str().unwrap(), "--points", &pts, "--out", again.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let r = read_json(&again.join("report.json"));
    assert_eq!(r["verdict"], "branched cover (degree 2)");
    let row = user_row(&r);
    let ord = row["ord"]["value"].as_f64().unwrap();
    assert!((ord - 2.0).abs() < 0.1, "{row}");
    assert_eq!(row["winding"], 2);
    assert!((row["fit"]["alpha"]["value"].as_f64().unwrap() - 2.0).abs() < 0.05);
    // The analysis of the stored map repeats the one made after the solve.
    let first = read_json(&out.join("report.json"));
    assert_eq!(first["points"], r["points"]);
    assert_eq!(first["branch"], r["branch"]);
}

#[test]
fn affine_map_has_distortion_two() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = dirichlet(dir.path(), "affine:0.3333333333333333", "4", "aff");
    assert_eq!(code(&o), 0);
    let row = user_row(&read_json(&out.join("report.json"))).clone();
    assert!((row["h"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-6, "{row}");
    assert!((row["predicted_h"]["value"].as_f64().unwrap() - 2.0).abs() < 1e-6);
    assert_eq!(row["fit"]["kind"], "stretched");
}

#[test]
fn stored_maps_must_resolve_their_target() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = dirichlet(dir.path(), "power:1", "4", "id");
    assert_eq!(code(&o), 0);
    let mut doc = read_json(&out.join("map.json"));
    assert_eq!(doc["schema"], "catuni/1");

    doc["target"]["source"] = Value::from("/nonexistent/target.json");
    let dangling = dir.path().join("dangling.json");
    std::fs::write(&dangling, doc.to_string()).unwrap();
    let o = catuni(&["analyze", dangling.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("dangling target reference"), "{}", text(&o.stderr));

    doc["target"]["source"] = Value::from("builtin:flat-cone");
    let other = dir.path().join("other.json");
    std::fs::write(&other, doc.to_string()).unwrap();
    let o = catuni(&["analyze", other.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("fingerprint"), "{}", text(&o.stderr));

    doc["target"]["source"] = Value::from("builtin:flat-disk");
    doc["values"][0] = serde_json::json!({"kind": "vertex", "v": 100000});
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, doc.to_string()).unwrap();
    let o = catuni(&["analyze", bad.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("dangling reference"), "{}", text(&o.stderr));
}

#[test]
fn round_sphere_uniformizes_reproducibly_and_uniquely() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str, pins: &str| {
        let out = dir.path().join(sub);
        let o = catuni(&["uniformize", "--target", "round-sphere", "--level", "4", "--pins", pins, "--seed", "7", "--out", out.to_str().unwrap()]);
        (o, out)
    };
    let (o, a) = run("a", "standard");
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
    let r = read_json(&a.join("report.json"));
    assert_eq!(r["verdict"], "uniformized (degree 1)");
    assert_eq!(r["status"], "pass");
    let e = r["levels"][0]["energy"]["value"].as_f64().unwrap();
    assert!((e / (8.0 * PI) - 1.0).abs() < 0.02, "{e}");
    assert_eq!(r["branch"]["branch_points"].as_array().unwrap().len(), 0);

    let (o, b) = run("b", "standard");
    assert_eq!(code(&o), 0);
    assert_eq!(std::fs::read(a.join("report.json")).unwrap(), std::fs::read(b.join("report.json")).unwrap());
    assert_eq!(std::fs::read(a.join("map.json")).unwrap(), std::fs::read(b.join("map.json")).unwrap());

    let (o, c) = run("c", "alternate");
    assert_eq!(code(&o), 0);
    let ma = a.join("map.json");
    let mc = c.join("map.json");
    let cmp = dir.path().join("cmp");
    let o = catuni(&["mobius", ma.to_str().unwrap(), ma.to_str().unwrap(), "--out", cmp.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let rms = read_json(&cmp.join("report.json"))["mobius"]["rms"]["value"].as_f64().unwrap();
    assert!(rms < 1e-12, "{rms}");
    let o = catuni(&["mobius", ma.to_str().unwrap(), mc.to_str().unwrap(), "--out", cmp.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", text(&o.stdout));
    let m = read_json(&cmp.join("report.json"));
    assert!(m["mobius"]["rms"]["value"].as_f64().unwrap() < 1e-3 * PI);
    let o = catuni(&["report", cmp.join("report.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert!(text(&o.stdout).contains("PASS mobius_residual"));

    let (o, disk) = dirichlet(dir.path(), "power:1", "4", "disk");
    assert_eq!(code(&o), 0);
    let o = catuni(&["mobius", ma.to_str().unwrap(), disk.join("map.json").to_str().unwrap(), "--out", cmp.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(text(&o.stderr).contains("qc_degree: the maps have different targets"));
}
