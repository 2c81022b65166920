use std::process::{Command, Output};

use serde_json::Value;

fn moebius(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_moebius")).args(args).output().expect("spawn moebius")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

#[test]
fn eval_cone_closed_form() {
    let out = moebius(&["eval", "--immersion", "cone_clifford", "--point", "1.0,0.3,1.1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let r = &v["records"][0];
    let b: Vec<f64> = r["b"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    let s = 1.0 / 3f64.sqrt();
    assert!((b[0] + s).abs() < 1e-12 && b[1].abs() < 1e-12 && (b[2] - s).abs() < 1e-12);
    assert!((r["trA"].as_f64().unwrap() - 1.0 / 6.0).abs() < 1e-9);
    assert!((r["A_tilde_norm2"].as_f64().unwrap() - 2.0 / 27.0).abs() < 1e-9);
    assert_eq!(r["curvature_sphere_plane_flags"], serde_json::json!([false, true, false]));
}

#[test]
fn eval_torus_control_has_moebius_form() {
    let out = moebius(&["eval", "--immersion", "cylinder_torus", "--point", "0.1,0.4,1.0"]);
    assert_eq!(out.status.code(), Some(0));
    let c = json(&out)["records"][0]["C_frame"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap().abs()).fold(0.0, f64::max);
    assert!(c > 1e-3, "{c}");
}

#[test]
fn usage_errors_exit_2() {
    let out = moebius(&["eval", "--immersion", "cone_clifford", "--point", "1.0,abc"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));
    assert_eq!(moebius(&["eval", "--immersion", "no_such_thing"]).status.code(), Some(2));
    assert_eq!(moebius(&["verify", "--immersion", "cone_clifford", "--order", "7"]).status.code(), Some(2));
    assert_eq!(moebius(&["verify", "--suite", "bogus", "--immersion", "cone_clifford"]).status.code(), Some(2));
}

#[test]
fn genericity_failure_exits_3() {
    let out = moebius(&["eval", "--immersion", "cylinder_sphere", "--point", "0.0,0.5,0.5"]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn universal_suite_passes_on_random_graph() {
    let out = moebius(&["verify", "--suite", "universal", "--immersion", "random_graph(seed=42)"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(json(&out)["pass"], Value::Bool(true));
}

#[test]
fn flat_suite_rejects_torus_control() {
    let out = moebius(&["verify", "--immersion", "cylinder_torus", "--suite", "flat"]);
    assert_eq!(out.status.code(), Some(1));
    let v = json(&out);
    let check = v["reports"][0]["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["check"] == "conformal_flatness.schouten_codazzi")
        .unwrap()
        .clone();
    assert!(check["max_abs_residual"].as_f64().unwrap() > 1e-3);
}

#[test]
fn classify_verdicts_and_guard() {
    let v = json(&moebius(&["classify", "--immersion", "cone_clifford"]));
    assert_eq!(v["verdict"], "Cone");
    assert!((v["q_stats"]["mean"].as_f64().unwrap() + 1.0 / 3.0).abs() < 1e-6);
    let v = json(&moebius(&["classify", "--immersion", "cylinder_pseudosphere"]));
    assert_eq!(v["verdict"], "Cylinder");
    let out = moebius(&["classify", "--immersion", "cylinder_torus"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("NotConformallyFlat"));
}

#[test]
fn grid_header_and_determinism() {
    let args = ["grid", "--immersion", "cone_clifford", "--n", "3", "--output", "csv"];
    let a = moebius(&args);
    let b = moebius(&args);
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(a.stdout, b.stdout);
    let text = String::from_utf8(a.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("u1,u2,u3,A_tilde_norm2,R2,ric_norm2,integrand,weighted_sectional,rhs_trace_free"));
    let rows: Vec<_> = lines.collect();
    assert_eq!(rows.len(), 27);
    for row in rows {
        let integrand: f64 = row.split(',').nth(6).unwrap().parse().unwrap();
        assert!(integrand.abs() < 1e-9, "{row}");
    }
}

#[test]
fn output_independent_of_worker_count() {
    let args = ["verify", "--suite", "universal", "--immersion", "random_graph(seed=1)", "--points", "6"];
    let one = Command::new(env!("CARGO_BIN_EXE_moebius")).args(args).env("MOEBIUS_WORKERS", "1").output().unwrap();
    let four = Command::new(env!("CARGO_BIN_EXE_moebius")).args(args).env("MOEBIUS_WORKERS", "4").output().unwrap();
    assert_eq!(one.stdout, four.stdout);
}

#[test]
fn config_file_and_spec_file() {
    let dir = std::env::temp_dir().join(format!("moebius-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let spec = dir.join("cone.spec");
    std::fs::write(
        &spec,
        "name = \"cone\"\nambient = EUC4\ncomponents = \"(u1*cos(u2)*a, u1*sin(u2)*a, u1*cos(u3)*a, u1*sin(u3)*a)\"\nbox = [0.8,1.2; 0,2*pi; 0,2*pi]\nparams = {a: 0.7071067811865476}\n",
    )
    .unwrap();
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, format!("immersion = \"{}\"\npoints = 4\nseed = 3\n", spec.display())).unwrap();
    let out = moebius(&["classify", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&out);
    assert_eq!(v["verdict"], "Cone");
    assert_eq!(v["points"].as_array().unwrap().len(), 4);
    std::fs::write(&cfg, "bogus = 1\n").unwrap();
    assert_eq!(moebius(&["classify", "--config", cfg.to_str().unwrap()]).status.code(), Some(2));
    std::fs::remove_dir_all(&dir).ok();
}
