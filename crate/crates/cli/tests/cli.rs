use std::path::PathBuf;
use std::process::Command;

use blockcp::cpmap::CpMap;
use blockcp::json::{cpmap_to_value, matrix_from_value};
use blockcp::numerics::{identity, max_abs};
use blockcp::random::{random_kraus, seeded};
use serde_json::{json, Value};

fn run(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_blockcp")).args(args).output().expect("run blockcp");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8(out.stdout).expect("utf-8 stdout"),
        String::from_utf8(out.stderr).expect("utf-8 stderr"),
    )
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("blockcp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write(name: &str, v: &Value) -> String {
    let p = scratch(name);
    std::fs::write(&p, serde_json::to_string(v).unwrap()).unwrap();
    p.to_string_lossy().into_owned()
}

fn gen(kind: &str, extra: &[&str], name: &str) -> String {
    let p = scratch(name);
    let path = p.to_string_lossy().into_owned();
    let mut args = vec!["gen", kind, "--out", path.as_str()];
    args.extend_from_slice(extra);
    let (code, _, err) = run(&args);
    assert_eq!(code, 0, "{err}");
    path
}

fn report(out: &str) -> Value {
    serde_json::from_str(out).expect("JSON report")
}

#[test]
fn generation_is_deterministic() {
    for kind in ["blockcp", "qds", "generator"] {
        let a = run(&["gen", kind, "--seed", "42", "--json"]);
        let b = run(&["gen", kind, "--seed", "42", "--json"]);
        assert_eq!(a.0, 0);
        assert_eq!(a.1, b.1);
    }
    let c = run(&["gen", "blockcp", "--seed", "43", "--json"]);
    assert_ne!(run(&["gen", "blockcp", "--seed", "42", "--json"]).1, c.1);
}

#[test]
fn generated_instance_round_trips() {
    let path = gen("blockcp", &["--seed", "5", "--n", "2", "--d", "3"], "round.json");
    let (code, out, err) = run(&["extract", "--in", &path, "--json"]);
    assert_eq!(code, 0, "{err}");
    let r = report(&out);
    assert!(r["ground_truth_deviation"].as_f64().unwrap() <= 1e-7);
    assert!(r["cross_validation"].as_f64().unwrap() <= 1e-7);
    assert_eq!(r["pass"], json!(true));
}

#[test]
fn overscaled_instance_is_not_cp() {
    let path = gen("blockcp", &["--seed", "5", "--scale", "1.25"], "scaled.json");
    let (code, out, _) = run(&["extract", "--in", &path, "--json"]);
    assert_eq!(code, 4);
    assert!(report(&out)["min_eigenvalue"].as_f64().unwrap() < -1e-9);
}

#[test]
fn identity_block_map_gives_identity() {
    let inst = json!({ "kind": "blockcp", "full": cpmap_to_value(&CpMap::identity(4)) });
    let (code, out, err) = run(&["extract", "--in", &write("identity.json", &inst), "--json"]);
    assert_eq!(code, 0, "{err}");
    let t = matrix_from_value(&report(&out)["stinespring"]["t"]).unwrap();
    assert!(max_abs(&(t - identity(2))) < 1e-9);
}

#[test]
fn non_block_map_exits_three() {
    let phi = CpMap::from_kraus(&random_kraus(&mut seeded(3), 4, 4, 2)).unwrap();
    let inst = json!({ "kind": "blockcp", "full": cpmap_to_value(&phi) });
    let (code, _, err) = run(&["extract", "--in", &write("nonblock.json", &inst)]);
    assert_eq!(code, 3, "{err}");
}

#[test]
fn residual_failure_exits_five() {
    let path = gen("blockcp", &["--seed", "8"], "strict.json");
    let (code, out, _) = run(&["extract", "--in", &path, "--tol-verify", "1e-30", "--json"]);
    assert_eq!(code, 5);
    assert_eq!(report(&out)["pass"], json!(false));
}

#[test]
fn invalid_configuration_exits_two() {
    assert_eq!(run(&["gen", "blockcp", "--n", "0"]).0, 2);
    assert_eq!(run(&["gen", "qds", "--tol-verify", "-1"]).0, 2);
    assert_eq!(run(&["extract"]).0, 2);
    assert_eq!(run(&["extract", "--in", "/nonexistent/instance.json"]).0, 2);
    let qds = gen("qds", &["--seed", "1", "--horizon", "2"], "wrongkind.json");
    assert_eq!(run(&["extract", "--in", &qds]).0, 2);
    assert_eq!(run(&["frobnicate"]).0, 2);
}

#[test]
fn semigroup_pipeline_passes() {
    let path = gen("qds", &["--seed", "11", "--horizon", "4"], "qds.json");
    for cmd in ["semigroup", "lift", "dilate"] {
        let (code, out, err) = run(&[cmd, "--in", &path, "--json"]);
        assert_eq!(code, 0, "{cmd}: {err}");
        assert_eq!(report(&out)["N"], json!(4));
    }
}

#[test]
fn diagonal_semigroup_has_zero_morphism() {
    let path = gen("qds", &["--seed", "12", "--horizon", "3", "--diagonal"], "diag.json");
    let (code, out, err) = run(&["semigroup", "--in", &path, "--json"]);
    assert_eq!(code, 0, "{err}");
    let norms = report(&out)["norms"].as_array().unwrap().clone();
    assert!((norms[0].as_f64().unwrap() - 1.0).abs() < 1e-9);
    assert!(norms[1..].iter().all(|v| v.as_f64().unwrap() < 1e-12));
}

#[test]
fn size_guard_exits_six() {
    let path = gen("qds", &["--seed", "13", "--horizon", "2"], "guard.json");
    let (code, out, _) = run(&["lift", "--in", &path, "--horizon", "20", "--json"]);
    assert_eq!(code, 6);
    let r = report(&out);
    assert!(r["dimension"].as_u64().unwrap() > r["limit"].as_u64().unwrap());
}

#[test]
fn generator_pipeline() {
    let (code, out, _) = run(&["gen", "generator", "--seed", "21", "--json"]);
    assert_eq!(code, 0);
    assert!(report(&out)["unit_defect"].as_f64().unwrap() < 1e-12);
    let path = gen("generator", &["--seed", "21", "--d", "3"], "gen.json");
    let (code, out, err) = run(&["lindblad", "--in", &path, "--json"]);
    assert_eq!(code, 0, "{err}");
    let r = report(&out);
    assert!(r["relation_residual"].as_f64().unwrap() <= 1e-8);
    assert!(r["skeleton_residual"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn selftest_is_green_and_reports_write_to_file() {
    let out = scratch("selftest.json");
    let (code, stdout, err) = run(&["selftest", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert!(stdout.contains("pass: true"));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert!(r["checks"].as_object().unwrap().values().all(|v| v == &json!(true)));
}
