use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn mzforge(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mzforge")).args(args).env("MZFORGE_THREADS", "1").output().expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&out.stdout)))
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn design_verify_roundtrip_and_tamper() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().join("d.json");
    let csv = dir.path().join("d.csv");
    let out = mzforge(&["design", "--domain", "torus", "--index", "l1ball:2:2", "--seed", "3", "-o", path(&d), "--csv", path(&csv)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let built = json(&out);
    assert_eq!(built["exact"], true);

    let out = mzforge(&["verify", "--design", path(&d)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    let stored = v["stored_mz_constant"].as_f64().unwrap();
    let recomputed = v["mz_constant"].as_f64().unwrap();
    assert!((stored - recomputed).abs() <= 1e-14);

    let header = std::fs::read_to_string(&csv).unwrap();
    assert!(header.starts_with("x_1,x_2,weight"));

    let mut file: Value = serde_json::from_str(&std::fs::read_to_string(&d).unwrap()).unwrap();
    assert_eq!(file["schema"], "mzdesign/1");
    let w0 = file["weights"][0].as_f64().unwrap();
    file["weights"][0] = Value::from(w0 + 1e-3);
    let tampered = dir.path().join("t.json");
    std::fs::write(&tampered, file.to_string()).unwrap();
    let out = mzforge(&["verify", "--design", path(&tampered)]);
    assert_eq!(out.status.code(), Some(2));
    let v = json(&out);
    assert_eq!(v["exact"], false);
    assert!(v["mz_constant"].as_f64().unwrap() > 1e-5);
}

#[test]
fn malformed_files_exit_one_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\n  \"schema\": \"mzdesign/1\",\n  \"weights\": [0.5,\n").unwrap();
    let out = mzforge(&["verify", "--design", path(&bad)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line"));

    let missing = dir.path().join("missing.json");
    std::fs::write(&missing, r#"{"schema": "mzdesign/1", "domain": {"kind": "torus", "dim": 1}, "p": 2}"#).unwrap();
    let out = mzforge(&["verify", "--design", path(&missing)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("points"));

    let out = mzforge(&["design", "--index", "nonsense:1", "-o", path(&dir.path().join("x.json"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sphere_quadrature_and_even_p() {
    let dir = tempfile::tempdir().unwrap();
    let q = dir.path().join("q.json");
    let out = mzforge(&["design", "--domain", "sphere", "--degree", "2", "--quadrature", "-o", path(&q)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["atoms"].as_u64().unwrap() <= 9);
    assert_eq!(mzforge(&["verify", "--design", path(&q)]).status.code(), Some(0));

    let p4 = dir.path().join("p4.json");
    let out = mzforge(&["design", "--index", "cube:1:1", "--p", "4", "-o", path(&p4)]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&mzforge(&["verify", "--design", path(&p4)]));
    assert!(v["lp_max_relative_deviation"].as_f64().unwrap() < 1e-9);
}

#[test]
fn lattice_commands() {
    let out = mzforge(&["lattice", "search", "--index", "cube:1:3", "--max-size", "20"]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["result"]["size"], 6);

    let out = mzforge(&["lattice", "search", "--index", "exp3-1d", "--max-size", "30"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(json(&out)["result"]["status"], "notfound");

    let out = mzforge(&["lattice", "fool", "--dim", "2", "--max-lattice", "4", "--a", "1,-2", "--b", "0,1"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert_eq!(v["all_lattices_refuted"], true);
    assert_eq!(v["index_set"][1], serde_json::json!([1, 22]));

    let out = mzforge(&["lattice", "check", "--size", "5", "--gen", "1,2", "--index", "l1ball:2:1"]);
    assert_eq!(out.status.code(), Some(0));
    let out = mzforge(&["lattice", "check", "--size", "4", "--gen", "1,1", "--index", "l1ball:2:1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn recovery_build_and_check() {
    let dir = tempfile::tempdir().unwrap();
    let op = dir.path().join("op.json");
    let out = mzforge(&["recover", "build", "--n", "6", "--capacity", "400", "-o", path(&op)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(json(&out)["atoms"].as_u64().unwrap() <= 37);
    let out = mzforge(&["recover", "check", "--op", path(&op), "--trials", "20"]);
    assert_eq!(out.status.code(), Some(0));
    let v = json(&out);
    assert!(v["report"]["max_ratio"].as_f64().unwrap() <= 1.0);
    assert_eq!(v["report"]["truncation"], 300);
}

#[test]
fn frame_command_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("f.json");
    let out = mzforge(&["frame", "--index", "l1ball:2:1", "--samples", "5000", "--restarts", "2", "-o", path(&f)]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let file: Value = serde_json::from_str(&std::fs::read_to_string(&f).unwrap()).unwrap();
    assert_eq!(file["schema"], "mzframe/1");
    assert_eq!(file["transform"].as_array().unwrap().len(), 5);
}

#[test]
fn experiment_writes_outputs_and_resumes() {
    let dir = tempfile::tempdir().unwrap();
    let args = [
        "experiment", "--id", "exp2", "--dims", "2", "--points", "20,30", "--restarts", "1", "--max-iters", "200", "-o",
        path(dir.path()),
    ];
    let out = mzforge(&args);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json(&out)["cells"], 2);
    for f in ["exp2.csv", "exp2_summary.json", "exp2_cells.jsonl"] {
        assert!(dir.path().join(f).exists(), "{f}");
    }
    let summary: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("exp2_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["schema"], "mzexperiment/1");
    assert!(summary["cells"][0]["seed"].is_u64());
    let again = mzforge(&args);
    assert_eq!(again.status.code(), Some(0));
    let lines = std::fs::read_to_string(dir.path().join("exp2_cells.jsonl")).unwrap();
    assert_eq!(lines.lines().count(), 2);
}

#[test]
fn bad_usage_is_an_error() {
    assert_eq!(mzforge(&["experiment", "--id", "exp9", "-o", "/tmp"]).status.code(), Some(1));
    assert_eq!(mzforge(&["--help"]).status.code(), Some(0));
    assert_eq!(mzforge(&["design", "--domain", "sphere", "-o", "/dev/null"]).status.code(), Some(1));
}
