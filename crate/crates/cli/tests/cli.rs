use std::path::PathBuf;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_diakoptic"))
}

fn data(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("data").join(name)
}

fn json(out: &Output) -> serde_json::Value {
    serde_json::from_slice(&out.stdout).expect("json on stdout")
}

#[test]
fn connection_demo_reports_closed_form_deviation() {
    let out = bin()
        .args(["connection-demo", "--theta", "0.7853981633974483", "--steps", "1000"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["schema_version"], 1);
    assert!(doc["summary"]["max_deviation"].as_f64().unwrap() <= 1e-6);
    assert_eq!(doc["trajectory"].as_array().unwrap().len(), 1001);
}

#[test]
fn connection_demo_single_step_csv_has_two_rows() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let out = bin()
        .args(["connection-demo", "--steps", "1", "--format", "csv", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let mut r = csv::Reader::from_path(&path).unwrap();
    assert_eq!(r.headers().unwrap().get(0), Some("step"));
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[1][1].parse::<f64>().unwrap(), std::f64::consts::FRAC_PI_2);
}

#[test]
fn unwritable_output_is_an_error() {
    let out = bin()
        .args(["connection-demo", "--out", "/nonexistent-dir/x.json"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nonexistent-dir"));
}

#[test]
fn solve_cnot_wire_finds_the_solution() {
    let out = bin().arg("solve").arg(data("cnot_wire.net")).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    let s = &doc["summary"];
    assert_eq!(s["status"], "SOLUTION");
    assert_eq!(
        s["assignment"],
        serde_json::json!({"r": 0, "s": 1, "t": 1, "u": 1, "v": 1})
    );
    assert!(s["fidelity"].as_f64().unwrap() >= 1.0 - 1e-6);
    assert_eq!(s["oracle_agreement"]["agrees"], true);
}

#[test]
fn solve_unsat_variant_exits_two_with_evidence() {
    let out = bin().arg("solve").arg(data("cnot_wire_unsat.net")).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let doc = json(&out);
    assert_eq!(doc["summary"]["status"], "UNSAT");
    assert_eq!(doc["summary"]["evidence"]["kind"], "infeasible_step");
    assert_eq!(doc["summary"]["oracle_agreement"]["solutions"], 0);
}

#[test]
fn solve_malformed_netlist_reports_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.net");
    std::fs::write(&path, "gate cnot t u -> v r\nwire r\n").unwrap();
    let out = bin().arg("solve").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn solve_oracle_off_omits_agreement() {
    let out = bin()
        .arg("solve")
        .arg(data("cnot_wire.net"))
        .args(["--oracle", "off", "--steps", "50"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(json(&out)["summary"]["oracle_agreement"].is_null());
}

#[test]
fn fock_verify_defaults_pass() {
    let out = bin().args(["fock-verify", "--steps", "200"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["summary"]["passed"], true);
    let checks = doc["trajectory"].as_array().unwrap();
    let dev = checks
        .iter()
        .find(|c| c["name"] == "induced_vs_connection_deviation")
        .unwrap();
    assert!(dev["value"].as_f64().unwrap() <= 1e-6);
}

#[test]
fn fock_verify_rejects_bad_ordering() {
    let out = bin().args(["fock-verify", "--energies", "1,3,2,1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(out.stdout.is_empty());
}

#[test]
fn fock_verify_csv_lists_checks() {
    let out = bin()
        .args(["fock-verify", "--steps", "50", "--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let mut r = csv::Reader::from_reader(out.stdout.as_slice());
    let rows: Vec<_> = r.records().map(Result::unwrap).collect();
    assert!(rows.len() >= 10);
    assert!(rows.iter().all(|r| &r[3] == "true"));
}
