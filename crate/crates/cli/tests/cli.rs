use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn ghq(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ghq")).args(args).env("GHQ_THREADS", "2").output().expect("ghq runs")
}

fn workspace() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn smoke() -> String {
    workspace().join("configs/smoke.json").to_string_lossy().into_owned()
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ghq-cli-tests-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

fn write_config(name: &str, text: &str) -> String {
    let p = scratch(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn smoke_config_passes_every_check() {
    let out = ghq(&["run", &smoke()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let s = &v["report"]["summary"];
    assert_eq!(s["failed"], 0);
    assert_eq!(s["errors"], 0);
    assert!(s["total"].as_u64().unwrap() >= 30);
    assert!(v["timing"]["total_seconds"].as_f64().unwrap() < 30.0);
    for c in v["report"]["checks"].as_array().unwrap() {
        assert_eq!(c["status"], "pass", "{c}");
        assert!(c["anchor"].as_str().is_some_and(|a| !a.is_empty()));
    }
}

#[test]
fn same_seed_gives_identical_report_body() {
    let cfg = write_config("det.json", r#"{"seed": 11, "suites": ["green", "bos", "symbols"], "symbols": {"dims": [3, 4]}}"#);
    let body = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_ghq")).args(["run", &cfg]).env("GHQ_THREADS", threads).output().unwrap();
        assert_eq!(out.status.code(), Some(0));
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        serde_json::to_string(&v["report"]).unwrap()
    };
    let a = body("1");
    assert_eq!(a, body("1"));
    assert_eq!(a, body("3"));
    let other = write_config("det2.json", r#"{"seed": 12, "suites": ["green", "bos", "symbols"], "symbols": {"dims": [3, 4]}}"#);
    let out = ghq(&["run", &other]);
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_ne!(a, serde_json::to_string(&v["report"]).unwrap());
}

#[test]
fn invalid_operator_is_a_usage_error() {
    let cfg = write_config("bad-op.json", "{\n  \"operator\": {\"name\": \"klein-gordon\"}\n}\n");
    let out = ghq(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn malformed_config_and_bad_threads_are_usage_errors() {
    let cfg = write_config("bad-json.json", "{\"seed\": 1,,}");
    assert_eq!(ghq(&["run", &cfg]).status.code(), Some(2));
    let cfl = write_config("cfl.json", r#"{"lattice": {"dt": 0.25, "dx": 0.125}}"#);
    assert_eq!(ghq(&["run", &cfl]).status.code(), Some(2));
    assert_eq!(ghq(&["run", "/nonexistent/config.json"]).status.code(), Some(2));
    let out = Command::new(env!("CARGO_BIN_EXE_ghq")).args(["list-checks"]).env("GHQ_THREADS", "zero").output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn failing_check_exits_with_one() {
    let cfg =
        write_config("strict.json", r#"{"suites": ["symbols"], "symbols": {"dims": [3]}, "tolerances": {"symbols.dirac-definite": 10.0}}"#);
    let out = ghq(&["run", &cfg]);
    assert_eq!(out.status.code(), Some(1));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["report"]["summary"]["failed"], 1);
}

#[test]
fn list_checks_names_each_check_once() {
    let out = ghq(&["list-checks", "--json"]);
    assert_eq!(out.status.code(), Some(0));
    let v: Vec<Value> = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v.len() >= 30);
    let names: BTreeSet<&str> = v.iter().map(|c| c["name"].as_str().unwrap()).collect();
    assert_eq!(names.len(), v.len());
    let text = String::from_utf8(ghq(&["list-checks"]).stdout).unwrap();
    assert_eq!(text.lines().count(), v.len());
}

#[test]
fn exports_round_trip() {
    for kind in ["op", "green", "section", "gram"] {
        let path = scratch(&format!("export-{kind}.txt"));
        let p = path.to_string_lossy();
        let out = ghq(&["export", &smoke(), "--kind", kind, "--out", &p, "--verify"]);
        assert_eq!(out.status.code(), Some(0), "{kind}: {}", String::from_utf8_lossy(&out.stderr));
        let first = std::fs::read_to_string(&path).unwrap();
        assert!(ghq(&["export", &smoke(), "--kind", kind, "--out", &p]).status.success());
        assert_eq!(first, std::fs::read_to_string(&path).unwrap(), "{kind} export is not deterministic");
    }
    let (h, m) = ghq_cli::io::read_triplets(&std::fs::read_to_string(scratch("export-op.txt")).unwrap()).unwrap();
    assert_eq!((h.rows, h.cols), (128, 128));
    assert_eq!(h.lattice.unwrap().n_x, 8);
    // The wave stencil has five points per equation row.
    assert_eq!(m.iter().filter(|z| z.norm() != 0.0).count(), 5 * 8 * 14);
}

#[test]
fn npoint_and_ferm_write_csv_and_summary() {
    let csv = scratch("np.csv");
    let summary = scratch("np.json");
    let out = ghq(&["npoint", &smoke(), "--out", &csv.to_string_lossy(), "--summary", &summary.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("i1,i2,re,im\n"));
    assert_eq!(text.lines().count(), 1 + 9);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["passed"], true);

    let cfg = write_config("ferm4.json", r#"{"npoint": {"order": 4, "random": 2}}"#);
    let out = ghq(&["ferm", &cfg, "--out", &csv.to_string_lossy(), "--summary", &summary.to_string_lossy()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(std::fs::read_to_string(&csv).unwrap().lines().count(), 1 + 16);
    let s: Value = serde_json::from_str(&std::fs::read_to_string(&summary).unwrap()).unwrap();
    assert_eq!(s["fock_dim"], 256);
    assert!(s["car_defects"]["a_star_a"].as_f64().unwrap() <= 1e-12);
}

#[test]
fn symbol_reads_stdin() {
    use std::io::Write;
    let mut child = Command::new(env!("CARGO_BIN_EXE_ghq"))
        .arg("symbol")
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(br#"{"operator": "dirac", "m": 3, "xi": [1.0, 0.6, 0.8]}"#).unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success());
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["classification"]["causal_type"], "lightlike");
    assert_eq!(v["classification"]["invertible"], false);
    assert_eq!(v["definite_type"], true);
    assert!(v.get("witness").is_none());

    let q = write_config("q.json", r#"{"operator": "wave", "m": 4, "xi": [0.0, 1.0, 0.0, 0.0]}"#);
    let v: Value = serde_json::from_slice(&ghq(&["symbol", &q]).stdout).unwrap();
    assert_eq!(v["definite_type"], Value::Null);
    let bad = write_config("q-bad.json", r#"{"operator": "maxwell", "m": 4, "xi": [0.0, 1.0, 0.0, 0.0]}"#);
    assert_eq!(ghq(&["symbol", &bad]).status.code(), Some(2));
}

#[test]
fn axioms_report_each_scenario() {
    let out = ghq(&["axioms", &smoke(), "--scenario", "band"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    let axioms = v["axioms"].as_array().unwrap();
    assert!(axioms.len() >= 5);
    assert!(axioms.iter().all(|a| a["pass"] == true));
    let v: Value = serde_json::from_slice(&ghq(&["axioms", &smoke(), "--scenario", "diamond"]).stdout).unwrap();
    assert_eq!(v["axioms"].as_array().unwrap().len(), 1);
}

#[test]
fn other_operators_pass_their_smoke_configs() {
    for name in ["dirac", "proca"] {
        let cfg = workspace().join(format!("configs/{name}.json"));
        let cfg = write_config(
            &format!("{name}-green.json"),
            &std::fs::read_to_string(cfg).unwrap().replace("\"suites\": [\"all\"]", "\"suites\": [\"green\", \"exact-seq\", \"bos\"]"),
        );
        let out = ghq(&["run", &cfg]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
    }
}
