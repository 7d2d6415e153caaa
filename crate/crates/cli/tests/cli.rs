//! End-to-end runs of the binary against the bundled scenarios.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_trajcomplete"))
}

fn scenarios() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}

fn scenario(name: &str) -> PathBuf {
    scenarios().join(format!("{name}.scn"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn report(dir: &Path, name: &str) -> Value {
    serde_json::from_str(&fs::read_to_string(dir.join(name).join("report.json")).unwrap()).unwrap()
}

fn run_into(dir: &Path, extra: &[&str], files: &[PathBuf]) -> Output {
    let mut cmd = bin();
    cmd.arg("run").arg("-o").arg(dir).args(extra).args(files);
    cmd.output().unwrap()
}

#[test]
fn catalog_lists_required_entries() {
    let o = run(&["catalog"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    for needle in ["euclidean(n)", "plane_wave(f1,f2,f)", "hyperbolic_half_plane"] {
        assert!(text.contains(needle), "{needle}");
    }
}

#[test]
fn validate_accepts_every_bundled_scenario() {
    let o = bin().arg("validate").arg(scenarios()).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let count = fs::read_dir(scenarios()).unwrap().count();
    assert_eq!(String::from_utf8(o.stdout).unwrap().lines().count(), count);
}

#[test]
fn missing_task_is_a_validation_error() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad.scn");
    fs::write(&path, r#"{"name": "bad", "forces": {"potential": "0"}}"#).unwrap();
    let validate = bin().arg("validate").arg(&path).output().unwrap();
    let run = run_into(tmp.path(), &[], &[path]);
    for o in [validate, run] {
        assert!(!o.status.success());
        assert!(stderr(&o).contains("'task'"), "{}", stderr(&o));
    }
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn syntax_errors_report_line_and_column() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("broken.scn");
    fs::write(&path, "{\n  \"name\": \"x\",\n  \"task\": integrate\n}\n").unwrap();
    let o = bin().arg("validate").arg(&path).output().unwrap();
    assert!(!o.status.success());
    assert!(stderr(&o).contains("broken.scn:3:11"), "{}", stderr(&o));
}

#[test]
fn unknown_keys_are_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = run_into(tmp.path(), &["--set", "integrator.tolerance=1e-9"], &[scenario("harmonic")]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("integrator"), "{}", stderr(&o));
    assert!(stderr(&o).contains("tolerance"));
}

#[test]
fn bundled_examples_match_expectations() {
    let tmp = TempDir::new().unwrap();
    let o = run_into(tmp.path(), &[], &[scenario("harmonic"), scenario("quartic-blowup")]);
    assert!(o.status.success(), "{}", stderr(&o));

    let h = report(tmp.path(), "harmonic");
    assert_eq!(h["outcome"], "HorizonReached");
    assert!(h["runs"][0]["energy_drift"].as_f64().unwrap() < 1e-8);

    let q = report(tmp.path(), "quartic-blowup");
    assert_eq!(q["outcome"], "BlowUpSuspected");
    let t_star = q["runs"][0]["outcome"]["t_star"].as_f64().unwrap();
    assert!((t_star - 0.5f64.sqrt()).abs() < 1e-3);

    let csv = fs::read_to_string(tmp.path().join("harmonic/trajectory.csv")).unwrap();
    assert!(csv.starts_with("t,"));
}

#[test]
fn text_and_json_reports_agree() {
    let tmp = TempDir::new().unwrap();
    let o = run_into(tmp.path(), &[], &[scenario("time-oscillator-certify")]);
    assert!(o.status.success());
    let dir = tmp.path().join("time-oscillator-certify");
    let json: serde_json::Map<String, Value> =
        serde_json::from_str(&fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let mut lines = Vec::new();
    for (k, v) in &json {
        trajcomplete_cli::report::flatten(k, v, &mut lines);
    }
    let text = fs::read_to_string(dir.join("report.txt")).unwrap();
    assert_eq!(text.lines().collect::<Vec<_>>(), lines);
}

#[test]
fn overrides_and_tolerance_flags_reach_the_run() {
    let tmp = TempDir::new().unwrap();
    let o = run_into(
        tmp.path(),
        &["--tol-rel", "1e-11", "--horizon", "5", "--set", "initial.x=[2, 0]"],
        &[scenario("harmonic")],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let r = report(tmp.path(), "harmonic");
    assert_eq!(r["config"]["integrator"]["rel_tol"].as_f64(), Some(1e-11));
    assert_eq!(r["runs"][0]["t_end"].as_f64(), Some(5.0));
    let x = r["runs"][0]["final_x"][0].as_f64().unwrap();
    assert!((x - 2.0 * 5f64.cos()).abs() < 1e-8);
}

#[test]
fn echoed_config_reproduces_the_report() {
    let tmp = TempDir::new().unwrap();
    let first = tmp.path().join("first");
    let o = run_into(&first, &["--echo-config", "--set", "integrator.max_step=0.05"], &[scenario("hyperbolic-geodesic")]);
    assert!(o.status.success(), "{}", stderr(&o));
    let echo = first.join("hyperbolic-geodesic/hyperbolic-geodesic.scn");
    let second = tmp.path().join("second");
    let o = run_into(&second, &["--echo-config"], &[echo]);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["report.txt", "report.json", "trajectory_forward.csv", "hyperbolic-geodesic.scn"] {
        let a = fs::read(first.join("hyperbolic-geodesic").join(f)).unwrap();
        let b = fs::read(second.join("hyperbolic-geodesic").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn parallel_batches_match_serial_runs() {
    let tmp = TempDir::new().unwrap();
    let files = [scenario("harmonic"), scenario("lemma-linear"), scenario("plane-wave-geodesic")];
    let serial = tmp.path().join("serial");
    let parallel = tmp.path().join("parallel");
    assert!(run_into(&serial, &[], &files).status.success());
    assert!(run_into(&parallel, &["--jobs", "3"], &files).status.success());
    for name in ["harmonic", "lemma-linear", "plane-wave-geodesic"] {
        assert_eq!(
            fs::read(serial.join(name).join("report.json")).unwrap(),
            fs::read(parallel.join(name).join("report.json")).unwrap()
        );
    }
}

#[test]
fn runtime_errors_exit_nonzero_with_context() {
    let tmp = TempDir::new().unwrap();
    let path = tmp.path().join("bad-metric.scn");
    // metric is indefinite everywhere
    fs::write(
        &path,
        r#"{"name": "bad-metric", "task": "integrate",
            "manifold": {"metric": [["1", "0"], ["0", "-1"]]},
            "forces": {"potential": "0"},
            "initial": {"x": [0, 0], "xdot": [1, 0]}}"#,
    )
    .unwrap();
    let o = run_into(tmp.path(), &[], &[path]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("bad-metric"), "{}", stderr(&o));
}

#[test]
fn inconclusive_certificates_exit_cleanly() {
    let tmp = TempDir::new().unwrap();
    let o = run_into(tmp.path(), &[], &[scenario("negative-quartic-certify")]);
    assert!(o.status.success());
    let r = report(tmp.path(), "negative-quartic-certify");
    assert_eq!(r["outcome"], "Inconclusive");
    assert_eq!(r["probe"]["runs"][0]["outcome"]["label"], "BlowUpSuspected");
}
