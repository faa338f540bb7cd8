use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn toric_cqed(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_toric-cqed"))
        .args(args)
        .output()
        .expect("binary should run")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn json(o: &Output) -> Value {
    serde_json::from_str(&stdout(o)).unwrap_or_else(|e| panic!("{e}: {}", stdout(o)))
}

#[test]
fn interfere_braiding_reports_minus() {
    let o = toric_cqed(&["interfere", "--variant", "braiding"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let r = json(&o);
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["scenario"], "interfere");
    assert_eq!(r["results"]["fidelity_minus"], 1.0);
    assert_eq!(r["results"]["phase"], "-1");
    assert!(r["invariant_checks"].as_array().unwrap().iter().all(|c| c["pass"] == true));
}

#[test]
fn interfere_control_reports_plus() {
    let o = toric_cqed(&["interfere", "--variant", "control_no_e_pair"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(json(&o)["results"]["phase"], "+1");
}

#[test]
fn halt_variant_is_indeterminate() {
    let o = toric_cqed(&["interfere", "--variant", "halt_after_creation"]);
    assert_eq!(o.status.code(), Some(0));
    let r = json(&o);
    assert_eq!(r["results"]["phase"], "indeterminate");
    assert_eq!(r["results"]["fidelity_plus"], 0.5);
}

#[test]
fn pulse_fidelity_sweep_csv_is_monotone() {
    let o = toric_cqed(&["pulse-fidelity", "--ratio-sweep", "5,10,20,50", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let mut reader = csv::Reader::from_reader(o.stdout.as_slice());
    let headers = reader.headers().unwrap().clone();
    let ratio = headers.iter().position(|h| h == "ratio").unwrap();
    let fid = headers.iter().position(|h| h == "fidelity").unwrap();
    let rows: Vec<(f64, f64)> = reader
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[ratio].parse().unwrap(), r[fid].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.iter().map(|r| r.0).collect::<Vec<_>>(), vec![5.0, 10.0, 20.0, 50.0]);
    assert!(rows.windows(2).all(|w| w[1].1 >= w[0].1));
}

#[test]
fn selfcheck_passes_on_pristine_build() {
    let o = toric_cqed(&["selfcheck"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let table = stdout(&o);
    assert!(table.contains("PASS  ground-state loop stabilizer"));
    assert!(!table.contains("FAIL"));
}

#[test]
fn miscalibrated_labeling_names_the_loop_check() {
    let o = toric_cqed(&["selfcheck", "--labeling", "3,2,1,4,5,6"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("FAIL  ground-state loop stabilizer"));
    assert!(stderr(&o).contains("ground-state loop stabilizer"));
    let o = toric_cqed(&["interfere", "--labeling", "3,2,1,4,5,6"]);
    assert_eq!(o.status.code(), Some(2));
    let r = json(&o);
    assert_eq!(r["results"], Value::Null);
    assert_eq!(r["invariant_checks"][0]["name"], "ground-state loop stabilizer");
    assert_eq!(r["invariant_checks"][0]["pass"], false);
}

#[test]
fn truncation_warning_at_small_cutoff() {
    let o = toric_cqed(&["sweep", "--n-max", "1", "--ratio-sweep", "5,10"]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stderr(&o).contains("raise --n-max"), "{}", stderr(&o));
    let o = toric_cqed(&["sweep", "--n-max", "6", "--ratio-sweep", "10", "--format", "json"]);
    assert!(json(&o)["results"]["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        vec!["frobnicate"],
        vec!["interfere", "--variant", "twist"],
        vec!["interfere", "--labeling", "1,1,2,3,4,5"],
        vec!["prepare", "--format", "csv"],
        vec!["prepare", "--config", "/nonexistent/run.toml"],
        vec![],
    ] {
        let o = toric_cqed(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}: {}", stderr(&o));
    }
    assert_eq!(toric_cqed(&["--help"]).status.code(), Some(0));
}

#[test]
fn unwritable_output_is_a_usage_error() {
    let o = toric_cqed(&["prepare", "--out", "/nonexistent/dir/report.json"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn config_file_drives_the_run_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("run.toml");
    let out = dir.path().join("report.json");
    std::fs::write(
        &cfg,
        format!("scenario = \"interfere\"\nvariant = \"control_no_e_pair\"\nout = {:?}\n", out.to_str().unwrap()),
    )
    .unwrap();
    let cfg_arg = cfg.to_str().unwrap();
    assert_eq!(toric_cqed(&["--config", cfg_arg]).status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["results"]["phase"], "+1");
    assert_eq!(r["config_echo"]["variant"], "control_no_e_pair");
    assert_eq!(toric_cqed(&["--config", cfg_arg, "--variant", "braiding"]).status.code(), Some(0));
    let r: Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(r["results"]["phase"], "-1");
}

#[test]
fn prepare_reports_both_branches() {
    let o = toric_cqed(&["prepare", "--policy", "both_branches"]);
    assert_eq!(o.status.code(), Some(0));
    let branches = json(&o)["results"]["branches"].as_array().unwrap().clone();
    assert_eq!(branches.len(), 2);
    assert_eq!(branches[0]["measurement"]["outcome"], 1);
    assert_eq!(branches[1]["measurement"]["outcome"], -1);
    assert_ne!(branches[0]["generators"], branches[1]["generators"]);
}

#[test]
fn si_units_rescale_times() {
    let dimless = toric_cqed(&["pulse-fidelity", "--gate", "iswap"]);
    let si = toric_cqed(&["pulse-fidelity", "--gate", "iswap", "--units", "si"]);
    let t0 = json(&dimless)["results"]["points"][0]["gate_time"].as_f64().unwrap();
    let t1 = json(&si)["results"]["points"][0]["gate_time"].as_f64().unwrap();
    assert!((t0 - std::f64::consts::FRAC_PI_2).abs() < 1e-11);
    assert!((t1 - 2.5e-9).abs() < 1e-20);
    assert_eq!(json(&si)["config_echo"]["units"], "si");
}

fn identical_reports(dir: &Path, args: &[&str]) -> bool {
    let paths = [dir.join("a.json"), dir.join("b.json")];
    for p in &paths {
        let mut full = args.to_vec();
        full.extend(["--out", p.to_str().unwrap()]);
        assert!(toric_cqed(&full).status.success());
    }
    std::fs::read(&paths[0]).unwrap() == std::fs::read(&paths[1]).unwrap()
}

#[test]
fn reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    assert!(identical_reports(dir.path(), &["selfcheck", "--seed", "3"]));
    assert!(identical_reports(dir.path(), &["prepare", "--policy", "sample", "--seed", "9"]));
    assert!(identical_reports(dir.path(), &["sweep", "--ratio-sweep", "10,20"]));
}
