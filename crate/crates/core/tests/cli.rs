use std::path::Path;
use std::process::{Command, Output};

use biphoton_sim::io::read_two_column_csv;
use biphoton_sim::scheme::builtin;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_biphoton-sim"));
    c.env_remove("BIPHOTON_SIM_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(dir.join("manifest.json")).unwrap()).unwrap()
}

fn summary(dir: &Path) -> (Vec<f64>, Vec<f64>) {
    read_two_column_csv(std::fs::read_to_string(dir.join("summary.csv")).unwrap().as_bytes()).unwrap()
}

#[test]
fn run_writes_four_artifacts_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("results");
    let o = run(&["run", "off_resonant", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let m = manifest(&out);
    let artifacts = m["artifacts"].as_array().unwrap();
    assert_eq!(artifacts.len(), 4);
    for a in artifacts {
        assert!(Path::new(a.as_str().unwrap()).is_file(), "{a}");
    }
    assert_eq!(m["scenario"]["name"], "off_resonant");
    assert_eq!(m["format_version"], 1);
    assert!(m["tool_version"].is_string() && m["wall_time_s"].as_f64().unwrap() >= 0.0);

    let trace = std::fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("# format_version = 1\n# name = \"off_resonant\""));
    assert!(trace.contains("\ndelay_ns,value\n"));
    let spectrum = std::fs::read_to_string(out.join("spectrum.csv")).unwrap();
    assert!(spectrum.contains("\nfreq_mhz,power\n"));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(out.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["scenario"]["name"], "off_resonant");
}

#[test]
fn unknown_scenario_lists_builtins() {
    let o = run(&["run", "nonsense"]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    for n in ["off_resonant", "on_resonant", "on_resonant_776", "filter_width_scan", "od_scan"] {
        assert!(err.contains(n), "{err}");
    }
}

#[test]
fn invalid_config_exits_3_with_violations() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "off_resonant", "--out", dir.path().to_str().unwrap(), "--grid-points", "1000"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("grid.n_points"));

    let o = run(&["validate", "off_resonant", "--set", "filter.od=-1", "--set", "detector_bin_ns=0"]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("filter.od") && err.contains("detector_bin_ns"), "{err}");

    let o = run(&["validate", "off_resonant", "--set", "no_such_key"]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn numeric_failure_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "off_resonant", "--out", dir.path().to_str().unwrap(), "--set", "fit_window_ns=[3.0, 10.0]"]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
    assert!(stderr(&o).contains("window too short"));
}

#[test]
fn validate_and_list() {
    let o = run(&["validate", "on_resonant"]);
    assert_eq!(o.status.code(), Some(0));
    let o = run(&["list-scenarios"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&o.stdout).lines().count(), 5);
}

#[test]
fn scenario_file_path_resolves() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("custom.toml");
    let mut s = builtin("off_resonant").unwrap();
    s.name = "custom".into();
    s.filter.od = 3.0;
    std::fs::write(&path, s.to_config_string().unwrap()).unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("custom"));

    std::fs::write(&path, "name = \"x\"\n").unwrap();
    let o = run(&["validate", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn od_scan_narrows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["scan", "od", "off_resonant", "0.1,1,10", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (x, y) = summary(dir.path());
    assert_eq!(x, vec![0.1, 1.0, 10.0]);
    assert!(y[1] < y[0] && y[2] < y[1], "{y:?}");
    assert_eq!(manifest(dir.path())["artifacts"].as_array().unwrap().len(), 4);
}

#[test]
fn filter_width_scan_is_nonincreasing() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["scan", "filter_width", "filter_width_scan", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let (x, y) = summary(dir.path());
    assert_eq!(x.len(), 8);
    assert!(y.windows(2).all(|w| w[1] <= w[0]), "{y:?}");
}

#[test]
fn empty_scan_values_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["scan", "od", "off_resonant", "", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
    // No values given and no default scan of that kind.
    let o = run(&["scan", "od", "off_resonant", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for (d, threads) in [(&a, "1"), (&b, "0")] {
        let o = bin()
            .env("BIPHOTON_SIM_THREADS", threads)
            .args(["run", "off_resonant", "--set", "filter.od=5", "--out", d.to_str().unwrap()])
            .output()
            .unwrap();
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    }
    for f in ["trace.csv", "transmission.csv", "spectrum.csv", "fit.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_eq!(manifest(&a)["overrides"][0], "filter.od=5");
}

#[test]
fn json_format() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "off_resonant", "--format", "json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let t: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("trace.json")).unwrap()).unwrap();
    assert_eq!(t["scenario"]["name"], "off_resonant");
    assert_eq!(t["delay_ns"].as_array().unwrap().len(), t["value"].as_array().unwrap().len());
}

#[test]
fn bad_thread_cap_is_a_config_error() {
    let o = bin().env("BIPHOTON_SIM_THREADS", "lots").args(["list-scenarios"]).output().unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn resting_atoms_recover_the_natural_lifetime() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["run", "on_resonant", "--set", "motional.v_t_mps=0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let fit: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("fit.json")).unwrap()).unwrap();
    let tau = fit["tau_ns"].as_f64().unwrap();
    assert!((tau - 26.3).abs() / 26.3 < 0.05, "{tau}");
}
