use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn carlfel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carlfel"))
        .args(args)
        .env_remove("CARLFEL_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn short_run(out: &Path, extra: &[&str]) -> Output {
    let out = out.to_str().unwrap();
    let mut args = vec!["run", "--model", "classical", "--particles", "256", "--tau-end", "5", "--out", out];
    args.extend_from_slice(extra);
    carlfel(&args)
}

#[test]
fn help_lists_every_subcommand() {
    let o = carlfel(&["--help"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for sub in ["run", "preset", "compare", "scaling", "validate"] {
        assert!(text.contains(sub), "{sub} missing from help");
    }
}

#[test]
fn preset_list_names_all_presets() {
    let o = carlfel(&["preset", "--list"]);
    assert_eq!(code(&o), 0);
    let text = stdout(&o);
    for name in
        ["fig1-row1", "fig1-row2", "fig1-row3", "classical-growth", "two-level-pulses", "limit-comparison"]
    {
        assert!(text.contains(name), "{name} missing");
    }
}

#[test]
fn run_writes_series_report_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let o = short_run(dir.path(), &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["classical_series.csv", "classical_report.json", "classical_config.json"] {
        assert!(dir.path().join(f).is_file(), "{f} not written");
    }
    let csv = fs::read_to_string(dir.path().join("classical_series.csv")).unwrap();
    assert!(csv.starts_with("tau,re_A,im_A,abs_A2,photons_per_particle,mean_pbar,norm,invariant_value\n"));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("classical_report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let seed = ["--seed", "17"];
    assert_eq!(code(&short_run(a.path(), &seed)), 0);
    assert_eq!(code(&short_run(b.path(), &seed)), 0);
    for f in ["classical_series.csv", "classical_report.json", "classical_config.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn environment_variable_sets_output_directory() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_carlfel"))
        .args(["run", "--model", "two-level", "--rho", "0.05", "--tau-end", "10"])
        .env("CARLFEL_OUT_DIR", dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(dir.path().join("two-level_series.csv").is_file());
}

#[test]
fn saved_config_reruns_with_flag_overrides() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&short_run(dir.path(), &["--rho", "2"])), 0);
    let cfg = dir.path().join("classical_config.json");
    let saved: serde_json::Value = serde_json::from_str(&fs::read_to_string(&cfg).unwrap()).unwrap();
    assert_eq!(saved["rho_bar"], 2.0);

    let second = dir.path().join("second");
    let o = carlfel(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--delta",
        "-0.5",
        "--out",
        second.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let rerun: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(second.join("classical_config.json")).unwrap()).unwrap();
    assert_eq!(rerun["rho_bar"], 2.0);
    assert_eq!(rerun["delta"], -0.5);
}

#[test]
fn invalid_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&short_run(dir.path(), &["--rho", "-1"])), 2);
    assert_eq!(code(&carlfel(&["preset", "fig9"])), 2);
    assert_eq!(code(&carlfel(&["run"])), 2);
}

#[test]
fn numerical_breakdown_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let o = carlfel(&[
        "run",
        "--model",
        "quantum-c",
        "--rho",
        "10",
        "--dt",
        "0.5",
        "--tau-end",
        "20",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn compare_applies_limit() {
    let dir = tempfile::tempdir().unwrap();
    let write = |name: &str, model: &str| {
        let sub = dir.path().join(name);
        let o = carlfel(&[
            "run",
            "--model",
            model,
            "--rho",
            "10",
            "--particles",
            "2000",
            "--peaks",
            "1",
            "--out",
            sub.to_str().unwrap(),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        sub.join(format!("{model}_config.json"))
    };
    let (classical, quantum) = (write("c", "classical"), write("q", "quantum-c"));
    let (a, b) = (classical.to_str().unwrap(), quantum.to_str().unwrap());
    let out = dir.path().to_str().unwrap();

    let loose = carlfel(&["compare", a, b, "--limit", "0.5", "--out", out]);
    assert_eq!(code(&loose), 0, "{}", stdout(&loose));
    assert!(stdout(&loose).contains("abs_A2"));
    assert!(dir.path().join("compare_report.json").is_file());

    let strict = carlfel(&["compare", a, b, "--limit", "1e-9", "--out", out]);
    assert_eq!(code(&strict), 2);
}

#[test]
fn fel_scaling_prints_scaled_parameters() {
    let o = carlfel(&[
        "scaling",
        "fel",
        "--lambda-w",
        "0.02",
        "--a-w",
        "1",
        "--gamma0",
        "150",
        "--density",
        "1e16",
        "--lambda-r",
        "1e-6",
    ]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let rho = v["params"]["rho_bar"].as_f64().unwrap();
    assert!((rho / 25_039.614_905_989_85 - 1.0).abs() < 1e-12);
}
