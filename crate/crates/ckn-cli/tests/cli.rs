//! Behavior of the command-line surface: flag parsing, config files,
//! output formats, destinations, and exit codes.

use std::fs;
use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ckn")).args(args).output().expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf-8 stdout")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf-8 stderr")
}

/// Fresh scratch directory, removed by the caller.
fn scratch(tag: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("ckn-cli-{tag}-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    dir
}

#[test]
fn help_exits_zero() {
    let out = run(&["--help"]);
    assert!(out.status.success());
    assert!(stdout(&out).contains("verify-all"));
}

#[test]
fn region_reports_the_classified_cell() {
    let out = run(&["region", "--N", "3", "--a", "0", "--b", "0"]);
    assert!(out.status.success());
    let line = stdout(&out);
    assert!(line.contains("region=RadialUniqueStable"), "{line}");
    assert!(line.contains("p=5.0000000000000000e0"), "{line}");

    let out = run(&["region", "--N", "3", "--a", "-1", "--b", "-0.5"]);
    assert!(stdout(&out).contains("region=SymmetryBroken"));
}

#[test]
fn config_supplies_values_and_flags_override() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "N = 3\na = -1\nb = -0.5\n").unwrap();
    let base = run(&["region", "--config", cfg.to_str().unwrap()]);
    assert!(base.status.success());
    assert!(stdout(&base).contains("region=SymmetryBroken"));

    // a flag beats the same key from the file
    let over = run(&["region", "--config", cfg.to_str().unwrap(), "--b", "-0.2"]);
    assert!(stdout(&over).contains("region=RadialUniqueStable"));
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn unknown_config_key_is_a_usage_error() {
    let dir = scratch("badkey");
    let cfg = dir.join("run.cfg");
    fs::write(&cfg, "N = 3\nbogus = 1\n").unwrap();
    let out = run(&["region", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr(&out);
    assert!(err.contains("unknown key") && err.contains("bogus"), "{err}");
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn inadmissible_parameters_are_a_usage_error() {
    // a above the critical weight puts the tuple outside every admissible cell
    let out = run(&["profile", "--N", "3", "--a", "5", "--b", "5"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!stderr(&out).is_empty());
}

#[test]
fn omitted_parameters_fall_back_to_the_sobolev_tuple() {
    let out = run(&["region"]);
    assert!(out.status.success());
    let line = stdout(&out);
    assert!(line.starts_with("N=3 a=0."), "{line}");
    assert!(line.contains("region=RadialUniqueStable"), "{line}");
}

#[test]
fn malformed_flag_values_are_a_usage_error() {
    let out = run(&["region", "--a", "xyz"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(&["not-a-command"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn csv_rows_carry_full_precision() {
    let out =
        run(&["profile", "--N", "3", "--a", "0", "--b", "0", "--grid-T", "5", "--grid-n", "11"]);
    assert!(out.status.success());
    let text = stdout(&out);
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,psi,psi_prime,w,v"));
    let row = lines.next().expect("at least one data row");
    let fields: Vec<&str> = row.split(',').collect();
    assert_eq!(fields.len(), 5);
    for f in fields {
        let v: f64 = f.parse().expect("numeric field");
        assert!(v.is_finite());
        // 17 significant digits in scientific notation
        assert!(f.contains('e') && f.contains('.'), "{f}");
        let mantissa = f.split('e').next().unwrap();
        assert_eq!(mantissa.trim_start_matches('-').len(), 18, "{f}");
    }
}

#[test]
fn json_output_parses_and_matches_the_oracle_columns() {
    let out = run(&[
        "spectrum", "--N", "3", "--a", "0", "--b", "0", "--grid-T", "20", "--grid-n", "801",
        "--modes", "0,1", "--format", "json",
    ]);
    assert!(out.status.success());
    let rows: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid json");
    let rows = rows.as_array().expect("array of rows");
    assert!(rows.len() >= 4);
    for row in rows {
        let err = row["abs_err"].as_f64().unwrap();
        assert!(err < 1e-2, "coarse-grid eigenvalue error {err}");
    }
    assert_eq!(rows[0]["mode"], 0);
    assert_eq!(rows[0]["eigenvalue_oracle"], -2.0);
}

#[test]
fn out_file_lands_under_the_env_directory() {
    let dir = scratch("outdir");
    let out = Command::new(env!("CARGO_BIN_EXE_ckn"))
        .args([
            "profile", "--N", "3", "--a", "0", "--b", "0", "--grid-T", "5", "--grid-n", "11",
            "--format", "json", "--out", "runs/profile.json",
        ])
        .env("CKN_OUT_DIR", &dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).is_empty(), "data went to the file, not stdout");
    let written = fs::read_to_string(dir.join("runs/profile.json")).expect("file written");
    let rows: serde_json::Value = serde_json::from_str(&written).expect("valid json");
    assert_eq!(rows.as_array().unwrap().len(), 11);
    fs::remove_dir_all(&dir).unwrap();
}

#[test]
fn repeated_runs_are_byte_identical() {
    let args = [
        "deficit", "--N", "4", "--a", "0", "--b", "0.5", "--grid-T", "15", "--grid-n", "601",
        "--format", "json",
    ];
    let first = run(&args);
    let second = run(&args);
    assert!(first.status.success());
    assert_eq!(first.stdout, second.stdout);
}
