//! End-to-end runs of the `hitchin` binary: golden reports, exit codes,
//! sidecar files and determinism.
//!
//! Set `UPDATE_GOLDEN=1` to rewrite the golden files from the current build.

use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_hitchin");

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn hitchin(args: &[&str]) -> Output {
    hitchin_with_env(args, &[])
}

fn hitchin_with_env(args: &[&str], env: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(BIN);
    cmd.args(args).current_dir(crate_dir()).env_remove("HITCHIN_WORKERS");
    for (k, v) in env {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn report(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("stdout is not a report ({e}): {}", String::from_utf8_lossy(&out.stderr))
    })
}

/// Cheap configurations whose reports are checked in under `tests/golden`.
const GOLDEN: &[(&str, &[&str])] = &[
    ("analyze_flat", &["analyze", "tests/data/flat.json"]),
    ("example_t3b3", &["example-t3b3"]),
    ("spectrum", &["spectrum"]),
    ("selftest", &["selftest"]),
    ("torelli_t6_n4", &["torelli-t6", "--n", "4"]),
    ("boundary_solve_8x4", &["boundary-solve", "--nx", "8", "--nt", "4"]),
];

fn golden_path(name: &str) -> PathBuf {
    crate_dir().join("tests/golden").join(format!("{name}.json"))
}

#[test]
fn reports_match_golden_files() {
    let update = std::env::var_os("UPDATE_GOLDEN").is_some();
    let mut mismatched = Vec::new();
    for (name, args) in GOLDEN {
        let out = hitchin(args);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        let path = golden_path(name);
        if update {
            std::fs::write(&path, &out.stdout).expect("golden file written");
            continue;
        }
        let want = std::fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        if want != out.stdout {
            mismatched.push(*name);
        }
    }
    assert!(mismatched.is_empty(), "reports differ from golden files: {mismatched:?}");
}

#[test]
fn golden_reports_carry_the_envelope() {
    for (name, args) in GOLDEN {
        let r: Value = serde_json::from_slice(&std::fs::read(golden_path(name)).expect("golden file")).expect("json");
        assert_eq!(r["schema"], "stableforms-report", "{name}");
        assert_eq!(r["version"], 1, "{name}");
        assert_eq!(r["command"], args[0], "{name}");
        assert_eq!(r["config"]["subcommand"], args[0], "{name}");
        assert_eq!(r["status"], "ok", "{name}");
        assert_eq!(r["input_hash"].as_str().map(str::len), Some(64), "{name}");
    }
}

#[test]
fn analyze_flat_form_reports_exact_dual() {
    let r = report(&hitchin(&["analyze", "tests/data/flat.json"]));
    let result = &r["result"];
    assert_eq!(result["lambda"], -4.0);
    assert_eq!(result["stable"], true);
    assert_eq!(result["exact"]["lambda"], "-4");
    let p = &result["exact"]["P_coeffs"]["coeffs"];
    assert_eq!(p["1 2 3"], "1");
    assert_eq!(p["1 5 6"], "-1");
    assert_eq!(p["2 4 6"], "1");
    assert_eq!(p["3 4 5"], "-1");
}

#[test]
fn unstable_form_exits_2_with_diagnostic() {
    let out = hitchin(&["analyze", "tests/data/chi.json"]);
    assert_eq!(out.status.code(), Some(2));
    let r = report(&out);
    assert_eq!(r["status"], "failed");
    assert_eq!(r["error"]["kind"], "NotStable");
    assert!(r["error"]["diagnostic"]["K_matrix"].is_array());
    assert!(r.get("result").is_none());
}

#[test]
fn invalid_configuration_exits_1() {
    for args in [
        &["boundary-solve", "--nx", "5"][..],
        &["torelli-t6", "--eps", "1.5"],
        &["spectrum", "--degree", "1"],
        &["analyze", "tests/data/missing.json"],
        &["spectrum", "--no-such-flag"],
        &["no-such-command"],
    ] {
        let out = hitchin(args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
        assert!(out.stdout.is_empty(), "{args:?}");
        assert!(!out.stderr.is_empty(), "{args:?}");
    }
}

#[test]
fn help_and_version_exit_0() {
    for args in [&["--help"][..], &["--version"], &["spectrum", "--help"]] {
        let out = hitchin(args);
        assert_eq!(out.status.code(), Some(0), "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn worker_count_is_validated_and_does_not_change_results() {
    for bad in ["0", "-3", "many"] {
        let out = hitchin_with_env(&["example-t3b3"], &[("HITCHIN_WORKERS", bad)]);
        assert_eq!(out.status.code(), Some(1), "{bad}");
    }
    let single = hitchin_with_env(&["torelli-t6", "--n", "4"], &[("HITCHIN_WORKERS", "1")]);
    let several = hitchin_with_env(&["torelli-t6", "--n", "4"], &[("HITCHIN_WORKERS", "3")]);
    assert_eq!(single.status.code(), Some(0));
    assert_eq!(single.stdout, several.stdout);
}

#[test]
fn out_flag_writes_report_csv_and_dump() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().join("nested/run.json");
    let dump = dir.path().join("field.json");
    let status = hitchin(&[
        "--out",
        out.to_str().expect("utf-8 path"),
        "torelli-t6",
        "--n",
        "4",
        "--dump",
        dump.to_str().expect("utf-8 path"),
    ]);
    assert_eq!(status.status.code(), Some(0), "{}", String::from_utf8_lossy(&status.stderr));
    assert!(status.stdout.is_empty());
    let r: Value = serde_json::from_slice(&std::fs::read(&out).expect("report")).expect("json");
    let csv = std::fs::read_to_string(out.with_extension("csv")).expect("csv sidecar");
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("iteration,residual,volume"));
    let iterations = r["result"]["iterations"].as_u64().expect("iterations") as usize;
    assert_eq!(lines.count(), iterations + 1);
    let field = stableforms::fields::read_dump(&dump).expect("dump reads back");
    assert_eq!(field.grade(), 3);
    assert_eq!(field.grid().npoints(), 4usize.pow(6));
    // the dump path is not part of the hashed configuration
    let plain = report(&hitchin(&["torelli-t6", "--n", "4"]));
    assert_eq!(plain["input_hash"], r["input_hash"]);
}

#[test]
fn spectrum_writes_per_mode_csv() {
    let dir = tempfile::tempdir().expect("temp dir");
    let out = dir.path().join("spectrum.json");
    let status = hitchin(&["--out", out.to_str().expect("utf-8 path"), "spectrum", "--degree", "4", "--mmax", "1"]);
    assert_eq!(status.status.code(), Some(0));
    let csv = std::fs::read_to_string(out.with_extension("csv")).expect("csv sidecar");
    let r: Value = serde_json::from_slice(&std::fs::read(&out).expect("report")).expect("json");
    let modes = r["result"]["modes"].as_array().expect("modes").len();
    assert!(csv.lines().count() > modes, "header plus at least one row per mode");
}

#[test]
fn repeated_runs_are_bit_identical() {
    for args in [&["example-t3b3"][..], &["boundary-solve", "--nx", "8", "--nt", "4", "--eps", "0"], &["analyze", "tests/data/chi.json"]] {
        let a = hitchin(args);
        let b = hitchin(args);
        assert_eq!(a.status.code(), b.status.code(), "{args:?}");
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn input_hash_covers_the_file_contents() {
    let dir = tempfile::tempdir().expect("temp dir");
    let copy = dir.path().join("form.json");
    std::fs::copy(crate_dir().join("tests/data/flat.json"), &copy).expect("copy");
    let path = copy.to_str().expect("utf-8 path");
    let before = report(&hitchin(&["analyze", path]));
    std::fs::write(&copy, r#"{"grade":3,"coeffs":{"4 5 6":2,"2 3 4":-2,"1 3 5":2,"1 2 6":-2}}"#).expect("write");
    let after = report(&hitchin(&["analyze", path]));
    assert_ne!(before["input_hash"], after["input_hash"]);
    assert_eq!(before["config"], after["config"]);
    assert_eq!(after["result"]["lambda"], -64.0);
}
