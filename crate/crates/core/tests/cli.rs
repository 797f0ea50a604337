use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};

use hillmsa::cli::{compute, export, read_report, write_outputs, ExportFormat, LoadedConfig, OUTPUT_DIR_ENV};
use hillmsa::operator::TWO_PI_SQ;

fn reference_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("configs/reference.toml")
}

fn scratch(name: &str) -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_hillmsa"));
    c.stdout(Stdio::null());
    c
}

fn small_config(dir: &Path, edit: impl Fn(String) -> String) -> PathBuf {
    let text = fs::read_to_string(reference_path())
        .unwrap()
        .replace("step = 0.01", "step = 0.05")
        .replace("gaps = [1, 2, 3]", "gaps = [1]");
    let path = dir.join("config.toml");
    fs::write(&path, edit(text)).unwrap();
    path
}

#[test]
fn band_writes_four_files_and_env_overrides_output() {
    let dir = scratch("band_env");
    let cfg = small_config(&dir, |t| t);
    let out = dir.join("elsewhere");
    let status = bin()
        .args(["band", cfg.to_str().unwrap(), "--threads", "2"])
        .env(OUTPUT_DIR_ENV, &out)
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    for f in ["band.csv", "gaps.csv", "report.json", "run.log"] {
        let p = out.join(f);
        assert!(fs::metadata(&p).unwrap().len() > 0, "{}", p.display());
    }
    let band = fs::read_to_string(out.join("band.csv")).unwrap();
    assert_eq!(band.lines().next(), Some("k,E,scale,class"));
    let gaps = fs::read_to_string(out.join("gaps.csv")).unwrap();
    assert_eq!(gaps.lines().next(), Some("m,k_m,E_minus,E_plus,width,bound"));
    assert_eq!(gaps.lines().count(), 2);
}

#[test]
fn config_errors_exit_two() {
    let dir = scratch("bad_config");
    let cfg = small_config(&dir, |t| t.replace("omega = [\"1\"]", "omega = [\"one\"]"));
    let out = bin().args(["band", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("\"error\":\"config\""), "{err}");
    let missing = bin().args(["verify", "/nonexistent.toml", "--suite", "schur"]).status().unwrap();
    assert_eq!(missing.code(), Some(2));
}

#[test]
fn failed_checks_exit_one() {
    let dir = scratch("check_failure");
    // A pair window this wide puts several partners near 0 at every k.
    let cfg = small_config(&dir, |t| t.replace("truncation_r = 12.0", "truncation_r = 12.0\npair_factor = 1e4"));
    let status = bin()
        .args(["band", cfg.to_str().unwrap()])
        .env(OUTPUT_DIR_ENV, dir.join("out"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
    let log = fs::read_to_string(dir.join("out/run.log")).unwrap();
    assert!(log.contains("near-resonant partners"));
}

#[test]
fn verify_suite_reports_json() {
    let out = bin()
        .args(["verify", reference_path().to_str().unwrap(), "--suite", "dichotomy"])
        .stdout(Stdio::piped())
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v[0]["suite"], "dichotomy");
    assert_eq!(v[0]["passed"], true);
}

#[test]
fn reports_are_bit_for_bit_deterministic() {
    let loaded = LoadedConfig::from_path(&reference_path()).unwrap();
    let (a, b) = (scratch("det_a"), scratch("det_b"));
    write_outputs(&compute(&loaded).unwrap(), &a).unwrap();
    write_outputs(&compute(&loaded).unwrap(), &b).unwrap();
    for f in ["band.csv", "gaps.csv", "report.json", "run.log"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn report_embeds_config_and_hash() {
    let loaded = LoadedConfig::from_path(&reference_path()).unwrap();
    let r = compute(&loaded).unwrap();
    assert_eq!(r.config_text, fs::read_to_string(reference_path()).unwrap());
    assert_eq!(r.input_hash, loaded.input_hash());
    assert_eq!(r.schedule.s_max, 3);
    assert!(r.diophantine.is_some());
    assert!(r.passed);
}

#[test]
fn zero_coupling_band_csv_is_the_parabola() {
    let dir = scratch("zero_eps");
    let cfg = small_config(&dir, |t| t.replace("epsilon = 0.05", "epsilon = 0.0"));
    let loaded = LoadedConfig::from_path(&cfg).unwrap();
    write_outputs(&compute(&loaded).unwrap(), &dir).unwrap();
    let mut rd = csv::Reader::from_path(dir.join("band.csv")).unwrap();
    let mut rows = 0;
    for rec in rd.records() {
        let rec = rec.unwrap();
        let k: f64 = rec[0].parse().unwrap();
        let e: f64 = rec[1].parse().unwrap();
        assert_eq!(e, TWO_PI_SQ * k * k);
        assert_eq!(&rec[3], "simple");
        rows += 1;
    }
    assert_eq!(rows, 19);
}

#[test]
fn export_round_trips_and_handles_empty_gaps() {
    let dir = scratch("export");
    let cfg = small_config(&dir, |t| t.replace("gaps = [1]", "gaps = []"));
    let loaded = LoadedConfig::from_path(&cfg).unwrap();
    let report = compute(&loaded).unwrap();
    write_outputs(&report, &dir).unwrap();
    let json_dir = dir.join("json");
    export(&dir.join("report.json"), ExportFormat::Json, &json_dir).unwrap();
    let back = read_report(&json_dir.join("report.json")).unwrap();
    assert_eq!(back.band.k_samples.len(), report.band.k_samples.len());
    assert_eq!(back.band.audits, report.band.audits);
    assert_eq!(back.config, report.config);
    assert_eq!(
        fs::read(dir.join("report.json")).unwrap(),
        fs::read(json_dir.join("report.json")).unwrap()
    );
    let csv_dir = dir.join("csv");
    export(&dir.join("report.json"), ExportFormat::Csv, &csv_dir).unwrap();
    assert_eq!(
        fs::read_to_string(csv_dir.join("gaps.csv")).unwrap(),
        "m,k_m,E_minus,E_plus,width,bound\n"
    );
    assert_eq!(
        fs::read(dir.join("band.csv")).unwrap(),
        fs::read(csv_dir.join("band.csv")).unwrap()
    );
}

#[test]
fn export_via_binary() {
    let dir = scratch("export_bin");
    let cfg = small_config(&dir, |t| t);
    let out = dir.join("run");
    assert_eq!(
        bin().args(["band", cfg.to_str().unwrap()]).env(OUTPUT_DIR_ENV, &out).status().unwrap().code(),
        Some(0)
    );
    let status = bin()
        .args(["export", out.join("report.json").to_str().unwrap(), "--format", "csv", "--out"])
        .arg(dir.join("exported"))
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    assert!(dir.join("exported/band.csv").exists());
}
