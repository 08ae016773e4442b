//! End-to-end runs of the `quantrisk` binary on the small fixture panel.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const FIXTURES: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures");

/// Copies the fixture config and panel into a fresh directory, applying
/// `edit` to the config text.
fn workspace(edit: impl Fn(String) -> String) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(Path::new(FIXTURES).join("panel.csv"), dir.path().join("panel.csv")).unwrap();
    let text = fs::read_to_string(Path::new(FIXTURES).join("experiment.toml")).unwrap();
    let cfg = dir.path().join("experiment.toml");
    fs::write(&cfg, edit(text)).unwrap();
    (dir, cfg)
}

fn quantrisk(cfg: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_quantrisk"))
        .arg("--config")
        .arg(cfg)
        .args(args)
        .env_remove("QUANTRISK_OUTPUT")
        .output()
        .unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn records(path: &Path) -> Vec<csv::StringRecord> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|x| x.unwrap()).collect()
}

#[test]
fn full_run_reports_and_is_reproducible() {
    let (dir, cfg) = workspace(|t| t);
    ok(&quantrisk(&cfg, &["run", "--stage", "full"]));
    let out = dir.path().join("out");
    let reports = out.join("reports");
    for f in ["table_validation.csv", "table_test.csv", "fanchart.csv", "ledger.csv", "table_test.json"] {
        assert!(reports.join(f).exists(), "{f} missing");
    }

    // the grid point 0.0 is the benchmark itself
    let table = records(&reports.join("table_test.csv"));
    let zero: Vec<_> = table.iter().filter(|r| &r[2] == "0.0").collect();
    assert_eq!(zero.len(), 3);
    for r in zero {
        assert_eq!(r[4].parse::<f64>().unwrap(), 0.0);
        assert_eq!(&r[6], "light");
        assert_eq!(&r[7], "even");
    }
    // 11 grid points per quantile plus the naive row
    assert_eq!(table.len(), 3 * 12);

    // ledger: naive plus every distinct grid configuration, per quantile
    let ledger = records(&reports.join("ledger.csv"));
    for tau in ["0.1", "0.5", "0.9"] {
        let rows: Vec<_> = ledger.iter().filter(|r| &r[1] == tau).collect();
        assert!(rows.len() >= 2, "tau {tau}: {} ledger rows", rows.len());
        assert_eq!(rows.iter().filter(|r| &r[10] == "true").count(), 1, "tau {tau}");
        assert!(rows.iter().all(|r| &r[11] == "done"));
    }

    // same seed, fresh directory: byte-identical reports
    let (dir2, cfg2) = workspace(|t| t);
    ok(&quantrisk(&cfg2, &["run"]));
    for f in ["table_validation.csv", "table_test.csv", "fanchart.csv", "ledger.csv"] {
        let a = fs::read(reports.join(f)).unwrap();
        let b = fs::read(dir2.path().join("out/reports").join(f)).unwrap();
        assert!(a == b, "{f} differs between identical runs");
    }

    // a different seed changes the fitted models, and the hash
    let other = dir.path().join("other");
    ok(&quantrisk(&cfg, &["--seed", "8", "--output", other.to_str().unwrap(), "run"]));
    let a = fs::read(reports.join("fanchart.csv")).unwrap();
    let b = fs::read(other.join("reports/fanchart.csv")).unwrap();
    assert_ne!(a, b);
}

#[test]
fn rerun_only_repeats_missing_jobs() {
    let (dir, cfg) = workspace(|t| t);
    ok(&quantrisk(&cfg, &["run", "--stage", "validate"]));
    let jobs = dir.path().join("out/jobs/validate");
    let mut files: Vec<PathBuf> = fs::read_dir(&jobs).unwrap().map(|e| e.unwrap().path()).collect();
    files.sort();
    assert!(files.len() >= 2);
    let victim = files[0].clone();
    let keep = files[1].clone();
    let victim_bytes = fs::read(&victim).unwrap();
    let keep_mtime = fs::metadata(&keep).unwrap().modified().unwrap();
    fs::remove_file(&victim).unwrap();

    // mtime granularity on some filesystems is coarse
    std::thread::sleep(std::time::Duration::from_millis(1100));
    ok(&quantrisk(&cfg, &["run", "--stage", "validate"]));
    assert_eq!(fs::read(&victim).unwrap(), victim_bytes, "rerun job changed its result");
    assert_eq!(fs::metadata(&keep).unwrap().modified().unwrap(), keep_mtime, "finished job was rerun");

    // a second idle rerun rewrites nothing either
    let victim_mtime = fs::metadata(&victim).unwrap().modified().unwrap();
    ok(&quantrisk(&cfg, &["run", "--stage", "validate"]));
    assert_eq!(fs::metadata(&victim).unwrap().modified().unwrap(), victim_mtime);
}

#[test]
fn sorted_fanchart_never_crosses() {
    let (dir, cfg) = workspace(|t| t);
    ok(&quantrisk(&cfg, &["run", "--stage", "test"]));
    ok(&quantrisk(&cfg, &["report", "--kind", "ledger"]));
    ok(&quantrisk(&cfg, &["report", "--kind", "fanchart", "--sort-quantiles"]));
    let rows = records(&dir.path().join("out/reports/fanchart.csv"));
    // 36 validation and 36 test origins
    assert_eq!(rows.len(), 72);
    for r in &rows {
        let q: Vec<f64> = (5..8).map(|i| r[i].parse().unwrap()).collect();
        assert!(q.windows(2).all(|w| w[0] <= w[1]), "crossing at {}: {q:?}", &r[1]);
    }
}

#[test]
fn report_before_run_names_missing_artifacts() {
    let (_dir, cfg) = workspace(|t| t);
    let out = quantrisk(&cfg, &["report", "--kind", "table"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("missing artifacts"), "{}", stderr(&out));
}

#[test]
fn missing_data_file_is_a_data_error() {
    let (_dir, cfg) = workspace(|t| t.replace("path = \"panel.csv\"", "path = \"nowhere.csv\""));
    let out = quantrisk(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("nowhere.csv"), "{}", stderr(&out));
}

#[test]
fn test_end_past_the_last_target_is_a_config_error() {
    let (_dir, cfg) = workspace(|t| t.replace("horizon = 1", "horizon = 12").replace("t3 = \"2011-12\"", "t3 = \"2012-06\""));
    let out = quantrisk(&cfg, &["run"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("invalid split"), "{}", stderr(&out));
    assert!(stderr(&out).contains("2012-06"), "{}", stderr(&out));
}

#[test]
fn unknown_keys_are_rejected() {
    let (_dir, cfg) = workspace(|t| t.replace("[train]", "[train]\nepocs = 3"));
    let out = quantrisk(&cfg, &["ingest"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("epocs"), "{}", stderr(&out));
}

#[test]
fn output_dir_of_another_config_is_refused() {
    let (dir, cfg) = workspace(|t| t);
    ok(&quantrisk(&cfg, &["ingest"]));
    let other = dir.path().join("other.toml");
    let text = fs::read_to_string(&cfg).unwrap().replace("horizon = 1", "horizon = 2");
    fs::write(&other, text).unwrap();
    let out = quantrisk(&other, &["ingest"]);
    assert_eq!(out.status.code(), Some(1), "{}", stderr(&out));
    assert!(stderr(&out).contains("fresh output directory"), "{}", stderr(&out));
}

#[test]
fn ingest_summarizes_and_dumps_the_initial_window() {
    let (dir, cfg) = workspace(|t| t);
    let dump = dir.path().join("std.csv");
    let out = quantrisk(&cfg, &["ingest", "--dump-standardized", dump.to_str().unwrap()]);
    ok(&out);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("predictors 4"), "{text}");
    assert!(text.contains("NOISE: 3"), "{text}");
    assert!(text.contains("36 validation and 36 test forecasts"), "{text}");

    let rows = records(&dump);
    assert!(!rows.is_empty());
    for col in 1..5 {
        let xs: Vec<f64> = rows.iter().map(|r| r[col].parse().unwrap()).collect();
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        assert!(mean.abs() < 1e-9, "column {col} mean {mean}");
    }
}

#[test]
fn output_env_overrides_config_but_not_flag() {
    let (dir, cfg) = workspace(|t| t);
    let env_dir = dir.path().join("from-env");
    let out = Command::new(env!("CARGO_BIN_EXE_quantrisk"))
        .arg("--config")
        .arg(&cfg)
        .arg("ingest")
        .env("QUANTRISK_OUTPUT", &env_dir)
        .output()
        .unwrap();
    ok(&out);
    assert!(env_dir.join("ingest.json").exists());
    assert!(!dir.path().join("out").exists());

    let flag_dir = dir.path().join("from-flag");
    let out = Command::new(env!("CARGO_BIN_EXE_quantrisk"))
        .arg("--config")
        .arg(&cfg)
        .args(["--output", flag_dir.to_str().unwrap(), "ingest"])
        .env("QUANTRISK_OUTPUT", &env_dir)
        .output()
        .unwrap();
    ok(&out);
    assert!(flag_dir.join("ingest.json").exists());
}
