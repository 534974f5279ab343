//! End-to-end exercise of the binary: generate-fleet -> run -> report,
//! plus the documented exit codes (0 success, 2 input errors, 3 solver).

use std::path::Path;
use std::process::{Command, Output};

use brpsim::market::{synthesize_stress_series, write_market_data, RegState, SpikeSpec};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_brpsim"))
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("process terminated by signal")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// One-day, one-region, two-group setup small enough to run in seconds.
fn write_tiny_case(dir: &Path) {
    let spikes = [SpikeSpec {
        isps: (78..84).collect(),
        lambda_down: -300.0,
        state: RegState::Long,
    }];
    let market = synthesize_stress_series(1, &spikes, 5).unwrap();
    write_market_data(&market, &dir.join("market.csv")).unwrap();
    std::fs::write(
        dir.join("config.toml"),
        r#"
retail_price = 250.0
eta = 0.95
horizon_days = 1
market_file = "market.csv"
alt_mechanism = "dual_price"
scope = "local"

[seeds]
fleet = 3
da = 4
rt = 5

[scenarios]
da_count = 2
da_sigma_rel = 0.2
rt_up_count = 2
rt_down_count = 2
rt_sigma_rel = 0.5

[rt]
lookahead_isps = 8

[dso]
worst_case = true
threshold = 1.0

[mobility]
horizon_days = 1

[[regions]]
id = "A"
line_rating_mw = 1.0
baseload_profile_mw = [0.4]
n_batteries = 2
group_size = 10
"#,
    )
    .unwrap();
}

#[test]
fn full_pipeline_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_case(dir.path());
    let config = dir.path().join("config.toml");
    let out_dir = dir.path().join("out");

    let out = bin()
        .args(["generate-fleet", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("fleet_g000.csv").is_file());
    assert!(out_dir.join("fleet_g001.csv").is_file());

    let out = bin()
        .args(["run", "--config"])
        .arg(&config)
        .args(["--case", "proposed-dp", "--scope", "local", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for file in [
        "benefit_summary.csv",
        "congestion_stats.csv",
        "loading_trace.csv",
        "deviation_scatter.csv",
        "settlement_ledger.csv",
        "loading_proposed-dp-local_A.svg",
    ] {
        assert!(out_dir.join(file).is_file(), "missing {file}");
    }

    let out = bin()
        .args(["report", "--in"])
        .arg(&out_dir)
        .args(["--format", "csv"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("congestion_report.csv").is_file());
    let summary = String::from_utf8_lossy(&out.stdout).into_owned();
    assert!(summary.starts_with("region,isps,days,weeks,hours"));

    let out = bin()
        .args(["report", "--in"])
        .arg(&out_dir)
        .args(["--format", "svg"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(out_dir.join("loading_A.svg").is_file());
}

#[test]
fn missing_config_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin()
        .args(["run", "--config", "/nonexistent/config.toml", "--case", "sp", "--out"])
        .arg(dir.path())
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn proposed_case_without_congestion_scope_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_case(dir.path());
    let out = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("config.toml"))
        .args(["--case", "proposed-dp", "--scope", "none", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
    assert!(stderr(&out).contains("scope"));
}

#[test]
fn market_horizon_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_case(dir.path());
    // Two market days against horizon_days = 1.
    let market = synthesize_stress_series(2, &[], 5).unwrap();
    write_market_data(&market, &dir.path().join("market.csv")).unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("config.toml"))
        .args(["--case", "sp", "--out"])
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}

#[test]
fn malformed_fleet_file_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    write_tiny_case(dir.path());
    let out_dir = dir.path().join("out");
    std::fs::create_dir_all(&out_dir).unwrap();
    std::fs::write(out_dir.join("fleet_g000.csv"), "not,a,fleet\n1,2,3\n").unwrap();
    let out = bin()
        .args(["run", "--config"])
        .arg(dir.path().join("config.toml"))
        .args(["--case", "sp", "--out"])
        .arg(&out_dir)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2, "{}", stderr(&out));
}
