use std::path::Path;
use std::process::{Command, Output};

fn epiwatch(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_epiwatch"))
        .args(args)
        .env_clear()
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, preset: &str, name: &str) -> std::path::PathBuf {
    let out = dir.join(name);
    let o = epiwatch(&["fixture-gen", "--preset", preset, "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    out
}

#[test]
fn genomic_round_trip_reports_delta_share() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("fx.tsv");
    let o = epiwatch(&[
        "fixture-gen",
        "--preset",
        "table8",
        "--seed",
        "7",
        "--out",
        path(&fx),
    ]);
    assert_eq!(o.status.code(), Some(0));
    let o = epiwatch(&["genomic-report", "--input", path(&fx)]);
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).contains("Delta\tVOC\t2814\t51.21\n"));
}

#[test]
fn epi_report_groups_by_state() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path(), "table1", "f.csv");
    let o = epiwatch(&[
        "epi-report",
        "--input",
        path(&fx),
        "--indigenous-only",
        "--group-by",
        "state",
        "--format",
        "tsv",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let text = stdout(&o);
    assert!(text.starts_with("state_code\tmunicipality_code\tsex\tage_group\t"));
    let rows = text.lines().filter(|l| !l.starts_with('#')).count() - 1;
    assert_eq!(rows, 32 + 1, "one row per state plus the national stratum");
    let stderr = String::from_utf8_lossy(&o.stderr);
    assert!(stderr.contains("58739 rows read"));
    assert!(stderr.contains("13.5%"));
}

#[test]
fn annex_tables_match_presets() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path(), "sveerv-national", "f.csv");
    let o = epiwatch(&["epi-report", "-i", path(&fx), "--table", "t1"]);
    assert!(stdout(&o).contains("\nTotal\t30022\t28717\t58739\n"));
    let o = epiwatch(&["epi-report", "-i", path(&fx), "--table", "t3"]);
    assert!(stdout(&o).contains("\nTotal\t14761\t6533\t21294\n"));
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let fx = dir.path().join("r.csv");
    assert!(epiwatch(&[
        "fixture-gen",
        "--rows",
        "20000",
        "--seed",
        "3",
        "--out",
        path(&fx)
    ])
    .status
    .success());
    let args = |t: &'static str| {
        vec![
            "epi-report",
            "-i",
            path(&fx),
            "--group-by",
            "state,sex",
            "--format",
            "json",
            "--threads",
            t,
        ]
    };
    let one = epiwatch(&args("1"));
    let many = epiwatch(&args("5"));
    assert!(one.status.success());
    assert_eq!(one.stdout, many.stdout);
    assert_eq!(one.stdout, epiwatch(&args("1")).stdout);
}

#[test]
fn rank_severity_and_scatter_run() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path(), "table4", "f.csv");
    let o = epiwatch(&[
        "rank",
        "-i",
        path(&fx),
        "--metric",
        "tgi3",
        "--format",
        "markdown",
    ]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("| rank | state_code | state | tgi3_pct |"));
    let o = epiwatch(&["severity", "-i", path(&fx)]);
    assert!(stdout(&o).starts_with("state_code\tstate\ttgi1\ttgi2\ttgi3\n"));
    let o = epiwatch(&[
        "scatter",
        "-i",
        path(&fx),
        "--out",
        path(&dir.path().join("s.tsv")),
    ]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(epiwatch(&["epi-report", "--bogus"]).status.code(), Some(1));
    assert_eq!(epiwatch(&[]).status.code(), Some(1));
    assert_eq!(
        epiwatch(&["fixture-gen", "--preset", "table1", "--rows", "5"])
            .status
            .code(),
        Some(1)
    );
    // rejected before the missing input is opened
    let o = epiwatch(&[
        "epi-report",
        "-i",
        "/nonexistent.csv",
        "--onset-from",
        "2021-02-01",
        "--onset-to",
        "2021-01-01",
    ]);
    assert_eq!(o.status.code(), Some(1));
    let o = epiwatch(&["epi-report", "-i", "/nonexistent.csv", "--table", "t8"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(epiwatch(&["--help"]).status.code(), Some(0));
    assert_eq!(epiwatch(&["--version"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n").unwrap();
    let o = epiwatch(&["validate", "-i", path(&bad)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("missing required column"));
    assert_eq!(
        epiwatch(&["epi-report", "-i", "/nonexistent.csv"])
            .status
            .code(),
        Some(2)
    );
}

#[test]
fn validate_summarises_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let fx = gen(dir.path(), "table1", "f.csv");
    let mut text = std::fs::read_to_string(&fx).unwrap();
    let header_end = text.find('\n').unwrap() + 1;
    let first_row_end = header_end + text[header_end..].find('\n').unwrap() + 1;
    let row: Vec<&str> = text[header_end..first_row_end - 1].split(',').collect();
    let mut broken = row.clone();
    broken[21] = "42";
    text.push_str(&broken.join(","));
    text.push('\n');
    std::fs::write(&fx, text).unwrap();
    let o = epiwatch(&["validate", "-i", path(&fx)]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert!(out.contains("rows read: 58740\n"));
    assert!(out.contains("rejected: 1\n"));
}
