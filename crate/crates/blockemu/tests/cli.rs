use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use blockemu::cli::{parse_duration_ms, EXIT_INTERNAL, EXIT_MISSING, EXIT_USAGE};
use blockemu::mapfile::load_map;
use blockemu::report::{deterministic_view, COLUMNS};

const SYNTHETIC_MAP: &str = "# blocklite-map v1 host=synthetic\n\
1.1,600000,60000,30,200000,1000000\n\
2.0,30000,6000,30,10000,50000\n";

fn blockemu(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_blockemu"))
        .args(args)
        .env_remove("BLOCKEMU_MAP")
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_map(dir: &Path) -> String {
    let path = dir.join("map.txt");
    fs::write(&path, SYNTHETIC_MAP).unwrap();
    path.to_str().unwrap().to_owned()
}

#[test]
fn durations_need_units() {
    assert_eq!(parse_duration_ms("250ms"), Ok(250.0));
    assert_eq!(parse_duration_ms("1.5s"), Ok(1500.0));
    assert_eq!(parse_duration_ms("10m"), Ok(600_000.0));
    for bad in ["10", "s", "-1s", "abc ms", "inf s", "+5s"] {
        assert!(parse_duration_ms(bad).is_err(), "{bad}");
    }
}

#[test]
fn replay_without_map_is_a_missing_prerequisite() {
    let o = blockemu(&["run", "--nodes", "3", "--txns", "10"]);
    assert_eq!(o.status.code(), Some(EXIT_MISSING));
    assert!(stderr(&o).contains("--map"), "{}", stderr(&o));
}

#[test]
fn uncalibrated_difficulty_names_the_fix() {
    let dir = tempfile::tempdir().unwrap();
    let map = write_map(dir.path());
    let o = blockemu(&["run", "--nodes", "3", "--txns", "10", "--map", &map, "--difficulty", "3.3"]);
    assert_eq!(o.status.code(), Some(EXIT_MISSING));
    let err = stderr(&o);
    assert!(err.contains("3.3") && err.contains("blockemu calibrate"), "{err}");
}

#[test]
fn usage_errors_exit_two() {
    for args in [
        &["run", "--nodes", "0", "--txns", "10"][..],
        &["run", "--txns", "10"],
        &["select-difficulty", "--map", "x", "--target-interval", "60"],
        &["run", "--nodes", "2", "--txns", "1", "--mode", "quantum"],
        &["bogus"],
    ] {
        assert_eq!(blockemu(args).status.code(), Some(EXIT_USAGE), "{args:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let map = write_map(dir.path());
    let o = blockemu(&["run", "--nodes", "2", "--txns", "1", "--map", &map, "--consensus", "pbft"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
    let o = blockemu(&["run", "--nodes", "2", "--txns", "1", "--map", &map, "--latency-floor-ms", "0"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
}

#[test]
fn malformed_map_is_internal_and_missing_file_is_prerequisite() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.txt");
    fs::write(&bad, "not a map\n").unwrap();
    let o = blockemu(&["select-difficulty", "--map", bad.to_str().unwrap(), "--target-interval", "1s"]);
    assert_eq!(o.status.code(), Some(EXIT_INTERNAL));
    let gone = dir.path().join("gone.txt");
    let o = blockemu(&["select-difficulty", "--map", gone.to_str().unwrap(), "--target-interval", "1s"]);
    assert_eq!(o.status.code(), Some(EXIT_MISSING));
    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "# blocklite-map v1 host=h\n").unwrap();
    let o = blockemu(&["select-difficulty", "--map", empty.to_str().unwrap(), "--target-interval", "1s"]);
    assert_eq!(o.status.code(), Some(EXIT_MISSING));
}

#[test]
fn select_difficulty_prints_nearest_entry() {
    let dir = tempfile::tempdir().unwrap();
    let map = write_map(dir.path());
    let o = blockemu(&["select-difficulty", "--map", &map, "--target-interval", "10m"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "1.1 mean_ms=600000\n");
    let o = Command::new(env!("CARGO_BIN_EXE_blockemu"))
        .args(["select-difficulty", "--target-interval", "20s"])
        .env("BLOCKEMU_MAP", &map)
        .output()
        .unwrap();
    assert_eq!(stdout(&o), "2.0 mean_ms=30000\n");
}

#[test]
fn repeated_runs_produce_identical_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let map = write_map(dir.path());
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let out = dir.path().join(format!("{run}.csv"));
        let ledgers = dir.path().join(run);
        let o = blockemu(&[
            "run",
            "--nodes", "5",
            "--txns", "400",
            "--map", &map,
            "--seed", "42",
            "--block-size", "50",
            "--poisson",
            "--out", out.to_str().unwrap(),
            "--ledger-dir", ledgers.to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
        assert!(stdout(&o).contains("completed=true"));
        let text = fs::read_to_string(&out).unwrap();
        assert!(text.contains(COLUMNS));
        reports.push(text);
    }
    assert_eq!(deterministic_view(&reports[0]), deterministic_view(&reports[1]));
    for node in 0..5 {
        let name = format!("ledger_{node}.txt");
        let a = fs::read(dir.path().join("a").join(&name)).unwrap();
        let b = fs::read(dir.path().join("b").join(&name)).unwrap();
        assert_eq!(a, b, "{name}");
    }
}

#[test]
fn event_cap_stops_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let map = write_map(dir.path());
    let o = blockemu(&["run", "--nodes", "3", "--txns", "500", "--map", &map, "--max-events", "50"]);
    assert!(o.status.success());
    assert!(stdout(&o).contains("completed=false"));
    assert!(stderr(&o).contains("50 events"));
}

#[test]
fn calibrate_writes_a_loadable_map() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal.txt");
    let o = blockemu(&[
        "calibrate", "--difficulties", "1.0:1.1", "--samples", "4", "--budget-s", "30", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let map = load_map(&out).unwrap();
    assert_eq!(map.len(), 2);
    assert!(fs::read_to_string(&out).unwrap().starts_with("# blocklite-map v1 host="));
    assert!(map.entries().all(|s| s.samples == 4 && s.mean_ms > 0.0));
}

#[test]
fn calibration_range_expands_per_component() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m.csv");
    let o = blockemu(&["calibrate", "--difficulties", "0.0:1.2", "--samples", "5", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let listed: Vec<String> = load_map(&out).unwrap().entries().map(|s| s.difficulty.to_string()).collect();
    assert_eq!(listed, ["0.0", "0.1", "0.2", "1.0", "1.1", "1.2"]);
    let o = blockemu(&["calibrate", "--difficulties", "0.0:0.0", "--samples", "3"]);
    assert_eq!(o.status.code(), Some(EXIT_USAGE));
}

#[test]
fn host_scale_solve_times_still_finish() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("fast.txt");
    fs::write(&map, "# blocklite-map v1 host=h
1.0,0.0145,0.0057,5,0.0062,0.022
").unwrap();
    let o = blockemu(&[
        "run", "--nodes", "100", "--txns", "1000", "--difficulty", "1.0", "--mode", "replay",
        "--map", map.to_str().unwrap(), "--seed", "7",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(stdout(&o).contains("completed=true") && stdout(&o).contains("txns_committed=1000"));
    assert!(stderr(&o).contains("warning"));
}

#[test]
fn exhausted_calibration_writes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("cal.txt");
    let o = blockemu(&[
        "calibrate", "--difficulties", "7.0:7.1", "--samples", "2", "--budget-s", "0.01", "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(o.status.code(), Some(EXIT_INTERNAL));
    let err = stderr(&o);
    assert!(err.contains("7.0") && err.contains("budget"), "{err}");
    assert!(err.contains("7.1"), "{err}");
    assert!(!out.exists());
}
