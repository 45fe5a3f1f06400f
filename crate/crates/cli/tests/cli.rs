use std::process::{Command, Output};

fn hrc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hrc")).args(args).env("RUST_LOG", "warn").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn run_writes_a_log_and_report_reads_it_back() {
    let dir = tempfile::tempdir().unwrap();
    let logs = dir.path().join("logs");
    std::fs::create_dir(&logs).unwrap();
    let log = logs.join("one.ndjson");
    let out = hrc(&["run", "--robot", "reactive", "--human", "stubborn", "--seed", "4", "--duration", "5", "--log", log.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(stdout(&out).contains("reactive"));
    let report = hrc(&["report", logs.to_str().unwrap(), "--json"]);
    assert!(report.status.success());
    assert!(stdout(&report).contains("\"robot_kind\": \"reactive\""));
    let again = hrc(&["report", logs.to_str().unwrap(), "--json"]);
    assert_eq!(stdout(&report), stdout(&again));
}

#[test]
fn batch_then_series() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("spec.toml");
    std::fs::write(
        &spec,
        "n_episodes = 2\nhuman = \"uncertain\"\nrobots = [\"naive\", \"proactive_safe\"]\n[base]\nduration_s = 3\n",
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = hrc(&["batch", spec.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("report.json").exists());
    let series_dir = dir.path().join("series");
    let series = hrc(&["series", out_dir.join("logs").to_str().unwrap(), "--out", series_dir.to_str().unwrap()]);
    assert!(series.status.success());
    assert!(stdout(&series).contains("wrote 2 series files"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "n_goals = 0\n").unwrap();
    assert_eq!(hrc(&["run", "--config", bad.to_str().unwrap()]).status.code(), Some(1));
    assert_eq!(hrc(&["run", "--robot", "tank"]).status.code(), Some(1));
    assert_eq!(hrc(&["run", "--duration", "0.05"]).status.code(), Some(1));
    assert_eq!(hrc(&["report", dir.path().join("missing").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(hrc(&["run", "--config", dir.path().join("nope.toml").to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(hrc(&["--help"]).status.code(), Some(0));
}
