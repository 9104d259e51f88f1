use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use engage_core::fixtures::SAMPLE_REPORT;
use engage_core::ingest::{scan_path, ScanFilter};
use engage_core::simulator::wire::agent;

fn engage() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_engage"));
    cmd.env_remove("ENGAGE_SEED").env("ENGAGE_LOG", "warn");
    cmd
}

fn run(args: &[&str]) -> Output {
    engage().args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn simulate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a.ndjson"), dir.path().join("b.ndjson"));
    assert!(run(&[
        "simulate",
        "--sessions",
        "100",
        "--seed",
        "7",
        "--out",
        p(&a)
    ])
    .status
    .success());
    assert!(run(&[
        "simulate",
        "--sessions",
        "100",
        "--seed",
        "7",
        "--out",
        p(&b)
    ])
    .status
    .success());
    let bytes = std::fs::read(&a).unwrap();
    assert!(!bytes.is_empty());
    assert_eq!(bytes, std::fs::read(&b).unwrap());
}

#[test]
fn flags_override_the_environment() {
    let from_env = engage()
        .env("ENGAGE_SEED", "9")
        .args(["simulate", "--sessions", "3"])
        .output()
        .unwrap();
    let from_flag = engage()
        .env("ENGAGE_SEED", "1")
        .args(["simulate", "--sessions", "3", "--seed", "9"])
        .output()
        .unwrap();
    let default = run(&["simulate", "--sessions", "3"]);
    assert_eq!(from_env.stdout, from_flag.stdout);
    assert_ne!(from_env.stdout, default.stdout);
}

#[test]
fn zero_sessions_give_an_empty_log() {
    let o = run(&["simulate", "--sessions", "0"]);
    assert!(o.status.success());
    assert!(o.stdout.is_empty());
}

#[test]
fn bot_profile_has_no_engagement_reports() {
    let o = run(&["simulate", "--sessions", "50", "--profile", "bot"]);
    assert!(o.status.success());
    let log = stdout(&o);
    assert!(!log.is_empty());
    assert!(!log.contains("engagement_report"));
}

#[test]
fn unknown_profile_fails() {
    let o = run(&["simulate", "--profile", "no-such-profile"]);
    assert!(!o.status.success());
}

#[test]
fn mine_sample_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    std::fs::write(&log, SAMPLE_REPORT.replace('\n', "") + "\n").unwrap();
    let o = run(&["mine", "--input", p(&log)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let table = stdout(&o);
    let mut lines = table.lines();
    assert_eq!(
        lines.next(),
        Some("itemId,attentionSeconds,avgScrollDepthPercent,pageLoadImpressions,visibleImpressions,clicks,ctrPercent")
    );
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(row[0], "10");
    assert_eq!(row[1], "15");

    let o = run(&["mine", "--input", p(&log), "--format", "json"]);
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(rows[0]["attentionSeconds"], 15);
}

#[test]
fn mine_empty_log_is_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("empty.ndjson");
    std::fs::write(&log, "").unwrap();
    let o = run(&["mine", "--input", p(&log)]);
    assert!(o.status.success());
    assert_eq!(stdout(&o).lines().count(), 1);
}

#[test]
fn mine_reports_corrupt_lines() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    let good = SAMPLE_REPORT.replace('\n', "");
    std::fs::write(&log, format!("{good}\n{{\"truncated\": \n{good}\n")).unwrap();
    let o = run(&["mine", "--input", p(&log)]);
    assert!(o.status.success());
    assert!(
        stderr(&o).contains("warning: 1 corrupt records skipped"),
        "{}",
        stderr(&o)
    );
    assert!(stdout(&o).lines().nth(1).unwrap().starts_with("10,30,"));
}

#[test]
fn mine_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    assert!(run(&[
        "simulate",
        "--sessions",
        "40",
        "--profile",
        "mixed",
        "--out",
        p(&log)
    ])
    .status
    .success());
    let a = run(&["mine", "--input", p(&log)]);
    let b = run(&["mine", "--input", p(&log)]);
    assert!(a.status.success());
    assert!(stdout(&a).lines().count() > 1);
    assert_eq!(a.stdout, b.stdout);
}

fn metric(csv: &str, name: &str) -> String {
    csv.lines()
        .find_map(|l| l.strip_prefix(&format!("{name},")))
        .unwrap_or_else(|| panic!("{name} missing in {csv}"))
        .to_string()
}

#[test]
fn compare_totals_fixtures() {
    let dir = tempfile::tempdir().unwrap();
    let attention = dir.path().join("attention.json");
    std::fs::write(
        &attention,
        r#"{"pageLoadAttentionSeconds": 76008, "pingAttentionSeconds": 21805}"#,
    )
    .unwrap();
    let o = run(&["compare", "--totals", p(&attention)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let ratio: f64 = metric(&stdout(&o), "attentionRatio").parse().unwrap();
    assert!((ratio - 3.48).abs() <= 0.01);

    let impressions = dir.path().join("impressions.json");
    std::fs::write(
        &impressions,
        r#"{"pageLoadImpressions": 26490, "visibleImpressions": 17650}"#,
    )
    .unwrap();
    let o = run(&["compare", "--totals", p(&impressions), "--format", "json"]);
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let reduction = report["impressionReductionPercent"].as_f64().unwrap();
    assert!((reduction - 33.37).abs() <= 0.01);
    assert!(report["attentionRatio"].is_null());
}

#[test]
fn compare_empty_input_is_insufficient_data() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("empty.ndjson");
    std::fs::write(&log, "").unwrap();
    let o = run(&["compare", "--input", p(&log)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("insufficient data"), "{}", stderr(&o));

    let totals = dir.path().join("zero.json");
    std::fs::write(&totals, "{}").unwrap();
    let o = run(&["compare", "--totals", p(&totals)]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("insufficient data"));
}

#[test]
fn compare_writes_the_percentile_curve() {
    let dir = tempfile::tempdir().unwrap();
    let log = dir.path().join("log.ndjson");
    let curve = dir.path().join("curve.txt");
    assert!(run(&[
        "simulate",
        "--sessions",
        "300",
        "--profile",
        "coupled",
        "--out",
        p(&log)
    ])
    .status
    .success());
    let a = run(&["compare", "--input", p(&log), "--curve", p(&curve)]);
    assert!(a.status.success(), "{}", stderr(&a));
    let ratio: f64 = metric(&stdout(&a), "attentionRatio").parse().unwrap();
    assert!(ratio >= 1.0);
    let text = std::fs::read_to_string(&curve).unwrap();
    let points: Vec<(u32, f64)> = text
        .lines()
        .filter(|l| !l.starts_with('#'))
        .map(|l| {
            let mut cols = l.split_whitespace();
            (
                cols.next().unwrap().parse().unwrap(),
                cols.next().unwrap().parse().unwrap(),
            )
        })
        .collect();
    assert_eq!(points.len(), 20);
    assert_eq!(points.last().unwrap().0, 100);
    assert!(points.iter().all(|(_, d)| (0.0..=100.0).contains(d)));
    let b = run(&["compare", "--input", p(&log)]);
    assert_eq!(a.stdout, b.stdout);
}

#[cfg(unix)]
#[test]
fn serve_drains_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut child = engage()
        .args(["serve", "--port", "0", "--data-dir", p(&data)])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let banner = lines.next().unwrap().unwrap();
    let base = banner.strip_prefix("listening on ").unwrap().to_string();

    let mut health = agent().get(format!("{base}/v1/health")).call().unwrap();
    assert_eq!(health.status().as_u16(), 200);
    assert!(health
        .body_mut()
        .read_to_string()
        .unwrap()
        .contains("\"ok\""));

    let sim = run(&[
        "simulate",
        "--sessions",
        "20",
        "--seed",
        "3",
        "--post",
        &format!("{base}/v1/events"),
    ]);
    assert!(sim.status.success(), "{}", stderr(&sim));
    let wire: serde_json::Value = serde_json::from_slice(&sim.stdout).unwrap();
    let accepted = wire["accepted"].as_u64().unwrap();
    assert!(accepted > 0);

    let killed = Command::new("kill")
        .args(["-INT", &child.id().to_string()])
        .status()
        .unwrap();
    assert!(killed.success());
    assert!(child.wait().unwrap().success());
    let stats: serde_json::Value = serde_json::from_str(&lines.next().unwrap().unwrap()).unwrap();
    assert_eq!(stats["appended"].as_u64(), Some(accepted));
    let stored = scan_path(&data, &ScanFilter::all()).unwrap();
    assert_eq!(stored.events.len() as u64, accepted);
    assert!(stored.corrupt.is_empty());
}

#[test]
fn serve_on_an_occupied_port_fails() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["serve", "--port", &port, "--data-dir", p(dir.path())]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("could not bind"), "{}", stderr(&o));
}
