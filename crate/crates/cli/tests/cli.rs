use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_etso-bench"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn assert_diagnostic(o: &Output, code: i32) {
    assert_eq!(o.status.code(), Some(code), "stderr: {}", stderr(o));
    let err = stderr(o);
    assert_eq!(err.lines().count(), 1, "{err}");
    assert!(err.starts_with("etso-bench: error["), "{err}");
}

fn run_to(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "-q", "--output", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    bench(&args)
}

#[test]
fn run_writes_records_and_summary() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = bench(&[
        "run",
        "--config",
        "stationary-gp",
        "--policy",
        "etso",
        "--seeds",
        "1..2",
        "--output",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.lines().any(|l| l.starts_with("etso ")), "{stdout}");
    let records = fs::read_to_string(out.join("records.jsonl")).unwrap();
    // header plus rounds 0..=60 for two seeds
    assert_eq!(records.lines().count(), 1 + 2 * 61);
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("# schema=etso-summary/1\n"));
}

#[test]
fn missing_config_is_not_found_without_output() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    let o = run_to(&out, &["--config", "/nonexistent/run.toml"]);
    assert_diagnostic(&o, 3);
    assert!(!out.exists());
}

#[test]
fn error_codes_are_distinct() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("r");
    assert_diagnostic(
        &run_to(&out, &["--config", "2dtv", "--set", "trigger.bogus=1"]),
        4,
    );
    assert_diagnostic(
        &run_to(&out, &["--config", "2dtv", "--set", "learn_rounds=40"]),
        4,
    );
    assert_diagnostic(
        &run_to(&out, &["--config", "2dtv", "--policy", "random"]),
        4,
    );
    assert_diagnostic(&bench(&["run"]), 2);
    assert!(!out.exists());

    let blocker = tmp.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let o = run_to(
        &blocker.join("sub"),
        &[
            "--config",
            "stationary-gp",
            "--policy",
            "backup-only",
            "--seeds",
            "1",
        ],
    );
    assert_diagnostic(&o, 5);
}

#[test]
fn override_is_echoed_in_header() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_to(
        tmp.path(),
        &[
            "--config",
            "stationary-gp",
            "--policy",
            "etso",
            "--seeds",
            "1",
            "--set",
            "trigger.delta_b=0.05",
        ],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let records = fs::read_to_string(tmp.path().join("records.jsonl")).unwrap();
    let header: serde_json::Value = serde_json::from_str(records.lines().next().unwrap()).unwrap();
    assert_eq!(header["config"]["settings"]["trigger"]["delta_b"], 0.05);
    assert_eq!(header["schema"], "etso-records/1");
}

#[test]
fn run_config_file_is_accepted() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    fs::write(
        &cfg,
        "scenario = \"stationary-gp\"\npolicies = [\"backup-only\"]\nseeds = [4]\n[settings]\nhorizon = 20\n",
    )
    .unwrap();
    let out = tmp.path().join("r");
    let o = run_to(&out, &["--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let records = fs::read_to_string(out.join("records.jsonl")).unwrap();
    assert_eq!(records.lines().count(), 1 + 21);
}

#[test]
fn empty_records_is_schema_error() {
    let tmp = tempfile::tempdir().unwrap();
    let empty = tmp.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    assert_diagnostic(&bench(&["summarize", empty.to_str().unwrap()]), 6);
    let plots = tmp.path().join("plots");
    assert_diagnostic(
        &bench(&[
            "export-plot-data",
            empty.to_str().unwrap(),
            "--output",
            plots.to_str().unwrap(),
        ]),
        6,
    );
    let foreign = tmp.path().join("foreign.jsonl");
    fs::write(&foreign, "{\"schema\":\"other/9\",\"scenario\":\"x\"}\n").unwrap();
    assert_diagnostic(&bench(&["summarize", foreign.to_str().unwrap()]), 6);
}

#[test]
fn plot_data_from_one_policy_with_a_reset() {
    let tmp = tempfile::tempdir().unwrap();
    let o = run_to(
        tmp.path(),
        &["--config", "3dtv", "--policy", "etso", "--seeds", "1"],
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let plots = tmp.path().join("plots");
    let o = bench(&[
        "export-plot-data",
        "-q",
        tmp.path().join("records.jsonl").to_str().unwrap(),
        "--output",
        plots.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));

    let curve = fs::read_to_string(plots.join("3dtv_curve.csv")).unwrap();
    let mut lines = curve.lines();
    assert_eq!(lines.next(), Some("# schema=etso-curve/1"));
    assert_eq!(lines.next(), Some("round,etso_mean,etso_std"));
    assert_eq!(lines.count(), 61);

    let events = fs::read_to_string(plots.join("3dtv_events.csv")).unwrap();
    let resets: Vec<&str> = events.lines().filter(|l| l.ends_with(",reset")).collect();
    assert_eq!(resets, vec!["etso,1,31,reset"]);
}

#[test]
fn pipeline_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let args = [
        "--config",
        "ac65",
        "--policy",
        "etso,safeopt-budget",
        "--seeds",
        "1..2",
    ];
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run_to(&a, &args).status.success());
    let mut seq = args.to_vec();
    seq.push("--sequential");
    assert!(run_to(&b, &seq).status.success());
    for f in ["records.jsonl", "summary.csv"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }

    let records = a.join("records.jsonl");
    let s = bench(&["summarize", records.to_str().unwrap()]);
    assert!(s.status.success());
    assert_eq!(s.stdout, fs::read(a.join("summary.csv")).unwrap());

    let p1 = tmp.path().join("p1");
    let p2 = tmp.path().join("p2");
    for p in [&p1, &p2] {
        let o = bench(&[
            "export-plot-data",
            "-q",
            records.to_str().unwrap(),
            "-o",
            p.to_str().unwrap(),
        ]);
        assert!(o.status.success());
    }
    for f in ["ac65_curve.csv", "ac65_events.csv"] {
        assert_eq!(fs::read(p1.join(f)).unwrap(), fs::read(p2.join(f)).unwrap());
    }
}

#[test]
fn validate_scenario_reports_audit() {
    let o = bench(&["validate-scenario", "--config", "2dtv"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert!(stdout.contains("class Insignificant: ok"), "{stdout}");
    assert_diagnostic(&bench(&["validate-scenario", "--config", "missing"]), 3);
}
