use std::path::Path;
use std::process::{Command, Output};

fn intentfix(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_intentfix"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout:\n{}\nstderr:\n{}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn failed(out: &Output) -> String {
    assert!(!out.status.success(), "expected failure");
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn training_is_deterministic_and_reports_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&intentfix(
        &["--out", "rec", "--seed", "4", "corpus", "--windows", "60"],
        d,
    ));
    let sessions = [
        "--session",
        "rec/fixating.csv,rec/fixating_events.csv",
        "--session",
        "rec/scanning.csv",
    ];
    let mut runs = Vec::new();
    for out in ["a", "b"] {
        let mut args = vec!["--out", out, "--seed", "9", "train"];
        args.extend(sessions);
        let stdout = ok(&intentfix(&args, d));
        assert!(stdout.contains("intent 60, no_intent 60"), "{stdout}");
        let acc: f64 = stdout
            .lines()
            .find_map(|l| l.strip_prefix("held-out accuracy: "))
            .and_then(|l| l.split_whitespace().next())
            .unwrap()
            .parse()
            .unwrap();
        assert!(acc >= 0.9);
        runs.push(std::fs::read(d.join(out).join("model.json")).unwrap());
    }
    assert_eq!(runs[0], runs[1]);
}

#[test]
fn training_without_confirmations_names_the_missing_class() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&intentfix(&["--out", "rec", "corpus", "--windows", "10"], d));
    let err = failed(&intentfix(&["--out", "m", "train", "--session", "rec/scanning.csv"], d));
    assert!(err.contains("class absent"), "{err}");
    assert!(!d.join("m/model.json").exists());
}

#[test]
fn experiment_writes_logs_and_a_reproducible_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(
        d.join("run.json"),
        r#"{"grid": "validation", "n_trials": 3, "seed": 5}"#,
    )
    .unwrap();
    let mut reports = Vec::new();
    for out in ["r1", "r2"] {
        let stdout = ok(&intentfix(&["--config", "run.json", "--out", out, "experiment"], d));
        assert!(stdout.contains("adj. Wald"));
        let log = std::fs::read_to_string(d.join(out).join("trials.jsonl")).unwrap();
        assert_eq!(log.lines().filter(|l| l.contains(r#""kind":"trial""#)).count(), 18);
        let report = std::fs::read_to_string(d.join(out).join("report.json")).unwrap();
        let v: serde_json::Value = serde_json::from_str(&report).unwrap();
        let cells = v["cells"].as_array().unwrap();
        assert_eq!(cells.len(), 6);
        for c in cells {
            let s = &c["success"];
            assert!(s["point"].is_f64() && s["ci_low"].is_f64() && s["ci_high"].is_f64());
        }
        let md = std::fs::read_to_string(d.join(out).join("report.md")).unwrap();
        assert_eq!(
            md.lines()
                .filter(|l| l.starts_with("| grasping") || l.starts_with("| cutting"))
                .count(),
            6
        );
        reports.push(report);
    }
    assert_eq!(reports[0], reports[1]);

    // the logs feed straight back into the report command
    let again = ok(&intentfix(&["report", "r1/trials.jsonl"], d));
    assert!(again.contains("| grasping / no assistance | 3 |"));
}

#[test]
fn report_renders_the_failure_rate_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&intentfix(&["--out", "f", "report", "--fixture", "table2"], dir.path()));
    assert!(stdout.contains("cutting: mean 59%"), "{stdout}");
    assert!(stdout.contains("lowest 50% at set(s) 2, 6, 7"));
    assert!(stdout.contains("grasping: mean 54%"));
    assert!(stdout.contains("lowest 38% at set(s) 5"));
    assert!(dir.path().join("f/report.json").exists());
}

#[test]
fn report_rejects_empty_logs_and_warns_on_single_trials() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("empty.jsonl"), "").unwrap();
    let err = failed(&intentfix(&["report", "empty.jsonl"], d));
    assert!(err.contains("no trials"), "{err}");

    let stdout = ok(&intentfix(
        &["--out", "one", "--seed", "3", "simulate", "--task", "cutting"],
        d,
    ));
    assert!(stdout.contains("cutting / no assistance"), "{stdout}");
    let out = intentfix(&["report", "one/trial.jsonl"], d);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stderr).contains("degenerate"));
}

#[test]
fn simulation_is_reproducible_from_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let args = |out| {
        vec![
            "--out",
            out,
            "--seed",
            "21",
            "simulate",
            "--assist",
            "guidance-force",
            "--intent",
        ]
    };
    let a = ok(&intentfix(&args("x"), d));
    let b = ok(&intentfix(&args("y"), d));
    assert_eq!(a.replace("y/", "x/"), b.replace("y/", "x/"));
    assert_eq!(
        std::fs::read(d.join("x/trial.jsonl")).unwrap(),
        std::fs::read(d.join("y/trial.jsonl")).unwrap()
    );
}

#[test]
fn bad_config_points_at_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::write(d.join("bad.json"), r#"{"fixture": {"ithresh": "high"}}"#).unwrap();
    let err = failed(&intentfix(&["--config", "bad.json", "experiment"], d));
    assert!(err.contains("fixture.ithresh"), "{err}");
    std::fs::write(d.join("typo.json"), r#"{"n_trails": 3}"#).unwrap();
    let err = failed(&intentfix(&["--config", "typo.json", "experiment"], d));
    assert!(err.contains("n_trails"), "{err}");
}
