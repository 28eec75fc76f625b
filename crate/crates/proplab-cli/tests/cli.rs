use proplab::acceptance::{run_criterion, Part};
use proplab_cli::report::{canonical_json, emit_report, read_report, RunReport};
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_proplab")).args(args).output().expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.to_str().unwrap().to_string()
}

#[test]
fn unknown_subcommand_is_a_usage_error() {
    let o = run(&["bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
}

#[test]
fn flow_on_minkowski_conserves_p() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["flow", "--chart", "minkowski", "--xi", "1,1", "--smax", "10", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let mut r = csv::Reader::from_path(dir.path().join("flow.csv")).unwrap();
    let col = r.headers().unwrap().iter().position(|h| h == "p_drift").unwrap();
    let mut rows = 0;
    for rec in r.records() {
        let v: f64 = rec.unwrap()[col].parse().unwrap();
        assert!(v <= 1e-9);
        rows += 1;
    }
    assert_eq!(rows, 101);
}

#[test]
fn flow_reads_chart_and_seed_from_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"dim": 2, "metric": [["-1", "0"], ["0", "exp(0.2*x0)"]], "flow": {"xi": [-1, 1], "smax": 2}}"#,
    )
    .unwrap();
    let o = run(&["flow", "--config", cfg.to_str().unwrap(), "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let text = std::fs::read_to_string(dir.path().join("flow.csv")).unwrap();
    assert!(text.lines().nth(1).unwrap().contains("-1.000000000000e+00"));
}

#[test]
fn bad_inputs_exit_two() {
    assert_eq!(run(&["dirac", "clifford", "--n", "3"]).status.code(), Some(2));
    assert_eq!(run(&["flow", "--chart", "deSitter", "--xi", "1,1"]).status.code(), Some(2));
    assert_eq!(run(&["flow"]).status.code(), Some(2));
}

#[test]
fn io_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "x").unwrap();
    let o = run(&["dirac", "clifford", "--n", "2", "--out", &out_arg(&blocker)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains(blocker.to_str().unwrap()));
}

#[test]
fn dirac_beta_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["dirac", "beta", "--N", "0.2,1,0,0", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("beta.json")).unwrap()).unwrap();
    assert_eq!(v["class"], "spacelike");
    assert_eq!(v["indefinite"], true);
}

#[test]
fn kernel_csv_feeds_the_probe() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = run(&["qft", "--kernel", "causal", "--l", "4", "--nx", "128", "--out", &out]);
    assert_eq!(o.status.code(), Some(0));
    let input = dir.path().join("kernel.csv");
    let o = run(&["probe", "wf", "--input", input.to_str().unwrap(), "--point", "1.5,1.5", "--sigma", "8", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let mut r = csv::Reader::from_path(dir.path().join("probe.csv")).unwrap();
    let flagged: Vec<f64> = r
        .records()
        .map(|x| x.unwrap())
        .filter(|x| &x[3] == "true")
        .map(|x| x[0].parse().unwrap())
        .collect();
    // Conormals ±(1, −1)/√2 of the cone x = t.
    let pi = std::f64::consts::PI;
    assert_eq!(flagged.len(), 2);
    assert!(flagged.iter().any(|t| (t - 0.75 * pi).abs() < 1e-9));
    assert!(flagged.iter().any(|t| (t + 0.25 * pi).abs() < 1e-9));
}

#[test]
fn acceptance_report_is_deterministic_and_round_trips() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run(&["suite", "acceptance", "--seed", "42", "--out", &out_arg(d.path())]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stdout));
        assert_eq!(String::from_utf8_lossy(&o.stdout).matches("[PASS]").count(), 10);
    }
    let (ra, rb) = (a.path().join("report.json"), b.path().join("report.json"));
    let text = std::fs::read(&ra).unwrap();
    assert_eq!(text, std::fs::read(&rb).unwrap());
    let report = read_report(&ra).unwrap();
    assert!(report.pass);
    let mut seen: Vec<usize> = report.records.iter().map(|r| r.criterion).collect();
    seen.sort();
    assert_eq!(seen, (1..=10).collect::<Vec<_>>());
    // Re-emitting the parsed report reproduces the file.
    let again = canonical_json(&serde_json::to_value(&report).unwrap());
    assert_eq!(again.as_bytes(), &text[..]);
    assert!(a.path().join("timings.json").exists());
}

#[test]
fn one_failing_check_fails_the_report() {
    let mut rec = run_criterion(2, 7);
    assert!(rec.pass);
    let good = RunReport::new("h".into(), 7, vec![rec.clone()]);
    assert!(good.pass);
    rec.parts.push(Part::at_most("forced", 1.0, 0.0));
    rec.pass = false;
    let bad = RunReport::new("h".into(), 7, vec![rec]);
    assert!(!bad.pass);
    let dir = tempfile::tempdir().unwrap();
    emit_report(&bad, dir.path()).unwrap();
    let back = read_report(&dir.path().join("report.json")).unwrap();
    assert!(!back.pass);
    assert_eq!(back.records[0].parts.last().unwrap().name, "forced");
}
