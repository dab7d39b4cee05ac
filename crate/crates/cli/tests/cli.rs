use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use adaptive_grading::config::RunConfig;
use adaptive_grading::engine::{replay, Transcript};
use adaptive_grading::lower_bound::{self, SolveMode};
use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_adaptive-grading"))
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn run_with_stdin(args: &[&str], stdin: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .expect("binary runs");
    let mut pipe = child.stdin.take().unwrap();
    let input = stdin.to_owned();
    // fed from its own thread so a full stdout pipe cannot deadlock us; the
    // session may stop before it has read everything
    let writer = std::thread::spawn(move || {
        let _ = pipe.write_all(input.as_bytes());
    });
    let out = child.wait_with_output().unwrap();
    writer.join().unwrap();
    out
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

#[test]
fn lower_bound_text_report() {
    let cfg = config("reference.json");
    let o = run(&["lb", "--config", cfg.to_str().unwrap(), "--p", "5.5"]);
    assert!(o.status.success(), "{o:?}");
    let text = stdout(&o);
    assert!(text.contains("C1"), "{text}");
    assert!(text.contains("x = 5.96"), "{text}");
}

#[test]
fn lower_bound_json_matches_the_library() {
    let path = config("reference.json");
    let cfg = RunConfig::load(&path).unwrap();
    for (p, mode, flag) in [
        (5.5, SolveMode::Exact, "exact"),
        (8.2, SolveMode::RestrictedSingle, "restricted-single"),
        (2.5, SolveMode::Exact, "exact"),
    ] {
        let o =
            run(&["lb", "--config", path.to_str().unwrap(), "--p", &p.to_string(), "--mode", flag, "--format", "json"]);
        assert!(o.status.success(), "{o:?}");
        let v: Value = serde_json::from_slice(&o.stdout).unwrap();
        let expected =
            lower_bound::solve(&cfg.response_model().unwrap(), p, &cfg.grade_scheme().unwrap(), &cfg.bank, mode)
                .unwrap();
        assert_eq!(v["solution"], serde_json::to_value(&expected).unwrap());
        let report = lower_bound::report(&expected, cfg.stopping.delta);
        assert_eq!(v["report"], serde_json::to_value(report).unwrap());
    }
}

#[test]
fn degenerate_and_invalid_inputs_have_distinct_exit_codes() {
    let cfg = config("reference.json");
    assert_eq!(run(&["lb", "--config", cfg.to_str().unwrap(), "--p", "7"]).status.code(), Some(3));
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    fs::write(&bad, fs::read_to_string(&cfg).unwrap().replace("\"grades\"", "\"colour\": 1, \"grades\"")).unwrap();
    assert_eq!(run(&["lb", "--config", bad.to_str().unwrap(), "--p", "5.5"]).status.code(), Some(2));
    assert_eq!(run(&["lb", "--config", "/nonexistent.json", "--p", "5.5"]).status.code(), Some(2));
}

#[test]
fn simulated_run_transcript_replays() {
    let path = config("logit_finite.json");
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("run.jsonl");
    let o = run(&[
        "simulate",
        "run",
        "--config",
        path.to_str().unwrap(),
        "--seed",
        "8",
        "--transcript",
        t.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{o:?}");
    let transcript = Transcript::from_json_lines(&fs::read_to_string(&t).unwrap()).unwrap();
    let engine = RunConfig::load(&path).unwrap().engine().unwrap();
    let r = replay(&engine, 8, &transcript).unwrap();
    assert!(r.levels_match && r.records_match && r.state.stopped);
}

#[test]
fn monte_carlo_outputs_are_reproducible() {
    let path = config("logit_finite.json");
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    for d in &dirs {
        let o = run(&[
            "simulate",
            "mc",
            "--config",
            path.to_str().unwrap(),
            "--seed",
            "4",
            "--out",
            d.path().to_str().unwrap(),
        ]);
        assert!(o.status.success(), "{o:?}");
    }
    for name in ["sessions.csv", "path.csv", "allocation.csv", "summary.json"] {
        let a = fs::read(dirs[0].path().join(name)).unwrap();
        let b = fs::read(dirs[1].path().join(name)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{name} differs between runs");
    }
    let summary: Value = serde_json::from_slice(&fs::read(dirs[0].path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["replications"], 100);
}

#[test]
fn exploration_csv_layout() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("explore.json");
    let text = fs::read_to_string(config("exploration.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["experiment"]["replications"] = 4.into();
    v["experiment"]["horizon"] = 30.into();
    fs::write(&cfg, v.to_string()).unwrap();
    let o = run(&["simulate", "explore", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success(), "{o:?}");
    let csv = fs::read_to_string(dir.path().join("exploration.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("step,easy_start,optimal_start,hard_start"));
    assert_eq!(lines.count(), 30);
}

#[test]
fn interactive_session_follows_the_engine() {
    let path = config("logit_finite.json");
    let dir = tempfile::tempdir().unwrap();
    let t = dir.path().join("session.jsonl");
    // a noisy candidate; includes one invalid answer that must be re-asked
    let mut answers = String::from("maybe\n");
    for i in 0..200_000u64 {
        answers.push_str(if (i * 2_654_435_761) % 7 < 4 { "1\n" } else { "0\n" });
    }
    let o = run_with_stdin(
        &["session", "--config", path.to_str().unwrap(), "--seed", "3", "--transcript", t.to_str().unwrap()],
        &answers,
    );
    assert!(matches!(o.status.code(), Some(0) | Some(4)), "{o:?}");
    let transcript = Transcript::from_json_lines(&fs::read_to_string(&t).unwrap()).unwrap();
    assert!(!transcript.steps.is_empty());
    let engine = RunConfig::load(&path).unwrap().engine().unwrap();
    let r = replay(&engine, 3, &transcript).unwrap();
    assert!(r.levels_match && r.records_match);
    let outcomes: Vec<u8> = transcript.steps.iter().map(|s| s.outcome).collect();
    let expected: Vec<u8> = answers.lines().skip(1).take(outcomes.len()).map(|l| l.parse().unwrap()).collect();
    assert_eq!(outcomes, expected);
}

#[test]
fn closed_input_ends_the_session_inconclusively() {
    let path = config("logit_finite.json");
    let o = run_with_stdin(&["session", "--config", path.to_str().unwrap()], "1\n0\n");
    assert_eq!(o.status.code(), Some(4), "{o:?}");
    assert!(stdout(&o).contains("inconclusive"));
}
