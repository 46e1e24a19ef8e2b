use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ipg_core::fixtures::{g1_states, g1_trajectories};
use ipg_core::trajectory::write_jsonl;

const G1_DESIRE: &str = r#"
name = "d"
kind = "safe"
actions = ["Brake"]

[[clauses]]
predicate = "Velocity"
values = ["High"]
"#;

fn ipg(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ipg"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = ipg(args, cwd);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

/// Exit status and the single stderr line of a failing run.
fn fails(args: &[&str], cwd: &Path) -> (i32, String) {
    let out = ipg(args, cwd);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    let err = String::from_utf8(out.stderr).unwrap();
    assert_eq!(err.trim_end().lines().count(), 1, "multi-line error: {err}");
    (out.status.code().unwrap(), err.trim_end().to_string())
}

/// G1 trajectories, graph and intention table in a fresh directory.
fn g1_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &g1_trajectories()).unwrap();
    fs::write(dir.path().join("traj.jsonl"), buf).unwrap();
    fs::create_dir(dir.path().join("desires")).unwrap();
    fs::write(dir.path().join("desires/d.toml"), G1_DESIRE).unwrap();
    ok(
        &["build", "--traj", "traj.jsonl", "--out", "pg.json"],
        dir.path(),
    );
    ok(
        &[
            "intents",
            "--pg",
            "pg.json",
            "--desires",
            "desires",
            "--out",
            "intents.json",
        ],
        dir.path(),
    );
    dir
}

fn s2_json() -> String {
    serde_json::to_string(&g1_states()[2]).unwrap()
}

#[test]
fn metrics_csv_header_and_rows() {
    let dir = g1_dir();
    let csv = ok(
        &[
            "metrics",
            "--pg",
            "pg.json",
            "--intents",
            "intents.json",
            "--C",
            "0.5",
        ],
        dir.path(),
    );
    let mut lines = csv.lines();
    assert_eq!(
        lines.next().unwrap(),
        "cohort,desire,kind,C,attributed,expected,n_states_attributed,visitation_mass"
    );
    assert_eq!(
        lines.next().unwrap(),
        "all,d,safe,0.5,0.250000,0.888889,1,5"
    );
    let names: Vec<&str> = lines.map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(names, ["any-safe", "any-unsafe", "any"]);
}

#[test]
fn metrics_sweep_writes_one_block_per_threshold() {
    let dir = g1_dir();
    ok(
        &[
            "metrics",
            "--pg",
            "pg.json",
            "--intents",
            "intents.json",
            "--C",
            "0.4,0.5",
            "--out",
            "m.csv",
        ],
        dir.path(),
    );
    let csv = fs::read_to_string(dir.path().join("m.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 4);
    assert!(csv.contains("all,d,safe,0.4,0.750000,"));
}

#[test]
fn ask_what_at_s2() {
    let dir = g1_dir();
    let state = s2_json();
    let out = ok(
        &[
            "ask",
            "what",
            "--pg",
            "pg.json",
            "--intents",
            "intents.json",
            "--state",
            &state,
        ],
        dir.path(),
    );
    assert_eq!(out, "d\t0.8889\n");
    // The same state addressed as scene:step and as a key string.
    let by_step = ok(
        &[
            "ask",
            "what",
            "--pg",
            "pg.json",
            "--intents",
            "intents.json",
            "--state",
            "g1-0:0",
            "--traj",
            "traj.jsonl",
        ],
        dir.path(),
    );
    assert_eq!(by_step, out);
    let key = g1_states()[2].to_string();
    assert_eq!(
        ok(
            &[
                "ask",
                "what",
                "--pg",
                "pg.json",
                "--intents",
                "intents.json",
                "--state",
                &key
            ],
            dir.path()
        ),
        out
    );
}

#[test]
fn ask_why_and_how() {
    let dir = g1_dir();
    let state = s2_json();
    let why = ok(
        &[
            "ask",
            "why",
            "--pg",
            "pg.json",
            "--intents",
            "intents.json",
            "--state",
            &state,
            "--action",
            "Brake",
        ],
        dir.path(),
    );
    assert_eq!(why, "Brake In order to fulfil d\n");
    let s0 = serde_json::to_string(&g1_states()[0]).unwrap();
    let how = ok(
        &[
            "ask",
            "how",
            "--pg",
            "pg.json",
            "--intents",
            "intents.json",
            "--state",
            &s0,
            "--desire",
            "d",
            "--json",
        ],
        dir.path(),
    );
    let plan: serde_json::Value = serde_json::from_str(&how).unwrap();
    let steps = plan["steps"].as_array().unwrap();
    assert_eq!(steps.len(), 2);
    assert_eq!(steps[0]["action"], "GoStraight");
    assert_eq!(steps[1]["action"], "Brake");
    assert_eq!(steps[1]["fulfils"], true);
}

#[test]
fn evolve_trace() {
    let dir = g1_dir();
    let csv = ok(
        &[
            "evolve",
            "--scene",
            "g1-9",
            "--traj",
            "traj.jsonl",
            "--intents",
            "intents.json",
            "--min-peak",
            "0.2",
        ],
        dir.path(),
    );
    assert_eq!(
        csv,
        "step,action,d,fulfilled\n0,GoStraight,0.444444,\n1,Brake,0.888889,d\n"
    );
}

#[test]
fn compare_reports_cohorts() {
    let dir = g1_dir();
    let out = ok(
        &[
            "compare",
            "--traj",
            "traj.jsonl",
            "--split-by",
            "tag:night",
            "--desires",
            "desires",
            "--out",
            "cmp.csv",
        ],
        dir.path(),
    );
    assert!(
        out.contains("night (n=0)") && out.contains("not-night (n=10)"),
        "{out}"
    );
    let csv = fs::read_to_string(dir.path().join("cmp.csv")).unwrap();
    assert!(csv.contains("night,d,safe,0.5,NA,NA,NA,NA"));
    assert!(csv.contains("not-night,d,safe,0.5,0.250000,0.888889,1,5"));
}

#[test]
fn build_filters_by_tag() {
    let dir = g1_dir();
    let (code, err) = fails(
        &[
            "build",
            "--traj",
            "traj.jsonl",
            "--filter-tag",
            "night",
            "--out",
            "x.json",
        ],
        dir.path(),
    );
    assert!(err.starts_with("error[NO_OBSERVATIONS]:"), "{err}");
    assert_eq!(code, 5);
    assert!(!dir.path().join("x.json").exists());
}

#[test]
fn error_codes() {
    let dir = g1_dir();
    let p = dir.path();
    fs::write(p.join("empty.jsonl"), "").unwrap();
    let cases: Vec<(Vec<&str>, &str)> = vec![
        (
            vec!["build", "--traj", "empty.jsonl", "--out", "x.json"],
            "NO_OBSERVATIONS",
        ),
        (
            vec!["build", "--traj", "missing.jsonl", "--out", "x.json"],
            "IO",
        ),
        (vec!["frobnicate"], "USAGE"),
        (
            vec![
                "metrics",
                "--pg",
                "pg.json",
                "--intents",
                "intents.json",
                "--C",
                "0",
            ],
            "INVALID_ARGUMENT",
        ),
        (
            vec![
                "metrics",
                "--pg",
                "intents.json",
                "--intents",
                "intents.json",
            ],
            "PARSE",
        ),
        (
            vec![
                "ask",
                "how",
                "--pg",
                "pg.json",
                "--intents",
                "intents.json",
                "--state",
                "g1-0:0",
                "--traj",
                "traj.jsonl",
                "--desire",
                "nope",
            ],
            "UNKNOWN_DESIRE",
        ),
        (
            vec![
                "ask",
                "what",
                "--pg",
                "pg.json",
                "--intents",
                "intents.json",
                "--state",
                "g1-99:0",
                "--traj",
                "traj.jsonl",
            ],
            "UNKNOWN_SCENE",
        ),
        (
            vec![
                "ask",
                "why",
                "--pg",
                "pg.json",
                "--intents",
                "intents.json",
                "--state",
                "g1-0:0",
                "--traj",
                "traj.jsonl",
                "--action",
                "Fly",
            ],
            "INVALID_ARGUMENT",
        ),
        (
            vec!["discretize", "--scenes", "desires", "--out", "t.jsonl"],
            "NO_SCENES",
        ),
        (
            vec!["compare", "--traj", "traj.jsonl", "--split-by", "night"],
            "INVALID_ARGUMENT",
        ),
        (
            vec![
                "synth",
                "--policy",
                "compliant",
                "--scenes",
                "1",
                "--frames",
                "0",
                "--out",
                "syn",
            ],
            "INVALID_ARGUMENT",
        ),
    ];
    for (args, code) in cases {
        let (_, err) = fails(&args, p);
        assert!(
            err.starts_with(&format!("error[{code}]: ")),
            "{args:?}: {err}"
        );
    }
}

#[test]
fn unknown_state_names_the_nearest_observed_one() {
    let dir = g1_dir();
    let mut s = g1_states()[2];
    s.set(ipg_core::Predicate::PedestrianNearby, "Yes").unwrap();
    let state = serde_json::to_string(&s).unwrap();
    let (_, err) = fails(
        &[
            "ask",
            "what",
            "--pg",
            "pg.json",
            "--intents",
            "intents.json",
            "--state",
            &state,
        ],
        dir.path(),
    );
    assert!(err.starts_with("error[UNKNOWN_STATE]:"), "{err}");
    assert!(err.contains("differs in 1 predicates"), "{err}");
    assert!(err.contains(&g1_states()[2].to_string()), "{err}");
}

#[test]
fn invalid_desire_specs_are_reported_on_one_line() {
    let dir = g1_dir();
    let bad: PathBuf = dir.path().join("bad");
    fs::create_dir(&bad).unwrap();
    fs::write(
        bad.join("a.toml"),
        "name = \"a\"\nkind = \"safe\"\nactions = []\n",
    )
    .unwrap();
    fs::write(
        bad.join("b.toml"),
        "name = \"b\"\nkind = \"weird\"\nactions = [\"Brake\"]\n",
    )
    .unwrap();
    let (_, err) = fails(
        &[
            "intents",
            "--pg",
            "pg.json",
            "--desires",
            "bad",
            "--out",
            "i.json",
        ],
        dir.path(),
    );
    assert!(err.starts_with("error[INVALID_DESIRES]:"), "{err}");
}

#[test]
fn synth_then_discretize_resolves_the_map_reference() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path();
    ok(
        &[
            "synth", "--policy", "reckless", "--scenes", "3", "--seed", "5", "--frames", "6",
            "--out", "syn",
        ],
        p,
    );
    for f in ["map.json", "events.jsonl", "policy.json"] {
        assert!(p.join("syn").join(f).is_file(), "{f} missing");
    }
    assert_eq!(fs::read_dir(p.join("syn/scenes")).unwrap().count(), 3);
    let implicit = ok(
        &["discretize", "--scenes", "syn/scenes", "--out", "a.jsonl"],
        p,
    );
    ok(
        &[
            "discretize",
            "--scenes",
            "syn/scenes",
            "--map",
            "syn/map.json",
            "--out",
            "b.jsonl",
        ],
        p,
    );
    assert_eq!(implicit, "discretized 3 scenes, 18 steps\n");
    assert_eq!(
        fs::read(p.join("a.jsonl")).unwrap(),
        fs::read(p.join("b.jsonl")).unwrap()
    );
}
