use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_psdg"))
}

fn traffic() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/grammars/traffic.psdg")
}

fn run(args: &[&str], stdin: &str) -> Output {
    let mut child = bin()
        .args(args)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(stdin.as_bytes())
        .unwrap();
    child.wait_with_output().unwrap()
}

fn grammar_file(text: &str) -> tempfile::NamedTempFile {
    let mut f = tempfile::NamedTempFile::new().unwrap();
    f.write_all(text.as_bytes()).unwrap();
    f
}

fn path(f: &tempfile::NamedTempFile) -> &str {
    f.path().to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn reports(o: &Output) -> Vec<Value> {
    stdout(o)
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

const COIN: &str = "start S\nprod 0: S -> a { default: 0.3 }\nprod 1: S -> b { default: 0.7 }\n";

const TWO_STATE: &str = "terminals a, b
feature f { values: x, y ; prior: 0.5, 0.5 ; parents: f ;
  cpt: x | a -> 0.9, 0.1 ; cpt: y | * -> 0.2, 0.8 ; cpt: * | * -> 0.5, 0.5 }
start S
prod 0: S -> a S { rule f in {x} : 0.6 ; default: 0.3 }
prod 1: S -> T { rule f in {x} : 0.4 ; default: 0.7 }
prod 2: T -> b a
";

#[test]
fn validate_reports_traffic_statistics() {
    let o = run(
        &["--format", "json", "validate", traffic().to_str().unwrap()],
        "",
    );
    assert_eq!(o.status.code(), Some(0));
    let v: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(v["productions"], 7);
    assert_eq!(v["max_production_len"], 2);
    assert_eq!(v["depth"], 2);
}

#[test]
fn undeclared_symbol_is_located() {
    let g = grammar_file("terminals a\nstart S\nprod 0: S -> a Q\n");
    let o = run(&["validate", path(&g)], "");
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(
        err.contains("UndeclaredSymbol") && err.contains(":3:"),
        "{err}"
    );
}

#[test]
fn empty_file_fails_on_line_one() {
    let g = grammar_file("");
    let o = run(&["--format", "json", "validate", path(&g)], "");
    assert_eq!(o.status.code(), Some(1));
    let first: Value = serde_json::from_str(stderr(&o).lines().next().unwrap()).unwrap();
    assert_eq!(first["diagnostic"]["line"], 1);
    assert_eq!(first["diagnostic"]["kind"], "Parse");
}

#[test]
fn missing_file_is_an_io_error() {
    let o = run(&["validate", "/no/such/grammar.psdg"], "");
    assert_eq!(o.status.code(), Some(2));
    assert!(o.stdout.is_empty());
}

#[test]
fn sampling_is_reproducible() {
    let t = traffic();
    let args = [
        "sample",
        t.to_str().unwrap(),
        "--seed",
        "42",
        "--horizon",
        "15",
    ];
    let a = run(&args, "");
    let b = run(&args, "");
    assert_eq!(a.status.code(), Some(0));
    assert!(!a.stdout.is_empty());
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn first_terminal_frequencies_match() {
    let g = grammar_file(COIN);
    let n = 100_000;
    let o = run(
        &[
            "sample",
            path(&g),
            "--horizon",
            "1",
            "--count",
            &n.to_string(),
        ],
        "",
    );
    assert_eq!(o.status.code(), Some(0));
    let a = stdout(&o)
        .lines()
        .filter(|l| l.contains("\"terminal\":\"a\""))
        .count() as f64;
    let p = 0.3;
    let se = (p * (1.0 - p) / n as f64).sqrt();
    assert!(
        (a / n as f64 - p).abs() <= 3.0 * se,
        "frequency {}",
        a / n as f64
    );
}

#[test]
fn sampled_observations_have_positive_evidence() {
    let t = traffic();
    let t = t.to_str().unwrap();
    for seed in ["1", "2", "3"] {
        let obs = run(
            &[
                "sample",
                t,
                "--seed",
                seed,
                "--horizon",
                "12",
                "--observations-only",
            ],
            "",
        );
        assert_eq!(obs.status.code(), Some(0));
        let o = run(&["infer", t], &stdout(&obs));
        assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
        let r = reports(&o);
        assert_eq!(r.len(), stdout(&obs).lines().count());
        assert!(r.iter().all(|r| r["evidence"].as_f64().unwrap() > 0.0));
    }
}

#[test]
fn replayed_states_explain_the_true_terminal() {
    let t = traffic();
    let t = t.to_str().unwrap();
    let traj = run(&["sample", t, "--seed", "9", "--horizon", "10"], "");
    let steps: Vec<Value> = stdout(&traj)
        .lines()
        .skip(1)
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    let obs = run(
        &[
            "sample",
            t,
            "--seed",
            "9",
            "--horizon",
            "10",
            "--observations-only",
        ],
        "",
    );
    let r = reports(&run(&["infer", t], &stdout(&obs)));
    for step in &steps {
        let k = step["t"].as_u64().unwrap() as usize;
        let x = step["terminal"].as_str().unwrap();
        let p = r[k]["explain"]["terminal"][x].as_f64().unwrap_or(0.0);
        assert!(p > 0.0, "t={k} terminal {x}");
    }
}

#[test]
fn left_lane_blocks_production_one() {
    let t = traffic();
    let o = run(
        &["infer", t.to_str().unwrap()],
        "{\"t\":0,\"observe\":{\"lane\":[\"left-lane\"]}}\n",
    );
    assert_eq!(o.status.code(), Some(0));
    let r = reports(&o);
    let p = &r[0]["predict"]["levels"][0]["productions"];
    assert_eq!(p.get("1,1").and_then(Value::as_f64).unwrap_or(0.0), 0.0);
    assert!(p["0,1"].as_f64().unwrap() > 0.0);
}

#[test]
fn zero_evidence_policies() {
    let t = traffic();
    let t = t.to_str().unwrap();
    let stream = "{\"t\":0,\"observe\":{\"lane\":[\"left-lane\"]}}\n{\"t\":1,\"observe\":{\"lane\":[\"right-lane\"]}}\n";
    let o = run(&["infer", t], stream);
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(reports(&o).len(), 1, "earlier reports are still emitted");
    let o = run(&["infer", t, "--on-zero-evidence", "reinit"], stream);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(reports(&o)[1]["reinitialized"], true);
}

#[test]
fn malformed_line_is_named() {
    let t = traffic();
    let o = run(
        &["infer", t.to_str().unwrap()],
        "{\"t\":0}\n\n{\"t\":1,\"observe\":{\"lane\":[\"slow\"]}}\n",
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
    assert_eq!(reports(&o).len(), 1);
}

#[test]
fn support_bound_is_a_model_error() {
    let t = traffic();
    let o = run(
        &["infer", t.to_str().unwrap(), "--support-bound", "4"],
        "{\"t\":0}\n",
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_check_agrees_on_small_grammars() {
    let g = grammar_file(TWO_STATE);
    let stream =
        "{\"t\":0,\"observe\":{\"f\":[\"x\"]}}\n{\"t\":2}\n{\"t\":3,\"observe\":{\"f\":[\"y\"]}}\n";
    let o = run(&["oracle-check", path(&g)], stream);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(stdout(&o).lines().count(), 4);

    let coin = grammar_file(
        "start S\nprod 0: S -> a b S { default: 0.5 }\nprod 1: S -> c { default: 0.5 }\n",
    );
    let o = run(
        &[
            "--format",
            "json",
            "oracle-check",
            path(&coin),
            "--horizon",
            "5",
        ],
        "",
    );
    assert_eq!(o.status.code(), Some(0));
    for line in stdout(&o).lines() {
        let v: Value = serde_json::from_str(line).unwrap();
        assert!(v["explain"].as_f64().unwrap() <= 1e-15);
        assert!(v["predict"].as_f64().unwrap() <= 1e-15);
    }
}

#[test]
fn oracle_check_catches_a_corrupted_update() {
    let g = grammar_file(TWO_STATE);
    let o = run(
        &[
            "oracle-check",
            path(&g),
            "--horizon",
            "4",
            "--corrupt-update",
        ],
        "",
    );
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn oracle_check_rejects_observations_past_the_horizon() {
    let g = grammar_file(TWO_STATE);
    let o = run(
        &["oracle-check", path(&g), "--horizon", "2"],
        "{\"t\":0}\n{\"t\":5}\n",
    );
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn pcfg_of_a_single_state_grammar_keeps_its_productions() {
    let g = grammar_file(COIN);
    let out = tempfile::NamedTempFile::new().unwrap();
    let o = run(&["to-pcfg", path(&g), "--out", path(&out)], "");
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let text = std::fs::read_to_string(out.path()).unwrap();
    let rules = text
        .lines()
        .filter(|l| l.contains(" -> ") && !l.starts_with("START"))
        .count();
    assert_eq!(rules, 2);
    assert!(stderr(&o).contains("bound"));
}

#[test]
fn pcfg_of_a_two_state_grammar_is_small() {
    let g = grammar_file(TWO_STATE);
    let o = run(&["to-pcfg", path(&g)], "");
    assert_eq!(o.status.code(), Some(0));
    let mut tuples: Vec<String> = stdout(&o)
        .lines()
        .filter(|l| l.contains(" -> "))
        .map(|l| l.split(" -> ").next().unwrap().to_string())
        .filter(|lhs| lhs != "START")
        .collect();
    tuples.sort();
    tuples.dedup();
    assert!(!tuples.is_empty() && tuples.len() <= 2 * 4);
}

#[test]
fn pcfg_explosion_is_a_model_error() {
    let values: Vec<String> = (0..400).map(|i| format!("v{i}")).collect();
    let prior = vec!["0.0025"; 400].join(", ");
    let text = format!(
        "feature f {{ values: {} ; prior: {prior} ; cpt: * -> {prior} }}\nstart S\nprod 0: S -> a b\n",
        values.join(", ")
    );
    let g = grammar_file(&text);
    let o = run(&["to-pcfg", path(&g)], "");
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(o.stdout.is_empty());
}
