use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn dynca(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dynca"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) {
    fs::write(dir.join(name), text).unwrap();
}

/// The `term`/`loc` lines of a report.
fn state_lines(report: &str) -> Vec<String> {
    report
        .lines()
        .filter(|l| l.starts_with("term ") || l.starts_with("loc "))
        .map(str::to_string)
        .collect()
}

fn field(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} ")))
        .unwrap_or_else(|| panic!("no {key} in\n{report}"))
        .to_string()
}

#[test]
fn simulate_agrees_with_interpret() {
    let dir = TempDir::new().unwrap();
    write(
        dir.path(),
        "p.asml",
        "terms t, p, q;\ndo par { if t != p then t := t U {p}; q := <t, p> }\n",
    );
    write(dir.path(), "p.state", "term t = {a}\nterm p = {b, {}}\n");
    let args = ["p.asml", "--state", "p.state", "--max-steps", "10"];
    let i = dynca(&[&["interpret"], &args[..]].concat(), dir.path());
    let s = dynca(&[&["simulate"], &args[..], &["--check-invariants"]].concat(), dir.path());
    assert_eq!(i.status.code(), Some(3), "{}", stdout(&i));
    assert_eq!(s.status.code(), Some(3), "{}", stdout(&s));
    assert_eq!(state_lines(&stdout(&i)), state_lines(&stdout(&s)));
    assert_eq!(field(&stdout(&i), "steps"), "10");
    assert_eq!(field(&stdout(&s), "steps"), "10");

    write(dir.path(), "q.asml", "terms t, p;\ndo if t != p then t := p\n");
    let i = dynca(&["interpret", "q.asml", "--state", "p.state"], dir.path());
    let s = dynca(&["simulate", "q.asml", "--state", "p.state"], dir.path());
    assert_eq!(i.status.code(), Some(0));
    assert_eq!(s.status.code(), Some(0));
    assert_eq!(field(&stdout(&s), "outcome"), "terminal");
    assert_eq!(state_lines(&stdout(&i)), state_lines(&stdout(&s)));
}

#[test]
fn exit_codes() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "bad.asml", "terms t;\ndo t := \n");
    write(dir.path(), "grow.asml", "terms t;\ndo t := t U {t}\n");
    write(dir.path(), "bad.state", "term t = {\n");
    assert_eq!(dynca(&["interpret", "bad.asml"], dir.path()).status.code(), Some(2));
    assert_eq!(dynca(&["compile", "bad.asml"], dir.path()).status.code(), Some(2));
    assert_eq!(dynca(&["interpret", "missing.asml"], dir.path()).status.code(), Some(2));
    assert_eq!(
        dynca(&["interpret", "grow.asml", "--state", "bad.state"], dir.path()).status.code(),
        Some(2)
    );
    let o = dynca(&["interpret", "grow.asml", "--max-steps", "3"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(field(&stdout(&o), "outcome"), "budget");
    let o = dynca(&["simulate", "grow.asml", "--max-ticks", "20"], dir.path());
    assert_eq!(o.status.code(), Some(3));
    assert_eq!(dynca(&["bench", "nonsense"], dir.path()).status.code(), Some(2));
}

#[test]
fn runtime_error_exits_with_input_code() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "e.asml", "terms t, p;\ndo let x = choose(p) in t := x\n");
    let i = dynca(&["interpret", "e.asml"], dir.path());
    let s = dynca(&["simulate", "e.asml"], dir.path());
    assert_eq!(i.status.code(), Some(2));
    assert_eq!(s.status.code(), Some(2));
    assert_eq!(field(&stdout(&i), "outcome"), "error");
    assert_eq!(field(&stdout(&s), "outcome"), "error");
}

#[test]
fn compile_is_deterministic_and_loads_back() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "p.asml", "terms t, p, q;\ndo t := <p, q>\n");
    let a = dynca(&["compile", "p.asml"], dir.path());
    let b = dynca(&["compile", "p.asml", "-o", "p.rules"], dir.path());
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    let text = stdout(&a);
    assert_eq!(fs::read_to_string(dir.path().join("p.rules")).unwrap(), text);
    let base: Vec<&str> = text
        .lines()
        .filter_map(|l| l.strip_prefix("rule pairing:"))
        .filter(|n| !n.contains('.'))
        .collect();
    assert_eq!(base.len(), 2, "{base:?}");

    // a serialized rule set runs as is
    write(dir.path(), "p.state", "term p = {a}\nterm q = b\n");
    let o = dynca(&["simulate", "p.rules", "--state", "p.state", "--max-ticks", "200"], dir.path());
    assert!(stdout(&o).contains("ticks"), "{}", stdout(&o));
}

#[test]
fn trace_and_dot_snapshots() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "p.asml", "terms t, p, q;\ndo t := <p, q>\n");
    let o = dynca(
        &["simulate", "p.asml", "--max-steps", "1", "--trace", "trace.txt", "--dot-every", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    let ticks: usize = field(&stdout(&o), "ticks").parse().unwrap();
    let trace = fs::read_to_string(dir.path().join("trace.txt")).unwrap();
    assert_eq!(trace.lines().count(), ticks);
    let mut dots: Vec<String> = fs::read_dir(dir.path().join("dot"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    dots.sort();
    assert_eq!(dots.len(), ticks + 1);
    assert_eq!(dots[0], "tick000000.dot");
    assert_eq!(dots[ticks], format!("tick{ticks:06}.dot"));
    let first = fs::read_to_string(dir.path().join("dot").join(&dots[0])).unwrap();
    assert!(first.starts_with("digraph"));
}

#[test]
fn difftest_and_bench_commands() {
    let dir = TempDir::new().unwrap();
    fs::create_dir(dir.path().join("c")).unwrap();
    write(&dir.path().join("c"), "a.asml", "terms t, p;\ndo if t != p then t := p\n");
    write(&dir.path().join("c"), "a.state", "term p = {x, {y}}\n");
    let o = dynca(&["difftest", "c", "--generate", "3", "--report", "r.txt"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let report = fs::read_to_string(dir.path().join("r.txt")).unwrap();
    assert!(report.contains("runs 12 agree 12 disagree 0"), "{report}");
    assert!(!dir.path().join("r.failures").exists());

    let o = dynca(&["bench", "pair", "--sizes", "2,8"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    assert!(stdout(&o).ends_with("PASS\n"));
}

#[test]
fn membership_example_reports() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "m.asml", "terms t, p;\ndo if t in p then t := p\n");
    write(dir.path(), "m.state", "term t = a\nterm p = {a}\n");
    let o = dynca(&["interpret", "m.asml", "--state", "m.state"], dir.path());
    assert_eq!(o.status.code(), Some(0));
    let report = stdout(&o);
    assert_eq!(field(&report, "outcome"), "terminal");
    assert!(report.contains("term t = {a}\n"), "{report}");

    let run = || dynca(&["simulate", "m.asml", "--state", "m.state", "--deterministic"], dir.path());
    let (a, b) = (run(), run());
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(state_lines(&stdout(&a)), state_lines(&report));

    write(dir.path(), "bad.asml", "terms t;\ndo t := {\n");
    let o = dynca(&["interpret", "bad.asml"], dir.path());
    let err = String::from_utf8_lossy(&o.stderr).into_owned();
    assert_eq!(o.status.code(), Some(2));
    assert!(err.contains("bad.asml: 3:1: expected term"), "{err}");
}

#[test]
fn three_tick_run_leaves_four_snapshots() {
    let dir = TempDir::new().unwrap();
    write(dir.path(), "p.asml", "terms t, p, q;\ndo t := p U q\n");
    write(dir.path(), "p.state", "term p = {a}\nterm q = {b}\n");
    assert_eq!(dynca(&["compile", "p.asml", "-o", "p.rules"], dir.path()).status.code(), Some(0));
    let o = dynca(
        &["simulate", "p.rules", "--state", "p.state", "--max-ticks", "3", "--dot-every", "1"],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(3), "{}", stdout(&o));
    assert_eq!(field(&stdout(&o), "ticks"), "3");
    let mut dots: Vec<String> = fs::read_dir(dir.path().join("dot"))
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    dots.sort();
    assert_eq!(dots, ["tick000000.dot", "tick000001.dot", "tick000002.dot", "tick000003.dot"]);
}
