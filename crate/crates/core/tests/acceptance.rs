//! Acceptance suite: one PASS/FAIL line per criterion.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynca::asmlang::{self, pretty_print};
use dynca::automaton::Mode;
use dynca::bench::{run_bench, BenchOp};
use dynca::compiler::{compile, simulate, CompileOptions, SimOptions};
use dynca::difftest::{generate_cases, load_corpus, run_cases, Case, DiffOptions, Verdict};
use dynca::generator::{random_program, random_value, GenConfig};
use dynca::hfset::Atom;
use dynca::interpreter::{enumerate_outcomes, run_to_termination};
use dynca::pattern::{match_rule, maximality_filter, Rule, RuleSet};
use dynca::state::State;
use dynca::tangle::{decode, encode, Color, EdgeLabel, NodeId, NodeKind, Tangle};

fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn corpus() -> Vec<Case> {
    load_corpus(&corpus_dir()).expect("corpus loads")
}

fn confluent() -> Vec<Case> {
    load_corpus(&corpus_dir().join("confluent")).expect("confluent corpus loads")
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Criteria 1 and 4 share their runs.
fn differential_runs() -> (dynca::difftest::Summary, std::time::Duration) {
    let start = Instant::now();
    let hand = corpus();
    let generated = generate_cases(100, 2024, &GenConfig::default());
    let opts = DiffOptions {
        seeds: vec![0, 1, 2],
        mode: Mode::Random,
        check_invariants: true,
        ..DiffOptions::default()
    };
    let mut summary = run_cases(
        &hand,
        &DiffOptions {
            max_steps: 50,
            ..opts.clone()
        },
    );
    summary.results.extend(run_cases(&generated, &opts).results);
    (summary, start.elapsed())
}

fn criterion_1(summary: &dynca::difftest::Summary, took: std::time::Duration) -> Outcome {
    let hand = summary.results.iter().filter(|r| !r.name.starts_with("gen")).count();
    let bad: Vec<String> = summary
        .results
        .iter()
        .filter(|r| r.verdict != Verdict::Agree)
        .take(5)
        .map(|r| format!("{} seed {}: {:?}", r.name, r.seed, r.verdict))
        .collect();
    outcome(
        bad.is_empty() && hand == 60 && summary.results.len() == 360,
        format!(
            "{}/{} runs agree ({} corpus, {} generated) in {:.1}s {}",
            summary.agreements(),
            summary.results.len(),
            hand,
            summary.results.len() - hand,
            took.as_secs_f64(),
            bad.join("; ")
        ),
    )
}

fn criterion_2() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (op, sizes) in [
        (BenchOp::Union, vec![2, 4, 8, 16, 32]),
        (BenchOp::Singleton, vec![2, 4, 8, 16]),
        (BenchOp::Pair, vec![2, 32]),
        (BenchOp::Choice, vec![2, 32]),
        (BenchOp::Cond, vec![2, 32]),
    ] {
        let r = run_bench(op, &sizes);
        ok &= r.pass;
        match op {
            BenchOp::Union | BenchOp::Singleton => {
                parts.push(format!("{} exponent {:.3}", op.name(), r.exponent.unwrap()))
            }
            _ => parts.push(format!("{} ticks {:?}", op.name(), r.ticks)),
        }
    }
    outcome(ok, parts.join(", "))
}

fn criterion_3() -> Outcome {
    let r = run_bench(BenchOp::Overhead, &[4, 8, 16, 32]);
    let e = r.exponent.unwrap();
    outcome(e <= 2.4, format!("ticks {:?}, exponent {e:.3}", r.ticks))
}

fn criterion_4(summary: &dynca::difftest::Summary) -> Outcome {
    let checked = summary
        .results
        .iter()
        .filter(|r| !matches!(r.verdict, Verdict::Broken(_)))
        .count();
    outcome(
        summary.violations() == 0 && checked == summary.results.len(),
        format!(
            "{} violations over {} checked runs ({} ticks)",
            summary.violations(),
            checked,
            summary.results.iter().map(|r| r.ticks).sum::<u64>()
        ),
    )
}

// ---- criterion 5 ----

/// Every injective embedding with the focus on `active`, by exhaustion.
fn brute_force(g: &Tangle, rule: &Rule, active: NodeId) -> Vec<Vec<NodeId>> {
    let p = &rule.pattern;
    let k = p.cells.len();
    let nodes: Vec<NodeId> = g.node_ids().collect();
    let mut out = Vec::new();
    let mut cur = Vec::new();
    fn go(
        g: &Tangle,
        rule: &Rule,
        nodes: &[NodeId],
        k: usize,
        active: NodeId,
        cur: &mut Vec<NodeId>,
        out: &mut Vec<Vec<NodeId>>,
    ) {
        if cur.len() == k {
            let p = &rule.pattern;
            let at = |name: &str| cur[p.cell_index(name).unwrap()];
            let focus_ok = at(&p.focus) == active;
            let colors_ok = p
                .cells
                .iter()
                .zip(cur.iter())
                .all(|(c, n)| c.color.as_ref().is_none_or(|col| *col == g.node(*n).color));
            let edges_ok = p
                .edges
                .iter()
                .all(|e| g.has_edge(at(&e.src), &e.label, at(&e.dst)));
            let neg_ok = rule
                .negative_edges
                .iter()
                .all(|e| !g.has_edge(at(&e.src), &e.label, at(&e.dst)));
            if focus_ok && colors_ok && edges_ok && neg_ok {
                out.push(cur.clone());
            }
            return;
        }
        for &n in nodes {
            if !cur.contains(&n) {
                cur.push(n);
                go(g, rule, nodes, k, active, cur, out);
                cur.pop();
            }
        }
    }
    go(g, rule, &nodes, k, active, &mut cur, &mut out);
    out.sort();
    out
}

const COLORS: [&str; 3] = ["r", "g", "b"];
const LABELS: [&str; 2] = ["x", "y"];

fn random_tangle(rng: &mut ChaCha8Rng) -> Tangle {
    let mut g = Tangle::new();
    let n = rng.gen_range(1..=11);
    for _ in 0..n {
        g.add_node(Color::new(COLORS.choose(rng).unwrap()), NodeKind::Set);
    }
    let ids: Vec<NodeId> = g.node_ids().collect();
    for _ in 0..rng.gen_range(0..=3 * ids.len()) {
        let (a, b) = (*ids.choose(rng).unwrap(), *ids.choose(rng).unwrap());
        if a != b {
            g.add_edge(a, &EdgeLabel::new(LABELS.choose(rng).unwrap()), b);
        }
    }
    g.set_active(*ids.choose(rng).unwrap());
    g
}

fn random_rule(rng: &mut ChaCha8Rng, i: usize) -> Rule {
    let k = rng.gen_range(1..=4);
    let names: Vec<String> = (0..k).map(|j| format!("c{j}")).collect();
    let mut b = Rule::builder(format!("r{i}"));
    for n in &names {
        b = if rng.gen_bool(0.5) {
            b.cell(n, COLORS.choose(rng).unwrap())
        } else {
            b.wild(n)
        };
    }
    for _ in 0..rng.gen_range(0..=k + 1) {
        let (s, d) = (names.choose(rng).unwrap(), names.choose(rng).unwrap());
        if s != d {
            b = b.edge(s, LABELS.choose(rng).unwrap(), d);
        }
    }
    if rng.gen_bool(0.3) && k > 1 {
        b = b.neg(&names[0], LABELS.choose(rng).unwrap(), &names[1]);
    }
    b.focus(&names[0]).build()
}

fn noisy_neighbours(noisy: usize) -> (Tangle, RuleSet) {
    let mut g = Tangle::new();
    let me = g.add_node(Color::new("me"), NodeKind::Set);
    for _ in 0..noisy {
        let n = g.add_node(Color::new("noisy"), NodeKind::Set);
        g.add_edge(me, &EdgeLabel::new("nb"), n);
    }
    g.set_active(me);
    let one = Rule::builder("one")
        .cell("M", "me")
        .cell("A", "noisy")
        .edge("M", "nb", "A")
        .build();
    let two = Rule::builder("two")
        .cell("M", "me")
        .cell("A", "noisy")
        .cell("B", "noisy")
        .edge("M", "nb", "A")
        .edge("M", "nb", "B")
        .build();
    (g, RuleSet::from_rules(vec![one, two], &[], &[], false))
}

fn criterion_5() -> Outcome {
    let survivors = |noisy| {
        let (g, rs) = noisy_neighbours(noisy);
        let all: Vec<_> = rs
            .rules
            .iter()
            .enumerate()
            .flat_map(|(i, r)| match_rule(&g, i, r, g.active()))
            .collect();
        maximality_filter(all)
    };
    // two noisy neighbours: the one-neighbour rule is blocked
    let s2 = survivors(2);
    let blocking = !s2.is_empty() && s2.iter().all(|m| m.rule_name == "two");
    // three: the two-neighbour matches overlap without containment
    let s3 = survivors(3);
    let mut sets: Vec<_> = s3.iter().map(|m| m.cellset.clone()).collect();
    sets.sort();
    sets.dedup();
    let overlap = s3.iter().all(|m| m.rule_name == "two") && sets.len() == 3;

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut mismatches = 0;
    let mut total = 0;
    for t in 0..200 {
        let g = random_tangle(&mut rng);
        for i in 0..3 {
            let rule = random_rule(&mut rng, t * 3 + i);
            let got: Vec<Vec<NodeId>> = match_rule(&g, 0, &rule, g.active())
                .into_iter()
                .map(|m| m.binding)
                .collect();
            let want = brute_force(&g, &rule, g.active());
            total += want.len();
            if got != want {
                mismatches += 1;
            }
        }
    }
    outcome(
        blocking && overlap && mismatches == 0,
        format!(
            "strict-subset blocking {}, incomparable overlap {}, {} mismatches over 600 rules on 200 tangles ({} embeddings)",
            blocking, overlap, mismatches, total
        ),
    )
}

// ---- criterion 6 ----

fn permute(s: &State, rng: &mut ChaCha8Rng) -> (State, BTreeMap<Atom, Atom>) {
    let atoms: Vec<Atom> = s.atoms().into_iter().collect();
    let mut image = atoms.clone();
    // also map into fresh names now and then
    for a in image.iter_mut() {
        if rng.gen_bool(0.3) {
            *a = Atom::new(&format!("{}_z", a.name())).unwrap();
        }
    }
    image.shuffle(rng);
    let map: BTreeMap<Atom, Atom> = atoms.into_iter().zip(image).collect();
    let f = |a: &Atom| map.get(a).cloned().unwrap_or_else(|| a.clone());
    (s.rename_atoms(&f), map)
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut checks = 0;
    let mut failures = Vec::new();
    for case in corpus() {
        let unit = compile(&case.program, CompileOptions::default()).unwrap();
        let base_i = run_to_termination(&case.program, &case.state, 0, 50);
        let base_a = simulate(&unit, &case.state, SimOptions { max_steps: 50, ..SimOptions::default() })
            .unwrap()
            .state()
            .unwrap();
        for _ in 0..5 {
            let (s, map) = permute(&case.state, &mut rng);
            let f = |a: &Atom| map.get(a).cloned().unwrap_or_else(|| a.clone());
            let want_i = base_i.state.rename_atoms(&f);
            let want_a = base_a.rename_atoms(&f);
            let got_i = run_to_termination(&case.program, &s, 0, 50).state;
            let got_a = simulate(&unit, &s, SimOptions { max_steps: 50, ..SimOptions::default() })
                .unwrap()
                .state()
                .unwrap();
            checks += 1;
            if got_i != want_i || got_a != want_a {
                failures.push(case.name.clone());
            }
        }
    }
    outcome(
        failures.is_empty() && checks == 100,
        format!("{} of {checks} permuted runs commute {}", checks - failures.len(), failures.join(" ")),
    )
}

// ---- criterion 7 ----

fn criterion_7() -> Outcome {
    let cases = confluent();
    let mut bad = Vec::new();
    let mut paths = 0;
    for case in &cases {
        let outs = match enumerate_outcomes(&case.program, &case.state, 50, 64) {
            Ok(o) => o,
            Err(e) => {
                bad.push(format!("{}: {e:?}", case.name));
                continue;
            }
        };
        paths += outs.len();
        let first = &outs[0];
        let unique = outs
            .iter()
            .all(|o| o.state == first.state && o.outcome.class() == first.outcome.class());
        let unit = compile(&case.program, CompileOptions::default()).unwrap();
        let mut lands = true;
        for seed in 0..5 {
            for mode in [Mode::Random, Mode::Deterministic] {
                let r = simulate(
                    &unit,
                    &case.state,
                    SimOptions {
                        seed,
                        mode,
                        max_steps: 50,
                        ..SimOptions::default()
                    },
                )
                .unwrap();
                lands &= r.outcome.class() == first.outcome.class()
                    && r.state().unwrap() == first.state;
            }
        }
        if !(unique && lands && first.outcome.class() == "terminal") {
            bad.push(case.name.clone());
        }
    }
    outcome(
        bad.is_empty() && cases.len() == 10,
        format!("{} programs, {paths} enumerated paths {}", cases.len(), bad.join(" ")),
    )
}

// ---- criterion 8 ----

fn random_full_state(rng: &mut ChaCha8Rng) -> State {
    let atoms = dynca::generator::atom_names(5);
    let mut s = State::new();
    for i in 0..rng.gen_range(0..=4) {
        s = s.with(&format!("t{i}"), random_value(rng, &atoms, 3));
    }
    for _ in 0..rng.gen_range(0..=3) {
        let k = rng.gen_range(1..=3);
        let args = (0..k).map(|_| random_value(rng, &atoms, 2)).collect();
        s.locations
            .insert((format!("f{k}"), args), random_value(rng, &atoms, 3));
    }
    s.normalized()
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let states_ok = (0..500).all(|_| {
        let s = random_full_state(&mut rng);
        decode(&encode(&s)).map(|d| d.normalized()) == Ok(s)
    });
    let cfg = GenConfig {
        choose: true,
        term_depth: 4,
        ..GenConfig::default()
    };
    let asts_ok = (0..500).all(|_| {
        let p = random_program(&mut rng, &cfg);
        asmlang::parse(&pretty_print(&p)).as_ref() == Ok(&p)
    });
    let mut programs: Vec<asmlang::Program> = corpus().into_iter().map(|c| c.program).collect();
    programs.extend(confluent().into_iter().map(|c| c.program));
    programs.extend(generate_cases(100, 2024, &GenConfig::default()).into_iter().map(|c| c.program));
    let mut rulesets = 0;
    let mut rules_ok = true;
    for p in &programs {
        for negative_edges in [false, true] {
            let unit = compile(p, CompileOptions { negative_edges }).unwrap();
            rulesets += 1;
            rules_ok &= RuleSet::parse(&unit.ruleset.serialize()).as_ref() == Ok(&unit.ruleset);
        }
    }
    outcome(
        states_ok && asts_ok && rules_ok,
        format!(
            "500 states {}, 500 programs {}, {rulesets} rule sets {}",
            states_ok, asts_ok, rules_ok
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let (summary, took) = differential_runs();
    let results = [
        ("1 differential correctness", criterion_1(&summary, took)),
        ("2 complexity fits", criterion_2()),
        ("3 overall overhead", criterion_3()),
        ("4 structural invariants", criterion_4(&summary)),
        ("5 maximality semantics", criterion_5()),
        ("6 isomorphism closure", criterion_6()),
        ("7 choice confluence", criterion_7()),
        ("8 round trips", criterion_8()),
    ];
    let mut failed = 0;
    for (name, r) in &results {
        println!(
            "criterion {name}: {} ({})",
            if r.pass { "PASS" } else { "FAIL" },
            r.detail
        );
        failed += usize::from(!r.pass);
    }
    println!(
        "acceptance: {}/{} criteria pass in {:.1}s",
        results.len() - failed,
        results.len(),
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
