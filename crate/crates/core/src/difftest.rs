//! Differential testing: the interpreter against the compiled automaton.
//!
//! Runs are compared after the same number of ASM steps. Both sides must
//! land in the same outcome class; unless that class is an error, the
//! decoded state and the step count must match as well.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::asmlang::{self, pretty_print, Program};
use crate::automaton::{Configuration, Engine, Mode, RunOptions};
use crate::compiler::{compile, simulate, CompilationUnit, CompileOptions, SimError, SimOptions};
use crate::generator::{random_program, random_state, GenConfig};
use crate::interpreter::{run_to_termination, RunResult};
use crate::state::State;

#[derive(Debug, Clone)]
pub struct Case {
    pub name: String,
    pub program: Program,
    pub state: State,
}

#[derive(Debug, Clone)]
pub struct DiffOptions {
    pub seeds: Vec<u64>,
    pub max_steps: u64,
    pub max_ticks: u64,
    pub mode: Mode,
    pub check_invariants: bool,
    pub compile: CompileOptions,
    pub workers: usize,
}

impl Default for DiffOptions {
    fn default() -> Self {
        DiffOptions {
            seeds: vec![0, 1, 2],
            max_steps: 4,
            max_ticks: crate::automaton::DEFAULT_MAX_TICKS,
            mode: Mode::Random,
            check_invariants: true,
            compile: CompileOptions::default(),
            workers: std::thread::available_parallelism().map_or(1, |n| n.get()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Agree,
    Disagree(String),
    Invariant(String),
    /// The program does not compile or the automaton run failed.
    Broken(String),
}

#[derive(Debug, Clone)]
pub struct CaseResult {
    pub name: String,
    pub seed: u64,
    pub verdict: Verdict,
    pub interpreter: RunResult,
    pub ticks: u64,
    /// Enough to replay both sides.
    pub replay: String,
}

fn replay_text(case: &Case, seed: u64, opts: &DiffOptions) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# case {} seed {} mode {:?}", case.name, seed, opts.mode);
    let _ = writeln!(
        s,
        "# max-steps {} max-ticks {} negative-edges {}",
        opts.max_steps, opts.max_ticks, opts.compile.negative_edges
    );
    let _ = writeln!(s, "## program\n{}", pretty_print(&case.program));
    let _ = writeln!(s, "## state\n{}", case.state);
    s
}

/// Runs one case against an already compiled unit.
pub fn check_with(case: &Case, unit: &CompilationUnit, seed: u64, opts: &DiffOptions) -> CaseResult {
    let want = run_to_termination(&case.program, &case.state, seed, opts.max_steps);
    let sim = simulate(
        unit,
        &case.state,
        SimOptions {
            seed,
            mode: opts.mode,
            max_steps: opts.max_steps,
            max_ticks: opts.max_ticks,
            check_invariants: opts.check_invariants,
        },
    );
    let mut replay = replay_text(case, seed, opts);
    let _ = writeln!(replay, "## interpreter\n{} after {} steps", want.outcome.class(), want.steps);
    let _ = writeln!(replay, "{}", want.state);
    let (verdict, ticks) = match sim {
        Err(SimError::Run(crate::automaton::RunError::Invariant { tick, violations })) => {
            let msg = violations
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>()
                .join("; ");
            (Verdict::Invariant(format!("tick {tick}: {msg}")), tick)
        }
        Err(e) => (Verdict::Broken(e.to_string()), 0),
        Ok(got) => {
            let _ = writeln!(
                replay,
                "## automaton\n{} ({:?}) after {} steps, {} ticks",
                got.outcome.class(),
                got.outcome,
                got.steps,
                got.stats.total
            );
            let verdict = match got.state() {
                Err(e) => Verdict::Broken(format!("decode: {e}")),
                Ok(state) => {
                    let _ = writeln!(replay, "{state}");
                    if got.outcome.class() != want.outcome.class() {
                        Verdict::Disagree(format!(
                            "outcome {} vs {}",
                            want.outcome.class(),
                            got.outcome.class()
                        ))
                    } else if want.outcome.class() == "error" {
                        Verdict::Agree
                    } else if state != want.state {
                        Verdict::Disagree("final states differ".into())
                    } else if got.steps != want.steps {
                        Verdict::Disagree(format!("steps {} vs {}", want.steps, got.steps))
                    } else {
                        Verdict::Agree
                    }
                }
            };
            (verdict, got.stats.total)
        }
    };
    CaseResult {
        name: case.name.clone(),
        seed,
        verdict,
        interpreter: want,
        ticks,
        replay,
    }
}

/// Rule names fired by the automaton, one per tick.
pub fn automaton_trace(unit: &CompilationUnit, case: &Case, seed: u64, opts: &DiffOptions) -> Vec<String> {
    let engine = Engine::new(&unit.ruleset);
    let mut cfg = Configuration::seeded(unit.initial_tangle(&case.state), seed, opts.mode);
    let mut names = Vec::new();
    let _ = engine.run_observed(
        &mut cfg,
        RunOptions {
            max_ticks: opts.max_ticks,
            check_invariants: false,
        },
        &mut |m, _, _| {
            names.push(m.rule_name.clone());
            false
        },
    );
    names
}

pub fn check_case(case: &Case, seed: u64, opts: &DiffOptions) -> CaseResult {
    match compile(&case.program, opts.compile) {
        Ok(unit) => check_with(case, &unit, seed, opts),
        Err(e) => CaseResult {
            name: case.name.clone(),
            seed,
            verdict: Verdict::Broken(e.to_string()),
            interpreter: run_to_termination(&case.program, &case.state, seed, opts.max_steps),
            ticks: 0,
            replay: replay_text(case, seed, opts),
        },
    }
}

#[derive(Debug, Clone, Default)]
pub struct Summary {
    pub results: Vec<CaseResult>,
}

impl Summary {
    pub fn agreements(&self) -> usize {
        self.count(|v| *v == Verdict::Agree)
    }

    pub fn disagreements(&self) -> usize {
        self.count(|v| matches!(v, Verdict::Disagree(_)))
    }

    pub fn violations(&self) -> usize {
        self.count(|v| matches!(v, Verdict::Invariant(_)))
    }

    pub fn broken(&self) -> usize {
        self.count(|v| matches!(v, Verdict::Broken(_)))
    }

    fn count(&self, f: impl Fn(&Verdict) -> bool) -> usize {
        self.results.iter().filter(|r| f(&r.verdict)).count()
    }

    pub fn all_agree(&self) -> bool {
        self.agreements() == self.results.len()
    }

    /// One replay file per failing run.
    pub fn write_artifacts(&self, dir: &Path, cases: &[Case], opts: &DiffOptions) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(dir)?;
        let mut out = Vec::new();
        for r in self.results.iter().filter(|r| r.verdict != Verdict::Agree) {
            let mut text = r.replay.clone();
            if let Some(case) = cases.iter().find(|c| c.name == r.name) {
                if let Ok(unit) = compile(&case.program, opts.compile) {
                    text.push_str("## automaton trace\n");
                    for (i, name) in automaton_trace(&unit, case, r.seed, opts).iter().enumerate() {
                        let _ = writeln!(text, "{i} {name}");
                    }
                }
            }
            let path = dir.join(format!("{}-seed{}.txt", r.name, r.seed));
            fs::write(&path, text)?;
            out.push(path);
        }
        Ok(out)
    }
}

impl fmt::Display for Summary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in &self.results {
            let v = match &r.verdict {
                Verdict::Agree => "agree".to_string(),
                Verdict::Disagree(m) => format!("DISAGREE {m}"),
                Verdict::Invariant(m) => format!("INVARIANT {m}"),
                Verdict::Broken(m) => format!("BROKEN {m}"),
            };
            writeln!(
                f,
                "{} seed {}: {} ({}, {} steps, {} ticks)",
                r.name,
                r.seed,
                v,
                r.interpreter.outcome.class(),
                r.interpreter.steps,
                r.ticks
            )?;
        }
        writeln!(
            f,
            "runs {} agree {} disagree {} invariant {} broken {}",
            self.results.len(),
            self.agreements(),
            self.disagreements(),
            self.violations(),
            self.broken()
        )
    }
}

/// Every case under every seed, spread over worker threads. Results come
/// back sorted by case name, then seed.
pub fn run_cases(cases: &[Case], opts: &DiffOptions) -> Summary {
    let jobs: Vec<(usize, u64)> = (0..cases.len())
        .flat_map(|i| opts.seeds.iter().map(move |s| (i, *s)))
        .collect();
    let workers = opts.workers.clamp(1, jobs.len().max(1));
    let mut results: Vec<CaseResult> = std::thread::scope(|scope| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                let jobs = &jobs;
                scope.spawn(move || {
                    jobs.iter()
                        .skip(w)
                        .step_by(workers)
                        .map(|(i, seed)| check_case(&cases[*i], *seed, opts))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    });
    results.sort_by(|a, b| a.name.cmp(&b.name).then(a.seed.cmp(&b.seed)));
    Summary { results }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

/// Loads `*.asml` files from `dir`; a sibling `<name>.state` holds the
/// initial state (empty if absent).
pub fn load_corpus(dir: &Path) -> Result<Vec<Case>, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e == "asml"))
        .collect();
    paths.sort();
    let mut cases = Vec::new();
    for path in paths {
        cases.push(load_case(&path)?);
    }
    Ok(cases)
}

pub fn load_case(path: &Path) -> Result<Case, CorpusError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };
    let src = fs::read_to_string(path).map_err(io(path))?;
    let program = asmlang::parse(&src).map_err(|e| CorpusError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let state_path = path.with_extension("state");
    let state = if state_path.exists() {
        let text = fs::read_to_string(&state_path).map_err(io(&state_path))?;
        State::parse(&text).map_err(|e| CorpusError::Parse {
            path: state_path.clone(),
            message: e.to_string(),
        })?
    } else {
        State::new()
    };
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    Ok(Case {
        name,
        program,
        state,
    })
}

/// `n` random cases; the same seed gives the same cases.
pub fn generate_cases(n: usize, seed: u64, cfg: &GenConfig) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let program = random_program(&mut rng, cfg);
            let state = random_state(&mut rng, &program, cfg);
            Case {
                name: format!("gen{i:03}"),
                program,
                state,
            }
        })
        .collect()
}
