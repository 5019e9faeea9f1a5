use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dynca::asmlang;
use dynca::automaton::{Configuration, Engine, Mode, Outcome, RunError, RunOptions, StepStats};
use dynca::bench::{run_bench, BenchOp};
use dynca::compiler::{
    compile, simulate_observed, CompilationUnit, CompileOptions, SimError, SimOptions, SimOutcome,
};
use dynca::difftest::{generate_cases, load_corpus, run_cases, DiffOptions};
use dynca::generator::GenConfig;
use dynca::interpreter::{run_to_termination, Outcome as InterpOutcome};
use dynca::pattern::{validate_ruleset, RuleSet};
use dynca::state::State;
use dynca::tangle::{decode, encode, Tangle};

const EXIT_FAIL: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_BUDGET: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

#[derive(Parser)]
#[command(name = "dynca", version, about = "Dynamic cellular automata and an ASM compiler")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a program with the reference interpreter.
    Interpret {
        program: PathBuf,
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = dynca::interpreter::DEFAULT_MAX_STEPS)]
        max_steps: u64,
    },
    /// Compile a program to a rule set.
    Compile {
        program: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
        #[arg(long)]
        negative_edges: bool,
    },
    /// Run a program (compiled on the fly) or a rule set on the automaton.
    Simulate {
        input: PathBuf,
        #[arg(long)]
        state: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long, default_value_t = dynca::automaton::DEFAULT_MAX_TICKS)]
        max_ticks: u64,
        #[arg(long, default_value_t = dynca::interpreter::DEFAULT_MAX_STEPS)]
        max_steps: u64,
        /// Write one line per tick: tick, rule, binding.
        #[arg(long)]
        trace: Option<PathBuf>,
        /// Write a DOT snapshot initially and every K ticks.
        #[arg(long)]
        dot_every: Option<u64>,
        #[arg(long, default_value = "dot")]
        dot_dir: PathBuf,
        #[arg(long)]
        check_invariants: bool,
        #[arg(long)]
        negative_edges: bool,
    },
    /// Compare interpreter and automaton on a corpus or generated programs.
    Difftest {
        corpus: Option<PathBuf>,
        #[arg(long)]
        generate: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Seeds per case.
        #[arg(long, default_value_t = 3)]
        runs: u64,
        #[arg(long, default_value_t = 4)]
        max_steps: u64,
        #[arg(long, default_value_t = dynca::automaton::DEFAULT_MAX_TICKS)]
        max_ticks: u64,
        #[command(flatten)]
        mode: ModeArgs,
        #[arg(long)]
        negative_edges: bool,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tick-count scaling of one compiled operation.
    Bench {
        /// pair, choice, cond, singleton, union, union-neg or overhead
        op: String,
        #[arg(long, value_delimiter = ',')]
        sizes: Vec<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

#[derive(Args, Clone, Copy)]
struct ModeArgs {
    #[arg(long, conflicts_with = "random")]
    deterministic: bool,
    #[arg(long)]
    random: bool,
}

impl ModeArgs {
    fn mode(self, default: Mode) -> Mode {
        if self.random {
            Mode::Random
        } else if self.deterministic {
            Mode::Deterministic
        } else {
            default
        }
    }
}

struct Failure(u8, String);

type CmdResult = Result<u8, Failure>;

fn input_err(e: impl std::fmt::Display) -> Failure {
    Failure(EXIT_INPUT, e.to_string())
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn load_program(path: &Path) -> Result<asmlang::Program, Failure> {
    asmlang::parse(&read(path)?).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn load_state(path: Option<&Path>) -> Result<State, Failure> {
    match path {
        None => Ok(State::new()),
        Some(p) => State::parse(&read(p)?).map_err(|e| input_err(format!("{}: {e}", p.display()))),
    }
}

fn emit(report: &str, out: Option<&Path>) -> Result<(), Failure> {
    print!("{report}");
    if let Some(p) = out {
        fs::write(p, report).map_err(|e| input_err(format!("{}: {e}", p.display())))?;
    }
    Ok(())
}

fn mode_name(m: Mode) -> &'static str {
    match m {
        Mode::Deterministic => "deterministic",
        Mode::Random => "random",
    }
}

fn interpret(program: &Path, state: Option<&Path>, seed: u64, max_steps: u64) -> CmdResult {
    let p = load_program(program)?;
    let violations = asmlang::validate(&p);
    if !violations.is_empty() {
        return Err(input_err(
            violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"),
        ));
    }
    let s0 = load_state(state)?;
    let r = run_to_termination(&p, &s0, seed, max_steps);
    let mut out = String::new();
    let _ = writeln!(out, "outcome {}", r.outcome.class());
    match &r.outcome {
        InterpOutcome::Inconsistent(l) => {
            let _ = writeln!(out, "error inconsistent update {l:?}");
        }
        InterpOutcome::Failed(e) => {
            let _ = writeln!(out, "error {e}");
        }
        _ => {}
    }
    let _ = write!(out, "{}", r.state);
    let _ = writeln!(out, "steps {}\nseed {seed}", r.steps);
    emit(&out, None)?;
    Ok(match r.outcome {
        InterpOutcome::Terminal => 0,
        InterpOutcome::BudgetExhausted => EXIT_BUDGET,
        _ => EXIT_INPUT,
    })
}

fn compile_unit(path: &Path, negative_edges: bool) -> Result<CompilationUnit, Failure> {
    let p = load_program(path)?;
    compile(&p, CompileOptions { negative_edges }).map_err(input_err)
}

fn compile_cmd(program: &Path, out: Option<&Path>, negative_edges: bool) -> CmdResult {
    let unit = compile_unit(program, negative_edges)?;
    let text = unit.ruleset.serialize();
    match out {
        Some(p) => fs::write(p, &text).map_err(|e| input_err(format!("{}: {e}", p.display())))?,
        None => print!("{text}"),
    }
    Ok(0)
}

struct Recorder {
    trace: Option<String>,
    dot_every: Option<u64>,
    dot_dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Recorder {
    fn snapshot(&mut self, g: &Tangle, tick: u64) {
        let path = self.dot_dir.join(format!("tick{tick:06}.dot"));
        if fs::write(&path, g.to_dot()).is_ok() {
            self.written.push(path);
        }
    }

    fn tick(&mut self, m: &dynca::pattern::Match, g: &Tangle, tick: u64) {
        if let Some(t) = self.trace.as_mut() {
            let binding: Vec<String> = m.binding.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(t, "{tick} {} [{}]", m.rule_name, binding.join(" "));
        }
        if let Some(k) = self.dot_every {
            if k > 0 && tick.is_multiple_of(k) {
                self.snapshot(g, tick);
            }
        }
    }
}

fn stats_lines(out: &mut String, stats: &StepStats) {
    let _ = writeln!(out, "ticks {}", stats.total);
    for (tag, n) in &stats.phases {
        let _ = writeln!(out, "phase {tag} {n}");
    }
}

#[allow(clippy::too_many_arguments)]
fn simulate_cmd(
    input: &Path,
    state: Option<&Path>,
    seed: u64,
    mode: Mode,
    max_ticks: u64,
    max_steps: u64,
    trace: Option<&Path>,
    dot_every: Option<u64>,
    dot_dir: &Path,
    check_invariants: bool,
    negative_edges: bool,
) -> CmdResult {
    let text = read(input)?;
    let is_ruleset = text
        .lines()
        .map(str::trim)
        .find(|l| !l.is_empty() && !l.starts_with('#'))
        .is_some_and(|l| l.starts_with("ruleset"));
    let s0 = load_state(state)?;
    if dot_every.is_some() {
        fs::create_dir_all(dot_dir).map_err(|e| input_err(format!("{}: {e}", dot_dir.display())))?;
    }
    let mut rec = Recorder {
        trace: trace.map(|_| String::new()),
        dot_every,
        dot_dir: dot_dir.to_path_buf(),
        written: Vec::new(),
    };
    let mut out = String::new();
    let code = if is_ruleset {
        let rules = RuleSet::parse(&text).map_err(|e| input_err(format!("{}: {e}", input.display())))?;
        let problems = validate_ruleset(&rules);
        if !problems.is_empty() {
            return Err(input_err(
                problems.iter().map(ToString::to_string).collect::<Vec<_>>().join("\n"),
            ));
        }
        let g = encode(&s0);
        if dot_every.is_some() {
            rec.snapshot(&g, 0);
        }
        let mut cfg = Configuration::seeded(g, seed, mode);
        let res = Engine::new(&rules).run_observed(
            &mut cfg,
            RunOptions {
                max_ticks,
                check_invariants,
            },
            &mut |m, g, t| {
                rec.tick(m, g, t);
                false
            },
        );
        match res {
            Err(RunError::Invariant { tick, violations }) => {
                let v: Vec<String> = violations.iter().map(ToString::to_string).collect();
                let _ = writeln!(out, "outcome invariant-violation\ntick {tick}\n{}", v.join("\n"));
                EXIT_INVARIANT
            }
            Err(e) => return Err(Failure(EXIT_FAIL, e.to_string())),
            Ok((stats, outcome)) => {
                let quiescent = outcome == Outcome::Quiescent;
                let _ = writeln!(out, "outcome {}", if quiescent { "quiescent" } else { "budget" });
                match decode(&cfg.tangle) {
                    Ok(s) => {
                        let _ = write!(out, "{}", s.normalized());
                    }
                    Err(e) => {
                        let _ = writeln!(out, "undecodable {e}");
                    }
                }
                stats_lines(&mut out, &stats);
                if quiescent {
                    0
                } else {
                    EXIT_BUDGET
                }
            }
        }
    } else {
        let unit = compile_unit(input, negative_edges)?;
        if dot_every.is_some() {
            rec.snapshot(&unit.initial_tangle(&s0), 0);
        }
        let opts = SimOptions {
            seed,
            mode,
            max_steps,
            max_ticks,
            check_invariants,
        };
        match simulate_observed(&unit, &s0, opts, &mut |m, g, t| rec.tick(m, g, t)) {
            Err(SimError::Run(RunError::Invariant { tick, violations })) => {
                let v: Vec<String> = violations.iter().map(ToString::to_string).collect();
                let _ = writeln!(out, "outcome invariant-violation\ntick {tick}\n{}", v.join("\n"));
                EXIT_INVARIANT
            }
            Err(e) => return Err(Failure(EXIT_FAIL, e.to_string())),
            Ok(r) => {
                let _ = writeln!(out, "outcome {}", r.outcome.class());
                match &r.outcome {
                    SimOutcome::Error(c) | SimOutcome::Stuck(c) => {
                        let _ = writeln!(out, "color {c}");
                    }
                    _ => {}
                }
                match r.state() {
                    Ok(s) => {
                        let _ = write!(out, "{s}");
                    }
                    Err(e) => {
                        let _ = writeln!(out, "undecodable {e}");
                    }
                }
                let _ = writeln!(out, "steps {}", r.steps);
                stats_lines(&mut out, &r.stats);
                match r.outcome {
                    SimOutcome::Halted => 0,
                    SimOutcome::Budget => EXIT_BUDGET,
                    _ => EXIT_INPUT,
                }
            }
        }
    };
    let _ = writeln!(out, "seed {seed}\nmode {}", mode_name(mode));
    if let (Some(path), Some(t)) = (trace, rec.trace.as_ref()) {
        fs::write(path, t).map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    }
    emit(&out, None)?;
    Ok(code)
}

#[allow(clippy::too_many_arguments)]
fn difftest_cmd(
    corpus: Option<&Path>,
    generate: Option<usize>,
    seed: u64,
    runs: u64,
    max_steps: u64,
    max_ticks: u64,
    mode: Mode,
    negative_edges: bool,
    report: Option<&Path>,
) -> CmdResult {
    let mut cases = Vec::new();
    if let Some(dir) = corpus {
        cases.extend(load_corpus(dir).map_err(input_err)?);
    }
    if let Some(n) = generate {
        cases.extend(generate_cases(n, seed, &GenConfig::default()));
    }
    if cases.is_empty() {
        return Err(input_err("nothing to test: give a corpus directory or --generate N"));
    }
    let opts = DiffOptions {
        seeds: (seed..seed + runs.max(1)).collect(),
        max_steps,
        max_ticks,
        mode,
        compile: CompileOptions { negative_edges },
        ..DiffOptions::default()
    };
    let summary = run_cases(&cases, &opts);
    let text = summary.to_string();
    emit(&text, report)?;
    if !summary.all_agree() {
        let dir = match report {
            Some(r) => r.with_extension("failures"),
            None => PathBuf::from("difftest-failures"),
        };
        let written = summary.write_artifacts(&dir, &cases, &opts).map_err(input_err)?;
        eprintln!("{} replay files in {}", written.len(), dir.display());
    }
    Ok(if summary.violations() > 0 {
        EXIT_INVARIANT
    } else if summary.all_agree() {
        0
    } else {
        EXIT_FAIL
    })
}

fn bench_cmd(op: &str, sizes: &[usize], report: Option<&Path>) -> CmdResult {
    let op = BenchOp::parse(op).ok_or_else(|| input_err(format!("unknown bench operation {op}")))?;
    let sizes = if sizes.is_empty() {
        op.default_sizes()
    } else {
        sizes.to_vec()
    };
    if sizes.is_empty() || sizes.windows(2).any(|w| w[0] >= w[1]) || sizes[0] == 0 {
        return Err(input_err("sizes must be positive and ascending"));
    }
    let r = run_bench(op, &sizes);
    emit(&r.to_string(), report)?;
    Ok(if r.pass { 0 } else { EXIT_FAIL })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match &cli.cmd {
        Cmd::Interpret {
            program,
            state,
            seed,
            max_steps,
        } => interpret(program, state.as_deref(), *seed, *max_steps),
        Cmd::Compile {
            program,
            out,
            negative_edges,
        } => compile_cmd(program, out.as_deref(), *negative_edges),
        Cmd::Simulate {
            input,
            state,
            seed,
            mode,
            max_ticks,
            max_steps,
            trace,
            dot_every,
            dot_dir,
            check_invariants,
            negative_edges,
        } => simulate_cmd(
            input,
            state.as_deref(),
            *seed,
            mode.mode(Mode::Deterministic),
            *max_ticks,
            *max_steps,
            trace.as_deref(),
            *dot_every,
            dot_dir,
            *check_invariants,
            *negative_edges,
        ),
        Cmd::Difftest {
            corpus,
            generate,
            seed,
            runs,
            max_steps,
            max_ticks,
            mode,
            negative_edges,
            report,
        } => difftest_cmd(
            corpus.as_deref(),
            *generate,
            *seed,
            *runs,
            *max_steps,
            *max_ticks,
            mode.mode(Mode::Random),
            *negative_edges,
            report.as_deref(),
        ),
        Cmd::Bench { op, sizes, report } => bench_cmd(op, sizes, report.as_deref()),
    };
    match res {
        Ok(code) => ExitCode::from(code),
        Err(Failure(code, msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}
