//! Lowering of ASM-lite programs to automaton rule sets.
//!
//! Registers are Criticals out-edges. Critical terms keep their own labels;
//! intermediate values live in `%k` temporaries, pending updates in `'t`
//! (terms) and `$wt<i>`/`$wv<i>` (function locations). The Criticals color
//! acts as a program counter: a step starts at `idle`, evaluates the body
//! against the unchanged registers, checks for clashes, drops temporaries,
//! commits, and returns to `idle`, or to `halt` if nothing was assigned.
//! Singleton and union run under `lock:` colors.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::automaton::{Configuration, Engine, Mode, Outcome, RunError, RunOptions, StepStats};
use crate::asmlang::{validate, Cond, Lhs, Program, ProgramViolation, Stmt, Term};
use crate::interpreter::initial_state;
use crate::pattern::{PatternEdge, Rule, RuleBuilder, RuleSet};
use crate::state::State;
use crate::tangle::{colors, decode, encode, labels, DecodeError, Color, NodeKind, Tangle};

pub const HALT: &str = "halt";
pub const ERR_TYPE: &str = "error:type";
pub const ERR_CHOOSE: &str = "error:choose";
pub const ERR_CLASH: &str = "error:clash";

pub const SUGG: &str = "~sugg";
pub const UNION_NEW: &str = "~union";

/// Internal edge labels.
pub mod marks {
    pub const SUGGESTION: &str = "$sug";
    pub const TESTED: &str = "$tested";
    pub const SEED: &str = "$seed";
    pub const CAND: &str = "$cand";
    pub const NEW: &str = "$new";
    pub const SUB: &str = "$sub";
    pub const MU: &str = "$mu";
    pub const MX: &str = "$mx";
    pub const MY: &str = "$my";
    pub const NU: &str = "$nu";
    pub const BX: &str = "$bx";
    pub const BY: &str = "$by";
}

pub mod phases {
    pub const PAIRING: &str = "pairing";
    pub const CHOICE: &str = "choice";
    pub const CONDITIONAL: &str = "conditional";
    pub const SINGLETON: &str = "singleton";
    pub const UNION_CHECK: &str = "union-check";
    pub const UNION_BUILD: &str = "union-build";
    pub const CLEANUP: &str = "cleanup";
    pub const ASSIGN: &str = "assign";
    pub const READ: &str = "read";
    pub const WRITE: &str = "write";
    pub const STEP: &str = "step";

    pub const ALL: &[&str] = &[
        PAIRING,
        CHOICE,
        CONDITIONAL,
        SINGLETON,
        UNION_CHECK,
        UNION_BUILD,
        CLEANUP,
        ASSIGN,
        READ,
        WRITE,
        STEP,
    ];
}

const C: &str = "C";

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CompileOptions {
    /// Adds negative-edge early-reject rules to union checks.
    pub negative_edges: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompileError {
    #[error("invalid program: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<ProgramViolation>),
}

#[derive(Debug, Clone)]
pub struct CompilationUnit {
    pub program: Program,
    pub ruleset: RuleSet,
    /// Program names and internal marks to the edge labels used for them.
    pub label_map: BTreeMap<String, String>,
    pub phase_tags: Vec<&'static str>,
}

impl CompilationUnit {
    /// The tangle a run starts from: `s0` with every declared term present.
    pub fn initial_tangle(&self, s0: &State) -> Tangle {
        encode(&initial_state(&self.program, s0))
    }
}

/// Primitive micro-operations. Each runs from `pc` to `next`; registers are
/// Criticals edge labels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Op {
    Copy { dst: String, src: String, phase: &'static str },
    Pair { dst: String, a: String, b: String },
    Singleton { dst: String, src: String },
    Union { dst: String, a: String, b: String },
    Read { dst: String, f: String, args: Vec<String> },
    Choose { dst: String, set: String },
    TupleWrite { slot: usize, args: Vec<String> },
    Skip,
}

/// Conditional jump.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Test {
    In { a: String, b: String },
    Eq { a: String, b: String },
}

fn base(name: String, pc: &str) -> RuleBuilder {
    Rule::builder(name).cell(C, pc).focus(C)
}

/// Binds `cell` to the target of register `reg`.
fn reg(b: RuleBuilder, cell: &str, reg: &str, color: Option<&str>) -> RuleBuilder {
    b.ensure_cell(cell, color).edge(C, reg, cell)
}

/// Cell names for a list of registers; equal registers share a cell.
fn roles(regs: &[&str], names: &[&str]) -> Vec<String> {
    (0..regs.len())
        .map(|i| {
            let j = regs[..i].iter().position(|r| *r == regs[i]).unwrap_or(i);
            names[j].to_string()
        })
        .collect()
}

fn dedup(names: &[String]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for n in names {
        if !out.contains(n) {
            out.push(n.clone());
        }
    }
    out
}

/// Identifies cell `b` with cell `a`. `None` if their colors clash or the
/// merged pattern has a loop.
pub fn merge_cells(rule: &Rule, a: &str, b: &str) -> Option<Rule> {
    let p = &rule.pattern;
    let ia = p.cell_index(a)?;
    let ib = p.cell_index(b)?;
    let (ca, cb) = (&p.cells[ia].color, &p.cells[ib].color);
    let color = match (ca, cb) {
        (Some(x), Some(y)) if x != y => return None,
        (Some(x), _) | (_, Some(x)) => Some(x.clone()),
        (None, None) => None,
    };
    let mut r = rule.clone();
    let ren = |s: &mut String| {
        if s == b {
            *s = a.to_string();
        }
    };
    r.pattern.cells[ia].color = color;
    r.pattern.cells.remove(ib);
    if r.pattern.focus == b {
        r.pattern.focus = a.to_string();
    }
    let fix = |edges: &mut Vec<PatternEdge>| {
        for e in edges.iter_mut() {
            ren(&mut e.src);
            ren(&mut e.dst);
        }
        let mut seen = Vec::new();
        edges.retain(|e| {
            if seen.contains(e) {
                false
            } else {
                seen.push(e.clone());
                true
            }
        });
    };
    fix(&mut r.pattern.edges);
    fix(&mut r.negative_edges);
    fix(&mut r.rewrite.add_edges);
    fix(&mut r.rewrite.remove_edges);
    r.rewrite.correspondence.retain(|(rn, _)| rn != b);
    for (n, _) in r.rewrite.recolor.iter_mut() {
        ren(n);
    }
    if let Some(n) = r.rewrite.activate.as_mut() {
        ren(n);
    }
    if r.pattern.has_directed_cycle()
        || r.negative_edges.iter().any(|e| r.pattern.edges.contains(e))
    {
        return None;
    }
    r.name = format!("{}.{a}={b}", rule.name);
    Some(r)
}

/// All set partitions of `n` items as restricted growth strings.
fn partitions(n: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0; n];
    fn go(i: usize, max: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if i == cur.len() {
            out.push(cur.clone());
            return;
        }
        for v in 0..=max + 1 {
            if i == 0 && v > 0 {
                break;
            }
            cur[i] = v;
            go(i + 1, max.max(v), cur, out);
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    go(0, 0, &mut cur, &mut out);
    out
}

/// The rule plus every variant in which some of `cells` denote the same
/// node, most-merged first and the rule itself last. Bindings are
/// injective, so register-bound cells that may coincide at run time need
/// their own variants.
pub fn with_aliases(rule: Rule, cells: &[String]) -> Vec<Rule> {
    with_aliases_except(rule, cells, &[])
}

/// Like [`with_aliases`], but cells in a `forbid` pair never merge.
pub fn with_aliases_except(rule: Rule, cells: &[String], forbid: &[(&str, &str)]) -> Vec<Rule> {
    let pos = |c: &str| cells.iter().position(|x| x == c);
    let mut variants: Vec<(usize, Rule)> = Vec::new();
    for part in partitions(cells.len()) {
        let blocks = part.iter().max().map_or(0, |m| m + 1);
        if blocks == cells.len() {
            continue;
        }
        let forbidden = forbid.iter().any(|(a, b)| match (pos(a), pos(b)) {
            (Some(i), Some(j)) => part[i] == part[j],
            _ => false,
        });
        if forbidden {
            continue;
        }
        let mut r = Some(rule.clone());
        for (i, &blk) in part.iter().enumerate() {
            let first = part.iter().position(|&x| x == blk).unwrap();
            if first != i {
                r = r.and_then(|r| merge_cells(&r, &cells[first], &cells[i]));
            }
        }
        if let Some(r) = r {
            variants.push((blocks, r));
        }
    }
    variants.sort_by_key(|(b, _)| *b);
    let mut out: Vec<Rule> = variants.into_iter().map(|(_, r)| r).collect();
    out.push(rule);
    out
}

fn name(phase: &str, construct: &str, case: &str) -> String {
    format!("{phase}:{construct}:{case}")
}

pub fn tmp_reg(k: usize) -> String {
    format!("%{k}")
}

pub fn pending_reg(t: &str) -> String {
    format!("'{t}")
}

pub fn write_tuple_reg(i: usize) -> String {
    format!("$wt{i}")
}

pub fn write_value_reg(i: usize) -> String {
    format!("$wv{i}")
}

/// Rules for one primitive operation running from `pc` to `next`.
pub fn op_rules(op: &Op, id: usize, pc: &str, next: &str, opts: CompileOptions) -> Vec<Rule> {
    match op {
        Op::Copy { dst, src, phase } => vec![reg(
            base(name(phase, &format!("copy{id}"), "0"), pc),
            "X",
            src,
            None,
        )
        .add(C, dst, "X")
        .recolor(C, next)
        .build()],
        Op::Skip => vec![base(name(phases::STEP, &format!("skip{id}"), "0"), pc)
            .recolor(C, next)
            .build()],
        Op::Pair { dst, a, b } => pairing_group(id, pc, next, dst, a, b),
        Op::Choose { dst, set } => choice_group(id, pc, next, dst, set),
        Op::Read { dst, f, args } => read_group(id, pc, next, dst, f, args),
        Op::TupleWrite { slot, args } => tuple_write_group(id, pc, next, *slot, args),
        Op::Singleton { dst, src } => singleton_group(id, pc, next, dst, src),
        Op::Union { dst, a, b } => union_group(id, pc, next, dst, a, b, opts),
    }
}

/// `dst := <a, b>`: reuse the pair node if it exists, else create it.
pub fn pairing_group(id: usize, pc: &str, next: &str, dst: &str, a: &str, b: &str) -> Vec<Rule> {
    let r = roles(&[a, b], &["A", "B"]);
    let construct = format!("pair{id}");
    let operands = |case: &str| {
        let bld = reg(base(name(phases::PAIRING, &construct, case), pc), &r[0], a, None);
        reg(bld, &r[1], b, None)
    };
    let reuse = operands("reuse")
        .cell("Pr", colors::PAIR)
        .edge("Pr", labels::FST, &r[0])
        .edge("Pr", labels::SND, &r[1])
        .add(C, dst, "Pr")
        .recolor(C, next)
        .build();
    let create = operands("create")
        .create("Pr", colors::PAIR, NodeKind::Pair)
        .add("Pr", labels::FST, &r[0])
        .add("Pr", labels::SND, &r[1])
        .add(C, dst, "Pr")
        .recolor(C, next)
        .build();
    let cells = dedup(&r);
    let mut out = with_aliases(reuse, &cells);
    out.extend(with_aliases(create, &cells));
    out
}

/// `dst := choose(set)`; empty sets and non-sets stop with an error color.
pub fn choice_group(id: usize, pc: &str, next: &str, dst: &str, set: &str) -> Vec<Rule> {
    let construct = format!("choose{id}");
    vec![
        reg(base(name(phases::CHOICE, &construct, "pick"), pc), "T", set, Some(colors::SET))
            .wild("W")
            .edge("W", labels::EL, "T")
            .add(C, dst, "W")
            .recolor(C, next)
            .build(),
        reg(base(name(phases::CHOICE, &construct, "empty"), pc), "T", set, Some(colors::SET))
            .recolor(C, ERR_CHOOSE)
            .build(),
        base(name(phases::CHOICE, &construct, "type"), pc)
            .recolor(C, ERR_TYPE)
            .build(),
    ]
}

/// Jumps to `yes` or `no`.
pub fn test_group(id: usize, pc: &str, test: &Test, yes: &str, no: &str) -> Vec<Rule> {
    let construct = format!("test{id}");
    let n = |case: &str| name(phases::CONDITIONAL, &construct, case);
    match test {
        Test::In { a, b } if a == b => vec![
            reg(base(n("false"), pc), "B", b, Some(colors::SET))
                .recolor(C, no)
                .build(),
            base(n("type"), pc).recolor(C, ERR_TYPE).build(),
        ],
        Test::In { a, b } => vec![
            reg(reg(base(n("true"), pc), "A", a, None), "B", b, Some(colors::SET))
                .edge("A", labels::EL, "B")
                .recolor(C, yes)
                .build(),
            reg(base(n("false"), pc), "B", b, Some(colors::SET))
                .recolor(C, no)
                .build(),
            base(n("type"), pc).recolor(C, ERR_TYPE).build(),
        ],
        Test::Eq { a, b } if a == b => vec![base(n("true"), pc).recolor(C, yes).build()],
        Test::Eq { a, b } => vec![
            reg(reg(base(n("true"), pc), "X", a, None), "X", b, None)
                .recolor(C, yes)
                .build(),
            base(n("false"), pc).recolor(C, no).build(),
        ],
    }
}

fn arg_roles(args: &[String]) -> Vec<String> {
    let names: Vec<String> = (1..=args.len()).map(|i| format!("A{i}")).collect();
    let regs: Vec<&str> = args.iter().map(String::as_str).collect();
    let names: Vec<&str> = names.iter().map(String::as_str).collect();
    roles(&regs, &names)
}

fn bind_args(mut b: RuleBuilder, args: &[String], r: &[String]) -> RuleBuilder {
    for (a, cell) in args.iter().zip(r) {
        b = reg(b, cell, a, None);
    }
    b
}

fn tuple_edges(mut b: RuleBuilder, r: &[String]) -> RuleBuilder {
    for (i, cell) in r.iter().enumerate() {
        b = b.edge("T", &labels::arg(i + 1), cell);
    }
    b
}

/// `dst := f(args)`: the stored value, or the empty set when the location
/// has no node or no value.
pub fn read_group(
    id: usize,
    pc: &str,
    next: &str,
    dst: &str,
    f: &str,
    args: &[String],
) -> Vec<Rule> {
    let construct = format!("read{id}");
    let n = |case: &str| name(phases::READ, &construct, case);
    let r = arg_roles(args);
    let cells = dedup(&r);
    let tuple = colors::tuple(args.len());
    let load = format!("{pc}.e");
    let hit = tuple_edges(bind_args(base(n("value"), pc), args, &r).cell("T", &tuple), &r)
        .wild("V")
        .edge("T", &labels::val(f), "V")
        .add(C, dst, "V")
        .recolor(C, next)
        .build();
    let tonly = tuple_edges(bind_args(base(n("tuple"), pc), args, &r).cell("T", &tuple), &r)
        .recolor(C, &load)
        .build();
    let none = bind_args(base(n("none"), pc), args, &r)
        .recolor(C, &load)
        .build();
    let mut hit_cells = cells.clone();
    hit_cells.push("V".into());
    let mut out = with_aliases(hit, &hit_cells);
    out.extend(with_aliases(tonly, &cells));
    out.extend(with_aliases(none, &cells));
    out.push(
        reg(base(n("empty"), &load), "E", labels::EMPTY, None)
            .add(C, dst, "E")
            .recolor(C, next)
            .build(),
    );
    out
}

/// Points `$wt<slot>` at the tuple node for `args`, creating it if needed.
pub fn tuple_write_group(id: usize, pc: &str, next: &str, slot: usize, args: &[String]) -> Vec<Rule> {
    let construct = format!("tuple{id}");
    let n = |case: &str| name(phases::WRITE, &construct, case);
    let r = arg_roles(args);
    let cells = dedup(&r);
    let k = args.len();
    let wt = write_tuple_reg(slot);
    let reuse = tuple_edges(
        bind_args(base(n("reuse"), pc), args, &r).cell("T", &colors::tuple(k)),
        &r,
    )
    .add(C, &wt, "T")
    .recolor(C, next)
    .build();
    let mut create = bind_args(base(n("create"), pc), args, &r)
        .create("T", &colors::tuple(k), NodeKind::Tuple(k));
    for (i, cell) in r.iter().enumerate() {
        create = create.add("T", &labels::arg(i + 1), cell);
    }
    let create = create.add(C, &wt, "T").recolor(C, next).build();
    let mut out = with_aliases(reuse, &cells);
    out.extend(with_aliases(create, &cells));
    out
}

/// `dst := {src}`. Scans the sets containing `src` for one with no other
/// member; rejected candidates have their edge from `src` parked under
/// `$tested` and restored afterwards. Ticks: 2k + 3 for k parents.
pub fn singleton_group(id: usize, pc: &str, next: &str, dst: &str, src: &str) -> Vec<Rule> {
    use marks::*;
    let construct = format!("single{id}");
    let scan = format!("lock:s{id}:scan");
    let restore = format!("lock:s{id}:restore");
    let n = |case: &str| name(phases::SINGLETON, &construct, case);
    let x = |b: RuleBuilder| reg(b, "X", src, None);
    vec![
        x(base(n("enter"), pc))
            .create("N", SUGG, NodeKind::Set)
            .add("X", labels::EL, "N")
            .add(C, SUGGESTION, "N")
            .recolor(C, &scan)
            .build(),
        x(base(n("accept"), &scan))
            .cell("P", colors::SET)
            .edge("X", labels::EL, "P")
            .cell("N", SUGG)
            .edge(C, SUGGESTION, "N")
            .edge("X", labels::EL, "N")
            .remove("X", labels::EL, "N")
            .remove(C, SUGGESTION, "N")
            .add(C, dst, "P")
            .recolor(C, &restore)
            .build(),
        x(base(n("reject"), &scan))
            .cell("P", colors::SET)
            .edge("X", labels::EL, "P")
            .wild("Z")
            .edge("Z", labels::EL, "P")
            .cell("N", SUGG)
            .edge(C, SUGGESTION, "N")
            .relabel("X", labels::EL, TESTED, "P")
            .build(),
        base(n("fresh"), &scan)
            .cell("N", SUGG)
            .edge(C, SUGGESTION, "N")
            .recolor("N", colors::SET)
            .remove(C, SUGGESTION, "N")
            .add(C, dst, "N")
            .recolor(C, &restore)
            .build(),
        x(base(name(phases::CLEANUP, &construct, "restore"), &restore))
            .wild("P")
            .edge("X", TESTED, "P")
            .relabel("X", TESTED, labels::EL, "P")
            .build(),
        base(name(phases::CLEANUP, &construct, "done"), &restore)
            .recolor(C, next)
            .build(),
    ]
}

/// `dst := a U b`. After ruling out the cases where the result is one of
/// the operands, every set containing a seed member of `b` is checked
/// against both operands by marking edges; a fresh set is built only if
/// none matches.
#[allow(clippy::too_many_arguments)]
pub fn union_group(
    id: usize,
    pc: &str,
    next: &str,
    dst: &str,
    a: &str,
    b: &str,
    opts: CompileOptions,
) -> Vec<Rule> {
    use marks::*;
    let construct = format!("union{id}");
    let st = |s: &str| format!("lock:u{id}:{s}");
    let check = |case: &str| name(phases::UNION_CHECK, &construct, case);
    let build = |case: &str| name(phases::UNION_BUILD, &construct, case);
    let clean = |case: &str| name(phases::CLEANUP, &construct, case);
    let set = Some(colors::SET);
    let s = |bl: RuleBuilder| reg(bl, "S", a, set);
    let p = |bl: RuleBuilder| reg(bl, "P", b, set);
    let sp = |bl: RuleBuilder| p(s(bl));
    let u = |bl: RuleBuilder| reg(bl, "U", CAND, None);
    let z = |bl: RuleBuilder| reg(bl, "Z", SEED, None);
    let sv = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let sp_forbid: &[(&str, &str)] = &[("S", "P")];

    if a == b {
        return vec![
            s(base(check("same"), pc)).add(C, dst, "S").recolor(C, next).build(),
            base(check("type"), pc).recolor(C, ERR_TYPE).build(),
        ];
    }

    let mut out = Vec::new();

    // entry
    let gen = sp(base(check("enter"), pc))
        .wild("Zs")
        .edge("Zs", labels::EL, "S")
        .wild("Zp")
        .edge("Zp", labels::EL, "P")
        .add(C, SEED, "Zp")
        .recolor(C, &st("pre1"))
        .build();
    out.extend(with_aliases_except(gen, &sv(&["S", "P", "Zs", "Zp"]), sp_forbid));
    let s_empty = sp(base(check("left-empty"), pc))
        .wild("Zp")
        .edge("Zp", labels::EL, "P")
        .add(C, dst, "P")
        .recolor(C, next)
        .build();
    out.extend(with_aliases_except(s_empty, &sv(&["S", "P", "Zp"]), sp_forbid));
    let p_empty = sp(base(check("right-empty"), pc))
        .wild("Zs")
        .edge("Zs", labels::EL, "S")
        .add(C, dst, "S")
        .recolor(C, next)
        .build();
    out.extend(with_aliases_except(p_empty, &sv(&["S", "P", "Zs"]), sp_forbid));
    out.push(
        reg(s(base(check("same"), pc)), "S", b, set)
            .add(C, dst, "S")
            .recolor(C, next)
            .build(),
    );
    out.push(base(check("type"), pc).recolor(C, ERR_TYPE).build());

    // subset prechecks: `inner` ⊆ `outer` means the result is `outer`
    for (k, inner, outer, on_fail) in [(1, "P", "S", st("pre2")), (2, "S", "P", st("cand"))] {
        let pre = st(&format!("pre{k}"));
        let decide = st(&format!("pre{k}d"));
        let undo_fail = st(&format!("u{k}f"));
        let undo_ok = st(&format!("u{k}o"));
        out.push(
            sp(base(check(&format!("sub{k}:mark")), &pre))
                .wild("W")
                .edge("W", labels::EL, inner)
                .edge("W", labels::EL, outer)
                .relabel("W", labels::EL, SUB, inner)
                .build(),
        );
        out.push(base(check(&format!("sub{k}:marked")), &pre).recolor(C, &decide).build());
        out.push(
            reg(base(check(&format!("sub{k}:fail")), &decide), inner, if inner == "S" { a } else { b }, set)
                .wild("W")
                .edge("W", labels::EL, inner)
                .recolor(C, &undo_fail)
                .build(),
        );
        out.push(base(check(&format!("sub{k}:ok")), &decide).recolor(C, &undo_ok).build());
        for (undo, tag) in [(&undo_fail, "f"), (&undo_ok, "o")] {
            out.push(
                sp(base(check(&format!("sub{k}:undo{tag}")), undo))
                    .wild("W")
                    .edge("W", SUB, inner)
                    .relabel("W", SUB, labels::EL, inner)
                    .build(),
            );
        }
        out.push(
            base(check(&format!("sub{k}:retry")), &undo_fail)
                .recolor(C, &on_fail)
                .build(),
        );
        out.push(
            sp(base(check(&format!("sub{k}:hit")), &undo_ok))
                .add(C, dst, outer)
                .recolor(C, &st("fin"))
                .build(),
        );
    }

    // candidate loop
    let pick = z(sp(base(check("pick"), &st("cand"))))
        .cell("U", colors::SET)
        .edge("Z", labels::EL, "U")
        .add(C, CAND, "U")
        .recolor(C, &st("mark"))
        .build();
    out.extend(with_aliases_except(pick, &sv(&["S", "P", "Z"]), sp_forbid));
    out.push(
        z(base(build("fresh"), &st("cand")))
            .create("N", UNION_NEW, NodeKind::Set)
            .add(C, NEW, "N")
            .recolor(C, &st("copy"))
            .build(),
    );

    if opts.negative_edges {
        out.push(
            u(sp(base(check("early"), &st("mark"))))
                .wild("W")
                .edge("W", labels::EL, "U")
                .neg("W", labels::EL, "S")
                .neg("W", labels::EL, "P")
                .recolor(C, &st("unrej"))
                .build(),
        );
    }
    out.push(
        u(sp(base(check("both"), &st("mark"))))
            .wild("W")
            .edge("W", labels::EL, "U")
            .edge("W", labels::EL, "S")
            .edge("W", labels::EL, "P")
            .relabel("W", labels::EL, MU, "U")
            .relabel("W", labels::EL, MU, "S")
            .relabel("W", labels::EL, MU, "P")
            .build(),
    );
    for (cell, mark, tag) in [("S", MX, "left"), ("P", MY, "right")] {
        out.push(
            reg(u(base(check(tag), &st("mark"))), cell, if cell == "S" { a } else { b }, set)
                .wild("W")
                .edge("W", labels::EL, "U")
                .edge("W", labels::EL, cell)
                .relabel("W", labels::EL, mark, "U")
                .relabel("W", labels::EL, mark, cell)
                .build(),
        );
    }
    out.push(base(check("marked"), &st("mark")).recolor(C, &st("dec")).build());

    out.push(
        u(base(check("extra"), &st("dec")))
            .wild("W")
            .edge("W", labels::EL, "U")
            .recolor(C, &st("unrej"))
            .build(),
    );
    for (cell, tag) in [("S", "missing-left"), ("P", "missing-right")] {
        let r = reg(u(base(check(tag), &st("dec"))), cell, if cell == "S" { a } else { b }, set)
            .wild("W")
            .edge("W", labels::EL, cell)
            .recolor(C, &st("unrej"))
            .build();
        out.extend(with_aliases(r, &sv(&["U", "W"])));
    }
    out.push(base(check("found"), &st("dec")).recolor(C, &st("unacc")).build());

    for track in ["unrej", "unacc"] {
        for (mark, cells) in [(MU, &["U", "S", "P"][..]), (MX, &["U", "S"]), (MY, &["U", "P"])] {
            for &cell in cells {
                let bl = base(check(&format!("{track}:{}{cell}", &mark[1..])), &st(track));
                let bl = match cell {
                    "U" => u(bl),
                    "S" => s(bl),
                    _ => p(bl),
                };
                out.push(
                    bl.wild("W")
                        .edge("W", mark, cell)
                        .relabel("W", mark, labels::EL, cell)
                        .build(),
                );
            }
        }
    }
    out.push(
        z(u(base(check("unrej:next"), &st("unrej"))))
            .edge("Z", labels::EL, "U")
            .relabel("Z", labels::EL, NU, "U")
            .remove(C, CAND, "U")
            .recolor(C, &st("cand"))
            .build(),
    );
    out.push(
        u(base(check("unacc:hit"), &st("unacc")))
            .add(C, dst, "U")
            .remove(C, CAND, "U")
            .recolor(C, &st("untag"))
            .build(),
    );

    // build a fresh set
    let n = |bl: RuleBuilder| reg(bl, "N", NEW, Some(UNION_NEW));
    out.push(
        n(sp(base(build("copy-both"), &st("copy"))))
            .wild("W")
            .edge("W", labels::EL, "S")
            .edge("W", labels::EL, "P")
            .relabel("W", labels::EL, BX, "S")
            .relabel("W", labels::EL, BY, "P")
            .add("W", labels::EL, "N")
            .build(),
    );
    for (cell, mark, tag) in [("S", BX, "copy-left"), ("P", BY, "copy-right")] {
        out.push(
            n(reg(base(build(tag), &st("copy")), cell, if cell == "S" { a } else { b }, set))
                .wild("W")
                .edge("W", labels::EL, cell)
                .relabel("W", labels::EL, mark, cell)
                .add("W", labels::EL, "N")
                .build(),
        );
    }
    out.push(
        n(base(build("commit"), &st("copy")))
            .recolor("N", colors::SET)
            .remove(C, NEW, "N")
            .add(C, dst, "N")
            .recolor(C, &st("brestore"))
            .build(),
    );
    for (cell, mark, tag) in [("S", BX, "restore-left"), ("P", BY, "restore-right")] {
        out.push(
            reg(base(build(tag), &st("brestore")), cell, if cell == "S" { a } else { b }, set)
                .wild("W")
                .edge("W", mark, cell)
                .relabel("W", mark, labels::EL, cell)
                .build(),
        );
    }
    out.push(base(build("restored"), &st("brestore")).recolor(C, &st("untag")).build());

    out.push(
        z(base(clean("untag"), &st("untag")))
            .wild("U")
            .edge("Z", NU, "U")
            .relabel("Z", NU, labels::EL, "U")
            .build(),
    );
    out.push(base(clean("untagged"), &st("untag")).recolor(C, &st("fin")).build());
    out.push(
        z(base(clean("fin"), &st("fin")))
            .remove(C, SEED, "Z")
            .recolor(C, next)
            .build(),
    );
    out
}

struct Cx<'p> {
    program: &'p Program,
    opts: CompileOptions,
    rules: Vec<Rule>,
    pcs: usize,
    temps: usize,
    ops: usize,
    /// Function written by each write slot.
    slots: Vec<String>,
}

type Env = Vec<(String, String)>;

impl Cx<'_> {
    fn pc(&mut self) -> String {
        self.pcs += 1;
        format!("pc{}", self.pcs)
    }

    fn temp(&mut self) -> String {
        self.temps += 1;
        tmp_reg(self.temps - 1)
    }

    fn emit_to(&mut self, op: Op, cur: &str, next: &str) {
        self.ops += 1;
        let rules = op_rules(&op, self.ops, cur, next, self.opts);
        self.rules.extend(rules);
    }

    fn emit(&mut self, op: Op, cur: &mut String) {
        let next = self.pc();
        self.emit_to(op, cur, &next);
        *cur = next;
    }

    fn term(&mut self, t: &Term, cur: &mut String, env: &Env) -> String {
        match t {
            Term::Crit(n) => n.clone(),
            Term::Local(x) => env
                .iter()
                .rev()
                .find(|(y, _)| y == x)
                .map(|(_, r)| r.clone())
                .expect("validated program"),
            Term::Empty => labels::EMPTY.to_string(),
            Term::Singleton(a) => {
                let src = self.term(a, cur, env);
                let dst = self.temp();
                self.emit(Op::Singleton { dst: dst.clone(), src }, cur);
                dst
            }
            Term::Union(a, b) => {
                let a = self.term(a, cur, env);
                let b = self.term(b, cur, env);
                let dst = self.temp();
                self.emit(Op::Union { dst: dst.clone(), a, b }, cur);
                dst
            }
            Term::Pair(a, b) => {
                let a = self.term(a, cur, env);
                let b = self.term(b, cur, env);
                let dst = self.temp();
                self.emit(Op::Pair { dst: dst.clone(), a, b }, cur);
                dst
            }
            Term::App(f, args) => {
                let args = args.iter().map(|a| self.term(a, cur, env)).collect();
                let dst = self.temp();
                self.emit(
                    Op::Read {
                        dst: dst.clone(),
                        f: f.clone(),
                        args,
                    },
                    cur,
                );
                dst
            }
        }
    }

    fn cond(&mut self, c: &Cond, pc: &str, yes: &str, no: &str, env: &Env) {
        match c {
            Cond::In(a, b) | Cond::Eq(a, b) | Cond::Ne(a, b) => {
                let mut cur = pc.to_string();
                let a = self.term(a, &mut cur, env);
                let b = self.term(b, &mut cur, env);
                self.ops += 1;
                let (test, yes, no) = match c {
                    Cond::In(..) => (Test::In { a, b }, yes, no),
                    Cond::Eq(..) => (Test::Eq { a, b }, yes, no),
                    _ => (Test::Eq { a, b }, no, yes),
                };
                let rules = test_group(self.ops, &cur, &test, yes, no);
                self.rules.extend(rules);
            }
            Cond::Not(c) => self.cond(c, pc, no, yes, env),
            Cond::And(a, b) => {
                let mid = self.pc();
                self.cond(a, pc, &mid, no, env);
                self.cond(b, &mid, yes, no, env);
            }
            Cond::Or(a, b) => {
                let mid = self.pc();
                self.cond(a, pc, yes, &mid, env);
                self.cond(b, &mid, yes, no, env);
            }
        }
    }

    fn stmt(&mut self, s: &Stmt, pc: &str, out: &str, env: &mut Env) {
        match s {
            Stmt::Assign(Lhs::Crit(t), term) => {
                let mut cur = pc.to_string();
                let src = self.term(term, &mut cur, env);
                let op = Op::Copy {
                    dst: pending_reg(t),
                    src,
                    phase: phases::ASSIGN,
                };
                self.emit_to(op, &cur, out);
            }
            Stmt::Assign(Lhs::Loc(f, args), term) => {
                let mut cur = pc.to_string();
                let src = self.term(term, &mut cur, env);
                let args = args.iter().map(|a| self.term(a, &mut cur, env)).collect();
                let slot = self.slots.len();
                self.slots.push(f.clone());
                self.emit(Op::TupleWrite { slot, args }, &mut cur);
                let op = Op::Copy {
                    dst: write_value_reg(slot),
                    src,
                    phase: phases::WRITE,
                };
                self.emit_to(op, &cur, out);
            }
            Stmt::If(c, a, b) => {
                let yes = self.pc();
                match b {
                    Some(b) => {
                        let no = self.pc();
                        self.cond(c, pc, &yes, &no, env);
                        self.stmt(a, &yes, out, env);
                        self.stmt(b, &no, out, env);
                    }
                    None => {
                        self.cond(c, pc, &yes, out, env);
                        self.stmt(a, &yes, out, env);
                    }
                }
            }
            Stmt::Let(x, t, body) => {
                let mut cur = pc.to_string();
                let r = self.term(t, &mut cur, env);
                env.push((x.clone(), r));
                self.stmt(body, &cur, out, env);
                env.pop();
            }
            Stmt::LetChoose(x, t, body) => {
                let mut cur = pc.to_string();
                let set = self.term(t, &mut cur, env);
                let dst = self.temp();
                self.emit(Op::Choose { dst: dst.clone(), set }, &mut cur);
                env.push((x.clone(), dst));
                self.stmt(body, &cur, out, env);
                env.pop();
            }
            Stmt::Par(v) if v.is_empty() => self.emit_to(Op::Skip, pc, out),
            Stmt::Par(v) => {
                let mut cur = pc.to_string();
                for (i, s) in v.iter().enumerate() {
                    let next = if i + 1 == v.len() {
                        out.to_string()
                    } else {
                        self.pc()
                    };
                    self.stmt(s, &cur, &next, env);
                    cur = next;
                }
            }
        }
    }

    /// Clash detection, temporary cleanup and commit.
    fn finish(&mut self, clash: &str) {
        let clear = self.pc();
        let commit = self.pc();
        let commit_e = format!("{commit}.e");
        for i in 0..self.slots.len() {
            for j in i + 1..self.slots.len() {
                if self.slots[i] != self.slots[j] {
                    continue;
                }
                self.rules.push(
                    base(name(phases::STEP, "clash", &format!("{i}-{j}")), clash)
                        .wild("T")
                        .edge(C, &write_tuple_reg(i), "T")
                        .edge(C, &write_tuple_reg(j), "T")
                        .wild("V1")
                        .edge(C, &write_value_reg(i), "V1")
                        .wild("V2")
                        .edge(C, &write_value_reg(j), "V2")
                        .recolor(C, ERR_CLASH)
                        .build(),
                );
            }
        }
        self.rules.push(
            base(name(phases::STEP, "clash", "none"), clash)
                .recolor(C, &clear)
                .build(),
        );
        for k in 0..self.temps {
            self.rules.push(
                reg(base(name(phases::CLEANUP, "clear", &k.to_string()), &clear), "X", &tmp_reg(k), None)
                    .remove(C, &tmp_reg(k), "X")
                    .build(),
            );
        }
        self.rules.push(
            base(name(phases::CLEANUP, "clear", "done"), &clear)
                .recolor(C, &commit)
                .build(),
        );

        let mut commits = Vec::new();
        for t in &self.program.terms {
            let pend = pending_reg(t);
            let r = base(name(phases::STEP, "commit", t), &commit)
                .wild("N")
                .edge(C, &pend, "N")
                .wild("O")
                .edge(C, t, "O")
                .remove(C, t, "O")
                .add(C, t, "N")
                .remove(C, &pend, "N")
                .recolor(C, &commit_e)
                .build();
            commits.extend(with_aliases(r, &["N".to_string(), "O".to_string()]));
        }
        for (i, f) in self.slots.iter().enumerate() {
            let val = labels::val(f);
            let (wt, wv) = (write_tuple_reg(i), write_value_reg(i));
            let regs = |bl: RuleBuilder| {
                bl.wild("T")
                    .edge(C, &wt, "T")
                    .wild("V")
                    .edge(C, &wv, "V")
                    .add(C, f, "T")
                    .remove(C, &wt, "T")
                    .remove(C, &wv, "V")
                    .add("T", &val, "V")
                    .recolor(C, &commit_e)
            };
            let replace = regs(base(name(phases::STEP, "commit", &format!("w{i}:replace")), &commit))
                .wild("O")
                .edge("T", &val, "O")
                .remove("T", &val, "O")
                .build();
            commits.extend(with_aliases(replace, &["V".to_string(), "O".to_string()]));
            commits.push(regs(base(name(phases::STEP, "commit", &format!("w{i}:new")), &commit)).build());
        }
        for r in &commits {
            let mut e = r.clone();
            e.name = format!("{}.e", r.name);
            e.pattern.cells[0].color = Some(Color::new(&commit_e));
            self.rules.push(e);
        }
        self.rules.extend(commits);
        self.rules.push(
            base(name(phases::STEP, "commit", "none"), &commit)
                .recolor(C, HALT)
                .build(),
        );
        self.rules.push(
            base(name(phases::STEP, "commit", "done"), &commit_e)
                .recolor(C, colors::IDLE)
                .build(),
        );
    }
}

/// Compiles a validated program into an automaton.
pub fn compile(p: &Program, opts: CompileOptions) -> Result<CompilationUnit, CompileError> {
    let violations = validate(p);
    if !violations.is_empty() {
        return Err(CompileError::Invalid(violations));
    }
    let mut cx = Cx {
        program: p,
        opts,
        rules: Vec::new(),
        pcs: 0,
        temps: 0,
        ops: 0,
        slots: Vec::new(),
    };
    let clash = cx.pc();
    cx.stmt(&p.body, colors::IDLE, &clash, &mut Vec::new());
    cx.finish(&clash);

    let mut extra_colors: Vec<String> = vec![
        colors::ATOM.into(),
        colors::SET.into(),
        colors::PAIR.into(),
        colors::IDLE.into(),
    ];
    extra_colors.extend(p.functions.iter().map(|(_, k)| colors::tuple(*k)));
    let mut extra_labels: Vec<String> = vec![
        labels::EL.into(),
        labels::FST.into(),
        labels::SND.into(),
        labels::EMPTY.into(),
    ];
    let mut label_map = BTreeMap::new();
    for t in &p.terms {
        extra_labels.push(t.clone());
        label_map.insert(t.clone(), t.clone());
    }
    for (f, k) in &p.functions {
        extra_labels.push(f.clone());
        extra_labels.push(labels::val(f));
        extra_labels.extend((1..=*k).map(labels::arg));
        label_map.insert(f.clone(), f.clone());
        label_map.insert(format!("{f} value"), labels::val(f));
    }
    label_map.insert("empty".into(), labels::EMPTY.into());
    let ec: Vec<&str> = extra_colors.iter().map(String::as_str).collect();
    let el: Vec<&str> = extra_labels.iter().map(String::as_str).collect();
    let ruleset = RuleSet::from_rules(cx.rules, &ec, &el, opts.negative_edges);
    let phase_tags = phases::ALL
        .iter()
        .copied()
        .filter(|ph| ruleset.rules.iter().any(|r| r.phase() == *ph))
        .collect();
    Ok(CompilationUnit {
        program: p.clone(),
        ruleset,
        label_map,
        phase_tags,
    })
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub seed: u64,
    pub mode: Mode,
    /// ASM steps (returns to `idle`) before stopping.
    pub max_steps: u64,
    pub max_ticks: u64,
    pub check_invariants: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            seed: 0,
            mode: Mode::Deterministic,
            max_steps: crate::interpreter::DEFAULT_MAX_STEPS,
            max_ticks: crate::automaton::DEFAULT_MAX_TICKS,
            check_invariants: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SimOutcome {
    Halted,
    /// Stopped in an `error:` color.
    Error(String),
    /// Step or tick budget used up.
    Budget,
    /// No rule applies at a color that is neither final nor an error.
    Stuck(String),
}

impl SimOutcome {
    /// Same classes as the interpreter's outcomes.
    pub fn class(&self) -> &'static str {
        match self {
            SimOutcome::Halted => "terminal",
            SimOutcome::Error(_) | SimOutcome::Stuck(_) => "error",
            SimOutcome::Budget => "budget",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimResult {
    pub tangle: Tangle,
    pub steps: u64,
    pub stats: StepStats,
    pub outcome: SimOutcome,
}

impl SimResult {
    pub fn state(&self) -> Result<State, DecodeError> {
        Ok(decode(&self.tangle)?.normalized())
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Run(#[from] RunError),
}

fn final_outcome(g: &Tangle) -> SimOutcome {
    let color = g.node(g.criticals()).color.as_str().to_string();
    if color == HALT {
        SimOutcome::Halted
    } else if color.starts_with("error:") {
        SimOutcome::Error(color)
    } else {
        SimOutcome::Stuck(color)
    }
}

/// Runs the compiled automaton from `s0`. As with the interpreter, a run
/// that has used its step budget still counts as halted if the next step
/// would halt.
pub fn simulate(unit: &CompilationUnit, s0: &State, opts: SimOptions) -> Result<SimResult, SimError> {
    simulate_observed(unit, s0, opts, &mut |_, _, _| {})
}

/// [`simulate`], calling `observe` after every tick of the main run.
pub fn simulate_observed(
    unit: &CompilationUnit,
    s0: &State,
    opts: SimOptions,
    observe: &mut dyn FnMut(&crate::pattern::Match, &Tangle, u64),
) -> Result<SimResult, SimError> {
    let engine = Engine::new(&unit.ruleset);
    let mut cfg = Configuration::seeded(unit.initial_tangle(s0), opts.seed, opts.mode);
    let run_opts = RunOptions {
        max_ticks: opts.max_ticks,
        check_invariants: opts.check_invariants,
    };
    let mut steps = 0;
    let limit = opts.max_steps;
    let mut at_idle = |m: &crate::pattern::Match, g: &Tangle, tick: u64| {
        observe(m, g, tick);
        if g.node(g.criticals()).color.as_str() == colors::IDLE {
            steps += 1;
        }
        steps >= limit
    };
    let (stats, outcome) = if limit == 0 {
        (StepStats::default(), Outcome::Stopped)
    } else {
        engine.run_observed(&mut cfg, run_opts, &mut at_idle)?
    };
    let outcome = match outcome {
        Outcome::Quiescent => final_outcome(&cfg.tangle),
        Outcome::BudgetExhausted => SimOutcome::Budget,
        Outcome::Stopped => {
            let mut peek = cfg.clone();
            let mut back = |_: &crate::pattern::Match, g: &Tangle, _: u64| {
                g.node(g.criticals()).color.as_str() == colors::IDLE
            };
            let peek_opts = RunOptions {
                max_ticks: opts.max_ticks.saturating_sub(stats.total),
                check_invariants: false,
            };
            match engine.run_observed(&mut peek, peek_opts, &mut back)?.1 {
                Outcome::Quiescent if final_outcome(&peek.tangle) == SimOutcome::Halted => {
                    SimOutcome::Halted
                }
                _ => SimOutcome::Budget,
            }
        }
    };
    Ok(SimResult {
        tangle: cfg.tangle,
        steps,
        stats,
        outcome,
    })
}
