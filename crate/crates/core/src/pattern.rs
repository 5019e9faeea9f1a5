//! Transition rules: neighborhood patterns anchored at the active cell,
//! rewrites, matching, and the maximality precedence filter.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};
use std::fmt::{self, Write as _};

use thiserror::Error;

use crate::tangle::{Color, EdgeLabel, NodeId, NodeKind, Tangle};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatternCell {
    pub name: String,
    /// `None` matches any color.
    pub color: Option<Color>,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct PatternEdge {
    pub src: String,
    pub label: EdgeLabel,
    pub dst: String,
}

impl PatternEdge {
    pub fn new(src: &str, label: &str, dst: &str) -> Self {
        PatternEdge {
            src: src.to_string(),
            label: EdgeLabel::new(label),
            dst: dst.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Pattern {
    pub cells: Vec<PatternCell>,
    pub edges: Vec<PatternEdge>,
    pub focus: String,
}

impl Pattern {
    pub fn cell_index(&self, name: &str) -> Option<usize> {
        self.cells.iter().position(|c| c.name == name)
    }

    /// Largest undirected hop distance from the focus; `None` if some cell
    /// is unreachable.
    pub fn radius(&self) -> Option<usize> {
        let focus = self.cell_index(&self.focus)?;
        let n = self.cells.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if let (Some(a), Some(b)) = (self.cell_index(&e.src), self.cell_index(&e.dst)) {
                adj[a].push(b);
                adj[b].push(a);
            }
        }
        let mut dist = vec![usize::MAX; n];
        dist[focus] = 0;
        let mut q = VecDeque::from([focus]);
        while let Some(x) = q.pop_front() {
            for &y in &adj[x] {
                if dist[y] == usize::MAX {
                    dist[y] = dist[x] + 1;
                    q.push_back(y);
                }
            }
        }
        if dist.contains(&usize::MAX) {
            None
        } else {
            dist.into_iter().max()
        }
    }

    /// True if the directed pattern edges contain a cycle (self-loops count).
    pub fn has_directed_cycle(&self) -> bool {
        let n = self.cells.len();
        let mut adj = vec![Vec::new(); n];
        for e in &self.edges {
            if let (Some(a), Some(b)) = (self.cell_index(&e.src), self.cell_index(&e.dst)) {
                if a == b {
                    return true;
                }
                adj[a].push(b);
            }
        }
        // Kahn
        let mut indeg = vec![0usize; n];
        for succ in &adj {
            for &b in succ {
                indeg[b] += 1;
            }
        }
        let mut q: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(x) = q.pop() {
            seen += 1;
            for &y in &adj[x] {
                indeg[y] -= 1;
                if indeg[y] == 0 {
                    q.push(y);
                }
            }
        }
        seen != n
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Creation {
    pub name: String,
    pub color: Color,
    pub kind: NodeKind,
}

/// Right-hand side of a rule. Right-side names are either fresh (listed in
/// `creations`) or mapped onto a left cell through `correspondence`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Rewrite {
    /// (right name, left name)
    pub correspondence: Vec<(String, String)>,
    pub creations: Vec<Creation>,
    pub recolor: Vec<(String, Color)>,
    pub add_edges: Vec<PatternEdge>,
    pub remove_edges: Vec<PatternEdge>,
    /// Right-side cell to become active; the active cell stays put if `None`.
    pub activate: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Rule {
    pub name: String,
    pub pattern: Pattern,
    pub rewrite: Rewrite,
    /// Edges that must be absent (engine extension).
    pub negative_edges: Vec<PatternEdge>,
}

impl Rule {
    pub fn builder(name: impl Into<String>) -> RuleBuilder {
        RuleBuilder {
            name: name.into(),
            cells: Vec::new(),
            edges: Vec::new(),
            focus: None,
            negative: Vec::new(),
            rewrite: Rewrite::default(),
        }
    }

    /// Phase tag: the rule-name prefix before the first `:`.
    pub fn phase(&self) -> &str {
        self.name.split(':').next().unwrap_or("")
    }
}

/// Convenience constructor. Left cells correspond to themselves on the right.
#[derive(Debug, Clone)]
pub struct RuleBuilder {
    name: String,
    cells: Vec<PatternCell>,
    edges: Vec<PatternEdge>,
    focus: Option<String>,
    negative: Vec<PatternEdge>,
    rewrite: Rewrite,
}

impl RuleBuilder {
    pub fn cell(mut self, name: &str, color: &str) -> Self {
        self.cells.push(PatternCell {
            name: name.to_string(),
            color: Some(Color::new(color)),
        });
        self
    }

    pub fn wild(mut self, name: &str) -> Self {
        self.cells.push(PatternCell {
            name: name.to_string(),
            color: None,
        });
        self
    }

    /// Adds a cell unless present; a wildcard cell is narrowed to `color`.
    pub fn ensure_cell(mut self, name: &str, color: Option<&str>) -> Self {
        match self.cells.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                if c.color.is_none() {
                    c.color = color.map(Color::new);
                }
            }
            None => self.cells.push(PatternCell {
                name: name.to_string(),
                color: color.map(Color::new),
            }),
        }
        self
    }

    pub fn focus(mut self, name: &str) -> Self {
        self.focus = Some(name.to_string());
        self
    }

    pub fn edge(mut self, src: &str, label: &str, dst: &str) -> Self {
        self.edges.push(PatternEdge::new(src, label, dst));
        self
    }

    pub fn neg(mut self, src: &str, label: &str, dst: &str) -> Self {
        self.negative.push(PatternEdge::new(src, label, dst));
        self
    }

    pub fn create(mut self, name: &str, color: &str, kind: NodeKind) -> Self {
        self.rewrite.creations.push(Creation {
            name: name.to_string(),
            color: Color::new(color),
            kind,
        });
        self
    }

    pub fn recolor(mut self, name: &str, color: &str) -> Self {
        self.rewrite
            .recolor
            .push((name.to_string(), Color::new(color)));
        self
    }

    pub fn add(mut self, src: &str, label: &str, dst: &str) -> Self {
        self.rewrite
            .add_edges
            .push(PatternEdge::new(src, label, dst));
        self
    }

    pub fn remove(mut self, src: &str, label: &str, dst: &str) -> Self {
        self.rewrite
            .remove_edges
            .push(PatternEdge::new(src, label, dst));
        self
    }

    /// Relabels a matched edge: remove `src -from-> dst`, add `src -to-> dst`.
    pub fn relabel(self, src: &str, from: &str, to: &str, dst: &str) -> Self {
        self.remove(src, from, dst).add(src, to, dst)
    }

    pub fn activate(mut self, name: &str) -> Self {
        self.rewrite.activate = Some(name.to_string());
        self
    }

    pub fn build(mut self) -> Rule {
        let focus = self
            .focus
            .or_else(|| self.cells.first().map(|c| c.name.clone()))
            .unwrap_or_default();
        self.rewrite.correspondence = self
            .cells
            .iter()
            .map(|c| (c.name.clone(), c.name.clone()))
            .collect();
        Rule {
            name: self.name,
            pattern: Pattern {
                cells: self.cells,
                edges: self.edges,
                focus,
            },
            rewrite: self.rewrite,
            negative_edges: self.negative,
        }
    }
}

/// A complete automaton: finite palette and alphabet, ordered rules.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleSet {
    pub palette: BTreeSet<Color>,
    pub labels: BTreeSet<EdgeLabel>,
    pub rules: Vec<Rule>,
    pub radius_bound: usize,
    /// Whether rules may carry negative edges.
    pub negative_edges: bool,
}

impl RuleSet {
    pub fn empty() -> Self {
        RuleSet {
            palette: BTreeSet::new(),
            labels: BTreeSet::new(),
            rules: Vec::new(),
            radius_bound: 1,
            negative_edges: false,
        }
    }

    /// Builds a rule set whose palette and alphabet are exactly what the
    /// rules mention, plus `extra_colors`/`extra_labels` (colors the initial
    /// tangle carries, for example).
    pub fn from_rules(
        rules: Vec<Rule>,
        extra_colors: &[&str],
        extra_labels: &[&str],
        negative_edges: bool,
    ) -> Self {
        let mut palette: BTreeSet<Color> = extra_colors.iter().map(|c| Color::new(c)).collect();
        let mut labels: BTreeSet<EdgeLabel> =
            extra_labels.iter().map(|l| EdgeLabel::new(l)).collect();
        let mut radius = 1;
        for r in &rules {
            palette.extend(r.pattern.cells.iter().filter_map(|c| c.color.clone()));
            palette.extend(r.rewrite.recolor.iter().map(|(_, c)| c.clone()));
            palette.extend(r.rewrite.creations.iter().map(|c| c.color.clone()));
            for e in r
                .pattern
                .edges
                .iter()
                .chain(&r.negative_edges)
                .chain(&r.rewrite.add_edges)
                .chain(&r.rewrite.remove_edges)
            {
                labels.insert(e.label.clone());
            }
            radius = radius.max(r.pattern.radius().unwrap_or(0));
        }
        RuleSet {
            palette,
            labels,
            rules,
            radius_bound: radius,
            negative_edges,
        }
    }

    pub fn rule(&self, name: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.name == name)
    }
}

/// One embedding of a rule's pattern anchored at the active node.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Match {
    pub rule: usize,
    pub rule_name: String,
    /// Node bound to each pattern cell, in pattern cell order.
    pub binding: Vec<NodeId>,
    /// Sorted, deduplicated set of matched nodes.
    pub cellset: Vec<NodeId>,
}

impl Match {
    fn new(rule: usize, name: &str, binding: Vec<NodeId>) -> Self {
        let mut cellset = binding.clone();
        cellset.sort();
        cellset.dedup();
        Match {
            rule,
            rule_name: name.to_string(),
            binding,
            cellset,
        }
    }
}

/// Search order: cells reachable from the focus in BFS order, each with the
/// pattern edge used to generate its candidates.
struct Plan {
    order: Vec<usize>,
    /// For position i > 0: (edge index, true if the already-bound end is the source)
    anchor: Vec<Option<(usize, bool)>>,
}

fn plan(p: &Pattern, idx: &[(usize, usize)]) -> Option<Plan> {
    let focus = p.cell_index(&p.focus)?;
    let n = p.cells.len();
    let mut placed = vec![false; n];
    let mut order = vec![focus];
    let mut anchor = vec![None];
    placed[focus] = true;
    let mut head = 0;
    while head < order.len() {
        let x = order[head];
        head += 1;
        for (ei, &(a, b)) in idx.iter().enumerate() {
            if a == x && !placed[b] {
                placed[b] = true;
                order.push(b);
                anchor.push(Some((ei, true)));
            } else if b == x && !placed[a] {
                placed[a] = true;
                order.push(a);
                anchor.push(Some((ei, false)));
            }
        }
    }
    // cells disconnected from the focus range over the whole graph
    for (i, done) in placed.iter().enumerate() {
        if !done {
            order.push(i);
            anchor.push(None);
        }
    }
    Some(Plan { order, anchor })
}

fn edge_indices(p: &Pattern, edges: &[PatternEdge]) -> Option<Vec<(usize, usize)>> {
    edges
        .iter()
        .map(|e| Some((p.cell_index(&e.src)?, p.cell_index(&e.dst)?)))
        .collect()
}

fn color_ok(g: &Tangle, cell: &PatternCell, n: NodeId) -> bool {
    cell.color.as_ref().is_none_or(|c| *c == g.node(n).color)
}

/// All embeddings of one rule with the focus bound to `active`, sorted by
/// binding.
pub fn match_rule(g: &Tangle, rule_index: usize, rule: &Rule, active: NodeId) -> Vec<Match> {
    let p = &rule.pattern;
    let Some(focus) = p.cell_index(&p.focus) else {
        return Vec::new();
    };
    if !color_ok(g, &p.cells[focus], active) {
        return Vec::new();
    }
    let Some(idx) = edge_indices(p, &p.edges) else {
        return Vec::new();
    };
    let Some(neg) = edge_indices(p, &rule.negative_edges) else {
        return Vec::new();
    };
    let Some(plan) = plan(p, &idx) else {
        return Vec::new();
    };
    let n = p.cells.len();
    // edges to verify once both ends are bound, keyed by the later position
    let mut pos = vec![0; n];
    for (i, &c) in plan.order.iter().enumerate() {
        pos[c] = i;
    }
    let mut checks: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (ei, &(a, b)) in idx.iter().enumerate() {
        checks[pos[a].max(pos[b])].push(ei);
    }
    let mut out = Vec::new();
    let mut binding = vec![NodeId(u32::MAX); n];
    binding[focus] = active;
    let ctx = Search {
        g,
        p,
        idx: &idx,
        neg: &neg,
        negative: &rule.negative_edges,
        plan: &plan,
        checks: &checks,
    };
    if ctx.edges_hold(0, &binding) {
        ctx.extend(1, &mut binding, &mut |b| {
            out.push(Match::new(rule_index, &rule.name, b.to_vec()))
        });
    }
    out.sort_by(|a, b| a.binding.cmp(&b.binding));
    out
}

struct Search<'a> {
    g: &'a Tangle,
    p: &'a Pattern,
    idx: &'a [(usize, usize)],
    neg: &'a [(usize, usize)],
    negative: &'a [PatternEdge],
    plan: &'a Plan,
    checks: &'a [Vec<usize>],
}

impl Search<'_> {
    fn edges_hold(&self, depth: usize, b: &[NodeId]) -> bool {
        self.checks[depth].iter().all(|&ei| {
            let (s, d) = self.idx[ei];
            self.g.has_edge(b[s], &self.p.edges[ei].label, b[d])
        })
    }

    fn extend(&self, depth: usize, b: &mut Vec<NodeId>, emit: &mut dyn FnMut(&[NodeId])) {
        if depth == self.plan.order.len() {
            let blocked = self.neg.iter().zip(self.negative).any(|(&(s, d), e)| {
                self.g.has_edge(b[s], &e.label, b[d])
            });
            if !blocked {
                emit(b);
            }
            return;
        }
        let cell = self.plan.order[depth];
        let candidates: Vec<NodeId> = match self.plan.anchor[depth] {
            Some((ei, bound_is_src)) => {
                let (s, d) = self.idx[ei];
                let label = &self.p.edges[ei].label;
                if bound_is_src {
                    self.g.targets(b[s], label).collect()
                } else {
                    self.g.sources(b[d], label).collect()
                }
            }
            None => self.g.node_ids().collect(),
        };
        let bound = &self.plan.order[..depth];
        for n in candidates {
            if bound.iter().any(|&c| b[c] == n) || !color_ok(self.g, &self.p.cells[cell], n) {
                continue;
            }
            b[cell] = n;
            if self.edges_hold(depth, b) {
                self.extend(depth + 1, b, emit);
            }
        }
        b[cell] = NodeId(u32::MAX);
    }
}

/// Every match of every rule at the active node, before precedence
/// filtering. Ordered by rule, then binding.
pub fn match_all(g: &Tangle, rules: &RuleSet) -> Vec<Match> {
    let active = g.active();
    rules
        .rules
        .iter()
        .enumerate()
        .flat_map(|(i, r)| match_rule(g, i, r, active))
        .collect()
}

fn is_strict_subset(small: &[NodeId], big: &[NodeId]) -> bool {
    if small.len() >= big.len() {
        return false;
    }
    let mut j = 0;
    for x in small {
        while j < big.len() && big[j] < *x {
            j += 1;
        }
        if j == big.len() || big[j] != *x {
            return false;
        }
        j += 1;
    }
    true
}

/// Drops every match whose cellset is a strict subset of another match's
/// cellset. Matches with equal cellsets survive together.
pub fn maximality_filter(matches: Vec<Match>) -> Vec<Match> {
    let keep: Vec<bool> = matches
        .iter()
        .map(|m| {
            !matches
                .iter()
                .any(|other| is_strict_subset(&m.cellset, &other.cellset))
        })
        .collect();
    matches
        .into_iter()
        .zip(keep)
        .filter_map(|(m, k)| k.then_some(m))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ApplyError {
    #[error("stale match for rule {rule}: {reason}")]
    Stale { rule: String, reason: String },
    #[error("rule {rule} refers to unknown right-side cell {cell}")]
    UnknownCell { rule: String, cell: String },
}

/// Applies a match in place. All creations, edge removals, edge additions
/// and recolorings happen together; nothing outside the match is touched.
/// Returns the ids of created nodes.
pub fn apply(g: &mut Tangle, rules: &RuleSet, m: &Match) -> Result<Vec<NodeId>, ApplyError> {
    let rule = rules.rules.get(m.rule).ok_or_else(|| ApplyError::Stale {
        rule: m.rule_name.clone(),
        reason: "no such rule".into(),
    })?;
    apply_rule(g, rule, m)
}

pub fn apply_rule(g: &mut Tangle, rule: &Rule, m: &Match) -> Result<Vec<NodeId>, ApplyError> {
    let p = &rule.pattern;
    let stale = |reason: String| ApplyError::Stale {
        rule: rule.name.clone(),
        reason,
    };
    if m.binding.len() != p.cells.len() {
        return Err(stale("binding size".into()));
    }
    for (cell, &n) in p.cells.iter().zip(&m.binding) {
        if !g.contains_node(n) {
            return Err(stale(format!("node {n} missing")));
        }
        if !color_ok(g, cell, n) {
            return Err(stale(format!("color of {n}")));
        }
    }
    let left = |name: &str| p.cell_index(name).map(|i| m.binding[i]);
    for e in &p.edges {
        let (Some(s), Some(d)) = (left(&e.src), left(&e.dst)) else {
            return Err(stale("pattern edge endpoint".into()));
        };
        if !g.has_edge(s, &e.label, d) {
            return Err(stale(format!("edge {s} {} {d} missing", e.label)));
        }
    }
    for e in &rule.negative_edges {
        if let (Some(s), Some(d)) = (left(&e.src), left(&e.dst)) {
            if g.has_edge(s, &e.label, d) {
                return Err(stale(format!("negative edge {s} {} {d} present", e.label)));
            }
        }
    }
    let rw = &rule.rewrite;
    let mut right: HashMap<&str, NodeId> = HashMap::new();
    for (r, l) in &rw.correspondence {
        let n = left(l).ok_or_else(|| ApplyError::UnknownCell {
            rule: rule.name.clone(),
            cell: l.clone(),
        })?;
        right.insert(r, n);
    }
    let mut created = Vec::new();
    for c in &rw.creations {
        let n = g.add_node(c.color.clone(), c.kind.clone());
        right.insert(&c.name, n);
        created.push(n);
    }
    let resolve = |name: &str| -> Result<NodeId, ApplyError> {
        right.get(name).copied().ok_or_else(|| ApplyError::UnknownCell {
            rule: rule.name.clone(),
            cell: name.to_string(),
        })
    };
    for e in &rw.remove_edges {
        let (s, d) = (resolve(&e.src)?, resolve(&e.dst)?);
        g.remove_edge(s, &e.label, d);
    }
    for e in &rw.add_edges {
        let (s, d) = (resolve(&e.src)?, resolve(&e.dst)?);
        g.add_edge(s, &e.label, d);
    }
    for (name, color) in &rw.recolor {
        let n = resolve(name)?;
        g.set_color(n, color.clone());
    }
    if let Some(a) = &rw.activate {
        let n = resolve(a)?;
        g.set_active(n);
    }
    Ok(created)
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleViolation {
    #[error("rule {rule}: pattern radius exceeds bound {bound}")]
    Radius { rule: String, bound: usize },
    #[error("rule {rule}: pattern loop")]
    PatternLoop { rule: String },
    #[error("rule {rule}: color {color} not in palette")]
    Palette { rule: String, color: String },
    #[error("rule {rule}: label {label} not in alphabet")]
    Alphabet { rule: String, label: String },
    #[error("rule {rule}: uncovered cell {cell}")]
    UncoveredCell { rule: String, cell: String },
    #[error("rule {rule}: removed edge {edge} is not a pattern edge")]
    RemoveUnmatched { rule: String, edge: String },
    #[error("rule {rule}: negative edges need the engine extension")]
    NegativeEdges { rule: String },
    #[error("rule {rule}: bad focus or duplicate cell {cell}")]
    BadCell { rule: String, cell: String },
    #[error("rule {rule}: cannot create node of kind {kind}")]
    BadCreation { rule: String, kind: String },
    #[error("duplicate rule name {rule}")]
    DuplicateName { rule: String },
}

/// Checks the static well-formedness conditions of a rule set. An empty
/// result means the rule set is valid.
pub fn validate_ruleset(rs: &RuleSet) -> Vec<RuleViolation> {
    let mut out = Vec::new();
    let mut names = BTreeSet::new();
    for r in &rs.rules {
        let rule = r.name.clone();
        if !names.insert(r.name.as_str()) {
            out.push(RuleViolation::DuplicateName { rule: rule.clone() });
        }
        let p = &r.pattern;
        let mut cells = BTreeSet::new();
        for c in &p.cells {
            if !cells.insert(c.name.as_str()) {
                out.push(RuleViolation::BadCell {
                    rule: rule.clone(),
                    cell: c.name.clone(),
                });
            }
        }
        if p.cell_index(&p.focus).is_none() {
            out.push(RuleViolation::BadCell {
                rule: rule.clone(),
                cell: p.focus.clone(),
            });
            continue;
        }
        match p.radius() {
            Some(d) if d <= rs.radius_bound => {}
            _ => out.push(RuleViolation::Radius {
                rule: rule.clone(),
                bound: rs.radius_bound,
            }),
        }
        if p.has_directed_cycle() {
            out.push(RuleViolation::PatternLoop { rule: rule.clone() });
        }
        let rw = &r.rewrite;
        let colors = p
            .cells
            .iter()
            .filter_map(|c| c.color.as_ref())
            .chain(rw.recolor.iter().map(|(_, c)| c))
            .chain(rw.creations.iter().map(|c| &c.color));
        for c in colors {
            if !rs.palette.contains(c) {
                out.push(RuleViolation::Palette {
                    rule: rule.clone(),
                    color: c.to_string(),
                });
            }
        }
        let all_edges = p
            .edges
            .iter()
            .chain(&r.negative_edges)
            .chain(&rw.add_edges)
            .chain(&rw.remove_edges);
        for e in all_edges {
            if !rs.labels.contains(&e.label) {
                out.push(RuleViolation::Alphabet {
                    rule: rule.clone(),
                    label: e.label.to_string(),
                });
            }
        }
        for e in p.edges.iter().chain(&r.negative_edges) {
            for end in [&e.src, &e.dst] {
                if p.cell_index(end).is_none() {
                    out.push(RuleViolation::BadCell {
                        rule: rule.clone(),
                        cell: end.clone(),
                    });
                }
            }
        }
        if !r.negative_edges.is_empty() && !rs.negative_edges {
            out.push(RuleViolation::NegativeEdges { rule: rule.clone() });
        }
        // right side: every left cell needs an image, every used name a source
        let mut right: BTreeMap<&str, Option<&str>> = BTreeMap::new();
        for (rn, ln) in &rw.correspondence {
            right.insert(rn, Some(ln));
        }
        for c in &rw.creations {
            right.insert(&c.name, None);
            if !matches!(c.kind, NodeKind::Set | NodeKind::Pair | NodeKind::Tuple(_)) {
                out.push(RuleViolation::BadCreation {
                    rule: rule.clone(),
                    kind: c.kind.tag(),
                });
            }
        }
        let covered: BTreeSet<&str> = rw.correspondence.iter().map(|(_, l)| l.as_str()).collect();
        for c in &p.cells {
            if !covered.contains(c.name.as_str()) {
                out.push(RuleViolation::UncoveredCell {
                    rule: rule.clone(),
                    cell: c.name.clone(),
                });
            }
        }
        for (_, ln) in &rw.correspondence {
            if p.cell_index(ln).is_none() {
                out.push(RuleViolation::UncoveredCell {
                    rule: rule.clone(),
                    cell: ln.clone(),
                });
            }
        }
        let used = rw
            .add_edges
            .iter()
            .chain(&rw.remove_edges)
            .flat_map(|e| [&e.src, &e.dst])
            .chain(rw.recolor.iter().map(|(n, _)| n))
            .chain(rw.activate.iter());
        for n in used {
            if !right.contains_key(n.as_str()) {
                out.push(RuleViolation::UncoveredCell {
                    rule: rule.clone(),
                    cell: n.clone(),
                });
            }
        }
        for e in &rw.remove_edges {
            let to_left = |n: &str| right.get(n).copied().flatten();
            let matched = match (to_left(&e.src), to_left(&e.dst)) {
                (Some(s), Some(d)) => p
                    .edges
                    .iter()
                    .any(|pe| pe.src == s && pe.dst == d && pe.label == e.label),
                _ => false,
            };
            if !matched {
                out.push(RuleViolation::RemoveUnmatched {
                    rule: rule.clone(),
                    edge: format!("{} {} {}", e.src, e.label, e.dst),
                });
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct RuleSetParseError {
    pub line: usize,
    pub msg: String,
}

fn parse_kind(s: &str) -> Option<NodeKind> {
    match s {
        "set" => Some(NodeKind::Set),
        "pair" => Some(NodeKind::Pair),
        _ => s
            .strip_prefix("tuple(")
            .and_then(|r| r.strip_suffix(')'))
            .and_then(|k| k.parse().ok())
            .map(NodeKind::Tuple),
    }
}

fn write_edge(out: &mut String, kw: &str, e: &PatternEdge) {
    let _ = writeln!(out, "  {kw} {} {} {}", e.src, e.label, e.dst);
}

impl RuleSet {
    /// Line-oriented text form; `parse` reads it back.
    pub fn serialize(&self) -> String {
        let mut out = String::from("ruleset\n");
        let _ = writeln!(out, "radius {}", self.radius_bound);
        let _ = writeln!(
            out,
            "negative-edges {}",
            if self.negative_edges { "on" } else { "off" }
        );
        for c in &self.palette {
            let _ = writeln!(out, "color {c}");
        }
        for l in &self.labels {
            let _ = writeln!(out, "label {l}");
        }
        for r in &self.rules {
            let _ = writeln!(out, "rule {}", r.name);
            for c in &r.pattern.cells {
                let color = c.color.as_ref().map_or("*", |c| c.as_str());
                let _ = writeln!(out, "  cell {} {color}", c.name);
            }
            let _ = writeln!(out, "  focus {}", r.pattern.focus);
            for e in &r.pattern.edges {
                write_edge(&mut out, "edge", e);
            }
            for e in &r.negative_edges {
                write_edge(&mut out, "neg", e);
            }
            let rw = &r.rewrite;
            for (rn, ln) in &rw.correspondence {
                let _ = writeln!(out, "  keep {rn} {ln}");
            }
            for c in &rw.creations {
                let _ = writeln!(out, "  create {} {} {}", c.name, c.color, c.kind.tag());
            }
            for e in &rw.remove_edges {
                write_edge(&mut out, "remove", e);
            }
            for e in &rw.add_edges {
                write_edge(&mut out, "add", e);
            }
            for (n, c) in &rw.recolor {
                let _ = writeln!(out, "  recolor {n} {c}");
            }
            if let Some(a) = &rw.activate {
                let _ = writeln!(out, "  activate {a}");
            }
            out.push_str("end\n");
        }
        out
    }

    pub fn parse(src: &str) -> Result<RuleSet, RuleSetParseError> {
        let mut rs = RuleSet::empty();
        let mut current: Option<Rule> = None;
        let mut seen_header = false;
        for (i, raw) in src.lines().enumerate() {
            let line = i + 1;
            let err = |msg: &str| RuleSetParseError {
                line,
                msg: msg.to_string(),
            };
            let toks: Vec<&str> = raw.split('#').next().unwrap_or("").split_whitespace().collect();
            let Some((&kw, args)) = toks.split_first() else {
                continue;
            };
            if !seen_header {
                if kw != "ruleset" || !args.is_empty() {
                    return Err(err("expected `ruleset`"));
                }
                seen_header = true;
                continue;
            }
            let arity = |n: usize| {
                if args.len() == n {
                    Ok(())
                } else {
                    Err(err(&format!("`{kw}` takes {n} arguments")))
                }
            };
            let edge = || PatternEdge::new(args[0], args[1], args[2]);
            match (kw, current.as_mut()) {
                ("radius", None) => {
                    arity(1)?;
                    rs.radius_bound = args[0].parse().map_err(|_| err("bad radius"))?;
                }
                ("negative-edges", None) => {
                    arity(1)?;
                    rs.negative_edges = match args[0] {
                        "on" => true,
                        "off" => false,
                        _ => return Err(err("expected on or off")),
                    };
                }
                ("color", None) => {
                    arity(1)?;
                    rs.palette.insert(Color::new(args[0]));
                }
                ("label", None) => {
                    arity(1)?;
                    rs.labels.insert(EdgeLabel::new(args[0]));
                }
                ("rule", None) => {
                    arity(1)?;
                    current = Some(Rule {
                        name: args[0].to_string(),
                        pattern: Pattern {
                            cells: Vec::new(),
                            edges: Vec::new(),
                            focus: String::new(),
                        },
                        rewrite: Rewrite::default(),
                        negative_edges: Vec::new(),
                    });
                }
                ("end", Some(_)) => {
                    arity(0)?;
                    rs.rules.extend(current.take());
                }
                ("cell", Some(r)) => {
                    arity(2)?;
                    r.pattern.cells.push(PatternCell {
                        name: args[0].to_string(),
                        color: (args[1] != "*").then(|| Color::new(args[1])),
                    });
                }
                ("focus", Some(r)) => {
                    arity(1)?;
                    r.pattern.focus = args[0].to_string();
                }
                ("edge", Some(r)) => {
                    arity(3)?;
                    r.pattern.edges.push(edge());
                }
                ("neg", Some(r)) => {
                    arity(3)?;
                    r.negative_edges.push(edge());
                }
                ("keep", Some(r)) => {
                    arity(2)?;
                    r.rewrite
                        .correspondence
                        .push((args[0].to_string(), args[1].to_string()));
                }
                ("create", Some(r)) => {
                    arity(3)?;
                    let kind = parse_kind(args[2]).ok_or_else(|| err("bad node kind"))?;
                    r.rewrite.creations.push(Creation {
                        name: args[0].to_string(),
                        color: Color::new(args[1]),
                        kind,
                    });
                }
                ("remove", Some(r)) => {
                    arity(3)?;
                    r.rewrite.remove_edges.push(edge());
                }
                ("add", Some(r)) => {
                    arity(3)?;
                    r.rewrite.add_edges.push(edge());
                }
                ("recolor", Some(r)) => {
                    arity(2)?;
                    r.rewrite
                        .recolor
                        .push((args[0].to_string(), Color::new(args[1])));
                }
                ("activate", Some(r)) => {
                    arity(1)?;
                    r.rewrite.activate = Some(args[0].to_string());
                }
                _ => return Err(err(&format!("unexpected `{kw}`"))),
            }
        }
        if !seen_header {
            return Err(RuleSetParseError {
                line: 0,
                msg: "empty input".into(),
            });
        }
        if current.is_some() {
            return Err(RuleSetParseError {
                line: src.lines().count(),
                msg: "missing `end`".into(),
            });
        }
        Ok(rs)
    }
}

impl fmt::Display for Match {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} [", self.rule_name)?;
        for (i, n) in self.binding.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{n}")?;
        }
        f.write_str("]")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tangle::colors;

    fn set() -> Color {
        Color::new(colors::SET)
    }

    /// C -t-> A, B -el-> A, D -el-> A
    fn small() -> (Tangle, NodeId, NodeId, NodeId) {
        let mut g = Tangle::new();
        let a = g.add_node(set(), NodeKind::Set);
        let b = g.add_node(set(), NodeKind::Set);
        let d = g.add_node(set(), NodeKind::Set);
        let c = g.criticals();
        g.add_edge(c, &EdgeLabel::new("t"), a);
        g.add_edge(b, &EdgeLabel::new("el"), a);
        g.add_edge(d, &EdgeLabel::new("el"), a);
        (g, a, b, d)
    }

    #[test]
    fn anchored_matches_are_injective_and_sorted() {
        let (g, a, b, d) = small();
        let r = Rule::builder("x:y:0")
            .cell("C", "idle")
            .cell("A", "set")
            .cell("W", "set")
            .edge("C", "t", "A")
            .edge("W", "el", "A")
            .build();
        let ms = match_rule(&g, 0, &r, g.criticals());
        assert_eq!(ms.len(), 2);
        assert_eq!(ms[0].binding, vec![g.criticals(), a, b]);
        assert_eq!(ms[1].binding, vec![g.criticals(), a, d]);
        // two wildcards over the same neighborhood never bind one node twice
        let r2 = Rule::builder("x:y:1")
            .cell("C", "idle")
            .cell("A", "set")
            .cell("W", "set")
            .cell("V", "set")
            .edge("C", "t", "A")
            .edge("W", "el", "A")
            .edge("V", "el", "A")
            .build();
        let ms = match_rule(&g, 0, &r2, g.criticals());
        assert_eq!(ms.len(), 2);
        assert!(ms.iter().all(|m| m.binding[2] != m.binding[3]));
    }

    #[test]
    fn focus_color_gates_matching() {
        let (g, _, _, _) = small();
        let r = Rule::builder("x:y:0").cell("C", "other").build();
        assert!(match_rule(&g, 0, &r, g.criticals()).is_empty());
    }

    #[test]
    fn negative_edges_block() {
        let (g, _, _, _) = small();
        let r = Rule::builder("x:y:0")
            .cell("C", "idle")
            .cell("A", "set")
            .edge("C", "t", "A")
            .neg("C", "u", "A")
            .build();
        assert_eq!(match_rule(&g, 0, &r, g.criticals()).len(), 1);
        let r = Rule::builder("x:y:0")
            .cell("C", "idle")
            .cell("A", "set")
            .edge("C", "t", "A")
            .neg("C", "t", "A")
            .build();
        assert!(match_rule(&g, 0, &r, g.criticals()).is_empty());
    }

    #[test]
    fn maximality_keeps_supersets_and_ties() {
        let m = |r: usize, ids: &[u32]| {
            Match::new(r, "r", ids.iter().map(|&i| NodeId(i)).collect())
        };
        let kept = maximality_filter(vec![
            m(0, &[0]),
            m(1, &[0, 1]),
            m(2, &[0, 1, 2]),
            m(3, &[0, 2, 1]),
            m(4, &[0, 3]),
        ]);
        let rules: Vec<usize> = kept.iter().map(|m| m.rule).collect();
        assert_eq!(rules, vec![2, 3, 4]);
    }

    #[test]
    fn apply_is_local_and_checks_staleness() {
        let (mut g, a, b, _) = small();
        let r = Rule::builder("x:y:0")
            .cell("C", "idle")
            .cell("A", "set")
            .cell("W", "set")
            .edge("C", "t", "A")
            .edge("W", "el", "A")
            .create("N", "~new", NodeKind::Set)
            .relabel("W", "el", "mark", "A")
            .add("C", "n", "N")
            .recolor("C", "busy")
            .build();
        let rs = RuleSet::from_rules(vec![r], &["idle"], &[], false);
        assert!(validate_ruleset(&rs).is_empty());
        let ms = match_all(&g, &rs);
        let before = g.node_count();
        let created = apply(&mut g, &rs, &ms[0]).unwrap();
        assert_eq!(created.len(), 1);
        assert_eq!(g.node_count(), before + 1);
        assert!(g.has_edge(b, &EdgeLabel::new("mark"), a));
        assert!(!g.has_edge(b, &EdgeLabel::new("el"), a));
        assert_eq!(g.node(g.criticals()).color.as_str(), "busy");
        assert!(matches!(
            apply(&mut g, &rs, &ms[0]),
            Err(ApplyError::Stale { .. })
        ));
    }

    #[test]
    fn validation_reports_each_defect() {
        let loopy = Rule::builder("a:b:0")
            .cell("C", "idle")
            .cell("X", "set")
            .edge("C", "t", "X")
            .edge("X", "el", "X")
            .build();
        let mut uncovered = Rule::builder("a:b:1")
            .cell("C", "idle")
            .cell("X", "set")
            .edge("C", "t", "X")
            .build();
        uncovered.rewrite.correspondence.retain(|(r, _)| r == "C");
        let remove_bad = Rule::builder("a:b:2")
            .cell("C", "idle")
            .cell("X", "set")
            .edge("C", "t", "X")
            .remove("X", "el", "C")
            .build();
        let neg = Rule::builder("a:b:3")
            .cell("C", "idle")
            .neg("C", "t", "C")
            .build();
        let rs = RuleSet::from_rules(vec![loopy, uncovered, remove_bad, neg], &[], &[], false);
        let msgs: Vec<String> = validate_ruleset(&rs).iter().map(|v| v.to_string()).collect();
        assert!(msgs.iter().any(|m| m.contains("a:b:0") && m.contains("pattern loop")));
        assert!(msgs.iter().any(|m| m.contains("a:b:1") && m.contains("uncovered cell")));
        assert!(msgs.iter().any(|m| m.contains("a:b:2") && m.contains("not a pattern edge")));
        assert!(msgs.iter().any(|m| m.contains("a:b:3") && m.contains("negative")));

        let mut far = RuleSet::from_rules(
            vec![Rule::builder("a:b:4")
                .cell("C", "idle")
                .cell("X", "set")
                .cell("Y", "set")
                .edge("C", "t", "X")
                .edge("Y", "el", "X")
                .build()],
            &[],
            &[],
            false,
        );
        far.radius_bound = 1;
        assert!(matches!(
            validate_ruleset(&far)[..],
            [RuleViolation::Radius { .. }]
        ));
        far.palette.clear();
        assert!(validate_ruleset(&far)
            .iter()
            .any(|v| matches!(v, RuleViolation::Palette { .. })));
    }

    #[test]
    fn serialization_round_trips() {
        let r = Rule::builder("p:q:0")
            .cell("C", "idle")
            .wild("X")
            .edge("C", "t", "X")
            .neg("X", "el", "C")
            .create("N", "~n", NodeKind::Tuple(2))
            .relabel("C", "t", "u", "X")
            .recolor("C", "s1")
            .activate("C")
            .build();
        let rs = RuleSet::from_rules(vec![r], &[], &["extra"], true);
        let text = rs.serialize();
        assert_eq!(RuleSet::parse(&text).unwrap(), rs);
        assert!(RuleSet::parse("ruleset\nrule x\n").is_err());
        assert!(RuleSet::parse("rule x\nend\n").is_err());
    }
}
