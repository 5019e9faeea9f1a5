//! Colored directed graphs holding shared hereditarily finite values.
//!
//! Every distinct value has at most one committed node. Containment edges
//! point from member to containing set (`el`); pair nodes point at their
//! components (`fst`, `snd`); tuple nodes point at their arguments
//! (`arg1`..`argk`) and at the stored value (`<f>.val`). The Criticals node
//! owns one outgoing edge per critical term, one per stored function
//! location (labeled with the function name), and compiler registers whose
//! labels start with `$`, `%` or `'`.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::{self, Write as _};
use std::sync::Arc;

use thiserror::Error;

use crate::hfset::{Atom, HfValue};
use crate::state::State;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Color(Arc<str>);

impl Color {
    pub fn new(s: &str) -> Self {
        Color(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Scratch colors mark nodes under construction; they are exempt from
    /// value uniqueness until recolored.
    pub fn is_scratch(&self) -> bool {
        self.0.starts_with('~')
    }
}

impl fmt::Display for Color {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeLabel(Arc<str>);

impl EdgeLabel {
    pub fn new(s: &str) -> Self {
        EdgeLabel(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Compiler bookkeeping labels on Criticals edges.
    pub fn is_internal(&self) -> bool {
        matches!(self.0.as_bytes().first(), Some(b'$' | b'%' | b'\''))
    }
}

impl fmt::Display for EdgeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub mod labels {
    pub const EL: &str = "el";
    pub const FST: &str = "fst";
    pub const SND: &str = "snd";
    pub const EMPTY: &str = "$empty";

    pub fn arg(i: usize) -> String {
        format!("arg{i}")
    }

    pub fn val(f: &str) -> String {
        format!("{f}.val")
    }
}

pub mod colors {
    pub const ATOM: &str = "atom";
    pub const SET: &str = "set";
    pub const PAIR: &str = "pair";
    pub const IDLE: &str = "idle";

    pub fn tuple(k: usize) -> String {
        format!("tuple{k}")
    }
}

/// Structural kind of a node. Atom identity is an inert payload that
/// patterns cannot see.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeKind {
    Atom(Atom),
    Set,
    Pair,
    Tuple(usize),
    Criticals,
}

impl NodeKind {
    pub fn tag(&self) -> String {
        match self {
            NodeKind::Atom(a) => format!("atom({a})"),
            NodeKind::Set => "set".into(),
            NodeKind::Pair => "pair".into(),
            NodeKind::Tuple(k) => format!("tuple({k})"),
            NodeKind::Criticals => "criticals".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TangleNode {
    pub color: Color,
    pub kind: NodeKind,
}

impl TangleNode {
    pub fn is_value(&self) -> bool {
        matches!(
            self.kind,
            NodeKind::Atom(_) | NodeKind::Set | NodeKind::Pair
        )
    }

    pub fn is_committed(&self) -> bool {
        !self.color.is_scratch()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tangle {
    nodes: Vec<TangleNode>,
    out: Vec<BTreeSet<(EdgeLabel, NodeId)>>,
    inc: Vec<BTreeSet<(EdgeLabel, NodeId)>>,
    edge_count: usize,
    criticals: NodeId,
    active: NodeId,
}

impl Default for Tangle {
    fn default() -> Self {
        Self::new()
    }
}

impl Tangle {
    /// A tangle holding only an idle-colored Criticals node.
    pub fn new() -> Self {
        let mut t = Tangle {
            nodes: Vec::new(),
            out: Vec::new(),
            inc: Vec::new(),
            edge_count: 0,
            criticals: NodeId(0),
            active: NodeId(0),
        };
        t.add_node(Color::new(colors::IDLE), NodeKind::Criticals);
        t
    }

    pub fn add_node(&mut self, color: Color, kind: NodeKind) -> NodeId {
        let id = NodeId(self.nodes.len() as u32);
        self.nodes.push(TangleNode { color, kind });
        self.out.push(BTreeSet::new());
        self.inc.push(BTreeSet::new());
        id
    }

    /// Returns false if the edge was already present.
    pub fn add_edge(&mut self, src: NodeId, label: &EdgeLabel, dst: NodeId) -> bool {
        if self.out[src.index()].insert((label.clone(), dst)) {
            self.inc[dst.index()].insert((label.clone(), src));
            self.edge_count += 1;
            true
        } else {
            false
        }
    }

    pub fn remove_edge(&mut self, src: NodeId, label: &EdgeLabel, dst: NodeId) -> bool {
        if self.out[src.index()].remove(&(label.clone(), dst)) {
            self.inc[dst.index()].remove(&(label.clone(), src));
            self.edge_count -= 1;
            true
        } else {
            false
        }
    }

    pub fn has_edge(&self, src: NodeId, label: &EdgeLabel, dst: NodeId) -> bool {
        self.out
            .get(src.index())
            .is_some_and(|s| s.contains(&(label.clone(), dst)))
    }

    pub fn contains_node(&self, n: NodeId) -> bool {
        n.index() < self.nodes.len()
    }

    pub fn node(&self, n: NodeId) -> &TangleNode {
        &self.nodes[n.index()]
    }

    pub fn set_color(&mut self, n: NodeId, color: Color) {
        self.nodes[n.index()].color = color;
    }

    pub fn node_ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    /// Targets of `src`'s outgoing edges labeled `label`.
    pub fn targets<'a>(
        &'a self,
        src: NodeId,
        label: &'a EdgeLabel,
    ) -> impl Iterator<Item = NodeId> + 'a {
        self.out[src.index()]
            .range((label.clone(), NodeId(0))..=(label.clone(), NodeId(u32::MAX)))
            .map(|(_, n)| *n)
    }

    /// Sources of `dst`'s incoming edges labeled `label`.
    pub fn sources<'a>(
        &'a self,
        dst: NodeId,
        label: &'a EdgeLabel,
    ) -> impl Iterator<Item = NodeId> + 'a {
        self.inc[dst.index()]
            .range((label.clone(), NodeId(0))..=(label.clone(), NodeId(u32::MAX)))
            .map(|(_, n)| *n)
    }

    pub fn out_edges(&self, n: NodeId) -> impl Iterator<Item = &(EdgeLabel, NodeId)> {
        self.out[n.index()].iter()
    }

    pub fn in_edges(&self, n: NodeId) -> impl Iterator<Item = &(EdgeLabel, NodeId)> {
        self.inc[n.index()].iter()
    }

    /// All edges sorted by (source, label, target).
    pub fn edges(&self) -> Vec<(NodeId, EdgeLabel, NodeId)> {
        self.node_ids()
            .flat_map(|s| self.out[s.index()].iter().map(move |(l, d)| (s, l.clone(), *d)))
            .collect()
    }

    pub fn criticals(&self) -> NodeId {
        self.criticals
    }

    pub fn active(&self) -> NodeId {
        self.active
    }

    pub fn set_active(&mut self, n: NodeId) {
        self.active = n;
    }

    /// The node reached from Criticals through `label`, if exactly one.
    pub fn register(&self, label: &str) -> Option<NodeId> {
        let l = EdgeLabel::new(label);
        let mut it = self.targets(self.criticals, &l);
        let first = it.next()?;
        match it.next() {
            None => Some(first),
            Some(_) => None,
        }
    }

    /// Structured-text snapshot; bit-exact for equal tangles.
    pub fn snapshot(&self) -> String {
        let mut s = String::new();
        for n in self.node_ids() {
            let node = self.node(n);
            let kind = if node.color.is_scratch() && node.is_value() {
                "scratch".to_string()
            } else {
                node.kind.tag()
            };
            let _ = writeln!(s, "node {} {} {}", n.0, node.color, kind);
        }
        for (a, l, b) in self.edges() {
            let _ = writeln!(s, "edge {} {} {}", a.0, l, b.0);
        }
        s
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph tangle {\n");
        for n in self.node_ids() {
            let node = self.node(n);
            let shape = if n == self.criticals { "box" } else { "ellipse" };
            let extra = match &node.kind {
                NodeKind::Atom(a) => format!(" [{a}]"),
                _ => String::new(),
            };
            let _ = writeln!(
                s,
                "  n{} [label=\"{}:{}{}\", shape={}];",
                n.0, n.0, node.color, extra, shape
            );
        }
        for (a, l, b) in self.edges() {
            let _ = writeln!(s, "  n{} -> n{} [label=\"{}\"];", a.0, b.0, l);
        }
        s.push_str("}\n");
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DecodeError {
    #[error("expected exactly one criticals node, found {0}")]
    Criticals(usize),
    #[error("critical term {0} has {1} edges")]
    AmbiguousTerm(String, usize),
    #[error("critical term {0} does not point at a value node")]
    DanglingTerm(String),
    #[error("containment cycle through {0}")]
    Cycle(NodeId),
    #[error("nodes {0} and {1} both hold {2}")]
    Duplicate(NodeId, NodeId, HfValue),
    #[error("malformed node {0}: {1}")]
    Malformed(NodeId, String),
}

/// Builds value nodes with sharing.
struct Encoder<'a> {
    g: &'a mut Tangle,
    memo: HashMap<HfValue, NodeId>,
    tuples: HashMap<Vec<NodeId>, NodeId>,
}

impl Encoder<'_> {
    fn node_for(&mut self, v: &HfValue) -> NodeId {
        if let Some(n) = self.memo.get(v) {
            return *n;
        }
        let n = match v {
            HfValue::Atom(a) => self
                .g
                .add_node(Color::new(colors::ATOM), NodeKind::Atom(a.clone())),
            HfValue::Set(members) => {
                let kids: Vec<NodeId> = members.iter().map(|m| self.node_for(m)).collect();
                let n = self.g.add_node(Color::new(colors::SET), NodeKind::Set);
                let el = EdgeLabel::new(labels::EL);
                for k in kids {
                    self.g.add_edge(k, &el, n);
                }
                n
            }
            HfValue::Pair(p) => {
                let a = self.node_for(&p.0);
                let b = self.node_for(&p.1);
                let n = self.g.add_node(Color::new(colors::PAIR), NodeKind::Pair);
                self.g.add_edge(n, &EdgeLabel::new(labels::FST), a);
                self.g.add_edge(n, &EdgeLabel::new(labels::SND), b);
                n
            }
        };
        self.memo.insert(v.clone(), n);
        n
    }

    fn tuple_for(&mut self, args: &[HfValue]) -> NodeId {
        let ids: Vec<NodeId> = args.iter().map(|a| self.node_for(a)).collect();
        if let Some(t) = self.tuples.get(&ids) {
            return *t;
        }
        let k = ids.len();
        let t = self
            .g
            .add_node(Color::new(&colors::tuple(k)), NodeKind::Tuple(k));
        for (i, a) in ids.iter().enumerate() {
            self.g.add_edge(t, &EdgeLabel::new(&labels::arg(i + 1)), *a);
        }
        self.tuples.insert(ids, t);
        t
    }
}

/// Encodes a state. The empty set always gets a node, anchored from
/// Criticals by `$empty`, so that `{}` is reachable by a bounded pattern.
pub fn encode(state: &State) -> Tangle {
    let mut g = Tangle::new();
    let c = g.criticals();
    let mut enc = Encoder {
        g: &mut g,
        memo: HashMap::new(),
        tuples: HashMap::new(),
    };
    let empty = enc.node_for(&HfValue::empty());
    enc.g.add_edge(c, &EdgeLabel::new(labels::EMPTY), empty);
    for (name, v) in &state.values {
        let n = enc.node_for(v);
        enc.g.add_edge(c, &EdgeLabel::new(name), n);
    }
    for ((f, args), v) in &state.locations {
        let t = enc.tuple_for(args);
        let n = enc.node_for(v);
        enc.g.add_edge(c, &EdgeLabel::new(f), t);
        enc.g.add_edge(t, &EdgeLabel::new(&labels::val(f)), n);
    }
    g
}

struct Decoder<'a> {
    g: &'a Tangle,
    memo: HashMap<NodeId, HfValue>,
    visiting: BTreeSet<NodeId>,
}

impl Decoder<'_> {
    fn value(&mut self, n: NodeId) -> Result<HfValue, DecodeError> {
        if let Some(v) = self.memo.get(&n) {
            return Ok(v.clone());
        }
        if !self.visiting.insert(n) {
            return Err(DecodeError::Cycle(n));
        }
        let g = self.g;
        let node = g.node(n);
        let v = match &node.kind {
            NodeKind::Atom(a) => HfValue::Atom(a.clone()),
            NodeKind::Set => {
                let el = EdgeLabel::new(labels::EL);
                let kids: Vec<NodeId> = g.sources(n, &el).collect();
                let mut members = Vec::with_capacity(kids.len());
                for k in kids {
                    members.push(self.value(k)?);
                }
                HfValue::set_of(members)
            }
            NodeKind::Pair => {
                let fst = EdgeLabel::new(labels::FST);
                let snd = EdgeLabel::new(labels::SND);
                let a: Vec<NodeId> = g.targets(n, &fst).collect();
                let b: Vec<NodeId> = g.targets(n, &snd).collect();
                if a.len() != 1 || b.len() != 1 {
                    return Err(DecodeError::Malformed(n, "pair arity".into()));
                }
                HfValue::pair(self.value(a[0])?, self.value(b[0])?)
            }
            NodeKind::Tuple(_) | NodeKind::Criticals => {
                return Err(DecodeError::Malformed(n, "not a value node".into()))
            }
        };
        self.visiting.remove(&n);
        self.memo.insert(n, v.clone());
        Ok(v)
    }

    fn tuple_args(&mut self, t: NodeId, k: usize) -> Result<Vec<HfValue>, DecodeError> {
        let mut args = Vec::with_capacity(k);
        for i in 1..=k {
            let l = EdgeLabel::new(&labels::arg(i));
            let a: Vec<NodeId> = self.g.targets(t, &l).collect();
            if a.len() != 1 {
                return Err(DecodeError::Malformed(t, format!("tuple argument {i}")));
            }
            args.push(self.value(a[0])?);
        }
        Ok(args)
    }
}

/// Reads the state back. Only nodes reachable from Criticals matter.
pub fn decode(g: &Tangle) -> Result<State, DecodeError> {
    let crit_count = g
        .node_ids()
        .filter(|n| g.node(*n).kind == NodeKind::Criticals)
        .count();
    if crit_count != 1 {
        return Err(DecodeError::Criticals(crit_count));
    }
    let c = g.criticals();
    let mut dec = Decoder {
        g,
        memo: HashMap::new(),
        visiting: BTreeSet::new(),
    };
    let mut state = State::new();
    let mut by_label: BTreeMap<EdgeLabel, Vec<NodeId>> = BTreeMap::new();
    for (l, n) in g.out_edges(c) {
        if !l.is_internal() {
            by_label.entry(l.clone()).or_default().push(*n);
        }
    }
    for (label, targets) in by_label {
        let tuples: Vec<NodeId> = targets
            .iter()
            .copied()
            .filter(|n| matches!(g.node(*n).kind, NodeKind::Tuple(_)))
            .collect();
        if tuples.is_empty() {
            if targets.len() != 1 {
                return Err(DecodeError::AmbiguousTerm(
                    label.to_string(),
                    targets.len(),
                ));
            }
            if !g.node(targets[0]).is_value() {
                return Err(DecodeError::DanglingTerm(label.to_string()));
            }
            let v = dec.value(targets[0])?;
            state.values.insert(label.to_string(), v);
        } else {
            if tuples.len() != targets.len() {
                return Err(DecodeError::DanglingTerm(label.to_string()));
            }
            let val = EdgeLabel::new(&labels::val(label.as_str()));
            for t in tuples {
                let NodeKind::Tuple(k) = g.node(t).kind else {
                    unreachable!()
                };
                let args = dec.tuple_args(t, k)?;
                let vals: Vec<NodeId> = g.targets(t, &val).collect();
                if vals.len() != 1 {
                    return Err(DecodeError::Malformed(t, format!("{label} value")));
                }
                let v = dec.value(vals[0])?;
                state.locations.insert((label.to_string(), args), v);
            }
        }
    }
    // uniqueness among the decoded (reachable) committed nodes
    let mut seen: HashMap<HfValue, NodeId> = HashMap::new();
    let mut decoded: Vec<(NodeId, HfValue)> =
        dec.memo.iter().map(|(n, v)| (*n, v.clone())).collect();
    decoded.sort_by_key(|(n, _)| *n);
    for (n, v) in decoded {
        if !g.node(n).is_committed() {
            continue;
        }
        if let Some(prev) = seen.insert(v.clone(), n) {
            return Err(DecodeError::Duplicate(prev, n, v));
        }
    }
    Ok(state)
}

/// The unique committed node holding `v`, if present.
pub fn find_value_node(g: &Tangle, v: &HfValue) -> Option<NodeId> {
    let mut dec = Decoder {
        g,
        memo: HashMap::new(),
        visiting: BTreeSet::new(),
    };
    let mut found = None;
    for n in g.node_ids() {
        let node = g.node(n);
        if !node.is_value() || !node.is_committed() {
            continue;
        }
        dec.visiting.clear();
        if dec.value(n).ok().as_ref() == Some(v) {
            if found.is_some() {
                return None;
            }
            found = Some(n);
        }
    }
    found
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    MultipleCriticals(usize),
    ContainmentCycle(NodeId),
    DuplicateValue(NodeId, NodeId),
    DuplicateTuple(NodeId, NodeId),
    MalformedNode(NodeId),
    NodesLost { before: usize, after: usize },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::MultipleCriticals(0) => write!(f, "missing criticals"),
            Violation::MultipleCriticals(_) => write!(f, "multiple criticals"),
            Violation::ContainmentCycle(_) => write!(f, "containment cycle"),
            Violation::DuplicateValue(a, b) => write!(f, "duplicate value nodes {a} {b}"),
            Violation::DuplicateTuple(a, b) => write!(f, "duplicate tuple nodes {a} {b}"),
            Violation::MalformedNode(n) => write!(f, "malformed node {n}"),
            Violation::NodesLost { before, after } => {
                write!(f, "node count dropped from {before} to {after}")
            }
        }
    }
}

/// Single Criticals node and acyclic containment structure.
pub fn check_structure(g: &Tangle) -> Vec<Violation> {
    let mut out = Vec::new();
    let crit = g
        .node_ids()
        .filter(|n| g.node(*n).kind == NodeKind::Criticals)
        .count();
    if crit != 1 {
        out.push(Violation::MultipleCriticals(crit));
    }
    if let Some(n) = find_cycle(g) {
        out.push(Violation::ContainmentCycle(n));
    }
    out
}

/// Cycle search over every edge whose source is not a Criticals node.
fn find_cycle(g: &Tangle) -> Option<NodeId> {
    #[derive(Clone, Copy, PartialEq)]
    enum Mark {
        New,
        Open,
        Done,
    }
    let mut mark = vec![Mark::New; g.node_count()];
    for root in g.node_ids() {
        if mark[root.index()] != Mark::New || g.node(root).kind == NodeKind::Criticals {
            continue;
        }
        let mut stack: Vec<(NodeId, Vec<NodeId>)> = Vec::new();
        mark[root.index()] = Mark::Open;
        stack.push((root, g.out_edges(root).map(|(_, d)| *d).collect()));
        while let Some((n, succ)) = stack.last_mut() {
            let n = *n;
            match succ.pop() {
                Some(s) => match mark[s.index()] {
                    Mark::Open => return Some(s),
                    Mark::New => {
                        mark[s.index()] = Mark::Open;
                        let next = g.out_edges(s).map(|(_, d)| *d).collect();
                        stack.push((s, next));
                    }
                    Mark::Done => {}
                },
                None => {
                    mark[n.index()] = Mark::Done;
                    stack.pop();
                }
            }
        }
    }
    None
}

/// All tangle invariants, including node-per-value uniqueness over
/// committed nodes.
pub fn check_invariants(g: &Tangle) -> Vec<Violation> {
    let mut out = check_structure(g);
    if out.iter().any(|v| matches!(v, Violation::ContainmentCycle(_))) {
        return out;
    }
    let mut dec = Decoder {
        g,
        memo: HashMap::new(),
        visiting: BTreeSet::new(),
    };
    let mut seen: HashMap<HfValue, NodeId> = HashMap::new();
    let mut tuples: HashMap<Vec<NodeId>, NodeId> = HashMap::new();
    for n in g.node_ids() {
        let node = g.node(n);
        if let NodeKind::Tuple(k) = node.kind {
            let mut args = Vec::with_capacity(k);
            for i in 1..=k {
                let l = EdgeLabel::new(&labels::arg(i));
                let t: Vec<NodeId> = g.targets(n, &l).collect();
                if t.len() != 1 {
                    out.push(Violation::MalformedNode(n));
                }
                args.extend(t);
            }
            if let Some(prev) = tuples.insert(args, n) {
                out.push(Violation::DuplicateTuple(prev, n));
            }
            continue;
        }
        if !node.is_value() || !node.is_committed() {
            continue;
        }
        match dec.value(n) {
            Ok(v) => {
                if let Some(prev) = seen.insert(v, n) {
                    out.push(Violation::DuplicateValue(prev, n));
                }
            }
            Err(_) => out.push(Violation::MalformedNode(n)),
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(s: &str) -> HfValue {
        s.parse().unwrap()
    }

    #[test]
    fn encode_empty_term() {
        let g = encode(&State::new().with("t", HfValue::empty()));
        // Criticals + the empty set
        assert_eq!(g.node_count(), 2);
        let t = g.register("t").unwrap();
        assert_eq!(g.node(t).kind, NodeKind::Set);
        assert_eq!(g.register(labels::EMPTY), Some(t));
        assert!(check_invariants(&g).is_empty());
    }

    #[test]
    fn encode_shares_subvalues() {
        let st = State::new()
            .with("t", v("{{a,b},{{a}},{a}}"))
            .with("p", v("{{a,b},{b}}"));
        let g = encode(&st);
        let mut distinct = BTreeSet::new();
        for x in st.values.values() {
            x.subvalues(&mut distinct);
        }
        distinct.insert(HfValue::empty());
        assert_eq!(distinct.len(), 9);
        assert_eq!(g.node_count() - 1, distinct.len());
    }

    #[test]
    fn equal_terms_share_a_node() {
        let g = encode(&State::new().with("t", v("{a}")).with("p", v("{a}")));
        assert_eq!(g.register("t"), g.register("p"));
    }

    #[test]
    fn round_trip_with_locations() {
        let mut st = State::new().with("t", v("{a}")).with("p", v("{b}"));
        st.locations
            .insert(("g".into(), vec![v("{a}"), v("{b}")]), v("{a,b}"));
        st.locations.insert(("h".into(), vec![v("a")]), v("<a,b>"));
        let g = encode(&st);
        assert_eq!(decode(&g).unwrap(), st);
        assert!(check_invariants(&g).is_empty());
    }

    #[test]
    fn decode_rejects_duplicate_nodes() {
        let mut g = encode(&State::new().with("t", v("{a}")));
        let a = find_value_node(&g, &v("a")).unwrap();
        let dup = g.add_node(Color::new(colors::SET), NodeKind::Set);
        g.add_edge(a, &EdgeLabel::new(labels::EL), dup);
        g.add_edge(g.criticals(), &EdgeLabel::new("p"), dup);
        assert!(matches!(decode(&g), Err(DecodeError::Duplicate(..))));
        assert!(check_invariants(&g)
            .iter()
            .any(|x| matches!(x, Violation::DuplicateValue(..))));
    }

    #[test]
    fn decode_ignores_disconnected_nodes() {
        let st = State::new().with("t", v("{a,b}"));
        let mut g = encode(&st);
        let c = g.add_node(Color::new(colors::ATOM), NodeKind::Atom(Atom::new("c").unwrap()));
        let s = g.add_node(Color::new(colors::SET), NodeKind::Set);
        g.add_edge(c, &EdgeLabel::new(labels::EL), s);
        assert_eq!(decode(&g).unwrap(), st);
        // disconnect t's node from Criticals: t disappears, nothing else changes
        let t = g.register("t").unwrap();
        let crit = g.criticals();
        g.remove_edge(crit, &EdgeLabel::new("t"), t);
        assert_eq!(decode(&g).unwrap(), State::new());
    }

    #[test]
    fn find_value_node_examples() {
        let g = encode(&State::new().with("t", v("{a}")));
        let a = find_value_node(&g, &v("a")).unwrap();
        assert!(matches!(g.node(a).kind, NodeKind::Atom(_)));
        assert_eq!(find_value_node(&g, &v("b")), None);
    }

    #[test]
    fn invariant_violations() {
        let g = encode(&State::new().with("t", v("{a,{b}}")));
        assert!(check_invariants(&g).is_empty());

        let mut cyc = g.clone();
        let t = cyc.register("t").unwrap();
        let b = find_value_node(&cyc, &v("{b}")).unwrap();
        cyc.add_edge(t, &EdgeLabel::new(labels::EL), b);
        assert_eq!(
            check_invariants(&cyc)
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>(),
            vec!["containment cycle"]
        );

        let mut two = g.clone();
        two.add_node(Color::new("idle"), NodeKind::Criticals);
        assert_eq!(
            check_invariants(&two)
                .iter()
                .map(ToString::to_string)
                .collect::<Vec<_>>(),
            vec!["multiple criticals"]
        );
    }

    #[test]
    fn snapshot_is_sorted_and_stable() {
        let st = State::new().with("t", v("{a,b}")).with("p", v("<a,{}>"));
        let a = encode(&st).snapshot();
        let b = encode(&st).snapshot();
        assert_eq!(a, b);
        assert!(a.starts_with("node 0 idle criticals\n"));
        let edges: Vec<&str> = a.lines().filter(|l| l.starts_with("edge")).collect();
        let mut sorted = edges.clone();
        sorted.sort_by_key(|l| {
            let f: Vec<&str> = l.split(' ').collect();
            (f[1].parse::<u32>().unwrap(), f[2].to_string(), f[3].parse::<u32>().unwrap())
        });
        assert_eq!(edges, sorted);
        assert!(encode(&st).to_dot().contains("-> n"));
    }

    #[test]
    fn scratch_nodes_are_exempt_from_uniqueness() {
        let mut g = encode(&State::new().with("t", v("{a}")));
        let a = find_value_node(&g, &v("a")).unwrap();
        let s = g.add_node(Color::new("~sugg"), NodeKind::Set);
        g.add_edge(a, &EdgeLabel::new(labels::EL), s);
        assert!(check_invariants(&g).is_empty());
        g.set_color(s, Color::new(colors::SET));
        assert!(!check_invariants(&g).is_empty());
    }
}
