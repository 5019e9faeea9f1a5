//! Hereditarily finite sets over a declared atom list.
//!
//! Values are kept in a canonical form: set members are sorted and
//! deduplicated, so the derived `Eq`/`Ord`/`Hash` are structural and
//! insensitive to the order members were supplied in.

use std::collections::HashMap;
use std::fmt;
use std::sync::Arc;

use rand::Rng;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HfError {
    #[error("type error: {op} expects a set, got {got}")]
    NotASet { op: &'static str, got: String },
    #[error("choose on the empty set")]
    ChooseEmpty,
    #[error("value exceeds depth limit {limit}")]
    TooDeep { limit: usize },
    #[error("set exceeds width limit {limit}")]
    TooWide { limit: usize },
    #[error("invalid atom name {0:?}")]
    BadAtom(String),
}

/// A named atom. Names are plain identifiers.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Atom(Arc<str>);

impl Atom {
    pub fn new(name: &str) -> Result<Self, HfError> {
        let mut chars = name.chars();
        let ok = matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
            && chars.all(|c| c.is_ascii_alphanumeric() || c == '_');
        if ok {
            Ok(Atom(name.into()))
        } else {
            Err(HfError::BadAtom(name.to_string()))
        }
    }

    pub fn name(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for Atom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum HfValue {
    Atom(Atom),
    /// Sorted, duplicate-free members.
    Set(Arc<[HfValue]>),
    Pair(Arc<(HfValue, HfValue)>),
}

/// Size bounds enforced by the constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Limits {
    pub max_depth: usize,
    pub max_width: usize,
}

impl Default for Limits {
    fn default() -> Self {
        Limits {
            max_depth: 16,
            max_width: 1024,
        }
    }
}

impl HfValue {
    pub fn atom(name: &str) -> Result<Self, HfError> {
        Ok(HfValue::Atom(Atom::new(name)?))
    }

    pub fn empty() -> Self {
        HfValue::Set(Arc::from(Vec::new()))
    }

    /// Builds a set from arbitrary members, normalizing order and duplicates.
    pub fn set_of(members: impl IntoIterator<Item = HfValue>) -> Self {
        let mut v: Vec<HfValue> = members.into_iter().collect();
        v.sort();
        v.dedup();
        HfValue::Set(Arc::from(v))
    }

    pub fn singleton(v: HfValue) -> Self {
        HfValue::Set(Arc::from(vec![v]))
    }

    pub fn pair(first: HfValue, second: HfValue) -> Self {
        HfValue::Pair(Arc::new((first, second)))
    }

    pub fn is_set(&self) -> bool {
        matches!(self, HfValue::Set(_))
    }

    pub fn members(&self) -> Option<&[HfValue]> {
        match self {
            HfValue::Set(m) => Some(m),
            _ => None,
        }
    }

    fn expect_set(&self, op: &'static str) -> Result<&[HfValue], HfError> {
        self.members().ok_or_else(|| HfError::NotASet {
            op,
            got: self.to_string(),
        })
    }

    pub fn union(&self, other: &HfValue) -> Result<HfValue, HfError> {
        let a = self.expect_set("union")?;
        let b = other.expect_set("union")?;
        // both inputs are sorted: merge
        let mut out = Vec::with_capacity(a.len() + b.len());
        let (mut i, mut j) = (0, 0);
        while i < a.len() && j < b.len() {
            match a[i].cmp(&b[j]) {
                std::cmp::Ordering::Less => {
                    out.push(a[i].clone());
                    i += 1;
                }
                std::cmp::Ordering::Greater => {
                    out.push(b[j].clone());
                    j += 1;
                }
                std::cmp::Ordering::Equal => {
                    out.push(a[i].clone());
                    i += 1;
                    j += 1;
                }
            }
        }
        out.extend_from_slice(&a[i..]);
        out.extend_from_slice(&b[j..]);
        Ok(HfValue::Set(Arc::from(out)))
    }

    pub fn contains(&self, v: &HfValue) -> Result<bool, HfError> {
        Ok(self.expect_set("member")?.binary_search(v).is_ok())
    }

    pub fn first(&self) -> Option<&HfValue> {
        match self {
            HfValue::Pair(p) => Some(&p.0),
            _ => None,
        }
    }

    pub fn second(&self) -> Option<&HfValue> {
        match self {
            HfValue::Pair(p) => Some(&p.1),
            _ => None,
        }
    }

    /// Nesting depth: atoms and the empty set have depth 0.
    pub fn depth(&self) -> usize {
        match self {
            HfValue::Atom(_) => 0,
            HfValue::Set(m) => m.iter().map(|x| x.depth() + 1).max().unwrap_or(0),
            HfValue::Pair(p) => 1 + p.0.depth().max(p.1.depth()),
        }
    }

    pub fn check_limits(&self, limits: &Limits) -> Result<(), HfError> {
        if self.depth() > limits.max_depth {
            return Err(HfError::TooDeep {
                limit: limits.max_depth,
            });
        }
        self.check_width(limits.max_width)
    }

    fn check_width(&self, limit: usize) -> Result<(), HfError> {
        match self {
            HfValue::Atom(_) => Ok(()),
            HfValue::Set(m) => {
                if m.len() > limit {
                    return Err(HfError::TooWide { limit });
                }
                m.iter().try_for_each(|x| x.check_width(limit))
            }
            HfValue::Pair(p) => {
                p.0.check_width(limit)?;
                p.1.check_width(limit)
            }
        }
    }

    /// Every distinct value occurring in `self`, including itself.
    pub fn subvalues(&self, out: &mut std::collections::BTreeSet<HfValue>) {
        if !out.insert(self.clone()) {
            return;
        }
        match self {
            HfValue::Atom(_) => {}
            HfValue::Set(m) => m.iter().for_each(|x| x.subvalues(out)),
            HfValue::Pair(p) => {
                p.0.subvalues(out);
                p.1.subvalues(out);
            }
        }
    }

    /// Applies an atom renaming throughout the value.
    pub fn rename_atoms(&self, f: &impl Fn(&Atom) -> Atom) -> HfValue {
        match self {
            HfValue::Atom(a) => HfValue::Atom(f(a)),
            HfValue::Set(m) => HfValue::set_of(m.iter().map(|x| x.rename_atoms(f))),
            HfValue::Pair(p) => HfValue::pair(p.0.rename_atoms(f), p.1.rename_atoms(f)),
        }
    }

    pub fn atoms(&self, out: &mut std::collections::BTreeSet<Atom>) {
        match self {
            HfValue::Atom(a) => {
                out.insert(a.clone());
            }
            HfValue::Set(m) => m.iter().for_each(|x| x.atoms(out)),
            HfValue::Pair(p) => {
                p.0.atoms(out);
                p.1.atoms(out);
            }
        }
    }
}

/// Checked constructors honoring [`Limits`].
pub fn singleton(v: HfValue, limits: &Limits) -> Result<HfValue, HfError> {
    let s = HfValue::singleton(v);
    if s.depth() > limits.max_depth {
        return Err(HfError::TooDeep {
            limit: limits.max_depth,
        });
    }
    Ok(s)
}

pub fn union(s: &HfValue, t: &HfValue, limits: &Limits) -> Result<HfValue, HfError> {
    let u = s.union(t)?;
    if u.members().map_or(0, <[_]>::len) > limits.max_width {
        return Err(HfError::TooWide {
            limit: limits.max_width,
        });
    }
    Ok(u)
}

pub fn pair(v: HfValue, w: HfValue, limits: &Limits) -> Result<HfValue, HfError> {
    let p = HfValue::pair(v, w);
    if p.depth() > limits.max_depth {
        return Err(HfError::TooDeep {
            limit: limits.max_depth,
        });
    }
    Ok(p)
}

pub fn member(v: &HfValue, s: &HfValue) -> Result<bool, HfError> {
    s.contains(v)
}

/// Picks a member of `s` using `rng`. Members are ranked by canonical id so
/// the draw does not depend on how atoms happen to be named.
pub fn choose<R: Rng + ?Sized>(s: &HfValue, rng: &mut R) -> Result<HfValue, HfError> {
    let m = s.expect_set("choose")?;
    if m.is_empty() {
        return Err(HfError::ChooseEmpty);
    }
    let ranked = members_by_id(s);
    Ok(ranked[rng.gen_range(0..ranked.len())].clone())
}

/// Members of a set sorted by canonical id.
pub fn members_by_id(s: &HfValue) -> Vec<HfValue> {
    let mut m: Vec<(CanonicalId, HfValue)> = s
        .members()
        .unwrap_or(&[])
        .iter()
        .map(|x| (canonical_id(x), x.clone()))
        .collect();
    m.sort();
    m.into_iter().map(|(_, v)| v).collect()
}

/// Structural identifier: a 64-bit hash computed bottom-up over sorted child
/// ids. Within a [`Universe`] collisions are detected and disambiguated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalId(pub u64);

impl fmt::Display for CanonicalId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:016x}", self.0)
    }
}

fn mix(mut z: u64) -> u64 {
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

const TAG_ATOM: u64 = 0x61;
const TAG_SET: u64 = 0x73;
const TAG_PAIR: u64 = 0x70;

/// The raw structural hash, without collision disambiguation.
pub fn canonical_id(v: &HfValue) -> CanonicalId {
    CanonicalId(structural_hash(v))
}

fn structural_hash(v: &HfValue) -> u64 {
    match v {
        HfValue::Atom(a) => mix(TAG_ATOM ^ fnv(a.name().as_bytes())),
        HfValue::Set(m) => {
            let mut ids: Vec<u64> = m.iter().map(structural_hash).collect();
            ids.sort_unstable();
            ids.iter()
                .fold(mix(TAG_SET ^ ids.len() as u64), |h, c| mix(h ^ c.rotate_left(17)))
        }
        HfValue::Pair(p) => {
            let a = structural_hash(&p.0);
            let b = structural_hash(&p.1);
            mix(mix(TAG_PAIR ^ a).wrapping_add(b.rotate_left(29)))
        }
    }
}

/// A hash-consing table that guarantees `equal(v, w) <=> id(v) == id(w)` for
/// every value interned through it, even if the raw hash collides.
#[derive(Debug, Default)]
pub struct Universe {
    by_value: HashMap<HfValue, CanonicalId>,
    taken: HashMap<CanonicalId, HfValue>,
}

impl Universe {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, v: &HfValue) -> CanonicalId {
        if let Some(id) = self.by_value.get(v) {
            return *id;
        }
        let mut id = canonical_id(v);
        // linear probing on collision; full structural comparison via HashMap
        while self.taken.contains_key(&id) {
            id = CanonicalId(mix(id.0.wrapping_add(1)));
        }
        self.taken.insert(id, v.clone());
        self.by_value.insert(v.clone(), id);
        id
    }

    pub fn lookup(&self, id: CanonicalId) -> Option<&HfValue> {
        self.taken.get(&id)
    }

    pub fn len(&self) -> usize {
        self.by_value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_value.is_empty()
    }
}

impl fmt::Display for HfValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HfValue::Atom(a) => write!(f, "{a}"),
            HfValue::Set(_) => {
                f.write_str("{")?;
                for (i, m) in members_by_id(self).iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{m}")?;
                }
                f.write_str("}")
            }
            HfValue::Pair(p) => write!(f, "<{}, {}>", p.0, p.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{line}:{col}: {msg}")]
pub struct ValueParseError {
    pub line: usize,
    pub col: usize,
    pub msg: String,
}

/// Parser for the textual value syntax: `a`, `{}`, `{v, w}`, `<v, w>`.
pub struct ValueParser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl<'a> ValueParser<'a> {
    pub fn new(src: &'a str) -> Self {
        ValueParser {
            src: src.as_bytes(),
            pos: 0,
        }
    }

    pub fn position(&self) -> usize {
        self.pos
    }

    fn err(&self, msg: impl Into<String>) -> ValueParseError {
        let before = &self.src[..self.pos.min(self.src.len())];
        let line = before.iter().filter(|&&b| b == b'\n').count() + 1;
        let col = before.iter().rev().take_while(|&&b| b != b'\n').count() + 1;
        ValueParseError {
            line,
            col,
            msg: msg.into(),
        }
    }

    pub fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    fn eat(&mut self, b: u8) -> bool {
        self.skip_ws();
        if self.src.get(self.pos) == Some(&b) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, b: u8) -> Result<(), ValueParseError> {
        if self.eat(b) {
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", b as char)))
        }
    }

    pub fn ident(&mut self) -> Result<String, ValueParseError> {
        self.skip_ws();
        let start = self.pos;
        while self.pos < self.src.len()
            && (self.src[self.pos].is_ascii_alphanumeric() || self.src[self.pos] == b'_')
        {
            self.pos += 1;
        }
        if start == self.pos || self.src[start].is_ascii_digit() {
            self.pos = start;
            return Err(self.err("expected identifier"));
        }
        Ok(String::from_utf8_lossy(&self.src[start..self.pos]).into_owned())
    }

    pub fn value(&mut self) -> Result<HfValue, ValueParseError> {
        self.skip_ws();
        match self.src.get(self.pos) {
            Some(b'{') => {
                self.pos += 1;
                let mut members = Vec::new();
                if !self.eat(b'}') {
                    loop {
                        members.push(self.value()?);
                        if self.eat(b'}') {
                            break;
                        }
                        self.expect(b',')?;
                    }
                }
                Ok(HfValue::set_of(members))
            }
            Some(b'<') => {
                self.pos += 1;
                let a = self.value()?;
                self.expect(b',')?;
                let b = self.value()?;
                self.expect(b'>')?;
                Ok(HfValue::pair(a, b))
            }
            Some(_) => {
                let name = self.ident()?;
                HfValue::atom(&name).map_err(|e| self.err(e.to_string()))
            }
            None => Err(self.err("unexpected end of input")),
        }
    }

    pub fn at_end(&mut self) -> bool {
        self.skip_ws();
        self.pos >= self.src.len()
    }

    pub fn rest(&self) -> &'a str {
        std::str::from_utf8(&self.src[self.pos..]).unwrap_or("")
    }

    pub fn eat_char(&mut self, c: u8) -> bool {
        self.eat(c)
    }

    pub fn expect_char(&mut self, c: u8) -> Result<(), ValueParseError> {
        self.expect(c)
    }

    pub fn error(&self, msg: impl Into<String>) -> ValueParseError {
        self.err(msg)
    }
}

impl std::str::FromStr for HfValue {
    type Err = ValueParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut p = ValueParser::new(s);
        let v = p.value()?;
        if !p.at_end() {
            return Err(p.err("trailing input"));
        }
        Ok(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(s: &str) -> HfValue {
        s.parse().unwrap()
    }

    #[test]
    fn empty_and_membership() {
        let e = HfValue::empty();
        assert_eq!(e, v("{}"));
        assert!(!member(&v("a"), &e).unwrap());
        assert_eq!(e.union(&e).unwrap(), e);
    }

    #[test]
    fn singleton_examples() {
        assert_eq!(HfValue::singleton(v("a")), v("{a}"));
        assert_eq!(HfValue::singleton(v("{}")), v("{{}}"));
        assert_eq!(HfValue::singleton(v("{a,b}")), v("{{a,b}}"));
    }

    #[test]
    fn union_examples() {
        assert_eq!(v("{a}").union(&v("{b}")).unwrap(), v("{a,b}"));
        assert_eq!(v("{a,b}").union(&v("{a}")).unwrap(), v("{a,b}"));
        // brute-force dedup oracle: collect members, keep the first of each equal class
        let all: Vec<HfValue> = v("{{a}}")
            .members()
            .unwrap()
            .iter()
            .chain(v("{{a},{}}").members().unwrap())
            .cloned()
            .collect();
        let mut dedup: Vec<HfValue> = Vec::new();
        for x in all {
            if !dedup.contains(&x) {
                dedup.push(x);
            }
        }
        assert_eq!(dedup.len(), 2);
        assert_eq!(
            v("{{a}}").union(&v("{{a},{}}")).unwrap(),
            HfValue::set_of(dedup)
        );
    }

    #[test]
    fn union_rejects_non_sets() {
        assert!(matches!(
            v("a").union(&v("{}")),
            Err(HfError::NotASet { .. })
        ));
        assert!(v("{}").union(&v("<a,b>")).is_err());
    }

    #[test]
    fn member_examples() {
        assert!(member(&v("a"), &v("{a,b}")).unwrap());
        assert!(!member(&v("{a}"), &v("{a,b}")).unwrap());
        assert!(member(&v("{}"), &v("{{a},{}}")).unwrap());
        assert!(member(&v("a"), &v("a")).is_err());
    }

    #[test]
    fn pair_examples() {
        assert_ne!(HfValue::pair(v("a"), v("b")), HfValue::pair(v("b"), v("a")));
        assert_eq!(HfValue::pair(v("a"), v("a")), HfValue::pair(v("a"), v("a")));
        assert_eq!(HfValue::pair(v("{a}"), v("{}")).first(), Some(&v("{a}")));
    }

    #[test]
    fn choose_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(choose(&v("{a}"), &mut rng).unwrap(), v("a"));
        let s = v("{a,b}");
        let x = choose(&s, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        let y = choose(&s, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
        assert!(member(&x, &s).unwrap());
        assert_eq!(x, y);
        assert_eq!(choose(&v("{}"), &mut rng), Err(HfError::ChooseEmpty));
        assert!(choose(&v("a"), &mut rng).is_err());
    }

    #[test]
    fn canonical_id_examples() {
        assert_eq!(canonical_id(&v("{a,b}")), canonical_id(&v("{b,a}")));
        assert_ne!(canonical_id(&v("{a}")), canonical_id(&v("{{a}}")));
        assert_ne!(canonical_id(&v("<a,b>")), canonical_id(&v("{a,b}")));
    }

    #[test]
    fn universe_distinguishes_and_agrees() {
        let mut u = Universe::new();
        let a = u.intern(&v("{a,b}"));
        let b = u.intern(&v("{b,a,a}"));
        let c = u.intern(&v("{a}"));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(u.lookup(c), Some(&v("{a}")));
        assert_eq!(u.len(), 2);
    }

    #[test]
    fn limits_are_reported() {
        let lim = Limits {
            max_depth: 2,
            max_width: 2,
        };
        assert!(singleton(v("{{a}}"), &lim).is_err());
        assert!(union(&v("{a,b}"), &v("{c}"), &lim).is_err());
        assert!(v("{a,b,c}").check_limits(&lim).is_err());
        assert!(v("{a,b}").check_limits(&lim).is_ok());
    }

    #[test]
    fn parse_print_examples() {
        for s in ["a", "{}", "{a, b}", "<a, {}>", "{{a}, <b, c>}"] {
            let x = v(s);
            assert_eq!(x.to_string().parse::<HfValue>().unwrap(), x);
        }
        assert!("{a,".parse::<HfValue>().is_err());
        assert!("{a} b".parse::<HfValue>().is_err());
    }
}
