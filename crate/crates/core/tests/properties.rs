use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use dynca::asmlang::{parse, pretty_print, validate};
use dynca::compiler::{compile, CompileOptions};
use dynca::generator::{random_program, random_state, GenConfig};
use dynca::hfset::{member, HfValue};
use dynca::pattern::{validate_ruleset, RuleSet};
use dynca::state::State;
use dynca::tangle::{check_invariants, decode, encode};

fn value() -> impl Strategy<Value = HfValue> {
    let leaf = prop_oneof![
        Just(HfValue::empty()),
        "[a-e]".prop_map(|a| HfValue::atom(&a).unwrap()),
    ];
    leaf.prop_recursive(4, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(HfValue::set_of),
            (inner.clone(), inner).prop_map(|(a, b)| HfValue::pair(a, b)),
        ]
    })
}

fn set() -> impl Strategy<Value = HfValue> {
    prop::collection::vec(value(), 0..4).prop_map(HfValue::set_of)
}

fn state() -> impl Strategy<Value = State> {
    prop::collection::btree_map("t[0-3]", value(), 0..4).prop_map(|m| {
        m.into_iter()
            .fold(State::new(), |s, (t, v)| s.with(&t, v))
            .normalized()
    })
}

proptest! {
    #[test]
    fn union_laws(a in set(), b in set(), c in set()) {
        let ab = a.union(&b).unwrap();
        prop_assert_eq!(&ab, &b.union(&a).unwrap());
        prop_assert_eq!(a.union(&a).unwrap(), a.clone());
        prop_assert_eq!(
            ab.union(&c).unwrap(),
            a.union(&b.union(&c).unwrap()).unwrap()
        );
        for x in ab.members().unwrap() {
            prop_assert!(member(x, &a).unwrap() || member(x, &b).unwrap());
        }
    }

    #[test]
    fn set_of_ignores_order_and_duplicates(mut v in prop::collection::vec(value(), 0..5)) {
        let s = HfValue::set_of(v.clone());
        v.reverse();
        v.extend(v.clone());
        prop_assert_eq!(HfValue::set_of(v), s);
    }

    #[test]
    fn value_text_round_trips(v in value()) {
        let back: HfValue = v.to_string().parse().unwrap();
        prop_assert_eq!(back, v);
    }

    #[test]
    fn state_text_round_trips(s in state()) {
        prop_assert_eq!(State::parse(&s.to_string()).unwrap(), s);
    }

    #[test]
    fn encoding_is_one_node_per_value(s in state()) {
        let g = encode(&s);
        prop_assert!(check_invariants(&g).is_empty());
        let mut subs = BTreeSet::from([HfValue::empty()]);
        s.values.values().for_each(|v| v.subvalues(&mut subs));
        let value_nodes = g.node_ids().filter(|n| g.node(*n).is_value()).count();
        prop_assert_eq!(value_nodes, subs.len());
        prop_assert_eq!(decode(&g).unwrap().normalized(), s);
    }

    #[test]
    fn generated_programs_compile_cleanly(seed in any::<u64>(), choose in any::<bool>()) {
        let cfg = GenConfig { choose, ..GenConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = random_program(&mut rng, &cfg);
        prop_assert!(validate(&p).is_empty());
        let text = pretty_print(&p);
        prop_assert_eq!(pretty_print(&parse(&text).unwrap()), text);
        let unit = compile(&p, CompileOptions::default()).unwrap();
        prop_assert!(validate_ruleset(&unit.ruleset).is_empty());
        let again = compile(&p, CompileOptions::default()).unwrap();
        prop_assert_eq!(unit.ruleset.serialize(), again.ruleset.serialize());
        prop_assert_eq!(&RuleSet::parse(&unit.ruleset.serialize()).unwrap(), &unit.ruleset);
        let s = random_state(&mut rng, &p, &cfg);
        prop_assert!(check_invariants(&unit.initial_tangle(&s)).is_empty());
    }
}
