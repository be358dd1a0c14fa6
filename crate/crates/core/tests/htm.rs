use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;
use supportive_core::htm::{
    linearize, parse_htm, serialize_htm, validate_htm, AdvanceRule, Gate, LinearizeError, ObjectClass, ObjectDecl,
    ObjectSet, OpKind, Universe,
};
use supportive_core::{ActionToken, Htm, HtmNode, LeafSpec, PrefId};

/// Shape of a random tree; leaves are numbered when the tree is built.
#[derive(Clone, Debug)]
enum Shape {
    Leaf { tools: u64, parts: u64, hold: bool },
    Op(OpKind, Vec<Shape>),
}

fn shape() -> impl Strategy<Value = Shape> {
    let leaf = (0u64..4, 0u64..4, any::<bool>()).prop_map(|(tools, parts, hold)| Shape::Leaf { tools, parts, hold });
    leaf.prop_recursive(3, 12, 3, |inner| {
        (
            prop::sample::select(vec![OpKind::Sequence, OpKind::Parallel, OpKind::Alternative]),
            prop::collection::vec(inner, 1..=3),
        )
            .prop_map(|(k, c)| Shape::Op(k, c))
    })
}

fn build(s: &Shape, next: &mut usize) -> HtmNode {
    match s {
        Shape::Leaf { tools, parts, hold } => {
            *next += 1;
            let mut advance_actions = vec![AdvanceRule {
                action: ActionToken::Wait,
                gate: Gate::Always,
            }];
            if *hold {
                advance_actions.push(AdvanceRule {
                    action: ActionToken::Hold,
                    gate: Gate::RequiresPreference {
                        pref: PrefId(0),
                        value: true,
                    },
                });
            }
            HtmNode::leaf(LeafSpec {
                name: format!("L{next}"),
                // objects 0-1 are tools, 2-3 parts
                required_tools: ObjectSet(*tools),
                consumed_parts: ObjectSet(*parts << 2),
                advance_actions,
            })
        }
        Shape::Op(kind, children) => {
            *next += 1;
            let name = format!("N{next}");
            HtmNode::op(*kind, name, children.iter().map(|c| build(c, next)).collect())
        }
    }
}

fn htm(s: &Shape) -> Htm {
    let mut universe = Universe::default();
    for (name, class) in [
        ("t0", ObjectClass::Tool),
        ("t1", ObjectClass::Tool),
        ("p0", ObjectClass::Part),
        ("p1", ObjectClass::Part),
    ] {
        universe.objects.push(ObjectDecl {
            name: name.into(),
            class,
        });
    }
    universe.preferences.push("hold".into());
    Htm {
        name: "random".into(),
        universe,
        root: build(s, &mut 0),
    }
}

fn binom(n: u128, k: u128) -> u128 {
    (0..k).fold(1, |acc, i| acc * (n - i) / (i + 1))
}

/// Number of execution orders, keyed by order length.
fn count(node: &HtmNode) -> BTreeMap<usize, u128> {
    match node {
        HtmNode::Leaf(_) => BTreeMap::from([(1, 1)]),
        HtmNode::Operator { kind, children, .. } => {
            let parts: Vec<_> = children.iter().map(count).collect();
            match kind {
                OpKind::Alternative => {
                    let mut out = BTreeMap::new();
                    for p in parts {
                        for (l, c) in p {
                            *out.entry(l).or_insert(0) += c;
                        }
                    }
                    out
                }
                OpKind::Sequence | OpKind::Parallel => {
                    let par = *kind == OpKind::Parallel;
                    parts.into_iter().fold(BTreeMap::from([(0, 1)]), |acc, p| {
                        let mut out = BTreeMap::new();
                        for (&la, &ca) in &acc {
                            for (&lb, &cb) in &p {
                                let ways = if par { binom((la + lb) as u128, lb as u128) } else { 1 };
                                *out.entry(la + lb).or_insert(0) += ca * cb * ways;
                            }
                        }
                        out
                    })
                }
            }
        }
    }
}

/// Checks that `order` respects the operator semantics of `node`: sequence
/// children appear in order, and every leaf of the chosen alternatives
/// appears exactly once.
fn respects(node: &HtmNode, order: &[&str]) -> bool {
    fn leaf_names(n: &HtmNode) -> BTreeSet<&str> {
        n.leaves().into_iter().map(|l| l.name.as_str()).collect()
    }
    match node {
        HtmNode::Leaf(l) => order == [l.name.as_str()],
        HtmNode::Operator { kind, children, .. } => {
            let sub: Vec<Vec<&str>> = children
                .iter()
                .map(|c| {
                    let names = leaf_names(c);
                    order.iter().copied().filter(|n| names.contains(n)).collect()
                })
                .collect();
            let used: usize = sub.iter().map(Vec::len).sum();
            if used != order.len() {
                return false;
            }
            match kind {
                OpKind::Alternative => {
                    let chosen: Vec<usize> = (0..children.len()).filter(|&i| !sub[i].is_empty()).collect();
                    chosen.len() == 1 && respects(&children[chosen[0]], &sub[chosen[0]])
                }
                OpKind::Sequence | OpKind::Parallel => {
                    if !children.iter().zip(&sub).all(|(c, s)| respects(c, s)) {
                        return false;
                    }
                    if *kind == OpKind::Parallel {
                        return true;
                    }
                    let concat: Vec<&str> = sub.concat();
                    concat == order
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn instance_count_matches_combinatorics(s in shape()) {
        let h = htm(&s);
        let expected: u128 = count(&h.root).values().sum();
        prop_assume!(expected <= 5000);
        let instances = linearize(&h.root, usize::MAX).unwrap();
        prop_assert_eq!(instances.len() as u128, expected);

        let distinct: BTreeSet<Vec<&str>> = instances.iter().map(|i| i.names()).collect();
        prop_assert_eq!(distinct.len(), instances.len());
        for inst in &instances {
            prop_assert!(respects(&h.root, &inst.names()), "{}", inst);
        }
    }

    #[test]
    fn serialization_round_trips(s in shape()) {
        let h = htm(&s);
        let text = serialize_htm(&h);
        let back = parse_htm(&text).unwrap();
        prop_assert_eq!(back, h);
    }

    #[test]
    fn generated_trees_validate(s in shape()) {
        let h = htm(&s);
        prop_assert!(validate_htm(&h).is_empty(), "{:?}", validate_htm(&h));
    }
}

#[test]
fn parallel_cap_is_enforced() {
    let leaf = |n: &str| {
        HtmNode::leaf(LeafSpec {
            name: n.into(),
            required_tools: ObjectSet::EMPTY,
            consumed_parts: ObjectSet::EMPTY,
            advance_actions: vec![AdvanceRule {
                action: ActionToken::Wait,
                gate: Gate::Always,
            }],
        })
    };
    let seq = |p: &str| HtmNode::op(OpKind::Sequence, p, vec![leaf(&format!("{p}1")), leaf(&format!("{p}2")), leaf(&format!("{p}3"))]);
    // 6! / (3! 3!) = 20 interleavings
    let root = HtmNode::op(OpKind::Parallel, "both", vec![seq("a"), seq("b")]);
    assert_eq!(linearize(&root, 20).unwrap().len(), 20);
    assert_eq!(
        linearize(&root, 19).unwrap_err(),
        LinearizeError::CapExceeded {
            node: "both".into(),
            cap: 19
        }
    );
}
