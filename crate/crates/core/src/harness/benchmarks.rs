//! Built-in task models.
//!
//! The abstract benchmarks share one universe: tools `t1..tN` needed by every
//! step, custom actions `a`, `b`, `c`, and no preferences. A subtask `B` is the
//! two-step sequence `a` then `b`; a subtask `C` is `a` then `c`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::htm::{
    ActionToken, AdvanceRule, CustomId, Gate, Htm, HtmNode, LeafSpec, ObjectClass, ObjectDecl, ObjectId,
    ObjectSet, OpKind, PrefId, Universe,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Benchmark {
    Sequential,
    Uniform,
    Alternative,
    /// Eight-subtask table assembly.
    Table,
    /// One leg of the table: mount the linkages, then attach it to the top.
    Leg,
}

impl Benchmark {
    pub const ALL: [Benchmark; 5] = [
        Benchmark::Sequential,
        Benchmark::Uniform,
        Benchmark::Alternative,
        Benchmark::Table,
        Benchmark::Leg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Benchmark::Sequential => "sequential",
            Benchmark::Uniform => "uniform",
            Benchmark::Alternative => "alternative",
            Benchmark::Table => "table",
            Benchmark::Leg => "leg",
        }
    }
}

impl fmt::Display for Benchmark {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum BenchmarkError {
    #[error("unknown benchmark '{0}' (expected one of sequential, uniform, alternative, table, leg)")]
    Unknown(String),
    #[error("invalid benchmark parameter: {0}")]
    Param(String),
}

impl FromStr for Benchmark {
    type Err = BenchmarkError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Benchmark::ALL
            .into_iter()
            .find(|b| b.as_str() == s)
            .ok_or_else(|| BenchmarkError::Unknown(s.to_string()))
    }
}

/// Size overrides for the abstract benchmarks.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkParams {
    pub tools: usize,
    /// Subtasks in `sequential`.
    pub sequential_len: usize,
    /// Subtasks per alternative in `uniform`.
    pub uniform_len: usize,
    /// Alternatives in `uniform`, taken in lexicographic order (all when `None`).
    pub uniform_count: Option<usize>,
}

impl Default for BenchmarkParams {
    fn default() -> Self {
        BenchmarkParams {
            tools: 2,
            sequential_len: 20,
            uniform_len: 4,
            uniform_count: None,
        }
    }
}

pub const ALTERNATIVE_SEQUENCES: [&str; 4] = ["BCCC", "BBBB", "CBBC", "CCBC"];

pub fn build_benchmark(name: &str, params: &BenchmarkParams) -> Result<Htm, BenchmarkError> {
    build(name.parse()?, params)
}

pub fn build(benchmark: Benchmark, params: &BenchmarkParams) -> Result<Htm, BenchmarkError> {
    match benchmark {
        Benchmark::Sequential => {
            if params.sequential_len == 0 {
                return Err(BenchmarkError::Param("sequential_len must be at least 1".into()));
            }
            let u = abstract_universe(params.tools)?;
            let children = (1..=params.sequential_len)
                .map(|i| subtask(&u, format!("B{i:02}"), 'B'))
                .collect();
            Ok(Htm {
                name: "sequential".into(),
                root: HtmNode::op(OpKind::Sequence, "sequential", children),
                universe: u,
            })
        }
        Benchmark::Uniform => {
            let len = params.uniform_len;
            if len == 0 || len > 16 {
                return Err(BenchmarkError::Param("uniform_len must lie in 1..=16".into()));
            }
            let total = 1usize << len;
            let count = params.uniform_count.unwrap_or(total);
            if count == 0 || count > total {
                return Err(BenchmarkError::Param(format!("uniform_count must lie in 1..={total}")));
            }
            let words: Vec<String> = (0..count)
                .map(|k| {
                    (0..len)
                        .map(|j| if k >> (len - 1 - j) & 1 == 0 { 'B' } else { 'C' })
                        .collect()
                })
                .collect();
            alternatives("uniform", &words, params.tools)
        }
        Benchmark::Alternative => {
            let words: Vec<String> = ALTERNATIVE_SEQUENCES.iter().map(|s| s.to_string()).collect();
            alternatives("alternative", &words, params.tools)
        }
        Benchmark::Table => Ok(table_like("table", 4)),
        Benchmark::Leg => Ok(table_like("leg", 1)),
    }
}

fn abstract_universe(tools: usize) -> Result<Universe, BenchmarkError> {
    if tools > crate::htm::MAX_OBJECTS {
        return Err(BenchmarkError::Param(format!("at most {} tools", crate::htm::MAX_OBJECTS)));
    }
    Ok(Universe {
        objects: (1..=tools)
            .map(|i| ObjectDecl {
                name: format!("t{i}"),
                class: ObjectClass::Tool,
            })
            .collect(),
        preferences: Vec::new(),
        custom_actions: vec!["a".into(), "b".into(), "c".into()],
    })
}

fn all_tools(u: &Universe) -> ObjectSet {
    u.tools().collect()
}

fn step_leaf(name: String, tools: ObjectSet, action: ActionToken) -> HtmNode {
    HtmNode::Leaf(LeafSpec {
        name,
        required_tools: tools,
        consumed_parts: ObjectSet::EMPTY,
        advance_actions: vec![AdvanceRule {
            action,
            gate: Gate::Always,
        }],
    })
}

/// Subtask `kind` ('B' or 'C') as its two micro-leaves.
fn subtask(u: &Universe, name: String, kind: char) -> HtmNode {
    let tools = all_tools(u);
    let second = if kind == 'B' { CustomId(1) } else { CustomId(2) };
    HtmNode::op(
        OpKind::Sequence,
        name.clone(),
        vec![
            step_leaf(format!("{name}/1"), tools, ActionToken::Custom(CustomId(0))),
            step_leaf(format!("{name}/2"), tools, ActionToken::Custom(second)),
        ],
    )
}

fn alternatives(name: &str, words: &[String], tools: usize) -> Result<Htm, BenchmarkError> {
    let u = abstract_universe(tools)?;
    let children = words
        .iter()
        .map(|w| {
            let subtasks = w
                .chars()
                .enumerate()
                .map(|(i, kind)| subtask(&u, format!("{w}.{}:{kind}", i + 1), kind))
                .collect();
            HtmNode::op(OpKind::Sequence, w.clone(), subtasks)
        })
        .collect();
    Ok(Htm {
        name: name.into(),
        root: HtmNode::op(OpKind::Alternative, name, children),
        universe: u,
    })
}

pub const TABLE_OBJECTS: [(&str, ObjectClass); 5] = [
    ("screwdriver", ObjectClass::Tool),
    ("screws", ObjectClass::Part),
    ("joints", ObjectClass::Part),
    ("leg", ObjectClass::Part),
    ("top", ObjectClass::Part),
];

/// `legs` repetitions of (mount linkages on leg, attach leg to top). Every
/// subtask completes on `wait`, or on `hold` when the builder likes holding.
fn table_like(name: &str, legs: usize) -> Htm {
    let u = Universe {
        objects: TABLE_OBJECTS
            .iter()
            .map(|&(n, class)| ObjectDecl { name: n.into(), class })
            .collect(),
        preferences: vec!["hold".into()],
        custom_actions: Vec::new(),
    };
    let id = |n: &str| u.object(n).expect("declared above");
    let set = |names: &[&str]| names.iter().map(|n| id(n)).collect::<ObjectSet>();
    let rules = vec![
        AdvanceRule {
            action: ActionToken::Wait,
            gate: Gate::Always,
        },
        AdvanceRule {
            action: ActionToken::Hold,
            gate: Gate::RequiresPreference {
                pref: PrefId(0),
                value: true,
            },
        },
    ];
    let mut children = Vec::new();
    for i in 1..=legs {
        children.push(HtmNode::Leaf(LeafSpec {
            name: format!("mount linkages on leg {i}"),
            required_tools: set(&["screwdriver", "screws", "joints", "leg"]),
            consumed_parts: ObjectSet::EMPTY,
            advance_actions: rules.clone(),
        }));
        let mut consumed = set(&["leg"]);
        if i == legs {
            consumed.insert(id("top"));
        }
        children.push(HtmNode::Leaf(LeafSpec {
            name: format!("attach leg {i} to top"),
            required_tools: set(&["screwdriver", "screws", "top"]),
            consumed_parts: consumed,
            advance_actions: rules.clone(),
        }));
    }
    Htm {
        name: name.into(),
        root: HtmNode::op(OpKind::Sequence, name, children),
        universe: u,
    }
}

/// Object id by name in the table universe.
pub fn table_object(name: &str) -> Option<ObjectId> {
    TABLE_OBJECTS.iter().position(|(n, _)| *n == name).map(|i| ObjectId(i as u16))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::htm::{linearize, validate_htm, DEFAULT_INTERLEAVING_CAP};

    fn instances(h: &Htm) -> Vec<crate::htm::TaskInstance> {
        linearize(&h.root, DEFAULT_INTERLEAVING_CAP).unwrap()
    }

    #[test]
    fn sequential_has_twenty_subtasks() {
        let h = build_benchmark("sequential", &BenchmarkParams::default()).unwrap();
        assert!(validate_htm(&h).is_empty());
        let HtmNode::Operator { children, .. } = &h.root else { panic!() };
        assert_eq!(children.len(), 20);
        let inst = instances(&h);
        assert_eq!(inst.len(), 1);
        assert_eq!(inst[0].len(), 40);
    }

    #[test]
    fn alternative_has_four_instances() {
        let h = build_benchmark("alternative", &BenchmarkParams::default()).unwrap();
        assert!(validate_htm(&h).is_empty());
        let inst = instances(&h);
        assert_eq!(inst.len(), 4);
        assert!(inst.iter().all(|i| i.len() == 8));
        assert_eq!(inst[0].leaves[1].name, "BCCC.1:B/2");
    }

    #[test]
    fn uniform_counts() {
        let h = build_benchmark("uniform", &BenchmarkParams::default()).unwrap();
        assert!(validate_htm(&h).is_empty());
        assert_eq!(instances(&h).len(), 16);
        let p = BenchmarkParams {
            uniform_len: 3,
            ..Default::default()
        };
        assert_eq!(instances(&build_benchmark("uniform", &p).unwrap()).len(), 8);
        let p = BenchmarkParams {
            uniform_count: Some(17),
            ..Default::default()
        };
        assert!(matches!(build_benchmark("uniform", &p), Err(BenchmarkError::Param(_))));
    }

    #[test]
    fn table_shape() {
        let h = build_benchmark("table", &BenchmarkParams::default()).unwrap();
        assert!(validate_htm(&h).is_empty());
        assert_eq!(h.root.leaves().len(), 8);
        assert_eq!(h.universe.tools().count(), 1);
        assert_eq!(h.universe.preference("hold"), Some(PrefId(0)));
        assert_eq!(table_object("top"), h.universe.object("top"));
    }

    #[test]
    fn unknown_name() {
        assert_eq!(
            build_benchmark("chair", &BenchmarkParams::default()),
            Err(BenchmarkError::Unknown("chair".into()))
        );
    }
}
