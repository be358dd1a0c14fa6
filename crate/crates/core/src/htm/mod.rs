//! Hierarchical task models: sequential, parallel, and alternative composition
//! of primitive subtasks, each annotated with the objects it needs and the
//! robot actions that let it proceed.

mod format;
mod linearize;
mod validate;

use std::fmt;

pub use format::{parse_htm, serialize_htm, HtmParseError};
pub use linearize::{leaf_info, linearize, LinearizeError, DEFAULT_INTERLEAVING_CAP};
pub use validate::{validate_htm, Diagnostic};

/// Maximum number of declared objects; the workspace is a 64-bit set.
pub const MAX_OBJECTS: usize = 64;
/// Maximum number of declared preferences.
pub const MAX_PREFERENCES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PrefId(pub u16);

/// Index into the declared custom action tokens (the abstract `a`, `b`, `c`).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CustomId(pub u16);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ObjectClass {
    Tool,
    Part,
}

impl ObjectClass {
    pub fn as_str(self) -> &'static str {
        match self {
            ObjectClass::Tool => "tool",
            ObjectClass::Part => "part",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObjectDecl {
    pub name: String,
    pub class: ObjectClass,
}

/// Declared object, preference, and custom-action universes of one HTM.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Universe {
    pub objects: Vec<ObjectDecl>,
    pub preferences: Vec<String>,
    pub custom_actions: Vec<String>,
}

impl Universe {
    pub fn object(&self, name: &str) -> Option<ObjectId> {
        self.objects
            .iter()
            .position(|o| o.name == name)
            .map(|i| ObjectId(i as u16))
    }

    pub fn preference(&self, name: &str) -> Option<PrefId> {
        self.preferences
            .iter()
            .position(|p| p == name)
            .map(|i| PrefId(i as u16))
    }

    pub fn custom(&self, name: &str) -> Option<CustomId> {
        self.custom_actions
            .iter()
            .position(|c| c == name)
            .map(|i| CustomId(i as u16))
    }

    pub fn object_name(&self, id: ObjectId) -> &str {
        self.objects
            .get(id.0 as usize)
            .map(|o| o.name.as_str())
            .unwrap_or("<unknown object>")
    }

    pub fn preference_name(&self, id: PrefId) -> &str {
        self.preferences
            .get(id.0 as usize)
            .map(String::as_str)
            .unwrap_or("<unknown preference>")
    }

    pub fn custom_name(&self, id: CustomId) -> &str {
        self.custom_actions
            .get(id.0 as usize)
            .map(String::as_str)
            .unwrap_or("<unknown action>")
    }

    pub fn tools(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.objects
            .iter()
            .enumerate()
            .filter(|(_, o)| o.class == ObjectClass::Tool)
            .map(|(i, _)| ObjectId(i as u16))
    }

    /// Text form of an action, as used in HTM documents, logs, and CSV.
    pub fn action_label(&self, action: ActionToken) -> String {
        match action {
            ActionToken::Wait => "wait".to_string(),
            ActionToken::Hold => "hold".to_string(),
            ActionToken::Bring(o) => format!("bring:{}", self.object_name(o)),
            ActionToken::Cleanup(o) => format!("cleanup:{}", self.object_name(o)),
            ActionToken::Custom(c) => self.custom_name(c).to_string(),
        }
    }

    /// Inverse of [`Universe::action_label`].
    pub fn parse_action(&self, label: &str) -> Option<ActionToken> {
        match label {
            "wait" => Some(ActionToken::Wait),
            "hold" => Some(ActionToken::Hold),
            _ => {
                if let Some(o) = label.strip_prefix("bring:") {
                    self.object(o).map(ActionToken::Bring)
                } else if let Some(o) = label.strip_prefix("cleanup:") {
                    self.object(o).map(ActionToken::Cleanup)
                } else {
                    self.custom(label).map(ActionToken::Custom)
                }
            }
        }
    }
}

/// Robot action.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ActionToken {
    Wait,
    Hold,
    Bring(ObjectId),
    Cleanup(ObjectId),
    Custom(CustomId),
}

impl ActionToken {
    /// Actions that can complete a subtask. Bring and cleanup only act on objects.
    pub fn can_advance(self) -> bool {
        matches!(self, ActionToken::Wait | ActionToken::Hold | ActionToken::Custom(_))
    }
}

/// Set of objects, one bit per declared object.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ObjectSet(pub u64);

impl ObjectSet {
    pub const EMPTY: ObjectSet = ObjectSet(0);

    pub fn contains(self, o: ObjectId) -> bool {
        self.0 & (1u64 << o.0) != 0
    }

    pub fn insert(&mut self, o: ObjectId) {
        self.0 |= 1u64 << o.0;
    }

    pub fn remove(&mut self, o: ObjectId) {
        self.0 &= !(1u64 << o.0);
    }

    pub fn toggle(&mut self, o: ObjectId) {
        self.0 ^= 1u64 << o.0;
    }

    pub fn union(self, other: ObjectSet) -> ObjectSet {
        ObjectSet(self.0 | other.0)
    }

    pub fn difference(self, other: ObjectSet) -> ObjectSet {
        ObjectSet(self.0 & !other.0)
    }

    pub fn len(self) -> u32 {
        self.0.count_ones()
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn iter(self) -> impl Iterator<Item = ObjectId> {
        (0..64u16).filter(move |i| self.0 & (1u64 << i) != 0).map(ObjectId)
    }
}

impl FromIterator<ObjectId> for ObjectSet {
    fn from_iter<I: IntoIterator<Item = ObjectId>>(iter: I) -> Self {
        let mut set = ObjectSet::EMPTY;
        for o in iter {
            set.insert(o);
        }
        set
    }
}

/// Condition under which an advance action completes a subtask.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Gate {
    Always,
    RequiresPreference { pref: PrefId, value: bool },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct AdvanceRule {
    pub action: ActionToken,
    pub gate: Gate,
}

/// A primitive subtask performed by the human.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LeafSpec {
    pub name: String,
    /// Must be on the workspace when the subtask completes; not consumed.
    pub required_tools: ObjectSet,
    /// Must be on the workspace when the subtask completes; removed afterwards.
    pub consumed_parts: ObjectSet,
    pub advance_actions: Vec<AdvanceRule>,
}

impl LeafSpec {
    pub fn needed(&self) -> ObjectSet {
        self.required_tools.union(self.consumed_parts)
    }

    pub fn rule_for(&self, action: ActionToken) -> Option<&AdvanceRule> {
        self.advance_actions.iter().find(|r| r.action == action)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum OpKind {
    Sequence,
    Parallel,
    Alternative,
}

impl OpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::Sequence => "seq",
            OpKind::Parallel => "par",
            OpKind::Alternative => "alt",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum HtmNode {
    Leaf(LeafSpec),
    Operator {
        kind: OpKind,
        name: String,
        children: Vec<HtmNode>,
    },
}

impl HtmNode {
    pub fn leaf(spec: LeafSpec) -> Self {
        HtmNode::Leaf(spec)
    }

    pub fn op(kind: OpKind, name: impl Into<String>, children: Vec<HtmNode>) -> Self {
        HtmNode::Operator {
            kind,
            name: name.into(),
            children,
        }
    }

    pub fn name(&self) -> &str {
        match self {
            HtmNode::Leaf(l) => &l.name,
            HtmNode::Operator { name, .. } => name,
        }
    }

    /// Leaves in document order.
    pub fn leaves(&self) -> Vec<&LeafSpec> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<&'a LeafSpec>) {
        match self {
            HtmNode::Leaf(l) => out.push(l),
            HtmNode::Operator { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
        }
    }
}

/// A parsed task model: the tree plus its resolved universes.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Htm {
    pub name: String,
    pub universe: Universe,
    pub root: HtmNode,
}

/// One way the task can unfold: its primitive subtasks in execution order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaskInstance {
    pub leaves: Vec<LeafSpec>,
}

impl TaskInstance {
    pub fn len(&self) -> usize {
        self.leaves.len()
    }

    pub fn is_empty(&self) -> bool {
        self.leaves.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.leaves.iter().map(|l| l.name.as_str()).collect()
    }
}

impl fmt::Display for TaskInstance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}]", self.names().join(", "))
    }
}
