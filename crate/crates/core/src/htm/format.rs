//! JSON document format for task models.
//!
//! ```json
//! {
//!   "name": "table",
//!   "objects": [{"id": "screwdriver", "class": "tool"}],
//!   "preferences": ["hold"],
//!   "actions": ["a", "b"],
//!   "root": {"op": "seq", "name": "task", "children": [
//!     {"leaf": {"name": "mount", "required_tools": ["screwdriver"], "consumed_parts": [],
//!               "advance_actions": [{"action": "wait"},
//!                                   {"action": "hold", "when": {"pref": "hold", "value": true}}]}}
//!   ]}
//! }
//! ```
//!
//! `actions` declares custom action tokens. A leaf may give `steps` (a list of
//! advance-action lists) instead of `advance_actions`; it then expands to a
//! sequence of micro-leaves named `<name>/1`, `<name>/2`, ... Every micro-leaf
//! requires the leaf's objects and only the last one consumes its parts.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    AdvanceRule, Gate, Htm, HtmNode, LeafSpec, ObjectClass, ObjectDecl, ObjectSet,
    OpKind, Universe, MAX_OBJECTS, MAX_PREFERENCES,
};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HtmParseError {
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("unknown object '{name}' at {path}")]
    UnknownObject { name: String, path: String },
    #[error("unknown preference '{name}' at {path}")]
    UnknownPreference { name: String, path: String },
    #[error("unknown action '{name}' at {path}")]
    UnknownAction { name: String, path: String },
    #[error("empty operator node at {path}")]
    EmptyOperator { path: String },
    #[error("invalid node at {path}: {message}")]
    InvalidNode { path: String, message: String },
    #[error("invalid declarations: {0}")]
    Declarations(String),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    name: String,
    objects: Vec<RawObject>,
    #[serde(default)]
    preferences: Vec<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    actions: Vec<String>,
    root: RawNode,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawObject {
    id: String,
    class: RawClass,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RawClass {
    Tool,
    Part,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    leaf: Option<RawLeaf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    op: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    children: Option<Vec<RawNode>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLeaf {
    name: String,
    #[serde(default)]
    required_tools: Vec<String>,
    #[serde(default)]
    consumed_parts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    advance_actions: Option<Vec<RawRule>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    steps: Option<Vec<Vec<RawRule>>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRule {
    action: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    when: Option<RawWhen>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWhen {
    pref: String,
    value: bool,
}

/// Parse an HTM document, resolving every object, preference, and action
/// reference against the declared universes.
pub fn parse_htm(source: &str) -> Result<Htm, HtmParseError> {
    let raw: RawDoc = serde_json::from_str(source).map_err(|e| HtmParseError::Syntax {
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    let universe = resolve_universe(&raw)?;
    let root = resolve_node(&raw.root, &universe, "root")?;
    Ok(Htm {
        name: raw.name,
        universe,
        root,
    })
}

fn resolve_universe(raw: &RawDoc) -> Result<Universe, HtmParseError> {
    if raw.objects.len() > MAX_OBJECTS {
        return Err(HtmParseError::Declarations(format!(
            "{} objects declared, at most {MAX_OBJECTS} supported",
            raw.objects.len()
        )));
    }
    if raw.preferences.len() > MAX_PREFERENCES {
        return Err(HtmParseError::Declarations(format!(
            "{} preferences declared, at most {MAX_PREFERENCES} supported",
            raw.preferences.len()
        )));
    }
    let mut universe = Universe::default();
    for o in &raw.objects {
        if universe.object(&o.id).is_some() {
            return Err(HtmParseError::Declarations(format!("duplicate object '{}'", o.id)));
        }
        if o.id.is_empty() {
            return Err(HtmParseError::Declarations("empty object id".into()));
        }
        universe.objects.push(ObjectDecl {
            name: o.id.clone(),
            class: match o.class {
                RawClass::Tool => ObjectClass::Tool,
                RawClass::Part => ObjectClass::Part,
            },
        });
    }
    for p in &raw.preferences {
        if universe.preference(p).is_some() {
            return Err(HtmParseError::Declarations(format!("duplicate preference '{p}'")));
        }
        universe.preferences.push(p.clone());
    }
    for a in &raw.actions {
        let reserved = matches!(a.as_str(), "wait" | "hold")
            || a.starts_with("bring:")
            || a.starts_with("cleanup:");
        if reserved || a.is_empty() {
            return Err(HtmParseError::Declarations(format!(
                "custom action '{a}' collides with a built-in action"
            )));
        }
        if universe.custom(a).is_some() {
            return Err(HtmParseError::Declarations(format!("duplicate action '{a}'")));
        }
        universe.custom_actions.push(a.clone());
    }
    Ok(universe)
}

fn resolve_node(raw: &RawNode, universe: &Universe, path: &str) -> Result<HtmNode, HtmParseError> {
    match (&raw.leaf, &raw.op) {
        (Some(leaf), None) => {
            if raw.children.is_some() || raw.name.is_some() {
                return Err(HtmParseError::InvalidNode {
                    path: path.to_string(),
                    message: "a leaf node carries its name inside \"leaf\" and has no children"
                        .into(),
                });
            }
            resolve_leaf(leaf, universe, path)
        }
        (None, Some(op)) => {
            let kind = match op.as_str() {
                "seq" => OpKind::Sequence,
                "par" => OpKind::Parallel,
                "alt" => OpKind::Alternative,
                other => {
                    return Err(HtmParseError::InvalidNode {
                        path: path.to_string(),
                        message: format!("unknown operator '{other}' (expected seq, par, or alt)"),
                    })
                }
            };
            let name = raw.name.clone().unwrap_or_default();
            let children = raw.children.as_deref().unwrap_or(&[]);
            if children.is_empty() {
                return Err(HtmParseError::EmptyOperator {
                    path: node_path(path, &name),
                });
            }
            let here = node_path(path, &name);
            let children = children
                .iter()
                .enumerate()
                .map(|(i, c)| resolve_node(c, universe, &format!("{here}/{i}")))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(HtmNode::Operator {
                kind,
                name,
                children,
            })
        }
        _ => Err(HtmParseError::InvalidNode {
            path: path.to_string(),
            message: "node must have exactly one of \"leaf\" or \"op\"".into(),
        }),
    }
}

fn node_path(path: &str, name: &str) -> String {
    if name.is_empty() {
        path.to_string()
    } else {
        format!("{path}({name})")
    }
}

fn resolve_objects(
    names: &[String],
    universe: &Universe,
    path: &str,
) -> Result<ObjectSet, HtmParseError> {
    names
        .iter()
        .map(|n| {
            universe.object(n).ok_or_else(|| HtmParseError::UnknownObject {
                name: n.clone(),
                path: path.to_string(),
            })
        })
        .collect()
}

fn resolve_rules(
    rules: &[RawRule],
    universe: &Universe,
    path: &str,
) -> Result<Vec<AdvanceRule>, HtmParseError> {
    if rules.is_empty() {
        return Err(HtmParseError::InvalidNode {
            path: path.to_string(),
            message: "advance actions must not be empty".into(),
        });
    }
    let mut out: Vec<AdvanceRule> = Vec::with_capacity(rules.len());
    for r in rules {
        let action = match universe.parse_action(&r.action) {
            Some(a) if a.can_advance() => a,
            Some(_) => {
                return Err(HtmParseError::InvalidNode {
                    path: path.to_string(),
                    message: format!("'{}' cannot complete a subtask", r.action),
                })
            }
            None => {
                return Err(HtmParseError::UnknownAction {
                    name: r.action.clone(),
                    path: path.to_string(),
                })
            }
        };
        if out.iter().any(|x| x.action == action) {
            return Err(HtmParseError::InvalidNode {
                path: path.to_string(),
                message: format!("duplicate advance action '{}'", r.action),
            });
        }
        let gate = match &r.when {
            None => Gate::Always,
            Some(w) => Gate::RequiresPreference {
                pref: universe.preference(&w.pref).ok_or_else(|| {
                    HtmParseError::UnknownPreference {
                        name: w.pref.clone(),
                        path: path.to_string(),
                    }
                })?,
                value: w.value,
            },
        };
        out.push(AdvanceRule { action, gate });
    }
    Ok(out)
}

fn resolve_leaf(raw: &RawLeaf, universe: &Universe, path: &str) -> Result<HtmNode, HtmParseError> {
    let here = node_path(path, &raw.name);
    if raw.name.is_empty() {
        return Err(HtmParseError::InvalidNode {
            path: here,
            message: "leaf name must not be empty".into(),
        });
    }
    let tools = resolve_objects(&raw.required_tools, universe, &here)?;
    let parts = resolve_objects(&raw.consumed_parts, universe, &here)?;
    match (&raw.advance_actions, &raw.steps) {
        (Some(rules), None) => Ok(HtmNode::Leaf(LeafSpec {
            name: raw.name.clone(),
            required_tools: tools,
            consumed_parts: parts,
            advance_actions: resolve_rules(rules, universe, &here)?,
        })),
        (None, Some(steps)) => {
            if steps.is_empty() {
                return Err(HtmParseError::InvalidNode {
                    path: here,
                    message: "steps must not be empty".into(),
                });
            }
            let last = steps.len() - 1;
            let micro = steps
                .iter()
                .enumerate()
                .map(|(i, rules)| {
                    let (required_tools, consumed_parts) = if i == last {
                        (tools, parts)
                    } else {
                        (tools.union(parts), ObjectSet::EMPTY)
                    };
                    Ok(HtmNode::Leaf(LeafSpec {
                        name: format!("{}/{}", raw.name, i + 1),
                        required_tools,
                        consumed_parts,
                        advance_actions: resolve_rules(rules, universe, &format!("{here}/{i}"))?,
                    }))
                })
                .collect::<Result<Vec<_>, HtmParseError>>()?;
            Ok(HtmNode::Operator {
                kind: OpKind::Sequence,
                name: raw.name.clone(),
                children: micro,
            })
        }
        _ => Err(HtmParseError::InvalidNode {
            path: here,
            message: "leaf needs exactly one of \"advance_actions\" or \"steps\"".into(),
        }),
    }
}

/// Serialize to the document format. Multi-step leaves are written in their
/// expanded micro-leaf form.
pub fn serialize_htm(htm: &Htm) -> String {
    let u = &htm.universe;
    let raw = RawDoc {
        name: htm.name.clone(),
        objects: u
            .objects
            .iter()
            .map(|o| RawObject {
                id: o.name.clone(),
                class: match o.class {
                    ObjectClass::Tool => RawClass::Tool,
                    ObjectClass::Part => RawClass::Part,
                },
            })
            .collect(),
        preferences: u.preferences.clone(),
        actions: u.custom_actions.clone(),
        root: raw_node(&htm.root, u),
    };
    serde_json::to_string_pretty(&raw).expect("HTM documents always serialize")
}

fn raw_node(node: &HtmNode, u: &Universe) -> RawNode {
    match node {
        HtmNode::Leaf(l) => RawNode {
            leaf: Some(RawLeaf {
                name: l.name.clone(),
                required_tools: l.required_tools.iter().map(|o| u.object_name(o).to_string()).collect(),
                consumed_parts: l.consumed_parts.iter().map(|o| u.object_name(o).to_string()).collect(),
                advance_actions: Some(
                    l.advance_actions
                        .iter()
                        .map(|r| RawRule {
                            action: u.action_label(r.action),
                            when: match r.gate {
                                Gate::Always => None,
                                Gate::RequiresPreference { pref, value } => Some(RawWhen {
                                    pref: u.preference_name(pref).to_string(),
                                    value,
                                }),
                            },
                        })
                        .collect(),
                ),
                steps: None,
            }),
            ..RawNode::default()
        },
        HtmNode::Operator {
            kind,
            name,
            children,
        } => RawNode {
            op: Some(kind.as_str().to_string()),
            name: if name.is_empty() { None } else { Some(name.clone()) },
            children: Some(children.iter().map(|c| raw_node(c, u)).collect()),
            ..RawNode::default()
        },
    }
}
