use std::collections::BTreeMap;
use std::fmt;

use super::{ActionToken, Gate, Htm, HtmNode, LeafSpec, ObjectSet};

/// One violated invariant, located by node path.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub path: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

/// Check the structural invariants of a task model. Empty means valid.
pub fn validate_htm(htm: &Htm) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut names: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    walk(htm, &htm.root, "root".to_string(), &mut diags, &mut names);
    for (name, paths) in names {
        if paths.len() > 1 {
            diags.push(Diagnostic {
                path: paths[0].clone(),
                message: format!("duplicate leaf name '{name}' at {}", paths.join(" and ")),
            });
        }
    }
    diags
}

fn walk<'a>(
    htm: &Htm,
    node: &'a HtmNode,
    path: String,
    diags: &mut Vec<Diagnostic>,
    names: &mut BTreeMap<&'a str, Vec<String>>,
) {
    match node {
        HtmNode::Leaf(leaf) => {
            let here = format!("{path}({})", leaf.name);
            names.entry(leaf.name.as_str()).or_default().push(here.clone());
            check_leaf(htm, leaf, &here, diags);
        }
        HtmNode::Operator { name, children, .. } => {
            let here = if name.is_empty() {
                path
            } else {
                format!("{path}({name})")
            };
            if children.is_empty() {
                diags.push(Diagnostic {
                    path: here.clone(),
                    message: "empty operator node".into(),
                });
            }
            for (i, c) in children.iter().enumerate() {
                walk(htm, c, format!("{here}/{i}"), diags, names);
            }
        }
    }
}

fn check_leaf(htm: &Htm, leaf: &LeafSpec, path: &str, diags: &mut Vec<Diagnostic>) {
    let u = &htm.universe;
    let mut push = |message: String| {
        diags.push(Diagnostic {
            path: path.to_string(),
            message,
        })
    };
    if leaf.name.is_empty() {
        push("empty leaf name".into());
    }
    let declared = if u.objects.len() >= 64 {
        ObjectSet(u64::MAX)
    } else {
        ObjectSet((1u64 << u.objects.len()) - 1)
    };
    let unknown = leaf.needed().difference(declared);
    if !unknown.is_empty() {
        push(format!(
            "unknown object id(s) {:?}",
            unknown.iter().map(|o| o.0).collect::<Vec<_>>()
        ));
    }
    if leaf.advance_actions.is_empty() {
        push("no advance actions".into());
    }
    for (i, rule) in leaf.advance_actions.iter().enumerate() {
        if leaf.advance_actions[..i].iter().any(|r| r.action == rule.action) {
            push(format!("duplicate advance action '{}'", u.action_label(rule.action)));
        }
        match rule.action {
            ActionToken::Bring(_) | ActionToken::Cleanup(_) => {
                push(format!("'{}' cannot complete a subtask", u.action_label(rule.action)))
            }
            ActionToken::Custom(c) if c.0 as usize >= u.custom_actions.len() => {
                push(format!("unknown action id {}", c.0))
            }
            _ => {}
        }
        if let Gate::RequiresPreference { pref, .. } = rule.gate {
            if pref.0 as usize >= u.preferences.len() {
                push(format!("unknown preference id {}", pref.0));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::htm::{AdvanceRule, ObjectId, OpKind, Universe};

    fn leaf(name: &str, tools: &[u16]) -> HtmNode {
        HtmNode::Leaf(LeafSpec {
            name: name.into(),
            required_tools: tools.iter().map(|&i| ObjectId(i)).collect(),
            consumed_parts: ObjectSet::EMPTY,
            advance_actions: vec![AdvanceRule {
                action: ActionToken::Wait,
                gate: Gate::Always,
            }],
        })
    }

    fn htm(root: HtmNode) -> Htm {
        Htm {
            name: String::new(),
            universe: Universe {
                objects: vec![crate::htm::ObjectDecl {
                    name: "screwdriver".into(),
                    class: crate::htm::ObjectClass::Tool,
                }],
                ..Universe::default()
            },
            root,
        }
    }

    #[test]
    fn valid_tree_has_no_diagnostics() {
        let t = htm(HtmNode::op(OpKind::Sequence, "s", vec![leaf("x", &[0]), leaf("y", &[])]));
        assert!(validate_htm(&t).is_empty());
    }

    #[test]
    fn duplicate_names_cite_both_paths() {
        let t = htm(HtmNode::op(OpKind::Sequence, "s", vec![leaf("x", &[]), leaf("x", &[])]));
        let d = validate_htm(&t);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("root(s)/0(x)"), "{}", d[0]);
        assert!(d[0].message.contains("root(s)/1(x)"), "{}", d[0]);
    }

    #[test]
    fn undeclared_tool_is_reported() {
        let t = htm(leaf("x", &[3]));
        let d = validate_htm(&t);
        assert_eq!(d.len(), 1);
        assert!(d[0].message.contains("unknown object"));
    }

    #[test]
    fn empty_operator_is_reported() {
        let t = htm(HtmNode::op(OpKind::Alternative, "a", vec![]));
        let d = validate_htm(&t);
        assert_eq!(d[0].message, "empty operator node");
    }
}
