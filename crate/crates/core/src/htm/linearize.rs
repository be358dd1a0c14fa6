use thiserror::Error;

use super::{HtmNode, LeafSpec, OpKind, TaskInstance};

/// Default bound on the number of orderings a parallel node may expand to.
pub const DEFAULT_INTERLEAVING_CAP: usize = 64;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LinearizeError {
    #[error("parallel node '{node}' expands to more than {cap} interleavings; raise the interleaving cap")]
    CapExceeded { node: String, cap: usize },
    #[error("leaf index {pos} out of range for an instance of length {len}")]
    OutOfRange { pos: usize, len: usize },
}

/// Every execution order the tree admits.
///
/// Sequences take the cartesian product of their children's orders,
/// alternatives the union, and parallel nodes every interleaving of one order
/// per child, enumerated in lexicographic order of the child indices. A
/// parallel node with more than `interleaving_cap` interleavings is an error.
pub fn linearize(root: &HtmNode, interleaving_cap: usize) -> Result<Vec<TaskInstance>, LinearizeError> {
    Ok(orders(root, interleaving_cap)?
        .into_iter()
        .map(|seq| TaskInstance {
            leaves: seq.into_iter().cloned().collect(),
        })
        .collect())
}

type Order<'a> = Vec<&'a LeafSpec>;

fn orders(node: &HtmNode, cap: usize) -> Result<Vec<Order<'_>>, LinearizeError> {
    match node {
        HtmNode::Leaf(l) => Ok(vec![vec![l]]),
        HtmNode::Operator {
            kind,
            name,
            children,
        } => {
            let per_child = children
                .iter()
                .map(|c| orders(c, cap))
                .collect::<Result<Vec<_>, _>>()?;
            match kind {
                OpKind::Alternative => Ok(per_child.into_iter().flatten().collect()),
                OpKind::Sequence => Ok(per_child.iter().fold(vec![Vec::new()], |acc, options| {
                    acc.iter()
                        .flat_map(|prefix| {
                            options.iter().map(move |o| {
                                let mut v = prefix.clone();
                                v.extend_from_slice(o);
                                v
                            })
                        })
                        .collect()
                })),
                OpKind::Parallel => {
                    let mut out = Vec::new();
                    for combo in cartesian(&per_child) {
                        interleave(&combo, cap, &mut out).map_err(|()| LinearizeError::CapExceeded {
                            node: name.clone(),
                            cap,
                        })?;
                    }
                    Ok(out)
                }
            }
        }
    }
}

fn cartesian<'a, 'b>(per_child: &'b [Vec<Order<'a>>]) -> Vec<Vec<&'b Order<'a>>> {
    per_child.iter().fold(vec![Vec::new()], |acc, options| {
        acc.iter()
            .flat_map(|prefix| {
                options.iter().map(move |o| {
                    let mut v = prefix.clone();
                    v.push(o);
                    v
                })
            })
            .collect()
    })
}

/// Appends all interleavings of `parts` to `out`, failing once `out` would
/// exceed `cap` entries.
fn interleave<'a>(parts: &[&Order<'a>], cap: usize, out: &mut Vec<Order<'a>>) -> Result<(), ()> {
    fn rec<'a>(
        parts: &[&Order<'a>],
        next: &mut [usize],
        current: &mut Order<'a>,
        total: usize,
        cap: usize,
        out: &mut Vec<Order<'a>>,
    ) -> Result<(), ()> {
        if current.len() == total {
            if out.len() >= cap {
                return Err(());
            }
            out.push(current.clone());
            return Ok(());
        }
        for child in 0..parts.len() {
            if next[child] < parts[child].len() {
                current.push(parts[child][next[child]]);
                next[child] += 1;
                rec(parts, next, current, total, cap, out)?;
                next[child] -= 1;
                current.pop();
            }
        }
        Ok(())
    }
    let total = parts.iter().map(|p| p.len()).sum();
    let mut next = vec![0; parts.len()];
    rec(parts, &mut next, &mut Vec::with_capacity(total), total, cap, out)
}

/// The subtask at position `pos` of an instance.
pub fn leaf_info(instance: &TaskInstance, pos: usize) -> Result<&LeafSpec, LinearizeError> {
    instance.leaves.get(pos).ok_or(LinearizeError::OutOfRange {
        pos,
        len: instance.len(),
    })
}
