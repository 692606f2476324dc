use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::attribute::Attribute;
use crate::query::{CmpOp, Constraint, QueryGraph, Value};
use crate::store::{EventNode, Trajectory, TrajectoryStore};

/// The earliest match of a query within one entity.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct MatchAnchor {
    pub entity_id: String,
    /// Position of the entity in [`TrajectoryStore::trajectories`].
    #[serde(skip)]
    pub entity_index: u32,
    /// Ordinal of the event bound to the sink pattern node.
    pub anchor_ordinal: u32,
    /// Pattern node id to event ordinal.
    pub binding: BTreeMap<String, u32>,
}

#[derive(Debug, Clone)]
enum CodeTest {
    /// `None`: the value never occurs in the store.
    Eq(Option<u32>),
    Neq(Option<u32>),
    In(Vec<u32>),
}

#[derive(Debug, Clone)]
enum NodePred {
    Code { slot: usize, test: CodeTest },
    Int { attr: Attribute, op: CmpOp, value: i64 },
}

#[derive(Debug, Clone)]
struct EdgePred {
    attr: Attribute,
    op: CmpOp,
    value: i64,
}

#[derive(Debug)]
struct CompiledEdge {
    from: usize,
    to: usize,
    preds: Vec<EdgePred>,
}

/// A validated query resolved against one store's dictionaries. Pattern nodes
/// are numbered in id order, which is also the backtracking order.
#[derive(Debug)]
pub(crate) struct CompiledPattern {
    ids: Vec<String>,
    preds: Vec<Vec<NodePred>>,
    edges: Vec<CompiledEdge>,
    // for each node, edges whose endpoints are both bound once it is bound
    checks: Vec<Vec<usize>>,
    sink: usize,
}

fn compare_int(lhs: i64, op: CmpOp, rhs: i64) -> bool {
    match op {
        CmpOp::Eq => lhs == rhs,
        CmpOp::Neq => lhs != rhs,
        CmpOp::Gt => lhs > rhs,
        CmpOp::Lt => lhs < rhs,
        CmpOp::In => false,
    }
}

fn compile_node_pred(store: &TrajectoryStore, c: &Constraint) -> NodePred {
    let attr = Attribute::from_name(&c.attribute).expect("validated attribute");
    if let Some(slot) = attr.slot() {
        let dict = store.dictionaries().get(attr).expect("categorical dictionary");
        let test = match (&c.op, &c.value) {
            (CmpOp::Eq, Value::Code(v)) => CodeTest::Eq(dict.id(v)),
            (CmpOp::Neq, Value::Code(v)) => CodeTest::Neq(dict.id(v)),
            (CmpOp::In, Value::Codes(vs)) => {
                let mut ids: Vec<u32> = vs.iter().filter_map(|v| dict.id(v)).collect();
                ids.sort_unstable();
                ids.dedup();
                CodeTest::In(ids)
            }
            _ => unreachable!("validated categorical constraint"),
        };
        NodePred::Code { slot, test }
    } else {
        let Value::Int(value) = c.value else { unreachable!("validated integer constraint") };
        NodePred::Int { attr, op: c.op, value }
    }
}

impl NodePred {
    // Absent attribute values satisfy no constraint, including `!=`.
    fn test(&self, node: &EventNode) -> bool {
        match self {
            NodePred::Code { slot, test } => {
                let Some(code) = node.codes[*slot] else { return false };
                match test {
                    CodeTest::Eq(v) => *v == Some(code),
                    CodeTest::Neq(v) => *v != Some(code),
                    CodeTest::In(ids) => ids.binary_search(&code).is_ok(),
                }
            }
            NodePred::Int { attr, op, value } => {
                let lhs = match attr {
                    Attribute::AgeDays => node.age_days,
                    Attribute::Date => node.day,
                    _ => unreachable!("node integer attribute"),
                };
                compare_int(lhs as i64, *op, *value)
            }
        }
    }
}

impl CompiledPattern {
    /// Resolve `q` against `store`. `q` must have passed validation.
    pub(crate) fn compile(store: &TrajectoryStore, q: &QueryGraph) -> Self {
        let mut order: Vec<&crate::query::PatternNode> = q.nodes.iter().collect();
        order.sort_by(|a, b| a.id.cmp(&b.id));
        let ids: Vec<String> = order.iter().map(|n| n.id.clone()).collect();
        let index = |id: &str| ids.binary_search_by(|x| x.as_str().cmp(id)).expect("validated endpoint");
        let preds = order
            .iter()
            .map(|n| n.constraints.iter().map(|c| compile_node_pred(store, c)).collect())
            .collect();
        let edges: Vec<CompiledEdge> = q
            .edges
            .iter()
            .map(|e| CompiledEdge {
                from: index(&e.from),
                to: index(&e.to),
                preds: e
                    .constraints
                    .iter()
                    .map(|c| {
                        let Value::Int(value) = c.value else { unreachable!("validated edge constraint") };
                        EdgePred { attr: Attribute::from_name(&c.attribute).unwrap(), op: c.op, value }
                    })
                    .collect(),
            })
            .collect();
        let mut checks = vec![Vec::new(); ids.len()];
        for (k, e) in edges.iter().enumerate() {
            checks[e.from.max(e.to)].push(k);
        }
        let sink = index(q.sinks()[0]);
        Self { ids, preds, edges, checks, sink }
    }

    /// Entities that can possibly match, from equality and `IN` constraints.
    /// `None` means every entity is a candidate.
    fn candidates(&self, store: &TrajectoryStore) -> Option<Vec<u32>> {
        let mut acc: Option<Vec<u32>> = None;
        for preds in &self.preds {
            for p in preds {
                let NodePred::Code { slot, test } = p else { continue };
                let attr = Attribute::CATEGORICAL[*slot];
                let list: Vec<u32> = match test {
                    CodeTest::Eq(None) => Vec::new(),
                    CodeTest::Eq(Some(id)) => store.postings(attr, *id).to_vec(),
                    CodeTest::In(ids) => {
                        let mut all: Vec<u32> =
                            ids.iter().flat_map(|&id| store.postings(attr, id).iter().copied()).collect();
                        all.sort_unstable();
                        all.dedup();
                        all
                    }
                    CodeTest::Neq(_) => continue,
                };
                acc = Some(match acc {
                    None => list,
                    Some(prev) => intersect(&prev, &list),
                });
            }
        }
        acc
    }

    fn edge_ok(&self, t: &Trajectory, e: &CompiledEdge, binding: &[u32]) -> bool {
        let (from, to) = (binding[e.from], binding[e.to]);
        if from >= to {
            return false;
        }
        let mut elapsed = None;
        e.preds.iter().all(|p| {
            let lhs = match p.attr {
                Attribute::Hop => (to - from) as i64,
                _ => *elapsed.get_or_insert_with(|| t.elapsed(from, to)) as i64,
            };
            compare_int(lhs, p.op, p.value)
        })
    }

    /// Earliest anchor of `t`, with the lexicographically smallest binding
    /// (ordinals listed in node-id order) among those at that anchor.
    pub(crate) fn match_trajectory(&self, t: &Trajectory) -> Option<(u32, Vec<u32>)> {
        let domains: Vec<Vec<u32>> = self
            .preds
            .iter()
            .map(|preds| t.nodes().iter().filter(|n| preds.iter().all(|p| p.test(n))).map(|n| n.ordinal).collect())
            .collect();
        if domains.iter().any(Vec::is_empty) {
            return None;
        }
        let mut binding = vec![0u32; self.ids.len()];
        for &anchor in &domains[self.sink] {
            binding[self.sink] = anchor;
            if self.extend(t, &domains, &mut binding, 0, anchor) {
                return Some((anchor, binding));
            }
        }
        None
    }

    fn extend(&self, t: &Trajectory, domains: &[Vec<u32>], binding: &mut [u32], k: usize, anchor: u32) -> bool {
        if k == self.ids.len() {
            return true;
        }
        let candidates: &[u32] = if k == self.sink { std::slice::from_ref(&anchor) } else { &domains[k] };
        for &ordinal in candidates {
            // every non-sink node precedes the sink along some path
            if k != self.sink && ordinal >= anchor {
                break;
            }
            binding[k] = ordinal;
            if self.checks[k].iter().all(|&e| self.edge_ok(t, &self.edges[e], binding))
                && self.extend(t, domains, binding, k + 1, anchor)
            {
                return true;
            }
        }
        false
    }

    fn anchor(&self, index: u32, t: &Trajectory, anchor: u32, binding: Vec<u32>) -> MatchAnchor {
        MatchAnchor {
            entity_id: t.entity_id.clone(),
            entity_index: index,
            anchor_ordinal: anchor,
            binding: self.ids.iter().cloned().zip(binding).collect(),
        }
    }

    pub(crate) fn run(&self, store: &TrajectoryStore) -> Vec<MatchAnchor> {
        let all = store.trajectories();
        let hit = |i: u32| {
            let t = &all[i as usize];
            self.match_trajectory(t).map(|(a, b)| self.anchor(i, t, a, b))
        };
        match self.candidates(store) {
            Some(list) => list.par_iter().filter_map(|&i| hit(i)).collect(),
            None => (0..all.len() as u32).into_par_iter().filter_map(hit).collect(),
        }
    }
}

fn intersect(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}
