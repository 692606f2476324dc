use std::collections::{BTreeSet, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use super::lexer::{is_ident_char, is_ident_start};
use super::{CmpOp, Constraint, QueryGraph, Value};
use crate::attribute::{Attribute, AttributeKind, Scope};

/// A structural or typing problem that prevents a query from running.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum Violation {
    NoNodes,
    InvalidIdentifier { id: String },
    DuplicateNodeId { id: String },
    DuplicateEdgeId { id: String },
    UnknownEndpoint { edge: String, node: String },
    SelfLoop { edge: String },
    DuplicateEdge { from: String, to: String },
    Cycle { nodes: Vec<String> },
    NoSink,
    MultipleSinks { sinks: Vec<String> },
    UnknownAttribute { element: String, attribute: String },
    WrongScope { element: String, attribute: String },
    OrderingOnCategorical { element: String, attribute: String },
    InOnInteger { element: String, attribute: String },
    EmptyInList { element: String, attribute: String },
    ValueTypeMismatch { element: String, attribute: String },
    ZeroSteps,
    InvalidObservedAttribute { attribute: String },
    UnboundedRange,
    InvertedRange { min_days: i64, max_days: i64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoNodes => f.write_str("query has no nodes"),
            Violation::InvalidIdentifier { id } => write!(f, "`{id}` is not a valid identifier"),
            Violation::DuplicateNodeId { id } => write!(f, "node id `{id}` is declared more than once"),
            Violation::DuplicateEdgeId { id } => write!(f, "edge id `{id}` is declared more than once"),
            Violation::UnknownEndpoint { edge, node } => write!(f, "edge `{edge}` refers to unknown node `{node}`"),
            Violation::SelfLoop { edge } => write!(f, "edge `{edge}` starts and ends at the same node"),
            Violation::DuplicateEdge { from, to } => write!(f, "more than one edge from `{from}` to `{to}`"),
            Violation::Cycle { nodes } => write!(f, "pattern has a cycle through {}", nodes.join(", ")),
            Violation::NoSink => f.write_str("pattern has no sink node"),
            Violation::MultipleSinks { sinks } => {
                write!(f, "pattern must have exactly one sink, found {}", sinks.join(", "))
            }
            Violation::UnknownAttribute { element, attribute } => {
                write!(f, "`{element}`: unknown attribute `{attribute}`")
            }
            Violation::WrongScope { element, attribute } => {
                write!(f, "`{element}`: attribute `{attribute}` does not apply here")
            }
            Violation::OrderingOnCategorical { element, attribute } => {
                write!(f, "`{element}`: `>`/`<` used on categorical attribute `{attribute}`")
            }
            Violation::InOnInteger { element, attribute } => {
                write!(f, "`{element}`: `IN` used on integer attribute `{attribute}`")
            }
            Violation::EmptyInList { element, attribute } => write!(f, "`{element}`: empty `IN` list for `{attribute}`"),
            Violation::ValueTypeMismatch { element, attribute } => {
                write!(f, "`{element}`: value type does not match attribute `{attribute}`")
            }
            Violation::ZeroSteps => f.write_str("steps must be at least 1"),
            Violation::InvalidObservedAttribute { attribute } => {
                write!(f, "`{attribute}` cannot be observed; choose a categorical event attribute")
            }
            Violation::UnboundedRange => f.write_str("next-event range needs at least one bound"),
            Violation::InvertedRange { min_days, max_days } => {
                write!(f, "next-event range {min_days}..{max_days} is empty")
            }
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    chars.next().is_some_and(is_ident_start)
        && chars.all(is_ident_char)
        && !["node", "edge", "observe", "steps", "next_within", "IN"].contains(&s)
}

fn check_constraint(element: &str, scope: Scope, c: &Constraint, out: &mut Vec<Violation>) {
    let v = |make: fn(String, String) -> Violation| make(element.to_string(), c.attribute.clone());
    let Some(attr) = Attribute::from_name(&c.attribute) else {
        out.push(v(|element, attribute| Violation::UnknownAttribute { element, attribute }));
        return;
    };
    if attr.scope() != scope {
        out.push(v(|element, attribute| Violation::WrongScope { element, attribute }));
        return;
    }
    match (attr.kind(), c.op, &c.value) {
        (AttributeKind::Categorical, CmpOp::Gt | CmpOp::Lt, _) => {
            out.push(v(|element, attribute| Violation::OrderingOnCategorical { element, attribute }))
        }
        (AttributeKind::Integer, CmpOp::In, _) => {
            out.push(v(|element, attribute| Violation::InOnInteger { element, attribute }))
        }
        (AttributeKind::Categorical, CmpOp::In, Value::Codes(list)) if list.is_empty() => {
            out.push(v(|element, attribute| Violation::EmptyInList { element, attribute }))
        }
        (AttributeKind::Categorical, CmpOp::In, Value::Codes(_))
        | (AttributeKind::Categorical, CmpOp::Eq | CmpOp::Neq, Value::Code(_))
        | (AttributeKind::Integer, CmpOp::Eq | CmpOp::Neq | CmpOp::Gt | CmpOp::Lt, Value::Int(_)) => {}
        _ => out.push(v(|element, attribute| Violation::ValueTypeMismatch { element, attribute })),
    }
}

/// Check a query against the structural and typing rules. An empty list means
/// the query can be executed.
pub fn validate(q: &QueryGraph) -> Vec<Violation> {
    let mut out = Vec::new();
    if q.nodes.is_empty() {
        out.push(Violation::NoNodes);
    }

    let mut node_ids = HashSet::new();
    for n in &q.nodes {
        if !is_identifier(&n.id) {
            out.push(Violation::InvalidIdentifier { id: n.id.clone() });
        }
        if !node_ids.insert(n.id.as_str()) {
            out.push(Violation::DuplicateNodeId { id: n.id.clone() });
        }
        for c in &n.constraints {
            check_constraint(&n.id, Scope::Node, c, &mut out);
        }
    }

    let mut edge_ids = HashSet::new();
    let mut pairs = HashSet::new();
    for e in &q.edges {
        if !is_identifier(&e.id) {
            out.push(Violation::InvalidIdentifier { id: e.id.clone() });
        }
        if !edge_ids.insert(e.id.as_str()) || node_ids.contains(e.id.as_str()) {
            out.push(Violation::DuplicateEdgeId { id: e.id.clone() });
        }
        for end in [&e.from, &e.to] {
            if !node_ids.contains(end.as_str()) {
                out.push(Violation::UnknownEndpoint { edge: e.id.clone(), node: end.clone() });
            }
        }
        if e.from == e.to {
            out.push(Violation::SelfLoop { edge: e.id.clone() });
        } else if !pairs.insert((e.from.as_str(), e.to.as_str())) {
            out.push(Violation::DuplicateEdge { from: e.from.clone(), to: e.to.clone() });
        }
        for c in &e.constraints {
            check_constraint(&e.id, Scope::Edge, c, &mut out);
        }
    }

    if !q.nodes.is_empty() {
        let cyclic = cyclic_nodes(q);
        if !cyclic.is_empty() {
            out.push(Violation::Cycle { nodes: cyclic });
        }
        let sinks = q.sinks();
        match sinks.len() {
            0 => out.push(Violation::NoSink),
            1 => {}
            _ => out.push(Violation::MultipleSinks { sinks: sinks.iter().map(|s| s.to_string()).collect() }),
        }
    }

    let p = &q.params;
    if p.steps == 0 {
        out.push(Violation::ZeroSteps);
    }
    let observable = Attribute::from_name(&p.observe).is_some_and(|a| a.kind() == AttributeKind::Categorical);
    if !observable {
        out.push(Violation::InvalidObservedAttribute { attribute: p.observe.clone() });
    }
    if let Some(r) = p.next_event_range {
        match (r.min_days, r.max_days) {
            (None, None) => out.push(Violation::UnboundedRange),
            (Some(min_days), Some(max_days)) if min_days > max_days => {
                out.push(Violation::InvertedRange { min_days, max_days })
            }
            _ => {}
        }
    }
    out
}

/// Nodes left over after repeatedly removing nodes without incoming edges,
/// i.e. nodes on or downstream of a cycle.
fn cyclic_nodes(q: &QueryGraph) -> Vec<String> {
    let mut remaining: BTreeSet<&str> = q.nodes.iter().map(|n| n.id.as_str()).collect();
    let edges: Vec<(&str, &str)> = q
        .edges
        .iter()
        .filter(|e| remaining.contains(e.from.as_str()) && remaining.contains(e.to.as_str()))
        .map(|e| (e.from.as_str(), e.to.as_str()))
        .collect();
    loop {
        let targets: HashSet<&str> =
            edges.iter().filter(|(f, _)| remaining.contains(f)).map(|&(_, t)| t).collect();
        let before = remaining.len();
        remaining.retain(|id| targets.contains(id));
        if remaining.len() == before {
            break;
        }
    }
    remaining.into_iter().map(str::to_string).collect()
}
