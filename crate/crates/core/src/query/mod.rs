//! Query graphs: partial-trajectory patterns plus result parameters.
//!
//! The types here double as the structured wire form (JSON via serde); see
//! `docs/api.md`. [`parse`] and [`to_canonical`] convert to and from the
//! textual DSL described in `docs/dsl.md`.

mod lexer;
mod parser;
mod printer;
mod validate;

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};

pub use parser::{parse, ParseError};
pub use printer::to_canonical;
pub use validate::{validate, Violation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Neq,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "IN")]
    In,
}

impl CmpOp {
    pub fn symbol(self) -> &'static str {
        match self {
            CmpOp::Eq => "==",
            CmpOp::Neq => "!=",
            CmpOp::Gt => ">",
            CmpOp::Lt => "<",
            CmpOp::In => "IN",
        }
    }
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Right-hand side of a constraint. Integers are used for integer-valued
/// attributes (dates as days since 1970-01-01), codes for categorical ones.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Value {
    Int(i64),
    Code(String),
    Codes(Vec<String>),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraint {
    pub attribute: String,
    pub op: CmpOp,
    pub value: Value,
}

impl Constraint {
    pub fn new(attribute: impl Into<String>, op: CmpOp, value: Value) -> Self {
        Self { attribute: attribute.into(), op, value }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternNode {
    pub id: String,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternEdge {
    pub id: String,
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub constraints: Vec<Constraint>,
}

/// Inclusive bounds, in days, on the gap between the anchor event and the
/// event right after it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NextEventRange {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_days: Option<i64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_days: Option<i64>,
}

impl NextEventRange {
    pub fn between(min_days: i64, max_days: i64) -> Self {
        Self { min_days: Some(min_days), max_days: Some(max_days) }
    }

    pub fn at_most(max_days: i64) -> Self {
        Self { min_days: None, max_days: Some(max_days) }
    }

    pub fn at_least(min_days: i64) -> Self {
        Self { min_days: Some(min_days), max_days: None }
    }

    /// Whether a next event `elapsed` days later is in range. `None` means the
    /// anchor has no next event, which only an open upper bound admits.
    pub fn admits(&self, elapsed: Option<i64>) -> bool {
        match elapsed {
            Some(d) => self.min_days.is_none_or(|m| d >= m) && self.max_days.is_none_or(|m| d <= m),
            None => self.max_days.is_none(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryParams {
    pub steps: u32,
    pub observe: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub next_event_range: Option<NextEventRange>,
}

impl Default for QueryParams {
    fn default() -> Self {
        Self { steps: 1, observe: "diagnosis".into(), next_event_range: None }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueryGraph {
    pub nodes: Vec<PatternNode>,
    #[serde(default)]
    pub edges: Vec<PatternEdge>,
    #[serde(default)]
    pub params: QueryParams,
}

impl QueryGraph {
    pub fn node(&self, id: &str) -> Option<&PatternNode> {
        self.nodes.iter().find(|n| n.id == id)
    }

    /// Node ids in topological order, ready nodes taken in id order. Nodes on
    /// cycles (invalid queries) follow, sorted by id.
    pub fn topological_order(&self) -> Vec<&str> {
        let ids: BTreeSet<&str> = self.nodes.iter().map(|n| n.id.as_str()).collect();
        let mut indegree: HashMap<&str, usize> = ids.iter().map(|&id| (id, 0)).collect();
        let mut out: HashMap<&str, Vec<&str>> = HashMap::new();
        for e in &self.edges {
            if ids.contains(e.from.as_str()) && ids.contains(e.to.as_str()) {
                *indegree.get_mut(e.to.as_str()).unwrap() += 1;
                out.entry(e.from.as_str()).or_default().push(e.to.as_str());
            }
        }
        let mut ready: BTreeSet<&str> = ids.iter().copied().filter(|id| indegree[id] == 0).collect();
        let mut order = Vec::with_capacity(ids.len());
        while let Some(id) = ready.pop_first() {
            order.push(id);
            for &next in out.get(id).map(Vec::as_slice).unwrap_or(&[]) {
                let d = indegree.get_mut(next).unwrap();
                *d -= 1;
                if *d == 0 {
                    ready.insert(next);
                }
            }
        }
        if order.len() < ids.len() {
            let placed: BTreeSet<&str> = order.iter().copied().collect();
            order.extend(ids.iter().copied().filter(|id| !placed.contains(id)));
        }
        order
    }

    /// The same query with nodes in topological order and edges ordered by
    /// (from position, to position, id). Two queries are structurally equal
    /// when their canonical forms are equal.
    pub fn canonicalized(&self) -> QueryGraph {
        let order = self.topological_order();
        let pos: HashMap<&str, usize> = order.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        let mut nodes = self.nodes.clone();
        nodes.sort_by_key(|n| pos.get(n.id.as_str()).copied().unwrap_or(usize::MAX));
        let mut edges = self.edges.clone();
        let key = |id: &str| pos.get(id).copied().unwrap_or(usize::MAX);
        edges.sort_by(|a, b| (key(&a.from), key(&a.to), &a.id).cmp(&(key(&b.from), key(&b.to), &b.id)));
        QueryGraph { nodes, edges, params: self.params.clone() }
    }

    pub fn structurally_eq(&self, other: &QueryGraph) -> bool {
        self.canonicalized() == other.canonicalized()
    }

    /// Ids of nodes without outgoing edges.
    pub fn sinks(&self) -> Vec<&str> {
        let sources: BTreeSet<&str> = self.edges.iter().map(|e| e.from.as_str()).collect();
        let mut sinks: Vec<&str> =
            self.nodes.iter().map(|n| n.id.as_str()).filter(|id| !sources.contains(id)).collect();
        sinks.sort_unstable();
        sinks.dedup();
        sinks
    }
}
