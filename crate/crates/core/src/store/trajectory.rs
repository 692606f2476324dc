use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::attribute::Attribute;
use crate::calendar::{from_epoch_days, YearMonth};

/// Maximum hop distance for materialized `next` edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopCap {
    #[default]
    Unlimited,
    Max(u32),
}

impl HopCap {
    /// Materialized hop count from a node with `remaining` successors.
    pub fn reach(self, remaining: usize) -> usize {
        match self {
            HopCap::Unlimited => remaining,
            HopCap::Max(k) => remaining.min(k as usize),
        }
    }

    /// Number of edges materialized for a trajectory of `n` nodes.
    pub fn edge_count(self, n: usize) -> usize {
        let top = self.reach(n.saturating_sub(1));
        (1..=top).map(|h| n - h).sum()
    }
}

impl std::fmt::Display for HopCap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HopCap::Unlimited => f.write_str("unlimited"),
            HopCap::Max(k) => write!(f, "{k}"),
        }
    }
}

impl std::str::FromStr for HopCap {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "unlimited" {
            return Ok(HopCap::Unlimited);
        }
        match s.parse::<u32>() {
            Ok(k) if k >= 1 => Ok(HopCap::Max(k)),
            _ => Err(format!("hop cap must be a positive integer or `unlimited`, got {s:?}")),
        }
    }
}

/// One event of a trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventNode {
    pub ordinal: u32,
    /// Days since 1970-01-01.
    pub day: i32,
    pub age_days: i32,
    /// Dictionary ids, indexed by [`Attribute::slot`]. `None` means absent.
    pub codes: [Option<u32>; 5],
}

impl EventNode {
    pub fn date(&self) -> NaiveDate {
        from_epoch_days(self.day as i64).expect("stored day is a valid date")
    }

    pub fn code(&self, attr: Attribute) -> Option<u32> {
        attr.slot().and_then(|s| self.codes[s])
    }
}

/// A `next` edge between two events of one trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HopEdge {
    pub from: u32,
    pub to: u32,
    pub elapsed_days: i32,
}

impl HopEdge {
    pub fn hop(&self) -> u32 {
        self.to - self.from
    }
}

/// A single entity's events in chronological order together with its hop edges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trajectory {
    pub entity_id: String,
    pub birthdate: YearMonth,
    pub censordate: Option<NaiveDate>,
    nodes: Vec<EventNode>,
    edges: Vec<HopEdge>,
    // edges leaving node i are edges[edge_start[i]..edge_start[i + 1]], ordered by hop
    edge_start: Vec<u32>,
}

impl Trajectory {
    /// Assemble from chronologically ordered nodes, materializing edges up to `cap`.
    pub(crate) fn from_nodes(
        entity_id: String,
        birthdate: YearMonth,
        censordate: Option<NaiveDate>,
        nodes: Vec<EventNode>,
        cap: HopCap,
    ) -> Self {
        let n = nodes.len();
        let mut edges = Vec::with_capacity(cap.edge_count(n));
        let mut edge_start = Vec::with_capacity(n + 1);
        for (i, from) in nodes.iter().enumerate() {
            edge_start.push(edges.len() as u32);
            for to in &nodes[i + 1..=i + cap.reach(n - 1 - i)] {
                edges.push(HopEdge {
                    from: from.ordinal,
                    to: to.ordinal,
                    elapsed_days: to.day - from.day,
                });
            }
        }
        edge_start.push(edges.len() as u32);
        Self { entity_id, birthdate, censordate, nodes, edges, edge_start }
    }

    pub fn nodes(&self) -> &[EventNode] {
        &self.nodes
    }

    pub fn edges(&self) -> &[HopEdge] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Materialized edges leaving `from`, in increasing hop order.
    pub fn out_edges(&self, from: u32) -> &[HopEdge] {
        let i = from as usize;
        &self.edges[self.edge_start[i] as usize..self.edge_start[i + 1] as usize]
    }

    /// The materialized edge `from -> to`, if within the hop cap.
    pub fn edge(&self, from: u32, to: u32) -> Option<&HopEdge> {
        if to <= from {
            return None;
        }
        self.out_edges(from).get((to - from - 1) as usize)
    }

    /// Days elapsed from event `from` to the later event `to`.
    ///
    /// Uses the direct edge when materialized, otherwise composes the longest
    /// available edges along the chain.
    pub fn elapsed(&self, from: u32, to: u32) -> i32 {
        debug_assert!(from < to && (to as usize) < self.nodes.len());
        let mut at = from;
        let mut total = 0;
        while at < to {
            let out = self.out_edges(at);
            let step = out.len().min((to - at) as usize);
            let e = &out[step - 1];
            total += e.elapsed_days;
            at = e.to;
        }
        total
    }
}
