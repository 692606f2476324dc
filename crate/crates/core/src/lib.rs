//! Temporal trajectory engine.
//!
//! Flat event records are parsed and anonymized ([`ingest`]), grouped into
//! per-entity trajectory graphs with multi-hop `next` edges ([`store`]),
//! queried with partial-trajectory patterns ([`query`], [`engine`]) and
//! aggregated into Sankey flow data. [`cohortgen`] synthesizes screening
//! cohorts from a configurable triage state machine.

pub mod attribute;
pub mod calendar;
pub mod cohortgen;
pub mod engine;
pub mod ingest;
pub mod query;
pub mod store;

pub use attribute::Attribute;
pub use calendar::YearMonth;
pub use engine::{compare, execute, future_flows, match_entities, MatchAnchor, SankeyResult};
pub use ingest::{anonymize, parse_records, AnonymizationConfig, EventRecord};
pub use query::{parse, to_canonical, validate, QueryGraph};
pub use store::{build_store, build_trajectory, HopCap, Trajectory, TrajectoryStore};
