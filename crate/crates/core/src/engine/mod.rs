//! Pattern matching over the trajectory store and Sankey aggregation of what
//! happens next.
//!
//! A query's unique sink node is the anchor: each matching entity contributes
//! its earliest anchor event, and the events after it form the flows.

mod flows;
mod matcher;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::query::{validate, QueryGraph, Violation};
use crate::store::TrajectoryStore;

pub use flows::{future_flows, origin_anchors, Link, SankeyResult, StageValue, ABSENT, ORIGIN, TERMINAL};
pub use matcher::MatchAnchor;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("query is invalid: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
pub struct InvalidQuery(pub Vec<Violation>);

/// One anchor per matching entity, in store order.
///
/// The query must be valid; see [`crate::query::validate`].
pub fn match_entities(store: &TrajectoryStore, q: &QueryGraph) -> Vec<MatchAnchor> {
    matcher::CompiledPattern::compile(store, q).run(store)
}

/// Validate, match and aggregate.
pub fn execute(store: &TrajectoryStore, q: &QueryGraph) -> Result<SankeyResult, InvalidQuery> {
    let violations = validate(q);
    if !violations.is_empty() {
        return Err(InvalidQuery(violations));
    }
    let anchors = match_entities(store, q);
    Ok(future_flows(store, &anchors, &q.params))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QueryLabel {
    A,
    B,
}

impl fmt::Display for QueryLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            QueryLabel::A => "A",
            QueryLabel::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("query {label}: {error}")]
pub struct LabeledError {
    pub label: QueryLabel,
    pub error: InvalidQuery,
}

/// Results of two queries over the same store. Each side fails independently.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Comparison {
    pub a: Result<SankeyResult, LabeledError>,
    pub b: Result<SankeyResult, LabeledError>,
}

pub fn compare(store: &TrajectoryStore, qa: &QueryGraph, qb: &QueryGraph) -> Comparison {
    let run = |label, q| execute(store, q).map_err(|error| LabeledError { label, error });
    let (a, b) = rayon::join(|| run(QueryLabel::A, qa), || run(QueryLabel::B, qb));
    Comparison { a, b }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::calendar::parse_date;
    use crate::ingest::EventRecord;
    use crate::query::{parse, NextEventRange};
    use crate::store::{build_store, StoreOptions};

    fn rec(id: &str, date: &str, diag: &str) -> EventRecord {
        EventRecord {
            entity_id: id.into(),
            birthdate: "1970-01".parse().unwrap(),
            diagnosisdate: parse_date(date).unwrap(),
            exam_type: "1".into(),
            diagnosis: diag.into(),
            stage: None,
            lab_nr: None,
            region: "1".into(),
            censordate: None,
        }
    }

    fn store(records: &[EventRecord]) -> TrajectoryStore {
        build_store(records, StoreOptions::default()).unwrap()
    }

    fn run(store: &TrajectoryStore, q: &str) -> SankeyResult {
        let r = execute(store, &parse(q).unwrap()).unwrap();
        r.check_conservation().unwrap();
        r
    }

    #[test]
    fn single_node_anchors_at_earliest_event() {
        let s = store(&[
            rec("a", "2000-01-01", "10"),
            rec("a", "2001-01-01", "11"),
            rec("a", "2002-01-01", "11"),
            rec("b", "2000-01-01", "0"),
        ]);
        let anchors = match_entities(&s, &parse("node x {diagnosis == 11}").unwrap());
        assert_eq!(anchors.len(), 1);
        assert_eq!((anchors[0].entity_id.as_str(), anchors[0].anchor_ordinal), ("a", 1));
        let all = match_entities(&s, &parse("node x {}").unwrap());
        assert_eq!(all.len(), 2);
    }

    #[test]
    fn elapsed_constraint_excludes_distant_pairs() {
        let s = store(&[rec("a", "2000-01-01", "11"), rec("a", "2001-02-04", "0")]);
        let q = "node n0 {diagnosis == 11} node n1 {diagnosis == 0} edge e: n0 -> n1 {elapsed_days < 365}";
        assert!(match_entities(&s, &parse(q).unwrap()).is_empty());
        let q = q.replace("365", "401");
        assert_eq!(match_entities(&s, &parse(&q).unwrap()).len(), 1);
    }

    #[test]
    fn pattern_edges_hop_over_intermediate_events() {
        let s = store(&[
            rec("a", "2000-01-01", "11"),
            rec("a", "2000-02-01", "10"),
            rec("a", "2000-06-01", "0"),
        ]);
        let q = parse("node n0 {diagnosis == 11} node n1 {diagnosis == 0} edge e: n0 -> n1").unwrap();
        let m = match_entities(&s, &q);
        assert_eq!(m[0].binding, [("n0".to_string(), 0), ("n1".to_string(), 2)].into());
        let q = parse("node n0 {diagnosis == 11} node n1 {diagnosis == 0} edge e: n0 -> n1 {hop == 1}").unwrap();
        assert!(match_entities(&s, &q).is_empty());
    }

    #[test]
    fn ties_choose_the_smallest_binding() {
        let s = store(&[
            rec("a", "2000-01-01", "11"),
            rec("a", "2000-02-01", "11"),
            rec("a", "2000-03-01", "0"),
        ]);
        let q = parse("node p {diagnosis == 11} node z {diagnosis == 0} edge e: p -> z").unwrap();
        let m = match_entities(&s, &q);
        assert_eq!(m[0].binding["p"], 0);
        assert_eq!(m[0].anchor_ordinal, 2);
    }

    #[test]
    fn exhausted_trajectories_flow_to_terminal() {
        let s = store(&[rec("a", "2000-01-01", "11"), rec("b", "2000-01-01", "11")]);
        let r = run(&s, "node x {diagnosis == 11} steps 3");
        assert_eq!(r.origin, 2);
        assert_eq!(r.stages, vec![vec![StageValue { value: TERMINAL.into(), count: 2 }]]);
        assert_eq!(r.links, vec![Link { stage: 0, source: ORIGIN.into(), target: TERMINAL.into(), count: 2 }]);
    }

    #[test]
    fn stages_and_links() {
        let s = store(&[
            rec("a", "2000-01-01", "11"),
            rec("a", "2003-01-01", "11"),
            rec("a", "2006-01-01", "0"),
            rec("b", "2000-01-01", "11"),
            rec("b", "2003-06-01", "10"),
            rec("c", "2000-01-01", "11"),
        ]);
        let r = run(&s, "node x {diagnosis == 11} steps 2");
        assert_eq!(r.origin, 3);
        assert_eq!(r.stage_count(0, "11"), 1);
        assert_eq!(r.stage_count(0, "10"), 1);
        assert_eq!(r.stage_count(0, TERMINAL), 1);
        assert_eq!(r.stage_count(1, "0"), 1);
        assert_eq!(r.stage_count(1, TERMINAL), 1);
        assert_eq!(r.stages[0].last().unwrap().value, TERMINAL);
        assert_eq!(r.total_population, 3);
    }

    #[test]
    fn next_event_range_excludes_early_returners() {
        let s = store(&[
            rec("a", "2000-01-01", "11"),
            rec("a", "2000-01-31", "11"),
            rec("b", "2000-01-01", "11"),
            rec("b", "2003-06-01", "11"),
        ]);
        let mut q = parse("node x {diagnosis == 11}").unwrap();
        q.params.next_event_range = Some(NextEventRange::between(1095, 1460));
        let r = execute(&s, &q).unwrap();
        assert_eq!((r.origin, r.excluded_by_range), (1, 1));
        assert_eq!(r.stage_count(0, "11"), 1);
        r.check_conservation().unwrap();
    }

    #[test]
    fn absent_values_satisfy_no_constraint() {
        let mut with_stage = rec("a", "2000-01-01", "99");
        with_stage.stage = Some("2".into());
        let s = store(&[with_stage, rec("b", "2000-01-01", "99")]);
        let m = match_entities(&s, &parse("node x {stage != 3}").unwrap());
        assert_eq!(m.iter().map(|a| a.entity_id.as_str()).collect::<Vec<_>>(), ["a"]);
        let r = run(&s, "node x {diagnosis == 99} observe stage");
        assert_eq!(r.stage_count(0, TERMINAL), 2);
    }

    #[test]
    fn compare_labels_failures() {
        let s = store(&[rec("a", "2000-01-01", "11")]);
        let good = parse("node x {}").unwrap();
        let cyclic = parse("node x {} node y {} edge e: x -> y edge f: y -> x").unwrap();
        let c = compare(&s, &good, &good);
        assert_eq!(c.a, c.b);
        let c = compare(&s, &good, &cyclic);
        assert!(c.a.is_ok());
        let err = c.b.unwrap_err();
        assert_eq!(err.label, QueryLabel::B);
        assert!(err.error.0.iter().any(|v| matches!(v, Violation::Cycle { .. })));
    }
}
