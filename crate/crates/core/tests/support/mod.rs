//! Shared test fixtures: random stores and queries, and a brute-force
//! reference implementation of matching and flow aggregation that works on
//! raw records rather than the store.
#![allow(dead_code)]

use std::collections::{BTreeMap, HashMap};

use chrono::{Days, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use trajis_core::calendar::epoch_days;
use trajis_core::engine::{Link, StageValue, ABSENT, ORIGIN, TERMINAL};
use trajis_core::query::{
    CmpOp, Constraint, NextEventRange, PatternEdge, PatternNode, QueryGraph, QueryParams, Value,
};
use trajis_core::{EventRecord, SankeyResult, YearMonth};

pub const EXAM_TYPES: &[&str] = &["CYT", "HPV", "HIST"];
pub const DIAGNOSES: &[&str] = &["0", "1", "10", "11", "20"];
pub const STAGES: &[&str] = &["1", "2"];
pub const LABS: &[&str] = &["10101", "20202"];
pub const REGIONS: &[&str] = &["1", "2", "3"];
pub const CATEGORICAL: &[&str] = &["exam_type", "diagnosis", "stage", "lab_nr", "region"];

const BIRTH_DAY: u32 = 15;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn base_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2000, 1, 1).unwrap()
}

/// Up to `max_entities` entities with 1..=`max_events` events each. Dates are
/// drawn from a small range so that same-day ties occur; optional attributes
/// are sometimes missing.
pub fn random_records(rng: &mut ChaCha8Rng, max_entities: usize, max_events: usize) -> Vec<EventRecord> {
    let n = rng.gen_range(1..=max_entities);
    let mut out = Vec::new();
    for e in 0..n {
        let id = format!("e{e:03}");
        let birthdate = YearMonth::new(rng.gen_range(1950..1980), rng.gen_range(1..=12)).unwrap();
        let region = REGIONS.choose(rng).unwrap().to_string();
        for _ in 0..rng.gen_range(1..=max_events) {
            out.push(EventRecord {
                entity_id: id.clone(),
                birthdate,
                diagnosisdate: base_date() + Days::new(rng.gen_range(0..40) * 50),
                exam_type: EXAM_TYPES.choose(rng).unwrap().to_string(),
                diagnosis: DIAGNOSES.choose(rng).unwrap().to_string(),
                stage: rng.gen_bool(0.3).then(|| STAGES.choose(rng).unwrap().to_string()),
                lab_nr: rng.gen_bool(0.8).then(|| LABS.choose(rng).unwrap().to_string()),
                region: region.clone(),
                censordate: None,
            });
        }
    }
    out.shuffle(rng);
    out
}

fn values_for(attribute: &str) -> &'static [&'static str] {
    match attribute {
        "exam_type" => EXAM_TYPES,
        "diagnosis" => DIAGNOSES,
        "stage" => STAGES,
        "lab_nr" => LABS,
        _ => REGIONS,
    }
}

fn random_code(rng: &mut ChaCha8Rng, attribute: &str) -> String {
    if rng.gen_bool(0.05) {
        // absent from every store
        return ["99", "x y", "q\"uote"].choose(rng).unwrap().to_string();
    }
    values_for(attribute).choose(rng).unwrap().to_string()
}

fn random_int_op(rng: &mut ChaCha8Rng) -> CmpOp {
    *[CmpOp::Lt, CmpOp::Gt, CmpOp::Eq, CmpOp::Neq, CmpOp::Lt, CmpOp::Gt].choose(rng).unwrap()
}

fn random_node_constraint(rng: &mut ChaCha8Rng) -> Constraint {
    match rng.gen_range(0..10) {
        0 => {
            let day = epoch_days(base_date()) as i64 + rng.gen_range(0..2000);
            Constraint::new("date", random_int_op(rng), Value::Int(day))
        }
        1 => Constraint::new("age_days", random_int_op(rng), Value::Int(rng.gen_range(7000..20000))),
        _ => {
            let attribute = *CATEGORICAL.choose(rng).unwrap();
            match rng.gen_range(0..4) {
                0 => Constraint::new(attribute, CmpOp::Neq, Value::Code(random_code(rng, attribute))),
                1 => {
                    let k = rng.gen_range(1..=3);
                    let codes = (0..k).map(|_| random_code(rng, attribute)).collect();
                    Constraint::new(attribute, CmpOp::In, Value::Codes(codes))
                }
                _ => Constraint::new(attribute, CmpOp::Eq, Value::Code(random_code(rng, attribute))),
            }
        }
    }
}

fn random_edge_constraint(rng: &mut ChaCha8Rng) -> Constraint {
    if rng.gen_bool(0.4) {
        let op = *[CmpOp::Eq, CmpOp::Lt, CmpOp::Gt, CmpOp::Neq].choose(rng).unwrap();
        Constraint::new("hop", op, Value::Int(rng.gen_range(1..=3)))
    } else {
        Constraint::new("elapsed_days", random_int_op(rng), Value::Int(rng.gen_range(0..1200)))
    }
}

const IDS: &[&str] = &["a", "b", "c", "d", "n0", "n1", "n2", "x", "z", "_p", "Q7"];

/// A valid query with 1..=`max_nodes` nodes: a DAG whose last node in a
/// random topological order is the only sink.
pub fn random_query(rng: &mut ChaCha8Rng, max_nodes: usize) -> QueryGraph {
    let k = rng.gen_range(1..=max_nodes);
    let mut ids: Vec<&str> = IDS.to_vec();
    ids.shuffle(rng);
    ids.truncate(k);
    let nodes: Vec<PatternNode> = ids
        .iter()
        .map(|id| PatternNode {
            id: id.to_string(),
            constraints: (0..rng.gen_range(0..=2)).map(|_| random_node_constraint(rng)).collect(),
        })
        .collect();
    let mut pairs = Vec::new();
    for i in 0..k.saturating_sub(1) {
        pairs.push((i, rng.gen_range(i + 1..k)));
        for j in i + 1..k {
            if rng.gen_bool(0.25) {
                pairs.push((i, j));
            }
        }
    }
    pairs.sort_unstable();
    pairs.dedup();
    let mut edges: Vec<PatternEdge> = pairs
        .into_iter()
        .enumerate()
        .map(|(n, (i, j))| PatternEdge {
            id: format!("e{n}"),
            from: ids[i].to_string(),
            to: ids[j].to_string(),
            constraints: (0..rng.gen_range(0..=2)).map(|_| random_edge_constraint(rng)).collect(),
        })
        .collect();
    edges.shuffle(rng);
    let next_event_range = match rng.gen_range(0..4) {
        0 => Some(NextEventRange::at_most(rng.gen_range(0..800))),
        1 => Some(NextEventRange::at_least(rng.gen_range(0..800))),
        2 => {
            let lo = rng.gen_range(0..600);
            Some(NextEventRange::between(lo, lo + rng.gen_range(0..800)))
        }
        _ => None,
    };
    let params = QueryParams {
        steps: rng.gen_range(1..=3),
        observe: CATEGORICAL.choose(rng).unwrap().to_string(),
        next_event_range,
    };
    QueryGraph { nodes, edges, params }
}

/// Events of one entity in store order: date, then exam type, diagnosis and
/// input position.
pub fn ordered_events<'a>(records: &'a [EventRecord]) -> BTreeMap<&'a str, Vec<&'a EventRecord>> {
    let mut by_entity: BTreeMap<&str, Vec<&EventRecord>> = BTreeMap::new();
    for r in records {
        by_entity.entry(&r.entity_id).or_default().push(r);
    }
    for events in by_entity.values_mut() {
        events.sort_by(|a, b| (a.diagnosisdate, &a.exam_type, &a.diagnosis).cmp(&(b.diagnosisdate, &b.exam_type, &b.diagnosis)));
    }
    by_entity
}

fn categorical<'a>(r: &'a EventRecord, attribute: &str) -> Option<&'a str> {
    match attribute {
        "exam_type" => Some(&r.exam_type),
        "diagnosis" => Some(&r.diagnosis),
        "stage" => r.stage.as_deref(),
        "lab_nr" => r.lab_nr.as_deref(),
        "region" => Some(&r.region),
        other => panic!("not categorical: {other}"),
    }
}

fn day(r: &EventRecord) -> i64 {
    (r.diagnosisdate - NaiveDate::from_ymd_opt(1970, 1, 1).unwrap()).num_days()
}

fn int_holds(lhs: i64, op: CmpOp, rhs: i64) -> bool {
    match op {
        CmpOp::Eq => lhs == rhs,
        CmpOp::Neq => lhs != rhs,
        CmpOp::Lt => lhs < rhs,
        CmpOp::Gt => lhs > rhs,
        CmpOp::In => panic!("IN on integer"),
    }
}

fn node_holds(r: &EventRecord, c: &Constraint) -> bool {
    match (c.attribute.as_str(), &c.value) {
        ("date", Value::Int(v)) => int_holds(day(r), c.op, *v),
        ("age_days", Value::Int(v)) => {
            let born = r.birthdate.on_day(BIRTH_DAY);
            int_holds((r.diagnosisdate - born).num_days(), c.op, *v)
        }
        (attribute, value) => {
            let Some(actual) = categorical(r, attribute) else { return false };
            match (c.op, value) {
                (CmpOp::Eq, Value::Code(v)) => actual == v,
                (CmpOp::Neq, Value::Code(v)) => actual != v,
                (CmpOp::In, Value::Codes(vs)) => vs.iter().any(|v| v == actual),
                other => panic!("unexpected constraint {other:?}"),
            }
        }
    }
}

fn edge_holds(events: &[&EventRecord], from: usize, to: usize, c: &Constraint) -> bool {
    let Value::Int(v) = c.value else { panic!("edge constraint value") };
    match c.attribute.as_str() {
        "hop" => int_holds((to - from) as i64, c.op, v),
        "elapsed_days" => int_holds(day(events[to]) - day(events[from]), c.op, v),
        other => panic!("edge attribute {other}"),
    }
}

/// Anchor of one entity by exhaustive enumeration of every ordinal tuple.
/// Returns the anchor ordinal and the binding (node id to ordinal).
pub fn oracle_anchor(events: &[&EventRecord], q: &QueryGraph) -> Option<(u32, BTreeMap<String, u32>)> {
    let mut ids: Vec<&str> = q.nodes.iter().map(|n| n.id.as_str()).collect();
    ids.sort_unstable();
    let pos: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
    let sources: Vec<&str> = q.edges.iter().map(|e| e.from.as_str()).collect();
    let sink = ids.iter().position(|id| !sources.contains(id)).unwrap();
    let n = events.len();
    let k = ids.len();
    let mut best: Option<(usize, Vec<usize>)> = None;
    let mut tuple = vec![0usize; k];
    loop {
        let nodes_ok = q.nodes.iter().all(|node| {
            let ev = events[tuple[pos[node.id.as_str()]]];
            node.constraints.iter().all(|c| node_holds(ev, c))
        });
        let edges_ok = nodes_ok
            && q.edges.iter().all(|e| {
                let (f, t) = (tuple[pos[e.from.as_str()]], tuple[pos[e.to.as_str()]]);
                f < t && e.constraints.iter().all(|c| edge_holds(events, f, t, c))
            });
        if edges_ok {
            let key = (tuple[sink], tuple.clone());
            if best.as_ref().is_none_or(|b| key < *b) {
                best = Some(key);
            }
        }
        // next tuple in odometer order
        let mut i = k;
        loop {
            if i == 0 {
                return best.map(|(anchor, t)| {
                    (anchor as u32, ids.iter().map(|id| id.to_string()).zip(t.into_iter().map(|o| o as u32)).collect())
                });
            }
            i -= 1;
            tuple[i] += 1;
            if tuple[i] < n {
                break;
            }
            tuple[i] = 0;
        }
    }
}

/// Matching entities in id order with their anchors.
pub fn oracle_matches(records: &[EventRecord], q: &QueryGraph) -> Vec<(String, u32, BTreeMap<String, u32>)> {
    ordered_events(records)
        .into_iter()
        .filter_map(|(id, events)| oracle_anchor(&events, q).map(|(a, b)| (id.to_string(), a, b)))
        .collect()
}

fn label_order(a: &str, b: &str) -> std::cmp::Ordering {
    (a == TERMINAL, a).cmp(&(b == TERMINAL, b))
}

/// Reference flow aggregation over raw records.
pub fn oracle_flows(records: &[EventRecord], q: &QueryGraph) -> SankeyResult {
    let by_entity = ordered_events(records);
    let p = &q.params;
    let mut origin = 0;
    let mut excluded = 0;
    let mut stages: Vec<BTreeMap<String, u64>> = Vec::new();
    let mut links: BTreeMap<(u32, String, String), u64> = BTreeMap::new();
    for events in by_entity.values() {
        let Some((anchor, _)) = oracle_anchor(events, q) else { continue };
        let anchor = anchor as usize;
        let gap = events.get(anchor + 1).map(|next| day(next) - day(events[anchor]));
        if let Some(r) = &p.next_event_range {
            let admitted = match gap {
                None => r.max_days.is_none(),
                Some(g) => r.min_days.is_none_or(|m| g >= m) && r.max_days.is_none_or(|m| g <= m),
            };
            if !admitted {
                excluded += 1;
                continue;
            }
        }
        origin += 1;
        let mut source = ORIGIN.to_string();
        for t in 0..p.steps as usize {
            let target = match events.get(anchor + 1 + t) {
                None => TERMINAL.to_string(),
                Some(ev) => categorical(ev, &p.observe).unwrap_or(ABSENT).to_string(),
            };
            if stages.len() <= t {
                stages.push(BTreeMap::new());
            }
            *stages[t].entry(target.clone()).or_default() += 1;
            *links.entry((t as u32, source, target.clone())).or_default() += 1;
            if target == TERMINAL {
                break;
            }
            source = target;
        }
    }
    let stages = stages
        .into_iter()
        .map(|m| {
            let mut v: Vec<StageValue> = m.into_iter().map(|(value, count)| StageValue { value, count }).collect();
            v.sort_by(|a, b| label_order(&a.value, &b.value));
            v
        })
        .collect();
    let mut links: Vec<Link> = links
        .into_iter()
        .map(|((stage, source, target), count)| Link { stage, source, target, count })
        .collect();
    links.sort_by(|a, b| {
        a.stage.cmp(&b.stage).then(label_order(&a.source, &b.source)).then(label_order(&a.target, &b.target))
    });
    SankeyResult { origin, excluded_by_range: excluded, stages, links, total_population: by_entity.len() as u64 }
}
