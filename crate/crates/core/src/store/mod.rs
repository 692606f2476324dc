//! Per-entity trajectory graphs and the immutable store that holds them.

mod snapshot;
mod trajectory;

use std::collections::HashMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::attribute::Attribute;
use crate::calendar::epoch_days;
use crate::ingest::EventRecord;

pub use snapshot::{SnapshotError, SnapshotHeader, SNAPSHOT_VERSION};
pub use trajectory::{EventNode, HopCap, HopEdge, Trajectory};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum StoreError {
    #[error("entity has no records")]
    EmptyEntity,
    #[error("records for one trajectory carry different entity ids: `{0}` and `{1}`")]
    MixedEntities(String, String),
    #[error("{attribute} value `{value}` is missing from the dictionary")]
    Uninterned { attribute: Attribute, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StoreOptions {
    pub hop_cap: HopCap,
    /// Day of month used to turn month-precision birthdates into dates.
    pub birth_day: u32,
}

impl Default for StoreOptions {
    fn default() -> Self {
        Self { hop_cap: HopCap::Unlimited, birth_day: 15 }
    }
}

impl StoreOptions {
    pub fn with_hop_cap(hop_cap: HopCap) -> Self {
        Self { hop_cap, ..Self::default() }
    }
}

/// Interned values of one categorical attribute. Ids follow first appearance.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionary {
    values: Vec<String>,
    ids: HashMap<String, u32>,
}

impl Dictionary {
    pub fn intern(&mut self, value: &str) -> u32 {
        if let Some(&id) = self.ids.get(value) {
            return id;
        }
        let id = self.values.len() as u32;
        self.values.push(value.to_string());
        self.ids.insert(value.to_string(), id);
        id
    }

    pub fn id(&self, value: &str) -> Option<u32> {
        self.ids.get(value).copied()
    }

    pub fn value(&self, id: u32) -> &str {
        &self.values[id as usize]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Values in id order.
    pub fn values(&self) -> &[String] {
        &self.values
    }

    pub fn sorted_values(&self) -> Vec<&str> {
        let mut v: Vec<&str> = self.values.iter().map(String::as_str).collect();
        v.sort_unstable();
        v
    }
}

/// One dictionary per categorical attribute, indexed by [`Attribute::slot`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Dictionaries([Dictionary; 5]);

impl Dictionaries {
    pub fn get(&self, attr: Attribute) -> Option<&Dictionary> {
        attr.slot().map(|s| &self.0[s])
    }

    pub(crate) fn slot(&self, slot: usize) -> &Dictionary {
        &self.0[slot]
    }

    pub(crate) fn slot_mut(&mut self, slot: usize) -> &mut Dictionary {
        &mut self.0[slot]
    }

    pub fn intern_record(&mut self, r: &EventRecord) {
        for (slot, value) in record_values(r).into_iter().enumerate() {
            if let Some(v) = value {
                self.0[slot].intern(v);
            }
        }
    }

    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a EventRecord>) -> Self {
        let mut d = Self::default();
        for r in records {
            d.intern_record(r);
        }
        d
    }
}

fn record_values(r: &EventRecord) -> [Option<&str>; 5] {
    [
        Some(&r.exam_type),
        Some(&r.diagnosis),
        r.stage.as_deref(),
        r.lab_nr.as_deref(),
        Some(&r.region),
    ]
}

/// Build one entity's trajectory.
///
/// Events are ordered by date, ties broken by exam type code, then diagnosis
/// code, then position in `records`. Every categorical value must already be
/// interned in `dictionaries`.
pub fn build_trajectory(
    records: &[&EventRecord],
    options: &StoreOptions,
    dictionaries: &Dictionaries,
) -> Result<Trajectory, StoreError> {
    let first = records.first().ok_or(StoreError::EmptyEntity)?;
    if let Some(other) = records.iter().find(|r| r.entity_id != first.entity_id) {
        return Err(StoreError::MixedEntities(first.entity_id.clone(), other.entity_id.clone()));
    }

    let mut order: Vec<usize> = (0..records.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (records[a], records[b]);
        (ra.diagnosisdate, &ra.exam_type, &ra.diagnosis, a).cmp(&(rb.diagnosisdate, &rb.exam_type, &rb.diagnosis, b))
    });

    let mut nodes = Vec::with_capacity(records.len());
    for (ordinal, &i) in order.iter().enumerate() {
        let r = records[i];
        let mut codes = [None; 5];
        for (slot, value) in record_values(r).into_iter().enumerate() {
            if let Some(v) = value {
                let id = dictionaries.slot(slot).id(v).ok_or_else(|| StoreError::Uninterned {
                    attribute: Attribute::CATEGORICAL[slot],
                    value: v.to_string(),
                })?;
                codes[slot] = Some(id);
            }
        }
        let day = epoch_days(r.diagnosisdate);
        let born = epoch_days(r.birthdate.on_day(options.birth_day));
        nodes.push(EventNode { ordinal: ordinal as u32, day, age_days: day - born, codes });
    }

    let head = records[order[0]];
    let censordate = records.iter().filter_map(|r| r.censordate).max();
    Ok(Trajectory::from_nodes(head.entity_id.clone(), head.birthdate, censordate, nodes, options.hop_cap))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct StoreStats {
    pub entities: usize,
    pub events: usize,
    pub edges: usize,
    pub max_events_per_entity: usize,
}

/// Immutable collection of mutually disconnected trajectories, ordered by entity id.
#[derive(Debug, Clone)]
pub struct TrajectoryStore {
    options: StoreOptions,
    trajectories: Vec<Trajectory>,
    by_id: HashMap<String, usize>,
    dictionaries: Dictionaries,
    // per categorical slot, per value id: sorted indices of entities containing it
    postings: [Vec<Vec<u32>>; 5],
    stats: StoreStats,
}

/// Group records by entity and build every trajectory.
pub fn build_store(records: &[EventRecord], options: StoreOptions) -> Result<TrajectoryStore, StoreError> {
    let dictionaries = Dictionaries::from_records(records);
    let mut groups: HashMap<&str, Vec<&EventRecord>> = HashMap::new();
    for r in records {
        groups.entry(r.entity_id.as_str()).or_default().push(r);
    }
    let mut groups: Vec<(&str, Vec<&EventRecord>)> = groups.into_iter().collect();
    groups.sort_unstable_by(|a, b| a.0.cmp(b.0));

    let trajectories = groups
        .par_iter()
        .map(|(_, recs)| build_trajectory(recs, &options, &dictionaries))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(TrajectoryStore::assemble(options, trajectories, dictionaries))
}

impl TrajectoryStore {
    pub(crate) fn assemble(options: StoreOptions, trajectories: Vec<Trajectory>, dictionaries: Dictionaries) -> Self {
        let mut postings: [Vec<Vec<u32>>; 5] = Default::default();
        for (slot, lists) in postings.iter_mut().enumerate() {
            lists.resize(dictionaries.slot(slot).len(), Vec::new());
        }
        let mut stats = StoreStats { entities: trajectories.len(), ..Default::default() };
        let mut by_id = HashMap::with_capacity(trajectories.len());
        for (idx, t) in trajectories.iter().enumerate() {
            by_id.insert(t.entity_id.clone(), idx);
            stats.events += t.len();
            stats.edges += t.edges().len();
            stats.max_events_per_entity = stats.max_events_per_entity.max(t.len());
            for node in t.nodes() {
                for (slot, code) in node.codes.iter().enumerate() {
                    if let Some(id) = code {
                        let list = &mut postings[slot][*id as usize];
                        if list.last() != Some(&(idx as u32)) {
                            list.push(idx as u32);
                        }
                    }
                }
            }
        }
        Self { options, trajectories, by_id, dictionaries, postings, stats }
    }

    pub fn empty(options: StoreOptions) -> Self {
        Self::assemble(options, Vec::new(), Dictionaries::default())
    }

    pub fn options(&self) -> &StoreOptions {
        &self.options
    }

    pub fn hop_cap(&self) -> HopCap {
        self.options.hop_cap
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn trajectory(&self, entity_id: &str) -> Option<&Trajectory> {
        self.by_id.get(entity_id).map(|&i| &self.trajectories[i])
    }

    pub fn dictionaries(&self) -> &Dictionaries {
        &self.dictionaries
    }

    /// Indices (into [`Self::trajectories`]) of entities with at least one event
    /// carrying `value` for `attr`.
    pub fn postings(&self, attr: Attribute, id: u32) -> &[u32] {
        let slot = attr.slot().expect("postings exist only for categorical attributes");
        &self.postings[slot][id as usize]
    }

    pub fn stats(&self) -> StoreStats {
        self.stats
    }

    /// Decode a node's categorical value.
    pub fn value(&self, node: &EventNode, attr: Attribute) -> Option<&str> {
        let slot = attr.slot()?;
        node.codes[slot].map(|id| self.dictionaries.slot(slot).value(id))
    }
}
