use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::MatchAnchor;
use crate::attribute::Attribute;
use crate::query::{NextEventRange, QueryParams};
use crate::store::TrajectoryStore;

/// Source label of stage-0 links.
pub const ORIGIN: &str = "ORIGIN";
/// Sink for entities whose records end before the requested number of steps.
pub const TERMINAL: &str = "TERMINAL";
/// Stage value for events lacking the observed attribute.
pub const ABSENT: &str = "NA";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageValue {
    pub value: String,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Link {
    /// Index of the target stage; stage-0 links start at [`ORIGIN`].
    pub stage: u32,
    pub source: String,
    pub target: String,
    pub count: u64,
}

/// Staged flow counts of the events following each matched anchor.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SankeyResult {
    /// Matched entities admitted by the next-event range.
    pub origin: u64,
    /// Matched entities whose next event falls outside the range.
    pub excluded_by_range: u64,
    /// `stages[t]` counts the value of the (t+1)-th event after the anchor.
    pub stages: Vec<Vec<StageValue>>,
    pub links: Vec<Link>,
    /// Entities in the store.
    pub total_population: u64,
}

impl SankeyResult {
    /// Compact JSON, the one serialization shared by every output path.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("sankey result serializes")
    }

    pub fn stage_count(&self, stage: usize, value: &str) -> u64 {
        self.stages
            .get(stage)
            .and_then(|s| s.iter().find(|v| v.value == value))
            .map_or(0, |v| v.count)
    }

    /// Entities matched before range filtering.
    pub fn matched(&self) -> u64 {
        self.origin + self.excluded_by_range
    }

    /// Verify flow conservation: stage 0 sums to the origin, every
    /// non-terminal value's count leaves through links into the next stage,
    /// and every stage total equals its incoming links.
    pub fn check_conservation(&self) -> Result<(), String> {
        let mut prev: HashMap<&str, u64> = HashMap::from([(ORIGIN, self.origin)]);
        for (t, stage) in self.stages.iter().enumerate() {
            let mut outflow: HashMap<&str, u64> = HashMap::new();
            let mut inflow: HashMap<&str, u64> = HashMap::new();
            for l in self.links.iter().filter(|l| l.stage as usize == t) {
                if l.source == TERMINAL {
                    return Err(format!("stage {t}: link leaves {TERMINAL}"));
                }
                *outflow.entry(&l.source).or_default() += l.count;
                *inflow.entry(&l.target).or_default() += l.count;
            }
            for (value, count) in &prev {
                let out = outflow.get(value).copied().unwrap_or(0);
                if out != *count {
                    return Err(format!("stage {t}: `{value}` holds {count} but {out} flow onward"));
                }
            }
            if let Some(extra) = outflow.keys().find(|k| !prev.contains_key(*k)) {
                return Err(format!("stage {t}: link from `{extra}` which is not in the previous stage"));
            }
            let mut next = HashMap::new();
            for v in stage {
                let into = inflow.get(v.value.as_str()).copied().unwrap_or(0);
                if into != v.count {
                    return Err(format!("stage {t}: `{}` counts {} but receives {into}", v.value, v.count));
                }
                if v.value != TERMINAL {
                    next.insert(v.value.as_str(), v.count);
                }
            }
            if inflow.len() != stage.len() {
                return Err(format!("stage {t}: links target values missing from the stage"));
            }
            prev = next;
        }
        if self.links.iter().any(|l| l.stage as usize >= self.stages.len()) {
            return Err("link beyond the last stage".into());
        }
        if self.stages.is_empty() && self.origin > 0 {
            return Err("non-empty origin without stages".into());
        }
        Ok(())
    }
}

/// Days from the anchor event to the event right after it, if any.
fn next_gap(store: &TrajectoryStore, a: &MatchAnchor) -> Option<i64> {
    let t = &store.trajectories()[a.entity_index as usize];
    t.edge(a.anchor_ordinal, a.anchor_ordinal + 1).map(|e| e.elapsed_days as i64)
}

/// Anchors shown in the Origin for `range`. Anchors without a next event are
/// admitted only by ranges without an upper bound.
pub fn origin_anchors<'a>(
    store: &TrajectoryStore,
    anchors: &'a [MatchAnchor],
    range: Option<&NextEventRange>,
) -> Vec<&'a MatchAnchor> {
    match range {
        None => anchors.iter().collect(),
        Some(r) => anchors.iter().filter(|a| r.admits(next_gap(store, a))).collect(),
    }
}

fn sort_key(label: &str) -> (bool, &str) {
    (label == TERMINAL, label)
}

/// Aggregate the up-to-`steps` events following each anchor into flow counts.
///
/// Walks consecutive (1-hop) edges only. An entity whose records run out
/// contributes once to [`TERMINAL`] at the first stage it cannot reach and
/// drops out of later stages; trailing stages with no entities are omitted.
///
/// # Panics
///
/// If `params.observe` is not a categorical attribute (rejected by validation).
pub fn future_flows(store: &TrajectoryStore, anchors: &[MatchAnchor], params: &QueryParams) -> SankeyResult {
    let observed = Attribute::from_name(&params.observe)
        .filter(|a| a.slot().is_some())
        .unwrap_or_else(|| panic!("`{}` is not an observable attribute", params.observe));
    let dict = store.dictionaries().get(observed).unwrap();
    let label = |code: Option<u32>| code.map_or(ABSENT, |c| dict.value(c));

    let admitted = origin_anchors(store, anchors, params.next_event_range.as_ref());
    let excluded_by_range = (anchors.len() - admitted.len()) as u64;

    let mut stage_counts: Vec<HashMap<&str, u64>> = Vec::new();
    let mut link_counts: HashMap<(u32, &str, &str), u64> = HashMap::new();
    for a in &admitted {
        let t = &store.trajectories()[a.entity_index as usize];
        let mut source = ORIGIN;
        for step in 0..params.steps {
            let ordinal = a.anchor_ordinal as usize + 1 + step as usize;
            let target = t.nodes().get(ordinal).map_or(TERMINAL, |n| label(n.code(observed)));
            if stage_counts.len() <= step as usize {
                stage_counts.push(HashMap::new());
            }
            *stage_counts[step as usize].entry(target).or_default() += 1;
            *link_counts.entry((step, source, target)).or_default() += 1;
            if target == TERMINAL {
                break;
            }
            source = target;
        }
    }

    let stages = stage_counts
        .into_iter()
        .map(|counts| {
            let mut values: Vec<StageValue> =
                counts.into_iter().map(|(v, count)| StageValue { value: v.to_string(), count }).collect();
            values.sort_by(|x, y| sort_key(&x.value).cmp(&sort_key(&y.value)));
            values
        })
        .collect();
    let mut links: Vec<((u32, &str, &str), u64)> = link_counts.into_iter().collect();
    links.sort_by(|(x, _), (y, _)| (x.0, sort_key(x.1), sort_key(x.2)).cmp(&(y.0, sort_key(y.1), sort_key(y.2))));

    SankeyResult {
        origin: admitted.len() as u64,
        excluded_by_range,
        stages,
        links: links
            .into_iter()
            .map(|((stage, s, t), count)| Link { stage, source: s.to_string(), target: t.to_string(), count })
            .collect(),
        total_population: store.stats().entities as u64,
    }
}
