//! Synthetic screening cohorts from a configurable triage Markov chain.
//!
//! Each entity enters the study window at a random date and age, then moves
//! through exam states. Return intervals follow the state's recommendation
//! subject to an adherence mixture; a trajectory ends at a terminal state, a
//! dropout, an exit, or the end of the window. Every realized transition is
//! recorded in a [`GenerationLedger`] so that query results can be checked
//! against the ground truth that produced the data.

mod config;

use std::collections::BTreeMap;

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;
use crate::ingest::EventRecord;

pub use config::{
    Adherence, CohortConfig, ConfigError, EntryAge, StudyWindow, Transition, TriageModel, TriageState, EXIT,
};

/// Ground-truth counts of a generated cohort.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GenerationLedger {
    pub entities: u64,
    pub events: u64,
    pub max_events_per_entity: u64,
    /// Entities given a censor date.
    pub censored: u64,
    /// Consecutive state pairs, `from -> to -> count`.
    pub transitions: BTreeMap<String, BTreeMap<String, u64>>,
    /// Entities with at least one `from -> to` pair.
    pub entities_with_transition: BTreeMap<String, BTreeMap<String, u64>>,
}

impl GenerationLedger {
    pub fn transition_count(&self, from: &str, to: &str) -> u64 {
        self.transitions.get(from).and_then(|m| m.get(to)).copied().unwrap_or(0)
    }

    /// Share of realized transitions out of `from` that went to `to`.
    pub fn transition_fraction(&self, from: &str, to: &str) -> f64 {
        let total: u64 = self.transitions.get(from).map_or(0, |m| m.values().sum());
        if total == 0 {
            return 0.0;
        }
        self.transition_count(from, to) as f64 / total as f64
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ledger serializes")
    }
}

struct EntityOutput {
    records: Vec<EventRecord>,
    states: Vec<usize>,
    censored: bool,
}

#[derive(Clone, Copy)]
enum Class {
    OnTime,
    Early,
    Late,
    Dropout,
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (u32, u32)) -> u64 {
    rng.gen_range(lo as u64..=hi as u64)
}

fn pick<'a>(rng: &mut ChaCha8Rng, items: &'a [Transition]) -> &'a str {
    let mut u: f64 = rng.gen();
    for t in items {
        if u < t.p {
            return &t.to;
        }
        u -= t.p;
    }
    // rounding residue lands on the last positive entry
    &items.iter().rev().find(|t| t.p > 0.0).unwrap_or(&items[items.len() - 1]).to
}

fn adherence_class(rng: &mut ChaCha8Rng, a: &Adherence) -> Class {
    let u: f64 = rng.gen();
    if u < a.on_time {
        Class::OnTime
    } else if u < a.on_time + a.early {
        Class::Early
    } else if u < a.on_time + a.early + a.late {
        Class::Late
    } else {
        Class::Dropout
    }
}

fn plus_days(d: NaiveDate, n: u64) -> NaiveDate {
    d.checked_add_days(Days::new(n)).expect("date in range")
}

fn entity_id(index: u64, n: u64) -> String {
    let width = n.max(1).to_string().len().max(6);
    format!("{:0width$}", index + 1)
}

fn generate_entity(cfg: &CohortConfig, index: u64) -> EntityOutput {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(index);
    let model = &cfg.model;
    let window = &cfg.window;

    let span = (window.end - window.start).num_days() as u64;
    let entry = plus_days(window.start, rng.gen_range(0..=span));
    let age = &cfg.entry_age;
    let age_years = if rng.gen_bool(age.p_min) { age.min_years } else { rng.gen_range(age.min_years..=age.max_years) };
    let age_days = age_years as u64 * 365 + age_years as u64 / 4 + rng.gen_range(0..365);
    let birth = entry.checked_sub_days(Days::new(age_days)).expect("date in range");
    let birthdate = YearMonth::of(birth);
    let region = cfg.regions[rng.gen_range(0..cfg.regions.len())].clone();

    let index_of = |name: &str| model.state_index(name).expect("validated state");
    let mut out = EntityOutput { records: Vec::new(), states: Vec::new(), censored: false };
    let mut state = index_of(pick(&mut rng, &model.initial));
    let mut date = entry;
    let mut censordate = None;
    loop {
        let s = &model.states[state];
        let stage = (!s.stages.is_empty()).then(|| s.stages[rng.gen_range(0..s.stages.len())].clone());
        out.records.push(EventRecord {
            entity_id: entity_id(index, cfg.n_entities),
            birthdate,
            diagnosisdate: date,
            exam_type: s.exam_type.clone(),
            diagnosis: s.diagnosis.clone(),
            stage,
            lab_nr: Some(cfg.labs[rng.gen_range(0..cfg.labs.len())].clone()),
            region: region.clone(),
            censordate: None,
        });
        out.states.push(state);
        if s.terminal {
            if s.censors {
                censordate = Some(date);
            }
            break;
        }
        let recommended = s.interval_days.expect("validated interval");
        let a = &model.adherence;
        let interval = match adherence_class(&mut rng, a) {
            Class::OnTime => uniform(&mut rng, recommended),
            Class::Early => uniform(&mut rng, a.early_interval_days),
            Class::Late => recommended.1 as u64 + uniform(&mut rng, a.late_extra_days),
            Class::Dropout => break,
        };
        let years = interval as f64 / 365.25;
        if model.exit_hazard_per_year > 0.0 && rng.gen::<f64>() < 1.0 - (1.0 - model.exit_hazard_per_year).powf(years) {
            let exit = plus_days(date, rng.gen_range(1..=interval));
            if exit <= window.end {
                censordate = Some(exit);
            }
            break;
        }
        let next_date = plus_days(date, interval);
        if next_date > window.end {
            break;
        }
        let next = pick(&mut rng, &model.transitions[&s.name]);
        if next == EXIT {
            break;
        }
        state = index_of(next);
        date = next_date;
    }
    if let Some(c) = censordate {
        out.censored = true;
        for r in &mut out.records {
            r.censordate = Some(c);
        }
    }
    out
}

/// Generate the cohort described by `cfg` along with its ledger.
///
/// Entity `i` draws from its own ChaCha8 stream, so output is deterministic
/// for a given seed and independent of thread count.
pub fn generate(cfg: &CohortConfig) -> Result<(Vec<EventRecord>, GenerationLedger), ConfigError> {
    cfg.validate()?;
    let outputs: Vec<EntityOutput> = (0..cfg.n_entities).into_par_iter().map(|i| generate_entity(cfg, i)).collect();

    let names: Vec<&str> = cfg.model.states.iter().map(|s| s.name.as_str()).collect();
    let n = names.len();
    let mut pairs = vec![0u64; n * n];
    let mut entity_pairs = vec![0u64; n * n];
    let mut ledger = GenerationLedger { entities: cfg.n_entities, ..Default::default() };
    let mut seen = vec![false; n * n];
    for o in &outputs {
        ledger.events += o.records.len() as u64;
        ledger.max_events_per_entity = ledger.max_events_per_entity.max(o.records.len() as u64);
        ledger.censored += o.censored as u64;
        seen.iter_mut().for_each(|s| *s = false);
        for w in o.states.windows(2) {
            let k = w[0] * n + w[1];
            pairs[k] += 1;
            if !seen[k] {
                seen[k] = true;
                entity_pairs[k] += 1;
            }
        }
    }
    for (k, (&c, &e)) in pairs.iter().zip(&entity_pairs).enumerate() {
        if c > 0 {
            let (from, to) = (names[k / n].to_string(), names[k % n].to_string());
            ledger.transitions.entry(from.clone()).or_default().insert(to.clone(), c);
            ledger.entities_with_transition.entry(from).or_default().insert(to, e);
        }
    }
    let records = outputs.into_iter().flat_map(|o| o.records).collect();
    Ok((records, ledger))
}
