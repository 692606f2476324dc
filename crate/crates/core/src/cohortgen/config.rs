use std::collections::{BTreeMap, HashSet};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::ingest::is_valid_lab_nr;

/// Pseudo-state that ends an entity's trajectory without another exam.
pub const EXIT: &str = "EXIT";

const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("invalid cohort config: {0}")]
    Parse(String),
    #[error("state `{0}` is declared more than once")]
    DuplicateState(String),
    #[error("`{0}` is reserved")]
    ReservedState(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("state `{0}` has no outgoing transitions")]
    MissingTransitions(String),
    #[error("probabilities for `{context}` sum to {sum}, expected 1")]
    ProbabilitySum { context: String, sum: f64 },
    #[error("probability {p} for `{context}` is outside [0, 1]")]
    BadProbability { context: String, p: f64 },
    #[error("interval for `{0}` must be positive with min <= max")]
    BadInterval(String),
    #[error("initial states may not include `{EXIT}`")]
    ExitAtEntry,
    #[error("study window must end after it starts")]
    EmptyWindow,
    #[error("entry age range is invalid")]
    BadEntryAge,
    #[error("exit hazard must be within [0, 1)")]
    BadHazard,
    #[error("`{0}` is not a 5-digit lab number")]
    BadLab(String),
    #[error("at least one lab and one region are required")]
    NoLabsOrRegions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Transition {
    pub to: String,
    pub p: f64,
}

impl Transition {
    pub fn new(to: &str, p: f64) -> Self {
        Self { to: to.into(), p }
    }
}

/// An exam outcome and the interval recommended before the next exam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageState {
    pub name: String,
    pub exam_type: String,
    pub diagnosis: String,
    /// Stage codes drawn uniformly for events in this state.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub stages: Vec<String>,
    /// Recommended return interval, `[min, max]` days. Required unless terminal.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_days: Option<(u32, u32)>,
    /// No further exams follow this state.
    #[serde(default)]
    pub terminal: bool,
    /// Reaching this state sets the entity's censor date to the exam date.
    #[serde(default)]
    pub censors: bool,
}

/// How return intervals deviate from the recommendation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Adherence {
    pub on_time: f64,
    pub early: f64,
    pub late: f64,
    pub dropout: f64,
    /// Early returns come back uniformly within these days.
    pub early_interval_days: (u32, u32),
    /// Late returns add uniformly this many days to the recommended maximum.
    pub late_extra_days: (u32, u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriageModel {
    pub states: Vec<TriageState>,
    pub initial: Vec<Transition>,
    pub transitions: BTreeMap<String, Vec<Transition>>,
    pub adherence: Adherence,
    /// Yearly probability of leaving observation (emigration, death).
    #[serde(default)]
    pub exit_hazard_per_year: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryAge {
    pub min_years: u32,
    pub max_years: u32,
    /// Probability of entering exactly at `min_years`; others enter uniformly
    /// between `min_years` and `max_years`.
    pub p_min: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyWindow {
    pub start: NaiveDate,
    pub end: NaiveDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CohortConfig {
    pub n_entities: u64,
    pub seed: u64,
    pub entry_age: EntryAge,
    pub window: StudyWindow,
    pub labs: Vec<String>,
    pub regions: Vec<String>,
    pub model: TriageModel,
}

fn check_distribution(context: &str, items: &[Transition], names: &HashSet<&str>) -> Result<(), ConfigError> {
    let mut sum = 0.0;
    for t in items {
        if t.to != EXIT && !names.contains(t.to.as_str()) {
            return Err(ConfigError::UnknownState(t.to.clone()));
        }
        if !(0.0..=1.0).contains(&t.p) {
            return Err(ConfigError::BadProbability { context: context.into(), p: t.p });
        }
        sum += t.p;
    }
    if (sum - 1.0).abs() > TOLERANCE {
        return Err(ConfigError::ProbabilitySum { context: context.into(), sum });
    }
    Ok(())
}

fn check_interval(context: &str, (min, max): (u32, u32)) -> Result<(), ConfigError> {
    if min == 0 || min > max {
        return Err(ConfigError::BadInterval(context.into()));
    }
    Ok(())
}

impl TriageModel {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let mut names = HashSet::new();
        for s in &self.states {
            if s.name == EXIT {
                return Err(ConfigError::ReservedState(EXIT.into()));
            }
            if !names.insert(s.name.as_str()) {
                return Err(ConfigError::DuplicateState(s.name.clone()));
            }
            if !s.terminal {
                check_interval(&s.name, s.interval_days.ok_or_else(|| ConfigError::BadInterval(s.name.clone()))?)?;
            }
        }
        if self.initial.iter().any(|t| t.to == EXIT) {
            return Err(ConfigError::ExitAtEntry);
        }
        check_distribution("initial", &self.initial, &names)?;
        for from in self.transitions.keys() {
            if !names.contains(from.as_str()) {
                return Err(ConfigError::UnknownState(from.clone()));
            }
        }
        for s in self.states.iter().filter(|s| !s.terminal) {
            let out = self.transitions.get(&s.name).ok_or_else(|| ConfigError::MissingTransitions(s.name.clone()))?;
            check_distribution(&s.name, out, &names)?;
        }
        let a = &self.adherence;
        let weights = [("on_time", a.on_time), ("early", a.early), ("late", a.late), ("dropout", a.dropout)];
        for (name, p) in weights {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError::BadProbability { context: format!("adherence.{name}"), p });
            }
        }
        let sum: f64 = weights.iter().map(|w| w.1).sum();
        if (sum - 1.0).abs() > TOLERANCE {
            return Err(ConfigError::ProbabilitySum { context: "adherence".into(), sum });
        }
        check_interval("adherence.early_interval_days", a.early_interval_days)?;
        check_interval("adherence.late_extra_days", a.late_extra_days)?;
        if !(0.0..1.0).contains(&self.exit_hazard_per_year) {
            return Err(ConfigError::BadHazard);
        }
        Ok(())
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.states.iter().position(|s| s.name == name)
    }
}

impl CohortConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.model.validate()?;
        if self.window.end <= self.window.start {
            return Err(ConfigError::EmptyWindow);
        }
        let e = &self.entry_age;
        if e.min_years > e.max_years || !(0.0..=1.0).contains(&e.p_min) {
            return Err(ConfigError::BadEntryAge);
        }
        if self.labs.is_empty() || self.regions.is_empty() {
            return Err(ConfigError::NoLabsOrRegions);
        }
        if let Some(bad) = self.labs.iter().find(|l| !is_valid_lab_nr(l)) {
            return Err(ConfigError::BadLab(bad.clone()));
        }
        Ok(())
    }

    pub fn from_toml_str(s: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(s).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// A synthetic screening program loosely shaped like a cytology-first
    /// triage: normal cytology returns in three to four years, abnormal or
    /// HPV-positive results within a year. The probabilities are illustrative.
    pub fn screening(n_entities: u64, seed: u64) -> Self {
        let state = |name: &str, exam: &str, diag: &str, interval: (u32, u32)| TriageState {
            name: name.into(),
            exam_type: exam.into(),
            diagnosis: diag.into(),
            stages: Vec::new(),
            interval_days: Some(interval),
            terminal: false,
            censors: false,
        };
        let t = Transition::new;
        let transitions = BTreeMap::from([
            (
                "CYT_NORMAL".to_string(),
                vec![
                    t("CYT_NORMAL", 0.882),
                    t("CYT_ASCUS_LSIL", 0.05),
                    t("CYT_UNSAT", 0.02),
                    t("HPV_POS", 0.03),
                    t("HPV_NEG", 0.015),
                    t("HISTOLOGY_POLYP", 0.0029),
                    t("CANCER", 0.0001),
                ],
            ),
            ("CYT_UNSAT".to_string(), vec![t("CYT_NORMAL", 0.85), t("CYT_UNSAT", 0.05), t("CYT_ASCUS_LSIL", 0.1)]),
            ("CYT_ASCUS_LSIL".to_string(), vec![t("HPV_POS", 0.4), t("HPV_NEG", 0.6)]),
            (
                "HPV_POS".to_string(),
                vec![t("CYT_NORMAL", 0.6), t("HPV_POS", 0.25), t("HISTOLOGY_POLYP", 0.14), t("CANCER", 0.01)],
            ),
            ("HPV_NEG".to_string(), vec![t("CYT_NORMAL", 1.0)]),
            ("HISTOLOGY_POLYP".to_string(), vec![t("CYT_NORMAL", 1.0)]),
        ]);
        Self {
            n_entities,
            seed,
            entry_age: EntryAge { min_years: 25, max_years: 60, p_min: 0.7 },
            window: StudyWindow {
                start: NaiveDate::from_ymd_opt(1992, 1, 1).unwrap(),
                end: NaiveDate::from_ymd_opt(2014, 12, 31).unwrap(),
            },
            labs: vec!["10101".into(), "20202".into(), "30303".into(), "40404".into()],
            regions: vec!["1".into(), "2".into(), "3".into(), "4".into(), "5".into()],
            model: TriageModel {
                states: vec![
                    state("CYT_NORMAL", "CYT", "11", (1095, 1460)),
                    state("CYT_UNSAT", "CYT", "10", (60, 120)),
                    state("CYT_ASCUS_LSIL", "CYT", "20", (180, 365)),
                    state("HPV_POS", "HPV", "0", (180, 365)),
                    state("HPV_NEG", "HPV", "1", (1095, 1460)),
                    state("HISTOLOGY_POLYP", "HIST", "30", (180, 365)),
                    TriageState {
                        stages: vec!["1".into(), "2".into(), "3".into(), "4".into()],
                        interval_days: None,
                        terminal: true,
                        censors: true,
                        ..state("CANCER", "HIST", "99", (1, 1))
                    },
                ],
                initial: vec![t("CYT_NORMAL", 0.9), t("CYT_UNSAT", 0.03), t("CYT_ASCUS_LSIL", 0.07)],
                transitions,
                adherence: Adherence {
                    on_time: 0.80,
                    early: 0.05,
                    late: 0.12,
                    dropout: 0.03,
                    early_interval_days: (7, 60),
                    late_extra_days: (1, 1095),
                },
                exit_hazard_per_year: 0.005,
            },
        }
    }
}
