use chrono::{Datelike, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::EventRecord;
use crate::calendar::YearMonth;

/// Date perturbation settings: every date is moved to `snap_day` of its month and
/// each entity's months are shifted by one offset drawn from
/// `[-max_shift_months, +max_shift_months]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnonymizationConfig {
    pub seed: u64,
    pub max_shift_months: u32,
    pub snap_day: u32,
}

impl Default for AnonymizationConfig {
    fn default() -> Self {
        Self { seed: 0, max_shift_months: 4, snap_day: 15 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ConfigError {
    #[error("snap_day must be within 1..=28, got {0}")]
    SnapDay(u32),
}

impl AnonymizationConfig {
    pub fn with_seed(seed: u64) -> Self {
        Self { seed, ..Self::default() }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(1..=28).contains(&self.snap_day) {
            return Err(ConfigError::SnapDay(self.snap_day));
        }
        Ok(())
    }
}

/// The month shift applied to every date of `entity_id`.
///
/// Derived from a hash of `(seed, entity_id)` so that any partition of the input
/// yields the same offsets.
pub fn month_offset(cfg: &AnonymizationConfig, entity_id: &str) -> i64 {
    let mut hasher = Sha256::new();
    hasher.update(cfg.seed.to_le_bytes());
    hasher.update(entity_id.as_bytes());
    let digest: [u8; 32] = hasher.finalize().into();
    let mut rng = ChaCha8Rng::from_seed(digest);
    let m = cfg.max_shift_months as i64;
    rng.gen_range(-m..=m)
}

fn shift(date: NaiveDate, months: i64, snap_day: u32) -> NaiveDate {
    YearMonth::of(date).add_months(months).on_day(snap_day)
}

/// Snap and shift every date. Non-date fields are untouched.
///
/// Panics if `cfg` fails [`AnonymizationConfig::validate`].
pub fn anonymize(records: &[EventRecord], cfg: &AnonymizationConfig) -> Vec<EventRecord> {
    cfg.validate().expect("invalid anonymization config");
    let mut cached: Option<(&str, i64)> = None;
    records
        .iter()
        .map(|r| {
            let offset = match cached {
                Some((id, off)) if id == r.entity_id => off,
                _ => {
                    let off = month_offset(cfg, &r.entity_id);
                    cached = Some((&r.entity_id, off));
                    off
                }
            };
            EventRecord {
                birthdate: r.birthdate.add_months(offset),
                diagnosisdate: shift(r.diagnosisdate, offset, cfg.snap_day),
                censordate: r.censordate.map(|d| shift(d, offset, cfg.snap_day)),
                ..r.clone()
            }
        })
        .collect()
}

/// Month distance between two dates, ignoring the day.
pub fn months_between(a: NaiveDate, b: NaiveDate) -> i64 {
    (b.year() as i64 * 12 + b.month() as i64) - (a.year() as i64 * 12 + a.month() as i64)
}
