//! Flat event records: delimited-text parsing, validation and date anonymization.

mod anonymize;
mod parse;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::calendar::YearMonth;

pub use anonymize::{anonymize, month_offset, months_between, AnonymizationConfig, ConfigError};
pub use parse::{
    parse_records, write_records, ColumnMapping, ParseOutput, RowError, RowErrorKind, SchemaError,
};

/// One exam or visit row.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventRecord {
    pub entity_id: String,
    pub birthdate: YearMonth,
    pub diagnosisdate: NaiveDate,
    pub exam_type: String,
    pub diagnosis: String,
    pub stage: Option<String>,
    pub lab_nr: Option<String>,
    pub region: String,
    pub censordate: Option<NaiveDate>,
}

/// True when `s` is exactly five ASCII decimal digits.
pub fn is_valid_lab_nr(s: &str) -> bool {
    s.len() == 5 && s.bytes().all(|b| b.is_ascii_digit())
}
