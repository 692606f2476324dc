use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use super::{is_valid_lab_nr, EventRecord};
use crate::calendar::{parse_date, YearMonth};

/// Maps record fields to header names in the input file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ColumnMapping {
    pub entity_id: String,
    pub birthdate: String,
    pub diagnosisdate: String,
    pub exam_type: String,
    pub diagnosis: String,
    pub stage: String,
    pub lab_nr: String,
    pub region: String,
    pub censordate: String,
}

impl Default for ColumnMapping {
    fn default() -> Self {
        Self {
            entity_id: "id".into(),
            birthdate: "birthdate".into(),
            diagnosisdate: "diagnosisdate".into(),
            exam_type: "type".into(),
            diagnosis: "diagnosis".into(),
            stage: "stage".into(),
            lab_nr: "lab_nr".into(),
            region: "region".into(),
            censordate: "censordate".into(),
        }
    }
}

impl ColumnMapping {
    pub fn from_toml_str(s: &str) -> Result<Self, SchemaError> {
        toml::from_str(s).map_err(|e| SchemaError::InvalidMapping(e.to_string()))
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SchemaError {
    #[error("input has no header row")]
    NoHeader,
    #[error("mandatory column `{0}` is missing from the header")]
    MissingColumn(String),
    #[error("invalid column mapping: {0}")]
    InvalidMapping(String),
    #[error("failed to read input: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed delimited text: {0}")]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowErrorKind {
    MissingField { field: &'static str },
    InvalidDate { field: &'static str, value: String },
    InvalidBirthdate { value: String },
    InvalidLabNr { value: String },
    DiagnosisBeforeBirth,
    CensorBeforeDiagnosis,
    Unreadable { message: String },
}

impl fmt::Display for RowErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::MissingField { field } => write!(f, "missing value for `{field}`"),
            Self::InvalidDate { field, value } => write!(f, "`{field}` is not a YYYY-MM-DD date: {value:?}"),
            Self::InvalidBirthdate { value } => write!(f, "birthdate is not YYYY-MM: {value:?}"),
            Self::InvalidLabNr { value } => write!(f, "lab_nr must be 5 digits: {value:?}"),
            Self::DiagnosisBeforeBirth => f.write_str("diagnosisdate precedes birthdate"),
            Self::CensorBeforeDiagnosis => {
                f.write_str("censordate precedes a diagnosisdate of the same entity")
            }
            Self::Unreadable { message } => write!(f, "unreadable row: {message}"),
        }
    }
}

/// A rejected input row. `line` is the 1-based physical line (the header is line 1).
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RowError {
    pub line: u64,
    #[serde(flatten)]
    pub kind: RowErrorKind,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.kind)
    }
}

#[derive(Debug, Default)]
pub struct ParseOutput {
    pub records: Vec<EventRecord>,
    pub errors: Vec<RowError>,
}

struct Columns {
    entity_id: usize,
    birthdate: usize,
    diagnosisdate: usize,
    exam_type: usize,
    diagnosis: usize,
    region: usize,
    stage: Option<usize>,
    lab_nr: Option<usize>,
    censordate: Option<usize>,
}

impl Columns {
    fn resolve(header: &csv::StringRecord, mapping: &ColumnMapping) -> Result<Self, SchemaError> {
        let index: HashMap<&str, usize> =
            header.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
        let required = |name: &str| {
            index.get(name).copied().ok_or_else(|| SchemaError::MissingColumn(name.to_string()))
        };
        let optional = |name: &str| index.get(name).copied();
        Ok(Self {
            entity_id: required(&mapping.entity_id)?,
            birthdate: required(&mapping.birthdate)?,
            diagnosisdate: required(&mapping.diagnosisdate)?,
            exam_type: required(&mapping.exam_type)?,
            diagnosis: required(&mapping.diagnosis)?,
            region: required(&mapping.region)?,
            stage: optional(&mapping.stage),
            lab_nr: optional(&mapping.lab_nr),
            censordate: optional(&mapping.censordate),
        })
    }
}

fn detect_delimiter(header_line: &str) -> u8 {
    if header_line.contains('\t') {
        b'\t'
    } else {
        b','
    }
}

/// Parse header-bearing `,` or tab delimited text into records.
///
/// Malformed rows are reported in [`ParseOutput::errors`] and skipped; only a
/// missing header or a missing mandatory column aborts the parse.
pub fn parse_records<R: Read>(source: R, mapping: &ColumnMapping) -> Result<ParseOutput, SchemaError> {
    let mut reader = BufReader::new(source);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    if first.trim().is_empty() {
        return Err(SchemaError::NoHeader);
    }
    let delimiter = detect_delimiter(&first);
    let mut csv = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(true)
        .has_headers(true)
        .from_reader(first.as_bytes().chain(reader));
    let columns = Columns::resolve(csv.headers()?, mapping)?;

    let mut out = ParseOutput::default();
    let mut lines = Vec::new();
    for row in csv.records() {
        match row {
            Ok(row) => {
                let line = row.position().map_or(0, |p| p.line());
                match parse_row(&row, &columns) {
                    Ok(record) => {
                        out.records.push(record);
                        lines.push(line);
                    }
                    Err(kind) => out.errors.push(RowError { line, kind }),
                }
            }
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.errors.push(RowError { line, kind: RowErrorKind::Unreadable { message: e.to_string() } });
            }
        }
    }

    reject_censor_violations(&mut out, lines);
    out.errors.sort_by_key(|e| e.line);
    Ok(out)
}

fn parse_row(row: &csv::StringRecord, cols: &Columns) -> Result<EventRecord, RowErrorKind> {
    let required = |idx: usize, field: &'static str| -> Result<&str, RowErrorKind> {
        match row.get(idx).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v),
            _ => Err(RowErrorKind::MissingField { field }),
        }
    };
    let optional = |idx: Option<usize>| -> Option<&str> {
        idx.and_then(|i| row.get(i)).map(str::trim).filter(|v| !v.is_empty())
    };
    let date = |value: &str, field: &'static str| {
        parse_date(value).ok_or_else(|| RowErrorKind::InvalidDate { field, value: value.to_string() })
    };

    let entity_id = required(cols.entity_id, "entity_id")?;
    let birth_raw = required(cols.birthdate, "birthdate")?;
    let birthdate: YearMonth = birth_raw
        .parse()
        .map_err(|_| RowErrorKind::InvalidBirthdate { value: birth_raw.to_string() })?;
    let diagnosisdate = date(required(cols.diagnosisdate, "diagnosisdate")?, "diagnosisdate")?;
    let exam_type = required(cols.exam_type, "exam_type")?;
    let diagnosis = required(cols.diagnosis, "diagnosis")?;
    let region = required(cols.region, "region")?;
    let lab_nr = optional(cols.lab_nr);
    if let Some(lab) = lab_nr {
        if !is_valid_lab_nr(lab) {
            return Err(RowErrorKind::InvalidLabNr { value: lab.to_string() });
        }
    }
    let censordate = optional(cols.censordate).map(|v| date(v, "censordate")).transpose()?;
    if YearMonth::of(diagnosisdate) < birthdate {
        return Err(RowErrorKind::DiagnosisBeforeBirth);
    }

    Ok(EventRecord {
        entity_id: entity_id.to_string(),
        birthdate,
        diagnosisdate,
        exam_type: exam_type.to_string(),
        diagnosis: diagnosis.to_string(),
        stage: optional(cols.stage).map(str::to_string),
        lab_nr: lab_nr.map(str::to_string),
        region: region.to_string(),
        censordate,
    })
}

/// Drops rows whose censordate precedes the latest diagnosisdate of their entity.
/// Dropping only lowers that maximum, so the survivors stay consistent.
fn reject_censor_violations(out: &mut ParseOutput, lines: Vec<u64>) {
    let mut latest: HashMap<&str, chrono::NaiveDate> = HashMap::new();
    for r in &out.records {
        latest
            .entry(r.entity_id.as_str())
            .and_modify(|d| *d = (*d).max(r.diagnosisdate))
            .or_insert(r.diagnosisdate);
    }
    let bad: Vec<bool> = out
        .records
        .iter()
        .map(|r| r.censordate.is_some_and(|c| c < latest[r.entity_id.as_str()]))
        .collect();
    if !bad.contains(&true) {
        return;
    }
    let records = std::mem::take(&mut out.records);
    for ((record, line), bad) in records.into_iter().zip(lines).zip(bad) {
        if bad {
            out.errors.push(RowError { line, kind: RowErrorKind::CensorBeforeDiagnosis });
        } else {
            out.records.push(record);
        }
    }
}

/// Write records as comma-delimited text using the default column names.
pub fn write_records<W: Write>(records: &[EventRecord], writer: W) -> Result<(), csv::Error> {
    let m = ColumnMapping::default();
    let mut w = csv::WriterBuilder::new().from_writer(writer);
    w.write_record([
        &m.entity_id,
        &m.birthdate,
        &m.diagnosisdate,
        &m.exam_type,
        &m.diagnosis,
        &m.stage,
        &m.lab_nr,
        &m.region,
        &m.censordate,
    ])?;
    for r in records {
        w.write_record([
            r.entity_id.as_str(),
            &r.birthdate.to_string(),
            &r.diagnosisdate.format("%Y-%m-%d").to_string(),
            &r.exam_type,
            &r.diagnosis,
            r.stage.as_deref().unwrap_or(""),
            r.lab_nr.as_deref().unwrap_or(""),
            &r.region,
            &r.censordate.map(|d| d.format("%Y-%m-%d").to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
