//! The closed set of attributes that queries may constrain.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Attribute {
    ExamType,
    Diagnosis,
    Stage,
    LabNr,
    Region,
    AgeDays,
    Date,
    ElapsedDays,
    Hop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttributeKind {
    Categorical,
    Integer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    Node,
    Edge,
}

impl Attribute {
    pub const ALL: [Attribute; 9] = [
        Attribute::ExamType,
        Attribute::Diagnosis,
        Attribute::Stage,
        Attribute::LabNr,
        Attribute::Region,
        Attribute::AgeDays,
        Attribute::Date,
        Attribute::ElapsedDays,
        Attribute::Hop,
    ];

    /// Categorical node attributes, in dictionary slot order.
    pub const CATEGORICAL: [Attribute; 5] = [
        Attribute::ExamType,
        Attribute::Diagnosis,
        Attribute::Stage,
        Attribute::LabNr,
        Attribute::Region,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Attribute::ExamType => "exam_type",
            Attribute::Diagnosis => "diagnosis",
            Attribute::Stage => "stage",
            Attribute::LabNr => "lab_nr",
            Attribute::Region => "region",
            Attribute::AgeDays => "age_days",
            Attribute::Date => "date",
            Attribute::ElapsedDays => "elapsed_days",
            Attribute::Hop => "hop",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == name)
    }

    pub fn kind(self) -> AttributeKind {
        if self.slot().is_some() {
            AttributeKind::Categorical
        } else {
            AttributeKind::Integer
        }
    }

    pub fn scope(self) -> Scope {
        match self {
            Attribute::ElapsedDays | Attribute::Hop => Scope::Edge,
            _ => Scope::Node,
        }
    }

    /// Index into per-node code arrays for categorical attributes.
    pub fn slot(self) -> Option<usize> {
        Self::CATEGORICAL.iter().position(|&a| a == self)
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for a in Attribute::ALL {
            assert_eq!(Attribute::from_name(a.name()), Some(a));
        }
        assert_eq!(Attribute::from_name("type"), None);
    }

    #[test]
    fn kinds_and_scopes() {
        assert_eq!(Attribute::Diagnosis.kind(), AttributeKind::Categorical);
        assert_eq!(Attribute::Date.kind(), AttributeKind::Integer);
        assert_eq!(Attribute::Hop.scope(), Scope::Edge);
        assert_eq!(Attribute::Region.slot(), Some(4));
    }
}
