//! Sparse categorical labels over window start indices.

mod augment;
mod simulate;
mod store;

pub use augment::{augment_between, augment_dilate, WindowGrid};
pub use simulate::simulate_manual_labels;
pub use store::{read_table_csv, write_table_csv, LabelStore, CSV_HEADER};

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Class index in `0..k`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EffortLabel(usize);

impl EffortLabel {
    pub fn new(value: usize, classes: usize) -> Result<Self> {
        if value < classes {
            Ok(Self(value))
        } else {
            Err(Error::UnknownClass(value))
        }
    }

    pub fn value(self) -> usize {
        self.0
    }
}

/// Display names for the `k` classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassNames(pub Vec<String>);

impl ClassNames {
    /// `Low/Medium/High` for three classes, `class0..` otherwise.
    pub fn default_for(classes: usize) -> Self {
        if classes == 3 {
            Self(vec!["Low".into(), "Medium".into(), "High".into()])
        } else {
            Self((0..classes).map(|c| format!("class{c}")).collect())
        }
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn name(&self, label: EffortLabel) -> &str {
        &self.0[label.0]
    }

    /// Accepts a display name (case-insensitive) or a numeric index.
    pub fn parse(&self, text: &str) -> Result<EffortLabel> {
        if let Some(i) = self.0.iter().position(|n| n.eq_ignore_ascii_case(text)) {
            return Ok(EffortLabel(i));
        }
        let value: usize = text
            .parse()
            .map_err(|_| Error::Config(format!("unknown label {text:?}")))?;
        EffortLabel::new(value, self.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LabelSource {
    Manual,
    BetweenFill,
    Dilation,
}

impl LabelSource {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Manual => "manual",
            Self::BetweenFill => "between-fill",
            Self::Dilation => "dilation",
        }
    }

    pub fn is_augmented(self) -> bool {
        self != Self::Manual
    }
}

impl std::str::FromStr for LabelSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "manual" => Ok(Self::Manual),
            "between-fill" => Ok(Self::BetweenFill),
            "dilation" => Ok(Self::Dilation),
            other => Err(Error::Schema(format!("unknown label source {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub clip_id: String,
    pub start_frame: usize,
    pub seq_len: usize,
    pub label: EffortLabel,
    pub source: LabelSource,
    pub created_at: DateTime<Utc>,
}

impl LabelRecord {
    pub fn manual(clip_id: impl Into<String>, start_frame: usize, seq_len: usize, label: EffortLabel) -> Self {
        Self {
            clip_id: clip_id.into(),
            start_frame,
            seq_len,
            label,
            source: LabelSource::Manual,
            created_at: Utc::now(),
        }
    }

    pub fn key(&self) -> (String, usize) {
        (self.clip_id.clone(), self.start_frame)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictPolicy {
    /// A manual label with a different value at a manual key is an error.
    #[default]
    Reject,
    /// The newer manual label replaces the older one.
    Overwrite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InsertOutcome {
    Inserted,
    Replaced,
    Unchanged,
}

/// At most one label per `(clip_id, start_frame)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelTable {
    seq_len: usize,
    classes: usize,
    pub policy: ConflictPolicy,
    records: BTreeMap<(String, usize), LabelRecord>,
}

impl LabelTable {
    pub fn new(seq_len: usize, classes: usize) -> Self {
        Self {
            seq_len,
            classes,
            policy: ConflictPolicy::Reject,
            records: BTreeMap::new(),
        }
    }

    pub fn seq_len(&self) -> usize {
        self.seq_len
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn get(&self, clip_id: &str, start_frame: usize) -> Option<&LabelRecord> {
        self.records.get(&(clip_id.to_string(), start_frame))
    }

    pub fn records(&self) -> impl Iterator<Item = &LabelRecord> {
        self.records.values()
    }

    pub fn records_in_clip<'a>(&'a self, clip_id: &'a str) -> impl Iterator<Item = &'a LabelRecord> {
        self.records
            .range((clip_id.to_string(), 0)..=(clip_id.to_string(), usize::MAX))
            .map(|(_, r)| r)
    }

    pub fn clip_ids(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self.records.keys().map(|(c, _)| c.as_str()).collect();
        ids.dedup();
        ids
    }

    pub fn count_by_source(&self, source: LabelSource) -> usize {
        self.records.values().filter(|r| r.source == source).count()
    }

    fn validate(&self, record: &LabelRecord) -> Result<()> {
        if record.seq_len != self.seq_len {
            return Err(Error::Precondition(format!(
                "record seq_len {} differs from table seq_len {}",
                record.seq_len, self.seq_len
            )));
        }
        if record.label.value() >= self.classes {
            return Err(Error::UnknownClass(record.label.value()));
        }
        Ok(())
    }

    /// Inserts under the precedence rules: manual beats augmented, augmented
    /// never replaces anything, and a differing manual label at a manual key
    /// follows `policy` (or `overwrite`).
    pub fn insert_with(&mut self, record: LabelRecord, overwrite: bool) -> Result<InsertOutcome> {
        self.validate(&record)?;
        let key = record.key();
        let Some(existing) = self.records.get(&key) else {
            self.records.insert(key, record);
            return Ok(InsertOutcome::Inserted);
        };
        if record.source.is_augmented() {
            return Ok(InsertOutcome::Unchanged);
        }
        if existing.source.is_augmented() {
            self.records.insert(key, record);
            return Ok(InsertOutcome::Replaced);
        }
        if existing.label == record.label {
            return Ok(InsertOutcome::Unchanged);
        }
        if overwrite || self.policy == ConflictPolicy::Overwrite {
            self.records.insert(key, record);
            Ok(InsertOutcome::Replaced)
        } else {
            Err(Error::Conflict {
                clip_id: record.clip_id,
                start_frame: record.start_frame,
                existing: existing.label.value(),
                new: record.label.value(),
            })
        }
    }

    pub fn insert(&mut self, record: LabelRecord) -> Result<InsertOutcome> {
        self.insert_with(record, false)
    }

    /// Snapshot-style insert: returns a new table, leaving `self` untouched.
    pub fn with_record(&self, record: LabelRecord) -> Result<LabelTable> {
        let mut next = self.clone();
        next.insert(record)?;
        Ok(next)
    }

    pub fn histogram(&self) -> ClassHistogram {
        class_histogram(self)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: Vec<usize>,
    pub total: usize,
    /// `None` for an empty table.
    pub fractions: Option<Vec<f64>>,
}

pub fn class_histogram(table: &LabelTable) -> ClassHistogram {
    let mut counts = vec![0usize; table.classes()];
    for r in table.records() {
        counts[r.label.value()] += 1;
    }
    let total = table.len();
    let fractions =
        (total > 0).then(|| counts.iter().map(|&c| c as f64 / total as f64).collect());
    ClassHistogram {
        counts,
        total,
        fractions,
    }
}
