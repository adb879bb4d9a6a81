//! Append-only label CSV.
//!
//! Header `clip_id,start_frame,seq_len,label,source,created_at`, UTF-8, LF
//! line endings, RFC 3339 timestamps. Loading replays rows through the
//! table's precedence rules, so a later manual row at an existing key is an
//! accepted overwrite.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::Deserialize;

use super::{EffortLabel, InsertOutcome, LabelRecord, LabelSource, LabelTable};
use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "clip_id,start_frame,seq_len,label,source,created_at";

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

pub fn record_to_csv_row(r: &LabelRecord) -> String {
    format!(
        "{},{},{},{},{},{}\n",
        csv_field(&r.clip_id),
        r.start_frame,
        r.seq_len,
        r.label.value(),
        r.source.as_str(),
        r.created_at.to_rfc3339_opts(SecondsFormat::AutoSi, true)
    )
}

/// Writes a full snapshot.
pub fn write_table_csv(table: &LabelTable, path: &Path) -> Result<()> {
    let mut out = String::with_capacity(64 * (table.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in table.records() {
        out.push_str(&record_to_csv_row(r));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Debug, Deserialize)]
struct Row {
    clip_id: String,
    start_frame: usize,
    seq_len: Option<usize>,
    label: usize,
    source: Option<String>,
    created_at: Option<String>,
}

/// Reads a label CSV. Legacy files without `source` (or `created_at`,
/// `seq_len`) are accepted: missing sources are manual, missing `seq_len`
/// uses the table's.
pub fn read_table_csv(path: &Path, seq_len: usize, classes: usize) -> Result<LabelTable> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_table_csv(&bytes, &path.display().to_string(), seq_len, classes)
}

pub(crate) fn parse_table_csv(bytes: &[u8], origin: &str, seq_len: usize, classes: usize) -> Result<LabelTable> {
    let mut table = LabelTable::new(seq_len, classes);
    let mut reader = csv::ReaderBuilder::new().from_reader(bytes);
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let loc = format!("{origin} row {}", i + 1);
        let row = row.map_err(|e| Error::parse(&loc, e.to_string()))?;
        let source = match row.source.as_deref() {
            None | Some("") => LabelSource::Manual,
            Some(s) => s.parse()?,
        };
        let created_at = match row.created_at.as_deref() {
            None | Some("") => DateTime::<Utc>::UNIX_EPOCH,
            Some(s) => DateTime::parse_from_rfc3339(s)
                .map_err(|e| Error::parse(&loc, format!("created_at: {e}")))?
                .with_timezone(&Utc),
        };
        let record = LabelRecord {
            clip_id: row.clip_id,
            start_frame: row.start_frame,
            seq_len: row.seq_len.unwrap_or(seq_len),
            label: EffortLabel::new(row.label, classes)?,
            source,
            created_at,
        };
        table.insert_with(record, true)?;
    }
    Ok(table)
}

/// In-memory table backed by an append-only CSV file. Callers serialize
/// writes (one writer).
#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    table: LabelTable,
}

impl LabelStore {
    /// Opens `path`, creating it with a header when absent.
    pub fn open(path: impl Into<PathBuf>, seq_len: usize, classes: usize) -> Result<Self> {
        let path = path.into();
        let table = if path.exists() {
            read_table_csv(&path, seq_len, classes)?
        } else {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            }
            fs::write(&path, format!("{CSV_HEADER}\n")).map_err(|e| Error::io(&path, e))?;
            LabelTable::new(seq_len, classes)
        };
        Ok(Self { path, table })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn table(&self) -> &LabelTable {
        &self.table
    }

    /// Applies `record` to the table and appends a CSV row when the table
    /// changed.
    pub fn save(&mut self, record: LabelRecord, overwrite: bool) -> Result<InsertOutcome> {
        let mut next = self.table.clone();
        let outcome = next.insert_with(record.clone(), overwrite)?;
        if outcome != InsertOutcome::Unchanged {
            let mut f: File = OpenOptions::new()
                .append(true)
                .open(&self.path)
                .map_err(|e| Error::io(&self.path, e))?;
            f.write_all(record_to_csv_row(&record).as_bytes())
                .map_err(|e| Error::io(&self.path, e))?;
            self.table = next;
        }
        Ok(outcome)
    }

    /// Appends every record of `table` that is not already stored.
    pub fn merge(&mut self, table: &LabelTable) -> Result<usize> {
        let mut added = 0;
        for r in table.records() {
            if self.save(r.clone(), false)? != InsertOutcome::Unchanged {
                added += 1;
            }
        }
        Ok(added)
    }
}
