//! Line-delimited JSON corpus files.
//!
//! One record per line: `{"id", "text", "label", "reasons", "gold_spans"?, "timestamp"}`,
//! with `label` one of `appropriate`/`inappropriate`, `reasons` drawn from
//! `insults`, `racism`, `profanity`, `spam`, and `gold_spans` the token indices
//! of the annotated rationale. Blank lines are skipped.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use modlens_core::text::{Comment, Label, Reason};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusRecord {
    pub id: String,
    pub text: String,
    pub label: Label,
    #[serde(default)]
    pub reasons: Vec<Reason>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_spans: Option<Vec<usize>>,
    #[serde(default)]
    pub timestamp: u64,
}

impl From<&Comment> for CorpusRecord {
    fn from(c: &Comment) -> Self {
        CorpusRecord {
            id: c.id.clone(),
            text: c.text.clone(),
            label: c.label,
            reasons: c.reasons.clone(),
            gold_spans: c.gold_spans.clone(),
            timestamp: c.timestamp,
        }
    }
}

impl CorpusRecord {
    pub fn into_comment(self) -> modlens_core::Result<Comment> {
        Comment::new(self.id, self.text, self.label, self.reasons, self.gold_spans, self.timestamp)
    }
}

/// Parses a corpus; errors name the offending line (1-based).
pub fn parse_corpus(reader: impl Read, path: &Path) -> Result<Vec<Comment>> {
    let mut out = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, line) in BufReader::new(reader).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |message: String| Error::Malformed { path: path.to_path_buf(), line: i + 1, message };
        let record: CorpusRecord = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        if !seen.insert(record.id.clone()) {
            return Err(malformed(format!("duplicate id `{}`", record.id)));
        }
        out.push(record.into_comment().map_err(|e| malformed(e.to_string()))?);
    }
    Ok(out)
}

pub fn read_corpus(path: &Path) -> Result<Vec<Comment>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    parse_corpus(file, path)
}

pub fn write_corpus(path: &Path, comments: &[Comment]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for c in comments {
        let line = serde_json::to_string(&CorpusRecord::from(c)).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Writes serializable records as JSON lines.
pub fn write_jsonl<T: Serialize>(path: &Path, records: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        let line = serde_json::to_string(&r).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
