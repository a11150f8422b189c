//! Moderation queue with a durable, append-only journal.
//!
//! Every state change is an [`Event`] appended to `journal.jsonl` and synced
//! before the change becomes visible. `snapshot.json` periodically records the
//! full state and the number of journal events it covers; opening a store loads
//! the snapshot and replays the rest of the journal.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use modlens_core::text::Reason;
use serde::{Deserialize, Serialize};

pub const JOURNAL: &str = "journal.jsonl";
pub const SNAPSHOT: &str = "snapshot.json";

/// A highlighted run of tokens with its character range in the text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct HighlightSpan {
    pub start_token: usize,
    /// Inclusive.
    pub end_token: usize,
    /// Character offset of the first highlighted character.
    pub start: usize,
    /// Character offset one past the last highlighted character.
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pending,
    Approved,
    Blocked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Action {
    Approve,
    Block,
}

impl Action {
    pub fn status(self) -> Status {
        match self {
            Action::Approve => Status::Approved,
            Action::Block => Status::Blocked,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueueEntry {
    pub id: String,
    pub text: String,
    pub probability: f64,
    pub spans: Vec<HighlightSpan>,
    pub status: Status,
    pub reason: Option<Reason>,
    pub decided_by: Option<String>,
    pub decided_at: Option<u64>,
    pub ingested_at: u64,
    /// Ingest order, used to break probability ties.
    pub seq: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub id: String,
    pub action: Action,
    pub reason: Option<Reason>,
    pub decided_by: Option<String>,
    pub at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "lowercase")]
pub enum Event {
    Ingest { entry: QueueEntry },
    Decision(Decision),
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("comment `{0}` already exists")]
    Duplicate(String),
    #[error("no comment `{0}`")]
    NotFound(String),
    #[error("comment `{id}` is already {status:?}")]
    AlreadyDecided { id: String, status: Status },
    #[error("blocking requires a reason")]
    MissingReason,
    #[error("only blocking takes a reason")]
    UnexpectedReason,
    #[error("comment text is empty")]
    EmptyText,
    #[error("probability {0} outside [0, 1]")]
    BadProbability(f64),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QueueQuery {
    pub limit: Option<usize>,
    pub min_probability: Option<f64>,
    pub status: Option<Status>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Snapshot {
    events: u64,
    entries: Vec<QueueEntry>,
}

struct Journal {
    dir: PathBuf,
    file: File,
    snapshot_every: usize,
    since_snapshot: usize,
}

/// Queue state, optionally backed by a journal directory.
#[derive(Default)]
pub struct Store {
    entries: HashMap<String, QueueEntry>,
    order: Vec<String>,
    events: u64,
    journal: Option<Journal>,
}

impl std::fmt::Debug for Store {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Store").field("entries", &self.entries.len()).field("events", &self.events).finish()
    }
}

impl Store {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        Store::default()
    }

    /// Opens (or creates) the store in `dir`, replaying its journal. A final
    /// line cut short by a crash is discarded.
    pub fn open(dir: &Path, snapshot_every: usize) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let mut store = Store::default();
        let snap_path = dir.join(SNAPSHOT);
        if snap_path.exists() {
            let text = std::fs::read_to_string(&snap_path).map_err(io_err(&snap_path))?;
            let snap: Snapshot = serde_json::from_str(&text)
                .map_err(|e| StoreError::Corrupt { path: snap_path.clone(), line: 1, message: e.to_string() })?;
            for entry in snap.entries {
                store.order.push(entry.id.clone());
                store.entries.insert(entry.id.clone(), entry);
            }
            store.events = snap.events;
        }
        let covered = store.events;

        let journal_path = dir.join(JOURNAL);
        let mut valid_len = 0u64;
        if journal_path.exists() {
            let file = File::open(&journal_path).map_err(io_err(&journal_path))?;
            let mut reader = BufReader::new(file);
            let (mut line_no, mut seen) = (0usize, 0u64);
            loop {
                let mut line = String::new();
                let n = reader.read_line(&mut line).map_err(io_err(&journal_path))?;
                if n == 0 {
                    break;
                }
                line_no += 1;
                if !line.ends_with('\n') {
                    // Torn final write: never acknowledged, so drop it.
                    break;
                }
                let event: Event = serde_json::from_str(line.trim_end())
                    .map_err(|e| StoreError::Corrupt { path: journal_path.clone(), line: line_no, message: e.to_string() })?;
                valid_len += n as u64;
                seen += 1;
                if seen > covered {
                    store.apply(&event).map_err(|e| StoreError::Corrupt {
                        path: journal_path.clone(),
                        line: line_no,
                        message: e.to_string(),
                    })?;
                }
            }
            if seen < covered {
                return Err(StoreError::Corrupt {
                    path: journal_path.clone(),
                    line: line_no,
                    message: format!("journal holds {seen} events but the snapshot covers {covered}"),
                });
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(&journal_path).map_err(io_err(&journal_path))?;
        file.set_len(valid_len).map_err(io_err(&journal_path))?;
        store.journal = Some(Journal { dir: dir.to_path_buf(), file, snapshot_every, since_snapshot: 0 });
        Ok(store)
    }

    /// Applies an event to the in-memory state without journaling it.
    pub fn apply(&mut self, event: &Event) -> Result<(), StoreError> {
        match event {
            Event::Ingest { entry } => {
                check_entry(entry)?;
                if self.entries.contains_key(&entry.id) {
                    return Err(StoreError::Duplicate(entry.id.clone()));
                }
                self.order.push(entry.id.clone());
                self.entries.insert(entry.id.clone(), entry.clone());
            }
            Event::Decision(d) => {
                check_decision(self.entries.get(&d.id), d)?;
                let entry = self.entries.get_mut(&d.id).expect("checked above");
                entry.status = d.action.status();
                entry.reason = d.reason;
                entry.decided_by = d.decided_by.clone();
                entry.decided_at = Some(d.at);
            }
        }
        self.events += 1;
        Ok(())
    }

    /// Rebuilds a store from a sequence of events.
    pub fn replay<'a>(events: impl IntoIterator<Item = &'a Event>) -> Result<Self, StoreError> {
        let mut store = Store::in_memory();
        for e in events {
            store.apply(e)?;
        }
        Ok(store)
    }

    fn commit(&mut self, event: Event) -> Result<(), StoreError> {
        // Validate first so nothing invalid reaches the journal.
        match &event {
            Event::Ingest { entry } => {
                check_entry(entry)?;
                if self.entries.contains_key(&entry.id) {
                    return Err(StoreError::Duplicate(entry.id.clone()));
                }
            }
            Event::Decision(d) => check_decision(self.entries.get(&d.id), d)?,
        }
        if let Some(j) = self.journal.as_mut() {
            let path = j.dir.join(JOURNAL);
            let mut line = serde_json::to_vec(&event).expect("event serializes");
            line.push(b'\n');
            let before = j.file.metadata().map_err(io_err(&path))?.len();
            if let Err(e) = j.file.write_all(&line).and_then(|_| j.file.sync_data()) {
                // Drop a partial line so later appends stay parseable.
                let _ = j.file.set_len(before);
                return Err(StoreError::Io { path, source: e });
            }
        }
        self.apply(&event)?;
        let due = self.journal.as_mut().is_some_and(|j| {
            j.since_snapshot += 1;
            j.snapshot_every > 0 && j.since_snapshot >= j.snapshot_every
        });
        if due {
            self.snapshot()?;
        }
        Ok(())
    }

    /// Adds a pending entry.
    pub fn ingest(&mut self, entry: QueueEntry) -> Result<QueueEntry, StoreError> {
        let id = entry.id.clone();
        self.commit(Event::Ingest { entry })?;
        Ok(self.entries[&id].clone())
    }

    /// Records a moderator decision. Repeating the decision already taken
    /// returns the entry unchanged and writes nothing; returns whether a new
    /// decision was recorded.
    pub fn decide(
        &mut self,
        id: &str,
        action: Action,
        reason: Option<Reason>,
        decided_by: Option<String>,
        at: u64,
    ) -> Result<(QueueEntry, bool), StoreError> {
        let entry = self.entries.get(id).ok_or_else(|| StoreError::NotFound(id.to_string()))?;
        if entry.status == action.status() {
            return Ok((entry.clone(), false));
        }
        self.commit(Event::Decision(Decision { id: id.to_string(), action, reason, decided_by, at }))?;
        Ok((self.entries[id].clone(), true))
    }

    /// Writes the current state to the snapshot file (atomically replaced).
    pub fn snapshot(&mut self) -> Result<(), StoreError> {
        let Some(j) = self.journal.as_mut() else { return Ok(()) };
        let snap = Snapshot { events: self.events, entries: self.order.iter().map(|id| self.entries[id].clone()).collect() };
        let path = j.dir.join(SNAPSHOT);
        let tmp = j.dir.join(format!("{SNAPSHOT}.tmp"));
        let mut f = File::create(&tmp).map_err(io_err(&tmp))?;
        f.write_all(&serde_json::to_vec(&snap).expect("snapshot serializes")).map_err(io_err(&tmp))?;
        f.sync_all().map_err(io_err(&tmp))?;
        std::fs::rename(&tmp, &path).map_err(io_err(&path))?;
        j.since_snapshot = 0;
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&QueueEntry> {
        self.entries.get(id)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Number of events applied so far.
    pub fn events(&self) -> u64 {
        self.events
    }

    /// Next ingest sequence number.
    pub fn next_seq(&self) -> u64 {
        self.order.len() as u64
    }

    /// Entries in ingest order.
    pub fn entries(&self) -> impl Iterator<Item = &QueueEntry> {
        self.order.iter().map(|id| &self.entries[id])
    }

    /// Entries by descending probability, ties in ingest order.
    pub fn queue(&self, q: &QueueQuery) -> Vec<QueueEntry> {
        let mut out: Vec<&QueueEntry> = self
            .entries()
            .filter(|e| q.min_probability.map_or(true, |m| e.probability >= m))
            .filter(|e| q.status.map_or(true, |s| e.status == s))
            .collect();
        out.sort_by(|a, b| b.probability.total_cmp(&a.probability).then(a.seq.cmp(&b.seq)));
        out.into_iter().take(q.limit.unwrap_or(usize::MAX)).cloned().collect()
    }
}

fn check_entry(entry: &QueueEntry) -> Result<(), StoreError> {
    if entry.text.trim().is_empty() {
        return Err(StoreError::EmptyText);
    }
    if !(0.0..=1.0).contains(&entry.probability) {
        return Err(StoreError::BadProbability(entry.probability));
    }
    if entry.status != Status::Pending {
        return Err(StoreError::AlreadyDecided { id: entry.id.clone(), status: entry.status });
    }
    Ok(())
}

fn check_decision(entry: Option<&QueueEntry>, d: &Decision) -> Result<(), StoreError> {
    let entry = entry.ok_or_else(|| StoreError::NotFound(d.id.clone()))?;
    if entry.status != Status::Pending {
        return Err(StoreError::AlreadyDecided { id: d.id.clone(), status: entry.status });
    }
    match (d.action, d.reason) {
        (Action::Block, None) => Err(StoreError::MissingReason),
        (Action::Approve, Some(_)) => Err(StoreError::UnexpectedReason),
        _ => Ok(()),
    }
}
