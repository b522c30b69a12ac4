//! Human annotation actions and their JSON-lines log.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundingBox;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Fold1,
    Fold2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationKind {
    Add,
    Remove,
    AcceptAll,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Operation {
    Add {
        #[serde(rename = "box")]
        bbox: BoundingBox,
        category_id: u32,
    },
    /// Removes the working box at `target_ref` (its slot index on the image).
    Remove { target_ref: usize },
    /// Marks the image as verified and done.
    AcceptAll,
}

impl Operation {
    pub fn kind(&self) -> OperationKind {
        match self {
            Operation::Add { .. } => OperationKind::Add,
            Operation::Remove { .. } => OperationKind::Remove,
            Operation::AcceptAll => OperationKind::AcceptAll,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationEvent {
    /// Epoch milliseconds.
    pub ts_ms: i64,
    pub session_id: String,
    pub image_id: u64,
    #[serde(flatten)]
    pub op: Operation,
    pub stage_tag: StageTag,
}

impl OperationEvent {
    pub fn kind(&self) -> OperationKind {
        self.op.kind()
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).expect("event serializes")
    }
}

/// Renders events as JSON lines, one per event, each terminated by `\n`.
pub fn to_jsonl(events: &[OperationEvent]) -> String {
    let mut out = String::new();
    for e in events {
        out.push_str(&e.to_line());
        out.push('\n');
    }
    out
}

pub fn parse_jsonl(text: &str) -> Result<Vec<OperationEvent>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                location: format!("event log line {}", n + 1),
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl(path: &Path) -> Result<Vec<OperationEvent>> {
    match fs::read_to_string(path) {
        Ok(text) => parse_jsonl(&text),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

pub fn append_jsonl(path: &Path, events: &[OperationEvent]) -> Result<()> {
    if events.is_empty() {
        return Ok(());
    }
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    f.write_all(to_jsonl(events).as_bytes())
        .and_then(|_| f.sync_data())
        .map_err(|e| Error::io(path, e))
}
