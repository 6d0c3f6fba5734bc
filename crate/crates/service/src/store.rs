//! Durable case storage.
//!
//! Two JSON Lines journals live in the store directory: `cases.jsonl` holds
//! one line per created case and `outcomes.jsonl` one line per completed
//! (or failed) task run. Every append is fsynced before it is acknowledged.
//! On open both journals are replayed into an in-memory index; a torn final
//! line left by a crash is cut off, any other unreadable line is an error.

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Utc};
use hygieia_core::domain::{DiagnosisOutcome, ReasoningTrace, TaskKind, VerificationRun};
use hygieia_core::PatientCase;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const CASES_JOURNAL: &str = "cases.jsonl";
pub const OUTCOMES_JOURNAL: &str = "outcomes.jsonl";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("store I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path} line {line} is corrupt: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
    #[error("case {0} already exists")]
    Duplicate(String),
    #[error("case {0} not found")]
    UnknownCase(String),
}

/// What one task run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum OutcomeResult {
    Diagnosis { outcome: DiagnosisOutcome },
    Verification { run: VerificationRun },
    /// The run failed; whatever was traced before the failure is kept.
    Failed {
        error: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        raw: Option<String>,
        trace: ReasoningTrace,
    },
}

impl OutcomeResult {
    pub fn trace(&self) -> &ReasoningTrace {
        match self {
            OutcomeResult::Diagnosis { outcome } => &outcome.trace,
            OutcomeResult::Verification { run } => &run.trace,
            OutcomeResult::Failed { trace, .. } => trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeEntry {
    pub index: usize,
    pub task: TaskKind,
    pub result: OutcomeResult,
    pub completed_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredCase {
    pub case: PatientCase,
    pub created_at: DateTime<Utc>,
    pub outcomes: Vec<OutcomeEntry>,
}

#[derive(Serialize, Deserialize)]
struct CaseLine {
    case: PatientCase,
    created_at: DateTime<Utc>,
}

#[derive(Serialize, Deserialize)]
struct OutcomeLine {
    case_id: String,
    #[serde(flatten)]
    entry: OutcomeEntry,
}

/// Single-writer append handle on one journal file.
#[derive(Debug)]
struct Journal {
    path: PathBuf,
    file: File,
}

impl Journal {
    /// Replays `path` and opens it for appending.
    fn open<T: DeserializeOwned>(path: PathBuf) -> Result<(Self, Vec<T>), StoreError> {
        let io_err = |source| StoreError::Io { path: path.clone(), source };
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_err(e)),
        };
        let mut items = Vec::new();
        let mut good_len = 0usize;
        let mut offset = 0usize;
        let mut line_no = 0usize;
        while offset < bytes.len() {
            line_no += 1;
            let (line, next, terminated) = match bytes[offset..].iter().position(|b| *b == b'\n') {
                Some(p) => (&bytes[offset..offset + p], offset + p + 1, true),
                None => (&bytes[offset..], bytes.len(), false),
            };
            if line.iter().all(u8::is_ascii_whitespace) {
                offset = next;
                good_len = next;
                continue;
            }
            // Lines are written with their newline in one call, so an
            // unterminated line was never acknowledged.
            if !terminated {
                tracing::warn!(path = %path.display(), line = line_no, "dropping torn journal tail");
                break;
            }
            let item = serde_json::from_slice::<T>(line).map_err(|e| StoreError::Corrupt {
                path: path.clone(),
                line: line_no,
                message: e.to_string(),
            })?;
            items.push(item);
            good_len = next;
            offset = next;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err)?;
        if good_len < bytes.len() {
            file.set_len(good_len as u64).map_err(io_err)?;
            file.sync_all().map_err(io_err)?;
        }
        Ok((Self { path, file }, items))
    }

    fn append<T: Serialize>(&mut self, item: &T) -> Result<(), StoreError> {
        let mut line = serde_json::to_vec(item).expect("journal entry serializes");
        line.push(b'\n');
        let path = &self.path;
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|source| StoreError::Io { path: path.clone(), source })
    }

    fn sync(&self) -> Result<(), StoreError> {
        self.file.sync_all().map_err(|source| StoreError::Io {
            path: self.path.clone(),
            source,
        })
    }
}

/// Journal-backed case store with an in-memory index.
#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    cases_journal: Journal,
    outcomes_journal: Journal,
    cases: HashMap<String, StoredCase>,
    order: Vec<String>,
    next_id: u64,
}

impl Store {
    pub fn open(dir: &Path) -> Result<Self, StoreError> {
        fs::create_dir_all(dir).map_err(|source| StoreError::Io { path: dir.to_path_buf(), source })?;
        let (cases_journal, case_lines) = Journal::open::<CaseLine>(dir.join(CASES_JOURNAL))?;
        let (outcomes_journal, outcome_lines) = Journal::open::<OutcomeLine>(dir.join(OUTCOMES_JOURNAL))?;
        let mut cases = HashMap::new();
        let mut order = Vec::new();
        for (i, line) in case_lines.into_iter().enumerate() {
            let id = line.case.id.clone();
            if cases.contains_key(&id) {
                return Err(StoreError::Corrupt {
                    path: cases_journal.path.clone(),
                    line: i + 1,
                    message: format!("duplicate case id {id}"),
                });
            }
            order.push(id.clone());
            cases.insert(
                id,
                StoredCase {
                    case: line.case,
                    created_at: line.created_at,
                    outcomes: Vec::new(),
                },
            );
        }
        for (i, line) in outcome_lines.into_iter().enumerate() {
            let corrupt = |message: String| StoreError::Corrupt {
                path: outcomes_journal.path.clone(),
                line: i + 1,
                message,
            };
            let stored = cases
                .get_mut(&line.case_id)
                .ok_or_else(|| corrupt(format!("outcome for unknown case {}", line.case_id)))?;
            if line.entry.index != stored.outcomes.len() {
                return Err(corrupt(format!(
                    "outcome index {} out of sequence for case {}",
                    line.entry.index, line.case_id
                )));
            }
            stored.outcomes.push(line.entry);
        }
        let next_id = order.len() as u64 + 1;
        Ok(Self {
            dir: dir.to_path_buf(),
            cases_journal,
            outcomes_journal,
            cases,
            order,
            next_id,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// A fresh server-assigned id not used by any stored case.
    pub fn allocate_id(&mut self) -> String {
        loop {
            let id = format!("case-{:06}", self.next_id);
            self.next_id += 1;
            if !self.cases.contains_key(&id) {
                return id;
            }
        }
    }

    /// Persists a validated case. The case is durable once this returns.
    pub fn create(&mut self, case: PatientCase) -> Result<StoredCase, StoreError> {
        if self.cases.contains_key(&case.id) {
            return Err(StoreError::Duplicate(case.id));
        }
        let line = CaseLine {
            case,
            created_at: Utc::now(),
        };
        self.cases_journal.append(&line)?;
        let stored = StoredCase {
            case: line.case,
            created_at: line.created_at,
            outcomes: Vec::new(),
        };
        self.order.push(stored.case.id.clone());
        self.cases.insert(stored.case.id.clone(), stored.clone());
        Ok(stored)
    }

    pub fn get(&self, id: &str) -> Option<&StoredCase> {
        self.cases.get(id)
    }

    /// Cases in creation order.
    pub fn iter(&self) -> impl Iterator<Item = &StoredCase> {
        self.order.iter().filter_map(|id| self.cases.get(id))
    }

    /// Appends an outcome and returns its index within the case history.
    pub fn append_outcome(&mut self, case_id: &str, task: TaskKind, result: OutcomeResult) -> Result<usize, StoreError> {
        let index = self
            .cases
            .get(case_id)
            .ok_or_else(|| StoreError::UnknownCase(case_id.to_string()))?
            .outcomes
            .len();
        let line = OutcomeLine {
            case_id: case_id.to_string(),
            entry: OutcomeEntry {
                index,
                task,
                result,
                completed_at: Utc::now(),
            },
        };
        self.outcomes_journal.append(&line)?;
        self.cases
            .get_mut(case_id)
            .expect("checked above")
            .outcomes
            .push(line.entry);
        Ok(index)
    }

    /// Flushes both journals to disk.
    pub fn sync(&self) -> Result<(), StoreError> {
        self.cases_journal.sync()?;
        self.outcomes_journal.sync()
    }
}
