use std::path::Path;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::domain::{validate_case, GeneFinding, PatientCase, TaskKind};

/// A benchmark case with its gold labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub case: PatientCase,
    pub gold_diseases: Vec<String>,
    pub gold_genes: Vec<String>,
}

impl EvalRecord {
    pub fn gold_for(&self, task: TaskKind) -> &[String] {
        match task {
            TaskKind::PrioritizeGenes => &self.gold_genes,
            _ => &self.gold_diseases,
        }
    }
}

/// Wire form of one dataset line.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DatasetLine {
    id: String,
    phenotypes: Vec<String>,
    #[serde(default)]
    genes: Option<Vec<GeneFinding>>,
    #[serde(default)]
    record_text: Option<String>,
    #[serde(default)]
    gold_diseases: Vec<String>,
    #[serde(default)]
    gold_genes: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LoadMode {
    /// The first bad line aborts the load.
    #[default]
    Strict,
    /// Bad lines are skipped and reported.
    Lenient,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedDataset {
    pub records: Vec<EvalRecord>,
    pub skipped: Vec<LineError>,
}

fn parse_line(line: &str, task: Option<TaskKind>) -> Result<EvalRecord, String> {
    let raw: DatasetLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
    let mut case = PatientCase::new(raw.id, raw.phenotypes);
    case.genes = raw.genes;
    case.record_text = raw.record_text;
    let case = validate_case(case).map_err(|e| e.to_string())?;
    let clean = |v: Vec<String>| -> Vec<String> {
        v.into_iter()
            .map(|s| s.trim().to_string())
            .filter(|s| !s.is_empty())
            .collect()
    };
    let record = EvalRecord {
        case,
        gold_diseases: clean(raw.gold_diseases),
        gold_genes: clean(raw.gold_genes),
    };
    let missing = match task {
        Some(t) => record.gold_for(t).is_empty(),
        None => record.gold_diseases.is_empty() && record.gold_genes.is_empty(),
    };
    if missing {
        return Err(match task {
            Some(TaskKind::PrioritizeGenes) => "record has no gold_genes".into(),
            Some(_) => "record has no gold_diseases".into(),
            None => "record has no gold labels".into(),
        });
    }
    Ok(record)
}

/// Parses JSON Lines text. When `task` is given each record needs gold
/// labels for that task, otherwise at least one gold label of either kind.
pub fn parse_dataset(text: &str, mode: LoadMode, task: Option<TaskKind>) -> Result<LoadedDataset, EvalError> {
    let mut out = LoadedDataset::default();
    let mut ids = std::collections::HashSet::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let result = parse_line(line, task).and_then(|r| {
            if ids.insert(r.case.id.clone()) {
                Ok(r)
            } else {
                Err(format!("duplicate case id {:?}", r.case.id))
            }
        });
        match result {
            Ok(r) => out.records.push(r),
            Err(message) => match mode {
                LoadMode::Strict => return Err(EvalError::Parse { line: i + 1, message }),
                LoadMode::Lenient => out.skipped.push(LineError { line: i + 1, message }),
            },
        }
    }
    Ok(out)
}

pub fn load_dataset(path: &Path, mode: LoadMode, task: Option<TaskKind>) -> Result<LoadedDataset, EvalError> {
    let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_dataset(&text, mode, task)
}
