use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use super::EvalError;

/// Which rule set a label is normalized with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelKind {
    Disease,
    Gene,
}

fn rule_pass(raw: &str, kind: LabelKind) -> String {
    let folded: String = raw.nfkc().flat_map(char::to_lowercase).collect();
    // Lowercasing can emit characters that compose differently.
    let folded: String = folded.nfkc().collect();
    let mut out = String::with_capacity(folded.len());
    let mut pending_space = false;
    for c in folded.chars() {
        if c.is_alphanumeric() {
            if pending_space && !out.is_empty() && kind == LabelKind::Disease {
                out.push(' ');
            }
            pending_space = false;
            out.push(c);
        } else {
            pending_space = true;
        }
    }
    out
}

/// Rule-based label normalization.
///
/// NFKC, lowercase, every non-alphanumeric character becomes a separator,
/// runs of separators collapse to one space and the ends are trimmed. Gene
/// labels drop the separators entirely.
pub fn normalize_label(raw: &str, kind: LabelKind) -> String {
    let once = rule_pass(raw, kind);
    // A handful of code points only reach a fixpoint after a second pass.
    let twice = rule_pass(&once, kind);
    if twice == once {
        once
    } else {
        rule_pass(&twice, kind)
    }
}

/// Exact-match synonym table applied after the rules.
///
/// Keys and values are rule-normalized on insertion and chains are resolved
/// eagerly, so lookups are a single step and normalization stays idempotent.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SynonymTable {
    entries: HashMap<(LabelKind, String), String>,
}

impl SynonymTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, EvalError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: AsRef<str>,
        B: AsRef<str>,
    {
        let mut raw: Vec<(String, String)> = Vec::new();
        for (a, b) in pairs {
            raw.push((a.as_ref().to_string(), b.as_ref().to_string()));
        }
        let mut table = Self::default();
        for kind in [LabelKind::Disease, LabelKind::Gene] {
            let map: HashMap<String, String> = raw
                .iter()
                .map(|(a, b)| (normalize_label(a, kind), normalize_label(b, kind)))
                .filter(|(a, b)| a != b && !a.is_empty())
                .collect();
            for start in map.keys() {
                let mut current = start.clone();
                let mut steps = 0;
                while let Some(next) = map.get(&current) {
                    current = next.clone();
                    steps += 1;
                    if steps > map.len() {
                        return Err(EvalError::SynonymCycle(start.clone()));
                    }
                }
                if &current != start {
                    table.entries.insert((kind, start.clone()), current);
                }
            }
        }
        Ok(table)
    }

    /// Reads a tab-separated `raw<TAB>canonical` file. Blank lines and lines
    /// starting with `#` are skipped.
    pub fn load(path: &Path) -> Result<Self, EvalError> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let (a, b) = line.split_once('\t').ok_or_else(|| EvalError::Parse {
                line: i + 1,
                message: "expected raw<TAB>canonical".into(),
            })?;
            pairs.push((a.to_string(), b.to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn lookup<'a>(&'a self, kind: LabelKind, normalized: &str) -> Option<&'a str> {
        self.entries
            .get(&(kind, normalized.to_string()))
            .map(String::as_str)
    }
}

/// Rule normalization plus an optional synonym table.
#[derive(Debug, Clone, Default)]
pub struct Normalizer {
    synonyms: Option<SynonymTable>,
}

impl Normalizer {
    pub fn new(synonyms: Option<SynonymTable>) -> Self {
        Self { synonyms }
    }

    pub fn normalize(&self, raw: &str, kind: LabelKind) -> String {
        let ruled = normalize_label(raw, kind);
        match self.synonyms.as_ref().and_then(|t| t.lookup(kind, &ruled)) {
            Some(canonical) => canonical.to_string(),
            None => ruled,
        }
    }
}
