use std::collections::BTreeMap;
use std::fmt::Write as _;

use chrono::{DateTime, Utc};
use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};

use super::{mean_recall, recall_at_k_with, EvalError, EvalRecord, LabelKind, Normalizer};
use crate::domain::{PipelineConfig, ReasoningTrace, Route, TaskKind};
use crate::gateway::{AgentRole, UsageReport};
use crate::orchestrator::Orchestrator;

pub const SUPPORTED_KS: [usize; 3] = [1, 5, 10];

#[derive(Debug, Clone)]
pub struct BenchmarkOptions {
    pub dataset_name: String,
    pub ks: Vec<usize>,
    /// Cases evaluated concurrently; results keep dataset order.
    pub parallel: usize,
    /// Base sampling seed; case `i` runs with `seed + i`.
    pub seed: Option<u64>,
    pub normalizer: Normalizer,
}

impl Default for BenchmarkOptions {
    fn default() -> Self {
        Self {
            dataset_name: "dataset".into(),
            ks: SUPPORTED_KS.to_vec(),
            parallel: 1,
            seed: None,
            normalizer: Normalizer::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseHit {
    pub case_id: String,
    pub k: usize,
    pub hit: bool,
    /// Set when the case counted as a miss because it could not be scored.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub error: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub case_id: String,
    pub predictions: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_confidence: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Route>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub converged: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset_name: String,
    pub task: TaskKind,
    pub n_cases: usize,
    pub per_k: BTreeMap<usize, f64>,
    pub per_case_hits: Vec<CaseHit>,
    pub cases: Vec<CaseResult>,
    pub usage_totals: UsageReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub generated_at: DateTime<Utc>,
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, EvalError> {
        serde_json::from_str(text).map_err(|e| EvalError::InvalidReport(e.to_string()))
    }

    /// Copy with `generated_at` pinned to the Unix epoch, for comparisons.
    pub fn without_timestamp(&self) -> Self {
        Self {
            generated_at: DateTime::<Utc>::UNIX_EPOCH,
            ..self.clone()
        }
    }

    pub fn error_count(&self) -> usize {
        self.cases.iter().filter(|c| c.error.is_some()).count()
    }

    /// Plain-text summary table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "dataset: {}  task: {}  cases: {}  errors: {}",
            self.dataset_name,
            self.task.as_str(),
            self.n_cases,
            self.error_count()
        );
        let _ = writeln!(out, "{:<6}{:>10}", "K", "Recall");
        for (k, r) in &self.per_k {
            let _ = writeln!(out, "{:<6}{:>10.4}", k, r);
        }
        let total = self.usage_totals.total();
        let _ = writeln!(
            out,
            "calls: {}  prompt tokens: {}  completion tokens: {}",
            total.calls, total.prompt_tokens, total.completion_tokens
        );
        out
    }
}

fn role_of(name: &str) -> Option<AgentRole> {
    AgentRole::ALL.into_iter().find(|r| r.as_str() == name)
}

fn trace_usage(trace: &ReasoningTrace, into: &mut UsageReport) {
    for e in trace.exchanges() {
        if let Some(role) = role_of(&e.agent_role) {
            into.add(role, e.token_usage);
        }
    }
}

struct Scored {
    result: CaseResult,
    hits: Vec<CaseHit>,
    trace: ReasoningTrace,
}

async fn score_case(
    index: usize,
    record: &EvalRecord,
    task: TaskKind,
    config: &PipelineConfig,
    orchestrator: &Orchestrator,
    options: &BenchmarkOptions,
) -> Scored {
    let kind = if task == TaskKind::PrioritizeGenes {
        LabelKind::Gene
    } else {
        LabelKind::Disease
    };
    let mut config = config.clone();
    if let Some(seed) = options.seed {
        config.sampling_seed = Some(seed.wrapping_add(index as u64));
    }
    let case_id = record.case.id.clone();
    let miss = |error: String, trace: ReasoningTrace| Scored {
        hits: options
            .ks
            .iter()
            .map(|&k| CaseHit {
                case_id: case_id.clone(),
                k,
                hit: false,
                error: true,
            })
            .collect(),
        result: CaseResult {
            case_id: case_id.clone(),
            predictions: Vec::new(),
            final_confidence: None,
            route: None,
            converged: None,
            error: Some(error),
        },
        trace,
    };
    let run = match task {
        TaskKind::PrioritizeGenes => orchestrator.prioritize_genes(&record.case, &config).await,
        _ => orchestrator.diagnose(&record.case, &config).await,
    };
    let outcome = match run {
        Ok(o) => o,
        Err(failure) => return miss(failure.error.to_string(), failure.trace),
    };
    let predictions = outcome.labels();
    let mut hits = Vec::with_capacity(options.ks.len());
    for &k in &options.ks {
        match recall_at_k_with(&options.normalizer, &predictions, record.gold_for(task), k, kind) {
            Ok(hit) => hits.push(CaseHit {
                case_id: case_id.clone(),
                k,
                hit,
                error: false,
            }),
            Err(e) => return miss(e.to_string(), outcome.trace),
        }
    }
    Scored {
        result: CaseResult {
            case_id: case_id.clone(),
            predictions,
            final_confidence: Some(outcome.final_confidence),
            route: Some(outcome.route),
            converged: Some(outcome.converged),
            error: None,
        },
        hits,
        trace: outcome.trace,
    }
}

/// Runs the task pipeline on every record and computes Recall@K. Pipeline
/// failures and unscorable cases count as misses and are flagged.
pub async fn run_benchmark(
    records: &[EvalRecord],
    task: TaskKind,
    config: &PipelineConfig,
    orchestrator: &Orchestrator,
    options: &BenchmarkOptions,
) -> Result<EvalReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyDataset);
    }
    if task == TaskKind::VerifyDiagnosis {
        return Err(EvalError::UnsupportedTask(task.as_str().into()));
    }
    let mut ks = options.ks.clone();
    ks.sort_unstable();
    ks.dedup();
    if ks.is_empty() {
        return Err(EvalError::InvalidK(0));
    }
    if let Some(&bad) = ks.iter().find(|k| !SUPPORTED_KS.contains(k)) {
        return Err(EvalError::InvalidK(bad));
    }
    let options = BenchmarkOptions { ks, ..options.clone() };
    let mut config = config.clone();
    config.answer_top_k = *options.ks.last().unwrap_or(&1);

    let scored: Vec<Scored> = stream::iter(records.iter().enumerate())
        .map(|(i, r)| score_case(i, r, task, &config, orchestrator, &options))
        .buffered(options.parallel.max(1))
        .collect()
        .await;

    let mut usage_totals = UsageReport::default();
    let mut per_case_hits = Vec::new();
    let mut cases = Vec::with_capacity(scored.len());
    for s in scored {
        trace_usage(&s.trace, &mut usage_totals);
        per_case_hits.extend(s.hits);
        cases.push(s.result);
    }
    let per_k = options
        .ks
        .iter()
        .map(|&k| {
            let hits: Vec<bool> = per_case_hits.iter().filter(|h| h.k == k).map(|h| h.hit).collect();
            (k, mean_recall(&hits))
        })
        .collect();
    Ok(EvalReport {
        dataset_name: options.dataset_name.clone(),
        task,
        n_cases: records.len(),
        per_k,
        per_case_hits,
        cases,
        usage_totals,
        seed: options.seed,
        generated_at: Utc::now(),
    })
}
