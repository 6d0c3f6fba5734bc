//! Scripted pipeline scenarios.

#![allow(dead_code)]

use std::sync::Arc;

use hygieia_core::evaluation::EvalRecord;
use hygieia_core::gateway::{AgentRole, Gateway, Script};
use hygieia_core::router::Router;
use hygieia_core::{DiagnosisOutcome, Orchestrator, PatientCase, PipelineConfig, Route};

pub fn case(id: &str) -> PatientCase {
    PatientCase::new(id, ["arthrogryposis", "ptosis", "contractures"])
}

pub fn config(s: u32, n: u32) -> PipelineConfig {
    PipelineConfig {
        confidence_samples: s,
        max_verify_iters: n,
        ..PipelineConfig::default()
    }
}

/// Extractor, manager and summary always answer; the verifier rejects
/// `rejects` times and accepts afterwards.
pub fn loop_script(rejects: usize) -> Script {
    let mut script = Script::new()
        .always(Some(AgentRole::KnowledgeExtractor), &[], "```\ncontractures\n```")
        .always(Some(AgentRole::KnowledgeManager), &[], "CONTEXT: no external evidence")
        .always(Some(AgentRole::Summary), &[], "Reasoning.\nANSWER: Distal arthrogryposis, type 10 | CONFIDENCE: 90");
    for _ in 0..rejects {
        script = script.respond(Some(AgentRole::Verifier), &[], "VERDICT: REJECT - consider another subtype");
    }
    script.always(Some(AgentRole::Verifier), &[], "VERDICT: ACCEPT")
}

pub fn orchestrator(script: Script, route: Route) -> Orchestrator {
    Orchestrator::offline(Arc::new(Gateway::scripted(script)), Router::fixed(route))
}

pub async fn run(route: Route, s: u32, n: u32, rejects: usize) -> DiagnosisOutcome {
    orchestrator(loop_script(rejects), route)
        .diagnose(&case("law"), &config(s, n))
        .await
        .expect("scripted run succeeds")
}

/// Expected (summary, verifier, extractor, manager) calls.
pub fn expected_calls(route: Route, s: u32, n: u32, rejects: usize) -> (usize, usize, usize, usize) {
    let (s, n) = (s as usize, n as usize);
    match route {
        Route::Common => (s, 0, 0, 0),
        Route::Rare if rejects < n => (s + rejects, rejects + 1, 1, 1),
        Route::Rare => (s + n + 1, n, 1, 1),
    }
}

pub fn observed_calls(o: &DiagnosisOutcome) -> (usize, usize, usize, usize) {
    let t = &o.trace;
    (
        t.calls_for("summary"),
        t.calls_for("verifier"),
        t.calls_for("knowledge_extractor"),
        t.calls_for("knowledge_manager"),
    )
}

/// `n` synthetic cases with a script that answers a third of them correctly
/// at rank 1, a third with the gold label as the second candidate, and the
/// rest wrongly. Wrong top answers are rejected once by the verifier.
pub fn synthetic_benchmark(n: usize) -> (Vec<EvalRecord>, Script) {
    let mut records = Vec::new();
    let mut script = Script::new()
        .always(Some(AgentRole::KnowledgeExtractor), &[], "```\nhypotonia\n```")
        .always(Some(AgentRole::KnowledgeManager), &[], "CONTEXT: synthetic evidence");
    for i in 0..n {
        let marker = format!("sign{i:02}");
        let gold = format!("Syndrome {i}");
        records.push(EvalRecord {
            case: PatientCase::new(format!("case-{i:02}"), [marker.clone(), "hypotonia".to_string()]),
            gold_diseases: vec![gold.clone()],
            gold_genes: vec![format!("GENE{i}")],
        });
        let reply = match i % 3 {
            0 => format!("Fits.\nANSWER: {gold} | CONFIDENCE: {}\nALT: Other {i} | CONFIDENCE: 20", 60 + i),
            1 => format!("Unsure.\nANSWER: Other {i} | CONFIDENCE: 55\nALT: {gold} | CONFIDENCE: 40"),
            _ => format!("Guess.\nANSWER: Wrong {i} | CONFIDENCE: 30"),
        };
        let gene = format!("ANSWER: GENE{i} | CONFIDENCE: 70");
        script = script
            .always(Some(AgentRole::Summary), &[&marker, "genetic counselor"], gene)
            .always(Some(AgentRole::Summary), &[&marker], reply)
            .respond(Some(AgentRole::Verifier), &[&format!("Proposed answer: Wrong {i}\n")], "VERDICT: REJECT - weak fit");
    }
    (records, script.always(Some(AgentRole::Verifier), &[], "VERDICT: ACCEPT"))
}
