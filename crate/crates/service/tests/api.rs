use std::sync::Arc;
use std::time::Duration;

use hygieia_core::gateway::{AgentRole, Gateway, Script, ScriptEntry, ScriptedFailure, Times};
use hygieia_core::router::Router;
use hygieia_core::{Orchestrator, PipelineConfig, Route};
use hygieia_service::{serve, AppState, Store};
use reqwest::StatusCode;
use serde_json::{json, Value};

const TOKEN: &str = "test-token";

const CORRECT: &str = "Diagnosis Assessment: correct\nFinal Diagnosis: Distal arthrogryposis, type 10\nReasoning:\n- Contractures and ptosis fit.";
const INCORRECT: &str = "**Diagnosis Assessment:** Incorrect\nFinal Diagnosis: Distal arthrogryposis, type 10\nReasoning:\n- Ptosis argues against the proposal.";

fn script() -> Script {
    Script::new()
        .push(ScriptEntry::failing(Some(AgentRole::Summary), &["unreachable-sign"], ScriptedFailure::Unavailable).times(Times::Infinite))
        .push(ScriptEntry::new(Some(AgentRole::Summary), &["garbled-sign"], "no answer here").times(Times::Infinite))
        .push(
            ScriptEntry::new(Some(AgentRole::Summary), &[], "Fits.\nANSWER: Distal arthrogryposis, type 10 | CONFIDENCE: 90")
                .usage(10, 5)
                .times(Times::Infinite),
        )
        .always(Some(AgentRole::Verifier), &["Distal arthrogryposis, type 10"], CORRECT)
        .always(Some(AgentRole::Verifier), &["Marfan"], INCORRECT)
        .always(Some(AgentRole::Verifier), &[], "I am not sure.")
}

struct Server {
    base: String,
    client: reqwest::Client,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    handle: tokio::task::JoinHandle<()>,
}

impl Server {
    async fn start(dir: &std::path::Path, token: Option<&str>) -> Self {
        let gateway = Arc::new(Gateway::scripted(script()));
        let orchestrator = Arc::new(Orchestrator::offline(gateway, Router::fixed(Route::Common)));
        let config = PipelineConfig {
            confidence_samples: 1,
            ..PipelineConfig::default()
        };
        let state = AppState::new(orchestrator, config, Store::open(dir).unwrap(), token.map(str::to_string));
        let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let handle = tokio::spawn(async move {
            serve(listener, state, Some("http://console.example"), async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Self {
            base,
            client: reqwest::Client::new(),
            stop: Some(tx),
            handle,
        }
    }

    async fn stop(mut self) {
        self.stop.take().unwrap().send(()).unwrap();
        self.handle.await.unwrap();
    }

    async fn call(&self, method: reqwest::Method, path: &str, body: Option<Value>) -> (StatusCode, Value, String) {
        let mut req = self.client.request(method, format!("{}{}", self.base, path)).bearer_auth(TOKEN);
        if let Some(b) = body {
            req = req.json(&b);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        let value = serde_json::from_str(&text).unwrap_or(Value::Null);
        (status, value, text)
    }

    async fn get(&self, path: &str) -> (StatusCode, Value, String) {
        self.call(reqwest::Method::GET, path, None).await
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value, String) {
        self.call(reqwest::Method::POST, path, Some(body)).await
    }
}

fn events_in(trace: &Value, stage: &str) -> usize {
    trace["events"].as_array().unwrap().iter().filter(|e| e["stage"] == stage).count()
}

#[tokio::test]
async fn case_lifecycle() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;

    let (st, body, _) = s.post("/cases", json!({"phenotypes": ["arthrogryposis", " ptosis "]})).await;
    assert_eq!(st, StatusCode::CREATED);
    let id = body["id"].as_str().unwrap().to_string();
    let (st, body, _) = s.get(&format!("/cases/{id}")).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["case"]["phenotypes"], json!(["arthrogryposis", "ptosis"]));
    assert_eq!(body["outcomes"], json!([]));

    let (st, body, _) = s.post("/cases", json!({"id": "p1", "phenotypes": []})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "EmptyCase");
    assert_eq!(body["fields"][0]["field"], "phenotypes");

    let (st, body, _) = s.post("/cases", json!({"id": "p1", "phenotypes": ["x"], "genes": [{"symbol": " "}]})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(body["fields"][0]["field"], "genes[0].symbol");

    let (st, body, _) = s.post("/cases", json!({"id": "p1", "phenotypes": ["x"], "bogus": 1})).await;
    assert_eq!((st, body["error"].as_str()), (StatusCode::BAD_REQUEST, Some("InvalidJson")));

    assert_eq!(s.post("/cases", json!({"id": "p1", "phenotypes": ["x"]})).await.0, StatusCode::CREATED);
    assert_eq!(s.post("/cases", json!({"id": "p1", "phenotypes": ["y"]})).await.0, StatusCode::CONFLICT);
    assert_eq!(s.get("/cases/nope").await.0, StatusCode::NOT_FOUND);
    let (_, list, _) = s.get("/cases").await;
    assert_eq!(list.as_array().unwrap().len(), 2);
    s.stop().await;
}

#[tokio::test]
async fn diagnose_common_route_and_trace() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;
    s.post("/cases", json!({"id": "c1", "phenotypes": ["arthrogryposis"]})).await;

    let (st, body, _) = s.post("/cases/c1/diagnose", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["route"], "Common");
    assert_eq!(body["final_confidence"], 90.0);
    assert_eq!(body["answers"][0]["label"], "Distal arthrogryposis, type 10");
    assert_eq!(body["trace_ref"], "/cases/c1/trace/0");
    assert!(body.get("trace").is_none());

    let (st, trace, bytes1) = s.get("/cases/c1/trace/0").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(events_in(&trace, "Summarize"), 1);
    let (_, _, bytes2) = s.get("/cases/c1/trace/0").await;
    assert_eq!(bytes1, bytes2);
    let (_, stored, _) = s.get("/cases/c1").await;
    assert_eq!(stored["outcomes"][0]["result"]["outcome"]["trace"], trace);
    assert_eq!(s.get("/cases/c1/trace/1").await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.get("/cases/zz/trace/0").await.0, StatusCode::NOT_FOUND);
    assert_eq!(s.post("/cases/zz/diagnose", json!({})).await.0, StatusCode::NOT_FOUND);

    let (st, genes, _) = s.post("/cases/c1/prioritize-genes", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(genes["task"], "PrioritizeGenes");
    assert_eq!(genes["outcome_index"], 1);

    let (st, bad, _) = s.post("/cases/c1/diagnose", json!({"config": {"confidence_samples": 0}})).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(bad["error"], "InvalidConfig");
    s.stop().await;
}

#[tokio::test]
async fn async_jobs_reach_done() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;
    s.post("/cases", json!({"id": "c1", "phenotypes": ["arthrogryposis"]})).await;
    let (st, job, _) = s.post("/cases/c1/diagnose?async=true", json!({})).await;
    assert_eq!(st, StatusCode::ACCEPTED);
    let job_id = job["job_id"].as_str().unwrap().to_string();
    assert!(matches!(job["state"].as_str(), Some("Queued")));
    let mut last = Value::Null;
    for _ in 0..100 {
        let (_, j, _) = s.get(&format!("/jobs/{job_id}")).await;
        last = j;
        if last["state"] == "Done" || last["state"] == "Failed" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    assert_eq!(last["state"], "Done");
    assert_eq!(last["result_ref"]["trace_ref"], "/cases/c1/trace/0");
    assert_eq!(s.get("/jobs/job-999999").await.0, StatusCode::NOT_FOUND);
    s.stop().await;
}

#[tokio::test]
async fn verify_passthrough_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;
    s.post("/cases", json!({"id": "c1", "phenotypes": ["arthrogryposis"]})).await;

    let (st, v, _) = s
        .post("/cases/c1/verify", json!({"proposed_diagnosis": "Distal arthrogryposis, type 10"}))
        .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["assessment"], "Correct");

    let (st, v, _) = s.post("/cases/c1/verify", json!({"proposed_diagnosis": "Marfan syndrome"})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(v["assessment"], "Incorrect");
    assert_eq!(v["final_diagnosis"], "Distal arthrogryposis, type 10");
    assert_eq!(v["proposed_diagnosis"], "Marfan syndrome");

    let (st, v, _) = s.post("/cases/c1/verify", json!({"proposed_diagnosis": "  "})).await;
    assert_eq!((st, v["error"].as_str()), (StatusCode::BAD_REQUEST, Some("EmptyProposal")));

    let (st, v, _) = s.post("/cases/c1/verify", json!({"proposed_diagnosis": "Something vague"})).await;
    assert_eq!(st, StatusCode::BAD_GATEWAY);
    assert_eq!(v["error"], "MalformedVerdict");
    assert_eq!(v["raw"], "I am not sure.");
    let index = v["outcome_index"].as_u64().unwrap();
    let (_, stored, _) = s.get("/cases/c1").await;
    assert_eq!(stored["outcomes"][index as usize]["result"]["status"], "failed");
    assert_eq!(stored["outcomes"][index as usize]["result"]["raw"], "I am not sure.");
    s.stop().await;
}

#[tokio::test]
async fn pipeline_failures_persist_partial_traces() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;
    s.post("/cases", json!({"id": "down", "phenotypes": ["unreachable-sign"]})).await;
    let (st, body, _) = s.post("/cases/down/diagnose", json!({})).await;
    assert_eq!(st, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(body["error"], "BackendUnavailable");
    let (st, trace, _) = s.get("/cases/down/trace/0").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(events_in(&trace, "Route"), 1);
    assert!(trace["events"].as_array().unwrap().iter().any(|e| e["kind"] == "failure"));

    s.post("/cases", json!({"id": "garbled", "phenotypes": ["garbled-sign"]})).await;
    let (st, body, _) = s.post("/cases/garbled/diagnose", json!({})).await;
    assert_eq!(st, StatusCode::BAD_GATEWAY);
    assert_eq!(body["error"], "AnswerParse");
    assert_eq!(body["raw"], "no answer here");
    s.stop().await;
}

#[tokio::test]
async fn usage_report_and_reset() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;
    let (_, u, _) = s.get("/usage").await;
    assert_eq!(u["total"]["calls"], 0);
    assert_eq!(u["total"]["prompt_tokens"], 0);
    s.post("/cases", json!({"id": "c1", "phenotypes": ["arthrogryposis"]})).await;
    for _ in 0..3 {
        assert_eq!(s.post("/cases/c1/diagnose", json!({})).await.0, StatusCode::OK);
    }
    let (_, u, _) = s.get("/usage").await;
    assert_eq!(u["total"]["calls"], 3);
    assert_eq!(u["total"]["prompt_tokens"], 30);
    assert_eq!(u["total"]["completion_tokens"], 15);
    assert_eq!(u["roles"]["summary"]["calls"], 3);
    let (st, u, _) = s.post("/usage/reset", json!({})).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(u["total"]["calls"], 0);
    assert_eq!(s.get("/usage").await.1["total"]["calls"], 0);
    s.stop().await;
}

#[tokio::test]
async fn bearer_token_gates_everything_but_health() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;
    let anon = reqwest::Client::new();
    assert_eq!(anon.get(format!("{}/health", s.base)).send().await.unwrap().status(), StatusCode::OK);
    let resp = anon.get(format!("{}/cases", s.base)).send().await.unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    assert!(resp.headers().contains_key("www-authenticate"));
    let resp = anon
        .get(format!("{}/usage", s.base))
        .bearer_auth("wrong")
        .send()
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::UNAUTHORIZED);
    let body = resp.text().await.unwrap();
    assert!(!body.contains(TOKEN));

    let resp = anon
        .request(reqwest::Method::OPTIONS, format!("{}/cases", s.base))
        .header("origin", "http://console.example")
        .header("access-control-request-method", "POST")
        .header("access-control-request-headers", "authorization")
        .send()
        .await
        .unwrap();
    assert_eq!(
        resp.headers().get("access-control-allow-origin").unwrap(),
        "http://console.example"
    );
    s.stop().await;
}

#[tokio::test]
async fn restart_rebuilds_the_index() {
    let dir = tempfile::tempdir().unwrap();
    let s = Server::start(dir.path(), Some(TOKEN)).await;
    s.post("/cases", json!({"id": "c1", "phenotypes": ["arthrogryposis"]})).await;
    s.post("/cases/c1/diagnose", json!({})).await;
    let (_, before_case, _) = s.get("/cases/c1").await;
    let (_, _, before_trace) = s.get("/cases/c1/trace/0").await;
    s.stop().await;

    let s = Server::start(dir.path(), None).await;
    let (st, after_case, _) = s.get("/cases/c1").await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(after_case, before_case);
    assert_eq!(s.get("/cases/c1/trace/0").await.2, before_trace);
    let (_, created, _) = s.post("/cases", json!({"phenotypes": ["x"]})).await;
    assert_eq!(created["id"], "case-000002");
    s.stop().await;
}
