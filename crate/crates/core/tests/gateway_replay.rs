mod common;

use sherlock_core::gateway::{
    AgentRequest, ChatAgent, EndpointConfig, Gateway, GatewayError, LiveAgent, Message, RecordingAgent, ReplayAgent,
};
use sherlock_core::harness::pipeline::artifacts;
use sherlock_core::harness::{run_pipeline, synth_corpus, PipelineConfig, SynthConfig, SyntheticAgent};

use common::mock::{completion, serve};
use common::oracle;

fn endpoint(base_url: String) -> EndpointConfig {
    EndpointConfig { base_url, timeout_secs: 10.0, requests_per_second: 1000.0, ..EndpointConfig::default() }
}

fn request() -> AgentRequest {
    AgentRequest::new(vec![Message::system("be terse"), Message::user("what is this page about?")], sherlock_core::debugging::SUMMARY_SCHEMA)
        .unwrap()
}

#[test]
fn recorded_run_replays_to_identical_diagnoses() {
    let oracle = oracle();
    let s = synth_corpus(&SynthConfig { n_tasks: 12, eip_rate: 0.3, ..SynthConfig::default() }, &oracle).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let transcript = dir.path().join("transcript.jsonl");
    let (rec, rep) = (dir.path().join("record"), dir.path().join("replay"));

    let recording = Gateway::new(Box::new(RecordingAgent::new(SyntheticAgent::new(&s.labels), &transcript)));
    let recorded = run_pipeline(&s.corpus, Some(&s.labels), &PipelineConfig::default(), &recording, &oracle, &rec).unwrap();
    assert!(!recorded.diagnoses.is_empty());

    let replay = ReplayAgent::load(&transcript).unwrap();
    assert!(!replay.is_empty());
    let replayed = run_pipeline(&s.corpus, Some(&s.labels), &PipelineConfig::default(), &Gateway::new(Box::new(replay)), &oracle, &rep).unwrap();
    assert_eq!(recorded.diagnoses, replayed.diagnoses);
    assert_eq!(std::fs::read(rec.join(artifacts::DIAGNOSES)).unwrap(), std::fs::read(rep.join(artifacts::DIAGNOSES)).unwrap());

    let empty = Gateway::new(Box::new(ReplayAgent::default()));
    assert!(run_pipeline(&s.corpus, Some(&s.labels), &PipelineConfig::default(), &empty, &oracle, &dir.path().join("miss")).is_err());
}

#[test]
fn replay_miss_names_the_request() {
    let req = request();
    match ReplayAgent::default().complete_raw(&req) {
        Err(GatewayError::ReplayMiss(h)) => assert_eq!(h, req.request_hash),
        other => panic!("expected a miss, got {other:?}"),
    }
}

#[test]
fn malformed_transcript_reports_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    std::fs::write(&path, "\n{\"not\": \"an entry\"}\n").unwrap();
    match ReplayAgent::load(&path) {
        Err(GatewayError::Transcript { line, .. }) => assert_eq!(line, 2),
        other => panic!("expected a transcript error, got {other:?}"),
    }
}

#[test]
fn live_agent_reads_the_first_choice() {
    let url = serve(|body| {
        assert_eq!(body["temperature"], 0);
        (200, completion(r#"{"WebPageProblem": "sorting"}"#))
    });
    let gateway = Gateway::new(Box::new(LiveAgent::new(endpoint(url)).unwrap()));
    let reply = gateway.complete(&request()).unwrap();
    assert_eq!(reply.parsed.unwrap()["WebPageProblem"], "sorting");
}

#[test]
fn live_agent_surfaces_endpoint_failures() {
    let url = serve(|_| (503, "overloaded".into()));
    match LiveAgent::new(endpoint(url)).unwrap().complete_raw(&request()) {
        Err(GatewayError::Endpoint { status, body }) => assert_eq!((status, body.as_str()), (503, "overloaded")),
        other => panic!("expected an endpoint error, got {other:?}"),
    }
    let url = serve(|_| (200, "{\"choices\": []}".into()));
    assert!(matches!(LiveAgent::new(endpoint(url)).unwrap().complete_raw(&request()), Err(GatewayError::Transport(_))));
}

#[test]
fn schema_violations_are_rejected_with_the_raw_text() {
    let url = serve(|_| (200, completion("not json at all")));
    let gateway = Gateway::new(Box::new(LiveAgent::new(endpoint(url)).unwrap()));
    match gateway.complete(&request()) {
        Err(GatewayError::Validation { raw_text, .. }) => assert_eq!(raw_text, "not json at all"),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn bad_endpoint_config_is_rejected() {
    assert!(matches!(LiveAgent::new(endpoint("not a url".into())), Err(GatewayError::Config(_))));
    let cfg = EndpointConfig { requests_per_second: 0.0, ..EndpointConfig::default() };
    assert!(matches!(LiveAgent::new(cfg), Err(GatewayError::Config(_))));
}
