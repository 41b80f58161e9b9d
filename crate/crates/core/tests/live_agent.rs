mod common;

use serde_json::json;

use common::{calculator_exchange, StubServer};
use toolshap_core::agent::{run_tool_loop, Agent, LiveAgent, LiveAgentConfig};
use toolshap_core::bundled;
use toolshap_core::model::{Coalition, ResponseSource};
use toolshap_core::Error;

fn config(server: &StubServer) -> LiveAgentConfig {
    let mut cfg = LiveAgentConfig::new(server.base_url.clone(), "stub-model");
    cfg.retry_backoff_ms = 1;
    cfg
}

#[test]
fn two_turn_calculator_exchange() {
    let fixture = calculator_exchange();
    let replies = fixture["replies"].as_array().unwrap().clone();
    let server = StubServer::replay(replies);
    let catalog = bundled::core_catalog();
    let tools = vec![catalog.get("Calculator").unwrap().clone()];

    let resp = run_tool_loop(&config(&server), fixture["prompt"].as_str().unwrap(), &tools).unwrap();
    assert_eq!(resp.text, "2 + 2 = 4.");
    assert_eq!(resp.turns, 2);
    assert_eq!(resp.source, ResponseSource::Live);
    assert_eq!(resp.tool_calls_made.len(), 1);
    assert_eq!(resp.tool_calls_made[0].tool, "Calculator");
    assert_eq!(resp.tool_calls_made[0].result, "4");

    let reqs = server.requests();
    assert_eq!(reqs.len(), 2);
    assert!(reqs.iter().all(|r| r.path == "/v1/chat/completions"));
    let first = &reqs[0].body;
    assert_eq!(first["model"], "stub-model");
    assert_eq!(first["tool_choice"], "auto");
    assert_eq!(first["tools"][0]["function"]["name"], "Calculator");
    assert_eq!(
        first["tools"][0]["function"]["parameters"]["required"],
        json!(["expression"])
    );
    let second = reqs[1].body["messages"].as_array().unwrap();
    assert_eq!(second.len(), 3);
    assert_eq!(second[1]["role"], "assistant");
    assert_eq!(second[2]["role"], "tool");
    assert_eq!(second[2]["tool_call_id"], "call_1");
    assert_eq!(second[2]["content"], "4");
}

#[test]
fn max_turns_is_enforced() {
    let fixture = calculator_exchange();
    let call = fixture["replies"][0].clone();
    let server = StubServer::start(move |_, _, _| (200, call.clone()));
    let catalog = bundled::core_catalog();
    let mut cfg = config(&server);
    cfg.max_turns = 3;
    let err = run_tool_loop(&cfg, "loop forever", catalog.tools()).unwrap_err();
    assert!(matches!(err, Error::MaxTurnsExceeded(3)));
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn empty_coalition_sends_no_tools() {
    let fixture = calculator_exchange();
    let server = StubServer::replay(vec![fixture["replies"][1].clone()]);
    let catalog = bundled::core_catalog();
    let agent = LiveAgent::new(config(&server));
    let resp = agent
        .respond("What is 2+2?", &Coalition::empty(&catalog), &catalog)
        .unwrap();
    assert_eq!(resp.turns, 1);
    assert!(resp.tool_calls_made.is_empty());
    let body = &server.requests()[0].body;
    assert!(body.get("tools").is_none());
    assert!(body.get("tool_choice").is_none());
    assert_eq!(agent.request_count(), 1);
}

#[test]
fn server_errors_are_retried() {
    let fixture = calculator_exchange();
    let done = fixture["replies"][1].clone();
    let server = StubServer::start(move |i, _, _| {
        if i < 2 {
            (503, json!({"error": "busy"}))
        } else {
            (200, done.clone())
        }
    });
    let mut cfg = config(&server);
    cfg.max_retries = 2;
    let resp = run_tool_loop(&cfg, "hi", &[]).unwrap();
    assert_eq!(resp.text, "2 + 2 = 4.");
    assert_eq!(server.requests().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = StubServer::start(|_, _, _| (401, json!({"error": "bad key"})));
    let err = run_tool_loop(&config(&server), "hi", &[]).unwrap_err();
    assert!(err.is_unavailable());
    assert_eq!(server.requests().len(), 1);
}

#[test]
fn unoffered_tool_is_not_recorded() {
    let call = json!({"choices": [{"message": {"role": "assistant", "content": null, "tool_calls": [
        {"id": "c", "type": "function", "function": {"name": "Wiki", "arguments": "{\"query\": \"rust\"}"}}
    ]}}]});
    let done = json!({"choices": [{"message": {"role": "assistant", "content": "done"}}]});
    let server = StubServer::replay(vec![call, done]);
    let catalog = bundled::core_catalog();
    let tools = vec![catalog.get("Calculator").unwrap().clone()];
    let resp = run_tool_loop(&config(&server), "hi", &tools).unwrap();
    assert!(resp.tool_calls_made.is_empty());
    let msgs = server.requests()[1].body["messages"].clone();
    assert!(msgs[2]["content"].as_str().unwrap().starts_with("error:"));
}

#[test]
fn api_key_is_sent_as_bearer() {
    let server = StubServer::replay(vec![json!({"choices": [{"message": {"content": "ok"}}]})]);
    let mut cfg = config(&server);
    std::env::set_var("TOOLSHAP_TEST_KEY", "sekret");
    cfg.api_key_env = Some("TOOLSHAP_TEST_KEY".into());
    run_tool_loop(&cfg, "hi", &[]).unwrap();
    assert_eq!(
        server.requests()[0].authorization.as_deref(),
        Some("Bearer sekret")
    );
}
