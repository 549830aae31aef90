mod common;

use common::FakeServer;
use serde_json::Value;
use simrag_core::llm_client::{
    generate, list_models, LlmError, LlmRequest, ProviderConfig, WireMessage, WireRole,
};

fn provider(url: &str) -> ProviderConfig {
    ProviderConfig {
        retry_backoff_ms: 10,
        ..ProviderConfig::http(url)
    }
}

fn request() -> LlmRequest {
    LlmRequest::new(
        "llama3",
        vec![
            WireMessage::new(WireRole::System, "You are an assistant."),
            WireMessage::new(WireRole::User, "What do you know about Pasimodo?"),
        ],
    )
}

fn ok_body(content: &str) -> String {
    serde_json::json!({
        "model": "llama3",
        "message": {"role": "assistant", "content": content},
        "prompt_eval_count": 12,
        "eval_count": 3,
    })
    .to_string()
}

#[test]
fn retries_server_errors_then_succeeds() {
    let server = FakeServer::start(vec![
        (500, "{}".into()),
        (500, "{}".into()),
        (200, ok_body("hello")),
    ]);
    let response = generate(&request(), &provider(&server.base_url)).unwrap();
    assert_eq!(response.content, "hello");
    assert_eq!(response.retries, 2);
    assert_eq!(response.prompt_token_count, Some(12));
    assert_eq!(response.completion_token_count, Some(3));

    let seen = server.finish();
    assert_eq!(seen.len(), 3);
    let body: Value = serde_json::from_str(&seen[0].body).unwrap();
    assert_eq!(seen[0].method, "POST");
    assert_eq!(seen[0].path, "/chat");
    assert_eq!(body["options"]["temperature"], 0.0);
    assert_eq!(body["options"]["num_ctx"], 8192);
    assert_eq!(body["messages"][0]["role"], "system");
    assert_eq!(body["messages"][1]["role"], "user");
}

#[test]
fn gives_up_after_retry_max() {
    let server = FakeServer::start(vec![(503, "{}".into()); 3]);
    let err = generate(&request(), &provider(&server.base_url)).unwrap_err();
    assert!(matches!(err, LlmError::Unreachable(_)), "{err:?}");
    assert_eq!(server.finish().len(), 3);
}

#[test]
fn client_errors_are_not_retried() {
    let server = FakeServer::start(vec![(404, "{\"error\":\"model not found\"}".into())]);
    let err = generate(&request(), &provider(&server.base_url)).unwrap_err();
    match err {
        LlmError::BadStatus { status, body } => {
            assert_eq!(status, 404);
            assert!(body.contains("model not found"));
        }
        other => panic!("{other:?}"),
    }
    assert_eq!(server.finish().len(), 1);
}

#[test]
fn malformed_bodies() {
    let server = FakeServer::start(vec![
        (200, "not json".into()),
        (200, "{\"message\":{}}".into()),
        (200, ok_body("")),
        (200, "{\"message\":{\"content\":\"\"},\"eval_count\":0}".into()),
    ]);
    let p = provider(&server.base_url);
    for _ in 0..3 {
        assert!(matches!(
            generate(&request(), &p),
            Err(LlmError::MalformedResponse(_))
        ));
    }
    // An explicit zero-length completion is allowed to be empty.
    assert_eq!(generate(&request(), &p).unwrap().content, "");
    server.finish();
}

#[test]
fn lists_models_in_server_order() {
    let server = FakeServer::start(vec![(
        200,
        r#"{"models":["qwen2.5:32b",{"name":"llama3.1:8b","context_length":128000}]}"#.into(),
    )]);
    let models = list_models(&provider(&server.base_url)).unwrap();
    let names: Vec<_> = models.iter().map(|m| m.name.as_str()).collect();
    assert_eq!(names, ["qwen2.5:32b", "llama3.1:8b"]);
    assert_eq!(models[1].context_length, Some(128000));
    let seen = server.finish();
    assert_eq!(
        (seen[0].method.as_str(), seen[0].path.as_str()),
        ("GET", "/models")
    );
}

#[test]
fn malformed_model_list() {
    let server = FakeServer::start(vec![(200, "{\"names\":[]}".into())]);
    assert!(matches!(
        list_models(&provider(&server.base_url)),
        Err(LlmError::MalformedResponse(_))
    ));
    server.finish();
}
