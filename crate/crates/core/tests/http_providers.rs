//! Wire-level tests for the HTTP embedding backend and chat provider
//! against a loopback stub server.

mod common;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use raterlens::embed::{
    embed_batch, EmbedError, EmbeddingProviderConfig, EmbeddingStore, ProviderKind,
};
use raterlens::raterclient::{ChatProvider, ChatRequest, HttpChatProvider};

fn http_provider_config(url: &str, dim: usize) -> EmbeddingProviderConfig {
    EmbeddingProviderConfig {
        kind: ProviderKind::Http,
        dim,
        endpoint: Some(url.to_string()),
        model_name: Some("test-embedder".into()),
        max_parallel: 2,
        max_retries: 2,
        api_key_env: None,
    }
}

#[test]
fn http_embedding_end_to_end() {
    let server = common::spawn(|body| {
        let request: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(request["model"], "test-embedder");
        let inputs = request["input"].as_array().unwrap();
        let embeddings: Vec<Vec<f64>> = inputs
            .iter()
            .map(|text| {
                let len = text.as_str().unwrap().len() as f64;
                (0..8).map(|i| len + i as f64).collect()
            })
            .collect();
        (
            200,
            serde_json::json!({ "embeddings": embeddings }).to_string(),
        )
    });
    let mut store = EmbeddingStore::new(8);
    let texts = vec!["alpha".to_string(), "beta pair".to_string()];
    let report = embed_batch(&texts, &http_provider_config(&server.url, 8), &mut store).unwrap();
    assert_eq!(report.fetched, 2);
    assert!(report.provider_requests >= 1);
    assert_eq!(store.len(), 2);
    let v = store.get_text("alpha").unwrap();
    assert_eq!(v.values()[0], 5.0);
}

#[test]
fn http_embedding_dimension_mismatch_is_rejected() {
    let server = common::spawn(|body| {
        let request: serde_json::Value = serde_json::from_str(body).unwrap();
        let n = request["input"].as_array().unwrap().len();
        let embeddings: Vec<Vec<f64>> = (0..n).map(|_| vec![0.5; 384]).collect();
        (
            200,
            serde_json::json!({ "embeddings": embeddings }).to_string(),
        )
    });
    let mut store = EmbeddingStore::new(256);
    let err = embed_batch(
        &["text".to_string()],
        &http_provider_config(&server.url, 256),
        &mut store,
    )
    .unwrap_err();
    assert!(matches!(
        err,
        EmbedError::DimMismatch {
            expected: 256,
            got: 384
        }
    ));
}

#[test]
fn http_embedding_retries_transient_failures() {
    let failures = Arc::new(AtomicUsize::new(0));
    let failures_in_handler = failures.clone();
    let server = common::spawn(move |body| {
        // first two requests fail, then succeed
        if failures_in_handler.fetch_add(1, Ordering::SeqCst) < 2 {
            return (500, "{\"error\":\"transient\"}".to_string());
        }
        let request: serde_json::Value = serde_json::from_str(body).unwrap();
        let n = request["input"].as_array().unwrap().len();
        let embeddings: Vec<Vec<f64>> = (0..n).map(|_| vec![1.0; 8]).collect();
        (
            200,
            serde_json::json!({ "embeddings": embeddings }).to_string(),
        )
    });
    let mut store = EmbeddingStore::new(8);
    let report = embed_batch(
        &["text".to_string()],
        &http_provider_config(&server.url, 8),
        &mut store,
    )
    .unwrap();
    assert_eq!(report.fetched, 1);
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn http_embedding_gives_up_after_max_retries() {
    let server = common::spawn(|_| (500, "{\"error\":\"down\"}".to_string()));
    let mut store = EmbeddingStore::new(8);
    let err = embed_batch(
        &["text".to_string()],
        &http_provider_config(&server.url, 8),
        &mut store,
    )
    .unwrap_err();
    assert!(matches!(err, EmbedError::Transport { attempts: 3, .. }));
    assert_eq!(server.hits.load(Ordering::SeqCst), 3);
}

#[test]
fn http_chat_provider_round_trip() {
    let server = common::spawn(|body| {
        let request: serde_json::Value = serde_json::from_str(body).unwrap();
        assert_eq!(request["model"], "grader-1");
        assert_eq!(request["temperature"], 0.0);
        let messages = request["messages"].as_array().unwrap();
        assert_eq!(messages[0]["role"], "system");
        (
            200,
            serde_json::json!({
                "content": "Score: 5\nClear, connected, minor slips only.",
                "finish_reason": "stop",
                "usage": {"prompt_tokens": 900, "completion_tokens": 20}
            })
            .to_string(),
        )
    });
    let provider = HttpChatProvider::new(&server.url, None, 1).unwrap();
    let response = provider
        .complete(&ChatRequest {
            model_name: "grader-1".into(),
            messages: vec![
                raterlens::raterclient::ChatMessage::system("grade this"),
                raterlens::raterclient::ChatMessage::user("essay text"),
            ],
            temperature: 0.0,
        })
        .unwrap();
    assert!(response.content.starts_with("Score: 5"));
    assert_eq!(response.usage.unwrap().completion_tokens, Some(20));
}

#[test]
fn missing_credential_fails_before_any_request() {
    match HttpChatProvider::new("http://127.0.0.1:1/", Some("RATERLENS_TEST_NO_SUCH_KEY"), 1) {
        Err(raterlens::raterclient::ClientError::MissingCredential(var)) => {
            assert_eq!(var, "RATERLENS_TEST_NO_SUCH_KEY");
        }
        Err(other) => panic!("wrong error: {other}"),
        Ok(_) => panic!("provider built without its credential"),
    }
}
