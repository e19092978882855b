use std::path::PathBuf;
use std::sync::Arc;

use ods_core::check::{check, CheckRequest};
use ods_core::compiler::compile_policy;
use ods_core::odrl::parse_policy;
use ods_core::rebac::{export_model, RelationshipTuple};
use ods_core::store::Store;
use ods_core::Value;
use ods_service::{serve_on, ServiceConfig};
use reqwest::StatusCode;
use serde_json::{json, Value as JsonValue};
use tempfile::TempDir;
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

const POLICY: &str = r#"{
  "@context": {"odrl": "http://www.w3.org/ns/odrl/2/", "ods": "https://w3id.org/ods/"},
  "@type": "Set",
  "uid": "https://example.org/policy/service",
  "profile": "https://w3id.org/ods/",
  "permission": [
    {"action": "ods:Train", "target": "https://example.org/data/ds1", "assignee": "ods:Consumer"},
    {
      "action": "ods:Train",
      "target": "https://example.org/data/ds1",
      "assignee": "https://example.org/party/bob",
      "constraint": [{"leftOperand": "odrl:dateTime", "operator": "odrl:lteq", "rightOperand": "2026-01-01T00:00:00Z"}]
    }
  ],
  "prohibition": [
    {"action": "ods:Train", "target": "https://example.org/data/ds1", "assignee": "https://example.org/party/mallory"}
  ]
}"#;

struct Server {
    base: String,
    data_dir: PathBuf,
    client: reqwest::Client,
    token: Option<String>,
    stop: Option<oneshot::Sender<()>>,
    task: Option<JoinHandle<()>>,
    _dir: Option<TempDir>,
}

impl Server {
    async fn start(configure: impl FnOnce(&mut ServiceConfig)) -> Server {
        let dir = TempDir::new().unwrap();
        let mut server = Self::start_in(dir.path().to_path_buf(), configure).await;
        server._dir = Some(dir);
        server
    }

    async fn start_in(data_dir: PathBuf, configure: impl FnOnce(&mut ServiceConfig)) -> Server {
        let mut config = ServiceConfig::new(&data_dir);
        configure(&mut config);
        let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let base = format!("http://{}", listener.local_addr().unwrap());
        let (tx, rx) = oneshot::channel();
        let token = config.bearer_token.clone();
        let task = tokio::spawn(async move {
            serve_on(listener, &config, async {
                let _ = rx.await;
            })
            .await
            .unwrap();
        });
        Server {
            base,
            data_dir,
            client: reqwest::Client::new(),
            token,
            stop: Some(tx),
            task: Some(task),
            _dir: None,
        }
    }

    async fn stop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(task) = self.task.take() {
            task.await.unwrap();
        }
    }

    async fn post(&self, path: &str, body: impl Into<reqwest::Body>) -> (StatusCode, JsonValue) {
        let mut req = self
            .client
            .post(format!("{}{path}", self.base))
            .header("content-type", "application/json")
            .body(body);
        if let Some(t) = &self.token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        let status = resp.status();
        let text = resp.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(JsonValue::String(text)))
    }

    async fn post_json(&self, path: &str, body: JsonValue) -> (StatusCode, JsonValue) {
        self.post(path, body.to_string()).await
    }

    async fn create_store(&self) -> String {
        let (status, body) = self.post_json("/stores", json!({"name": "demo"})).await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        assert_eq!(body["name"], "demo");
        body["id"].as_str().unwrap().to_string()
    }

    /// Creates a store holding the compiled test policy plus consumer
    /// assignments for carol and mallory.
    async fn seeded_store(&self) -> String {
        let id = self.create_store().await;
        let compiled = compile_policy(&parse_policy(POLICY.as_bytes()).unwrap()).unwrap();
        let (status, body) = self
            .post(&format!("/stores/{id}/authorization-models"), export_model(&compiled.model).unwrap())
            .await;
        assert_eq!(status, StatusCode::CREATED, "{body}");
        assert_eq!(body["authorization_model_id"], "00000001");
        let mut keys: Vec<JsonValue> = compiled.tuples.iter().map(|t| t.to_json()).collect();
        keys.push(json!({"user": "user:carol", "relation": "consumer", "object": "asset:ds1"}));
        keys.push(json!({"user": "user:mallory", "relation": "consumer", "object": "asset:ds1"}));
        let (status, body) = self
            .post_json(&format!("/stores/{id}/write"), json!({"writes": {"tuple_keys": keys}}))
            .await;
        assert_eq!(status, StatusCode::OK, "{body}");
        id
    }

    async fn check(&self, id: &str, body: JsonValue) -> (StatusCode, JsonValue) {
        self.post_json(&format!("/stores/{id}/check"), body).await
    }
}

fn check_body(user: &str, relation: &str, object: &str) -> JsonValue {
    json!({"tuple_key": {"user": user, "relation": relation, "object": object}})
}

#[tokio::test(flavor = "multi_thread")]
async fn workflow_decisions_match_a_library_replay() {
    let mut server = Server::start(|_| {}).await;
    let id = server.seeded_store().await;
    let cases = [
        ("user:carol", None, true),
        ("user:mallory", None, false),
        ("user:dave", None, false),
        ("user:bob", Some("2025-12-31T23:59:59Z"), true),
        ("user:bob", Some("2026-01-01T00:00:00Z"), true),
        ("user:bob", Some("2026-01-01T00:00:01Z"), false),
        ("user:bob", None, false),
    ];
    let mut answers = Vec::new();
    for (user, time, expected) in cases {
        let mut body = check_body(user, "can_train", "asset:ds1");
        if let Some(t) = time {
            body["context"] = json!({"current_time": t});
        }
        let (status, resp) = server.check(&id, body).await;
        assert_eq!(status, StatusCode::OK, "{resp}");
        assert_eq!(resp["allowed"], expected, "{user} at {time:?}");
        answers.push(expected);
    }
    server.stop().await;

    let store = Store::open(server.data_dir.join(&id)).unwrap();
    let snapshot = store.snapshot();
    let model = snapshot.model(None).unwrap();
    for ((user, time, _), served) in cases.iter().zip(answers) {
        let mut request = CheckRequest::new(user.parse().unwrap(), "can_train", "asset:ds1".parse().unwrap());
        if let Some(t) = time {
            request = request.with_context("current_time", Value::from_text(t));
        }
        assert_eq!(check(&snapshot.tuples, &model, &request).unwrap().allowed, served);
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn contextual_tuples_are_not_persisted() {
    let server = Server::start(|_| {}).await;
    let id = server.seeded_store().await;
    let mut body = check_body("user:erin", "can_train", "asset:ds1");
    body["contextual_tuples"] =
        json!({"tuple_keys": [{"user": "user:erin", "relation": "consumer", "object": "asset:ds1"}]});
    assert_eq!(server.check(&id, body).await.1["allowed"], true);
    let body = check_body("user:erin", "can_train", "asset:ds1");
    assert_eq!(server.check(&id, body).await.1["allowed"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn check_without_a_model_is_not_found() {
    let server = Server::start(|_| {}).await;
    let id = server.create_store().await;
    let (status, body) = server.check(&id, check_body("user:a", "can_train", "asset:ds1")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert_eq!(body["code"], "not_found");
    let (status, _) = server
        .check("0000", check_body("user:a", "can_train", "asset:ds1"))
        .await;
    assert_eq!(status, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn duplicate_write_conflicts_and_leaves_revision_unchanged() {
    let mut server = Server::start(|_| {}).await;
    let id = server.seeded_store().await;
    let dup = json!({"writes": {"tuple_keys": [{"user": "user:carol", "relation": "consumer", "object": "asset:ds1"}]}});
    let (status, body) = server.post_json(&format!("/stores/{id}/write"), dup).await;
    assert_eq!(status, StatusCode::CONFLICT, "{body}");
    assert!(body["message"].as_str().unwrap().contains("already present"));
    let absent = json!({"deletes": {"tuple_keys": [{"user": "user:zed", "relation": "consumer", "object": "asset:ds1"}]}});
    let (status, _) = server.post_json(&format!("/stores/{id}/write"), absent).await;
    assert_eq!(status, StatusCode::CONFLICT);
    server.stop().await;
    assert_eq!(Store::open(server.data_dir.join(&id)).unwrap().revision(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn errors_map_to_status_codes() {
    let server = Server::start(|_| {}).await;
    let id = server.seeded_store().await;

    let (status, body) = server.post(&format!("/stores/{id}/check"), "{not json").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(body["code"], "validation_error");

    let (status, _) = server.check(&id, check_body("user:a", "can_fly", "asset:ds1")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = server.check(&id, check_body("alice", "can_train", "asset:ds1")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let bad_type = json!({"writes": {"tuple_keys": [{"user": "user:a", "relation": "consumer", "object": "job:j1"}]}});
    let (status, _) = server.post_json(&format!("/stores/{id}/write"), bad_type).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let (status, _) = server.post_json(&format!("/stores/{id}/write"), json!({})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let invalid = json!({
        "schema_version": "1.1",
        "type_definitions": [{"type": "doc", "relations": {"viewer": {"computedUserset": {"relation": "owner"}}}}]
    });
    let (status, body) = server.post_json(&format!("/stores/{id}/authorization-models"), invalid).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY, "{body}");

    let (status, _) = server.post(&format!("/stores/{id}/authorization-models"), "[]").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let mut body = check_body("user:bob", "can_train", "asset:ds1");
    body["authorization_model_id"] = json!("00000042");
    assert_eq!(server.check(&id, body).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test(flavor = "multi_thread")]
async fn other_routes_are_not_found_with_an_error_body() {
    let server = Server::start(|_| {}).await;
    let id = server.create_store().await;
    for path in [format!("/stores/{id}/read"), format!("/stores/{id}/expand"), "/healthz".to_string()] {
        let (status, body) = server.post_json(&path, json!({})).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
        assert_eq!(body["code"], "not_found");
        assert!(body["message"].is_string());
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn bearer_token_is_enforced_when_configured() {
    let mut server = Server::start(|c| c.bearer_token = Some("s3cret".into())).await;
    server.create_store().await;
    server.token = Some("wrong".into());
    let (status, body) = server.post_json("/stores", json!({"name": "x"})).await;
    assert_eq!(status, StatusCode::UNAUTHORIZED);
    assert_eq!(body["code"], "unauthenticated");
    server.token = None;
    assert_eq!(server.post_json("/stores", json!({"name": "x"})).await.0, StatusCode::UNAUTHORIZED);
}

#[tokio::test(flavor = "multi_thread")]
async fn oversized_bodies_are_rejected() {
    let server = Server::start(|c| c.request_body_limit = 64 * 1024).await;
    let id = server.seeded_store().await;
    let mut body = check_body("user:carol", "can_train", "asset:ds1");
    body["context"] = json!({"note": "x".repeat(128 * 1024)});
    let (status, resp) = server.check(&id, body).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE, "{resp}");
}

#[tokio::test(flavor = "multi_thread")]
async fn stores_survive_a_restart() {
    let dir = TempDir::new().unwrap();
    let mut server = Server::start_in(dir.path().to_path_buf(), |_| {}).await;
    let id = server.seeded_store().await;
    server.stop().await;
    let server = Server::start_in(dir.path().to_path_buf(), |_| {}).await;
    let (status, body) = server.check(&id, check_body("user:carol", "can_train", "asset:ds1")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["allowed"], true);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_checks_see_committed_revisions_only() {
    let server = Arc::new(Server::start(|c| c.max_concurrent_checks = 8).await);
    let id = server.seeded_store().await;
    // each write grants and prohibits the same user at once, so a torn read
    // would show up as an allowed check
    let writer = {
        let server = Arc::clone(&server);
        let id = id.clone();
        tokio::spawn(async move {
            for i in 0..40 {
                let keys: Vec<JsonValue> = [
                    RelationshipTuple::parse(&format!("user:w{i}"), "consumer", "asset:ds1").unwrap(),
                    RelationshipTuple::parse(&format!("user:w{i}"), "train_deny", "asset:ds1").unwrap(),
                ]
                .iter()
                .map(|t| t.to_json())
                .collect();
                let (status, body) = server
                    .post_json(&format!("/stores/{id}/write"), json!({"writes": {"tuple_keys": keys}}))
                    .await;
                assert_eq!(status, StatusCode::OK, "{body}");
            }
        })
    };
    let readers: Vec<_> = (0..64)
        .map(|r| {
            let server = Arc::clone(&server);
            let id = id.clone();
            tokio::spawn(async move {
                for i in 0..10 {
                    let user = format!("user:w{}", (r + i * 7) % 40);
                    let (status, body) = server.check(&id, check_body(&user, "can_train", "asset:ds1")).await;
                    assert_eq!(status, StatusCode::OK);
                    assert_eq!(body["allowed"], false, "{user}");
                    let (_, body) = server.check(&id, check_body("user:carol", "can_train", "asset:ds1")).await;
                    assert_eq!(body["allowed"], true);
                }
            })
        })
        .collect();
    writer.await.unwrap();
    for r in readers {
        r.await.unwrap();
    }
}
