mod common;

use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use common::{request, service};
use greylit_service::api::router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

async fn send(app: &Router, method: Method, uri: &str, body: Option<String>) -> (StatusCode, String, Option<String>) {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let resp = app
        .clone()
        .oneshot(req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap())
        .await
        .unwrap();
    let status = resp.status();
    let ctype = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string());
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap(), ctype)
}

async fn json_of(app: &Router, uri: &str) -> Value {
    let (status, body, _) = send(app, Method::GET, uri, None).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    serde_json::from_str(&body).unwrap()
}

async fn wait_for(app: &Router, run_id: &str, pred: impl Fn(&Value) -> bool) -> Value {
    for _ in 0..500 {
        let run = json_of(app, &format!("/runs/{run_id}")).await;
        if pred(&run) {
            return run;
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("run {run_id} did not reach the expected state");
}

fn create_body(hold: bool) -> String {
    let mut req = request();
    req.hold_for_review = hold;
    serde_json::to_string(&req).unwrap()
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn run_lifecycle_over_http() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(service(dir.path())));

    let (status, body, _) = send(&app, Method::POST, "/runs", Some(create_body(false))).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{body}");
    let run: Value = serde_json::from_str(&body).unwrap();
    let id = run["run_id"].as_str().unwrap().to_string();
    let run = wait_for(&app, &id, |r| r["status"] == "complete").await;
    assert_eq!(run["counts"]["after_dedup"], 39);

    let page = json_of(
        &app,
        &format!("/runs/{id}/results?view=all&source=stackoverflow&offset=2&limit=3"),
    )
    .await;
    assert_eq!(page["total"], 10);
    assert_eq!(page["items"].as_array().unwrap().len(), 3);
    assert_eq!(page["items"][0]["rank"], 3);
    let relevant = json_of(&app, &format!("/runs/{id}/results")).await;
    assert_eq!(relevant["view"], "relevant_only");
    let item_id = relevant["items"][0]["item_id"].as_str().unwrap().to_string();

    let label = json!({"item_id": item_id, "label": "irrelevant", "labeler": "sam"}).to_string();
    let (status, body, _) = send(&app, Method::POST, &format!("/runs/{id}/labels"), Some(label)).await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    let all = json_of(&app, &format!("/runs/{id}/results?view=all&limit=1")).await;
    assert_eq!(all["items"][0]["label"], "irrelevant");

    let (status, csv, ctype) = send(&app, Method::GET, &format!("/runs/{id}/export?format=csv"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(ctype.as_deref(), Some("text/csv"));
    assert_eq!(csv.lines().count(), 40);
    let (status, dataset, _) = send(&app, Method::GET, &format!("/runs/{id}/export?format=dataset"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(dataset.lines().count(), 1);
    let (_, jsonl, ctype) = send(&app, Method::GET, &format!("/runs/{id}/export"), None).await;
    assert_eq!(ctype.as_deref(), Some("application/x-ndjson"));
    assert!(jsonl.starts_with("{\"type\":\"run\""));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(service(dir.path())));

    let (status, body, _) = send(&app, Method::GET, "/runs/run-000042", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(serde_json::from_str::<Value>(&body).unwrap()["error"].is_string());

    let (status, _, _) = send(&app, Method::POST, "/runs", Some("{\"prompt\": 1}".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut bad = serde_json::to_value(request()).unwrap();
    bad["surprise"] = json!(true);
    let (status, _, _) = send(&app, Method::POST, "/runs", Some(bad.to_string())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let mut empty = request();
    empty.prompt = String::new();
    let (status, _, _) = send(
        &app,
        Method::POST,
        "/runs",
        Some(serde_json::to_string(&empty).unwrap()),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST);

    let (_, body, _) = send(&app, Method::POST, "/runs", Some(create_body(true))).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["run_id"]
        .as_str()
        .unwrap()
        .to_string();
    wait_for(&app, &id, |r| r["awaiting_review"] == true).await;
    let (status, _, _) = send(&app, Method::GET, &format!("/runs/{id}/results"), None).await;
    assert_eq!(status, StatusCode::CONFLICT);
    let (status, _, _) = send(&app, Method::GET, &format!("/runs/{id}/export?format=xml"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = send(&app, Method::GET, &format!("/runs/{id}/results?view=sideways"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let label = json!({"item_id": "x", "label": "relevant"}).to_string();
    let (status, _, _) = send(&app, Method::POST, &format!("/runs/{id}/labels"), Some(label)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = send(&app, Method::PUT, &format!("/runs/{id}/queries"), Some("{}".into())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn reviewed_queries_resume_a_held_run() {
    let dir = tempfile::tempdir().unwrap();
    let app = router(Arc::new(service(dir.path())));
    let (_, body, _) = send(&app, Method::POST, "/runs", Some(create_body(true))).await;
    let id = serde_json::from_str::<Value>(&body).unwrap()["run_id"]
        .as_str()
        .unwrap()
        .to_string();
    wait_for(&app, &id, |r| r["awaiting_review"] == true).await;

    let (status, doc, _) = send(&app, Method::GET, &format!("/runs/{id}/queries"), None).await;
    assert_eq!(status, StatusCode::OK);
    let mut doc: Value = serde_json::from_str(&doc).unwrap();
    let queries = doc["queries"].as_array_mut().unwrap();
    queries.retain(|q| q["source"] == "github_issues");
    queries[0]["origin"] = json!("user_edited");

    let (status, body, _) = send(&app, Method::PUT, &format!("/runs/{id}/queries"), Some(doc.to_string())).await;
    assert_eq!(status, StatusCode::OK, "{body}");
    let run = wait_for(&app, &id, |r| r["status"] == "complete").await;
    assert_eq!(run["bundle"]["queries"].as_array().unwrap().len(), 2);
    let page = json_of(&app, &format!("/runs/{id}/results?view=all")).await;
    assert_eq!(page["total"], 10);

    let (status, _, _) = send(&app, Method::PUT, &format!("/runs/{id}/queries"), Some(doc.to_string())).await;
    assert_eq!(status, StatusCode::CONFLICT);
}
