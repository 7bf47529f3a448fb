use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use therblig_core::record::{read_jsonl, JSONL_HEADER};
use therblig_core::ObjectVocabulary;
use therblig_service::{router, Store, StoreConfig};
use tower::ServiceExt;

const CSV: &str = "video_id,start_frame,stop_frame\nP01_01,0,100\nP01_01,100,200\n";
const SEG: &str = "P01_01_00000000_00000100";

fn app() -> Router {
    let vocab = ObjectVocabulary::new(["knife", "tomato", "bowl"]).unwrap();
    router(Arc::new(Store::in_memory(StoreConfig::new(vocab))))
}

async fn call(app: &Router, method: Method, uri: &str, content_type: &str, body: impl Into<Body>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header(header::CONTENT_TYPE, content_type)
        .body(body.into())
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
    };
    (status, value)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Value) {
    call(app, Method::GET, uri, "application/json", Body::empty()).await
}

async fn post(app: &Router, uri: &str, body: Value) -> (StatusCode, Value) {
    call(app, Method::POST, uri, "application/json", body.to_string()).await
}

async fn ingest(app: &Router) {
    let (status, report) = call(app, Method::POST, "/ingest", "text/csv", CSV).await;
    assert_eq!(status, StatusCode::OK, "{report}");
}

async fn resolve(app: &Router, task: &str, right: Value) {
    for w in 0..5 {
        let (status, _) = post(
            app,
            &format!("/tasks/contact/{task}/response"),
            json!({"worker": format!("w{w}"), "right": right, "left": null}),
        )
        .await;
        assert_eq!(status, StatusCode::OK);
    }
}

#[tokio::test]
async fn ingest_accepts_multipart_and_raw_csv() {
    let app = app();
    let boundary = "XBOUNDARYX";
    let body = format!(
        "--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"s.csv\"\r\n\
         Content-Type: text/csv\r\n\r\n{CSV}\r\n--{boundary}--\r\n"
    );
    let (status, report) = call(
        &app,
        Method::POST,
        "/ingest",
        &format!("multipart/form-data; boundary={boundary}"),
        body,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(report["added"], 2);
    let (_, report) = call(&app, Method::POST, "/ingest", "text/csv", CSV).await;
    assert_eq!((report["added"].clone(), report["duplicates"].clone()), (json!(0), json!(2)));
    let (status, err) = call(&app, Method::POST, "/ingest", "text/csv", "a,b\n1,2\n").await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "bad_request");
}

#[tokio::test]
async fn two_stage_flow() {
    let app = app();
    ingest(&app).await;
    let (status, err) = get(&app, "/tasks/contact/next").await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
    let (status, task) = get(&app, "/tasks/contact/next?worker=w0").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(task["task_id"], "P01_01@0");

    let (status, _) = get(&app, "/tasks/therblig/next?worker=a").await;
    assert_eq!(status, StatusCode::NO_CONTENT);
    resolve(&app, "P01_01@0", Value::Null).await;
    let (status, err) = get(&app, &format!("/tasks/therblig/{SEG}")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "stage1_incomplete");
    resolve(&app, "P01_01@100", json!("knife")).await;
    let (_, view) = get(&app, "/tasks/contact/P01_01@100").await;
    assert_eq!(view["status"], "resolved");
    assert_eq!(view["hands"], json!({"right": "knife", "left": null}));

    let (status, task) = get(&app, "/tasks/therblig/next?worker=a").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(task["task_id"], SEG);
    assert_eq!(task["c_next"]["right"], "knife");

    let uri = format!("/tasks/therblig/{SEG}/candidates");
    let (status, c) = post(&app, &uri, json!({"partial": []})).await;
    assert_eq!(status, StatusCode::OK);
    let offered: Vec<String> = c["candidates"]
        .as_array()
        .unwrap()
        .iter()
        .map(|t| format!("{}:{}", t["verb"].as_str().unwrap(), t["object"].as_str().unwrap_or("-")))
        .collect();
    assert!(offered.contains(&"G:knife".to_string()));
    assert!(!offered.contains(&"M:knife".to_string()));

    let (status, err) = post(&app, &uri, json!({"partial": [{"verb": "M", "object": "tomato"}]})).await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(err["error"], "inconsistent_partial");
    assert_eq!(err["report"]["violations"][0]["rule"], 3);

    let submit = format!("/tasks/therblig/{SEG}/submit");
    let (status, out) = post(
        &app,
        &submit,
        json!({"worker": "a", "therbligs": [{"verb": "M", "object": "tomato"}]}),
    )
    .await;
    assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    assert_eq!(out["status"], "rejected");
    assert_eq!(out["report"]["violations"][0]["step"], 0);

    let good = json!({"worker": "a", "therbligs": [
        {"verb": "Re", "object": "knife"}, {"verb": "G", "object": "knife"}]});
    let (status, out) = post(&app, &submit, good.clone()).await;
    assert_eq!(status, StatusCode::OK, "{out}");
    assert_eq!(out["status"], "accepted");
    let (status, err) = post(&app, &submit, good).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(err["error"], "task_closed");

    let (status, text) = get(&app, "/export?video=P01_01").await;
    assert_eq!(status, StatusCode::OK);
    let records = read_jsonl(text.as_str().unwrap().as_bytes()).unwrap();
    assert_eq!(records.len(), 1);
    assert_eq!(records[0].therbligs.len(), 2);
    let (_, text) = get(&app, "/export?video=other").await;
    assert_eq!(text.as_str().unwrap(), format!("{JSONL_HEADER}\n"));
}

#[tokio::test]
async fn errors_are_json() {
    let app = app();
    ingest(&app).await;
    let uri = "/tasks/contact/P01_01@0/response";
    let (status, err) = post(&app, uri, json!({"worker": "w", "right": "knife", "extra": 1})).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(err["message"].as_str().unwrap().contains("invalid JSON"));
    let (status, err) = call(&app, Method::POST, uri, "application/json", "{not json").await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::BAD_REQUEST, Some("bad_request")));
    post(&app, uri, json!({"worker": "w"})).await;
    let (status, err) = post(&app, uri, json!({"worker": "w"})).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::CONFLICT, Some("duplicate_response")));
    let (status, err) = post(&app, "/tasks/contact/zzz@1/response", json!({"worker": "w"})).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (status, err) = post(&app, "/tasks/therblig/zzz/submit", json!({"worker": "w", "therbligs": []})).await;
    assert_eq!((status, err["error"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (status, err) = post(
        &app,
        &format!("/tasks/therblig/{SEG}/submit"),
        json!({"worker": "w", "therbligs": [{"verb": "Q", "object": "knife"}]}),
    )
    .await;
    assert_eq!(status, StatusCode::BAD_REQUEST, "{err}");
}
