use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

use tablelift::service::{router, AppState, JobState, ServiceConfig};
use tablelift_core::lakeindex::{build_index, KeyColumns};
use tablelift_core::pipeline::{generate_lake, LakeSpec, RunStore, SyntheticLake};
use tablelift_core::textenc::EmbeddingProvider;

const BOUNDARY: &str = "tablelift-test-boundary";

fn lake(query_rows: usize) -> SyntheticLake {
    generate_lake(&LakeSpec {
        table_count: 20,
        query_rows,
        rows_per_table: 40,
        seed: 4,
        ..Default::default()
    })
    .unwrap()
}

fn app_with(lake: &SyntheticLake, config: ServiceConfig, store: Option<RunStore>) -> Router {
    let index = build_index(
        &lake.corpus,
        KeyColumns::First,
        EmbeddingProvider::default(),
        1,
    )
    .unwrap();
    router(Arc::new(
        AppState::new(lake.corpus.clone(), index, config, store).unwrap(),
    ))
}

async fn send(app: &Router, req: Request<Body>) -> (StatusCode, Vec<u8>) {
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let body = resp
        .into_body()
        .collect()
        .await
        .unwrap()
        .to_bytes()
        .to_vec();
    (status, body)
}

async fn get(app: &Router, uri: &str) -> (StatusCode, Vec<u8>) {
    send(app, Request::get(uri).body(Body::empty()).unwrap()).await
}

async fn get_json(app: &Router, uri: &str) -> (StatusCode, Value) {
    let (status, body) = get(app, uri).await;
    (status, serde_json::from_slice(&body).unwrap_or(Value::Null))
}

fn multipart(csv: &[u8]) -> Request<Body> {
    let mut body = format!(
        "--{BOUNDARY}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"q.csv\"\r\nContent-Type: text/csv\r\n\r\n"
    )
    .into_bytes();
    body.extend_from_slice(csv);
    body.extend_from_slice(format!("\r\n--{BOUNDARY}--\r\n").as_bytes());
    Request::post("/api/tables")
        .header(
            "content-type",
            format!("multipart/form-data; boundary={BOUNDARY}"),
        )
        .body(Body::from(body))
        .unwrap()
}

async fn upload(app: &Router, csv: &[u8]) -> String {
    let (status, body) = send(app, multipart(csv)).await;
    assert_eq!(
        status,
        StatusCode::CREATED,
        "{}",
        String::from_utf8_lossy(&body)
    );
    let v: Value = serde_json::from_slice(&body).unwrap();
    v["table_token"].as_str().unwrap().to_string()
}

async fn submit(app: &Router, body: Value) -> (StatusCode, Value) {
    let req = Request::post("/api/jobs")
        .header("content-type", "application/json")
        .body(Body::from(body.to_string()))
        .unwrap();
    let (status, bytes) = send(app, req).await;
    (status, serde_json::from_slice(&bytes).unwrap())
}

fn job_body(token: &str, lake: &SyntheticLake, config: Value) -> Value {
    json!({
        "table_token": token,
        "key": "game",
        "task": "sales",
        "config": config,
    })
    .as_object()
    .cloned()
    .map(|mut o| {
        o["config"]["entity_name"] = json!(lake.entity_name);
        Value::Object(o)
    })
    .unwrap()
}

fn fast_config() -> Value {
    json!({ "k": 10, "m": 3, "seed": 2 })
}

/// A configuration slow enough that the job is still running when it is probed.
fn slow_config() -> Value {
    json!({ "k": 60, "m": 20, "model": "random_forest", "hyperparameters": { "forest": { "n_trees": 100 } } })
}

/// Polls until the job is terminal, returning every distinct state observed.
async fn wait(app: &Router, id: &str) -> Vec<JobState> {
    let start = Instant::now();
    let mut seen: Vec<JobState> = vec![];
    loop {
        let (status, v) = get_json(app, &format!("/api/jobs/{id}")).await;
        assert_eq!(status, StatusCode::OK);
        let state: JobState = serde_json::from_value(v["state"].clone()).unwrap();
        if seen.last() != Some(&state) {
            seen.push(state);
        }
        if state == JobState::Done || state == JobState::Failed {
            return seen;
        }
        assert!(
            start.elapsed() < Duration::from_secs(120),
            "job {id} stuck in {state:?}"
        );
        tokio::time::sleep(Duration::from_millis(5)).await;
    }
}

fn classification_csv(lake: &SyntheticLake) -> Vec<u8> {
    let q = &lake.query;
    let mut sales: Vec<f64> = (0..q.num_rows())
        .map(|r| q.task_cell(r).parse().unwrap())
        .collect();
    let labels: Vec<&str> = sales
        .iter()
        .map(|&s| if s >= 50.0 { "hit" } else { "flop" })
        .collect();
    sales.clear();
    let mut w = String::from("game,sales\n");
    for (r, label) in labels.iter().enumerate() {
        w.push_str(&format!("{},{label}\n", q.key_cell(r)));
    }
    w.into_bytes()
}

#[tokio::test(flavor = "multi_thread")]
async fn regression_job_lifecycle() {
    let lake = lake(80);
    let dir = tempfile::tempdir().unwrap();
    let app = app_with(
        &lake,
        ServiceConfig::default(),
        Some(RunStore::open(dir.path()).unwrap()),
    );
    let token = upload(&app, &lake.query.to_csv()).await;

    let (status, v) = get_json(&app, &format!("/api/tables/{token}")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["columns"], json!(["game", "sales"]));
    assert_eq!(v["row_count"], 80);
    assert_eq!(v["preview"].as_array().unwrap().len(), 20);

    let (status, v) = submit(&app, job_body(&token, &lake, fast_config())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = v["job_id"].as_str().unwrap().to_string();

    let states = wait(&app, &id).await;
    assert!(states.windows(2).all(|w| w[0] < w[1]), "{states:?}");
    assert_eq!(states.last(), Some(&JobState::Done));

    let (_, status) = get_json(&app, &format!("/api/jobs/{id}")).await;
    assert_eq!(
        status["links"]["results"],
        format!("/api/jobs/{id}/results")
    );

    let (status, results) = get_json(&app, &format!("/api/jobs/{id}/results")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(results["before"]["metric"], "MSE");
    assert!(
        results["after"]["mean"].as_f64().unwrap() < results["before"]["mean"].as_f64().unwrap()
    );
    let features = results["importance"]["features"].as_array().unwrap();
    assert!(features.iter().any(|f| f["origin"] == "enriched"));
    assert!(features
        .iter()
        .all(|f| f["origin"] == "enriched" || f["origin"] == "query"));

    let (status, prov) = get_json(&app, &format!("/api/jobs/{id}/provenance")).await;
    assert_eq!(status, StatusCode::OK);
    let prov = prov.as_array().unwrap();
    assert_eq!(prov.len(), 3);
    let scores: Vec<f64> = prov.iter().map(|p| p["score"].as_f64().unwrap()).collect();
    assert!(scores.windows(2).all(|w| w[0] >= w[1]));

    let resp = app
        .clone()
        .oneshot(
            Request::get(format!("/api/jobs/{id}/enriched.csv"))
                .body(Body::empty())
                .unwrap(),
        )
        .await
        .unwrap();
    assert_eq!(resp.status(), StatusCode::OK);
    assert!(resp.headers()["content-type"]
        .to_str()
        .unwrap()
        .starts_with("text/csv"));
    assert!(resp.headers()["content-disposition"]
        .to_str()
        .unwrap()
        .contains("attachment"));
    let csv = resp.into_body().collect().await.unwrap().to_bytes();
    assert_eq!(String::from_utf8_lossy(&csv).lines().count(), 81);

    let (status, diffs) = get_json(&app, &format!("/api/jobs/{id}/diffs")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(diffs["supported"], false);
    assert_eq!(diffs["error"], "UnsupportedTask");

    // reads of a finished job are byte-identical
    for path in ["", "/results", "/provenance", "/enriched.csv", "/diffs"] {
        let uri = format!("/api/jobs/{id}{path}");
        assert_eq!(get(&app, &uri).await, get(&app, &uri).await, "{uri}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn classification_diffs_filter() {
    let lake = lake(80);
    let app = app_with(&lake, ServiceConfig::default(), None);
    let token = upload(&app, &classification_csv(&lake)).await;
    let mut body = job_body(&token, &lake, fast_config());
    body["task_kind"] = json!("classification");
    let (status, v) = submit(&app, body).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let id = v["job_id"].as_str().unwrap().to_string();
    assert_eq!(wait(&app, &id).await.last(), Some(&JobState::Done));

    let (_, results) = get_json(&app, &format!("/api/jobs/{id}/results")).await;
    assert_eq!(results["after"]["metric"], "macroF1");

    let (status, all) = get_json(&app, &format!("/api/jobs/{id}/diffs?filter=all")).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(all["supported"], true);
    let (_, fixed) = get_json(&app, &format!("/api/jobs/{id}/diffs?filter=fixed")).await;
    let (_, broken) = get_json(&app, &format!("/api/jobs/{id}/diffs?filter=broken")).await;
    assert!(fixed["rows"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["flag"] == "fixed"));
    assert!(broken["rows"]
        .as_array()
        .unwrap()
        .iter()
        .all(|r| r["flag"] == "broken"));
    let n = |v: &Value| v["rows"].as_array().unwrap().len();
    assert!(n(&fixed) + n(&broken) <= n(&all));
    assert!(n(&fixed) > 0, "enrichment should fix some records");

    let (status, err) = get_json(&app, &format!("/api/jobs/{id}/diffs?filter=sideways")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(err["error"], "InvalidFilter");
}

#[tokio::test(flavor = "multi_thread")]
async fn validation_errors() {
    let lake = lake(40);
    let app = app_with(&lake, ServiceConfig::default(), None);
    let token = upload(&app, &lake.query.to_csv()).await;

    let mut body = job_body(&token, &lake, fast_config());
    body["key"] = json!("title");
    let (status, v) = submit(&app, body).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "UnknownColumn");

    let (status, v) = submit(&app, job_body("nope", &lake, fast_config())).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "UnknownTable");

    let (status, v) = submit(&app, job_body(&token, &lake, json!({ "k": 0 }))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "InvalidConfig");

    let (status, v) = submit(&app, json!({ "key": "game" })).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(v["error"], "InvalidRequest");

    let (status, body) = send(&app, multipart(b"")).await;
    assert_eq!(
        status,
        StatusCode::BAD_REQUEST,
        "{}",
        String::from_utf8_lossy(&body)
    );

    for path in ["", "/results", "/provenance", "/enriched.csv", "/diffs"] {
        let (status, v) = get_json(&app, &format!("/api/jobs/missing{path}")).await;
        assert_eq!(status, StatusCode::NOT_FOUND, "{path}");
        assert_eq!(v["error"], "UnknownJob");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn unfinished_job_conflicts_and_queue_limit() {
    let lake = lake(300);
    let config = ServiceConfig {
        concurrency: 1,
        queue_capacity: 1,
        ..Default::default()
    };
    let app = app_with(&lake, config, None);
    let token = upload(&app, &lake.query.to_csv()).await;
    let (status, v) = submit(&app, job_body(&token, &lake, slow_config())).await;
    assert_eq!(status, StatusCode::ACCEPTED, "{v}");
    let id = v["job_id"].as_str().unwrap().to_string();

    let (status, v) = get_json(&app, &format!("/api/jobs/{id}/results")).await;
    assert_eq!(status, StatusCode::CONFLICT);
    assert_eq!(v["error"], "JobNotFinished");

    let (status, v) = submit(&app, job_body(&token, &lake, fast_config())).await;
    assert_eq!(status, StatusCode::SERVICE_UNAVAILABLE);
    assert_eq!(v["error"], "QueueFull");

    assert_eq!(wait(&app, &id).await.last(), Some(&JobState::Done));
    let (status, _) = submit(&app, job_body(&token, &lake, fast_config())).await;
    assert_eq!(status, StatusCode::ACCEPTED);
}

#[tokio::test(flavor = "multi_thread")]
async fn no_enrich_has_empty_provenance() {
    let lake = lake(40);
    let app = app_with(&lake, ServiceConfig::default(), None);
    let token = upload(&app, &lake.query.to_csv()).await;
    let (_, v) = submit(
        &app,
        job_body(&token, &lake, json!({ "mode": "no_enrich" })),
    )
    .await;
    let id = v["job_id"].as_str().unwrap().to_string();
    let states = wait(&app, &id).await;
    assert_eq!(states.last(), Some(&JobState::Done));
    assert!(!states.contains(&JobState::Searching));
    let (_, prov) = get_json(&app, &format!("/api/jobs/{id}/provenance")).await;
    assert_eq!(prov, json!([]));
    let (_, results) = get_json(&app, &format!("/api/jobs/{id}/results")).await;
    assert_eq!(results["improvement_percent"], 0.0);
}

#[tokio::test(flavor = "multi_thread")]
async fn finished_jobs_survive_restart() {
    let lake = lake(60);
    let dir = tempfile::tempdir().unwrap();
    let first = app_with(
        &lake,
        ServiceConfig::default(),
        Some(RunStore::open(dir.path()).unwrap()),
    );
    let token = upload(&first, &lake.query.to_csv()).await;
    let (_, v) = submit(&first, job_body(&token, &lake, fast_config())).await;
    let id = v["job_id"].as_str().unwrap().to_string();
    wait(&first, &id).await;
    let (_, before) = get(&first, &format!("/api/jobs/{id}/results")).await;
    let (_, csv_before) = get(&first, &format!("/api/jobs/{id}/enriched.csv")).await;
    drop(first);

    let second = app_with(
        &lake,
        ServiceConfig::default(),
        Some(RunStore::open(dir.path()).unwrap()),
    );
    let (status, listed) = get_json(&second, "/api/jobs").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(listed.as_array().unwrap().len(), 1);
    assert_eq!(
        get(&second, &format!("/api/jobs/{id}/results")).await,
        (StatusCode::OK, before)
    );
    assert_eq!(
        get(&second, &format!("/api/jobs/{id}/enriched.csv")).await,
        (StatusCode::OK, csv_before)
    );
}

#[tokio::test]
async fn upload_cap_health_and_ui() {
    let lake = lake(40);
    let small = ServiceConfig {
        max_upload_bytes: 256,
        ..Default::default()
    };
    let app = app_with(&lake, small, None);
    let (status, _) = send(&app, multipart(&lake.query.to_csv())).await;
    assert_eq!(status, StatusCode::PAYLOAD_TOO_LARGE);

    let (status, v) = get_json(&app, "/api/health").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(v["tables"], 20);
    assert_eq!(get_json(&app, "/ui/").await.0, StatusCode::NOT_FOUND);

    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<h1>tablelift</h1>").unwrap();
    let with_ui = app_with(
        &lake,
        ServiceConfig {
            ui_dir: Some(ui.path().to_path_buf()),
            ..Default::default()
        },
        None,
    );
    let (status, body) = get(&with_ui, "/ui/index.html").await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body, b"<h1>tablelift</h1>");
}
