use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use cobras_service::service::{router, AppState, ServiceConfig};
use cobras_ts::ucr::to_ucr_string;
use cobras_ts::{
    generate_cbf, parse_ucr, read_query_log_csv, run, CbfParams, DatasetF64, Delimiter, EngineConfig, LabelOracle,
    Prepared, QueryRecord, ReplayOracle,
};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

struct Harness {
    _dir: tempfile::TempDir,
    config: ServiceConfig,
}

impl Harness {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let config = ServiceConfig {
            data_dir: dir.path().join("data"),
            session_dir: dir.path().join("sessions"),
            answer_timeout: None,
        };
        Self { _dir: dir, config }
    }

    fn open(&self) -> (AppState, Router) {
        let state = AppState::open(self.config.clone()).unwrap();
        (state.clone(), router(state))
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<&str>) -> (StatusCode, Value) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let value =
        serde_json::from_slice(&bytes).unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()));
    (status, value)
}

fn cbf(seed: u64) -> DatasetF64 {
    generate_cbf(&CbfParams {
        per_class_count: 5,
        length: 64,
        noise_std: 0.05,
        rng_seed: seed,
    })
    .unwrap()
}

async fn upload(app: &Router, id: &str, ds: &DatasetF64) {
    let (status, body) = call(
        app,
        "POST",
        &format!("/datasets/{id}"),
        Some(&to_ucr_string(ds, Delimiter::Comma)),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    assert_eq!(body["n"], ds.len());
}

async fn create(app: &Router, dataset: &str, config: &EngineConfig) -> String {
    let body = json!({ "dataset_id": dataset, "config": config }).to_string();
    let (status, resp) = call(app, "POST", "/sessions", Some(&body)).await;
    assert_eq!(status, StatusCode::CREATED, "{resp}");
    resp["session_id"].as_str().unwrap().to_string()
}

async fn next_query(app: &Router, sid: &str) -> Value {
    let (status, q) = call(app, "GET", &format!("/sessions/{sid}/query?wait_ms=10000"), None).await;
    assert_eq!(status, StatusCode::OK);
    q
}

/// Answer the pending query from the labels. Returns false once the run is over.
async fn answer_one(app: &Router, sid: &str, labels: &[String]) -> bool {
    let q = next_query(app, sid).await;
    if q["phase"] != "awaiting_answer" {
        return false;
    }
    let (i, j) = (
        q["pair"][0].as_u64().unwrap() as usize,
        q["pair"][1].as_u64().unwrap() as usize,
    );
    let relation = if labels[i] == labels[j] {
        "must_link"
    } else {
        "cannot_link"
    };
    let body = json!({ "relation": relation, "query_seq": q["query_seq"] }).to_string();
    let (status, ack) = call(app, "POST", &format!("/sessions/{sid}/answer"), Some(&body)).await;
    assert_eq!(status, StatusCode::OK, "{ack}");
    assert_eq!(ack["query_seq"], q["query_seq"]);
    true
}

async fn log_of(app: &Router, sid: &str) -> Vec<QueryRecord> {
    let (status, log) = call(app, "GET", &format!("/sessions/{sid}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    serde_json::from_value(log["queries"].clone()).unwrap()
}

async fn assignment_of(app: &Router, sid: &str) -> Vec<usize> {
    let (_, c) = call(app, "GET", &format!("/sessions/{sid}/clustering"), None).await;
    serde_json::from_value(c["assignment"].clone()).unwrap()
}

#[tokio::test(flavor = "multi_thread")]
async fn error_statuses() {
    let h = Harness::new();
    let (_, app) = h.open();
    for (method, uri) in [
        ("GET", "/sessions/nope/query"),
        ("GET", "/sessions/nope/clustering"),
        ("GET", "/sessions/nope/log"),
        ("DELETE", "/sessions/nope"),
    ] {
        assert_eq!(
            call(&app, method, uri, None).await.0,
            StatusCode::NOT_FOUND,
            "{method} {uri}"
        );
    }
    let answer = json!({ "relation": "must_link" }).to_string();
    assert_eq!(
        call(&app, "POST", "/sessions/nope/answer", Some(&answer)).await.0,
        StatusCode::NOT_FOUND
    );

    let ds = cbf(1);
    upload(&app, "cbf", &ds).await;
    let text = to_ucr_string(&ds, Delimiter::Comma);
    assert_eq!(
        call(&app, "POST", "/datasets/cbf", Some(&text)).await.0,
        StatusCode::CONFLICT
    );
    assert_eq!(
        call(&app, "POST", "/datasets/broken", Some("a,1,x\n")).await.0,
        StatusCode::BAD_REQUEST
    );
    assert_eq!(
        call(&app, "POST", "/datasets/.hidden", Some(&text)).await.0,
        StatusCode::BAD_REQUEST
    );

    for body in [
        "{not json",
        r#"{"config": {}}"#,
        r#"{"dataset_id": "cbf", "config": {"gamma": -1}}"#,
        r#"{"dataset_id": "cbf", "config": {"colour": "red"}}"#,
        r#"{"dataset_id": "cbf", "extra": 1}"#,
    ] {
        assert_eq!(
            call(&app, "POST", "/sessions", Some(body)).await.0,
            StatusCode::BAD_REQUEST,
            "{body}"
        );
    }
    let (status, _) = call(&app, "POST", "/sessions", Some(r#"{"dataset_id": "missing"}"#)).await;
    assert_eq!(status, StatusCode::NOT_FOUND);

    let sid = create(&app, "cbf", &EngineConfig::default()).await;
    let q = next_query(&app, &sid).await;
    assert_eq!(q["phase"], "awaiting_answer");
    assert_eq!(q["queries_used"], 0);
    assert_eq!(q["budget"], 50);
    assert_eq!(q["series_i"].as_array().unwrap().len(), 64);
    assert_eq!(q["series_j"].as_array().unwrap().len(), 64);

    let url = format!("/sessions/{sid}/answer");
    for body in [
        "",
        "{}",
        r#"{"relation": "maybe"}"#,
        r#"{"relation": "must_link", "why": 1}"#,
    ] {
        assert_eq!(
            call(&app, "POST", &url, Some(body)).await.0,
            StatusCode::BAD_REQUEST,
            "{body}"
        );
    }
    let stale = json!({ "relation": "must_link", "query_seq": 7 }).to_string();
    assert_eq!(call(&app, "POST", &url, Some(&stale)).await.0, StatusCode::CONFLICT);

    // The same answer posted twice: the second must not reach the next query.
    let once = json!({ "relation": "cannot_link", "query_seq": 0 }).to_string();
    assert_eq!(call(&app, "POST", &url, Some(&once)).await.0, StatusCode::OK);
    assert_eq!(call(&app, "POST", &url, Some(&once)).await.0, StatusCode::CONFLICT);
    assert_eq!(next_query(&app, &sid).await["query_seq"], 1);
    assert_eq!(log_of(&app, &sid).await.len(), 1);

    let (status, del) = call(&app, "DELETE", &format!("/sessions/{sid}"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(del["phase"], "aborted");
    assert_eq!(call(&app, "POST", &url, Some(&answer)).await.0, StatusCode::CONFLICT);
    assert_eq!(next_query(&app, &sid).await["phase"], "aborted");

    let (status, _) = call(&app, "GET", &format!("/sessions/{sid}/log?format=xml"), None).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn http_sessions_match_in_process_replay() {
    let h = Harness::new();
    let (_, app) = h.open();
    let ds = cbf(2);
    upload(&app, "cbf", &ds).await;
    let stored: DatasetF64 = parse_ucr(&to_ucr_string(&ds, Delimiter::Comma), "cbf", None).unwrap();
    let labels = stored.labels().unwrap().to_vec();

    let configs = [
        EngineConfig {
            budget: 20,
            rng_seed: 3,
            ..Default::default()
        },
        EngineConfig {
            budget: 12,
            rng_seed: 4,
            refiner: cobras_ts::Refiner::KShape,
            ..Default::default()
        },
    ];
    let mut sids = Vec::new();
    for c in &configs {
        sids.push(create(&app, "cbf", c).await);
    }
    // Interleave the two sessions one answer at a time.
    let mut live = vec![true; sids.len()];
    while live.iter().any(|&l| l) {
        for (k, sid) in sids.iter().enumerate() {
            if live[k] {
                live[k] = answer_one(&app, sid, &labels).await;
            }
        }
    }

    for (sid, config) in sids.iter().zip(&configs) {
        let q = next_query(&app, sid).await;
        assert_eq!(q["phase"], "finished");
        let log = log_of(&app, sid).await;
        assert!(log.len() <= config.budget);
        assert!(log.iter().all(|r| r.latency_ms.is_some()));

        let prepared = Prepared::new(&stored, config).unwrap();
        let mask = vec![true; stored.len()];
        let replayed = run(&prepared, ReplayOracle::new(log.clone()), &mask).unwrap();
        assert_eq!(assignment_of(&app, sid).await, replayed.clustering.assignment);
        assert_eq!(replayed.log.len(), log.len());

        let direct = run(&prepared, LabelOracle::new(&labels), &mask).unwrap();
        let pairs = |l: &[QueryRecord]| l.iter().map(|r| (r.i, r.j, r.answer)).collect::<Vec<_>>();
        assert_eq!(pairs(&direct.log), pairs(&log));
        assert_eq!(direct.clustering, replayed.clustering);

        for (q, snap) in replayed.snapshots.iter().enumerate() {
            let (status, c) = call(&app, "GET", &format!("/sessions/{sid}/clustering?at={q}"), None).await;
            assert_eq!(status, StatusCode::OK);
            assert_eq!(c["assignment"], json!(snap.assignment));
        }
        let past = replayed.snapshots.len();
        let (status, _) = call(&app, "GET", &format!("/sessions/{sid}/clustering?at={past}"), None).await;
        assert_eq!(status, StatusCode::NOT_FOUND);

        let (_, c) = call(&app, "GET", &format!("/sessions/{sid}/clustering"), None).await;
        let clusters = c["clusters"].as_array().unwrap();
        assert_eq!(clusters.len(), replayed.clustering.n_clusters());
        for cl in clusters {
            for si in cl["super_instances"].as_array().unwrap() {
                let rep = si["representative"].as_u64().unwrap() as usize;
                assert_eq!(si["representative_series"], json!(stored.get(rep).values()));
            }
        }

        let (status, csv) = call(&app, "GET", &format!("/sessions/{sid}/log?format=csv"), None).await;
        assert_eq!(status, StatusCode::OK);
        let from_csv = read_query_log_csv(csv.as_str().unwrap().as_bytes()).unwrap();
        assert_eq!(pairs(&from_csv), pairs(&log));
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn restart_resumes_at_the_pending_query() {
    let h = Harness::new();
    let ds = cbf(5);
    let labels = ds.labels().unwrap().to_vec();
    let config = EngineConfig {
        budget: 25,
        rng_seed: 9,
        ..Default::default()
    };

    let (state, app) = h.open();
    upload(&app, "cbf", &ds).await;
    let sid = create(&app, "cbf", &config).await;
    for _ in 0..3 {
        assert!(answer_one(&app, &sid, &labels).await);
    }
    let before = next_query(&app, &sid).await;
    assert_eq!(before["query_seq"], 3);
    let early_log = log_of(&app, &sid).await;
    state.shutdown();
    drop(app);

    let (_, app) = h.open();
    let after = next_query(&app, &sid).await;
    assert_eq!(after["phase"], "awaiting_answer");
    assert_eq!(after["query_seq"], before["query_seq"]);
    assert_eq!(after["pair"], before["pair"]);
    assert_eq!(
        log_of(&app, &sid).await,
        early_log,
        "answers and latencies survive the restart"
    );

    while answer_one(&app, &sid, &labels).await {}
    let prepared = Prepared::new(&ds, &config).unwrap();
    let direct = run(&prepared, LabelOracle::new(&labels), &vec![true; ds.len()]).unwrap();
    assert_eq!(assignment_of(&app, &sid).await, direct.clustering.assignment);
    assert_eq!(log_of(&app, &sid).await.len(), direct.log.len());
}

#[tokio::test(flavor = "multi_thread")]
async fn aborted_sessions_stay_aborted_after_restart() {
    let h = Harness::new();
    let ds = cbf(6);
    let labels = ds.labels().unwrap().to_vec();
    let (state, app) = h.open();
    upload(&app, "cbf", &ds).await;
    let sid = create(&app, "cbf", &EngineConfig::default()).await;
    assert!(answer_one(&app, &sid, &labels).await);
    assert!(answer_one(&app, &sid, &labels).await);
    let (_, del) = call(&app, "DELETE", &format!("/sessions/{sid}"), None).await;
    assert_eq!(del["phase"], "aborted");
    let log = log_of(&app, &sid).await;
    assert_eq!(log.len(), 2, "an acknowledged answer is never dropped");
    let assignment = assignment_of(&app, &sid).await;
    state.shutdown();

    let (_, app) = h.open();
    let q = next_query(&app, &sid).await;
    assert_eq!(q["phase"], "aborted");
    assert_eq!(q["outcome"], "aborted");
    assert_eq!(log_of(&app, &sid).await, log);
    assert_eq!(assignment_of(&app, &sid).await, assignment);
}
