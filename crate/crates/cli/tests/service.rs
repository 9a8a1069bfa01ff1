use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use prm_cli::service::router;
use prm_drift::bundled::{demo_pipeline, TABLE1};
use prm_drift::data::synthetic::{generate_synthetic, SyntheticConfig};
use prm_drift::io::to_json_pretty;
use prm_drift::scenario::ScenarioSpec;
use prm_drift::session::Session;
use serde_json::Value;
use tower::ServiceExt;

fn session() -> Arc<Session> {
    let (_, d2, _) = generate_synthetic(&SyntheticConfig::two_regime(10, 2000, 3)).unwrap();
    Arc::new(Session::new(demo_pipeline(), d2).unwrap())
}

async fn call(s: &Arc<Session>, req: Request<Body>) -> (StatusCode, String) {
    let resp = router(s.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    assert_eq!(resp.headers()["content-type"], "application/json");
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn get(uri: &str) -> Request<Body> {
    Request::get(uri).body(Body::empty()).unwrap()
}

fn post(uri: &str, body: &str) -> Request<Body> {
    Request::post(uri).body(Body::from(body.to_string())).unwrap()
}

#[tokio::test]
async fn model_lists_the_bundled_layer() {
    let s = session();
    let (status, body) = call(&s, get("/v1/model")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    let rules = v["rules"].as_array().unwrap();
    assert_eq!(rules.len(), 16);
    for (id, feature, points) in TABLE1 {
        let row = rules.iter().find(|r| r["id"] == id).unwrap();
        assert_eq!(row["definition"], feature);
        assert!((row["points"].as_f64().unwrap() - points).abs() < 1e-9, "{id}");
    }
    assert_eq!(rules.last().unwrap()["id"], "R-16");
}

#[tokio::test]
async fn health_bands_and_clusters() {
    let s = session();
    assert_eq!(call(&s, get("/v1/health")).await.0, StatusCode::OK);

    let (status, body) = call(&s, get("/v1/bands?variable=cscore&cuts=700,750")).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["bands"].as_array().unwrap().len(), 4);
    assert_eq!(body, to_json_pretty(&s.bands(Some("cscore"), Some(&[700.0, 750.0])).unwrap()).unwrap());

    let (status, body) = call(&s, get("/v1/clusters?min_support=0.1&max_size=3")).await;
    assert_eq!(status, StatusCode::OK);
    for c in serde_json::from_str::<Value>(&body).unwrap().as_array().unwrap() {
        assert!(c["support"].as_f64().unwrap() >= 0.1);
        assert!((2..=3).contains(&c["rules"].as_array().unwrap().len()));
    }
}

#[tokio::test]
async fn explain_known_and_unknown_records() {
    let s = session();
    let id = s.data().record_ids()[5].clone();
    let (status, body) = call(&s, get(&format!("/v1/explain/{id}"))).await;
    assert_eq!(status, StatusCode::OK);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert_eq!(v["record_id"], id.as_str());

    let (status, body) = call(&s, get("/v1/explain/no-such-loan")).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    assert!(serde_json::from_str::<Value>(&body).unwrap()["error"].is_string());
}

#[tokio::test]
async fn scenario_body_matches_the_session_document() {
    let s = session();
    let text = r#"{"name":"stress","overrides":[{"rule":"R-13","action":"scale_points","factor":2}],"crisis_likelihood":0.25}"#;
    let (status, body) = call(&s, post("/v1/scenario", text)).await;
    assert_eq!(status, StatusCode::OK);
    let spec = ScenarioSpec::from_json(text).unwrap();
    assert_eq!(body, to_json_pretty(&s.scenario(&spec, None, None).unwrap()).unwrap());
}

#[tokio::test]
async fn invalid_scenarios_name_the_offending_fields() {
    let s = session();
    let text = r#"{"name":"bad","overrides":[
        {"rule":"R-99","action":"disable"},
        {"rule":"R-01","action":"set_premise","premise":[{"feature":"nope"}]}
    ],"crisis_likelihood":1.5}"#;
    let (status, body) = call(&s, post("/v1/scenario", text)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    let fields: Vec<&str> = v["errors"].as_array().unwrap().iter().map(|e| e["field"].as_str().unwrap()).collect();
    assert!(fields.contains(&"overrides[0].rule"), "{fields:?}");
    assert!(fields.contains(&"overrides[1].premise[0].feature"), "{fields:?}");
    assert!(fields.contains(&"crisis_likelihood"), "{fields:?}");

    let (status, body) = call(&s, post("/v1/scenario", r#"{"name":"x","overrides":[{"rule":"R-01","action":"explode"}]}"#)).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&body).unwrap();
    assert!(v["errors"][0]["field"].as_str().unwrap().starts_with("overrides[0]"), "{body}");

    let (status, _) = call(&s, get("/v1/bands?cuts=1,x")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, get("/v1/bands?variable=nope")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _) = call(&s, get("/v1/clusters?max_size=9")).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
}
