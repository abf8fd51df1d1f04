use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use botdyn::models::{make_modk, AnyModel, TabularModel};
use botdyn::Alphabet;
use botdyn_service::http::{router, AppState};
use botdyn_service::store::ModelStore;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app() -> Router {
    let store = ModelStore::new();
    store.insert("modk", AnyModel::ModK(make_modk(5, 6, 4, &[1, 2, 3, 1, 1, 1]).unwrap()));
    store.insert("rand", AnyModel::Tabular(TabularModel::random(Alphabet::toy(4), 4, 2.0, &mut botdyn::dynamics::rng_stream(1, 0))));
    router(AppState::new(store, 0, 2, 8).unwrap())
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = axum::body::to_bytes(resp.into_body(), 1 << 24).await.unwrap();
    (status, serde_json::from_slice(&bytes).unwrap())
}

async fn finish(app: &Router, submitted: (StatusCode, Value)) -> Value {
    assert_eq!(submitted.0, StatusCode::ACCEPTED, "{}", submitted.1);
    let id = submitted.1["job"].as_u64().unwrap();
    loop {
        let (s, v) = call(app, "GET", &format!("/v1/jobs/{id}"), None).await;
        assert_eq!(s, StatusCode::OK);
        match v["state"]["status"].as_str().unwrap() {
            "queued" | "running" => tokio::time::sleep(std::time::Duration::from_millis(5)).await,
            _ => return v["state"].clone(),
        }
    }
}

#[tokio::test]
async fn sessions_end_to_end() {
    let app = app();
    let (s, v) = call(&app, "POST", "/v1/sessions", Some(json!({"model": "rand", "seed": 5}))).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["schema_version"], 1);
    let id = v["session"].as_u64().unwrap();
    let (s, v) = call(&app, "POST", &format!("/v1/sessions/{id}/turn"), Some(json!({"tokens": ["a", "b"]}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    for field in ["context", "meaning_class", "toxic_score", "absorption", "intervention"] {
        assert!(v["snapshot"].get(field).is_some(), "missing {field}");
    }
    let (_, snap) = call(&app, "GET", &format!("/v1/sessions/{id}/snapshot"), None).await;
    assert_eq!(snap["context"], v["snapshot"]["context"]);
    let (_, t) = call(&app, "GET", &format!("/v1/sessions/{id}/transcript"), None).await;
    assert!(t["transcript"].as_str().unwrap().starts_with("# botdyn transcript v1"));
    let (_, list) = call(&app, "GET", "/v1/sessions", None).await;
    assert_eq!(list["sessions"].as_array().unwrap().len(), 1);
    assert_eq!(call(&app, "DELETE", &format!("/v1/sessions/{id}"), None).await.0, StatusCode::OK);
    let (s, v) = call(&app, "GET", &format!("/v1/sessions/{id}/snapshot"), None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert_eq!(v["error"]["code"], "not_found");
}

#[tokio::test]
async fn structured_errors() {
    let app = app();
    let (s, v) = call(&app, "POST", "/v1/sessions", Some(json!({"model": "missing"}))).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::NOT_FOUND, Some("not_found")));
    let (s, v) = call(&app, "POST", "/v1/sessions", Some(json!({"modl": "rand"}))).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("invalid_argument")));
    let (s, _) = call(&app, "POST", "/v1/sessions", Some(json!({"model": "rand"}))).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = call(&app, "POST", "/v1/sessions/1/turn", Some(json!({"tokens": ["q"]}))).await;
    assert_eq!((s, v["error"]["code"].as_str()), (StatusCode::BAD_REQUEST, Some("validation")));
    assert_eq!(call(&app, "GET", "/v1/jobs/99", None).await.0, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn analysis_jobs() {
    let app = app();
    let cert = finish(&app, call(&app, "POST", "/v1/certify", Some(json!({"model": "modk", "ell": 4}))).await).await;
    assert_eq!(cert["status"], "done");
    assert_eq!(cert["result"]["verdict"], true);
    assert_eq!(cert["result"]["coverage"], "exhaustive");

    let plan = finish(
        &app,
        call(&app, "POST", "/v1/synthesize", Some(json!({"model": "modk", "start": ["a","b","c","a","b","c"], "target": ["c","EOS","a","b"]}))).await,
    )
    .await;
    assert_eq!(plan["status"], "done", "{plan}");
    assert_eq!(plan["result"]["trajectory"].as_array().unwrap().last().unwrap().as_array().unwrap()[2..], [json!("c"), json!("EOS"), json!("a"), json!("b")]);

    let over = json!({"model": "rand", "origin": {"token": "a"}, "horizon": 40, "theta": 0.0});
    let r = finish(&app, call(&app, "POST", "/v1/reach", Some(over)).await).await;
    assert_eq!(r["status"], "failed");
    assert_eq!(r["error"]["code"], "budget_exceeded");

    let ok = json!({"model": "rand", "origin": {"prior": "content"}, "horizon": 3, "theta": 0.01});
    let r = finish(&app, call(&app, "POST", "/v1/reach", Some(ok)).await).await;
    let mass: f64 = r["result"]["reached"].as_array().unwrap().iter().map(|x| x["prob"].as_f64().unwrap()).sum::<f64>()
        + ["below_theta_mass", "continuation_mass", "pruned_mass"].iter().map(|k| r["result"][k].as_f64().unwrap()).sum::<f64>();
    assert!((mass - 1.0).abs() < 1e-9);

    let spec = "scenario phi1\ntoxic a EOS\n";
    let g = finish(&app, call(&app, "POST", "/v1/game", Some(json!({"model": "rand", "spec": spec, "horizon": 4, "compare_epsilon": 0.2}))).await).await;
    assert_eq!(g["status"], "done", "{g}");
    assert_eq!(g["result"]["values"].as_array().unwrap().len(), 256);
    assert_eq!(g["result"]["ordering_violations"], 0);
}

#[tokio::test]
async fn reach_from_session_uses_its_open_sentence() {
    let app = app();
    let (_, v) = call(&app, "POST", "/v1/sessions", Some(json!({"model": "rand", "prompt": ["a", "b"]}))).await;
    let id = v["session"].as_u64().unwrap();
    let r = finish(&app, call(&app, "POST", "/v1/reach", Some(json!({"session": id, "horizon": 2, "theta": 0.0}))).await).await;
    for row in r["result"]["reached"].as_array().unwrap() {
        assert_eq!(row["sentence"].as_array().unwrap()[0..2], [json!("a"), json!("b")]);
    }
}
