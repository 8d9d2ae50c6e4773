mod common;

use common::*;

#[test]
fn cli_and_service_match_golden_files() {
    let tmp = tempfile::tempdir().unwrap();
    let index = build_index(tmp.path());
    let app = app(Some(&index), None);
    for case in parity_cases(&app, &index) {
        case.check().unwrap();
    }
}

#[test]
fn session_render_matches_stateless_render() {
    let app = app(None, None);
    let (_, created) = call(&app, "POST", "/sessions", "");
    let id = json(&created)["sessionId"].as_str().unwrap().to_string();
    let (status, _) = call(&app, "PUT", &format!("/sessions/{id}/spec"), serde_json::to_vec(&spec_json()).unwrap());
    assert_eq!(status, 200);
    let (status, session) = call(&app, "POST", &format!("/sessions/{id}/render?w=64&h=64"), "");
    assert_eq!(status, 200);
    assert_eq!(session, call(&app, "POST", "/render", render_body()).1);
}

#[test]
fn session_correct_matches_stateless_correct_and_is_stored() {
    let tmp = tempfile::tempdir().unwrap();
    let index = build_index(tmp.path());
    let app = app(Some(&index), None);
    let body = serde_json::to_vec(&serde_json::json!({"prompt": CORRECT_PROMPT, "spec": spec_json()})).unwrap();
    let (_, created) = call(&app, "POST", "/sessions", body);
    let id = json(&created)["sessionId"].as_str().unwrap().to_string();
    let (status, result) = call(&app, "POST", &format!("/sessions/{id}/correct"), "");
    assert_eq!(status, 200);
    assert_eq!(result, call(&app, "POST", "/correct", correct_body()).1);
    let (_, session) = call(&app, "GET", &format!("/sessions/{id}"), "");
    assert_eq!(json(&session)["lastCorrection"], json(&result));
}

#[test]
fn restart_restores_sessions_byte_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let index = build_index(tmp.path());
    restart_roundtrip(&index, &tmp.path().join("data")).unwrap();
}

#[test]
fn invalid_spec_is_422_with_field_path() {
    let app = app(None, None);
    let (_, created) = call(&app, "POST", "/sessions", "");
    let id = json(&created)["sessionId"].as_str().unwrap().to_string();
    let bad = r#"{"canvas":{"w":64,"h":64},"gaussians":[{"w":1,"mu":[3,3],"sigma":[[1,2],[2,1]]}]}"#;
    let (status, body) = call(&app, "PUT", &format!("/sessions/{id}/spec"), bad);
    assert_eq!(status, 422);
    assert_eq!(json(&body)["path"], "gaussians[0].sigma");
    // The stored spec is untouched.
    let (_, spec) = call(&app, "GET", &format!("/sessions/{id}/spec"), "");
    assert_eq!(json(&spec)["gaussians"].as_array().unwrap().len(), 0);
}

#[test]
fn error_statuses() {
    let app = app(None, None);
    assert_eq!(call(&app, "GET", "/sessions/nope", "").0, 404);
    assert_eq!(call(&app, "POST", "/render", "{not json").0, 400);
    assert_eq!(call(&app, "POST", "/render", r#"{"spec":{"canvas":{"w":"x"}}}"#).0, 422);
    // No index configured.
    assert_eq!(call(&app, "POST", "/correct", correct_body()).0, 503);
    let (status, body) = call(&app, "GET", "/healthz", "");
    assert_eq!(status, 200);
    assert_eq!(json(&body)["index"]["loaded"], false);
}

#[test]
fn backend_failures_are_502() {
    let config = gazeforge::Config {
        backend: gazeforge_gateway::BackendConfig {
            endpoint: "http://127.0.0.1:9".into(),
            timeout_ms: 500,
            ..Default::default()
        },
        ..Default::default()
    };
    let mut state = gazeforge::server::build_state(&config).unwrap();
    let s = std::sync::Arc::get_mut(&mut state).unwrap();
    s.engine.gateway = s.engine.gateway.clone().with_retry(gazeforge_gateway::RetryPolicy::immediate());
    let app = gazeforge::server::router(state, "*");
    let body = serde_json::json!({"prompt": "p", "spec": spec_json(), "width": 64, "height": 64});
    let (status, body) = call(&app, "POST", "/generate", serde_json::to_vec(&body).unwrap());
    assert_eq!(status, 502);
    assert!(json(&body)["error"].as_str().unwrap().contains("unreachable"));
}

#[test]
fn generate_through_mock_backend() {
    let app = app(None, None);
    let body = serde_json::json!({"prompt": "p", "spec": spec_json(), "width": 64, "height": 64, "seed": 3});
    let (status, resp) = call(&app, "POST", "/generate", serde_json::to_vec(&body).unwrap());
    assert_eq!(status, 200);
    let resp = json(&resp);
    assert_eq!(resp["backend_id"], gazeforge_gateway::MOCK_BACKEND_ID);
    let (status, predicted) = call(
        &app,
        "POST",
        "/predict",
        serde_json::to_vec(&serde_json::json!({"imageB64": resp["image_b64"]})).unwrap(),
    );
    assert_eq!(status, 200);
    assert_eq!(json(&predicted)["zeroMass"], false);
    let bad = serde_json::json!({"prompt": "p", "spec": spec_json(), "width": 513});
    assert_eq!(call(&app, "POST", "/generate", serde_json::to_vec(&bad).unwrap()).0, 422);
}
