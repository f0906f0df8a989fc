use std::sync::Arc;

use agentest_cli::serve::{router, ServerState, SCHEMA, SCHEMA_VERSION};
use agentest_core::engine::{replay, Trajectory};
use agentest_core::fixtures::builtin_all;
use agentest_core::harness::testers::ScriptedTester;
use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn app(dir: &std::path::Path) -> Router {
    router(Arc::new(ServerState::new(builtin_all(), dir.to_path_buf())))
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let req = Request::builder().method(method).uri(uri).header("content-type", "application/json");
    let req = req.body(body.map_or(Body::empty(), |b| Body::from(b.to_string()))).unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    (status, serde_json::from_slice(&bytes).unwrap_or(Value::Null))
}

async fn create(app: &Router, game: &str, level: u32) -> String {
    let (s, v) = call(app, "POST", "/sessions", Some(json!({"game": game, "level": level}))).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    v["session"].as_str().unwrap().to_string()
}

async fn act(app: &Router, id: &str, a: &str) -> (StatusCode, Value) {
    call(app, "POST", &format!("/sessions/{id}/action"), Some(json!({"action": a}))).await
}

#[tokio::test]
async fn game_a_level_one_is_six_by_seven() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "game_a", 1).await;
    let (s, v) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["version"], SCHEMA_VERSION);
    assert_eq!(v["board"]["width"], 6);
    assert_eq!(v["board"]["height"], 7);
    assert_eq!(v["board"]["rows"].as_array().unwrap().len(), 7);
    assert!(v["board"]["rows"].as_array().unwrap().iter().all(|r| r.as_str().unwrap().len() == 6));
    assert_eq!(v["board"]["cells"].as_array().unwrap().len(), 42);
    assert_eq!(v["tick"], 0);
    assert_eq!(v["status"], "Running");
    assert_eq!(v["legal_actions"], json!(["U", "D", "L", "R", "X", "N"]));
}

#[tokio::test]
async fn nil_leaves_the_board_unchanged() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "game_a", 1).await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    let (s, after) = act(&app, &id, "N").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(after["state"]["board"], before["board"]);
    assert_eq!(after["state"]["status"], before["status"]);
    assert_eq!(after["interactions"], json!([]));
    assert_eq!(after["state"]["history"], 1);
}

#[tokio::test]
async fn bumping_a_wall_keeps_the_position() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "game_a", 1).await;
    let (_, v) = act(&app, &id, "R").await;
    let av = &v["state"]["board"]["avatar"];
    assert_eq!((av["x"].as_i64(), av["y"].as_i64()), (Some(4), Some(4)));
    assert_eq!(av["dir"], "Right");
    assert!(v["interactions"].as_array().unwrap().iter().any(|z| z["eta1"] == "wall"));
}

#[tokio::test]
async fn use_is_rejected_where_unavailable() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "game_a", 3).await;
    let (_, before) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert!(!before["legal_actions"].as_array().unwrap().contains(&json!("X")));
    let (s, v) = act(&app, &id, "X").await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["version"], SCHEMA_VERSION);
    let (_, after) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    assert_eq!(after, before);
}

#[tokio::test]
async fn bad_requests_are_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    assert_eq!(call(&app, "GET", "/sessions/nope", None).await.0, StatusCode::NOT_FOUND);
    assert_eq!(act(&app, "nope", "U").await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "POST", "/sessions", Some(json!({"game": "zelda", "level": 1}))).await.0, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, "POST", "/sessions", Some(json!({"game": "game_a", "level": 9}))).await.0, StatusCode::NOT_FOUND);
    let id = create(&app, "game_a", 1).await;
    assert_eq!(act(&app, &id, "UU").await.0, StatusCode::BAD_REQUEST);
    assert_eq!(act(&app, &id, "Q").await.0, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn finished_trajectory_replays_to_the_served_log() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "game_a", 1).await;
    let moves = "RLULDXUN";
    let mut served = Vec::new();
    for a in moves.chars() {
        let (s, v) = act(&app, &id, &a.to_string()).await;
        assert_eq!(s, StatusCode::OK, "{v}");
        served.push(v["interactions"].clone());
    }
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["trajectory"]["actions"], moves);
    assert_eq!(v["state"]["finished"], true);
    let text = std::fs::read_to_string(v["path"].as_str().unwrap()).unwrap();
    let t = Trajectory::parse_jsonl(&text).unwrap();
    assert_eq!(t.len(), 1);
    assert_eq!(t[0].actions.len(), moves.len());
    let g = agentest_core::fixtures::builtin("game_a").unwrap();
    let r = replay(&g.desc, &g.level(1).unwrap().initial, &t[0].actions);
    for (tick, zs) in r.log.iter().enumerate() {
        let want: Vec<Value> = zs
            .iter()
            .map(|z| serde_json::to_value(agentest_cli::serve::InteractionView::of(&g.desc, z)).unwrap())
            .collect();
        assert_eq!(served[tick], Value::Array(want), "tick {tick}");
    }
    assert_eq!(act(&app, &id, "U").await.0, StatusCode::CONFLICT);
    assert_eq!(call(&app, "POST", &format!("/sessions/{id}/finish"), None).await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn empty_session_gives_an_empty_trajectory() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let id = create(&app, "game_b", 2).await;
    let (s, v) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["trajectory"]["actions"], "");
    assert_eq!(v["trajectory"]["game"], "game_b");
}

#[tokio::test]
async fn winning_ends_the_session() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let g = agentest_core::fixtures::builtin("game_a").unwrap();
    let plan = ScriptedTester::KeyRusher.play(&g.desc, &g.level(1).unwrap().initial);
    let id = create(&app, "game_a", 1).await;
    let mut last = Value::Null;
    for a in &plan {
        let (s, v) = act(&app, &id, &a.token().to_string()).await;
        assert_eq!(s, StatusCode::OK);
        last = v;
    }
    assert_eq!(last["state"]["status"], "Win");
    assert_eq!(last["state"]["legal_actions"], json!([]));
    assert_eq!(act(&app, &id, "U").await.0, StatusCode::CONFLICT);
}

#[tokio::test]
async fn sessions_are_isolated() {
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let a = create(&app, "game_a", 1).await;
    let b = create(&app, "game_a", 1).await;
    assert_ne!(a, b);
    let (_, before) = call(&app, "GET", &format!("/sessions/{b}"), None).await;
    let tasks: Vec<_> = (0..4)
        .map(|_| {
            let app = app.clone();
            let a = a.clone();
            tokio::spawn(async move { act(&app, &a, "L").await.0 })
        })
        .collect();
    for t in tasks {
        assert_eq!(t.await.unwrap(), StatusCode::OK);
    }
    let (_, v) = call(&app, "GET", &format!("/sessions/{a}"), None).await;
    assert_eq!(v["history"], 4);
    let (_, after) = call(&app, "GET", &format!("/sessions/{b}"), None).await;
    assert_eq!(after, before);
}

fn required(schema: &Value, def: &str) -> Vec<String> {
    schema["$defs"][def]["required"].as_array().unwrap().iter().map(|s| s.as_str().unwrap().to_string()).collect()
}

fn has_fields(v: &Value, fields: &[String]) {
    for f in fields {
        assert!(v.get(f).is_some(), "missing {f} in {v}");
    }
}

#[tokio::test]
async fn responses_follow_the_published_schema() {
    let schema: Value = serde_json::from_str(SCHEMA).unwrap();
    assert_eq!(schema["$defs"]["Version"]["const"], SCHEMA_VERSION);
    let tmp = tempfile::tempdir().unwrap();
    let app = app(tmp.path());
    let (s, served) = call(&app, "GET", "/schema", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(served, schema);
    let id = create(&app, "game_c", 1).await;
    let (_, state) = call(&app, "GET", &format!("/sessions/{id}"), None).await;
    has_fields(&state, &required(&schema, "SessionState"));
    has_fields(&state["board"], &required(&schema, "Board"));
    has_fields(&state["board"]["avatar"], &required(&schema, "Avatar"));
    let (_, step) = act(&app, &id, "U").await;
    has_fields(&step, &required(&schema, "StepResponse"));
    for z in step["interactions"].as_array().unwrap() {
        has_fields(z, &required(&schema, "Interaction"));
    }
    let (_, err) = act(&app, "missing", "U").await;
    has_fields(&err, &required(&schema, "ErrorBody"));
    let (_, fin) = call(&app, "POST", &format!("/sessions/{id}/finish"), None).await;
    has_fields(&fin, &required(&schema, "FinishResponse"));
    has_fields(&fin["trajectory"], &required(&schema, "Trajectory"));
}
