use std::io::Write;
use std::path::Path;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use rlfd_core::experiment::{replay, Group};
use rlfd_core::record::{write_event, SessionEvent, SessionRecord};
use rlfd_core::skills::{make_skill_s1, make_skill_s2, true_reward, Action, SkillSpec, State};
use rlfd_core::Phase;
use rlfd_session::{router, AppState, ServiceConfig};
use serde_json::{json, Value};
use tower::ServiceExt;

struct Reply {
    status: StatusCode,
    json: Value,
    raw: String,
}

async fn app(dir: &Path) -> Router {
    let mut config = ServiceConfig::with_storage_dir(dir);
    config.seed = Some(11);
    router(AppState::open(config).await.unwrap())
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> Reply {
    let request = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_string())))
        .unwrap();
    let response = app.clone().oneshot(request).await.unwrap();
    let status = response.status();
    let bytes = response.into_body().collect().await.unwrap().to_bytes();
    let raw = String::from_utf8(bytes.to_vec()).unwrap();
    let json = serde_json::from_str(&raw).unwrap_or(Value::Null);
    Reply { status, json, raw }
}

async fn create(app: &Router, body: Value) -> (String, Value) {
    let r = call(app, Method::POST, "/api/v1/sessions", Some(body)).await;
    assert_eq!(r.status, StatusCode::CREATED, "{}", r.raw);
    (r.json["session_id"].as_str().unwrap().to_string(), r.json["payload"].clone())
}

fn submit_body(payload: &Value, reward: f64) -> Value {
    json!({"phase": payload["phase"], "demo_index": payload["demo_index"], "reward": reward})
}

fn skill_of(phase: &str) -> SkillSpec {
    match phase {
        "P2" | "P8" => make_skill_s2(0.01, 1e-15, std::f64::consts::PI, 0.0, 0.9).unwrap(),
        _ => make_skill_s1(0.01, 0.9).unwrap(),
    }
}

/// True reward of the payload's keyframe under the default skills.
fn true_reward_of(payload: &Value) -> f64 {
    let k = &payload["keyframe"];
    let s = State::new(k["state"]["r1"].as_f64().unwrap(), k["state"]["r2"].as_f64().unwrap());
    let a = Action::new(k["action"]["u1"].as_f64().unwrap(), k["action"]["u2"].as_f64().unwrap());
    true_reward(&skill_of(payload["phase"].as_str().unwrap()), s, a)
}

fn clamp(payload: &Value, x: f64) -> f64 {
    x.clamp(payload["slider"]["min"].as_f64().unwrap(), payload["slider"]["max"].as_f64().unwrap())
}

#[tokio::test]
async fn create_returns_first_payload() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path()).await;
    let (a, p) = create(&app, json!({"group": "guided"})).await;
    let (b, _) = create(&app, json!({"group": "control"})).await;
    assert_ne!(a, b);
    assert_eq!(p["phase"], "P1");
    assert_eq!(p["demo_index"], 0);
    assert_eq!(p["schema_version"], 1);
    assert!(p.get("guidance").is_none());
    assert_eq!(p["slider"], json!({"min": -100.0, "max": 0.0, "step": 0.5}));
    assert_eq!(p["grid"], json!({"spacing_mm": 10.0, "kind": "cartesian"}));
    assert_eq!(p["action_radius_mm"], 100.0);
    assert_eq!(p["skill"]["skill_id"], "point_reach");
    let list = call(&app, Method::GET, "/api/v1/sessions", None).await;
    assert_eq!(list.json.as_array().unwrap().len(), 2);
    assert!(dir.path().join(format!("{a}.jsonl")).exists());
}

#[tokio::test]
async fn guided_session_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path()).await;
    let (id, mut payload) = create(&app, json!({"group": "guided"})).await;
    let url = format!("/api/v1/sessions/{id}/rewards");
    let mut last = Value::Null;
    for phase in Phase::ALL {
        let training = phase.is_training();
        if training {
            assert!(payload["guidance"]["text"].is_string());
            assert!(payload["guidance"].get("ideal_reward").is_none());
        } else {
            assert!(payload.get("guidance").is_none());
        }
        for index in 0..8 {
            assert_eq!(payload["phase"], phase.to_string());
            assert_eq!(payload["demo_index"], index);
            let ideal = true_reward_of(&payload);
            let r = call(&app, Method::POST, &url, Some(submit_body(&payload, clamp(&payload, ideal)))).await;
            assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
            if training {
                let shown = r.json["guidance"]["ideal_reward"].as_f64().unwrap();
                assert!((shown - ideal).abs() <= 1e-12 * ideal.abs().max(1.0));
            } else {
                assert!(r.json.get("guidance").is_none());
            }
            assert_eq!(r.json.get("phase_outcome").is_some(), index == 7);
            if index == 7 {
                let outcome = &r.json["phase_outcome"];
                assert_eq!(outcome["result"]["phase"], phase.to_string());
                assert_eq!(outcome["trajectory"]["horizon"], 100);
                assert_eq!(outcome["trajectory"]["reference"].as_array().unwrap().len(), 100);
            }
            last = r.json.clone();
            if let Some(next) = r.json.get("next") {
                payload = next.clone();
            }
        }
    }
    assert_eq!(last["status"], "completed");
    assert!(last.get("next").is_none());
    let summary = &last["summary"];
    assert_eq!(summary["phases"].as_array().unwrap().len(), 9);

    let record = call(&app, Method::GET, &format!("/api/v1/sessions/{id}"), None).await;
    let record: SessionRecord = serde_json::from_value(record.json).unwrap();
    assert_eq!(record.phases.len(), 9);
    assert!(record.phases.iter().all(|e| e.submissions.len() == 8));
    let replayed = replay(&record).unwrap();
    for (stored, again) in record.phases.iter().zip(&replayed.phases) {
        assert_eq!(&stored.result, again);
    }
    assert_eq!(serde_json::to_value(&replayed).unwrap(), *summary);

    for phase in ["P1", "P7", "P9"] {
        let t = call(&app, Method::GET, &format!("/api/v1/sessions/{id}/phases/{phase}/trajectory"), None).await;
        assert_eq!(t.status, StatusCode::OK, "{}", t.raw);
        assert_eq!(t.json["learned"]["status"], "ok", "{phase}");
        let learned = t.json["learned"]["points"].as_array().unwrap();
        let reference = t.json["reference"].as_array().unwrap();
        for (p, q) in learned.iter().zip(reference) {
            for c in ["r1", "r2"] {
                let d = p["state"][c].as_f64().unwrap() - q["state"][c].as_f64().unwrap();
                assert!(d.abs() < 1e-6, "{phase}: {d}");
            }
        }
    }
    let curriculum = call(&app, Method::GET, &format!("/api/v1/sessions/{id}/phases/P3/trajectory"), None).await;
    assert_eq!(curriculum.status, StatusCode::OK);
    assert_eq!(curriculum.json["learned"]["status"], "policy_failed");
    assert!(curriculum.json["learned"]["reason"].is_string());

    let after = call(&app, Method::POST, &url, Some(json!({"phase": "P9", "demo_index": 0, "reward": -1.0}))).await;
    assert_eq!(after.status, StatusCode::GONE);
    let payload = call(&app, Method::GET, &format!("/api/v1/sessions/{id}/payload"), None).await;
    assert_eq!(payload.status, StatusCode::GONE);
}

/// Drives a control session through every phase, calling every endpoint at
/// every step, and checks that no body ever names an ideal reward.
#[tokio::test]
async fn control_sessions_never_receive_ideal_rewards() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path()).await;
    let mut bodies = Vec::new();
    for reveal in ["after_commit", "live"] {
        let r = call(&app, Method::POST, "/api/v1/sessions", Some(json!({"group": "control", "reveal": reveal}))).await;
        bodies.push(r.raw.clone());
        let id = r.json["session_id"].as_str().unwrap().to_string();
        let mut payload = r.json["payload"].clone();
        let base = format!("/api/v1/sessions/{id}");
        for phase in Phase::ALL {
            for _ in 0..8 {
                for uri in [base.clone(), format!("{base}/payload"), "/api/v1/sessions".to_string()] {
                    bodies.push(call(&app, Method::GET, &uri, None).await.raw);
                }
                let url = format!("{base}/rewards");
                let skipped = (payload["demo_index"].as_u64().unwrap() + 1) % 8;
                let bad = [
                    json!({"phase": payload["phase"], "demo_index": skipped, "reward": -1.0}),
                    json!({"phase": payload["phase"], "demo_index": payload["demo_index"], "reward": 5.0}),
                ];
                for b in bad {
                    bodies.push(call(&app, Method::POST, &url, Some(b)).await.raw);
                }
                let reward = clamp(&payload, true_reward_of(&payload));
                let r = call(&app, Method::POST, &url, Some(submit_body(&payload, reward))).await;
                assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
                bodies.push(r.raw.clone());
                if let Some(next) = r.json.get("next") {
                    payload = next.clone();
                }
            }
            let t = call(&app, Method::GET, &format!("{base}/phases/{phase}/trajectory?r1=10&r2=-20"), None).await;
            assert_eq!(t.status, StatusCode::OK);
            bodies.push(t.raw);
        }
        bodies.push(call(&app, Method::GET, &base, None).await.raw);
        bodies.push(call(&app, Method::POST, &format!("{base}/abandon"), None).await.raw);
    }
    assert!(bodies.len() > 500);
    for body in &bodies {
        assert!(!body.contains("ideal_reward"), "leaked: {body}");
    }
    for name in std::fs::read_dir(dir.path()).unwrap() {
        let text = std::fs::read_to_string(name.unwrap().path()).unwrap();
        assert!(!text.contains("ideal_reward"));
    }
}

#[tokio::test]
async fn live_reveal_puts_guidance_in_the_payload() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path()).await;
    for (reveal, live) in [("live", true), ("after_commit", false)] {
        let (id, mut payload) = create(&app, json!({"group": "guided", "reveal": reveal})).await;
        let url = format!("/api/v1/sessions/{id}/rewards");
        while payload["phase"] != "P3" {
            let r = call(&app, Method::POST, &url, Some(submit_body(&payload, -10.0))).await;
            payload = r.json["next"].clone();
        }
        assert_eq!(payload["guidance"].get("ideal_reward").is_some(), live);
        if live {
            let shown = payload["guidance"]["ideal_reward"].as_f64().unwrap();
            assert!((shown - true_reward_of(&payload)).abs() < 1e-9);
        }
    }
}

#[tokio::test]
async fn submission_errors_map_to_status_codes() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path()).await;
    let (id, payload) = create(&app, json!({"group": "guided"})).await;
    let url = format!("/api/v1/sessions/{id}/rewards");
    let cases = [
        (json!({"phase": "P1", "demo_index": 0, "reward": 5.0}), StatusCode::UNPROCESSABLE_ENTITY),
        (json!({"phase": "P1", "demo_index": 0, "reward": -100.5}), StatusCode::UNPROCESSABLE_ENTITY),
        (json!({"phase": "P1", "demo_index": 1, "reward": -1.0}), StatusCode::CONFLICT),
        (json!({"phase": "P2", "demo_index": 0, "reward": -1.0}), StatusCode::CONFLICT),
        (json!({"phase": "P1", "demo_index": 0}), StatusCode::UNPROCESSABLE_ENTITY),
        (json!({"phase": "P10", "demo_index": 0, "reward": -1.0}), StatusCode::UNPROCESSABLE_ENTITY),
    ];
    for (body, status) in cases {
        let r = call(&app, Method::POST, &url, Some(body.clone())).await;
        assert_eq!(r.status, status, "{body}: {}", r.raw);
        assert!(r.json["error"]["message"].is_string());
    }
    let garbage = call(&app, Method::POST, "/api/v1/sessions", None).await;
    assert_eq!(garbage.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_group = call(&app, Method::POST, "/api/v1/sessions", Some(json!({"group": "target"}))).await;
    assert_eq!(bad_group.status, StatusCode::UNPROCESSABLE_ENTITY);
    let bad_override = json!({"group": "guided", "overrides": {"keyframe_box": -1.0}});
    assert_eq!(call(&app, Method::POST, "/api/v1/sessions", Some(bad_override)).await.status, StatusCode::UNPROCESSABLE_ENTITY);
    let unknown = json!({"group": "guided", "overrides": {"colour": "red"}});
    assert_eq!(call(&app, Method::POST, "/api/v1/sessions", Some(unknown)).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    assert_eq!(call(&app, Method::GET, "/api/v1/sessions/nope", None).await.status, StatusCode::NOT_FOUND);
    assert_eq!(call(&app, Method::POST, "/api/v1/sessions/nope/rewards", Some(submit_body(&payload, -1.0))).await.status, StatusCode::NOT_FOUND);
    let traj = format!("/api/v1/sessions/{id}/phases/P1/trajectory");
    assert_eq!(call(&app, Method::GET, &traj, None).await.status, StatusCode::CONFLICT);
    let traj_bad = format!("/api/v1/sessions/{id}/phases/Q1/trajectory");
    assert_eq!(call(&app, Method::GET, &traj_bad, None).await.status, StatusCode::UNPROCESSABLE_ENTITY);

    let mut payload = payload;
    for _ in 0..8 {
        let r = call(&app, Method::POST, &url, Some(submit_body(&payload, -20.0))).await;
        assert_eq!(r.status, StatusCode::OK);
        if let Some(n) = r.json.get("next") {
            payload = n.clone();
        }
    }
    let outside = call(&app, Method::GET, &format!("{traj}?r1=80&r2=0"), None).await;
    assert_eq!(outside.status, StatusCode::UNPROCESSABLE_ENTITY, "{}", outside.raw);
    let half = call(&app, Method::GET, &format!("{traj}?r1=10"), None).await;
    assert_eq!(half.status, StatusCode::UNPROCESSABLE_ENTITY);

    let abandon = call(&app, Method::POST, &format!("/api/v1/sessions/{id}/abandon"), None).await;
    assert_eq!(abandon.status, StatusCode::OK);
    assert_eq!(abandon.json["status"], "abandoned");
    assert_eq!(call(&app, Method::POST, &url, Some(submit_body(&payload, -1.0))).await.status, StatusCode::GONE);
    assert_eq!(call(&app, Method::POST, &format!("/api/v1/sessions/{id}/abandon"), None).await.status, StatusCode::GONE);
}

#[tokio::test]
async fn zero_rewards_leave_the_learned_policy_at_rest() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path()).await;
    let (id, mut payload) = create(&app, json!({"group": "control"})).await;
    let url = format!("/api/v1/sessions/{id}/rewards");
    let mut outcome = Value::Null;
    for _ in 0..8 {
        let r = call(&app, Method::POST, &url, Some(submit_body(&payload, 0.0))).await;
        outcome = r.json["phase_outcome"].clone();
        if let Some(n) = r.json.get("next") {
            payload = n.clone();
        }
    }
    assert_eq!(outcome["result"]["learning"]["status"], "learned", "{outcome}");
    let t = call(&app, Method::GET, &format!("/api/v1/sessions/{id}/phases/P1/trajectory?r1=12.5&r2=-30"), None).await;
    for p in t.json["learned"]["points"].as_array().unwrap() {
        assert_eq!(p["state"], json!({"r1": 12.5, "r2": -30.0}));
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn racing_submissions_have_one_winner() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path()).await;
    for _ in 0..10 {
        let (id, payload) = create(&app, json!({"group": "guided"})).await;
        let url = format!("/api/v1/sessions/{id}/rewards");
        let tasks: Vec<_> = [-10.0, -20.0]
            .into_iter()
            .map(|reward| {
                let (app, url, body) = (app.clone(), url.clone(), submit_body(&payload, reward));
                tokio::spawn(async move { call(&app, Method::POST, &url, Some(body)).await.status })
            })
            .collect();
        let mut statuses = Vec::new();
        for t in tasks {
            statuses.push(t.await.unwrap());
        }
        statuses.sort();
        assert_eq!(statuses, [StatusCode::OK, StatusCode::CONFLICT]);
        let record = call(&app, Method::GET, &format!("/api/v1/sessions/{id}"), None).await;
        assert_eq!(record.json["pending"].as_array().unwrap().len(), 1);
    }
}

#[tokio::test]
async fn restart_loses_no_acknowledged_data() {
    let dir = tempfile::tempdir().unwrap();
    let (id, mut payload) = {
        let app = app(dir.path()).await;
        create(&app, json!({"group": "guided"})).await
    };
    let url = format!("/api/v1/sessions/{id}/rewards");
    let record_url = format!("/api/v1/sessions/{id}");
    let mut rewards = Vec::new();
    for step in 0..13 {
        let running = app(dir.path()).await;
        let reward = -0.5 * (step as f64 + 1.0);
        let r = call(&running, Method::POST, &url, Some(submit_body(&payload, reward))).await;
        assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
        rewards.push(reward);
        payload = r.json["next"].clone();
        let before = call(&running, Method::GET, &record_url, None).await.json;
        drop(running);
        let after = call(&app(dir.path()).await, Method::GET, &record_url, None).await.json;
        assert_eq!(before, after);
    }
    let app = app(dir.path()).await;
    let record: SessionRecord = serde_json::from_value(call(&app, Method::GET, &record_url, None).await.json).unwrap();
    let mut stored: Vec<f64> = record.phases.iter().flat_map(|e| e.submissions.iter().map(|s| s.reward)).collect();
    stored.extend(record.pending.iter().map(|s| s.reward));
    assert_eq!(stored, rewards);
    let current = call(&app, Method::GET, &format!("{record_url}/payload"), None).await.json;
    assert_eq!(current, payload);
}

#[tokio::test]
async fn recovery_truncates_torn_writes_and_scores_interrupted_phases() {
    let dir = tempfile::tempdir().unwrap();
    let app1 = app(dir.path()).await;
    let (id, mut payload) = create(&app1, json!({"group": "control"})).await;
    let url = format!("/api/v1/sessions/{id}/rewards");
    for _ in 0..7 {
        let r = call(&app1, Method::POST, &url, Some(submit_body(&payload, -3.0))).await;
        payload = r.json["next"].clone();
    }
    drop(app1);
    let log = dir.path().join(format!("{id}.jsonl"));
    let mut file = std::fs::OpenOptions::new().append(true).open(&log).unwrap();
    let last = SessionEvent::RewardSubmitted {
        phase: Phase::P1,
        index: 7,
        reward: -3.0,
        at_ms: 1,
    };
    write_event(&mut file, &last).unwrap();
    file.write_all(b"{\"event\":\"reward_subm").unwrap();
    drop(file);

    let app2 = app(dir.path()).await;
    let record: SessionRecord =
        serde_json::from_value(call(&app2, Method::GET, &format!("/api/v1/sessions/{id}"), None).await.json).unwrap();
    assert_eq!(record.group, Group::Control);
    assert_eq!(record.completed_phases(), vec![Phase::P1]);
    assert!(record.pending.is_empty());
    let next = call(&app2, Method::GET, &format!("/api/v1/sessions/{id}/payload"), None).await;
    assert_eq!(next.json["phase"], "P2");
    let r = call(&app2, Method::POST, &url, Some(submit_body(&next.json, -1.0))).await;
    assert_eq!(r.status, StatusCode::OK, "{}", r.raw);
    let text = std::fs::read_to_string(&log).unwrap();
    assert!(text.ends_with('\n'));
    assert!(text.lines().all(|l| serde_json::from_str::<Value>(l).is_ok()));
}
