use std::collections::HashSet;
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use ecd_core::econ::{
    response_likelihood, utility, Choice, ChoiceModel, EconConfig, EconCriterion, PriorChoice, Support, Theory,
    TheoryPoint,
};
use ecd_service::session::{parse_log, Event};
use ecd_service::{router, AppState, ServiceOptions, Session, SessionConfig};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tower::ServiceExt;

fn state(dir: &std::path::Path) -> AppState {
    AppState::open(ServiceOptions {
        data_dir: dir.to_path_buf(),
        default_config: SessionConfig::default(),
        cors: true,
    })
    .unwrap()
}

async fn call(state: &AppState, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(v.to_string()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = router(state.clone()).oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    let text = String::from_utf8(bytes.to_vec()).unwrap();
    let value = serde_json::from_str(&text).unwrap_or(Value::Null);
    (status, value, text)
}

fn marginal_sum(posterior: &Value) -> f64 {
    ["EV", "PT", "MVS", "CRRA"].iter().map(|k| posterior["marginals"][k].as_f64().unwrap()).sum()
}

/// First pair by exhaustive evaluation of the Gini gain from raw utilities.
fn brute_force_first_pair(config: &EconConfig) -> usize {
    let model = ChoiceModel::new(config.clone()).unwrap();
    let prior = model.prior();
    let mut best = (f64::NEG_INFINITY, usize::MAX);
    for (t, pair) in model.pool().iter().enumerate() {
        let mut joint = [[0.0f64; 4]; 2];
        for (p, point) in model.points().iter().enumerate() {
            let l1 = response_likelihood(
                utility(point, &pair.first, config.w0).unwrap(),
                utility(point, &pair.second, config.w0).unwrap(),
            );
            let k = point.theory().index();
            joint[0][k] += prior.weights[p] * l1;
            joint[1][k] += prior.weights[p] * (1.0 - l1);
        }
        let before: f64 = (0..4).map(|k| (joint[0][k] + joint[1][k]).powi(2)).sum();
        let after: f64 = joint
            .iter()
            .map(|row| row.iter().map(|a| a * a).sum::<f64>() / row.iter().sum::<f64>())
            .sum();
        if after - before > best.0 + 1e-12 {
            best = (after - before, t);
        }
    }
    best.1
}

#[tokio::test]
async fn first_test_is_the_deterministic_argmax() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, a, _) = call(&s, "POST", "/sessions", None).await;
    assert_eq!(status, StatusCode::CREATED);
    let (_, b, _) = call(&s, "POST", "/sessions", Some(json!({}))).await;
    assert_eq!(a["test"], b["test"]);
    assert_ne!(a["session_id"], b["session_id"]);
    assert_eq!(a["session_id"].as_str().unwrap().len(), 32);
    let expected = brute_force_first_pair(&EconConfig::default());
    assert_eq!(a["test"]["pair_index"].as_u64().unwrap() as usize, expected);
    assert_eq!(a["test"]["lottery1"]["payoffs"], json!([-10.0, 0.0, 10.0]));
}

#[tokio::test]
async fn invalid_configs_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, body, _) = call(&s, "POST", "/sessions", Some(json!({"config": {"budget": 0}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert!(body["error"].as_str().unwrap().contains("budget"));
    let (status, _, _) = call(&s, "POST", "/sessions", Some(json!({"config": {"econ": {"w0": 5.0}}}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    let (status, _, _) = call(&s, "POST", "/sessions", Some(json!({"bogus": true}))).await;
    assert_eq!(status, StatusCode::BAD_REQUEST);
    assert_eq!(s.session_count(), 0);
}

#[tokio::test]
async fn errors_for_unknown_sessions_and_bad_choices() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let (status, _, _) = call(&s, "GET", "/sessions/nope/posterior", None).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (status, _, _) = call(&s, "POST", "/sessions/nope/answer", Some(json!({"choice": 1}))).await;
    assert_eq!(status, StatusCode::NOT_FOUND);
    let (_, created, _) = call(&s, "POST", "/sessions", None).await;
    let id = created["session_id"].as_str().unwrap();
    for bad in [json!({"choice": 3}), json!({"choice": "1"}), json!({})] {
        let (status, _, _) = call(&s, "POST", &format!("/sessions/{id}/answer"), Some(bad)).await;
        assert_eq!(status, StatusCode::UNPROCESSABLE_ENTITY);
    }
    let (_, post, _) = call(&s, "GET", &format!("/sessions/{id}/posterior"), None).await;
    assert_eq!(post["answered"], 0);
}

#[tokio::test]
async fn fresh_posteriors_follow_the_prior_choice() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let by_points = json!({"config": {"econ": {"support": "grid", "prior": "uniform_over_points"}}});
    let (_, created, _) = call(&s, "POST", "/sessions", Some(by_points)).await;
    let id = created["session_id"].as_str().unwrap();
    let (_, post, _) = call(&s, "GET", &format!("/sessions/{id}/posterior"), None).await;
    for (k, count) in [("EV", 1.0), ("PT", 27.0), ("MVS", 27.0), ("CRRA", 3.0)] {
        assert!((post["marginals"][k].as_f64().unwrap() - count / 58.0).abs() < 1e-12);
    }
    let (_, created, _) = call(&s, "POST", "/sessions", Some(json!({"config": {"econ": {"support": "grid"}}}))).await;
    let id = created["session_id"].as_str().unwrap();
    let (_, post, _) = call(&s, "GET", &format!("/sessions/{id}/posterior"), None).await;
    for k in ["EV", "PT", "MVS", "CRRA"] {
        assert!((post["marginals"][k].as_f64().unwrap() - 0.25).abs() < 1e-12);
    }
    assert!(post["map_theory"].is_null());
    assert_eq!(post["top_points"].as_array().unwrap().len(), 5);
}

/// A subject who always picks the lottery their theory strictly prefers.
fn decisive_choice(point: &TheoryPoint, model: &ChoiceModel, pair_index: usize) -> u8 {
    let pair = &model.pool()[pair_index];
    let w0 = model.config().w0;
    if utility(point, &pair.first, w0).unwrap() >= utility(point, &pair.second, w0).unwrap() {
        1
    } else {
        2
    }
}

#[tokio::test]
async fn full_session_matches_offline_replay() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let config = EconConfig { support: Support::Grid, ..EconConfig::default() };
    let model = ChoiceModel::new(config.clone()).unwrap();
    let truth = TheoryPoint::Pt { rho: 0.9, lambda: 2.2, alpha: 0.9 };
    let (_, created, _) = call(&s, "POST", "/sessions", Some(json!({"config": {"econ": config}}))).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let mut pending = created["test"]["pair_index"].as_u64().unwrap() as usize;
    let mut seen = HashSet::from([pending]);
    let mut answers = Vec::new();
    let mut last = Value::Null;
    for k in 1..=30 {
        let choice = decisive_choice(&truth, &model, pending);
        answers.push((pending, choice));
        let (status, resp, _) = call(&s, "POST", &format!("/sessions/{id}/answer"), Some(json!({"choice": choice}))).await;
        assert_eq!(status, StatusCode::OK);
        assert!((marginal_sum(&resp["posterior"]) - 1.0).abs() < 1e-12);
        assert_eq!(resp["posterior"]["answered"], k);
        if k < 30 {
            pending = resp["next_test"]["pair_index"].as_u64().unwrap() as usize;
            assert!(seen.insert(pending), "pair {pending} presented twice");
        } else {
            assert_eq!(resp["completed"], true);
            assert!(resp["next_test"].is_null());
        }
        last = resp;
    }
    assert_eq!(last["posterior"]["map_theory"], "PT");
    assert_eq!(last["posterior"]["status"], "completed");
    let (status, _, _) = call(&s, "POST", &format!("/sessions/{id}/answer"), Some(json!({"choice": 1}))).await;
    assert_eq!(status, StatusCode::CONFLICT);

    // offline recomputation straight from the choice model
    let mut offline = model.prior();
    let mut available = vec![true; model.n_tests()];
    let mut rng = ecd_core::harness::substream(0, 0, 0);
    for &(t, choice) in &answers {
        let chosen = model
            .select_test(EconCriterion::Effecxtive, &offline, &available, &mut rng)
            .unwrap();
        assert_eq!(chosen, t);
        available[t] = false;
        offline = model.bayes_update(&offline, t, Choice::try_from(choice).unwrap()).unwrap();
    }
    let marginals = offline.marginals();
    for (k, theory) in ["EV", "PT", "MVS", "CRRA"].iter().zip(Theory::ALL) {
        assert_eq!(last["posterior"]["marginals"][k].as_f64().unwrap(), marginals[theory.index()]);
    }

    // the exported log replays to the same posterior
    let (status, _, log) = call(&s, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(status, StatusCode::OK);
    let records = parse_log(&log).unwrap();
    assert!(records.iter().enumerate().all(|(i, r)| r.seq == i as u64));
    assert_eq!(records.len(), 2 + 2 * 30);
    assert!(matches!(records.last().unwrap().event, Event::Completed));
    let model = Arc::new(model);
    let replayed = Session::replay(&records, |_| Ok(model.clone())).unwrap();
    let (_, live, _) = call(&s, "GET", &format!("/sessions/{id}/posterior"), None).await;
    assert_eq!(serde_json::to_value(replayed.posterior_view()).unwrap(), live);

    // tampering is detected
    let mut missing = records.clone();
    missing.retain(|r| !(r.seq == 4 && matches!(r.event, Event::Answered { .. })));
    assert!(Session::replay(&missing, |_| Ok(model.clone())).is_err());
    let mut flipped = records.clone();
    if let Event::Answered { choice, .. } = &mut flipped[2].event {
        *choice = if *choice == Choice::First { Choice::Second } else { Choice::First };
    }
    assert!(Session::replay(&flipped, |_| Ok(model.clone())).is_err());
}

#[tokio::test]
async fn restart_recovers_sessions_from_logs() {
    let dir = tempfile::tempdir().unwrap();
    let s = state(dir.path());
    let cfg = EconConfig { prior: PriorChoice::UniformOverPoints, ..EconConfig::default() };
    let (_, created, _) = call(&s, "POST", "/sessions", Some(json!({"config": {"econ": cfg, "budget": 3}}))).await;
    let id = created["session_id"].as_str().unwrap().to_string();
    for choice in [1, 2] {
        call(&s, "POST", &format!("/sessions/{id}/answer"), Some(json!({"choice": choice}))).await;
    }
    let (_, before, _) = call(&s, "GET", &format!("/sessions/{id}/posterior"), None).await;
    let (_, _, log_before) = call(&s, "GET", &format!("/sessions/{id}/log"), None).await;
    drop(s);

    // a torn trailing write was never acknowledged and is ignored
    let path = dir.path().join(format!("{id}.ndjson"));
    let mut text = std::fs::read_to_string(&path).unwrap();
    text.push_str("{\"session_id\":");
    std::fs::write(&path, text).unwrap();

    let restarted = state(dir.path());
    assert_eq!(restarted.session_count(), 1);
    let (_, after, _) = call(&restarted, "GET", &format!("/sessions/{id}/posterior"), None).await;
    assert_eq!(before, after);
    let (_, _, log_after) = call(&restarted, "GET", &format!("/sessions/{id}/log"), None).await;
    assert_eq!(log_before, log_after);
    let (status, done, _) = call(&restarted, "POST", &format!("/sessions/{id}/answer"), Some(json!({"choice": 1}))).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(done["completed"], true);
}

#[tokio::test]
async fn corrupt_logs_block_startup() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.ndjson"), "{\"not\": \"a record\"}\n").unwrap();
    assert!(AppState::open(ServiceOptions {
        data_dir: dir.path().to_path_buf(),
        default_config: SessionConfig::default(),
        cors: false,
    })
    .is_err());
}
