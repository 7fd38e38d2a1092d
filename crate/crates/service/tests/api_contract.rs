use std::collections::BTreeMap;
use std::path::Path;

use mcv_service::error::ErrorBody;
use mcv_service::{router, AppState, ExperimentConfig, SessionView, Store, ADMIN_TOKEN_HEADER, RECORDING_ID_HEADER};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

const TOKEN: &str = "test-admin-token";

struct Server {
    base: String,
    handle: tokio::task::JoinHandle<()>,
}

async fn start(data_dir: &Path) -> Server {
    let store = Store::open(data_dir).unwrap();
    let app = router(AppState::new(store, Some(TOKEN.to_string())), None);
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    let handle = tokio::spawn(async move {
        axum::serve(listener, app).await.unwrap();
    });
    Server { base, handle }
}

fn client() -> Client {
    Client::builder().redirect(reqwest::redirect::Policy::none()).build().unwrap()
}

fn config(n: usize) -> ExperimentConfig {
    let mut c = ExperimentConfig::replica(99);
    c.n_recordings = n;
    c.id = Some("exp".into());
    c
}

async fn create_experiment(c: &Client, base: &str, n: usize) {
    let r = c
        .post(format!("{base}/api/experiments"))
        .header(ADMIN_TOKEN_HEADER, TOKEN)
        .json(&config(n))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["experiment_id"], "exp");
    assert_eq!(body["link"], "/x/exp");
}

async fn new_session(c: &Client, base: &str) -> String {
    let r = c.post(format!("{base}/api/experiments/exp/sessions")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CREATED);
    r.json::<SessionView>().await.unwrap().session_id
}

async fn ready_session(c: &Client, base: &str) -> String {
    let sid = new_session(c, base).await;
    let r = c.post(format!("{base}/api/sessions/{sid}/consent")).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let r = c
        .post(format!("{base}/api/sessions/{sid}/demographics"))
        .json(&json!({"age_range": "25-34"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    sid
}

async fn expect_error(r: reqwest::Response, status: StatusCode, code: &str) {
    assert_eq!(r.status(), status);
    let body: ErrorBody = r.json().await.unwrap();
    assert_eq!(body.code, code);
    assert!(!body.message.is_empty());
}

fn audio_url(base: &str, sid: &str, pos: usize) -> String {
    format!("{base}/api/sessions/{sid}/recordings/{pos}/audio")
}

fn answer_url(base: &str, sid: &str, pos: usize) -> String {
    format!("{base}/api/sessions/{sid}/recordings/{pos}/answer")
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn participant_flow_and_status_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let s = start(tmp.path()).await;
    let c = client();
    let base = &s.base;

    let r = c.post(format!("{base}/api/experiments")).json(&config(3)).send().await.unwrap();
    expect_error(r, StatusCode::UNAUTHORIZED, "unauthorized").await;
    create_experiment(&c, base, 3).await;

    let r = c.post(format!("{base}/api/experiments/missing/sessions")).send().await.unwrap();
    expect_error(r, StatusCode::NOT_FOUND, "not_found").await;

    let sid = new_session(&c, base).await;
    let r = c.get(audio_url(base, &sid, 0)).send().await.unwrap();
    expect_error(r, StatusCode::PRECONDITION_FAILED, "precondition_failed").await;
    let r = c.post(format!("{base}/api/sessions/{sid}/demographics")).json(&json!({})).send().await.unwrap();
    expect_error(r, StatusCode::PRECONDITION_FAILED, "precondition_failed").await;
    c.post(format!("{base}/api/sessions/{sid}/consent")).send().await.unwrap();
    let r = c.get(audio_url(base, &sid, 0)).send().await.unwrap();
    expect_error(r, StatusCode::PRECONDITION_FAILED, "precondition_failed").await;
    let r = c.post(format!("{base}/api/sessions/{sid}/demographics")).body("not json").send().await.unwrap();
    expect_error(r, StatusCode::BAD_REQUEST, "bad_request").await;
    c.post(format!("{base}/api/sessions/{sid}/demographics")).json(&json!({})).send().await.unwrap();

    // Answer before play.
    let r = c.post(answer_url(base, &sid, 0)).json(&json!({"text": "A12BCD"})).send().await.unwrap();
    expect_error(r, StatusCode::PRECONDITION_FAILED, "precondition_failed").await;
    // Out of order.
    let r = c.get(audio_url(base, &sid, 1)).send().await.unwrap();
    expect_error(r, StatusCode::PRECONDITION_FAILED, "precondition_failed").await;
    let r = c.get(audio_url(base, &sid, 9)).send().await.unwrap();
    expect_error(r, StatusCode::NOT_FOUND, "not_found").await;
    let r = c.get(format!("{base}/api/sessions/{sid}/recordings/abc/audio")).send().await.unwrap();
    expect_error(r, StatusCode::BAD_REQUEST, "bad_request").await;

    let r = c.get(audio_url(base, &sid, 0)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    assert_eq!(r.headers()["content-type"], "audio/wav");
    assert!(r.headers().contains_key(RECORDING_ID_HEADER));
    assert_eq!(&r.bytes().await.unwrap()[..4], b"RIFF");
    // Play once.
    let r = c.get(audio_url(base, &sid, 0)).send().await.unwrap();
    expect_error(r, StatusCode::CONFLICT, "conflict").await;

    let view: SessionView = c.get(format!("{base}/api/sessions/{sid}")).send().await.unwrap().json().await.unwrap();
    assert!(view.awaiting_answer);
    assert_eq!((view.next_position, view.total), (0, 3));

    let r = c.post(answer_url(base, &sid, 0)).json(&json!({"text": "a12 bcd"})).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    let body: Value = r.json().await.unwrap();
    assert_eq!(body["answer"]["normalized_plate"], "A12BCD");
    assert_eq!(body["next_position"], 1);
    let r = c.post(answer_url(base, &sid, 0)).json(&json!({"text": "again"})).send().await.unwrap();
    expect_error(r, StatusCode::CONFLICT, "conflict").await;

    for pos in 1..3 {
        assert_eq!(c.get(audio_url(base, &sid, pos)).send().await.unwrap().status(), StatusCode::OK);
        let r = c.post(answer_url(base, &sid, pos)).json(&json!({"text": ""})).send().await.unwrap();
        assert_eq!(r.status(), StatusCode::OK);
    }
    let view: SessionView = c.get(format!("{base}/api/sessions/{sid}")).send().await.unwrap().json().await.unwrap();
    assert!(view.complete);
    assert_eq!(view.completion_code.as_deref().map(str::len), Some(8));

    let r = c.get(format!("{base}/api/experiments/exp/results")).send().await.unwrap();
    expect_error(r, StatusCode::UNAUTHORIZED, "unauthorized").await;
    let r = c
        .get(format!("{base}/api/experiments/exp/results"))
        .header(ADMIN_TOKEN_HEADER, "wrong")
        .send()
        .await
        .unwrap();
    expect_error(r, StatusCode::UNAUTHORIZED, "unauthorized").await;
    let doc: Value = c
        .get(format!("{base}/api/experiments/exp/results"))
        .header("authorization", format!("Bearer {TOKEN}"))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    let rows = doc["sessions"][0]["answers"].as_array().unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["burst_k"].is_u64() && r["codec"] == "passthrough"));

    let r = c.get(format!("{base}/api/nothing-here")).send().await.unwrap();
    expect_error(r, StatusCode::NOT_FOUND, "not_found").await;
    s.handle.abort();
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn shared_link_creates_a_session() {
    let tmp = tempfile::tempdir().unwrap();
    let s = start(tmp.path()).await;
    let c = client();
    create_experiment(&c, &s.base, 2).await;
    let r = c.get(format!("{}/x/exp", s.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::SEE_OTHER);
    let location = r.headers()["location"].to_str().unwrap().to_string();
    let sid = location.strip_prefix("/?session=").unwrap();
    let view: SessionView = c.get(format!("{}/api/sessions/{sid}", s.base)).send().await.unwrap().json().await.unwrap();
    assert_eq!(view.total, 2);
    assert!(!view.consent_given);
    let other = c.get(format!("{}/x/exp", s.base)).send().await.unwrap();
    assert_ne!(other.headers()["location"].to_str().unwrap(), location);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn concurrent_double_fetch_admits_exactly_one() {
    let tmp = tempfile::tempdir().unwrap();
    let s = start(tmp.path()).await;
    let c = client();
    create_experiment(&c, &s.base, 4).await;
    for round in 0..5 {
        let sid = ready_session(&c, &s.base).await;
        let fetches: Vec<_> = (0..32)
            .map(|_| {
                let (c, url) = (c.clone(), audio_url(&s.base, &sid, 0));
                tokio::spawn(async move { c.get(url).send().await.unwrap().status() })
            })
            .collect();
        let mut statuses = Vec::new();
        for f in fetches {
            statuses.push(f.await.unwrap());
        }
        let ok = statuses.iter().filter(|s| **s == StatusCode::OK).count();
        let conflicts = statuses.iter().filter(|s| **s == StatusCode::CONFLICT).count();
        assert_eq!((ok, conflicts), (1, 31), "round {round}: {statuses:?}");
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn restart_preserves_play_once_and_answers() {
    let tmp = tempfile::tempdir().unwrap();
    let c = client();
    let s = start(tmp.path()).await;
    create_experiment(&c, &s.base, 3).await;
    let sid = ready_session(&c, &s.base).await;
    assert_eq!(c.get(audio_url(&s.base, &sid, 0)).send().await.unwrap().status(), StatusCode::OK);
    s.handle.abort();

    let s = start(tmp.path()).await;
    let r = c.get(audio_url(&s.base, &sid, 0)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::CONFLICT);
    let r = c.post(answer_url(&s.base, &sid, 0)).json(&json!({"text": "z"})).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::OK);
    s.handle.abort();

    let store = Store::open(tmp.path()).unwrap();
    let view = store.session_view(&sid).unwrap();
    assert_eq!(view.next_position, 1);
    assert!(!view.awaiting_answer);
}

/// Copies the data directory while sessions are being driven, which is
/// what a kill at an arbitrary instant leaves on disk. Every copy must open
/// cleanly with no answer for an unplayed recording.
#[tokio::test(flavor = "multi_thread", worker_threads = 8)]
async fn snapshots_taken_mid_traffic_are_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let s = start(tmp.path()).await;
    let c = client();
    create_experiment(&c, &s.base, 6).await;

    let drivers: Vec<_> = (0..6)
        .map(|_| {
            let (c, base) = (c.clone(), s.base.clone());
            tokio::spawn(async move {
                let sid = ready_session(&c, &base).await;
                for pos in 0..6 {
                    c.get(audio_url(&base, &sid, pos)).send().await.unwrap();
                    c.post(answer_url(&base, &sid, pos)).json(&json!({"text": "A00AAA"})).send().await.unwrap();
                }
            })
        })
        .collect();

    let snaps = tempfile::tempdir().unwrap();
    let mut taken = 0;
    while drivers.iter().any(|d| !d.is_finished()) && taken < 40 {
        let dest = snaps.path().join(taken.to_string());
        copy_tree(tmp.path(), &dest);
        taken += 1;
    }
    for d in drivers {
        d.await.unwrap();
    }
    copy_tree(tmp.path(), &snaps.path().join("final"));

    for entry in std::fs::read_dir(snaps.path()).unwrap() {
        let dir = entry.unwrap().path();
        let store = Store::open(&dir).unwrap();
        let manifest = store.manifest("exp").unwrap();
        for session in store.sessions_of("exp") {
            assert_eq!(session.invariant_violations(&manifest), Vec::<String>::new(), "{}", dir.display());
        }
    }
    let final_store = Store::open(snaps.path().join("final")).unwrap();
    let sessions = final_store.sessions_of("exp");
    assert_eq!(sessions.len(), 6);
    assert!(sessions.iter().all(|s| s.answers.len() == 6));
}

fn copy_tree(from: &Path, to: &Path) {
    std::fs::create_dir_all(to).unwrap();
    let Ok(entries) = std::fs::read_dir(from) else { return };
    for entry in entries.flatten() {
        let path = entry.path();
        let target = to.join(entry.file_name());
        if path.is_dir() {
            copy_tree(&path, &target);
        } else {
            // A temp file can be renamed away between listing and copying.
            let _ = std::fs::copy(&path, &target);
        }
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn participant_endpoints_never_reveal_truth_or_conditions() {
    let tmp = tempfile::tempdir().unwrap();
    let s = start(tmp.path()).await;
    let c = client();
    create_experiment(&c, &s.base, 3).await;
    let manifest = Store::open(tmp.path()).unwrap().manifest("exp").unwrap();
    let secrets: Vec<String> = manifest
        .recordings
        .iter()
        .map(|r| r.ground_truth.as_ref().unwrap().to_string())
        .chain(["burst_k", "p_gb", "p_bg", "frame_drop", "ground_truth", "codec", "passthrough"].map(String::from))
        .collect();

    let mut seen = Vec::new();
    let r = c.post(format!("{}/api/experiments/exp/sessions", s.base)).send().await.unwrap();
    let text = r.text().await.unwrap();
    let sid = serde_json::from_str::<SessionView>(&text).unwrap().session_id;
    seen.push(text);
    let base = &s.base;
    seen.push(c.post(format!("{base}/api/sessions/{sid}/consent")).send().await.unwrap().text().await.unwrap());
    let demo: BTreeMap<&str, &str> = BTreeMap::new();
    seen.push(c.post(format!("{base}/api/sessions/{sid}/demographics")).json(&demo).send().await.unwrap().text().await.unwrap());
    for pos in 0..3 {
        let r = c.get(audio_url(base, &sid, pos)).send().await.unwrap();
        seen.push(format!("{:?}", r.headers()));
        seen.push(c.get(format!("{base}/api/sessions/{sid}")).send().await.unwrap().text().await.unwrap());
        seen.push(c.post(answer_url(base, &sid, pos)).json(&json!({"text": ""})).send().await.unwrap().text().await.unwrap());
        seen.push(c.get(audio_url(base, &sid, pos)).send().await.unwrap().text().await.unwrap());
    }
    for body in &seen {
        for secret in &secrets {
            assert!(!body.contains(secret.as_str()), "{secret:?} leaked in {body}");
        }
    }
}
