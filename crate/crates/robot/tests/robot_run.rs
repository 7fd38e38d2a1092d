use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use async_trait::async_trait;
use mcv_core::SubjectType;
use mcv_robot::{
    clean_transcript_table, run_session, EngineAdapter, EngineError, MockEngine, RunError, RunOptions,
    TranscriptionRequest,
};
use mcv_service::{router, AppState, ExperimentConfig, Store};

const TOKEN: &str = "robot-admin";

/// A service on its own runtime, so stopping it also drops every open
/// connection, as a crash would.
struct Server {
    addr: SocketAddr,
    stop: Option<tokio::sync::oneshot::Sender<()>>,
    thread: Option<std::thread::JoinHandle<()>>,
}

impl Server {
    fn start(data_dir: &Path, addr: SocketAddr) -> Server {
        let (tx, rx) = tokio::sync::oneshot::channel::<()>();
        let (ready_tx, ready_rx) = std::sync::mpsc::channel();
        let dir = data_dir.to_path_buf();
        let thread = std::thread::spawn(move || {
            let rt = tokio::runtime::Runtime::new().unwrap();
            rt.block_on(async move {
                let app = router(AppState::new(Store::open(&dir).unwrap(), Some(TOKEN.into())), None);
                let listener = tokio::net::TcpListener::bind(addr).await.unwrap();
                ready_tx.send(listener.local_addr().unwrap()).unwrap();
                tokio::select! {
                    _ = axum::serve(listener, app) => {}
                    _ = rx => {}
                }
            });
        });
        let addr = ready_rx.recv().unwrap();
        Server {
            addr,
            stop: Some(tx),
            thread: Some(thread),
        }
    }

    fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    fn stop(&mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            t.join().unwrap();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        self.stop();
    }
}

fn build(data_dir: &Path, n: usize, drops: bool) -> mcv_core::ExperimentManifest {
    let store = Store::open(data_dir).unwrap();
    let mut config = ExperimentConfig::replica(2024);
    config.n_recordings = n;
    config.id = Some("exp".into());
    if drops {
        config.frame_drop_levels = vec![0.0, 0.1];
    }
    store.create_experiment(&config).unwrap()
}

fn options(progress: Option<&Path>) -> RunOptions {
    RunOptions {
        admin_token: Some(TOKEN.into()),
        progress_path: progress.map(Path::to_path_buf),
        ..RunOptions::default()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn perfect_mock_scores_one() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = build(tmp.path(), 12, true);
    let server = Server::start(tmp.path(), "127.0.0.1:0".parse().unwrap());
    let engine = MockEngine::new(clean_transcript_table(&manifest));
    let report = run_session(&server.url(), &format!("{}/x/exp", server.url()), &engine, &options(None))
        .await
        .unwrap();
    assert_eq!(report.recordings.len(), 12);
    assert_eq!(report.engine_failures, 0);
    assert_eq!(report.with_truth.as_ref().unwrap().experiment_score, 1.0);
    assert_eq!(report.without_truth.as_ref().unwrap().experiment_score, 1.0);
    assert!(report.completion_code.is_some());
    assert_eq!(report.subject_type, SubjectType::robot("mock"));
    for r in &report.recordings {
        let id = r.recording_id.as_deref().unwrap();
        let truth = manifest.recording(id).unwrap().ground_truth.as_ref().unwrap();
        assert_eq!(r.submitted_text, truth.as_str());
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn silent_mock_scores_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = build(tmp.path(), 4, false);
    let server = Server::start(tmp.path(), "127.0.0.1:0".parse().unwrap());
    let table = clean_transcript_table(&manifest).into_keys().map(|k| (k, String::new())).collect();
    let report = run_session(&server.url(), "exp", &MockEngine::new(table), &options(None)).await.unwrap();
    assert_eq!(report.with_truth.unwrap().experiment_score, 0.0);
    assert!(report.recordings.iter().all(|r| r.submitted_text.is_empty()));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn noisy_mock_is_mostly_recovered() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = build(tmp.path(), 12, true);
    let server = Server::start(tmp.path(), "127.0.0.1:0".parse().unwrap());
    let engine = MockEngine::new(clean_transcript_table(&manifest)).with_noise(7);
    let report = run_session(&server.url(), "exp", &engine, &options(None)).await.unwrap();
    let score = report.with_truth.unwrap().experiment_score;
    assert!(score >= 0.95, "{score}");
    let changed = report
        .recordings
        .iter()
        .filter(|r| r.transcript != clean_transcript_table(&manifest)[r.recording_id.as_deref().unwrap()])
        .count();
    assert_eq!(changed, 12);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn engine_failures_become_empty_answers() {
    let tmp = tempfile::tempdir().unwrap();
    build(tmp.path(), 3, false);
    let server = Server::start(tmp.path(), "127.0.0.1:0".parse().unwrap());
    let report = run_session(&server.url(), "exp", &MockEngine::new(BTreeMap::new()), &options(None))
        .await
        .unwrap();
    assert_eq!(report.engine_failures, 3);
    assert_eq!(report.recordings.len(), 3);
    assert_eq!(report.with_truth.unwrap().experiment_score, 0.0);
}

/// Stops the server right after transcribing position `stop_at`, so the
/// submission fails on the network.
struct CrashingEngine<'a> {
    inner: MockEngine,
    stop_at: usize,
    server: &'a Mutex<Server>,
    calls: AtomicUsize,
}

#[async_trait]
impl EngineAdapter for CrashingEngine<'_> {
    fn label(&self) -> String {
        "mock".to_string()
    }

    async fn transcribe(&self, request: &TranscriptionRequest) -> Result<String, EngineError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let text = self.inner.transcribe(request).await?;
        if request.position == self.stop_at {
            self.server.lock().unwrap().stop();
        }
        Ok(text)
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn network_failure_resumes_from_progress() {
    let tmp = tempfile::tempdir().unwrap();
    let manifest = build(tmp.path(), 6, false);
    let progress = tmp.path().join("robot-progress.json");
    let server = Mutex::new(Server::start(tmp.path(), "127.0.0.1:0".parse().unwrap()));
    let addr = server.lock().unwrap().addr;
    let url = format!("http://{addr}");
    let table = clean_transcript_table(&manifest);

    let crashing = CrashingEngine {
        inner: MockEngine::new(table.clone()),
        stop_at: 2,
        server: &server,
        calls: AtomicUsize::new(0),
    };
    let err = run_session(&url, "exp", &crashing, &options(Some(&progress))).await.unwrap_err();
    assert!(matches!(err, RunError::Api(_)), "{err}");
    assert_eq!(crashing.calls.load(Ordering::SeqCst), 3);

    // Restart on the same address; the delivered-but-unanswered recording
    // is answered from the saved transcript, not fetched again.
    let restarted = Server::start(tmp.path(), addr);
    let counting = CrashingEngine {
        inner: MockEngine::new(table),
        stop_at: usize::MAX,
        server: &server,
        calls: AtomicUsize::new(0),
    };
    let report = run_session(&url, "exp", &counting, &options(Some(&progress))).await.unwrap();
    assert_eq!(counting.calls.load(Ordering::SeqCst), 3);
    assert_eq!(report.recordings.len(), 6);
    assert_eq!(report.engine_failures, 0);
    assert_eq!(report.with_truth.unwrap().experiment_score, 1.0);
    drop(restarted);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn progress_file_for_another_experiment_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    build(tmp.path(), 1, false);
    let server = Server::start(tmp.path(), "127.0.0.1:0".parse().unwrap());
    let progress = tmp.path().join("p.json");
    std::fs::write(
        &progress,
        format!(r#"{{"base_url":"{}","experiment_id":"other","session_id":null,"recordings":[],"pending":null}}"#, server.url()),
    )
    .unwrap();
    let err = run_session(&server.url(), "exp", &MockEngine::new(BTreeMap::new()), &options(Some(&progress)))
        .await
        .unwrap_err();
    assert!(matches!(err, RunError::Progress { .. }));
}
