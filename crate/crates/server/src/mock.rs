//! A mock inference server for `POST /v1/generate`, backed by the scripted
//! agents, with injectable faults for exercising client error paths.

use std::net::SocketAddr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use simseek::agents::wire::{GenerateReply, GenerateRequest, GENERATE_PATH};
use simseek::agents::{scripted_agent, Agent, Role};
use tokio::sync::oneshot;

#[derive(Debug, Clone, Default)]
pub struct FaultPlan {
    /// Answer the first N requests with 503.
    pub fail_first: usize,
    /// Sleep before every reply.
    pub delay: Duration,
    /// Reply with a body that is not JSON.
    pub malformed: bool,
    /// Echo a request id that does not match.
    pub wrong_request_id: bool,
}

pub struct MockState {
    faults: FaultPlan,
    questioner: Arc<dyn Agent>,
    extractor: Arc<dyn Agent>,
    answerer: Arc<dyn Agent>,
    served: AtomicUsize,
    requests: Mutex<Vec<GenerateRequest>>,
}

impl MockState {
    /// `answerer` names the scripted agent used for `caf`.
    pub fn new(faults: FaultPlan, answerer: &str) -> Option<Arc<Self>> {
        Some(Arc::new(Self {
            faults,
            questioner: scripted_agent("template-questioner")?,
            extractor: scripted_agent("span-extractor")?,
            answerer: scripted_agent(answerer)?,
            served: AtomicUsize::new(0),
            requests: Mutex::new(Vec::new()),
        }))
    }

    /// Every request received so far, including failed ones.
    pub fn requests(&self) -> Vec<GenerateRequest> {
        self.requests.lock().expect("request log poisoned").clone()
    }
}

pub fn mock_router(state: Arc<MockState>) -> Router {
    Router::new()
        .route(GENERATE_PATH, post(generate))
        .with_state(state)
}

async fn generate(State(state): State<Arc<MockState>>, Json(request): Json<GenerateRequest>) -> Response {
    let n = state.served.fetch_add(1, Ordering::SeqCst);
    state
        .requests
        .lock()
        .expect("request log poisoned")
        .push(request.clone());
    let faults = &state.faults;
    if !faults.delay.is_zero() {
        tokio::time::sleep(faults.delay).await;
    }
    if n < faults.fail_first {
        return (StatusCode::SERVICE_UNAVAILABLE, "warming up").into_response();
    }
    if faults.malformed {
        return (StatusCode::OK, "{\"outputs\": [oops").into_response();
    }
    let agent = match request.role {
        Role::Cae => &state.extractor,
        Role::CqgAnswer | Role::CqgPrior => &state.questioner,
        Role::Caf => &state.answerer,
    };
    match agent.invoke(&request.to_bundle()) {
        Ok(response) => {
            let id = if faults.wrong_request_id {
                format!("{}-stale", request.request_id)
            } else {
                request.request_id.clone()
            };
            Json(GenerateReply::from_response(&response, &id)).into_response()
        }
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

/// A mock server on its own runtime thread, for use from blocking code.
pub struct MockAgentServer {
    addr: SocketAddr,
    state: Arc<MockState>,
    shutdown: Option<oneshot::Sender<()>>,
    thread: Option<thread::JoinHandle<()>>,
}

impl MockAgentServer {
    /// Binds an ephemeral port on 127.0.0.1.
    pub fn start(faults: FaultPlan) -> std::io::Result<Self> {
        Self::start_with(faults, "lexical-answerer")
    }

    pub fn start_with(faults: FaultPlan, answerer: &str) -> std::io::Result<Self> {
        let state = MockState::new(faults, answerer).ok_or_else(|| {
            std::io::Error::new(
                std::io::ErrorKind::InvalidInput,
                format!("unknown scripted agent {answerer:?}"),
            )
        })?;
        let listener = std::net::TcpListener::bind("127.0.0.1:0")?;
        listener.set_nonblocking(true)?;
        let addr = listener.local_addr()?;
        let (tx, rx) = oneshot::channel::<()>();
        let router = mock_router(state.clone());
        let thread = thread::Builder::new()
            .name("mock-agent".into())
            .spawn(move || {
                let rt = tokio::runtime::Builder::new_current_thread()
                    .enable_all()
                    .build()
                    .expect("mock agent runtime");
                rt.block_on(async move {
                    let listener = tokio::net::TcpListener::from_std(listener).expect("listener");
                    if let Err(e) = crate::serve(listener, router, async {
                        let _ = rx.await;
                    })
                    .await
                    {
                        log::error!("mock agent server: {e}");
                    }
                });
            })?;
        Ok(Self {
            addr,
            state,
            shutdown: Some(tx),
            thread: Some(thread),
        })
    }

    pub fn url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub fn requests(&self) -> Vec<GenerateRequest> {
        self.state.requests()
    }
}

impl Drop for MockAgentServer {
    fn drop(&mut self) {
        if let Some(tx) = self.shutdown.take() {
            let _ = tx.send(());
        }
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}
