//! Blocking HTTP client for remote agents.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Condvar, Mutex};
use std::thread;
use std::time::Duration;

use reqwest::blocking::Client;
use reqwest::Url;

use super::wire::{GenerateReply, GenerateRequest, GENERATE_PATH};
use super::{Agent, AgentEndpoint, AgentError, AgentResponse, EndpointKind, GenerationConfig, PromptBundle};

const BACKOFF_BASE: Duration = Duration::from_millis(20);
const BACKOFF_MAX: Duration = Duration::from_secs(1);

pub(crate) fn parse_address(address: &str) -> Result<Url, AgentError> {
    let url = Url::parse(address)
        .map_err(|e| AgentError::Config(format!("bad agent address {address:?}: {e}")))?;
    if !matches!(url.scheme(), "http" | "https") || url.host_str().is_none() {
        return Err(AgentError::Config(format!(
            "agent address {address:?} must be an http(s) URL with a host"
        )));
    }
    Ok(url)
}

/// Counting semaphore bounding in-flight requests.
struct Gate {
    free: Mutex<usize>,
    cond: Condvar,
}

struct Permit<'a>(&'a Gate);

impl Gate {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n),
            cond: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("gate poisoned");
        while *free == 0 {
            free = self.cond.wait(free).expect("gate poisoned");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("gate poisoned") += 1;
        self.0.cond.notify_one();
    }
}

enum Attempt {
    Retry(String),
    Fatal(AgentError),
}

pub struct RemoteAgent {
    url: Url,
    client: Client,
    generation: GenerationConfig,
    retries: u32,
    gate: Gate,
    next_id: AtomicU64,
}

impl RemoteAgent {
    pub fn new(endpoint: &AgentEndpoint) -> Result<Self, AgentError> {
        let EndpointKind::Remote(address) = &endpoint.kind else {
            return Err(AgentError::Config("endpoint is not remote".into()));
        };
        let base = parse_address(address)?;
        let url = if base.path().ends_with(GENERATE_PATH) {
            base
        } else {
            base.join(GENERATE_PATH)
                .map_err(|e| AgentError::Config(e.to_string()))?
        };
        let client = Client::builder()
            .timeout(endpoint.timeout)
            .build()
            .map_err(|e| AgentError::Config(e.to_string()))?;
        Ok(Self {
            url,
            client,
            generation: endpoint.generation.clone(),
            retries: endpoint.retries,
            gate: Gate::new(endpoint.max_in_flight.max(1)),
            next_id: AtomicU64::new(0),
        })
    }

    fn attempt(&self, request: &GenerateRequest) -> Result<AgentResponse, Attempt> {
        let _permit = self.gate.acquire();
        let resp = self
            .client
            .post(self.url.clone())
            .json(request)
            .send()
            .map_err(|e| {
                if e.is_timeout() {
                    Attempt::Retry(format!("request {} timed out", request.request_id))
                } else {
                    Attempt::Retry(e.to_string())
                }
            })?;
        let status = resp.status();
        if !status.is_success() {
            return Err(Attempt::Retry(format!("HTTP status {status}")));
        }
        let body = resp.bytes().map_err(|e| Attempt::Retry(e.to_string()))?;
        let reply: GenerateReply = serde_json::from_slice(&body).map_err(|e| {
            Attempt::Fatal(AgentError::Protocol(format!("malformed reply: {e}")))
        })?;
        reply.into_response(request).map_err(Attempt::Fatal)
    }
}

impl Agent for RemoteAgent {
    fn identity(&self) -> String {
        format!("remote:{}", self.url)
    }

    fn invoke(&self, bundle: &PromptBundle) -> Result<AgentResponse, AgentError> {
        let seq = self.next_id.fetch_add(1, Ordering::Relaxed);
        let request_id = format!(
            "{}-{}-{}-{seq}",
            bundle.meta.conv_id, bundle.meta.turn_index, bundle.role
        );
        let request = GenerateRequest::from_bundle(bundle, &self.generation, request_id);
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                let backoff = BACKOFF_BASE
                    .saturating_mul(1 << (attempt - 1).min(16))
                    .min(BACKOFF_MAX);
                thread::sleep(backoff);
            }
            match self.attempt(&request) {
                Ok(response) => return Ok(response),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!("{} attempt {} failed: {msg}", self.url, attempt + 1);
                    last = msg;
                }
            }
        }
        Err(AgentError::Transport(format!(
            "{} failed after {} attempts: {last}",
            self.url,
            self.retries + 1
        )))
    }
}
