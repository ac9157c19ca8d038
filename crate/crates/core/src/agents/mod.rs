//! Questioner and answerer agents.
//!
//! The simulator talks to four neural roles through the [`Agent`] trait:
//! the answer extractor (`cae`), the answer-grounded and prior-grounded
//! question generators (`cqg_answer`, `cqg_prior`) and the answer finder
//! (`caf`). Inputs are serialized by the builders in [`prompt`]; agents are
//! either scripted (deterministic, in-process) or remote (HTTP, see [`wire`]).

pub mod prompt;
pub mod remote;
pub mod scripted;
pub mod wire;

use std::fmt;
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::AnswerSpan;

pub use prompt::{build_cae_input, build_caf_input, build_cqg_answer_prompt, build_cqg_prior_prompt};
pub use remote::RemoteAgent;
pub use scripted::scripted_agent;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AgentError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("agent {agent} does not serve role {role}")]
    UnsupportedRole { agent: String, role: Role },
    #[error("invalid agent configuration: {0}")]
    Config(String),
    #[error("cannot build prompt: {0}")]
    Prompt(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Cae,
    CqgAnswer,
    CqgPrior,
    Caf,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::Cae, Role::CqgAnswer, Role::CqgPrior, Role::Caf];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Cae => "cae",
            Role::CqgAnswer => "cqg_answer",
            Role::CqgPrior => "cqg_prior",
            Role::Caf => "caf",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Decoding parameters forwarded verbatim to generation backends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    pub beam_size: u32,
    pub top_p: f64,
    pub temperature: f64,
    pub max_new_tokens: u32,
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            beam_size: 5,
            top_p: 0.98,
            temperature: 1.2,
            max_new_tokens: 64,
        }
    }
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), AgentError> {
        if self.beam_size < 1 {
            return Err(AgentError::Config("beam_size must be at least 1".into()));
        }
        if !(self.top_p > 0.0 && self.top_p <= 1.0) {
            return Err(AgentError::Config(format!(
                "top_p must be in (0, 1], got {}",
                self.top_p
            )));
        }
        if !(self.temperature > 0.0 && self.temperature.is_finite()) {
            return Err(AgentError::Config(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PromptMeta {
    pub conv_id: String,
    pub turn_index: usize,
}

/// A fully serialized agent input.
///
/// `context` carries the evidence passage for the roles that read it
/// (`cae`, `caf`); it is always `None` for the question generators, whose
/// passage access (if any) is already inside `text`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptBundle {
    pub role: Role,
    pub text: String,
    pub context: Option<String>,
    /// Number of candidates requested from a `cae` agent.
    pub top_k: Option<usize>,
    pub meta: PromptMeta,
}

impl PromptBundle {
    pub fn with_top_k(mut self, k: usize) -> Self {
        self.top_k = Some(k);
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSpan {
    pub span: AnswerSpan,
    pub score: f64,
}

/// Ranked answer candidates, scores non-increasing, at most `k` entries.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateSet {
    spans: Vec<ScoredSpan>,
    k: usize,
}

impl CandidateSet {
    /// Sorts by score (stable, descending) and keeps the top `k`.
    pub fn new(mut spans: Vec<ScoredSpan>, k: usize) -> Self {
        spans.sort_by(|a, b| b.score.total_cmp(&a.score));
        spans.truncate(k);
        Self { spans, k }
    }

    pub fn spans(&self) -> &[ScoredSpan] {
        &self.spans
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    pub fn len(&self) -> usize {
        self.spans.len()
    }

    pub fn truncate(&mut self, k: usize) {
        self.spans.truncate(k);
        self.k = self.k.min(k);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generation {
    pub text: String,
    pub score: f64,
    /// Char offset into the passage when the output is an extracted span.
    pub start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AgentResponse {
    Text(Vec<Generation>),
    Candidates(CandidateSet),
}

impl AgentResponse {
    /// Best generated output, for text-producing roles.
    pub fn best_text(&self) -> Result<&Generation, AgentError> {
        match self {
            AgentResponse::Text(outputs) => outputs
                .first()
                .ok_or_else(|| AgentError::Protocol("reply contains no outputs".into())),
            AgentResponse::Candidates(_) => Err(AgentError::Protocol(
                "expected generated text, got a candidate set".into(),
            )),
        }
    }

    pub fn into_candidates(self) -> Result<CandidateSet, AgentError> {
        match self {
            AgentResponse::Candidates(c) => Ok(c),
            AgentResponse::Text(_) => Err(AgentError::Protocol(
                "expected a candidate set, got generated text".into(),
            )),
        }
    }
}

pub trait Agent: Send + Sync {
    /// Stable identity recorded in run manifests.
    fn identity(&self) -> String;

    fn invoke(&self, bundle: &PromptBundle) -> Result<AgentResponse, AgentError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EndpointKind {
    Scripted(String),
    Remote(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentEndpoint {
    pub kind: EndpointKind,
    pub generation: GenerationConfig,
    pub timeout: Duration,
    pub retries: u32,
    /// Bound on concurrent in-flight requests (remote only).
    pub max_in_flight: usize,
}

impl AgentEndpoint {
    pub fn scripted(name: impl Into<String>) -> Self {
        Self {
            kind: EndpointKind::Scripted(name.into()),
            generation: GenerationConfig::default(),
            timeout: Duration::from_secs(30),
            retries: 2,
            max_in_flight: 4,
        }
    }

    pub fn remote(address: impl Into<String>) -> Self {
        Self {
            kind: EndpointKind::Remote(address.into()),
            ..Self::scripted("")
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        self.generation.validate()?;
        if self.max_in_flight == 0 {
            return Err(AgentError::Config("max_in_flight must be at least 1".into()));
        }
        if let EndpointKind::Remote(address) = &self.kind {
            remote::parse_address(address)?;
        }
        Ok(())
    }

    pub fn connect(&self) -> Result<Arc<dyn Agent>, AgentError> {
        self.validate()?;
        match &self.kind {
            EndpointKind::Scripted(name) => scripted_agent(name)
                .ok_or_else(|| AgentError::Config(format!("unknown scripted agent {name:?}"))),
            EndpointKind::Remote(_) => Ok(Arc::new(RemoteAgent::new(self)?)),
        }
    }
}

/// Convenience: invoke the agent and extract the single best text output.
pub fn generate_text(agent: &dyn Agent, bundle: &PromptBundle) -> Result<Generation, AgentError> {
    let response = agent.invoke(bundle)?;
    Ok(response.best_text()?.clone())
}
