//! JSON bodies of the remote agent protocol.
//!
//! `POST /v1/generate`
//!
//! ```json
//! {"role": "cqg_prior", "prompt": "...", "generation": {"beam_size": 5, "top_p": 0.98,
//!  "temperature": 1.2, "max_new_tokens": 64}, "request_id": "c1-3-cqg_prior-17"}
//! ```
//!
//! Replies are `{"request_id": ..., "outputs": [{"text": ..., "score": ...}]}`;
//! for `cae` each output also carries `start` and the reply carries `k`.
//! Requests for `cae` and `caf` add the passage as `context`, `cae` requests
//! add the requested `k`, and every request carries `meta` (conversation id
//! and turn index) so stateless backends can key on the turn.

use serde::{Deserialize, Serialize};

use super::{
    AgentError, AgentResponse, CandidateSet, Generation, GenerationConfig, PromptBundle,
    PromptMeta, Role, ScoredSpan,
};
use crate::corpus::AnswerSpan;

pub const GENERATE_PATH: &str = "/v1/generate";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateRequest {
    pub role: Role,
    pub prompt: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context: Option<String>,
    pub generation: GenerationConfig,
    pub request_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub meta: PromptMeta,
}

impl GenerateRequest {
    pub fn from_bundle(
        bundle: &PromptBundle,
        generation: &GenerationConfig,
        request_id: impl Into<String>,
    ) -> Self {
        Self {
            role: bundle.role,
            prompt: bundle.text.clone(),
            context: bundle.context.clone(),
            generation: generation.clone(),
            request_id: request_id.into(),
            k: bundle.top_k,
            meta: bundle.meta.clone(),
        }
    }

    pub fn to_bundle(&self) -> PromptBundle {
        PromptBundle {
            role: self.role,
            text: self.prompt.clone(),
            context: self.context.clone(),
            top_k: self.k,
            meta: self.meta.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireOutput {
    pub text: String,
    #[serde(default)]
    pub score: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub start: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerateReply {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub request_id: Option<String>,
    pub outputs: Vec<WireOutput>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
}

impl GenerateReply {
    /// Encodes an in-process agent response, as a server would send it.
    pub fn from_response(response: &AgentResponse, request_id: &str) -> Self {
        match response {
            AgentResponse::Text(outputs) => Self {
                request_id: Some(request_id.to_owned()),
                outputs: outputs
                    .iter()
                    .map(|g| WireOutput {
                        text: g.text.clone(),
                        score: g.score,
                        start: g.start,
                    })
                    .collect(),
                k: None,
            },
            AgentResponse::Candidates(set) => Self {
                request_id: Some(request_id.to_owned()),
                outputs: set
                    .spans()
                    .iter()
                    .map(|s| WireOutput {
                        text: s.span.text.clone(),
                        score: s.score,
                        start: s.span.start,
                    })
                    .collect(),
                k: Some(set.k()),
            },
        }
    }

    /// Decodes and validates a reply to `request`.
    pub fn into_response(self, request: &GenerateRequest) -> Result<AgentResponse, AgentError> {
        match (&self.request_id, request.role) {
            (Some(id), _) if *id != request.request_id => {
                return Err(AgentError::Protocol(format!(
                    "reply for request {id} does not match request {}",
                    request.request_id
                )))
            }
            (None, role) if role != Role::Cae => {
                return Err(AgentError::Protocol("reply is missing request_id".into()))
            }
            _ => {}
        }
        if let Some(bad) = self.outputs.iter().find(|o| !o.score.is_finite()) {
            return Err(AgentError::Protocol(format!(
                "non-finite score for output {:?}",
                bad.text
            )));
        }
        if request.role != Role::Cae {
            return Ok(AgentResponse::Text(
                self.outputs
                    .into_iter()
                    .map(|o| Generation {
                        text: o.text,
                        score: o.score,
                        start: o.start,
                    })
                    .collect(),
            ));
        }
        let k = self
            .k
            .or(request.k)
            .unwrap_or(self.outputs.len());
        let mut spans = Vec::with_capacity(self.outputs.len());
        for o in self.outputs {
            let start = o.start.ok_or_else(|| {
                AgentError::Protocol(format!("cae output {:?} has no start offset", o.text))
            })?;
            let span = AnswerSpan::at(o.text, start);
            if let Some(passage) = &request.context {
                if !span.verify(passage) {
                    return Err(AgentError::Protocol(format!(
                        "cae output {:?} is not found at offset {start}",
                        span.text
                    )));
                }
            }
            spans.push(ScoredSpan {
                span,
                score: o.score,
            });
        }
        Ok(AgentResponse::Candidates(CandidateSet::new(spans, k)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn request(role: Role) -> GenerateRequest {
        GenerateRequest {
            role,
            prompt: "p".into(),
            context: Some("alpha beta".into()),
            generation: GenerationConfig::default(),
            request_id: "r1".into(),
            k: Some(2),
            meta: PromptMeta::default(),
        }
    }

    #[test]
    fn minimal_text_reply_decodes() {
        let reply: GenerateReply =
            serde_json::from_str(r#"{"request_id":"r1","outputs":[{"text":"Who was he?"}]}"#).unwrap();
        let out = reply.into_response(&request(Role::CqgPrior)).unwrap();
        assert_eq!(out.best_text().unwrap().text, "Who was he?");
    }

    #[test]
    fn request_shape_is_stable() {
        let json = serde_json::to_value(request(Role::Caf)).unwrap();
        assert_eq!(json["role"], "caf");
        assert_eq!(json["generation"]["beam_size"], 5);
        assert_eq!(json["generation"]["top_p"], 0.98);
        assert_eq!(json["generation"]["temperature"], 1.2);
        assert_eq!(json["request_id"], "r1");
    }

    #[test]
    fn mismatched_or_missing_ids_are_protocol_errors() {
        let reply = GenerateReply {
            request_id: Some("other".into()),
            outputs: vec![],
            k: None,
        };
        assert!(matches!(
            reply.into_response(&request(Role::Caf)),
            Err(AgentError::Protocol(_))
        ));
        let reply = GenerateReply {
            request_id: None,
            outputs: vec![],
            k: None,
        };
        assert!(reply.into_response(&request(Role::Caf)).is_err());
    }

    #[test]
    fn cae_reply_checks_offsets() {
        let ok: GenerateReply = serde_json::from_str(
            r#"{"outputs":[{"text":"beta","start":6,"score":0.4},{"text":"alpha","start":0,"score":0.9}],"k":2}"#,
        )
        .unwrap();
        let set = ok.into_response(&request(Role::Cae)).unwrap().into_candidates().unwrap();
        assert_eq!(set.spans()[0].span.text, "alpha");
        let bad: GenerateReply =
            serde_json::from_str(r#"{"outputs":[{"text":"beta","start":0,"score":0.4}],"k":1}"#).unwrap();
        assert!(bad.into_response(&request(Role::Cae)).is_err());
        let nostart: GenerateReply =
            serde_json::from_str(r#"{"outputs":[{"text":"beta","score":0.4}],"k":1}"#).unwrap();
        assert!(nostart.into_response(&request(Role::Cae)).is_err());
    }
}
