//! Deterministic in-process agents for tests and desk-scale runs.
//!
//! Each agent is a pure function of the [`PromptBundle`] it receives.

use std::sync::Arc;

use super::prompt::{ENCODER_SEP, MASK, SEP};
use super::{Agent, AgentError, AgentResponse, CandidateSet, Generation, PromptBundle, Role, ScoredSpan};
use crate::corpus::AnswerSpan;
use crate::textnorm::{normalize, token_precision, CANNOTANSWER};

/// Candidates returned when the bundle does not ask for a specific `k`.
pub const DEFAULT_TOP_K: usize = 10;
/// Longest leading phrase the span extractor emits, in words.
pub const MAX_PHRASE_WORDS: usize = 8;
pub const DEFAULT_ANSWER_THRESHOLD: f64 = 0.4;

/// Names accepted by [`scripted_agent`].
pub const SCRIPTED_AGENTS: &[&str] = &[
    "span-extractor",
    "template-questioner",
    "lexical-answerer",
    "cannot-answerer",
];

pub fn scripted_agent(name: &str) -> Option<Arc<dyn Agent>> {
    let agent: Arc<dyn Agent> = match name {
        "span-extractor" => Arc::new(SpanExtractor),
        "template-questioner" => Arc::new(TemplateQuestioner),
        "lexical-answerer" => Arc::new(LexicalAnswerer::default()),
        "cannot-answerer" => Arc::new(CannotAnswerer),
        _ => return None,
    };
    Some(agent)
}

/// A sentence of the passage with its char offset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sentence<'a> {
    pub start: usize,
    pub text: &'a str,
}

/// Splits on `.`, `!` or `?` followed by whitespace or end of text. Leading
/// whitespace is excluded from each sentence.
pub fn split_sentences(passage: &str) -> Vec<Sentence<'_>> {
    let mut out = Vec::new();
    let chars: Vec<(usize, char)> = passage.char_indices().collect();
    let mut begin: Option<(usize, usize)> = None; // (char idx, byte idx)
    for (ci, &(bi, c)) in chars.iter().enumerate() {
        if begin.is_none() {
            if c.is_whitespace() {
                continue;
            }
            begin = Some((ci, bi));
        }
        let at_end = ci + 1 == chars.len();
        let boundary = matches!(c, '.' | '!' | '?')
            && (at_end || chars[ci + 1].1.is_whitespace());
        if boundary || at_end {
            let (sc, sb) = begin.take().expect("sentence started");
            let eb = bi + c.len_utf8();
            out.push(Sentence {
                start: sc,
                text: &passage[sb..eb],
            });
        }
    }
    out
}

/// The sentence's leading phrase: text up to the first clause punctuation,
/// capped at [`MAX_PHRASE_WORDS`] words, without trailing punctuation.
pub fn leading_phrase(sentence: &str) -> &str {
    let clause_end = sentence
        .find([',', ';', ':'])
        .unwrap_or(sentence.len());
    let clause = &sentence[..clause_end];
    let mut end = clause.len();
    let mut words = 0;
    let mut in_word = false;
    for (i, c) in clause.char_indices() {
        if c.is_whitespace() {
            if in_word {
                words += 1;
                in_word = false;
                if words == MAX_PHRASE_WORDS {
                    end = i;
                    break;
                }
            }
        } else {
            in_word = true;
        }
    }
    clause[..end].trim_end_matches(|c: char| c.is_whitespace() || matches!(c, '.' | '!' | '?'))
}

fn unsupported(agent: &str, role: Role) -> AgentError {
    AgentError::UnsupportedRole {
        agent: agent.into(),
        role,
    }
}

/// Scripted `cae`: one candidate per sentence (its leading phrase), ranked
/// in passage order rotated so that turn `t` starts at sentence `t - 1`.
#[derive(Debug, Clone, Copy, Default)]
pub struct SpanExtractor;

impl Agent for SpanExtractor {
    fn identity(&self) -> String {
        "scripted:span-extractor".into()
    }

    fn invoke(&self, bundle: &PromptBundle) -> Result<AgentResponse, AgentError> {
        if bundle.role != Role::Cae {
            return Err(unsupported("span-extractor", bundle.role));
        }
        let passage = bundle
            .context
            .as_deref()
            .ok_or_else(|| AgentError::Protocol("cae bundle without passage".into()))?;
        let k = bundle.top_k.unwrap_or(DEFAULT_TOP_K);
        let phrases: Vec<(usize, &str)> = split_sentences(passage)
            .into_iter()
            .map(|s| (s.start, leading_phrase(s.text)))
            .filter(|(_, p)| !p.is_empty())
            .collect();
        let n = phrases.len();
        let offset = if n == 0 {
            0
        } else {
            bundle.meta.turn_index.saturating_sub(1) % n
        };
        let spans = (0..n)
            .map(|rank| {
                let (start, text) = phrases[(offset + rank) % n];
                ScoredSpan {
                    span: AnswerSpan::at(text, start),
                    score: 1.0 / (rank + 1) as f64,
                }
            })
            .collect();
        Ok(AgentResponse::Candidates(CandidateSet::new(spans, k)))
    }
}

/// Scripted question generator for both grounding modes.
///
/// Answer-grounded: `What is <target>?`. Prior-grounded: alternates
/// `What happened next?` (odd turns) and `Anything else?` (even turns).
#[derive(Debug, Clone, Copy, Default)]
pub struct TemplateQuestioner;

/// Recovers the target answer from an answer-grounded prompt.
fn masked_target(text: &str) -> Option<&str> {
    let after = &text[text.rfind(MASK)? + MASK.len()..];
    Some(after.trim().strip_suffix(SEP)?.trim())
}

impl Agent for TemplateQuestioner {
    fn identity(&self) -> String {
        "scripted:template-questioner".into()
    }

    fn invoke(&self, bundle: &PromptBundle) -> Result<AgentResponse, AgentError> {
        let text = match bundle.role {
            Role::CqgAnswer => {
                let target = masked_target(&bundle.text).ok_or_else(|| {
                    AgentError::Protocol("answer-grounded prompt without a masked target".into())
                })?;
                format!("What is {target}?")
            }
            Role::CqgPrior => {
                if bundle.meta.turn_index % 2 == 1 {
                    "What happened next?".to_owned()
                } else {
                    "Anything else?".to_owned()
                }
            }
            role => return Err(unsupported("template-questioner", role)),
        };
        Ok(AgentResponse::Text(vec![Generation {
            text,
            score: 1.0,
            start: None,
        }]))
    }
}

/// Scripted `caf`: answers with the passage sentence covering the largest
/// fraction of the question's normalized tokens, or `CANNOTANSWER` when no
/// sentence reaches `threshold`.
#[derive(Debug, Clone, Copy)]
pub struct LexicalAnswerer {
    pub threshold: f64,
}

impl Default for LexicalAnswerer {
    fn default() -> Self {
        Self {
            threshold: DEFAULT_ANSWER_THRESHOLD,
        }
    }
}

impl LexicalAnswerer {
    /// Best sentence and its overlap score.
    pub fn answer(&self, question: &str, passage: &str) -> (AnswerSpan, f64) {
        let q = normalize(question);
        let mut best: Option<(Sentence<'_>, f64)> = None;
        for s in split_sentences(passage) {
            let overlap = token_precision(&q, &normalize(s.text));
            if best.as_ref().is_none_or(|(_, b)| overlap > *b) {
                best = Some((s, overlap));
            }
        }
        match best {
            Some((s, score)) if score >= self.threshold && score > 0.0 => {
                (AnswerSpan::at(s.text, s.start), score)
            }
            Some((_, score)) => (AnswerSpan::unanswerable(), score),
            None => (AnswerSpan::unanswerable(), 0.0),
        }
    }
}

impl Agent for LexicalAnswerer {
    fn identity(&self) -> String {
        format!("scripted:lexical-answerer(threshold={})", self.threshold)
    }

    fn invoke(&self, bundle: &PromptBundle) -> Result<AgentResponse, AgentError> {
        if bundle.role != Role::Caf {
            return Err(unsupported("lexical-answerer", bundle.role));
        }
        let passage = bundle
            .context
            .as_deref()
            .ok_or_else(|| AgentError::Protocol("caf bundle without passage".into()))?;
        let sep = format!(" {ENCODER_SEP} ");
        let question = bundle.text.rsplit(&sep).next().unwrap_or(&bundle.text);
        let (span, score) = self.answer(question, passage);
        Ok(AgentResponse::Text(vec![Generation {
            text: span.text,
            score,
            start: span.start,
        }]))
    }
}

/// Scripted `caf` that never finds an answer.
#[derive(Debug, Clone, Copy, Default)]
pub struct CannotAnswerer;

impl Agent for CannotAnswerer {
    fn identity(&self) -> String {
        "scripted:cannot-answerer".into()
    }

    fn invoke(&self, bundle: &PromptBundle) -> Result<AgentResponse, AgentError> {
        if bundle.role != Role::Caf {
            return Err(unsupported("cannot-answerer", bundle.role));
        }
        Ok(AgentResponse::Text(vec![Generation {
            text: CANNOTANSWER.into(),
            score: 0.0,
            start: None,
        }]))
    }
}
