//! Turn loops for the symmetric and asymmetric pipelines, batch driving,
//! and roundtrip filtration.
//!
//! Symmetric turn: extract top-k answer candidates from the passage and the
//! previous pair, pick one, then ask the answer-grounded questioner for a
//! question about it. Asymmetric turn: the prior-grounded questioner asks
//! from background and history alone, then the answer finder answers from
//! the passage, possibly with `CANNOTANSWER`. Either way the new pair is
//! appended to the history the next turn sees.

use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{
    build_cae_input, build_caf_input, build_cqg_answer_prompt, build_cqg_prior_prompt,
    generate_text, Agent, AgentError, Generation, PromptMeta,
};
use crate::corpus::{
    find_char_offset, AnswerSpan, Conversation, CorpusError, Dataset, Document, Provenance, QAPair,
};
use crate::textnorm::{is_unanswerable, normalize, token_f1, CANNOTANSWER};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("turn {turn}: {source}")]
    Agent {
        turn: usize,
        #[source]
        source: AgentError,
    },
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sym,
    Asym,
}

/// How the symmetric loop picks `a_t` from the extractor's candidates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CandidatePolicy {
    /// Highest-scoring candidate.
    #[default]
    Top1,
    /// Highest-scoring candidate whose text has not been an answer yet;
    /// the conversation ends when none is left.
    Top1Dedup,
    /// Uniform draw among the candidates, seeded per conversation.
    UniformRandom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub mode: Mode,
    pub max_turns: usize,
    /// Stop once the number of unanswerable answers exceeds this.
    pub unanswerable_budget: Option<usize>,
    pub k: usize,
    pub candidate_policy: CandidatePolicy,
    pub seed: u64,
}

impl SimulationConfig {
    /// Semi-supervised setting: six turns, no early termination.
    pub fn semi_supervised(mode: Mode) -> Self {
        Self {
            mode,
            max_turns: 6,
            unanswerable_budget: None,
            k: 10,
            candidate_policy: CandidatePolicy::Top1,
            seed: 0,
        }
    }

    /// Wikipedia-scale setting: up to twelve turns, ending after more than
    /// three unanswerable questions.
    pub fn wiki() -> Self {
        Self {
            mode: Mode::Asym,
            max_turns: 12,
            unanswerable_budget: Some(3),
            ..Self::semi_supervised(Mode::Asym)
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if self.max_turns < 1 {
            return Err(SimError::Config("max_turns must be at least 1".into()));
        }
        if self.k < 1 {
            return Err(SimError::Config("k must be at least 1".into()));
        }
        Ok(())
    }
}

/// FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
fn stable_hash(s: &str) -> u64 {
    s.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// RNG for one document, independent of batch scheduling.
pub fn conversation_rng(seed: u64, doc_id: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ stable_hash(doc_id))
}

fn meta(doc: &Document, turn_index: usize) -> PromptMeta {
    PromptMeta {
        conv_id: doc.doc_id().to_owned(),
        turn_index,
    }
}

fn agent_err(turn: usize) -> impl Fn(AgentError) -> SimError {
    move |source| SimError::Agent { turn, source }
}

fn question_from(generation: Generation, turn: usize) -> Result<String, SimError> {
    let q = generation.text.trim().to_owned();
    if q.is_empty() {
        return Err(SimError::Agent {
            turn,
            source: AgentError::Protocol("questioner returned an empty question".into()),
        });
    }
    Ok(q)
}

/// Maps an answer finder output onto a passage span.
fn answer_from(generation: Generation, passage: &str) -> Result<AnswerSpan, AgentError> {
    let text = generation.text.trim();
    if text == CANNOTANSWER || text.is_empty() {
        return Ok(AnswerSpan::unanswerable());
    }
    if let Some(start) = generation.start {
        let span = AnswerSpan::at(generation.text.clone(), start);
        if span.verify(passage) {
            return Ok(span);
        }
    }
    find_char_offset(passage, text)
        .map(|start| AnswerSpan::at(text, start))
        .ok_or_else(|| AgentError::Protocol(format!("answer {text:?} does not occur in the passage")))
}

pub fn simulate_sym(
    doc: &Document,
    extractor: &dyn Agent,
    questioner: &dyn Agent,
    config: &SimulationConfig,
) -> Result<Conversation, SimError> {
    config.validate()?;
    let mut rng = conversation_rng(config.seed, doc.doc_id());
    let passage = doc.passage();
    let mut history: Vec<QAPair> = Vec::with_capacity(config.max_turns);
    let mut used: HashSet<String> = HashSet::new();
    for t in 1..=config.max_turns {
        let bundle = build_cae_input(passage, history.last(), meta(doc, t)).with_top_k(config.k);
        let mut candidates = extractor
            .invoke(&bundle)
            .and_then(|r| r.into_candidates())
            .map_err(agent_err(t))?;
        candidates.truncate(config.k);
        if let Some(bad) = candidates.spans().iter().find(|s| {
            s.span.is_unanswerable || !s.span.verify(passage)
        }) {
            return Err(SimError::Agent {
                turn: t,
                source: AgentError::Protocol(format!(
                    "candidate {:?} is not a span of the passage",
                    bad.span.text
                )),
            });
        }
        let spans = candidates.spans();
        let chosen = match config.candidate_policy {
            CandidatePolicy::Top1 => spans.first(),
            CandidatePolicy::Top1Dedup => spans.iter().find(|s| !used.contains(&s.span.text)),
            CandidatePolicy::UniformRandom if spans.is_empty() => None,
            CandidatePolicy::UniformRandom => Some(&spans[rng.gen_range(0..spans.len())]),
        };
        let Some(chosen) = chosen else {
            log::debug!("{}: no usable candidate at turn {t}", doc.doc_id());
            break;
        };
        let target = chosen.span.clone();
        let prompt = build_cqg_answer_prompt(passage, &history, &target, meta(doc, t))
            .map_err(agent_err(t))?;
        let question = question_from(generate_text(questioner, &prompt).map_err(agent_err(t))?, t)?;
        used.insert(target.text.clone());
        history.push(QAPair {
            turn_index: t,
            question,
            answer: target,
        });
    }
    Ok(Conversation::new(doc.doc_id(), doc.clone(), history)?)
}

pub fn simulate_asym(
    doc: &Document,
    questioner: &dyn Agent,
    answerer: &dyn Agent,
    config: &SimulationConfig,
) -> Result<Conversation, SimError> {
    config.validate()?;
    let mut history: Vec<QAPair> = Vec::with_capacity(config.max_turns);
    let mut unanswerable = 0usize;
    for t in 1..=config.max_turns {
        let prompt = build_cqg_prior_prompt(doc.background(), &history, meta(doc, t));
        let question = question_from(generate_text(questioner, &prompt).map_err(agent_err(t))?, t)?;
        let caf = build_caf_input(&question, doc.passage(), &history, doc.background(), meta(doc, t));
        let answer = generate_text(answerer, &caf)
            .and_then(|g| answer_from(g, doc.passage()))
            .map_err(agent_err(t))?;
        let stop = if answer.is_unanswerable {
            unanswerable += 1;
            config.unanswerable_budget.is_some_and(|b| unanswerable > b)
        } else {
            false
        };
        history.push(QAPair {
            turn_index: t,
            question,
            answer,
        });
        if stop {
            break;
        }
    }
    Ok(Conversation::new(doc.doc_id(), doc.clone(), history)?)
}

/// Agents used by a batch; which ones are required depends on the mode.
#[derive(Clone)]
pub struct BatchAgents {
    pub questioner: Arc<dyn Agent>,
    pub extractor: Option<Arc<dyn Agent>>,
    pub answerer: Option<Arc<dyn Agent>>,
}

impl BatchAgents {
    /// Role name → agent identity, for manifests.
    pub fn identities(&self) -> BTreeMap<String, String> {
        let mut out = BTreeMap::new();
        out.insert("questioner".to_owned(), self.questioner.identity());
        if let Some(a) = &self.extractor {
            out.insert("extractor".to_owned(), a.identity());
        }
        if let Some(a) = &self.answerer {
            out.insert("answerer".to_owned(), a.identity());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocFailure {
    pub doc_id: String,
    pub error: String,
}

#[derive(Debug, Clone)]
pub struct SimulationReport {
    pub conversations: Dataset,
    pub attempted: usize,
    pub aborted: usize,
    /// (conv_id, number of turns) for every completed conversation.
    pub turn_counts: Vec<(String, usize)>,
    pub failures: Vec<DocFailure>,
}

/// Simulates one conversation per document, `jobs` documents at a time.
/// Output is ordered by doc_id; a failing document is recorded and skipped.
pub fn run_batch(
    documents: &[Document],
    config: &SimulationConfig,
    agents: &BatchAgents,
    jobs: usize,
) -> Result<SimulationReport, SimError> {
    config.validate()?;
    let (provenance, name) = match config.mode {
        Mode::Sym => (Provenance::SyntheticSym, "simseek-sym"),
        Mode::Asym => (Provenance::SyntheticAsym, "simseek-asym"),
    };
    let companion = match config.mode {
        Mode::Sym => agents.extractor.clone().ok_or_else(|| {
            SimError::Config("symmetric mode needs an extractor agent".into())
        })?,
        Mode::Asym => agents.answerer.clone().ok_or_else(|| {
            SimError::Config("asymmetric mode needs an answerer agent".into())
        })?,
    };
    let mut docs: Vec<&Document> = documents.iter().collect();
    docs.sort_by(|a, b| a.doc_id().cmp(b.doc_id()));
    if let Some(dup) = docs.windows(2).find(|w| w[0].doc_id() == w[1].doc_id()) {
        return Err(SimError::Config(format!("duplicate doc_id {}", dup[0].doc_id())));
    }

    let simulate = |doc: &&Document| match config.mode {
        Mode::Sym => simulate_sym(doc, companion.as_ref(), agents.questioner.as_ref(), config),
        Mode::Asym => simulate_asym(doc, agents.questioner.as_ref(), companion.as_ref(), config),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SimError::Config(e.to_string()))?;
    let results: Vec<Result<Conversation, SimError>> =
        pool.install(|| docs.par_iter().map(simulate).collect());

    let mut conversations = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (doc, result) in docs.iter().zip(results) {
        match result {
            Ok(conv) => conversations.push(conv),
            Err(e) => {
                log::warn!("{}: conversation aborted: {e}", doc.doc_id());
                failures.push(DocFailure {
                    doc_id: doc.doc_id().to_owned(),
                    error: e.to_string(),
                });
            }
        }
    }
    let turn_counts = conversations
        .iter()
        .map(|c| (c.conv_id.clone(), c.len()))
        .collect();
    Ok(SimulationReport {
        attempted: docs.len(),
        aborted: failures.len(),
        conversations: Dataset::new(name, conversations, provenance)?,
        turn_counts,
        failures,
    })
}

/// Provenance record written next to a simulated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: SimulationConfig,
    pub endpoints: BTreeMap<String, String>,
    pub attempted: usize,
    pub aborted: usize,
    pub conversations: usize,
    pub questions: usize,
    pub failures: Vec<DocFailure>,
    /// Seconds since the Unix epoch.
    pub created: u64,
}

impl SimulationReport {
    pub fn manifest(
        &self,
        config: &SimulationConfig,
        endpoints: BTreeMap<String, String>,
        created: u64,
    ) -> RunManifest {
        RunManifest {
            config: config.clone(),
            endpoints,
            attempted: self.attempted,
            aborted: self.aborted,
            conversations: self.conversations.conversations.len(),
            questions: self.conversations.n_questions(),
            failures: self.failures.clone(),
            created,
        }
    }
}

// ---------------------------------------------------------------------------
// Roundtrip filtration

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    /// Minimum word-level F1 between the filter's prediction and `a_t`.
    pub f1_threshold: f64,
    /// When false, below-threshold pairs are flagged but kept.
    pub drop_below: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            f1_threshold: 0.5,
            drop_below: true,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.f1_threshold) {
            return Err(SimError::Config(format!(
                "f1_threshold must be in [0, 1], got {}",
                self.f1_threshold
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum DropReason {
    BelowThreshold { f1: f64, prediction: String },
    AgentFailure { error: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedPair {
    pub conv_id: String,
    /// Turn index in the unfiltered conversation.
    pub turn_index: usize,
    #[serde(flatten)]
    pub reason: DropReason,
}

#[derive(Debug, Clone)]
pub struct FilterOutcome {
    /// Surviving pairs, renumbered from 1 within each conversation.
    pub kept: Dataset,
    pub dropped: Vec<DroppedPair>,
    /// Below-threshold pairs kept because `drop_below` is off.
    pub flagged: Vec<DroppedPair>,
    pub total_pairs: usize,
    pub passed_pairs: usize,
    /// `passed_pairs / total_pairs` (0 for an empty dataset).
    pub success_rate: f64,
}

enum Judgment {
    Pass,
    Below(DropReason),
    Failed(DropReason),
}

/// Roundtrip-consistency filter over a finished synthetic dataset.
///
/// Each pair is judged on its own: the filter answers `q_t` with the
/// original preceding turns as history, and the pair passes when the
/// prediction's F1 against `a_t` reaches the threshold.
pub fn roundtrip_filter(
    dataset: &Dataset,
    filter: &dyn Agent,
    config: &FilterConfig,
) -> Result<FilterOutcome, SimError> {
    config.validate()?;
    let judged: Vec<Vec<Judgment>> = dataset
        .conversations
        .par_iter()
        .map(|conv| {
            conv.turns
                .iter()
                .enumerate()
                .map(|(i, pair)| judge_pair(conv, i, pair, filter, config))
                .collect()
        })
        .collect();

    let mut kept_convs = Vec::with_capacity(dataset.conversations.len());
    let mut dropped = Vec::new();
    let mut flagged = Vec::new();
    let mut total = 0;
    let mut passed = 0;
    for (conv, judgments) in dataset.conversations.iter().zip(judged) {
        let mut turns = Vec::new();
        for (pair, judgment) in conv.turns.iter().zip(judgments) {
            total += 1;
            let record = |reason| DroppedPair {
                conv_id: conv.conv_id.clone(),
                turn_index: pair.turn_index,
                reason,
            };
            let keep = match judgment {
                Judgment::Pass => {
                    passed += 1;
                    true
                }
                Judgment::Below(reason) if !config.drop_below => {
                    flagged.push(record(reason));
                    true
                }
                Judgment::Below(reason) | Judgment::Failed(reason) => {
                    dropped.push(record(reason));
                    false
                }
            };
            if keep {
                turns.push(QAPair {
                    turn_index: turns.len() + 1,
                    ..pair.clone()
                });
            }
        }
        kept_convs.push(Conversation::new(conv.conv_id.clone(), conv.document.clone(), turns)?);
    }
    let kept = Dataset::new(dataset.name.clone(), kept_convs, dataset.provenance)?;
    Ok(FilterOutcome {
        kept,
        dropped,
        flagged,
        total_pairs: total,
        passed_pairs: passed,
        success_rate: if total == 0 {
            0.0
        } else {
            passed as f64 / total as f64
        },
    })
}

fn judge_pair(
    conv: &Conversation,
    index: usize,
    pair: &QAPair,
    filter: &dyn Agent,
    config: &FilterConfig,
) -> Judgment {
    let doc = &conv.document;
    let bundle = build_caf_input(
        &pair.question,
        doc.passage(),
        &conv.turns[..index],
        doc.background(),
        PromptMeta {
            conv_id: conv.conv_id.clone(),
            turn_index: pair.turn_index,
        },
    );
    match generate_text(filter, &bundle) {
        Err(e) => Judgment::Failed(DropReason::AgentFailure {
            error: e.to_string(),
        }),
        Ok(prediction) => {
            let f1 = if is_unanswerable(&pair.answer) {
                // Both sides unanswerable is a match; anything else is not.
                f64::from(u8::from(prediction.text.trim() == CANNOTANSWER))
            } else {
                token_f1(&normalize(&prediction.text), &normalize(&pair.answer.text))
            };
            if f1 >= config.f1_threshold {
                Judgment::Pass
            } else {
                Judgment::Below(DropReason::BelowThreshold {
                    f1,
                    prediction: prediction.text,
                })
            }
        }
    }
}

/// One row of the filtration summary table.
#[derive(Debug, Clone, PartialEq)]
pub struct FiltrationRow {
    pub generation: String,
    pub kept_pairs: usize,
    pub success_rate: f64,
}

impl FilterOutcome {
    pub fn row(&self, generation: impl Into<String>) -> FiltrationRow {
        FiltrationRow {
            generation: generation.into(),
            kept_pairs: self.kept.n_questions(),
            success_rate: self.success_rate,
        }
    }
}

/// Formats `n` with comma thousands separators.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

/// Filtration table with `#(D̂)` and `%(Success)` columns.
pub fn format_filtration_table(rows: &[FiltrationRow]) -> String {
    let name_w = rows
        .iter()
        .map(|r| r.generation.chars().count())
        .chain(std::iter::once("Generation".len()))
        .max()
        .unwrap_or(10);
    let mut out = format!("{:<name_w$}  {:>10}  {:>10}\n", "Generation", "#(D̂)", "%(Success)");
    for r in rows {
        out.push_str(&format!(
            "{:<name_w$}  {:>10}  {:>10}\n",
            r.generation,
            thousands(r.kept_pairs),
            format!("{:.1} %", r.success_rate * 100.0)
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let semi = SimulationConfig::semi_supervised(Mode::Sym);
        assert_eq!((semi.max_turns, semi.unanswerable_budget), (6, None));
        let wiki = SimulationConfig::wiki();
        assert_eq!((wiki.max_turns, wiki.unanswerable_budget, wiki.mode), (12, Some(3), Mode::Asym));
        assert!(SimulationConfig { max_turns: 0, ..semi }.validate().is_err());
    }

    #[test]
    fn filter_threshold_range() {
        assert!(FilterConfig { f1_threshold: 1.5, drop_below: true }.validate().is_err());
        assert!(FilterConfig::default().validate().is_ok());
    }

    #[test]
    fn thousands_separator() {
        assert_eq!(thousands(0), "0");
        assert_eq!(thousands(999), "999");
        assert_eq!(thousands(19550), "19,550");
        assert_eq!(thousands(1234567), "1,234,567");
    }

    #[test]
    fn filtration_table_columns() {
        let t = format_filtration_table(&[FiltrationRow {
            generation: "SimSeek-sym".into(),
            kept_pairs: 19550,
            success_rate: 0.466,
        }]);
        let mut lines = t.lines();
        let header = lines.next().unwrap();
        assert!(header.contains("#(D̂)") && header.contains("%(Success)"));
        let row = lines.next().unwrap();
        assert!(row.contains("19,550") && row.contains("46.6 %"));
    }

    #[test]
    fn stable_hash_is_fixed() {
        assert_eq!(stable_hash(""), 0xcbf2_9ce4_8422_2325);
        assert_ne!(stable_hash("a"), stable_hash("b"));
    }

    #[test]
    fn answer_mapping() {
        let passage = "alpha beta gamma";
        let g = |text: &str, start| Generation {
            text: text.into(),
            score: 0.0,
            start,
        };
        assert!(answer_from(g("CANNOTANSWER", None), passage).unwrap().is_unanswerable);
        assert_eq!(answer_from(g("beta", Some(6)), passage).unwrap().start, Some(6));
        assert_eq!(answer_from(g("gamma", Some(0)), passage).unwrap().start, Some(11));
        assert!(answer_from(g("delta", None), passage).is_err());
    }
}
