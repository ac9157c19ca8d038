//! Downstream evaluation: CQA F1 and HEQ, extractor recall, retrieval
//! metrics and intrinsic question-generation BLEU.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt::Write as _;
use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::CandidateSet;
use crate::corpus::{Dataset, GoldQuestion};
use crate::textnorm::{bleu_tokens, corpus_bleu, normalize, token_f1, MetricError, CANNOTANSWER};

pub const DEFAULT_QUERY_MAX_LEN: usize = 128;
pub const QUERY_SEP: &str = "[SEP]";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("question {0} has no references")]
    NoReferences(String),
    #[error("duplicate id {0}")]
    DuplicateId(String),
    #[error("ids do not align; missing on one side: {}", .0.join(", "))]
    Misaligned(Vec<String>),
    #[error("ranking for query {query_id} lists {passage_id} twice")]
    DuplicateRankedId { query_id: String, passage_id: String },
    #[error("nothing to evaluate")]
    Empty,
    #[error("k must be at least 1")]
    ZeroK,
    #[error("{0} candidate sets but {1} gold spans")]
    LengthMismatch(usize, usize),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn data_lines<R: BufRead>(input: R) -> impl Iterator<Item = Result<(usize, String), EvalError>> {
    input
        .lines()
        .enumerate()
        .map(|(i, l)| l.map(|l| (i + 1, l)).map_err(EvalError::from))
        .filter(|r| !matches!(r, Ok((_, l)) if l.trim().is_empty() || l.starts_with('#')))
}

fn parse_err(line: usize, message: impl Into<String>) -> EvalError {
    EvalError::Parse {
        line,
        message: message.into(),
    }
}

// ---------------------------------------------------------------------------
// CQA accuracy

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CqaPrediction {
    pub question_id: String,
    pub answer: String,
}

/// Reads `question_id<TAB>answer` lines; ids must be unique.
pub fn read_predictions<R: BufRead>(input: R) -> Result<Vec<CqaPrediction>, EvalError> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for line in data_lines(input) {
        let (no, line) = line?;
        let (id, answer) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(no, "expected question_id<TAB>answer"))?;
        if !seen.insert(id.to_owned()) {
            return Err(EvalError::DuplicateId(id.to_owned()));
        }
        out.push(CqaPrediction {
            question_id: id.to_owned(),
            answer: answer.to_owned(),
        });
    }
    Ok(out)
}

/// Reads `id<TAB>number` lines, e.g. per-question human F1.
pub fn read_scores<R: BufRead>(input: R) -> Result<BTreeMap<String, f64>, EvalError> {
    let mut out = BTreeMap::new();
    for line in data_lines(input) {
        let (no, line) = line?;
        let (id, value) = line
            .split_once('\t')
            .ok_or_else(|| parse_err(no, "expected id<TAB>score"))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|e| parse_err(no, format!("score: {e}")))?;
        if out.insert(id.to_owned(), value).is_some() {
            return Err(EvalError::DuplicateId(id.to_owned()));
        }
    }
    Ok(out)
}

fn is_cannotanswer(text: &str) -> bool {
    text.trim() == CANNOTANSWER
}

/// F1 of one prediction against multiple references, in [0, 1].
pub fn question_f1(prediction: &str, references: &[String]) -> f64 {
    let answerable: Vec<&String> = references.iter().filter(|r| !is_cannotanswer(r)).collect();
    if answerable.is_empty() {
        return if is_cannotanswer(prediction) { 1.0 } else { 0.0 };
    }
    if is_cannotanswer(prediction) {
        return 0.0;
    }
    let pred = normalize(prediction);
    answerable
        .iter()
        .map(|r| token_f1(&pred, &normalize(r)))
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question_id: String,
    pub dialogue_id: String,
    pub f1: f64,
    /// No prediction was supplied; scored 0.
    pub missing: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CqaScores {
    /// Macro-averaged F1 × 100.
    pub f1: f64,
    pub per_question: Vec<QuestionScore>,
    pub missing: Vec<String>,
    /// Predictions whose id is not a gold question.
    pub unmatched: Vec<String>,
}

pub fn cqa_f1(predictions: &[CqaPrediction], gold: &[GoldQuestion]) -> Result<CqaScores, EvalError> {
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut by_id: HashMap<&str, &str> = HashMap::new();
    for p in predictions {
        if by_id.insert(&p.question_id, &p.answer).is_some() {
            return Err(EvalError::DuplicateId(p.question_id.clone()));
        }
    }
    let mut per_question = Vec::with_capacity(gold.len());
    let mut missing = Vec::new();
    let mut gold_ids = HashSet::new();
    for g in gold {
        if g.references.is_empty() {
            return Err(EvalError::NoReferences(g.question_id.clone()));
        }
        if !gold_ids.insert(g.question_id.as_str()) {
            return Err(EvalError::DuplicateId(g.question_id.clone()));
        }
        let (f1, is_missing) = match by_id.get(g.question_id.as_str()) {
            Some(pred) => (question_f1(pred, &g.references), false),
            None => {
                log::warn!("no prediction for question {}", g.question_id);
                missing.push(g.question_id.clone());
                (0.0, true)
            }
        };
        per_question.push(QuestionScore {
            question_id: g.question_id.clone(),
            dialogue_id: g.dialogue_id.clone(),
            f1,
            missing: is_missing,
        });
    }
    let unmatched = predictions
        .iter()
        .filter(|p| !gold_ids.contains(p.question_id.as_str()))
        .map(|p| p.question_id.clone())
        .collect();
    let f1 = 100.0 * per_question.iter().map(|q| q.f1).sum::<f64>() / per_question.len() as f64;
    Ok(CqaScores {
        f1,
        per_question,
        missing,
        unmatched,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeqScores {
    pub heq_q: f64,
    pub heq_d: f64,
    pub n_questions: usize,
    pub n_dialogues: usize,
}

/// HEQ-Q and HEQ-D in percent. `model` carries the dialogue grouping;
/// `human` must hold exactly the same question ids.
pub fn heq(model: &[QuestionScore], human: &BTreeMap<String, f64>) -> Result<HeqScores, EvalError> {
    if model.is_empty() {
        return Err(EvalError::Empty);
    }
    let model_ids: BTreeSet<&str> = model.iter().map(|q| q.question_id.as_str()).collect();
    let human_ids: BTreeSet<&str> = human.keys().map(String::as_str).collect();
    if model_ids != human_ids {
        let diff = model_ids
            .symmetric_difference(&human_ids)
            .map(|s| (*s).to_owned())
            .collect();
        return Err(EvalError::Misaligned(diff));
    }
    let mut dialogues: BTreeMap<&str, bool> = BTreeMap::new();
    let mut passed = 0;
    for q in model {
        let ok = q.f1 >= human[&q.question_id];
        if ok {
            passed += 1;
        }
        *dialogues.entry(&q.dialogue_id).or_insert(true) &= ok;
    }
    let whole = dialogues.values().filter(|ok| **ok).count();
    Ok(HeqScores {
        heq_q: 100.0 * passed as f64 / model.len() as f64,
        heq_d: 100.0 * whole as f64 / dialogues.len() as f64,
        n_questions: model.len(),
        n_dialogues: dialogues.len(),
    })
}

pub fn format_cqa_report(scores: &CqaScores, heq: Option<&HeqScores>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:<8}{:>8}", "F1", format!("{:.1}", scores.f1));
    if let Some(h) = heq {
        let _ = writeln!(out, "{:<8}{:>8}", "HEQ-Q", format!("{:.1}", h.heq_q));
        let _ = writeln!(out, "{:<8}{:>8}", "HEQ-D", format!("{:.1}", h.heq_d));
    }
    let _ = writeln!(out, "{:<8}{:>8}", "N", scores.per_question.len());
    if !scores.missing.is_empty() {
        let _ = writeln!(out, "{:<8}{:>8}", "missing", scores.missing.len());
    }
    out
}

// ---------------------------------------------------------------------------
// Extractor recall

/// Fraction of questions whose gold text (normalized) is among the top `k`
/// candidates.
pub fn cae_recall_at_k<S: AsRef<str>>(
    candidate_sets: &[CandidateSet],
    gold: &[S],
    k: usize,
) -> Result<f64, EvalError> {
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    if candidate_sets.len() != gold.len() {
        return Err(EvalError::LengthMismatch(candidate_sets.len(), gold.len()));
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let hits = candidate_sets
        .iter()
        .zip(gold)
        .filter(|(set, g)| {
            let g = normalize(g.as_ref());
            set.spans()
                .iter()
                .take(k)
                .any(|s| normalize(&s.span.text).tokens() == g.tokens())
        })
        .count();
    Ok(hits as f64 / gold.len() as f64)
}

// ---------------------------------------------------------------------------
// Conversational retrieval

/// Questions joined with `[SEP]`. Over `max_len` whitespace tokens, interior
/// questions are dropped oldest first; the first and last are always kept,
/// even if they alone exceed the limit. Empty input gives an empty query.
pub fn build_retrieval_query<S: AsRef<str>>(questions: &[S], max_len: usize) -> String {
    let sep = format!(" {QUERY_SEP} ");
    let mut kept: Vec<&str> = questions.iter().map(AsRef::as_ref).collect();
    let sep_tokens = 1;
    let mut len: usize = kept.iter().map(|q| q.split_whitespace().count()).sum::<usize>()
        + kept.len().saturating_sub(1) * sep_tokens;
    while len > max_len && kept.len() > 2 {
        let dropped = kept.remove(1);
        len -= dropped.split_whitespace().count() + sep_tokens;
    }
    kept.join(&sep)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedRetrieval {
    query_id: String,
    ranked: Vec<String>,
    gold: String,
}

impl RankedRetrieval {
    pub fn new(query_id: impl Into<String>, ranked: Vec<String>, gold: impl Into<String>) -> Result<Self, EvalError> {
        let query_id = query_id.into();
        let mut seen = HashSet::new();
        for id in &ranked {
            if !seen.insert(id.as_str()) {
                return Err(EvalError::DuplicateRankedId {
                    query_id,
                    passage_id: id.clone(),
                });
            }
        }
        Ok(Self {
            query_id,
            ranked,
            gold: gold.into(),
        })
    }

    pub fn query_id(&self) -> &str {
        &self.query_id
    }

    pub fn ranked(&self) -> &[String] {
        &self.ranked
    }

    pub fn gold(&self) -> &str {
        &self.gold
    }

    /// 1-based rank of the gold passage.
    pub fn gold_rank(&self) -> Option<usize> {
        self.ranked.iter().position(|id| *id == self.gold).map(|i| i + 1)
    }
}

/// Reads `query_id<TAB>id1,id2,...<TAB>gold_id` lines.
pub fn read_rankings<R: BufRead>(input: R) -> Result<Vec<RankedRetrieval>, EvalError> {
    let mut out = Vec::new();
    for line in data_lines(input) {
        let (no, line) = line?;
        let fields: Vec<&str> = line.split('\t').collect();
        let [query, ranked, gold] = fields[..] else {
            return Err(parse_err(no, "expected query_id<TAB>ranked ids<TAB>gold id"));
        };
        let ranked = ranked
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_owned)
            .collect();
        out.push(RankedRetrieval::new(query, ranked, gold.trim())?);
    }
    Ok(out)
}

/// Mean reciprocal rank; a missing gold contributes 0.
pub fn mrr(rankings: &[RankedRetrieval]) -> Result<f64, EvalError> {
    if rankings.is_empty() {
        return Err(EvalError::Empty);
    }
    let sum: f64 = rankings
        .iter()
        .filter_map(RankedRetrieval::gold_rank)
        .map(|r| 1.0 / r as f64)
        .sum();
    Ok(sum / rankings.len() as f64)
}

pub fn recall_at_k(rankings: &[RankedRetrieval], k: usize) -> Result<f64, EvalError> {
    if rankings.is_empty() {
        return Err(EvalError::Empty);
    }
    if k == 0 {
        return Err(EvalError::ZeroK);
    }
    let hits = rankings
        .iter()
        .filter(|r| r.gold_rank().is_some_and(|rank| rank <= k))
        .count();
    Ok(hits as f64 / rankings.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub mrr: f64,
    pub recall_at_5: f64,
    pub recall_at_20: f64,
    pub n_queries: usize,
}

pub fn retrieval_scores(rankings: &[RankedRetrieval]) -> Result<RetrievalScores, EvalError> {
    Ok(RetrievalScores {
        mrr: mrr(rankings)?,
        recall_at_5: recall_at_k(rankings, 5)?,
        recall_at_20: recall_at_k(rankings, 20)?,
        n_queries: rankings.len(),
    })
}

pub fn format_retrieval_report(s: &RetrievalScores) -> String {
    format!(
        "{:<8}{:>8.1}\n{:<8}{:>8.1}\n{:<8}{:>8.1}\n{:<8}{:>8}\n",
        "MRR",
        100.0 * s.mrr,
        "R@5",
        100.0 * s.recall_at_5,
        "R@20",
        100.0 * s.recall_at_20,
        "N",
        s.n_queries
    )
}

// ---------------------------------------------------------------------------
// Intrinsic question generation

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionRecord {
    pub conv_id: String,
    pub t: usize,
    pub question: String,
}

/// Reads `conv_id<TAB>t<TAB>question` lines.
pub fn read_question_records<R: BufRead>(input: R) -> Result<Vec<QuestionRecord>, EvalError> {
    let mut out = Vec::new();
    for line in data_lines(input) {
        let (no, line) = line?;
        let mut parts = line.splitn(3, '\t');
        let (Some(conv_id), Some(t), Some(question)) = (parts.next(), parts.next(), parts.next()) else {
            return Err(parse_err(no, "expected conv_id<TAB>t<TAB>question"));
        };
        let t = t.trim().parse().map_err(|e| parse_err(no, format!("turn: {e}")))?;
        out.push(QuestionRecord {
            conv_id: conv_id.to_owned(),
            t,
            question: question.to_owned(),
        });
    }
    Ok(out)
}

/// Every question of a dataset keyed by `(conv_id, t)`.
pub fn questions_of(dataset: &Dataset) -> Vec<QuestionRecord> {
    dataset
        .conversations
        .iter()
        .flat_map(|c| {
            c.turns.iter().map(|p| QuestionRecord {
                conv_id: c.conv_id.clone(),
                t: p.turn_index,
                question: p.question.clone(),
            })
        })
        .collect()
}

fn keyed(records: &[QuestionRecord]) -> Result<BTreeMap<(&str, usize), &str>, EvalError> {
    let mut map = BTreeMap::new();
    for r in records {
        if map.insert((r.conv_id.as_str(), r.t), r.question.as_str()).is_some() {
            return Err(EvalError::DuplicateId(format!("{}:{}", r.conv_id, r.t)));
        }
    }
    Ok(map)
}

/// Corpus BLEU-1..4 of generated against gold questions.
pub fn intrinsic_bleu_eval(generated: &[QuestionRecord], gold: &[QuestionRecord]) -> Result<Vec<f64>, EvalError> {
    let generated = keyed(generated)?;
    let gold = keyed(gold)?;
    let missing: Vec<String> = generated
        .keys()
        .filter(|k| !gold.contains_key(*k))
        .chain(gold.keys().filter(|k| !generated.contains_key(*k)))
        .map(|(c, t)| format!("{c}:{t}"))
        .collect();
    if !missing.is_empty() {
        return Err(EvalError::Misaligned(missing));
    }
    if gold.is_empty() {
        return Err(EvalError::Empty);
    }
    let pairs: Vec<(Vec<String>, Vec<String>)> = gold
        .iter()
        .map(|(k, g)| (bleu_tokens(generated[k]), bleu_tokens(g)))
        .collect();
    Ok(corpus_bleu(
        pairs.iter().map(|(c, r)| (c.as_slice(), r.as_slice())),
        4,
    )?)
}

pub fn format_bleu_row(name: &str, scores: &[f64]) -> String {
    let mut out = name.to_string();
    for s in scores {
        let _ = write!(out, "\t{:.1}", 100.0 * s);
    }
    out
}
