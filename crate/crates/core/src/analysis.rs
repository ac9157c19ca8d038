//! Dataset statistics, per-turn metric curves, the informativeness metric,
//! and training-data constructors for the specificity and relevance
//! classifiers.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Conversation, Dataset, QAPair};
use crate::textnorm::{
    is_anything_else_with, is_unanswerable, normalize, token_f1, token_precision, TokenBag,
    CANNOTANSWER, DEFAULT_ANYTHING_ELSE_MARKERS,
};

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("turn {t} is out of range for a conversation of {len} turns")]
    TurnOutOfRange { t: usize, len: usize },
    #[error("dataset {0:?} has no questions")]
    EmptyDataset(String),
    #[error("no score for ({conv_id}, {t})")]
    MissingScore { conv_id: String, t: usize },
    #[error("scores file line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// `1 - max_{i<t} Precision(a_t, a_i)`; 1 at the first turn.
pub fn informativeness(conversation: &Conversation, t: usize) -> Result<f64, AnalysisError> {
    let len = conversation.len();
    if t == 0 || t > len {
        return Err(AnalysisError::TurnOutOfRange { t, len });
    }
    let current = normalize(&conversation.turns[t - 1].answer.text);
    let max_precision = conversation.turns[..t - 1]
        .iter()
        .map(|earlier| token_precision(&current, &normalize(&earlier.answer.text)))
        .fold(0.0, f64::max);
    Ok(1.0 - max_precision)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatReport {
    pub tokens_per_question: f64,
    pub tokens_per_answer: f64,
    /// Mean F1(q_t, a_t) × 100 over answerable turns.
    pub f1_q_a: f64,
    /// Mean F1(q_t, a_1..a_{t-1}) × 100 over turns t ≥ 2.
    pub f1_q_prev_answers: f64,
    pub pct_anything_else: f64,
    pub pct_unanswerable: f64,
    pub n_questions: usize,
    pub n_conversations: usize,
}

fn mean(sum: f64, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

pub fn dataset_statistics(dataset: &Dataset) -> Result<StatReport, AnalysisError> {
    dataset_statistics_with(dataset, DEFAULT_ANYTHING_ELSE_MARKERS)
}

/// Statistics with a custom "Anything else?" marker list.
///
/// Token counts are raw whitespace tokens. Unanswerable answers are left out
/// of the answer length, of F1(q_t, a_t) and of the pooled previous answers.
pub fn dataset_statistics_with<S: AsRef<str>>(
    dataset: &Dataset,
    markers: &[S],
) -> Result<StatReport, AnalysisError> {
    let n_questions = dataset.n_questions();
    if n_questions == 0 {
        return Err(AnalysisError::EmptyDataset(dataset.name.clone()));
    }
    let mut q_tokens = 0usize;
    let mut a_tokens = 0usize;
    let mut answerable = 0usize;
    let mut f1_qa = 0.0;
    let mut f1_prev = 0.0;
    let mut prev_turns = 0usize;
    let mut anything_else = 0usize;
    let mut unanswerable = 0usize;
    for conv in &dataset.conversations {
        let mut previous = TokenBag::default();
        for (i, turn) in conv.turns.iter().enumerate() {
            let q = normalize(&turn.question);
            q_tokens += q.source_len();
            if is_anything_else_with(&turn.question, markers) {
                anything_else += 1;
            }
            if i > 0 {
                f1_prev += token_f1(&q, &previous);
                prev_turns += 1;
            }
            if is_unanswerable(&turn.answer) {
                unanswerable += 1;
            } else {
                let a = normalize(&turn.answer.text);
                a_tokens += a.source_len();
                f1_qa += token_f1(&q, &a);
                answerable += 1;
                previous.extend(&a);
            }
        }
    }
    Ok(StatReport {
        tokens_per_question: mean(q_tokens as f64, n_questions),
        tokens_per_answer: mean(a_tokens as f64, answerable),
        f1_q_a: 100.0 * mean(f1_qa, answerable),
        f1_q_prev_answers: 100.0 * mean(f1_prev, prev_turns),
        pct_anything_else: 100.0 * mean(anything_else as f64, n_questions),
        pct_unanswerable: 100.0 * mean(unanswerable as f64, n_questions),
        n_questions,
        n_conversations: dataset.conversations.len(),
    })
}

const STAT_ROWS: [&str; 6] = [
    "tokens / question",
    "tokens / answer",
    "F1 of (q_t, a_t)",
    "F1 of (q_t, a_0:(t-1))",
    "% Anything else?",
    "% Unanswerable Qs",
];

fn stat_values(r: &StatReport) -> [f64; 6] {
    [
        r.tokens_per_question,
        r.tokens_per_answer,
        r.f1_q_a,
        r.f1_q_prev_answers,
        r.pct_anything_else,
        r.pct_unanswerable,
    ]
}

/// Six metric rows, one column per dataset, values to one decimal.
pub fn format_stat_table(reports: &[(String, StatReport)]) -> String {
    let label_w = STAT_ROWS.iter().map(|r| r.len()).max().unwrap_or(0);
    let col_w = reports
        .iter()
        .map(|(n, _)| n.chars().count())
        .max()
        .unwrap_or(0)
        .max(8);
    let mut out = format!("{:<label_w$}", "");
    for (name, _) in reports {
        let _ = write!(out, "  {name:>col_w$}");
    }
    out.push('\n');
    for (row, label) in STAT_ROWS.iter().enumerate() {
        let _ = write!(out, "{label:<label_w$}");
        for (_, report) in reports {
            let _ = write!(out, "  {:>col_w$.1}", stat_values(report)[row]);
        }
        out.push('\n');
    }
    out
}

/// One tab-separated row per dataset, with a header row.
pub fn format_stat_tsv(reports: &[(String, StatReport)]) -> String {
    let mut out = String::from(
        "dataset\ttokens_per_question\ttokens_per_answer\tf1_q_a\tf1_q_prev_answers\tpct_anything_else\tpct_unanswerable\tn_questions\tn_conversations\n",
    );
    for (name, r) in reports {
        let v = stat_values(r);
        let _ = writeln!(
            out,
            "{name}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{}\t{}",
            v[0], v[1], v[2], v[3], v[4], v[5], r.n_questions, r.n_conversations
        );
    }
    out
}

// ---------------------------------------------------------------------------
// Per-turn curves

#[derive(Debug, Error)]
#[error("{0}")]
pub struct ScoreError(pub String);

/// A per-pair metric plotted against the turn index.
pub trait TurnScorer: Sync {
    fn name(&self) -> &str;

    /// Score of turn `t` (1-based) of `conversation`.
    fn score(&self, conversation: &Conversation, t: usize) -> Result<f64, ScoreError>;
}

pub struct InformativenessScorer;

impl TurnScorer for InformativenessScorer {
    fn name(&self) -> &str {
        "informativeness"
    }

    fn score(&self, conversation: &Conversation, t: usize) -> Result<f64, ScoreError> {
        informativeness(conversation, t).map_err(|e| ScoreError(e.to_string()))
    }
}

/// Scores computed elsewhere (e.g. classifier likelihoods), read from lines
/// of `conv_id<TAB>t<TAB>score`.
pub struct ExternalScores {
    name: String,
    scores: HashMap<(String, usize), f64>,
}

impl ExternalScores {
    pub fn from_reader<R: BufRead>(name: impl Into<String>, input: R) -> Result<Self, AnalysisError> {
        let mut scores = HashMap::new();
        for (i, line) in input.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |message: String| AnalysisError::Parse {
                line: i + 1,
                message,
            };
            let fields: Vec<&str> = line.split('\t').collect();
            let [conv_id, t, score] = fields[..] else {
                return Err(parse(format!("expected 3 tab-separated fields, got {}", fields.len())));
            };
            let t: usize = t.trim().parse().map_err(|e| parse(format!("turn: {e}")))?;
            let score: f64 = score.trim().parse().map_err(|e| parse(format!("score: {e}")))?;
            scores.insert((conv_id.to_owned(), t), score);
        }
        Ok(Self {
            name: name.into(),
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

impl TurnScorer for ExternalScores {
    fn name(&self) -> &str {
        &self.name
    }

    fn score(&self, conversation: &Conversation, t: usize) -> Result<f64, ScoreError> {
        self.scores
            .get(&(conversation.conv_id.clone(), t))
            .copied()
            .ok_or_else(|| ScoreError(format!("no score for ({}, {t})", conversation.conv_id)))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnPoint {
    pub turn: usize,
    /// `None` when every pair at this turn failed to score.
    pub mean: Option<f64>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TurnCurve {
    pub metric: String,
    /// Contiguous from turn 1 to the longest conversation.
    pub points: Vec<TurnPoint>,
    /// Pairs whose scorer failed.
    pub skipped: usize,
}

pub fn per_turn_curves(dataset: &Dataset, scorers: &[&dyn TurnScorer]) -> Vec<TurnCurve> {
    let longest = dataset
        .conversations
        .iter()
        .map(Conversation::len)
        .max()
        .unwrap_or(0);
    scorers
        .iter()
        .map(|scorer| {
            let mut sums = vec![0.0; longest];
            let mut counts = vec![0usize; longest];
            let mut skipped = 0;
            for conv in &dataset.conversations {
                for t in 1..=conv.len() {
                    match scorer.score(conv, t) {
                        Ok(s) => {
                            sums[t - 1] += s;
                            counts[t - 1] += 1;
                        }
                        Err(e) => {
                            log::debug!("{}: skipping ({}, {t}): {e}", scorer.name(), conv.conv_id);
                            skipped += 1;
                        }
                    }
                }
            }
            let points = sums
                .into_iter()
                .zip(counts)
                .enumerate()
                .map(|(i, (sum, count))| TurnPoint {
                    turn: i + 1,
                    mean: (count > 0).then(|| sum / count as f64),
                    count,
                })
                .collect();
            TurnCurve {
                metric: scorer.name().to_owned(),
                points,
                skipped,
            }
        })
        .collect()
}

/// `metric<TAB>turn<TAB>mean<TAB>count` rows with a header.
pub fn format_curves_tsv(curves: &[TurnCurve]) -> String {
    let mut out = String::from("metric\tturn\tmean\tcount\n");
    for curve in curves {
        for p in &curve.points {
            let mean = p.mean.map_or_else(|| "NA".to_owned(), |m| format!("{m:.6}"));
            let _ = writeln!(out, "{}\t{}\t{mean}\t{}", curve.metric, p.turn, p.count);
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Classifier training data

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeKind {
    FrequentQuestion,
    RandomQuestion,
    RandomAnswer,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistoryTurn {
    pub q: String,
    pub a: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierExample {
    pub conv_id: String,
    pub turn_index: usize,
    pub history: Vec<HistoryTurn>,
    pub question: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub answer: Option<String>,
    pub label: Label,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_kind: Option<NegativeKind>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingStats {
    pub positives: usize,
    pub negatives: BTreeMap<String, usize>,
    /// Negatives whose preferred source was unavailable.
    pub fallbacks: usize,
    pub warnings: Vec<String>,
}

impl SamplingStats {
    fn count_negative(&mut self, kind: NegativeKind) {
        let key = serde_json::to_value(kind)
            .ok()
            .and_then(|v| v.as_str().map(str::to_owned))
            .unwrap_or_default();
        *self.negatives.entry(key).or_insert(0) += 1;
    }
}

#[derive(Debug, Clone)]
pub struct TrainingSet {
    pub examples: Vec<ClassifierExample>,
    pub stats: SamplingStats,
}

fn answer_text(pair: &QAPair) -> String {
    if is_unanswerable(&pair.answer) {
        CANNOTANSWER.to_owned()
    } else {
        pair.answer.text.clone()
    }
}

fn history_of(conv: &Conversation, index: usize) -> Vec<HistoryTurn> {
    conv.turns[..index]
        .iter()
        .map(|p| HistoryTurn {
            q: p.question.clone(),
            a: answer_text(p),
        })
        .collect()
}

/// Key under which repeated questions are counted.
fn question_key(q: &str) -> String {
    q.trim().to_lowercase()
}

/// Training pairs for the specificity classifier.
///
/// Draws, per `(conversation, turn)` in dataset order, from a ChaCha8 stream
/// seeded with `seed`:
/// 1. `u < 0.5` keeps the original question (positive);
/// 2. otherwise `v < 0.5` selects the frequent-question source, else the
///    random-question source;
/// 3. the negative question is picked with `gen_range` over the source pool.
///
/// The frequent pool holds each question text seen more than once (first
/// spelling, sorted by key). The random pool holds all questions of other
/// conversations; with a single conversation it falls back to the other
/// turns of the same one, and to a positive when there are none.
pub fn build_specificity_training_set(dataset: &Dataset, seed: u64) -> TrainingSet {
    let mut stats = SamplingStats::default();
    let mut counts: BTreeMap<String, (usize, &str)> = BTreeMap::new();
    for pair in dataset.conversations.iter().flat_map(|c| &c.turns) {
        counts
            .entry(question_key(&pair.question))
            .or_insert((0, &pair.question))
            .0 += 1;
    }
    let frequent: Vec<&str> = counts
        .values()
        .filter(|(n, _)| *n > 1)
        .map(|(_, q)| *q)
        .collect();
    let all: Vec<&str> = dataset
        .conversations
        .iter()
        .flat_map(|c| c.turns.iter().map(|p| p.question.as_str()))
        .collect();
    if frequent.is_empty() {
        stats
            .warnings
            .push("no repeated questions: negatives use the random-question source only".into());
    }
    if dataset.conversations.len() == 1 {
        stats.warnings.push(
            "single conversation: random questions are drawn from its other turns".into(),
        );
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::with_capacity(all.len());
    let mut offset = 0;
    for conv in &dataset.conversations {
        let n = conv.len();
        for (i, pair) in conv.turns.iter().enumerate() {
            let positive = |stats: &mut SamplingStats| {
                stats.positives += 1;
                ClassifierExample {
                    conv_id: conv.conv_id.clone(),
                    turn_index: pair.turn_index,
                    history: history_of(conv, i),
                    question: pair.question.clone(),
                    answer: None,
                    label: Label::Positive,
                    negative_kind: None,
                }
            };
            if rng.gen::<f64>() < 0.5 {
                examples.push(positive(&mut stats));
                continue;
            }
            let mut kind = if rng.gen::<f64>() < 0.5 {
                NegativeKind::FrequentQuestion
            } else {
                NegativeKind::RandomQuestion
            };
            if kind == NegativeKind::FrequentQuestion && frequent.is_empty() {
                kind = NegativeKind::RandomQuestion;
                stats.fallbacks += 1;
            }
            let question = match kind {
                NegativeKind::FrequentQuestion => frequent[rng.gen_range(0..frequent.len())],
                _ => {
                    let others = all.len() - n;
                    if others > 0 {
                        // Skip over this conversation's slice of `all`.
                        let r = rng.gen_range(0..others);
                        all[if r < offset { r } else { r + n }]
                    } else if n > 1 {
                        stats.fallbacks += 1;
                        let r = rng.gen_range(0..n - 1);
                        all[offset + if r < i { r } else { r + 1 }]
                    } else {
                        stats.fallbacks += 1;
                        examples.push(positive(&mut stats));
                        continue;
                    }
                }
            };
            stats.count_negative(kind);
            examples.push(ClassifierExample {
                conv_id: conv.conv_id.clone(),
                turn_index: pair.turn_index,
                history: history_of(conv, i),
                question: question.to_owned(),
                answer: None,
                label: Label::Negative,
                negative_kind: Some(kind),
            });
        }
        offset += n;
    }
    TrainingSet { examples, stats }
}

/// Training pairs for the relevance classifier.
///
/// Per `(conversation, turn)`: `u < 0.5` keeps the pair; otherwise the
/// answer is replaced by one drawn with `gen_range` from the other turns of
/// the same conversation whose answer text differs. With no such turn the
/// pair is emitted as a positive and counted as a fallback.
pub fn build_relevance_training_set(dataset: &Dataset, seed: u64) -> TrainingSet {
    let mut stats = SamplingStats::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut examples = Vec::new();
    for conv in &dataset.conversations {
        let answers: Vec<String> = conv.turns.iter().map(answer_text).collect();
        for (i, pair) in conv.turns.iter().enumerate() {
            let mut example = ClassifierExample {
                conv_id: conv.conv_id.clone(),
                turn_index: pair.turn_index,
                history: history_of(conv, i),
                question: pair.question.clone(),
                answer: Some(answers[i].clone()),
                label: Label::Positive,
                negative_kind: None,
            };
            if rng.gen::<f64>() >= 0.5 {
                let alternatives: Vec<usize> = (0..answers.len())
                    .filter(|&j| j != i && answers[j] != answers[i])
                    .collect();
                if alternatives.is_empty() {
                    stats.fallbacks += 1;
                } else {
                    let j = alternatives[rng.gen_range(0..alternatives.len())];
                    example.answer = Some(answers[j].clone());
                    example.label = Label::Negative;
                    example.negative_kind = Some(NegativeKind::RandomAnswer);
                }
            }
            match example.negative_kind {
                Some(kind) => stats.count_negative(kind),
                None => stats.positives += 1,
            }
            examples.push(example);
        }
    }
    TrainingSet { examples, stats }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AnswerSpan, BackgroundInfo, Document, Provenance};

    /// Conversation whose passage is the space-joined answers.
    fn conv(id: &str, turns: &[(&str, &str)]) -> Conversation {
        let passage = turns.iter().map(|(_, a)| *a).collect::<Vec<_>>().join(" ");
        let passage = if passage.trim().is_empty() { "x".to_owned() } else { passage };
        let doc = Document::new(id, BackgroundInfo::new("T", "S", "A").unwrap(), passage.clone()).unwrap();
        let mut offset = 0;
        let pairs = turns
            .iter()
            .enumerate()
            .map(|(i, (q, a))| {
                let answer = if *a == CANNOTANSWER {
                    AnswerSpan::unanswerable()
                } else {
                    AnswerSpan::at(*a, offset)
                };
                offset += a.chars().count() + 1;
                QAPair {
                    turn_index: i + 1,
                    question: (*q).into(),
                    answer,
                }
            })
            .collect();
        // Unanswerable answers also occupy passage text here; offsets stay valid.
        Conversation::new(id, doc, pairs).unwrap()
    }

    #[test]
    fn informativeness_examples() {
        let c = conv("c", &[("q1", "x"), ("q2", "z"), ("q3", "x y"), ("q4", "x y")]);
        assert_eq!(informativeness(&c, 1).unwrap(), 1.0);
        assert_eq!(informativeness(&c, 3).unwrap(), 0.5);
        assert_eq!(informativeness(&c, 4).unwrap(), 0.0);
        assert!(matches!(
            informativeness(&c, 5),
            Err(AnalysisError::TurnOutOfRange { t: 5, len: 4 })
        ));
        assert!(informativeness(&c, 0).is_err());
    }

    #[test]
    fn statistics_single_item_rates() {
        let d = Dataset::new("d", vec![conv("c", &[("what else", CANNOTANSWER)])], Provenance::Human).unwrap();
        let r = dataset_statistics(&d).unwrap();
        assert_eq!(r.pct_anything_else, 100.0);
        assert_eq!(r.pct_unanswerable, 100.0);
        assert_eq!(r.tokens_per_question, 2.0);
        assert_eq!(r.tokens_per_answer, 0.0);
        assert_eq!(r.f1_q_prev_answers, 0.0);
        assert!(dataset_statistics(&Dataset::empty("e", Provenance::Human)).is_err());
    }

    #[test]
    fn stat_table_has_six_rows() {
        let d = Dataset::new("d", vec![conv("c", &[("what else", "yes")])], Provenance::Human).unwrap();
        let t = format_stat_table(&[("QuAC".into(), dataset_statistics(&d).unwrap())]);
        assert_eq!(t.lines().count(), 7);
        assert!(t.contains("% Unanswerable Qs"));
        assert!(t.contains("tokens / question"));
    }

    struct Constant(f64);

    impl TurnScorer for Constant {
        fn name(&self) -> &str {
            "constant"
        }
        fn score(&self, _: &Conversation, _: usize) -> Result<f64, ScoreError> {
            Ok(self.0)
        }
    }

    #[test]
    fn curves_count_and_average() {
        let d = Dataset::new(
            "d",
            vec![
                conv("a", &[("q", "x"), ("q", "y")]),
                conv("b", &[("q", "x"), ("q", "y"), ("q", "z"), ("q", "w")]),
            ],
            Provenance::Human,
        )
        .unwrap();
        let curves = per_turn_curves(&d, &[&Constant(0.7), &InformativenessScorer]);
        let counts: Vec<usize> = curves[0].points.iter().map(|p| p.count).collect();
        assert_eq!(counts, [2, 2, 1, 1]);
        assert!(curves[0].points.iter().all(|p| p.mean == Some(0.7)));
        assert_eq!(curves[1].points[0].mean, Some(1.0));
        let tsv = format_curves_tsv(&curves);
        assert_eq!(tsv.lines().count(), 9);
    }

    #[test]
    fn external_scores_skip_missing_pairs() {
        let d = Dataset::new("d", vec![conv("a", &[("q", "x"), ("q", "y")])], Provenance::Human).unwrap();
        let scores = ExternalScores::from_reader("specificity", "a\t1\t0.25\n".as_bytes()).unwrap();
        let curves = per_turn_curves(&d, &[&scores]);
        assert_eq!(curves[0].skipped, 1);
        assert_eq!(curves[0].points[0].mean, Some(0.25));
        assert_eq!(curves[0].points[1].mean, None);
        assert!(ExternalScores::from_reader("s", "a\t1\n".as_bytes()).is_err());
        assert!(ExternalScores::from_reader("s", "a\tx\t1\n".as_bytes()).is_err());
    }

    #[test]
    fn relevance_negatives_differ_from_original() {
        let d = Dataset::new(
            "d",
            vec![
                conv("a", &[("q1", "x"), ("q2", "y"), ("q3", "x")]),
                conv("b", &[("q1", "only")]),
            ],
            Provenance::Human,
        )
        .unwrap();
        for seed in 0..50 {
            let set = build_relevance_training_set(&d, seed);
            for ex in &set.examples {
                let original = &d.get(&ex.conv_id).unwrap().turns[ex.turn_index - 1];
                match ex.label {
                    Label::Positive => assert_eq!(ex.answer.as_deref(), Some(original.answer.text.as_str())),
                    Label::Negative => {
                        assert_ne!(ex.answer.as_deref(), Some(original.answer.text.as_str()));
                        assert_ne!(ex.conv_id, "b");
                    }
                }
            }
        }
    }

    #[test]
    fn specificity_unique_questions_have_no_frequent_negatives() {
        let d = Dataset::new(
            "d",
            vec![conv("a", &[("q1", "x"), ("q2", "y")]), conv("b", &[("q3", "z")])],
            Provenance::Human,
        )
        .unwrap();
        let set = build_specificity_training_set(&d, 3);
        assert!(set
            .examples
            .iter()
            .all(|e| e.negative_kind != Some(NegativeKind::FrequentQuestion)));
        assert!(!set.stats.warnings.is_empty());
    }

    #[test]
    fn specificity_single_conversation_falls_back() {
        let d = Dataset::new("d", vec![conv("a", &[("q1", "x"), ("q2", "y")])], Provenance::Human).unwrap();
        for seed in 0..20 {
            let set = build_specificity_training_set(&d, seed);
            for e in &set.examples {
                if e.label == Label::Negative {
                    assert_eq!(e.negative_kind, Some(NegativeKind::RandomQuestion));
                    let own = &d.conversations[0].turns[e.turn_index - 1].question;
                    assert_ne!(&e.question, own);
                }
            }
        }
    }
}
