//! Pairwise human evaluation: task sampling, an append-only vote log,
//! majority aggregation, bootstrap significance and the filtered report.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::HistoryTurn;
use crate::corpus::{Conversation, Dataset, QAPair};
use crate::textnorm::{is_anything_else, is_unanswerable, CANNOTANSWER};

pub const DEFAULT_PANEL_SIZE: usize = 5;
pub const DEFAULT_BOOTSTRAP_SAMPLES: usize = 100_000;
pub const SIGNIFICANCE_LEVEL: f64 = 0.1;

#[derive(Debug, Error)]
pub enum HumanEvalError {
    #[error("only {available} aligned positions available, {requested} requested")]
    NotEnoughPositions { available: usize, requested: usize },
    #[error("both datasets are named {0:?}; sources must be distinguishable")]
    SameSource(String),
    #[error("panel size must be odd, got {0}")]
    EvenPanel(usize),
    #[error("unknown task {0}")]
    UnknownTask(String),
    #[error("duplicate task id {0}")]
    DuplicateTask(String),
    #[error("annotator {annotator} already voted on {criterion} for task {task}")]
    DuplicateVote {
        task: String,
        annotator: String,
        criterion: Criterion,
    },
    #[error("empty annotator id")]
    EmptyAnnotator,
    #[error("{path} line {line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    Adequacy,
    Informativeness,
    Relevance,
    Accuracy,
}

impl Criterion {
    pub const ALL: [Criterion; 4] = [
        Criterion::Adequacy,
        Criterion::Informativeness,
        Criterion::Relevance,
        Criterion::Accuracy,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Adequacy => "adequacy",
            Criterion::Informativeness => "informativeness",
            Criterion::Relevance => "relevance",
            Criterion::Accuracy => "accuracy",
        }
    }
}

impl std::fmt::Display for Criterion {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Candidate {
    pub question: String,
    pub answer: String,
    #[serde(default)]
    pub unanswerable: bool,
}

impl Candidate {
    fn from_pair(pair: &QAPair) -> Self {
        let unanswerable = is_unanswerable(&pair.answer);
        Self {
            question: pair.question.clone(),
            answer: if unanswerable {
                CANNOTANSWER.to_owned()
            } else {
                pair.answer.text.clone()
            },
            unanswerable,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskDocument {
    pub doc_id: String,
    pub title: String,
    pub section_title: String,
    pub passage: String,
}

/// One pairwise comparison, including the hidden source of each side.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgmentTask {
    pub task_id: String,
    pub document: TaskDocument,
    pub history: Vec<HistoryTurn>,
    pub turn: usize,
    pub candidate_a: Candidate,
    pub candidate_b: Candidate,
    pub source_a: String,
    pub source_b: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateView {
    pub question: String,
    pub answer: String,
}

/// What an annotator sees: no sources, no flags derived from them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorTask {
    pub task_id: String,
    pub document: TaskDocument,
    pub history: Vec<HistoryTurn>,
    pub candidate_a: CandidateView,
    pub candidate_b: CandidateView,
    pub criteria: Vec<Criterion>,
}

impl JudgmentTask {
    pub fn annotator_view(&self) -> AnnotatorTask {
        let view = |c: &Candidate| CandidateView {
            question: c.question.clone(),
            answer: c.answer.clone(),
        };
        AnnotatorTask {
            task_id: self.task_id.clone(),
            document: self.document.clone(),
            history: self.history.clone(),
            candidate_a: view(&self.candidate_a),
            candidate_b: view(&self.candidate_b),
            criteria: Criterion::ALL.to_vec(),
        }
    }

    pub fn source_of(&self, side: Side) -> &str {
        match side {
            Side::A => &self.source_a,
            Side::B => &self.source_b,
        }
    }

    /// Unanswerable or "Anything else?" candidates are left out of reports.
    pub fn is_excluded(&self) -> bool {
        [&self.candidate_a, &self.candidate_b]
            .iter()
            .any(|c| c.unanswerable || c.answer == CANNOTANSWER || is_anything_else(&c.question))
    }
}

fn first_by_doc(dataset: &Dataset) -> BTreeMap<&str, &Conversation> {
    let mut map: BTreeMap<&str, &Conversation> = BTreeMap::new();
    for c in &dataset.conversations {
        let slot = map.entry(c.document.doc_id()).or_insert(c);
        if c.conv_id < slot.conv_id {
            *slot = c;
        }
    }
    map
}

/// Samples `n` aligned `(doc_id, turn)` positions without replacement.
///
/// The shared history is `dataset_a`'s prefix before the turn. Positions are
/// listed in `(doc_id, turn)` order, `n` indices are drawn with
/// `rand::seq::index::sample`, and then one `bool` per task decides whether
/// the sides are swapped.
pub fn create_tasks(
    dataset_a: &Dataset,
    dataset_b: &Dataset,
    n: usize,
    seed: u64,
) -> Result<Vec<JudgmentTask>, HumanEvalError> {
    if dataset_a.name == dataset_b.name {
        return Err(HumanEvalError::SameSource(dataset_a.name.clone()));
    }
    let a = first_by_doc(dataset_a);
    let b = first_by_doc(dataset_b);
    let positions: Vec<(&Conversation, &Conversation, usize)> = a
        .iter()
        .filter_map(|(doc, ca)| b.get(doc).map(|cb| (*ca, *cb)))
        .flat_map(|(ca, cb)| (0..ca.len().min(cb.len())).map(move |i| (ca, cb, i)))
        .collect();
    if positions.len() < n || positions.is_empty() {
        return Err(HumanEvalError::NotEnoughPositions {
            available: positions.len(),
            requested: n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = sample(&mut rng, positions.len(), n).into_vec();
    picked.sort_unstable();
    let tasks = picked
        .into_iter()
        .enumerate()
        .map(|(task_no, idx)| {
            let (ca, cb, i) = positions[idx];
            let doc = &ca.document;
            let mut sides = [
                (Candidate::from_pair(&ca.turns[i]), dataset_a.name.clone()),
                (Candidate::from_pair(&cb.turns[i]), dataset_b.name.clone()),
            ];
            if rng.gen::<bool>() {
                sides.swap(0, 1);
            }
            let [(candidate_a, source_a), (candidate_b, source_b)] = sides;
            JudgmentTask {
                task_id: format!("task-{:04}", task_no + 1),
                document: TaskDocument {
                    doc_id: doc.doc_id().to_owned(),
                    title: doc.background().title().to_owned(),
                    section_title: doc.background().section_title().to_owned(),
                    passage: doc.passage().to_owned(),
                },
                history: ca.turns[..i]
                    .iter()
                    .map(|p| HistoryTurn {
                        q: p.question.clone(),
                        a: Candidate::from_pair(p).answer,
                    })
                    .collect(),
                turn: i + 1,
                candidate_a,
                candidate_b,
                source_a,
                source_b,
            }
        })
        .collect();
    Ok(tasks)
}

pub fn write_tasks<W: Write>(tasks: &[JudgmentTask], mut out: W) -> Result<(), HumanEvalError> {
    for t in tasks {
        serde_json::to_writer(&mut out, t).map_err(std::io::Error::from)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

pub fn read_tasks<R: BufRead>(input: R, path: &str) -> Result<Vec<JudgmentTask>, HumanEvalError> {
    let mut tasks = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let task: JudgmentTask = serde_json::from_str(&line).map_err(|e| HumanEvalError::Parse {
            path: path.to_owned(),
            line: i + 1,
            message: e.to_string(),
        })?;
        if !seen.insert(task.task_id.clone()) {
            return Err(HumanEvalError::DuplicateTask(task.task_id));
        }
        tasks.push(task);
    }
    Ok(tasks)
}

// ---------------------------------------------------------------------------
// Votes

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vote {
    pub task_id: String,
    pub annotator_id: String,
    pub criterion: Criterion,
    pub choice: Side,
    /// Unix seconds.
    pub timestamp: u64,
}

/// One submission: a choice for every criterion.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ballot {
    pub task_id: String,
    pub annotator_id: String,
    pub choices: BallotChoices,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallotChoices {
    pub adequacy: Side,
    pub informativeness: Side,
    pub relevance: Side,
    pub accuracy: Side,
}

impl BallotChoices {
    pub fn get(&self, c: Criterion) -> Side {
        match c {
            Criterion::Adequacy => self.adequacy,
            Criterion::Informativeness => self.informativeness,
            Criterion::Relevance => self.relevance,
            Criterion::Accuracy => self.accuracy,
        }
    }
}

/// Append-only vote storage. Each accepted vote is written and flushed
/// before it becomes visible.
pub struct VoteLog {
    votes: Vec<Vote>,
    keys: HashSet<(String, String, Criterion)>,
    sink: Option<File>,
}

impl Default for VoteLog {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl VoteLog {
    pub fn in_memory() -> Self {
        Self {
            votes: Vec::new(),
            keys: HashSet::new(),
            sink: None,
        }
    }

    /// Replays `path` if it exists and appends to it from then on. A torn
    /// final record (from a crash mid-write) is dropped from the file with a
    /// warning.
    pub fn open(path: &Path) -> Result<Self, HumanEvalError> {
        let mut log = Self::in_memory();
        let bytes = if path.exists() { std::fs::read(path)? } else { Vec::new() };
        let mut keep = 0;
        let mut offset = 0;
        let mut line_no = 0;
        while offset < bytes.len() {
            line_no += 1;
            let end = bytes[offset..]
                .iter()
                .position(|b| *b == b'\n')
                .map(|i| offset + i + 1);
            let raw = &bytes[offset..end.unwrap_or(bytes.len())];
            let text = String::from_utf8_lossy(raw);
            if !text.trim().is_empty() {
                match serde_json::from_str::<Vote>(text.trim()) {
                    Ok(v) => {
                        if !log.record(v) {
                            log::warn!("{}: duplicate vote on line {line_no} ignored", path.display());
                        }
                    }
                    Err(e) if end.is_none() => {
                        log::warn!("{}: dropping torn last record: {e}", path.display());
                        break;
                    }
                    Err(e) => {
                        return Err(HumanEvalError::Parse {
                            path: path.display().to_string(),
                            line: line_no,
                            message: e.to_string(),
                        })
                    }
                }
            }
            offset = end.unwrap_or(bytes.len());
            keep = offset;
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if keep < bytes.len() {
            file.set_len(keep as u64)?;
        }
        if keep > 0 && bytes[keep - 1] != b'\n' {
            file.write_all(b"\n")?;
        }
        log.sink = Some(file);
        Ok(log)
    }

    fn record(&mut self, v: Vote) -> bool {
        let key = (v.task_id.clone(), v.annotator_id.clone(), v.criterion);
        if !self.keys.insert(key) {
            return false;
        }
        self.votes.push(v);
        true
    }

    pub fn votes(&self) -> &[Vote] {
        &self.votes
    }

    pub fn has_voted(&self, task_id: &str, annotator_id: &str, criterion: Criterion) -> bool {
        self.keys
            .contains(&(task_id.to_owned(), annotator_id.to_owned(), criterion))
    }

    /// Stores every criterion of `ballot`, or nothing if any was already
    /// recorded for this annotator.
    pub fn submit(&mut self, ballot: &Ballot, timestamp: u64) -> Result<(), HumanEvalError> {
        if ballot.annotator_id.trim().is_empty() {
            return Err(HumanEvalError::EmptyAnnotator);
        }
        if let Some(c) = Criterion::ALL
            .into_iter()
            .find(|c| self.has_voted(&ballot.task_id, &ballot.annotator_id, *c))
        {
            return Err(HumanEvalError::DuplicateVote {
                task: ballot.task_id.clone(),
                annotator: ballot.annotator_id.clone(),
                criterion: c,
            });
        }
        let votes: Vec<Vote> = Criterion::ALL
            .into_iter()
            .map(|criterion| Vote {
                task_id: ballot.task_id.clone(),
                annotator_id: ballot.annotator_id.clone(),
                criterion,
                choice: ballot.choices.get(criterion),
                timestamp,
            })
            .collect();
        if let Some(file) = &mut self.sink {
            let mut buf = Vec::new();
            for v in &votes {
                serde_json::to_writer(&mut buf, v).map_err(std::io::Error::from)?;
                buf.push(b'\n');
            }
            file.write_all(&buf)?;
            file.flush()?;
            file.sync_data()?;
        }
        for v in votes {
            self.record(v);
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Aggregation

/// Strict majority of an odd number of binary votes.
pub fn majority(votes: &[Side]) -> Result<Side, HumanEvalError> {
    if votes.len().is_multiple_of(2) {
        return Err(HumanEvalError::EvenPanel(votes.len()));
    }
    let a = votes.iter().filter(|v| **v == Side::A).count();
    Ok(if 2 * a > votes.len() { Side::A } else { Side::B })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BootstrapResult {
    /// Two-sided p-value: twice `one_sided`, capped at 1.
    pub p_value: f64,
    /// Fraction of resamples in which the observed winner's share is ≤ 0.5.
    pub one_sided: f64,
}

/// Bootstrap test of whether the observed winner's share exceeds one half.
///
/// `outcomes[i]` is true when task `i` was won by the observed winner side.
/// Each of `n_samples` resamples draws `outcomes.len()` indices with
/// `gen_range(0..n)` from a ChaCha8 stream seeded with `seed`.
pub fn bootstrap_test(outcomes: &[bool], n_samples: usize, seed: u64) -> BootstrapResult {
    let n = outcomes.len();
    if n == 0 || n_samples == 0 {
        return BootstrapResult {
            p_value: 1.0,
            one_sided: 1.0,
        };
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut at_or_below = 0usize;
    for _ in 0..n_samples {
        let mut wins = 0usize;
        for _ in 0..n {
            wins += outcomes[rng.gen_range(0..n)] as usize;
        }
        // share ≤ 0.5  ⇔  2·wins ≤ n
        if 2 * wins <= n {
            at_or_below += 1;
        }
    }
    let one_sided = at_or_below as f64 / n_samples as f64;
    BootstrapResult {
        p_value: (2.0 * one_sided).min(1.0),
        one_sided,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub panel_size: usize,
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            panel_size: DEFAULT_PANEL_SIZE,
            n_samples: DEFAULT_BOOTSTRAP_SAMPLES,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub criterion: Criterion,
    pub n_tasks: usize,
    /// Wins of `first` and `second` in the pair; proportions sum to 1.
    pub wins_first: usize,
    pub wins_second: usize,
    pub proportion_first: Option<f64>,
    pub proportion_second: Option<f64>,
    pub winner: Option<String>,
    pub p_value: Option<f64>,
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairReport {
    pub first: String,
    pub second: String,
    pub criteria: Vec<CriterionResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub options: ReportOptions,
    pub n_tasks: usize,
    pub excluded_tasks: usize,
    /// Tasks with fewer votes than the panel size.
    pub incomplete_tasks: usize,
    pub pairs: Vec<PairReport>,
}

/// Report over complete panels of the tasks that survive exclusion. Each
/// task contributes the first `panel_size` votes per criterion in log order.
pub fn report(tasks: &[JudgmentTask], votes: &[Vote], options: &ReportOptions) -> Result<EvalReport, HumanEvalError> {
    if options.panel_size.is_multiple_of(2) {
        return Err(HumanEvalError::EvenPanel(options.panel_size));
    }
    let index: HashMap<&str, &JudgmentTask> = tasks.iter().map(|t| (t.task_id.as_str(), t)).collect();
    let mut panels: HashMap<(&str, Criterion), Vec<Side>> = HashMap::new();
    for v in votes {
        if !index.contains_key(v.task_id.as_str()) {
            return Err(HumanEvalError::UnknownTask(v.task_id.clone()));
        }
        let panel = panels.entry((&v.task_id, v.criterion)).or_default();
        if panel.len() < options.panel_size {
            panel.push(v.choice);
        }
    }

    // Pair key is the sorted source names; outcomes are "first source won".
    let mut outcomes: BTreeMap<(String, String), BTreeMap<Criterion, Vec<bool>>> = BTreeMap::new();
    let mut excluded = 0;
    let mut incomplete = 0;
    for task in tasks {
        let mut pair = [task.source_a.clone(), task.source_b.clone()];
        pair.sort();
        let entry = outcomes.entry((pair[0].clone(), pair[1].clone())).or_default();
        if task.is_excluded() {
            excluded += 1;
            continue;
        }
        let complete = Criterion::ALL.iter().all(|c| {
            panels
                .get(&(task.task_id.as_str(), *c))
                .is_some_and(|p| p.len() == options.panel_size)
        });
        if !complete {
            incomplete += 1;
            continue;
        }
        for c in Criterion::ALL {
            let winner = majority(&panels[&(task.task_id.as_str(), c)])?;
            entry
                .entry(c)
                .or_default()
                .push(task.source_of(winner) == pair[0]);
        }
    }

    let pairs = outcomes
        .into_iter()
        .map(|((first, second), by_criterion)| {
            let criteria = Criterion::ALL
                .into_iter()
                .map(|criterion| {
                    let won_first = by_criterion.get(&criterion).map(Vec::as_slice).unwrap_or(&[]);
                    let n = won_first.len();
                    let wins_first = won_first.iter().filter(|w| **w).count();
                    let wins_second = n - wins_first;
                    if n == 0 {
                        return CriterionResult {
                            criterion,
                            n_tasks: 0,
                            wins_first,
                            wins_second,
                            proportion_first: None,
                            proportion_second: None,
                            winner: None,
                            p_value: None,
                            significant: false,
                        };
                    }
                    let first_leads = wins_first >= wins_second;
                    let winner_outcomes: Vec<bool> =
                        won_first.iter().map(|w| *w == first_leads).collect();
                    let test = bootstrap_test(&winner_outcomes, options.n_samples, options.seed);
                    CriterionResult {
                        criterion,
                        n_tasks: n,
                        wins_first,
                        wins_second,
                        proportion_first: Some(wins_first as f64 / n as f64),
                        proportion_second: Some(wins_second as f64 / n as f64),
                        winner: (wins_first != wins_second)
                            .then(|| if first_leads { first.clone() } else { second.clone() }),
                        p_value: Some(test.p_value),
                        significant: test.p_value < SIGNIFICANCE_LEVEL,
                    }
                })
                .collect();
            PairReport {
                first,
                second,
                criteria,
            }
        })
        .collect();
    Ok(EvalReport {
        options: options.clone(),
        n_tasks: tasks.len(),
        excluded_tasks: excluded,
        incomplete_tasks: incomplete,
        pairs,
    })
}

pub fn format_report(report: &EvalReport) -> String {
    let mut out = format!(
        "tasks {}  excluded {}  incomplete {}  panel {}  bootstrap {} (seed {})\n",
        report.n_tasks,
        report.excluded_tasks,
        report.incomplete_tasks,
        report.options.panel_size,
        report.options.n_samples,
        report.options.seed
    );
    for pair in &report.pairs {
        let _ = writeln!(out, "\n{} vs {}", pair.first, pair.second);
        let _ = writeln!(
            out,
            "{:<16}{:>6}{:>10}{:>10}{:>10}  ",
            "criterion", "n", pair.first.chars().take(9).collect::<String>(),
            pair.second.chars().take(9).collect::<String>(), "p"
        );
        for c in &pair.criteria {
            let pct = |p: Option<f64>| p.map_or_else(|| "-".to_owned(), |p| format!("{:.1}%", 100.0 * p));
            let p = c.p_value.map_or_else(|| "-".to_owned(), |p| format!("{p:.4}"));
            let _ = writeln!(
                out,
                "{:<16}{:>6}{:>10}{:>10}{:>10}{}",
                c.criterion.as_str(),
                c.n_tasks,
                pct(c.proportion_first),
                pct(c.proportion_second),
                p,
                if c.significant { "  *" } else { "" }
            );
        }
    }
    out
}

// ---------------------------------------------------------------------------
// Session state shared by the HTTP service

pub struct Session {
    tasks: Vec<JudgmentTask>,
    log: VoteLog,
    panel_size: usize,
}

impl Session {
    pub fn new(tasks: Vec<JudgmentTask>, log: VoteLog, panel_size: usize) -> Result<Self, HumanEvalError> {
        if panel_size.is_multiple_of(2) {
            return Err(HumanEvalError::EvenPanel(panel_size));
        }
        let mut seen = HashSet::new();
        for t in &tasks {
            if !seen.insert(t.task_id.as_str()) {
                return Err(HumanEvalError::DuplicateTask(t.task_id.clone()));
            }
        }
        Ok(Self {
            tasks,
            log,
            panel_size,
        })
    }

    pub fn tasks(&self) -> &[JudgmentTask] {
        &self.tasks
    }

    pub fn votes(&self) -> &[Vote] {
        self.log.votes()
    }

    pub fn panel_size(&self) -> usize {
        self.panel_size
    }

    /// The least-voted task this annotator has not judged and whose panel is
    /// not yet full; ties go to the earlier task.
    pub fn next_task(&self, annotator_id: &str) -> Option<&JudgmentTask> {
        let mut annotators: HashMap<&str, HashSet<&str>> = HashMap::new();
        for v in self.log.votes() {
            annotators.entry(&v.task_id).or_default().insert(&v.annotator_id);
        }
        self.tasks
            .iter()
            .map(|t| (t, annotators.get(t.task_id.as_str())))
            .filter(|(_, who)| who.is_none_or(|w| w.len() < self.panel_size && !w.contains(annotator_id)))
            .min_by_key(|(_, who)| who.map_or(0, HashSet::len))
            .map(|(t, _)| t)
    }

    pub fn submit(&mut self, ballot: &Ballot, timestamp: u64) -> Result<(), HumanEvalError> {
        if !self.tasks.iter().any(|t| t.task_id == ballot.task_id) {
            return Err(HumanEvalError::UnknownTask(ballot.task_id.clone()));
        }
        self.log.submit(ballot, timestamp)
    }

    pub fn report(&self, n_samples: usize, seed: u64) -> Result<EvalReport, HumanEvalError> {
        report(
            &self.tasks,
            self.log.votes(),
            &ReportOptions {
                panel_size: self.panel_size,
                n_samples,
                seed,
            },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Side::{A, B};

    #[test]
    fn majority_examples() {
        assert_eq!(majority(&[A, A, A, B, B]).unwrap(), A);
        assert_eq!(majority(&[B; 5]).unwrap(), B);
        assert_eq!(majority(&[A, B, B]).unwrap(), B);
        assert!(matches!(majority(&[A, B]), Err(HumanEvalError::EvenPanel(2))));
    }

    #[test]
    fn bootstrap_edges() {
        assert_eq!(bootstrap_test(&[true; 30], 1000, 1).p_value, 0.0);
        let balanced: Vec<bool> = (0..40).map(|i| i % 2 == 0).collect();
        let r = bootstrap_test(&balanced, 2000, 1);
        assert!(r.one_sided >= 0.5);
        assert_eq!(r.p_value, 1.0);
        assert_eq!(bootstrap_test(&balanced, 500, 9), bootstrap_test(&balanced, 500, 9));
    }

    fn ballot(task: &str, annotator: &str, side: Side) -> Ballot {
        Ballot {
            task_id: task.into(),
            annotator_id: annotator.into(),
            choices: BallotChoices {
                adequacy: side,
                informativeness: side,
                relevance: side,
                accuracy: side,
            },
        }
    }

    #[test]
    fn vote_log_rejects_repeats() {
        let mut log = VoteLog::in_memory();
        log.submit(&ballot("t1", "ann", A), 0).unwrap();
        let before = log.votes().to_vec();
        assert!(matches!(
            log.submit(&ballot("t1", "ann", B), 1),
            Err(HumanEvalError::DuplicateVote { .. })
        ));
        assert_eq!(log.votes(), before.as_slice());
        assert!(log.submit(&ballot("t1", "", B), 1).is_err());
    }

    #[test]
    fn vote_log_replays_and_skips_torn_tail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("votes.log");
        {
            let mut log = VoteLog::open(&path).unwrap();
            log.submit(&ballot("t1", "a1", A), 5).unwrap();
        }
        let mut f = OpenOptions::new().append(true).open(&path).unwrap();
        f.write_all(b"{\"task_id\":\"t1\",\"annot").unwrap();
        drop(f);
        let mut log = VoteLog::open(&path).unwrap();
        assert_eq!(log.votes().len(), 4);
        log.submit(&ballot("t1", "a2", B), 6).unwrap();
        let log = VoteLog::open(&path).unwrap();
        assert_eq!(log.votes().len(), 8);
    }
}
