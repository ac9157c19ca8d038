//! Text normalization and token-overlap metrics.
//!
//! Every "word-level" score in the crate goes through [`normalize`]: lowercase,
//! strip ASCII punctuation, drop the English articles `a`, `an`, `the`, then
//! split on whitespace. This is the convention used by the SQuAD and QuAC
//! evaluation scripts.

use std::collections::HashMap;

use thiserror::Error;

use crate::corpus::AnswerSpan;

/// Literal answer text QuAC uses for unanswerable questions.
pub const CANNOTANSWER: &str = "CANNOTANSWER";

/// Default whole-word markers for generic "Anything else?" questions.
pub const DEFAULT_ANYTHING_ELSE_MARKERS: &[&str] = &["other", "else"];

const ARTICLES: &[&str] = &["a", "an", "the"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricError {
    #[error("at least one reference is required")]
    NoReferences,
    #[error("BLEU order must be in 1..=4, got {0}")]
    InvalidOrder(usize),
}

/// A multiset of normalized tokens.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TokenBag {
    tokens: Vec<String>,
    source_len: usize,
}

impl TokenBag {
    /// Builds a bag from tokens that are already normalized.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let tokens: Vec<String> = tokens.into_iter().map(Into::into).collect();
        let source_len = tokens.len();
        Self { tokens, source_len }
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Raw whitespace token count of the text the bag was built from.
    pub fn source_len(&self) -> usize {
        self.source_len
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Multiset union; used when several answers are pooled into one bag.
    pub fn extend(&mut self, other: &TokenBag) {
        self.tokens.extend(other.tokens.iter().cloned());
        self.source_len += other.source_len;
    }

    fn counts(&self) -> HashMap<&str, usize> {
        let mut counts = HashMap::with_capacity(self.tokens.len());
        for t in &self.tokens {
            *counts.entry(t.as_str()).or_insert(0) += 1;
        }
        counts
    }

    /// Size of the multiset intersection with `other`.
    pub fn overlap(&self, other: &TokenBag) -> usize {
        let mine = self.counts();
        let theirs = other.counts();
        mine.iter()
            .map(|(tok, &n)| n.min(theirs.get(tok).copied().unwrap_or(0)))
            .sum()
    }
}

/// Normalizes `text` into a [`TokenBag`].
pub fn normalize(text: &str) -> TokenBag {
    let lowered = text.to_lowercase();
    let stripped: String = lowered
        .chars()
        .filter(|c| !c.is_ascii_punctuation())
        .collect();
    let tokens = stripped
        .split_whitespace()
        .filter(|t| !ARTICLES.contains(t))
        .map(str::to_owned)
        .collect();
    TokenBag {
        tokens,
        source_len: text.split_whitespace().count(),
    }
}

/// Harmonic mean of multiset precision and recall.
///
/// Two empty bags score 1; one empty bag scores 0.
pub fn token_f1(a: &TokenBag, b: &TokenBag) -> f64 {
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let common = a.overlap(b);
    if common == 0 {
        return 0.0;
    }
    let precision = common as f64 / a.len() as f64;
    let recall = common as f64 / b.len() as f64;
    2.0 * precision * recall / (precision + recall)
}

/// `|a ∩ reference| / |a|`, or 0 when `a` is empty.
pub fn token_precision(a: &TokenBag, reference: &TokenBag) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.overlap(reference) as f64 / a.len() as f64
}

pub fn max_f1_over_refs(pred: &TokenBag, refs: &[TokenBag]) -> Result<f64, MetricError> {
    refs.iter()
        .map(|r| token_f1(pred, r))
        .fold(None, |best: Option<f64>, f| Some(best.map_or(f, |b| b.max(f))))
        .ok_or(MetricError::NoReferences)
}

/// Tokenizer for BLEU: lowercase, ASCII punctuation split into its own
/// tokens, whitespace split. Articles are kept.
pub fn bleu_tokens(text: &str) -> Vec<String> {
    let mut spaced = String::with_capacity(text.len() + 8);
    for c in text.to_lowercase().chars() {
        if c.is_ascii_punctuation() {
            spaced.push(' ');
            spaced.push(c);
            spaced.push(' ');
        } else {
            spaced.push(c);
        }
    }
    spaced.split_whitespace().map(str::to_owned).collect()
}

/// Clipped n-gram statistics accumulated over one or more segments.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct BleuStats {
    /// Clipped matches per order, index 0 = unigrams.
    pub matches: Vec<u64>,
    /// Candidate n-gram totals per order.
    pub totals: Vec<u64>,
    pub candidate_len: u64,
    pub reference_len: u64,
}

impl BleuStats {
    fn new(max_n: usize) -> Self {
        Self {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            candidate_len: 0,
            reference_len: 0,
        }
    }

    fn add_segment<T: AsRef<str>>(&mut self, candidate: &[T], reference: &[T]) {
        self.candidate_len += candidate.len() as u64;
        self.reference_len += reference.len() as u64;
        for n in 1..=self.matches.len() {
            let cand = ngram_counts(candidate, n);
            let refc = ngram_counts(reference, n);
            let clipped: usize = cand
                .iter()
                .map(|(g, &c)| c.min(refc.get(g).copied().unwrap_or(0)))
                .sum();
            self.matches[n - 1] += clipped as u64;
            self.totals[n - 1] += candidate.len().saturating_sub(n - 1) as u64;
        }
    }

    /// Modified n-gram precision for order `n` (1-based).
    pub fn precision(&self, n: usize) -> f64 {
        let total = self.totals[n - 1];
        if total == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / total as f64
        }
    }

    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_len == 0 {
            0.0
        } else if self.candidate_len > self.reference_len {
            1.0
        } else {
            (1.0 - self.reference_len as f64 / self.candidate_len as f64).exp()
        }
    }

    /// Cumulative BLEU-1..BLEU-max_n (uniform weights, no smoothing).
    pub fn scores(&self) -> Vec<f64> {
        let bp = self.brevity_penalty();
        let mut log_sum = 0.0;
        let mut zero = false;
        (1..=self.matches.len())
            .map(|n| {
                let p = self.precision(n);
                if p == 0.0 {
                    zero = true;
                }
                if zero {
                    return 0.0;
                }
                log_sum += p.ln();
                bp * (log_sum / n as f64).exp()
            })
            .collect()
    }
}

fn ngram_counts<T: AsRef<str>>(tokens: &[T], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() < n {
        return counts;
    }
    for window in tokens.windows(n) {
        let key: Vec<&str> = window.iter().map(AsRef::as_ref).collect();
        *counts.entry(key).or_insert(0) += 1;
    }
    counts
}

/// Sentence-level BLEU-1..BLEU-max_n of one candidate against one reference.
pub fn bleu<T: AsRef<str>>(
    candidate: &[T],
    reference: &[T],
    max_n: usize,
) -> Result<Vec<f64>, MetricError> {
    corpus_bleu(std::iter::once((candidate, reference)), max_n)
}

/// Corpus BLEU: clipped counts and lengths are summed over all segments
/// before the precisions and brevity penalty are taken.
pub fn corpus_bleu<'a, T, I>(pairs: I, max_n: usize) -> Result<Vec<f64>, MetricError>
where
    T: AsRef<str> + 'a,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    Ok(corpus_bleu_stats(pairs, max_n)?.scores())
}

pub fn corpus_bleu_stats<'a, T, I>(pairs: I, max_n: usize) -> Result<BleuStats, MetricError>
where
    T: AsRef<str> + 'a,
    I: IntoIterator<Item = (&'a [T], &'a [T])>,
{
    if !(1..=4).contains(&max_n) {
        return Err(MetricError::InvalidOrder(max_n));
    }
    let mut stats = BleuStats::new(max_n);
    for (cand, reference) in pairs {
        stats.add_segment(cand, reference);
    }
    Ok(stats)
}

/// True iff `question` contains one of the default markers as a whole word.
pub fn is_anything_else(question: &str) -> bool {
    is_anything_else_with(question, DEFAULT_ANYTHING_ELSE_MARKERS)
}

/// Case-insensitive whole-word marker search on raw text.
pub fn is_anything_else_with<S: AsRef<str>>(question: &str, markers: &[S]) -> bool {
    question
        .split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .any(|w| markers.iter().any(|m| w.eq_ignore_ascii_case(m.as_ref())))
}

pub fn is_unanswerable(answer: &AnswerSpan) -> bool {
    answer.is_unanswerable || answer.text == CANNOTANSWER
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bag(tokens: &[&str]) -> TokenBag {
        TokenBag::from_tokens(tokens.iter().copied())
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize("The cat, sat.").tokens(), ["cat", "sat"]);
        assert!(normalize("").is_empty());
        assert_eq!(normalize("CANNOTANSWER").tokens(), ["cannotanswer"]);
        assert_eq!(normalize("The cat, sat.").source_len(), 3);
    }

    #[test]
    fn normalize_is_idempotent_on_normalized_text() {
        let once = normalize("An Apple a day, keeps THE doctor away!");
        let twice = normalize(&once.tokens().join(" "));
        assert_eq!(once.tokens(), twice.tokens());
    }

    #[test]
    fn f1_examples() {
        assert_eq!(token_f1(&bag(&["x", "y"]), &bag(&["x", "y"])), 1.0);
        assert_eq!(token_f1(&bag(&["x"]), &bag(&["y"])), 0.0);
        assert_eq!(token_f1(&bag(&["a", "b"]), &bag(&["a", "c"])), 0.5);
        assert_eq!(token_f1(&bag(&[]), &bag(&[])), 1.0);
        assert_eq!(token_f1(&bag(&["x"]), &bag(&[])), 0.0);
    }

    #[test]
    fn precision_examples() {
        assert_eq!(token_precision(&bag(&["x"]), &bag(&["x", "y"])), 1.0);
        assert_eq!(token_precision(&bag(&["x"]), &bag(&["y"])), 0.0);
        assert_eq!(token_precision(&bag(&["x", "y"]), &bag(&["x"])), 0.5);
        assert_eq!(token_precision(&bag(&[]), &bag(&["x"])), 0.0);
    }

    #[test]
    fn max_f1_examples() {
        let pred = bag(&["a", "b"]);
        assert_eq!(max_f1_over_refs(&pred, &[bag(&["a", "b"])]).unwrap(), 1.0);
        assert_eq!(
            max_f1_over_refs(&pred, &[bag(&["z"]), bag(&["a", "c"])]).unwrap(),
            0.5
        );
        assert_eq!(max_f1_over_refs(&pred, &[]), Err(MetricError::NoReferences));
    }

    #[test]
    fn bleu_hand_values() {
        let cand = ["a", "b", "c", "d"];
        let reference = ["a", "b", "c", "e"];
        let stats = corpus_bleu_stats(std::iter::once((&cand[..], &reference[..])), 4).unwrap();
        assert_eq!(stats.precision(1), 0.75);
        assert_eq!(stats.precision(2), 2.0 / 3.0);
        let scores = stats.scores();
        assert!((scores[0] - 0.75).abs() < 1e-12);
        assert!((scores[1] - 0.5f64.sqrt()).abs() < 1e-12);

        let same = bleu(&cand, &cand, 4).unwrap();
        assert!(same.iter().all(|s| (s - 1.0).abs() < 1e-12));
        let none = bleu(&["x", "y"], &["p", "q"], 4).unwrap();
        assert_eq!(none, vec![0.0; 4]);
        let empty: [&str; 0] = [];
        assert_eq!(bleu(&empty, &reference, 2).unwrap(), vec![0.0; 2]);
        assert_eq!(bleu(&cand, &cand, 5), Err(MetricError::InvalidOrder(5)));
    }

    #[test]
    fn bleu_tokenizer_splits_punctuation() {
        assert_eq!(bleu_tokens("What is it?"), ["what", "is", "it", "?"]);
    }

    #[test]
    fn anything_else_detection() {
        assert!(is_anything_else(
            "Are there any other interesting aspects about this article?"
        ));
        assert!(!is_anything_else("What happened during the standoff?"));
        assert!(is_anything_else("Did he do anything ELSE?"));
        assert!(!is_anything_else("What did his mother do?"));
        assert!(is_anything_else_with("Any more facts?", &["more"]));
    }

    #[test]
    fn unanswerable_detection() {
        assert!(is_unanswerable(&AnswerSpan::unanswerable()));
        let span = AnswerSpan {
            text: "nonstandard".into(),
            start: None,
            is_unanswerable: true,
        };
        assert!(is_unanswerable(&span));
        assert!(!is_unanswerable(&AnswerSpan::at("in 1947", 3)));
        let literal = AnswerSpan {
            text: CANNOTANSWER.into(),
            start: None,
            is_unanswerable: false,
        };
        assert!(is_unanswerable(&literal));
    }
}
