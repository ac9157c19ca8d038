//! Documents, conversations and datasets, plus the canonical line-delimited
//! format, the QuAC importer, split application and passage-length filtering.
//!
//! Answer offsets are character (Unicode scalar) offsets into the passage,
//! matching the `answer_start` convention of the QuAC distribution files.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textnorm::CANNOTANSWER;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("invalid document: {0}")]
    InvalidDocument(String),
    #[error("invalid conversation {conv_id}: {message}")]
    InvalidConversation { conv_id: String, message: String },
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("QuAC input at {path}: {message}")]
    Quac { path: String, message: String },
    #[error("duplicate conversation id {0}")]
    DuplicateConvId(String),
    #[error("split references unknown conversation id {0}")]
    UnknownConvId(String),
    #[error("conversation {conv_id} listed in both split {first} and split {second}")]
    OverlappingSplit {
        conv_id: String,
        first: String,
        second: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn has_control_chars(s: &str) -> bool {
    s.chars().any(char::is_control)
}

/// Replaces control characters (newlines, tabs, ...) with plain spaces.
pub fn sanitize_plain_text(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_control() { ' ' } else { c })
        .collect()
}

/// Background knowledge available to a prior-grounded questioner.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackgroundInfo {
    title: String,
    section_title: String,
    #[serde(rename = "abstract")]
    abstract_text: String,
}

impl BackgroundInfo {
    pub fn new(
        title: impl Into<String>,
        section_title: impl Into<String>,
        abstract_text: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let info = Self {
            title: title.into(),
            section_title: section_title.into(),
            abstract_text: abstract_text.into(),
        };
        if info.title.trim().is_empty() {
            return Err(CorpusError::InvalidDocument("empty title".into()));
        }
        if [&info.title, &info.section_title, &info.abstract_text]
            .iter()
            .any(|f| has_control_chars(f))
        {
            return Err(CorpusError::InvalidDocument(
                "background fields must not contain control characters".into(),
            ));
        }
        Ok(info)
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    pub fn section_title(&self) -> &str {
        &self.section_title
    }

    /// The article's lead description.
    pub fn abstract_text(&self) -> &str {
        &self.abstract_text
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    doc_id: String,
    background: BackgroundInfo,
    passage: String,
    word_count: usize,
}

impl Document {
    pub fn new(
        doc_id: impl Into<String>,
        background: BackgroundInfo,
        passage: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let doc_id = doc_id.into();
        let passage = passage.into();
        if doc_id.is_empty() {
            return Err(CorpusError::InvalidDocument("empty doc_id".into()));
        }
        if passage.trim().is_empty() {
            return Err(CorpusError::InvalidDocument(format!(
                "document {doc_id} has an empty passage"
            )));
        }
        let word_count = passage.split_whitespace().count();
        Ok(Self {
            doc_id,
            background,
            passage,
            word_count,
        })
    }

    pub fn doc_id(&self) -> &str {
        &self.doc_id
    }

    pub fn background(&self) -> &BackgroundInfo {
        &self.background
    }

    pub fn passage(&self) -> &str {
        &self.passage
    }

    /// Whitespace token count of the passage.
    pub fn word_count(&self) -> usize {
        self.word_count
    }

    pub fn to_record(&self) -> DocRecord {
        DocRecord {
            doc_id: self.doc_id.clone(),
            title: self.background.title.clone(),
            section_title: self.background.section_title.clone(),
            abstract_text: self.background.abstract_text.clone(),
            passage: self.passage.clone(),
        }
    }
}

/// Returns the substring of `s` covering `len` chars from char offset `start`.
pub fn char_slice(s: &str, start: usize, len: usize) -> Option<&str> {
    let mut indices = s.char_indices().map(|(i, _)| i).chain(std::iter::once(s.len()));
    let begin = indices.nth(start)?;
    let end = if len == 0 {
        begin
    } else {
        indices.nth(len - 1)?
    };
    Some(&s[begin..end])
}

/// Char offset of the first occurrence of `needle` in `haystack`.
pub fn find_char_offset(haystack: &str, needle: &str) -> Option<usize> {
    if needle.is_empty() {
        return None;
    }
    haystack
        .find(needle)
        .map(|byte| haystack[..byte].chars().count())
}

/// Converts a char offset into a byte offset, if it is in range.
pub fn char_to_byte(s: &str, char_offset: usize) -> Option<usize> {
    s.char_indices()
        .map(|(i, _)| i)
        .chain(std::iter::once(s.len()))
        .nth(char_offset)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnswerSpan {
    pub text: String,
    /// Char offset into the passage; `None` is the "no-span" value.
    pub start: Option<usize>,
    pub is_unanswerable: bool,
}

impl AnswerSpan {
    pub fn at(text: impl Into<String>, start: usize) -> Self {
        Self {
            text: text.into(),
            start: Some(start),
            is_unanswerable: false,
        }
    }

    pub fn unanswerable() -> Self {
        Self {
            text: CANNOTANSWER.to_owned(),
            start: None,
            is_unanswerable: true,
        }
    }

    pub fn char_len(&self) -> usize {
        self.text.chars().count()
    }

    /// Checks the span invariant against `passage`.
    pub fn verify(&self, passage: &str) -> bool {
        if self.is_unanswerable {
            return self.text == CANNOTANSWER && self.start.is_none();
        }
        match self.start {
            Some(start) => char_slice(passage, start, self.char_len()) == Some(self.text.as_str()),
            None => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QAPair {
    /// 1-based.
    pub turn_index: usize,
    pub question: String,
    pub answer: AnswerSpan,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Conversation {
    pub conv_id: String,
    pub document: Document,
    pub turns: Vec<QAPair>,
}

impl Conversation {
    pub fn new(
        conv_id: impl Into<String>,
        document: Document,
        turns: Vec<QAPair>,
    ) -> Result<Self, CorpusError> {
        let conv = Self {
            conv_id: conv_id.into(),
            document,
            turns,
        };
        conv.validate()?;
        Ok(conv)
    }

    pub fn validate(&self) -> Result<(), CorpusError> {
        let fail = |message: String| CorpusError::InvalidConversation {
            conv_id: self.conv_id.clone(),
            message,
        };
        for (i, turn) in self.turns.iter().enumerate() {
            if turn.turn_index != i + 1 {
                return Err(fail(format!(
                    "turn at position {i} has index {}, expected {}",
                    turn.turn_index,
                    i + 1
                )));
            }
            if turn.question.trim().is_empty() {
                return Err(fail(format!("turn {} has an empty question", turn.turn_index)));
            }
            if !turn.answer.verify(self.document.passage()) {
                return Err(fail(format!(
                    "answer of turn {} does not match the passage at its offset",
                    turn.turn_index
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.turns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.turns.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    Human,
    SyntheticSym,
    SyntheticAsym,
    Imported,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub name: String,
    pub conversations: Vec<Conversation>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        conversations: Vec<Conversation>,
        provenance: Provenance,
    ) -> Result<Self, CorpusError> {
        let mut seen = HashSet::new();
        for c in &conversations {
            if !seen.insert(c.conv_id.as_str()) {
                return Err(CorpusError::DuplicateConvId(c.conv_id.clone()));
            }
        }
        Ok(Self {
            name: name.into(),
            conversations,
            provenance,
        })
    }

    pub fn empty(name: impl Into<String>, provenance: Provenance) -> Self {
        Self {
            name: name.into(),
            conversations: Vec::new(),
            provenance,
        }
    }

    pub fn n_questions(&self) -> usize {
        self.conversations.iter().map(Conversation::len).sum()
    }

    pub fn n_passages(&self) -> usize {
        self.conversations
            .iter()
            .map(|c| c.document.doc_id())
            .collect::<HashSet<_>>()
            .len()
    }

    pub fn get(&self, conv_id: &str) -> Option<&Conversation> {
        self.conversations.iter().find(|c| c.conv_id == conv_id)
    }
}

// ---------------------------------------------------------------------------
// Canonical format

/// Document object as stored on disk, both inside canonical conversation
/// records and as a standalone documents file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DocRecord {
    pub doc_id: String,
    pub title: String,
    pub section_title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub passage: String,
}

impl DocRecord {
    pub fn into_document(self) -> Result<Document, CorpusError> {
        let background = BackgroundInfo::new(self.title, self.section_title, self.abstract_text)?;
        Document::new(self.doc_id, background, self.passage)
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TurnRecord {
    t: usize,
    q: String,
    a: String,
    start: Option<usize>,
    unanswerable: bool,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConversationRecord {
    conv_id: String,
    doc: DocRecord,
    turns: Vec<TurnRecord>,
}

impl From<&Conversation> for ConversationRecord {
    fn from(c: &Conversation) -> Self {
        Self {
            conv_id: c.conv_id.clone(),
            doc: c.document.to_record(),
            turns: c
                .turns
                .iter()
                .map(|t| TurnRecord {
                    t: t.turn_index,
                    q: t.question.clone(),
                    a: t.answer.text.clone(),
                    start: t.answer.start,
                    unanswerable: t.answer.is_unanswerable,
                })
                .collect(),
        }
    }
}

impl ConversationRecord {
    fn into_conversation(self) -> Result<Conversation, CorpusError> {
        let document = self.doc.into_document()?;
        let turns = self
            .turns
            .into_iter()
            .map(|t| QAPair {
                turn_index: t.t,
                question: t.q,
                answer: AnswerSpan {
                    text: t.a,
                    start: t.start,
                    is_unanswerable: t.unanswerable,
                },
            })
            .collect();
        Conversation::new(self.conv_id, document, turns)
    }
}

/// Serializes one conversation as a single canonical JSON line (no newline).
pub fn conversation_to_line(conv: &Conversation) -> String {
    serde_json::to_string(&ConversationRecord::from(conv)).expect("records always serialize")
}

/// Writes one conversation record per line.
pub fn write_canonical<W: Write>(dataset: &Dataset, mut out: W) -> Result<(), CorpusError> {
    for conv in &dataset.conversations {
        out.write_all(conversation_to_line(conv).as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a canonical dataset. Blank lines are ignored.
pub fn read_canonical<R: BufRead>(
    input: R,
    name: impl Into<String>,
    provenance: Provenance,
) -> Result<Dataset, CorpusError> {
    let mut conversations = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in input.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at_line = |message: String| CorpusError::Line {
            line: line_no,
            message,
        };
        let record: ConversationRecord =
            serde_json::from_str(&line).map_err(|e| at_line(e.to_string()))?;
        let conv = record
            .into_conversation()
            .map_err(|e| at_line(e.to_string()))?;
        if !seen.insert(conv.conv_id.clone()) {
            return Err(at_line(format!("duplicate conversation id {}", conv.conv_id)));
        }
        conversations.push(conv);
    }
    Ok(Dataset {
        name: name.into(),
        conversations,
        provenance,
    })
}

/// Reads a documents file: one [`DocRecord`] per line.
pub fn read_documents<R: BufRead>(input: R) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let at_line = |message: String| CorpusError::Line {
            line: i + 1,
            message,
        };
        let record: DocRecord = serde_json::from_str(&line).map_err(|e| at_line(e.to_string()))?;
        docs.push(record.into_document().map_err(|e| at_line(e.to_string()))?);
    }
    Ok(docs)
}

pub fn write_documents<'a, W, I>(docs: I, mut out: W) -> Result<(), CorpusError>
where
    W: Write,
    I: IntoIterator<Item = &'a Document>,
{
    for doc in docs {
        let line = serde_json::to_string(&doc.to_record()).expect("records always serialize");
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
    }
    out.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// QuAC import

#[derive(Debug, Deserialize)]
struct QuacFile {
    data: Vec<QuacArticle>,
}

#[derive(Debug, Deserialize)]
struct QuacArticle {
    title: String,
    #[serde(default)]
    section_title: String,
    #[serde(default)]
    background: String,
    paragraphs: Vec<QuacParagraph>,
}

#[derive(Debug, Deserialize)]
struct QuacParagraph {
    id: String,
    context: String,
    qas: Vec<QuacQa>,
}

#[derive(Debug, Deserialize)]
struct QuacQa {
    id: String,
    question: String,
    #[serde(default)]
    answers: Vec<QuacAnswer>,
    orig_answer: Option<QuacAnswer>,
}

#[derive(Debug, Clone, Deserialize)]
struct QuacAnswer {
    text: String,
    answer_start: i64,
}

/// A repaired span found during import.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImportWarning {
    pub conv_id: String,
    pub turn_index: usize,
    pub declared_start: i64,
    pub outcome: SpanRepair,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpanRepair {
    Relocated { start: usize },
    MarkedUnanswerable,
}

#[derive(Debug)]
pub struct QuacImport {
    pub dataset: Dataset,
    pub warnings: Vec<ImportWarning>,
}

fn parse_quac(json: &str) -> Result<QuacFile, CorpusError> {
    let de = &mut serde_json::Deserializer::from_str(json);
    serde_path_to_error::deserialize(de).map_err(|e| CorpusError::Quac {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// QuAC appends the literal `CANNOTANSWER` to every context; it is not part
/// of the evidence passage.
fn strip_cannotanswer_suffix(context: &str) -> &str {
    context
        .trim_end()
        .strip_suffix(CANNOTANSWER)
        .map(str::trim_end)
        .unwrap_or(context)
}

/// Imports a QuAC distribution file (train or dev JSON) as one conversation
/// per dialogue, ordered by doc_id.
pub fn import_quac(json: &str, name: impl Into<String>) -> Result<QuacImport, CorpusError> {
    let file = parse_quac(json)?;
    let mut conversations = Vec::new();
    let mut warnings = Vec::new();
    for (ai, article) in file.data.into_iter().enumerate() {
        let background = BackgroundInfo::new(
            sanitize_plain_text(&article.title),
            sanitize_plain_text(&article.section_title),
            sanitize_plain_text(&article.background),
        )
        .map_err(|e| CorpusError::Quac {
            path: format!("data[{ai}]"),
            message: e.to_string(),
        })?;
        for (pi, para) in article.paragraphs.into_iter().enumerate() {
            let path = format!("data[{ai}].paragraphs[{pi}]");
            let passage = strip_cannotanswer_suffix(&para.context);
            let document = Document::new(para.id.clone(), background.clone(), passage).map_err(
                |e| CorpusError::Quac {
                    path: path.clone(),
                    message: e.to_string(),
                },
            )?;
            let mut turns = Vec::with_capacity(para.qas.len());
            for (qi, qa) in para.qas.into_iter().enumerate() {
                let turn_index = qi + 1;
                let raw = qa
                    .orig_answer
                    .or_else(|| qa.answers.first().cloned())
                    .ok_or_else(|| CorpusError::Quac {
                        path: format!("{path}.qas[{qi}]"),
                        message: format!("question {} has no answer", qa.id),
                    })?;
                if qa.question.trim().is_empty() {
                    return Err(CorpusError::Quac {
                        path: format!("{path}.qas[{qi}].question"),
                        message: "empty question".into(),
                    });
                }
                let (answer, repair) = resolve_span(document.passage(), &raw);
                if let Some(outcome) = repair {
                    log::warn!(
                        "{}: turn {turn_index} answer not at declared offset {}: {:?}",
                        para.id,
                        raw.answer_start,
                        outcome
                    );
                    warnings.push(ImportWarning {
                        conv_id: para.id.clone(),
                        turn_index,
                        declared_start: raw.answer_start,
                        outcome,
                    });
                }
                turns.push(QAPair {
                    turn_index,
                    question: qa.question,
                    answer,
                });
            }
            conversations.push(Conversation::new(para.id, document, turns)?);
        }
    }
    conversations.sort_by(|a, b| a.document.doc_id().cmp(b.document.doc_id()));
    let dataset = Dataset::new(name, conversations, Provenance::Imported)?;
    Ok(QuacImport { dataset, warnings })
}

fn resolve_span(passage: &str, raw: &QuacAnswer) -> (AnswerSpan, Option<SpanRepair>) {
    if raw.text.trim() == CANNOTANSWER {
        return (AnswerSpan::unanswerable(), None);
    }
    if raw.answer_start >= 0 {
        let span = AnswerSpan::at(raw.text.clone(), raw.answer_start as usize);
        if span.verify(passage) {
            return (span, None);
        }
    }
    match find_char_offset(passage, &raw.text) {
        Some(start) => (
            AnswerSpan::at(raw.text.clone(), start),
            Some(SpanRepair::Relocated { start }),
        ),
        None => (
            AnswerSpan::unanswerable(),
            Some(SpanRepair::MarkedUnanswerable),
        ),
    }
}

/// Gold references of one QuAC question, for multi-reference scoring.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldQuestion {
    pub question_id: String,
    pub dialogue_id: String,
    pub references: Vec<String>,
}

/// Extracts every annotator answer per question from a QuAC file.
pub fn quac_gold_references(json: &str) -> Result<Vec<GoldQuestion>, CorpusError> {
    let file = parse_quac(json)?;
    let mut out = Vec::new();
    for article in file.data {
        for para in article.paragraphs {
            for qa in para.qas {
                let mut references: Vec<String> =
                    qa.answers.into_iter().map(|a| a.text).collect();
                if references.is_empty() {
                    if let Some(orig) = qa.orig_answer {
                        references.push(orig.text);
                    }
                }
                out.push(GoldQuestion {
                    question_id: qa.id,
                    dialogue_id: para.id.clone(),
                    references,
                });
            }
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Splits and filters

#[derive(Debug, Clone)]
pub struct SplitPart {
    pub name: String,
    pub dataset: Dataset,
    pub passages: usize,
    pub questions: usize,
}

/// Partitions `dataset` by explicit conversation-id lists. Conversations not
/// listed anywhere are left out.
pub fn split_dataset(
    dataset: &Dataset,
    splits: &[(String, BTreeSet<String>)],
) -> Result<Vec<SplitPart>, CorpusError> {
    let index: HashMap<&str, &Conversation> = dataset
        .conversations
        .iter()
        .map(|c| (c.conv_id.as_str(), c))
        .collect();
    let mut owner: BTreeMap<&str, &str> = BTreeMap::new();
    for (name, ids) in splits {
        for id in ids {
            if !index.contains_key(id.as_str()) {
                return Err(CorpusError::UnknownConvId(id.clone()));
            }
            if let Some(first) = owner.insert(id, name) {
                return Err(CorpusError::OverlappingSplit {
                    conv_id: id.clone(),
                    first: first.to_owned(),
                    second: name.clone(),
                });
            }
        }
    }
    Ok(splits
        .iter()
        .map(|(name, ids)| {
            // Keep the source dataset's order.
            let conversations: Vec<Conversation> = dataset
                .conversations
                .iter()
                .filter(|c| ids.contains(&c.conv_id))
                .cloned()
                .collect();
            let dataset = Dataset {
                name: name.clone(),
                conversations,
                provenance: dataset.provenance,
            };
            SplitPart {
                name: name.clone(),
                passages: dataset.n_passages(),
                questions: dataset.n_questions(),
                dataset,
            }
        })
        .collect())
}

/// Keeps documents with `min_words <= word_count <= max_words`.
pub fn filter_passages_by_length(
    documents: Vec<Document>,
    min_words: usize,
    max_words: usize,
) -> Vec<Document> {
    documents
        .into_iter()
        .filter(|d| (min_words..=max_words).contains(&d.word_count()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, passage: &str) -> Document {
        Document::new(id, BackgroundInfo::new("T", "S", "A").unwrap(), passage).unwrap()
    }

    #[test]
    fn char_helpers_handle_multibyte_text() {
        let s = "Zoë went to Köln";
        assert_eq!(char_slice(s, 12, 4), Some("Köln"));
        assert_eq!(find_char_offset(s, "Köln"), Some(12));
        assert_eq!(char_slice(s, 12, 5), None);
        assert_eq!(char_slice(s, 16, 0), Some(""));
    }

    #[test]
    fn document_counts_whitespace_tokens() {
        let d = doc("d", "one two\tthree\nfour");
        assert_eq!(d.word_count(), 4);
        assert!(Document::new("d", BackgroundInfo::new("T", "", "").unwrap(), "  ").is_err());
    }

    #[test]
    fn background_rejects_empty_title_and_control_chars() {
        assert!(BackgroundInfo::new("", "s", "a").is_err());
        assert!(BackgroundInfo::new("t", "s\n", "a").is_err());
        assert_eq!(sanitize_plain_text("a\nb\tc"), "a b c");
    }

    #[test]
    fn conversation_rejects_gaps_and_bad_spans() {
        let d = doc("d", "alpha beta gamma");
        let good = QAPair {
            turn_index: 1,
            question: "q".into(),
            answer: AnswerSpan::at("beta", 6),
        };
        assert!(Conversation::new("c", d.clone(), vec![good.clone()]).is_ok());
        let gap = QAPair {
            turn_index: 2,
            ..good.clone()
        };
        assert!(Conversation::new("c", d.clone(), vec![gap]).is_err());
        let wrong = QAPair {
            answer: AnswerSpan::at("beta", 0),
            ..good
        };
        assert!(Conversation::new("c", d, vec![wrong]).is_err());
    }

    #[test]
    fn canonical_line_error_names_line() {
        let good = conversation_to_line(&Conversation::new("c1", doc("d1", "x y"), vec![]).unwrap());
        let input = format!("{good}\n{{\"conv_id\": 3}}\n");
        match read_canonical(input.as_bytes(), "x", Provenance::Human) {
            Err(CorpusError::Line { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_dataset_writes_empty_stream() {
        let mut buf = Vec::new();
        write_canonical(&Dataset::empty("e", Provenance::Human), &mut buf).unwrap();
        assert!(buf.is_empty());
        let back = read_canonical(&buf[..], "e", Provenance::Human).unwrap();
        assert!(back.conversations.is_empty());
    }

    #[test]
    fn length_filter_is_inclusive() {
        let words = |n: usize| vec!["w"; n].join(" ");
        let docs = vec![
            doc("a", &words(249)),
            doc("b", &words(250)),
            doc("c", &words(550)),
            doc("d", &words(551)),
        ];
        let kept: Vec<_> = filter_passages_by_length(docs, 250, 550)
            .iter()
            .map(|d| d.doc_id().to_owned())
            .collect();
        assert_eq!(kept, ["b", "c"]);
    }

    #[test]
    fn strip_suffix_only_removes_trailing_marker() {
        assert_eq!(strip_cannotanswer_suffix("a b. CANNOTANSWER"), "a b.");
        assert_eq!(strip_cannotanswer_suffix("a b."), "a b.");
    }
}
