//! Input serialization for the four agent roles.
//!
//! Layouts:
//!
//! | role         | `text`                                                        |
//! |--------------|---------------------------------------------------------------|
//! | `cae`        | `c [SEP] q_{t-1} [SEP] a_{t-1}` (first turn: `c`)             |
//! | `cqg_answer` | `c' <sep> q_1 <sep> a_1 ... a_{t-1} <mask> a_t <sep>`         |
//! | `cqg_prior`  | `title <sep> section <sep> abstract <sep> q_1 ... a_{t-1} <mask>` |
//! | `caf`        | `title [SEP] section [SEP] q_1 [SEP] a_1 ... [SEP] q_t`       |
//!
//! `c'` is the passage with the target span wrapped in `<hl>` markers. The
//! prior-grounded builder takes no passage argument at all.

use super::{AgentError, PromptBundle, PromptMeta, Role};
use crate::corpus::{char_to_byte, AnswerSpan, BackgroundInfo, QAPair};
use crate::textnorm::CANNOTANSWER;

pub const SEP: &str = "<sep>";
pub const MASK: &str = "<mask>";
pub const HIGHLIGHT: &str = "<hl>";
pub const ENCODER_SEP: &str = "[SEP]";

fn answer_text(answer: &AnswerSpan) -> &str {
    if answer.is_unanswerable {
        CANNOTANSWER
    } else {
        &answer.text
    }
}

fn history_segments(history: &[QAPair]) -> impl Iterator<Item = &str> {
    history
        .iter()
        .flat_map(|t| [t.question.as_str(), answer_text(&t.answer)])
}

fn bundle(role: Role, text: String, context: Option<&str>, meta: PromptMeta) -> PromptBundle {
    PromptBundle {
        role,
        text,
        context: context.map(str::to_owned),
        top_k: None,
        meta,
    }
}

/// Extractor input: the passage, then the previous pair if there is one.
pub fn build_cae_input(passage: &str, prev_turn: Option<&QAPair>, meta: PromptMeta) -> PromptBundle {
    let text = match prev_turn {
        None => passage.to_owned(),
        Some(prev) => format!(
            "{passage} {ENCODER_SEP} {} {ENCODER_SEP} {}",
            prev.question,
            answer_text(&prev.answer)
        ),
    };
    bundle(Role::Cae, text, Some(passage), meta)
}

/// Wraps the target occurrence at its stored offset in `<hl>` markers.
pub fn highlight_span(passage: &str, target: &AnswerSpan) -> Result<String, AgentError> {
    if target.is_unanswerable {
        return Err(AgentError::Prompt(
            "cannot highlight an unanswerable target".into(),
        ));
    }
    let start = target
        .start
        .ok_or_else(|| AgentError::Prompt("target span has no offset".into()))?;
    if !target.verify(passage) {
        return Err(AgentError::Prompt(format!(
            "target {:?} is not located at char offset {start}",
            target.text
        )));
    }
    let begin = char_to_byte(passage, start).expect("verified offset");
    let end = begin + target.text.len();
    Ok(format!(
        "{}{HIGHLIGHT} {} {HIGHLIGHT}{}",
        &passage[..begin],
        &passage[begin..end],
        &passage[end..]
    ))
}

/// Answer-grounded question generator input.
pub fn build_cqg_answer_prompt(
    passage: &str,
    history: &[QAPair],
    target: &AnswerSpan,
    meta: PromptMeta,
) -> Result<PromptBundle, AgentError> {
    let marked = highlight_span(passage, target)?;
    let mut parts: Vec<&str> = vec![&marked, SEP];
    let hist: Vec<&str> = history_segments(history).collect();
    let joined = hist.join(&format!(" {SEP} "));
    if !hist.is_empty() {
        parts.push(&joined);
    }
    parts.extend([MASK, &target.text, SEP]);
    Ok(bundle(Role::CqgAnswer, parts.join(" "), None, meta))
}

/// Prior-grounded question generator input. Only the background and the
/// dialogue history are read; there is no passage to leak.
pub fn build_cqg_prior_prompt(
    background: &BackgroundInfo,
    history: &[QAPair],
    meta: PromptMeta,
) -> PromptBundle {
    let mut parts: Vec<&str> = vec![
        background.title(),
        SEP,
        background.section_title(),
        SEP,
        background.abstract_text(),
        SEP,
    ];
    let hist: Vec<&str> = history_segments(history).collect();
    let joined = hist.join(&format!(" {SEP} "));
    if !hist.is_empty() {
        parts.push(&joined);
    }
    parts.push(MASK);
    bundle(Role::CqgPrior, parts.join(" "), None, meta)
}

/// Answer finder input: titles and history prepended to the question,
/// paired with the passage as context.
pub fn build_caf_input(
    question: &str,
    passage: &str,
    history: &[QAPair],
    background: &BackgroundInfo,
    meta: PromptMeta,
) -> PromptBundle {
    let segments: Vec<&str> = [background.title(), background.section_title()]
        .into_iter()
        .chain(history_segments(history))
        .chain(std::iter::once(question))
        .collect();
    let text = segments.join(&format!(" {ENCODER_SEP} "));
    bundle(Role::Caf, text, Some(passage), meta)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> PromptMeta {
        PromptMeta {
            conv_id: "c".into(),
            turn_index: 1,
        }
    }

    fn pair(t: usize, q: &str, a: AnswerSpan) -> QAPair {
        QAPair {
            turn_index: t,
            question: q.into(),
            answer: a,
        }
    }

    fn bg() -> BackgroundInfo {
        BackgroundInfo::new("Thor Heyerdahl", "Kon-Tiki expedition", "A Norwegian adventurer.").unwrap()
    }

    const PASSAGE: &str = "The raft sailed west. The raft sank.";

    #[test]
    fn cae_first_and_later_turns() {
        let first = build_cae_input(PASSAGE, None, meta());
        assert_eq!(first.text, PASSAGE);
        assert_eq!(first.role, Role::Cae);
        let prev = pair(1, "Where did it go?", AnswerSpan::at("sailed west", 9));
        assert_eq!(
            build_cae_input(PASSAGE, Some(&prev), meta()).text,
            format!("{PASSAGE} [SEP] Where did it go? [SEP] sailed west")
        );
        let prev = pair(1, "Why?", AnswerSpan::unanswerable());
        assert!(build_cae_input(PASSAGE, Some(&prev), meta())
            .text
            .ends_with("[SEP] Why? [SEP] CANNOTANSWER"));
    }

    #[test]
    fn cqg_answer_layout() {
        let target = AnswerSpan::at("sailed west", 9);
        let empty = build_cqg_answer_prompt(PASSAGE, &[], &target, meta()).unwrap();
        assert_eq!(
            empty.text,
            "The raft <hl> sailed west <hl>. The raft sank. <sep> <mask> sailed west <sep>"
        );
        let hist = [pair(1, "What happened?", AnswerSpan::at("The raft sank", 22))];
        let one = build_cqg_answer_prompt(PASSAGE, &hist, &target, meta()).unwrap();
        assert_eq!(
            one.text,
            "The raft <hl> sailed west <hl>. The raft sank. <sep> What happened? <sep> The raft sank <mask> sailed west <sep>"
        );
    }

    #[test]
    fn cqg_answer_highlights_only_the_offset_occurrence() {
        let target = AnswerSpan::at("The raft", 22);
        let b = build_cqg_answer_prompt(PASSAGE, &[], &target, meta()).unwrap();
        assert!(b.text.starts_with("The raft sailed west. <hl> The raft <hl> sank."));
        let misplaced = AnswerSpan::at("The raft", 3);
        assert!(build_cqg_answer_prompt(PASSAGE, &[], &misplaced, meta()).is_err());
        assert!(build_cqg_answer_prompt(PASSAGE, &[], &AnswerSpan::unanswerable(), meta()).is_err());
    }

    #[test]
    fn cqg_prior_layout() {
        let empty = build_cqg_prior_prompt(&bg(), &[], meta());
        assert_eq!(
            empty.text,
            "Thor Heyerdahl <sep> Kon-Tiki expedition <sep> A Norwegian adventurer. <sep> <mask>"
        );
        let hist = [
            pair(1, "Q1?", AnswerSpan::at("The raft", 0)),
            pair(2, "Q2?", AnswerSpan::unanswerable()),
        ];
        let two = build_cqg_prior_prompt(&bg(), &hist, meta());
        assert!(two
            .text
            .ends_with("<sep> Q1? <sep> The raft <sep> Q2? <sep> CANNOTANSWER <mask>"));
        assert!(two.context.is_none());
    }

    #[test]
    fn cqg_prior_keeps_empty_segments() {
        let sparse = BackgroundInfo::new("T", "", "").unwrap();
        assert_eq!(
            build_cqg_prior_prompt(&sparse, &[], meta()).text,
            "T <sep>  <sep>  <sep> <mask>"
        );
    }

    #[test]
    fn caf_layout() {
        let b = build_caf_input("Did it sink?", PASSAGE, &[], &bg(), meta());
        assert_eq!(b.text, "Thor Heyerdahl [SEP] Kon-Tiki expedition [SEP] Did it sink?");
        assert_eq!(b.context.as_deref(), Some(PASSAGE));
        let hist = [pair(1, "Q1?", AnswerSpan::unanswerable())];
        let b = build_caf_input("Did it sink?", PASSAGE, &hist, &bg(), meta());
        assert_eq!(
            b.text,
            "Thor Heyerdahl [SEP] Kon-Tiki expedition [SEP] Q1? [SEP] CANNOTANSWER [SEP] Did it sink?"
        );
    }
}
