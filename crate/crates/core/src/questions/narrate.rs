use std::collections::HashSet;
use std::sync::OnceLock;

use regex::Regex;

use super::{Outcome, QuestionError};
use crate::gateway::template::NARRATE;
use crate::gateway::{parse_tagged, CompletionRequest, Gateway};
use crate::model::sft::find_tag_literal;
use crate::model::{ReasoningTrace, Rejection};

pub const STAGE: &str = "narrate";
pub const TRANSITION_WORDS: [&str; 6] = ["furthermore", "therefore", "then", "wait", "so", "however"];
pub const MIN_SCALE: f64 = 0.5;
pub const MAX_SCALE: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NarrationViolation {
    #[error("monologue has {words} words, outside [0.5, 2] x {reference}")]
    Scale { words: usize, reference: usize },
    #[error("duplicate sentence `{0}`")]
    DuplicateSentence(String),
    #[error("final answer `{0}` missing")]
    MissingAnswer(String),
    #[error("{transitions} transition words for {sentences} sentences")]
    TooFewTransitions { transitions: usize, sentences: usize },
    #[error("rejected step {0} appears in the monologue")]
    RejectedStep(usize),
    #[error("monologue contains tag literal `{0}`")]
    TagLiteral(&'static str),
}

fn sentence_break() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"[.!?]+(?:\s+|$)|\n+").unwrap())
}

fn transition() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(&format!(r"(?i)\b(?:{})\b", TRANSITION_WORDS.join("|"))).unwrap())
}

pub fn word_count(text: &str) -> usize {
    text.split_whitespace().count()
}

pub fn sentences(text: &str) -> Vec<&str> {
    sentence_break()
        .split(text)
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .collect()
}

pub fn count_transitions(text: &str) -> usize {
    transition().find_iter(text).count()
}

fn normalize_sentence(s: &str) -> String {
    s.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Checks a monologue against the trace it narrates. Pure, so stored
/// narrations can be re-validated.
pub fn check_narration(think: &str, trace: &ReasoningTrace) -> Result<(), NarrationViolation> {
    if let Some(tag) = find_tag_literal(think) {
        return Err(NarrationViolation::TagLiteral(tag));
    }
    let reference: usize = trace.accepted_steps().map(|s| word_count(&s.content)).sum();
    let words = word_count(think);
    let ratio = words as f64 / reference.max(1) as f64;
    if !(MIN_SCALE..=MAX_SCALE).contains(&ratio) {
        return Err(NarrationViolation::Scale { words, reference });
    }
    let all = sentences(think);
    let mut seen = HashSet::new();
    for s in &all {
        if !seen.insert(normalize_sentence(s)) {
            return Err(NarrationViolation::DuplicateSentence(s.to_string()));
        }
    }
    if !think.contains(&trace.final_answer) {
        return Err(NarrationViolation::MissingAnswer(trace.final_answer.clone()));
    }
    let transitions = count_transitions(think);
    if 3 * transitions < all.len() {
        return Err(NarrationViolation::TooFewTransitions {
            transitions,
            sentences: all.len(),
        });
    }
    let lower = think.to_lowercase();
    let accepted: Vec<String> = trace.accepted_steps().map(|s| s.content.to_lowercase()).collect();
    for step in trace.rejected_steps() {
        let content = step.content.trim().to_lowercase();
        if content.is_empty() || accepted.iter().any(|a| a.contains(&content)) {
            continue;
        }
        if lower.contains(&content) {
            return Err(NarrationViolation::RejectedStep(step.index));
        }
    }
    Ok(())
}

/// Rewrites a trace's accepted steps into one first-person monologue.
pub fn narrate_first_person(
    gateway: &Gateway,
    backend: &str,
    trace: &ReasoningTrace,
    question: &str,
) -> Result<Outcome<String>, QuestionError> {
    let steps: Vec<&str> = trace.accepted_steps().map(|s| s.content.as_str()).collect();
    if steps.is_empty() {
        return Err(QuestionError::Precondition(format!(
            "trace {} has no accepted steps",
            trace.seed_id
        )));
    }
    if trace.final_answer.trim().is_empty() {
        return Err(QuestionError::Precondition(format!(
            "trace {} has no final answer",
            trace.seed_id
        )));
    }
    let steps = steps.join("\n");
    let prompt = gateway.templates().render(
        NARRATE,
        [
            ("final_answer", trace.final_answer.as_str()),
            ("question", question),
            ("steps", steps.as_str()),
        ],
    )?;
    let mut reason = String::new();
    for _ in 0..2 {
        let reply =
            gateway.complete(&CompletionRequest::new(backend, prompt.clone()).with_session(trace.seed_id.clone()))?;
        let think = match parse_tagged(&reply, "Monologue") {
            Ok(t) => t,
            Err(e) => {
                reason = e.to_string();
                continue;
            }
        };
        match check_narration(think, trace) {
            Ok(()) => return Ok(Outcome::Accepted(think.to_string())),
            Err(e) => reason = e.to_string(),
        }
    }
    Ok(Outcome::Rejected(Rejection::new(STAGE, &trace.seed_id, reason)))
}
