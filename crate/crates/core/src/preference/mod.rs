//! Rejection-sampled preference pairs.
//!
//! Each seed's open input is sampled `k` times at high temperature. Responses
//! whose answer maps to the correct option are good, those mapping to another
//! option are bad, and unmapped ones are set aside. A judge scores every mapped
//! response; the best good and the worst bad (within the most common wrong
//! option) form the pair.

use std::collections::HashMap;

use crate::gateway::template::JUDGE_SCORE;
use crate::gateway::{parse_tagged, CompletionRequest, Gateway, GatewayError, TemplateError};
use crate::model::sft::parse_target;
use crate::model::{Label, OptionMap, PreferenceMeta, PreferenceRecord, QuestionSeed};

pub const DEFAULT_K: usize = 20;
pub const DEFAULT_TEMPERATURE: f64 = 1.2;
pub const MAX_SCORE: u8 = 10;

#[derive(Debug, thiserror::Error)]
pub enum PreferenceError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

/// How an answer text relates to a question's options.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum AnswerMapping {
    Mapped(Label),
    NoAnswerBlock,
    NoMatch,
    Ambiguous(Vec<Label>),
}

impl AnswerMapping {
    pub fn label(&self) -> Option<Label> {
        match self {
            AnswerMapping::Mapped(l) => Some(*l),
            _ => None,
        }
    }
}

/// Case-folds, trims, drops terminal punctuation and collapses whitespace.
pub fn normalize_answer(text: &str) -> String {
    let folded = text.to_lowercase();
    let collapsed = folded.split_whitespace().collect::<Vec<_>>().join(" ");
    collapsed
        .trim_end_matches(['.', ',', ';', ':', '!', '?'])
        .trim_end()
        .to_string()
}

/// Maps free answer text to the unique option it equals, contains or is contained in.
pub fn map_text(answer: &str, options: &OptionMap) -> AnswerMapping {
    let answer = normalize_answer(answer);
    if answer.is_empty() {
        return AnswerMapping::NoMatch;
    }
    let hits: Vec<Label> = options
        .iter()
        .filter(|(_, text)| {
            let option = normalize_answer(text);
            !option.is_empty() && (option == answer || option.contains(&answer) || answer.contains(&option))
        })
        .map(|(label, _)| label)
        .collect();
    match hits.as_slice() {
        [] => AnswerMapping::NoMatch,
        [one] => AnswerMapping::Mapped(*one),
        _ => AnswerMapping::Ambiguous(hits),
    }
}

/// Extracts the `<answer>` block of a response and maps it onto the options.
pub fn map_answer(response: &str, options: &OptionMap) -> AnswerMapping {
    match parse_tagged(response, "answer") {
        Ok(answer) => map_text(answer, options),
        Err(_) => AnswerMapping::NoAnswerBlock,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledResponse {
    /// Call ordinal within the group.
    pub index: usize,
    pub text: String,
    pub mapping: AnswerMapping,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleOutcome {
    pub responses: Vec<SampledResponse>,
    pub warnings: Vec<String>,
}

/// Makes exactly `k` completion calls; failed calls and responses outside
/// the target grammar become warnings.
pub fn sample_k(
    gateway: &Gateway,
    backend: &str,
    seed: &QuestionSeed,
    input: &str,
    k: usize,
    temperature: f64,
) -> Result<SampleOutcome, PreferenceError> {
    if k < 2 {
        return Err(PreferenceError::Precondition(format!("k must be >= 2, got {k}")));
    }
    let mut outcome = SampleOutcome::default();
    for index in 0..k {
        let request = CompletionRequest::new(backend, input)
            .with_temperature(temperature)
            .with_session(seed.id.clone());
        match gateway.complete(&request) {
            Ok(text) => {
                let text = text.trim().to_string();
                if let Err(e) = parse_target(&text) {
                    outcome
                        .warnings
                        .push(format!("{}: response {index} malformed: {e}", seed.id));
                    continue;
                }
                let mapping = map_answer(&text, &seed.options);
                outcome.responses.push(SampledResponse { index, text, mapping });
            }
            Err(e) => outcome
                .warnings
                .push(format!("{}: response {index} failed: {e}", seed.id)),
        }
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Score {
    pub value: f64,
    /// Set when the judge never produced a valid score and 0 was assigned.
    pub flagged: bool,
}

fn parse_score(reply: &str) -> Option<u8> {
    let inner = parse_tagged(reply, "Score").ok()?;
    inner.parse::<u8>().ok().filter(|s| *s <= MAX_SCORE)
}

/// Judge score in 0..=10; one re-ask, then 0 with a flag. The judge does not
/// see the ground truth.
pub fn score_response(
    gateway: &Gateway,
    judge: &str,
    session: &str,
    input: &str,
    response: &str,
) -> Result<Score, PreferenceError> {
    let prompt = gateway
        .templates()
        .render(JUDGE_SCORE, [("input", input), ("response", response)])?;
    for _ in 0..2 {
        let reply = gateway.complete(&CompletionRequest::new(judge, prompt.clone()).with_session(session))?;
        if let Some(score) = parse_score(&reply) {
            return Ok(Score {
                value: f64::from(score),
                flagged: false,
            });
        }
    }
    Ok(Score {
        value: 0.0,
        flagged: true,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoredResponse {
    pub index: usize,
    pub text: String,
    pub label: Option<Label>,
    pub score: f64,
}

/// Highest score, lowest index on ties.
fn best<'a>(pool: impl Iterator<Item = &'a ScoredResponse>) -> Option<&'a ScoredResponse> {
    pool.fold(None, |acc: Option<&ScoredResponse>, r| match acc {
        Some(a) if a.score > r.score || (a.score == r.score && a.index <= r.index) => Some(a),
        _ => Some(r),
    })
}

/// Lowest score, lowest index on ties.
fn worst<'a>(pool: impl Iterator<Item = &'a ScoredResponse>) -> Option<&'a ScoredResponse> {
    pool.fold(None, |acc: Option<&ScoredResponse>, r| match acc {
        Some(a) if a.score < r.score || (a.score == r.score && a.index <= r.index) => Some(a),
        _ => Some(r),
    })
}

/// Most frequent incorrect label; ties go to the label seen first by index.
fn modal_incorrect(bad: &[&ScoredResponse]) -> Option<Label> {
    let mut counts: HashMap<Label, (usize, usize)> = HashMap::new();
    for r in bad {
        let label = r.label.expect("bad responses are mapped");
        let entry = counts.entry(label).or_insert((0, r.index));
        entry.0 += 1;
        entry.1 = entry.1.min(r.index);
    }
    counts
        .into_iter()
        .max_by(|(_, (ca, fa)), (_, (cb, fb))| ca.cmp(cb).then(fb.cmp(fa)))
        .map(|(label, _)| label)
}

/// Selects chosen and rejected responses, or nothing unless both good and
/// bad responses exist.
pub fn build_pair(correct: Label, input: &str, responses: &[ScoredResponse]) -> Option<PreferenceRecord> {
    let good: Vec<&ScoredResponse> = responses.iter().filter(|r| r.label == Some(correct)).collect();
    let bad: Vec<&ScoredResponse> = responses
        .iter()
        .filter(|r| r.label.is_some_and(|l| l != correct))
        .collect();
    let chosen = best(good.iter().copied())?;
    let modal = modal_incorrect(&bad)?;
    let rejected = worst(bad.iter().copied().filter(|r| r.label == Some(modal)))?;
    Some(PreferenceRecord {
        input: input.to_string(),
        chosen: chosen.text.clone(),
        rejected: rejected.text.clone(),
        meta: PreferenceMeta {
            chosen_score: chosen.score,
            rejected_score: rejected.score,
            chosen_label: correct,
            rejected_label: modal,
            correct_label: correct,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrefsConfig {
    pub sampler: String,
    pub judge: String,
    pub k: usize,
    pub temperature: f64,
}

impl PrefsConfig {
    pub fn new(sampler: impl Into<String>, judge: impl Into<String>) -> Self {
        PrefsConfig {
            sampler: sampler.into(),
            judge: judge.into(),
            k: DEFAULT_K,
            temperature: DEFAULT_TEMPERATURE,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GroupOutcome {
    pub record: Option<PreferenceRecord>,
    pub warnings: Vec<String>,
    /// Fewer than two usable responses; nothing was scored.
    pub skipped: bool,
}

/// Samples, scores and pairs one seed.
pub fn build_group(
    gateway: &Gateway,
    config: &PrefsConfig,
    seed: &QuestionSeed,
    input: &str,
) -> Result<GroupOutcome, PreferenceError> {
    let sampled = sample_k(gateway, &config.sampler, seed, input, config.k, config.temperature)?;
    let mut outcome = GroupOutcome {
        warnings: sampled.warnings,
        ..Default::default()
    };
    if sampled.responses.len() < 2 {
        outcome
            .warnings
            .push(format!("{}: fewer than 2 usable responses, group skipped", seed.id));
        outcome.skipped = true;
        return Ok(outcome);
    }
    let mut scored = Vec::new();
    for r in sampled.responses {
        let Some(label) = r.mapping.label() else {
            continue;
        };
        let score = score_response(gateway, &config.judge, &seed.id, input, &r.text)?;
        if score.flagged {
            outcome.warnings.push(format!(
                "{}: response {} judge score unparseable, using 0",
                seed.id, r.index
            ));
        }
        scored.push(ScoredResponse {
            index: r.index,
            text: r.text,
            label: Some(label),
            score: score.value,
        });
    }
    outcome.record = build_pair(seed.correct_label, input, &scored);
    Ok(outcome)
}
