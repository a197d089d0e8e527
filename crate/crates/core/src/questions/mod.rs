//! Seed preparation and SFT record construction.
//!
//! Seeds are rewritten into open questions, triaged by a model panel into
//! easy and hard, and sampled into a training pool. Traces from the expert
//! loop whose answer checks out are narrated in the first person and emitted
//! as `<think>…</think><answer>…</answer>` records.

mod narrate;
mod rewrite;
mod triage;

use std::collections::HashMap;

use rayon::prelude::*;

pub use narrate::{
    check_narration, count_transitions, narrate_first_person, sentences, word_count, NarrationViolation,
    TRANSITION_WORDS,
};
pub use rewrite::{check_open_stem, contains_phrase, rewrite_open};
pub use triage::{
    sample_training_pool, triage_difficulty, TriageOutcome, TriagePanel, Vote, VotingRule, DEFAULT_EASY_FRACTION,
};

use crate::expert::{ExpertError, Experts, KnowledgeProvider, LoopConfig};
use crate::gateway::{GatewayError, TemplateError};
use crate::model::sft::{render_target, TargetError};
use crate::model::{Narration, OpenQuestion, QuestionSeed, ReasoningTrace, Rejection, SftRecord, Termination};
use crate::preference::{map_text, AnswerMapping};

pub mod stages {
    pub use super::narrate::STAGE as NARRATE;
    pub use super::rewrite::STAGE as REWRITE;
    pub const ANSWER_CHECK: &str = "answer-check";
}

#[derive(Debug, thiserror::Error)]
pub enum QuestionError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error(transparent)]
    Expert(#[from] ExpertError),
    #[error(transparent)]
    Target(#[from] TargetError),
}

/// A stage result that either passed validation or was set aside.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome<T> {
    Accepted(T),
    Rejected(Rejection),
}

impl<T> Outcome<T> {
    pub fn accepted(self) -> Option<T> {
        match self {
            Outcome::Accepted(v) => Some(v),
            Outcome::Rejected(_) => None,
        }
    }
}

/// Builds an SFT record whose target is exactly `<think>T</think><answer>A</answer>`.
pub fn emit_sft(input: &str, think: &str, answer: &str) -> Result<SftRecord, QuestionError> {
    if input.trim().is_empty() {
        return Err(QuestionError::Precondition("input is empty".into()));
    }
    render_target(think, answer)?;
    Ok(SftRecord {
        input: input.to_string(),
        think: think.to_string(),
        answer: answer.to_string(),
    })
}

/// Only diagnosed traces whose answer maps to the correct option may train.
pub fn check_trace_answer(trace: &ReasoningTrace, seed: &QuestionSeed) -> Result<(), String> {
    if trace.termination != Termination::Diagnosed {
        return Err(format!("trace ended with {:?}", trace.termination));
    }
    match map_text(&trace.final_answer, &seed.options) {
        AnswerMapping::Mapped(l) if l == seed.correct_label => Ok(()),
        AnswerMapping::Mapped(l) => Err(format!("final answer maps to {l}, expected {}", seed.correct_label)),
        other => Err(format!("final answer `{}` unmapped ({other:?})", trace.final_answer)),
    }
}

/// The question text a seed is reasoned and trained on.
pub fn question_text<'a>(seed: &'a QuestionSeed, open: Option<&'a OpenQuestion>) -> &'a str {
    open.map(|o| o.open_stem.as_str()).unwrap_or(&seed.stem)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub loop_config: LoopConfig,
    pub narrator: String,
}

/// Everything one seed produced on its way to an SFT record.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SeedResult {
    pub trace: Option<ReasoningTrace>,
    pub narration: Option<Narration>,
    pub sft: Option<SftRecord>,
    pub rejection: Option<Rejection>,
}

/// Runs loop, answer check, narration and emission for one seed.
pub fn synthesize_seed(
    gateway: &crate::gateway::Gateway,
    config: &SynthConfig,
    seed: &QuestionSeed,
    open: Option<&OpenQuestion>,
    knowledge: &dyn KnowledgeProvider,
) -> Result<SeedResult, QuestionError> {
    let question = question_text(seed, open);
    let trace = Experts::new(gateway, &config.loop_config)
        .with_session(seed.id.clone())
        .run_loop(seed, open, knowledge)?;
    let mut result = SeedResult::default();
    if let Err(reason) = check_trace_answer(&trace, seed) {
        result.rejection = Some(Rejection::new(stages::ANSWER_CHECK, &seed.id, reason));
        result.trace = Some(trace);
        return Ok(result);
    }
    if trace.accepted_steps().next().is_none() {
        result.rejection = Some(Rejection::new(stages::NARRATE, &seed.id, "no accepted steps"));
        result.trace = Some(trace);
        return Ok(result);
    }
    match narrate_first_person(gateway, &config.narrator, &trace, question)? {
        Outcome::Accepted(think) => {
            result.sft = Some(emit_sft(question, &think, &trace.final_answer)?);
            result.narration = Some(Narration {
                seed_id: seed.id.clone(),
                think,
            });
        }
        Outcome::Rejected(r) => result.rejection = Some(r),
    }
    result.trace = Some(trace);
    Ok(result)
}

/// Synthesizes every seed in parallel on the current rayon pool. Results
/// come back ordered by seed id.
pub fn synthesize(
    gateway: &crate::gateway::Gateway,
    config: &SynthConfig,
    seeds: &[QuestionSeed],
    open: &HashMap<String, OpenQuestion>,
    knowledge: &dyn KnowledgeProvider,
) -> Vec<(String, Result<SeedResult, QuestionError>)> {
    let mut ordered: Vec<&QuestionSeed> = seeds.iter().collect();
    ordered.sort_by(|a, b| a.id.cmp(&b.id));
    ordered
        .par_iter()
        .map(|seed| {
            let result = synthesize_seed(gateway, config, seed, open.get(&seed.id), knowledge);
            (seed.id.clone(), result)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SynthOutput {
    pub traces: Vec<ReasoningTrace>,
    pub narrations: Vec<Narration>,
    pub sft: Vec<SftRecord>,
    pub rejections: Vec<Rejection>,
}

/// End-to-end seeds-to-SFT run; the first seed-level error aborts.
pub fn run_sft_pipeline(
    gateway: &crate::gateway::Gateway,
    config: &SynthConfig,
    seeds: &[QuestionSeed],
    open: &HashMap<String, OpenQuestion>,
    knowledge: &dyn KnowledgeProvider,
) -> Result<SynthOutput, QuestionError> {
    let mut out = SynthOutput::default();
    for (_, result) in synthesize(gateway, config, seeds, open, knowledge) {
        let r = result?;
        out.traces.extend(r.trace);
        out.narrations.extend(r.narration);
        out.sft.extend(r.sft);
        out.rejections.extend(r.rejection);
    }
    Ok(out)
}
