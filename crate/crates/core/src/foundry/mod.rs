//! Benchmark construction from consultation dialogues.
//!
//! Dialogues are de-identified and deduplicated on their opening complaint.
//! Each survivor becomes an EMR, a case question and a 21-option item that
//! then waits in a three-tier review queue.

mod checklist;
mod dedup;
mod deid;
mod emr;
mod question;
mod review;
mod stats;

use rayon::prelude::*;

pub use checklist::{checklist, is_known_criterion, Category, ChecklistCriterion};
pub use dedup::{
    cosine, dedup_complaints, shingles, DedupOutcome, DropEntry, Embedder, EmbeddingCosine, Similarity, WordJaccard,
    DEFAULT_TAU,
};
pub use deid::{DeidRule, RuleMatch, RuleSet};
pub use emr::{generate_emr, parse_emr, NOT_REPORTED};
pub use question::{expand_options, fnv1a, formulate_question, propose_distractors, Vocabulary, DIAGNOSTIC_OPTIONS};
pub use review::{
    apply_review, check_decision, Clock, FixedClock, Page, ReviewDecision, ReviewError, ReviewStore, SystemClock,
    DEFAULT_PAGE_SIZE, MAX_PAGE_SIZE, MAX_TIER,
};
pub use stats::{compute_stats, stats_from, AgeBucket, FoundryStats, Share, AGE_BUCKETS};

use crate::gateway::{Gateway, GatewayError, TemplateError};
use crate::model::{DialogueRecord, FoundryItem, Record, Rejection, ReviewState, Turn};
use crate::questions::Outcome;

pub mod stages {
    pub use super::emr::STAGE as EMR;
    pub use super::question::STAGE as QUESTION;
    pub const OPTIONS: &str = "options";
    pub const DEID: &str = "deid";
    pub const VALIDATE: &str = "validate";
}

#[derive(Debug, thiserror::Error)]
pub enum FoundryError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid de-identification rule: {0}")]
    Rule(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("io: {0}")]
    Io(String),
    #[error("distractor pool too small: need {needed}, have {available}")]
    PoolTooSmall { needed: usize, available: usize },
    #[error("answer `{0}` is not in the vocabulary")]
    AnswerNotInVocabulary(String),
}

pub struct FoundryConfig {
    pub backend: String,
    pub rules: RuleSet,
    pub tau: f64,
    pub similarity: Box<dyn Similarity>,
    pub vocabulary: Vocabulary,
    pub seed: u64,
    pub nota_keyed: bool,
}

impl FoundryConfig {
    pub fn new(backend: &str, vocabulary: Vocabulary) -> Self {
        FoundryConfig {
            backend: backend.to_string(),
            rules: RuleSet::builtin(),
            tau: DEFAULT_TAU,
            similarity: Box::new(WordJaccard::default()),
            vocabulary,
            seed: 0,
            nota_keyed: false,
        }
    }
}

#[derive(Debug, Default)]
pub struct FoundryOutput {
    pub items: Vec<FoundryItem>,
    pub rejections: Vec<Rejection>,
    pub drops: Vec<DropEntry>,
}

pub fn deidentify_dialogue(dialogue: &DialogueRecord, rules: &RuleSet) -> DialogueRecord {
    DialogueRecord {
        turns: dialogue
            .turns
            .iter()
            .map(|t| Turn {
                speaker: t.speaker,
                text: rules.deidentify(&t.text),
            })
            .collect(),
        ..dialogue.clone()
    }
}

/// Every free-text field a reviewer or model will see.
fn item_texts(item: &FoundryItem) -> impl Iterator<Item = &str> {
    let emr = &item.emr;
    [
        item.question.as_str(),
        &emr.chief_complaint,
        &emr.present_illness,
        &emr.past_history,
        &emr.allergy_history,
        &emr.diagnosis,
    ]
    .into_iter()
    .chain(emr.exams.iter().map(String::as_str))
    .chain(item.options.iter().map(String::as_str))
}

fn build_one(
    gateway: &Gateway,
    config: &FoundryConfig,
    dialogue: &DialogueRecord,
) -> Result<Outcome<FoundryItem>, FoundryError> {
    let id = dialogue.id.as_str();
    let emr = match generate_emr(gateway, &config.backend, dialogue, &config.rules)? {
        Outcome::Accepted(e) => e,
        Outcome::Rejected(r) => return Ok(Outcome::Rejected(r)),
    };
    let (question, diagnosis) = match formulate_question(gateway, &config.backend, id, &emr)? {
        Outcome::Accepted(q) => q,
        Outcome::Rejected(r) => return Ok(Outcome::Rejected(r)),
    };
    let pool = propose_distractors(gateway, &config.backend, id, &question, &diagnosis, DIAGNOSTIC_OPTIONS)?;
    let (options, answer_index) = match expand_options(
        &diagnosis,
        &pool,
        &config.vocabulary,
        config.seed,
        id,
        config.nota_keyed,
    ) {
        Ok(v) => v,
        Err(e @ (FoundryError::PoolTooSmall { .. } | FoundryError::AnswerNotInVocabulary(_))) => {
            return Ok(Outcome::Rejected(Rejection::new(stages::OPTIONS, id, e.to_string())));
        }
        Err(e) => return Err(e),
    };
    let item = FoundryItem {
        id: id.to_string(),
        department: dialogue.department.clone(),
        patient: dialogue.patient,
        emr,
        question,
        options,
        answer_index,
        review: ReviewState::default(),
    };
    if let Some(m) = item_texts(&item).find_map(|t| config.rules.find_match(t)) {
        return Ok(Outcome::Rejected(Rejection::new(
            stages::DEID,
            id,
            format!("rule `{}` matches `{}`", m.rule, m.text),
        )));
    }
    if let Err(e) = item.validate() {
        return Ok(Outcome::Rejected(Rejection::new(stages::VALIDATE, id, e.to_string())));
    }
    Ok(Outcome::Accepted(item))
}

/// Dialogues to review-ready items. Items and rejections come back ordered
/// by dialogue id; the first hard error aborts the run.
pub fn build_items(
    gateway: &Gateway,
    config: &FoundryConfig,
    dialogues: &[DialogueRecord],
) -> Result<FoundryOutput, FoundryError> {
    for d in dialogues {
        d.validate()
            .map_err(|e| FoundryError::Precondition(format!("dialogue {}: {e}", d.id)))?;
    }
    let clean: Vec<DialogueRecord> = dialogues
        .iter()
        .map(|d| deidentify_dialogue(d, &config.rules))
        .collect();
    let dedup = dedup_complaints(clean, config.tau, config.similarity.as_ref())?;
    let results: Vec<_> = dedup.kept.par_iter().map(|d| build_one(gateway, config, d)).collect();
    let mut out = FoundryOutput {
        drops: dedup.dropped,
        ..Default::default()
    };
    for result in results {
        match result? {
            Outcome::Accepted(item) => out.items.push(item),
            Outcome::Rejected(r) => out.rejections.push(r),
        }
    }
    Ok(out)
}
