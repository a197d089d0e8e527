use serde::{Deserialize, Serialize};

use super::label::{Label, OptionMap};
use super::sft;
use super::{FieldError, Record};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeedSource {
    ExamBank,
    Synthetic,
    Literature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Difficulty {
    #[default]
    Unknown,
    Easy,
    Hard,
}

/// A closed-form MCQ with verified ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionSeed {
    pub id: String,
    pub source: SeedSource,
    pub stem: String,
    pub options: OptionMap,
    pub correct_label: Label,
    pub ground_truth: String,
    #[serde(default)]
    pub difficulty: Difficulty,
}

impl QuestionSeed {
    pub fn correct_text(&self) -> &str {
        self.options.get(self.correct_label).unwrap_or_default()
    }
}

fn nonempty(field: &str, text: &str) -> Result<(), FieldError> {
    if text.trim().is_empty() {
        Err(FieldError::new(field, "must not be empty"))
    } else {
        Ok(())
    }
}

impl Record for QuestionSeed {
    const KIND: &'static str = "question_seed";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("id", &self.id)?;
        nonempty("stem", &self.stem)?;
        nonempty("ground_truth", &self.ground_truth)?;
        self.options.check().map_err(|r| FieldError::new("options", r))?;
        if !self.options.contains(self.correct_label) {
            return Err(FieldError::new(
                "correct_label",
                format!("label {} is not among the options", self.correct_label),
            ));
        }
        Ok(())
    }
}

/// An option-free rewrite of a seed question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpenQuestion {
    pub seed_id: String,
    pub open_stem: String,
    #[serde(default)]
    pub rewrite_notes: String,
}

impl OpenQuestion {
    /// Checks the record against the seed it came from: no option text may
    /// survive verbatim in the open stem.
    pub fn check_against(&self, seed: &QuestionSeed) -> Result<(), FieldError> {
        self.validate()?;
        if let Some(text) = seed.options.texts().find(|t| self.open_stem.contains(t)) {
            return Err(FieldError::new("open_stem", format!("contains option text `{text}`")));
        }
        Ok(())
    }
}

impl Record for OpenQuestion {
    const KIND: &'static str = "open_question";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("seed_id", &self.seed_id)?;
        nonempty("open_stem", &self.open_stem)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningStep {
    pub index: usize,
    pub content: String,
    pub feedback: String,
    pub rating: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Diagnosed,
    BudgetExhausted,
    KnowledgeLimit,
}

/// Output of one dual-expert loop run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReasoningTrace {
    pub seed_id: String,
    pub known_facts: Vec<String>,
    pub hypotheses: Vec<String>,
    pub steps: Vec<ReasoningStep>,
    pub final_answer: String,
    pub termination: Termination,
    pub iterations: usize,
}

impl ReasoningTrace {
    /// Steps the reflection expert rated valid.
    pub fn accepted_steps(&self) -> impl Iterator<Item = &ReasoningStep> {
        self.steps.iter().filter(|s| s.rating == 1)
    }

    /// Steps marked for exclusion from narrated output.
    pub fn rejected_steps(&self) -> impl Iterator<Item = &ReasoningStep> {
        self.steps.iter().filter(|s| s.rating == 0)
    }
}

impl Record for ReasoningTrace {
    const KIND: &'static str = "reasoning_trace";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("seed_id", &self.seed_id)?;
        for (i, step) in self.steps.iter().enumerate() {
            if step.index != i {
                return Err(FieldError::new(
                    "steps",
                    format!("step at position {i} has index {}", step.index),
                ));
            }
            if step.rating > 1 {
                return Err(FieldError::new(
                    "steps",
                    format!("step {i} has rating {} outside {{0,1}}", step.rating),
                ));
            }
        }
        if self.termination == Termination::Diagnosed {
            nonempty("final_answer", &self.final_answer)?;
        }
        if self.iterations >= 1 && self.hypotheses.is_empty() {
            return Err(FieldError::new("hypotheses", "empty after the first iteration"));
        }
        Ok(())
    }
}

/// One supervised fine-tuning example.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub input: String,
    pub think: String,
    pub answer: String,
}

impl SftRecord {
    /// The serialized training target.
    pub fn target(&self) -> String {
        sft::render_target(&self.think, &self.answer).expect("validated SftRecord parts are tag-free and nonempty")
    }
}

impl Record for SftRecord {
    const KIND: &'static str = "sft_record";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("input", &self.input)?;
        sft::render_target(&self.think, &self.answer).map_err(|e| match e {
            sft::TargetError::TagLiteral { part, .. } | sft::TargetError::Empty(part) => {
                FieldError::new(part, e.to_string())
            }
            sft::TargetError::Grammar => FieldError::new("think", e.to_string()),
        })?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceMeta {
    pub chosen_score: f64,
    pub rejected_score: f64,
    pub chosen_label: Label,
    pub rejected_label: Label,
    pub correct_label: Label,
}

/// A chosen/rejected pair over one RL input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceRecord {
    pub input: String,
    pub chosen: String,
    pub rejected: String,
    pub meta: PreferenceMeta,
}

impl Record for PreferenceRecord {
    const KIND: &'static str = "preference_record";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("input", &self.input)?;
        sft::parse_target(&self.chosen).map_err(|e| FieldError::new("chosen", e.to_string()))?;
        sft::parse_target(&self.rejected).map_err(|e| FieldError::new("rejected", e.to_string()))?;
        let m = &self.meta;
        if m.chosen_label != m.correct_label {
            return Err(FieldError::new("meta", "chosen_label differs from correct_label"));
        }
        if m.rejected_label == m.correct_label {
            return Err(FieldError::new("meta", "rejected_label equals correct_label"));
        }
        if !m.chosen_score.is_finite() || !m.rejected_score.is_finite() {
            return Err(FieldError::new("meta", "scores must be finite"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Patient {
    pub age: u32,
    pub gender: Gender,
}

pub const MAX_AGE: u32 = 90;

impl Patient {
    fn check(&self) -> Result<(), FieldError> {
        if self.age > MAX_AGE {
            return Err(FieldError::new(
                "patient",
                format!("age {} outside [0, {MAX_AGE}]", self.age),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Speaker {
    Patient,
    Doctor,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: Speaker,
    pub text: String,
}

/// An anonymized consultation dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DialogueRecord {
    pub id: String,
    pub department: String,
    pub patient: Patient,
    pub turns: Vec<Turn>,
}

impl DialogueRecord {
    /// The opening patient utterance, which carries the chief complaint.
    pub fn opening_complaint(&self) -> &str {
        self.turns
            .iter()
            .find(|t| t.speaker == Speaker::Patient)
            .map(|t| t.text.as_str())
            .unwrap_or_default()
    }

    pub fn transcript(&self) -> String {
        self.turns
            .iter()
            .map(|t| {
                let who = match t.speaker {
                    Speaker::Patient => "Patient",
                    Speaker::Doctor => "Doctor",
                };
                format!("{who}: {}", t.text)
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

impl Record for DialogueRecord {
    const KIND: &'static str = "dialogue_record";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("id", &self.id)?;
        self.patient.check()?;
        for speaker in [Speaker::Patient, Speaker::Doctor] {
            if !self.turns.iter().any(|t| t.speaker == speaker) {
                return Err(FieldError::new(
                    "turns",
                    format!("no turn by the {speaker:?}").to_lowercase(),
                ));
            }
        }
        Ok(())
    }
}

/// Structured record extracted from a dialogue.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Emr {
    pub chief_complaint: String,
    pub present_illness: String,
    pub past_history: String,
    pub allergy_history: String,
    pub exams: Vec<String>,
    pub diagnosis: String,
}

impl Emr {
    pub fn check(&self) -> Result<(), FieldError> {
        nonempty("chief_complaint", &self.chief_complaint)?;
        nonempty("diagnosis", &self.diagnosis)
    }
}

pub const FOUNDRY_OPTION_COUNT: usize = 21;
pub const NONE_OF_THE_ABOVE: &str = "None of the above";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReviewStatus {
    Pending,
    Approved,
    Rejected,
    Final,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Approve,
    Reject,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewEntry {
    pub tier: u8,
    pub reviewer_id: String,
    pub decision: Decision,
    pub criterion: Option<String>,
    #[serde(default)]
    pub note: String,
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReviewState {
    pub tier: u8,
    pub status: ReviewStatus,
    pub history: Vec<ReviewEntry>,
    pub version: u64,
}

impl Default for ReviewState {
    fn default() -> Self {
        ReviewState {
            tier: 1,
            status: ReviewStatus::Pending,
            history: Vec::new(),
            version: 0,
        }
    }
}

/// A 21-option benchmark question under review.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoundryItem {
    pub id: String,
    pub department: String,
    pub patient: Patient,
    pub emr: Emr,
    pub question: String,
    pub options: Vec<String>,
    pub answer_index: usize,
    pub review: ReviewState,
}

impl Record for FoundryItem {
    const KIND: &'static str = "foundry_item";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("id", &self.id)?;
        nonempty("question", &self.question)?;
        self.patient.check()?;
        self.emr.check().map_err(|e| FieldError::new("emr", e.to_string()))?;
        if self.options.len() != FOUNDRY_OPTION_COUNT {
            return Err(FieldError::new(
                "options",
                format!("expected {FOUNDRY_OPTION_COUNT} options, found {}", self.options.len()),
            ));
        }
        if self.options[FOUNDRY_OPTION_COUNT - 1] != NONE_OF_THE_ABOVE {
            return Err(FieldError::new("options", "last option must be \"None of the above\""));
        }
        for (i, a) in self.options.iter().enumerate() {
            if a.trim().is_empty() {
                return Err(FieldError::new("options", format!("option {i} is empty")));
            }
            if self.options[i + 1..].iter().any(|b| b.eq_ignore_ascii_case(a)) {
                return Err(FieldError::new("options", format!("option `{a}` repeats")));
            }
        }
        if self.answer_index >= FOUNDRY_OPTION_COUNT {
            return Err(FieldError::new("answer_index", "must be in 0..=20"));
        }
        let r = &self.review;
        if !(1..=3).contains(&r.tier) {
            return Err(FieldError::new("review", format!("tier {} outside 1..=3", r.tier)));
        }
        if r.history.windows(2).any(|w| w[0].tier >= w[1].tier) {
            return Err(FieldError::new("review", "history tiers are not strictly increasing"));
        }
        if r.status == ReviewStatus::Final {
            let approvals: Vec<u8> = r
                .history
                .iter()
                .filter(|e| e.decision == Decision::Approve)
                .map(|e| e.tier)
                .collect();
            if approvals != [1, 2, 3] {
                return Err(FieldError::new("review", "final item lacks three ordered approvals"));
            }
        }
        Ok(())
    }
}

/// A stage output that did not pass its validators.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub stage: String,
    pub id: String,
    pub reason: String,
}

impl Rejection {
    pub fn new(stage: &str, id: &str, reason: impl Into<String>) -> Self {
        Rejection {
            stage: stage.to_string(),
            id: id.to_string(),
            reason: reason.into(),
        }
    }
}

impl Record for Rejection {
    const KIND: &'static str = "rejection";
}

/// A first-person monologue produced from an accepted trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Narration {
    pub seed_id: String,
    pub think: String,
}

impl Record for Narration {
    const KIND: &'static str = "narration";

    fn validate(&self) -> Result<(), FieldError> {
        nonempty("seed_id", &self.seed_id)?;
        nonempty("think", &self.think)
    }
}
