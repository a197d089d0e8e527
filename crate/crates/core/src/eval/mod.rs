//! Multiple-choice evaluation: answer extraction, accuracy and report tables.

mod report;

use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::gateway::template::MCQ_NEUTRAL;
use crate::gateway::{parse_tagged, CompletionRequest, Gateway, TemplateError};
use crate::model::{FieldError, Label, OptionMap, QuestionSeed, Record};
use crate::preference::map_text;

pub use report::{render_report, ResultsGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalItem {
    pub id: String,
    pub benchmark: String,
    pub stem: String,
    pub options: OptionMap,
    pub correct_label: Label,
}

impl Record for EvalItem {
    const KIND: &'static str = "eval_item";

    fn validate(&self) -> Result<(), FieldError> {
        if self.id.trim().is_empty() {
            return Err(FieldError::new("id", "must be nonempty"));
        }
        if self.benchmark.trim().is_empty() {
            return Err(FieldError::new("benchmark", "must be nonempty"));
        }
        if self.stem.trim().is_empty() {
            return Err(FieldError::new("stem", "must be nonempty"));
        }
        self.options.check().map_err(|e| FieldError::new("options", e))?;
        if !self.options.contains(self.correct_label) {
            return Err(FieldError::new("correct_label", "not among options"));
        }
        Ok(())
    }
}

impl From<&QuestionSeed> for EvalItem {
    fn from(seed: &QuestionSeed) -> Self {
        EvalItem {
            id: seed.id.clone(),
            benchmark: "seeds".into(),
            stem: seed.stem.clone(),
            options: seed.options.clone(),
            correct_label: seed.correct_label,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemLog {
    pub id: String,
    pub predicted: Option<Label>,
    pub correct: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalResult {
    pub benchmark: String,
    pub model: String,
    pub n_items: usize,
    pub n_correct: usize,
    pub accuracy: f64,
    pub items: Vec<ItemLog>,
}

impl EvalResult {
    /// Mean of the per-item indicators in the log.
    pub fn recomputed_accuracy(&self) -> f64 {
        if self.items.is_empty() {
            return 0.0;
        }
        self.items.iter().filter(|i| i.correct).count() as f64 / self.items.len() as f64
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error(transparent)]
    Template(#[from] TemplateError),
}

fn leading_label() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\s*(?:\(([A-U])\)|([A-U])(?:[.):]|\s*$))").unwrap())
}

/// Label chosen by a model output, if any.
///
/// An `<answer>` block holding just a label is taken as that label; other
/// answer text is mapped onto the option texts. Without an answer block a
/// leading bare label ("C", "C.", "(C)") is accepted.
pub fn extract_choice(output: &str, options: &OptionMap) -> Option<Label> {
    let parse_label = |text: &str| -> Option<Label> {
        let caps = leading_label().captures(text)?;
        let label: Label = caps.get(1).or(caps.get(2))?.as_str().parse().ok()?;
        options.contains(label).then_some(label)
    };
    match parse_tagged(output, "answer") {
        Ok(answer) => {
            let bare = answer.trim_end_matches(['.', ')']).trim_start_matches('(');
            if bare.len() == 1 {
                if let Some(label) = parse_label(bare) {
                    return Some(label);
                }
            }
            map_text(answer, options).label()
        }
        Err(_) => parse_label(output),
    }
}

pub fn render_mcq_prompt(gateway: &Gateway, stem: &str, options: &OptionMap) -> Result<String, TemplateError> {
    let listing = options
        .iter()
        .map(|(label, text)| format!("{label}. {text}"))
        .collect::<Vec<_>>()
        .join("\n");
    gateway
        .templates()
        .render(MCQ_NEUTRAL, [("stem", stem), ("options", listing.as_str())])
}

/// Runs one completion per item; items run in parallel on the current rayon
/// pool. Backend failures are logged per item and scored incorrect.
pub fn evaluate(gateway: &Gateway, backend: &str, items: &[EvalItem]) -> Result<EvalResult, EvalError> {
    let first = items
        .first()
        .ok_or_else(|| EvalError::Precondition("no items to evaluate".into()))?;
    if let Some(other) = items.iter().find(|i| i.benchmark != first.benchmark) {
        return Err(EvalError::Precondition(format!(
            "mixed benchmarks `{}` and `{}`",
            first.benchmark, other.benchmark
        )));
    }
    let logs = items
        .par_iter()
        .map(|item| -> Result<ItemLog, EvalError> {
            let prompt = render_mcq_prompt(gateway, &item.stem, &item.options)?;
            let request = CompletionRequest::new(backend, prompt).with_session(item.id.clone());
            Ok(match gateway.complete(&request) {
                Ok(output) => {
                    let predicted = extract_choice(&output, &item.options);
                    ItemLog {
                        id: item.id.clone(),
                        predicted,
                        correct: predicted == Some(item.correct_label),
                        error: None,
                    }
                }
                Err(e) => {
                    log::warn!("{}: {e}", item.id);
                    ItemLog {
                        id: item.id.clone(),
                        predicted: None,
                        correct: false,
                        error: Some(e.to_string()),
                    }
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let n_correct = logs.iter().filter(|l| l.correct).count();
    Ok(EvalResult {
        benchmark: first.benchmark.clone(),
        model: backend.to_string(),
        n_items: logs.len(),
        n_correct,
        accuracy: n_correct as f64 / logs.len() as f64,
        items: logs,
    })
}
