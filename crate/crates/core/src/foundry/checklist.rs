use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Consultation,
    Diagnostic,
    Question,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChecklistCriterion {
    pub id: String,
    pub category: Category,
    pub text: String,
}

const CRITERIA: [(&str, Category, &str); 10] = [
    (
        "consultation-omitted-questions",
        Category::Consultation,
        "The consultation left out questions needed to reach the diagnosis.",
    ),
    (
        "consultation-allergy-before-treatment",
        Category::Consultation,
        "Allergy history was not taken before a treatment was proposed.",
    ),
    (
        "consultation-routine-safety-history",
        Category::Consultation,
        "Routine safety history (pregnancy, medication, chronic illness) was not asked where relevant.",
    ),
    (
        "diagnostic-error",
        Category::Diagnostic,
        "The keyed diagnosis is wrong for the presented case.",
    ),
    (
        "diagnostic-primary-overlooked",
        Category::Diagnostic,
        "A secondary condition is keyed while the primary one is missed.",
    ),
    (
        "diagnostic-subtype-specificity",
        Category::Diagnostic,
        "The diagnosis is too vague or names the wrong subtype.",
    ),
    (
        "diagnostic-basis-sufficiency",
        Category::Diagnostic,
        "The record does not give enough findings to support the diagnosis.",
    ),
    (
        "question-dialogue-relevance",
        Category::Question,
        "The question drifts from what the dialogue actually contains.",
    ),
    (
        "distractor-rationality",
        Category::Question,
        "Distractors are implausible, overlapping or not mutually exclusive.",
    ),
    (
        "question-information-sufficiency",
        Category::Question,
        "The question stem lacks the information needed to answer it.",
    ),
];

/// The review checklist, in display order.
pub fn checklist() -> Vec<ChecklistCriterion> {
    CRITERIA
        .iter()
        .map(|(id, category, text)| ChecklistCriterion {
            id: id.to_string(),
            category: *category,
            text: text.to_string(),
        })
        .collect()
}

pub fn is_known_criterion(id: &str) -> bool {
    CRITERIA.iter().any(|(c, _, _)| *c == id)
}
