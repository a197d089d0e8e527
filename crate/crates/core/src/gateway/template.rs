use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("template `{template}`: missing binding for slot {slot}")]
    MissingBinding { template: String, slot: String },
    #[error("template `{template}`: binding {slot} has no matching slot")]
    ExtraBinding { template: String, slot: String },
    #[error("template `{template}`: declared slots {declared:?} differ from body slots {found:?}")]
    SlotMismatch {
        template: String,
        declared: BTreeSet<String>,
        found: BTreeSet<String>,
    },
    #[error("unknown template `{0}`")]
    Unknown(String),
    #[error("reading template {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl TemplateError {
    /// The slot named by a binding error.
    pub fn slot(&self) -> Option<&str> {
        match self {
            TemplateError::MissingBinding { slot, .. } | TemplateError::ExtraBinding { slot, .. } => Some(slot),
            _ => None,
        }
    }
}

fn slot_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap())
}

/// A prompt body with `{slot}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    name: String,
    body: String,
    required_slots: BTreeSet<String>,
}

impl PromptTemplate {
    /// Builds a template whose required slots are exactly those in `body`.
    pub fn new(name: impl Into<String>, body: impl Into<String>) -> Self {
        let body = body.into();
        let required_slots = slot_pattern().captures_iter(&body).map(|c| c[1].to_string()).collect();
        PromptTemplate {
            name: name.into(),
            body,
            required_slots,
        }
    }

    /// Builds a template and checks `slots` against the placeholders in `body`.
    pub fn with_slots<I, S>(name: impl Into<String>, body: impl Into<String>, slots: I) -> Result<Self, TemplateError>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let template = Self::new(name, body);
        let declared: BTreeSet<String> = slots.into_iter().map(Into::into).collect();
        if declared != template.required_slots {
            return Err(TemplateError::SlotMismatch {
                template: template.name,
                declared,
                found: template.required_slots,
            });
        }
        Ok(template)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn body(&self) -> &str {
        &self.body
    }

    pub fn required_slots(&self) -> &BTreeSet<String> {
        &self.required_slots
    }

    /// Substitutes every slot in a single pass; bound values are never rescanned.
    pub fn render<I, K, V>(&self, bindings: I) -> Result<String, TemplateError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        let bindings: BTreeMap<String, String> = bindings
            .into_iter()
            .map(|(k, v)| (k.as_ref().to_string(), v.as_ref().to_string()))
            .collect();
        if let Some(slot) = self.required_slots.iter().find(|s| !bindings.contains_key(*s)) {
            return Err(TemplateError::MissingBinding {
                template: self.name.clone(),
                slot: slot.clone(),
            });
        }
        if let Some(slot) = bindings.keys().find(|k| !self.required_slots.contains(*k)) {
            return Err(TemplateError::ExtraBinding {
                template: self.name.clone(),
                slot: slot.clone(),
            });
        }
        let rendered = slot_pattern().replace_all(&self.body, |caps: &regex::Captures<'_>| bindings[&caps[1]].clone());
        Ok(rendered.into_owned())
    }
}

pub const REASONING_EXPERT: &str = "reasoning_expert";
pub const REFLECTION_EXPERT: &str = "reflection_expert";
pub const REFLECTION_EXPERT_FREE: &str = "reflection_expert_free";
pub const REWRITE_OPEN: &str = "rewrite_open";
pub const NARRATE: &str = "narrate";
pub const JUDGE_SCORE: &str = "judge_score";
pub const EMR_EXTRACT: &str = "emr_extract";
pub const QUESTION_FORMULATE: &str = "question_formulate";
pub const DISTRACTORS: &str = "distractors";
pub const MCQ_NEUTRAL: &str = "mcq_neutral";

const BUILTIN: &[(&str, &str)] = &[
    (REASONING_EXPERT, include_str!("../../templates/reasoning_expert.txt")),
    (REFLECTION_EXPERT, include_str!("../../templates/reflection_expert.txt")),
    (
        REFLECTION_EXPERT_FREE,
        include_str!("../../templates/reflection_expert_free.txt"),
    ),
    (REWRITE_OPEN, include_str!("../../templates/rewrite_open.txt")),
    (NARRATE, include_str!("../../templates/narrate.txt")),
    (JUDGE_SCORE, include_str!("../../templates/judge_score.txt")),
    (EMR_EXTRACT, include_str!("../../templates/emr_extract.txt")),
    (
        QUESTION_FORMULATE,
        include_str!("../../templates/question_formulate.txt"),
    ),
    (DISTRACTORS, include_str!("../../templates/distractors.txt")),
    (MCQ_NEUTRAL, include_str!("../../templates/mcq_neutral.txt")),
];

/// Named templates used by the pipeline stages.
#[derive(Debug, Clone)]
pub struct TemplateSet {
    templates: BTreeMap<String, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self::builtin()
    }
}

impl TemplateSet {
    pub fn builtin() -> Self {
        let templates = BUILTIN
            .iter()
            .map(|(name, body)| (name.to_string(), PromptTemplate::new(*name, *body)))
            .collect();
        TemplateSet { templates }
    }

    /// Built-in templates overridden by any `<name>.txt` present in `dir`.
    /// An override must keep the slot set of the template it replaces.
    pub fn with_overrides(dir: &Path) -> Result<Self, TemplateError> {
        let mut set = Self::builtin();
        for (name, builtin) in set.templates.iter_mut() {
            let path = dir.join(format!("{name}.txt"));
            if !path.exists() {
                continue;
            }
            let body = std::fs::read_to_string(&path).map_err(|source| TemplateError::Io {
                path: path.display().to_string(),
                source,
            })?;
            *builtin = PromptTemplate::with_slots(name.clone(), body, builtin.required_slots.clone())?;
        }
        Ok(set)
    }

    pub fn insert(&mut self, template: PromptTemplate) {
        self.templates.insert(template.name.clone(), template);
    }

    pub fn get(&self, name: &str) -> Result<&PromptTemplate, TemplateError> {
        self.templates
            .get(name)
            .ok_or_else(|| TemplateError::Unknown(name.to_string()))
    }

    pub fn render<I, K, V>(&self, name: &str, bindings: I) -> Result<String, TemplateError>
    where
        I: IntoIterator<Item = (K, V)>,
        K: AsRef<str>,
        V: AsRef<str>,
    {
        self.get(name)?.render(bindings)
    }
}
