//! Builds mock replies that drive the loop along a planned path.
//!
//! Useful for fixtures and tests: describe what each iteration should produce
//! and get back the reply queues, in call order, for the reasoning and
//! reflection backends.

use serde::{Deserialize, Serialize};

use super::LoopConfig;
use crate::gateway::tags::wrap;
use crate::gateway::Reply;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedStep {
    pub content: String,
    pub feedback: String,
    pub rating: u8,
}

impl PlannedStep {
    pub fn new(content: impl Into<String>, feedback: impl Into<String>, rating: u8) -> Self {
        PlannedStep {
            content: content.into(),
            feedback: feedback.into(),
            rating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationPlan {
    pub hypotheses: Vec<String>,
    /// At most `steps_per_iteration`; discussion ends after the last one.
    pub steps: Vec<PlannedStep>,
    pub ranking: Vec<String>,
    pub diagnosis: Option<String>,
    /// Used only when the loop will ask for knowledge after this iteration.
    #[serde(default)]
    pub knowledge_request: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopPlan {
    pub facts: Vec<String>,
    pub iterations: Vec<IterationPlan>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Reasoning,
    Reflection,
}

impl LoopPlan {
    /// All replies in the order the loop will request them.
    pub fn calls(&self, config: &LoopConfig) -> Vec<(Role, Reply)> {
        let mut out = vec![(Role::Reasoning, Reply::text(wrap("Reasoning", &self.facts.join("\n"))))];
        for (i, iteration) in self.iterations.iter().enumerate() {
            out.push((
                Role::Reasoning,
                Reply::text(wrap("Reasoning", &iteration.hypotheses.join("\n"))),
            ));
            let steps = iteration.steps.len().min(config.steps_per_iteration);
            for (j, step) in iteration.steps.iter().take(steps).enumerate() {
                out.push((Role::Reasoning, Reply::text(wrap("Reasoning", &step.content))));
                out.push((
                    Role::Reflection,
                    Reply::text(format!(
                        "{}\n{}",
                        wrap("Feedback", &step.feedback),
                        wrap("Rating", &step.rating.to_string())
                    )),
                ));
                let done = if j + 1 == steps { "yes" } else { "no" };
                out.push((Role::Reasoning, Reply::text(wrap("Decision", done))));
            }
            out.push((
                Role::Reasoning,
                Reply::text(wrap("Reasoning", &iteration.ranking.join("\n"))),
            ));
            match &iteration.diagnosis {
                Some(d) => {
                    out.push((
                        Role::Reasoning,
                        Reply::text(format!("{}{}", wrap("Decision", "yes"), wrap("Diagnosis", d))),
                    ));
                    break;
                }
                None => out.push((Role::Reasoning, Reply::text(wrap("Decision", "no")))),
            }
            let iterations_done = i + 1;
            if iterations_done >= config.max_iterations || i >= config.max_knowledge_requests {
                break;
            }
            let request = iteration.knowledge_request.as_deref().unwrap_or("more information");
            out.push((Role::Reasoning, Reply::text(wrap("Request", request))));
        }
        out
    }

    /// Reply queues for separate reasoning and reflection backends.
    pub fn replies(&self, config: &LoopConfig) -> (Vec<Reply>, Vec<Reply>) {
        let mut reasoning = Vec::new();
        let mut reflection = Vec::new();
        for (role, reply) in self.calls(config) {
            match role {
                Role::Reasoning => reasoning.push(reply),
                Role::Reflection => reflection.push(reply),
            }
        }
        (reasoning, reflection)
    }

    /// Single queue for when one backend plays both roles.
    pub fn interleaved(&self, config: &LoopConfig) -> Vec<Reply> {
        self.calls(config).into_iter().map(|(_, r)| r).collect()
    }

    pub fn call_count(&self, config: &LoopConfig) -> usize {
        self.calls(config).len()
    }
}
