//! The reason/reflect loop that turns a question seed into a rated trace.
//!
//! A reasoning backend lists the known facts, proposes candidate diagnoses and
//! then extends a logical path one step at a time; a reflection backend rates
//! every step 0 or 1 with feedback. Prior steps and their feedback stay in the
//! reasoning context. Once the reasoning backend reports that every candidate
//! has been discussed, it ranks the candidates and decides whether a diagnosis
//! can be made; if not, it may request external knowledge and go again.
//!
//! In ground-truth-guided mode the reflection prompt carries the seed's
//! verified explanation; reasoning prompts never do.

mod script;

use crate::gateway::tags::{block_lines, parse_rating, parse_tagged, TagError};
use crate::gateway::template::{REASONING_EXPERT, REFLECTION_EXPERT, REFLECTION_EXPERT_FREE};
use crate::gateway::{CompletionRequest, Gateway, GatewayError, TemplateError};
use crate::model::{OpenQuestion, QuestionSeed, ReasoningStep, ReasoningTrace, Termination};

pub use script::{IterationPlan, LoopPlan, PlannedStep, Role};

/// Parse failures get this many extra calls before becoming hard errors.
pub const REASK_BUDGET: usize = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct LoopConfig {
    pub max_iterations: usize,
    pub max_knowledge_requests: usize,
    pub steps_per_iteration: usize,
    pub gt_guided: bool,
    pub reasoning_backend_id: String,
    pub reflection_backend_id: String,
    pub temperature: f64,
}

impl LoopConfig {
    pub fn new(reasoning_backend_id: impl Into<String>, reflection_backend_id: impl Into<String>) -> Self {
        LoopConfig {
            max_iterations: 4,
            max_knowledge_requests: 2,
            steps_per_iteration: 8,
            gt_guided: false,
            reasoning_backend_id: reasoning_backend_id.into(),
            reflection_backend_id: reflection_backend_id.into(),
            temperature: 0.7,
        }
    }

    pub fn check(&self) -> Result<(), ExpertError> {
        if self.max_iterations < 1 {
            return Err(ExpertError::Config("max_iterations must be >= 1".into()));
        }
        if self.steps_per_iteration < 1 {
            return Err(ExpertError::Config("steps_per_iteration must be >= 1".into()));
        }
        Ok(())
    }

    /// Upper bound on backend calls for one loop run, re-asks included.
    pub fn max_backend_calls(&self) -> usize {
        let per_call = 1 + REASK_BUDGET;
        // reason + reflect + discussed? per step; hypotheses, ranking, decision, knowledge per iteration
        let per_iteration = per_call * (3 * self.steps_per_iteration + 4);
        per_call + self.max_iterations * per_iteration
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ExpertError {
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error(transparent)]
    Template(#[from] TemplateError),
    #[error("{call}: reply unparseable after re-ask: {source}")]
    Parse {
        call: &'static str,
        #[source]
        source: TagError,
    },
    #[error("degenerate input: {0}")]
    Degenerate(&'static str),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("invalid loop configuration: {0}")]
    Config(String),
}

/// Source of extra information when no diagnosis can be made.
pub trait KnowledgeProvider: Send + Sync {
    fn provide(&self, seed: &QuestionSeed, request: &str) -> Option<String>;
}

/// Default provider: there is never further information.
#[derive(Debug, Default, Clone, Copy)]
pub struct NoFurtherInformation;

impl KnowledgeProvider for NoFurtherInformation {
    fn provide(&self, _: &QuestionSeed, _: &str) -> Option<String> {
        None
    }
}

/// Answers every request with the seed's ground-truth text.
///
/// This puts the ground truth into later reasoning prompts, so it must not be
/// combined with audits that require reasoning prompts to be free of it.
#[derive(Debug, Default, Clone, Copy)]
pub struct GroundTruthKnowledge;

impl KnowledgeProvider for GroundTruthKnowledge {
    fn provide(&self, seed: &QuestionSeed, _: &str) -> Option<String> {
        Some(seed.ground_truth.clone())
    }
}

/// Everything the reasoning backend is shown besides the question.
#[derive(Debug, Clone, Default)]
pub struct StepContext {
    pub facts: Vec<String>,
    pub hypotheses: Vec<String>,
    pub steps: Vec<ReasoningStep>,
}

impl StepContext {
    fn render(&self) -> String {
        let mut out = String::from("Known information:\n");
        for fact in &self.facts {
            out.push_str(&format!("- {fact}\n"));
        }
        if !self.hypotheses.is_empty() {
            out.push_str("Candidate diagnoses:\n");
            for h in &self.hypotheses {
                out.push_str(&format!("- {h}\n"));
            }
        }
        if !self.steps.is_empty() {
            out.push_str("Previous reasoning steps and feedback:\n");
            for step in &self.steps {
                out.push_str(&format!(
                    "Step {}: {}\nFeedback (rating {}): {}\n",
                    step.index + 1,
                    step.content,
                    step.rating,
                    step.feedback
                ));
            }
        }
        out
    }

    /// Text of the accepted steps so far, as shown to the reflection backend.
    fn established_thought(&self) -> String {
        let accepted: Vec<&str> = self
            .steps
            .iter()
            .filter(|s| s.rating == 1)
            .map(|s| s.content.as_str())
            .collect();
        if accepted.is_empty() {
            "(none yet)".to_string()
        } else {
            accepted.join("\n")
        }
    }
}

const TASK_FACTS: &str =
    "Task: list every piece of known information in the question, one item per line, inside the <Reasoning> block.";
const TASK_HYPOTHESES: &str =
    "Task: based on the known information, list the possible diagnoses, one per line, inside the <Reasoning> block.";
const TASK_STEP: &str = "Task: give the next forward reasoning step from the known information towards the candidate diagnoses. Take the earlier steps and their feedback into account and try a path not yet established.";
const TASK_DISCUSSED: &str = "Task: have all candidate diagnoses been fully discussed? Reply <Decision>yes</Decision> or <Decision>no</Decision>.";
const TASK_RANK: &str =
    "Task: rank the candidate diagnoses from most to least likely, one per line, inside the <Reasoning> block.";
const TASK_DIAGNOSE: &str = "Task: decide whether a diagnosis can be made. Reply <Decision>yes</Decision> followed by <Diagnosis>the diagnosis</Diagnosis>, or <Decision>no</Decision>.";
const TASK_KNOWLEDGE: &str =
    "Task: no diagnosis can be made yet. State what additional information you need inside <Request></Request> tags.";

fn parse_decision(text: &str) -> Result<bool, TagError> {
    let inner = parse_tagged(text, "Decision")?;
    match inner.to_ascii_lowercase().as_str() {
        "yes" => Ok(true),
        "no" => Ok(false),
        _ => Err(TagError::Absent("Decision".into())),
    }
}

fn parse_diagnosis(text: &str) -> Result<Option<String>, TagError> {
    if !parse_decision(text)? {
        return Ok(None);
    }
    let diagnosis = parse_tagged(text, "Diagnosis")?;
    if diagnosis.is_empty() {
        return Err(TagError::Absent("Diagnosis".into()));
    }
    Ok(Some(diagnosis.to_string()))
}

/// Deduplicates by case-folded exact match, keeping first occurrences.
fn dedup_casefold(items: Vec<String>) -> Vec<String> {
    let mut seen = std::collections::HashSet::new();
    items.into_iter().filter(|h| seen.insert(h.to_lowercase())).collect()
}

/// One question's reasoning session. Single-threaded and stateful; run many
/// in parallel over different seeds with a shared gateway.
pub struct Experts<'a> {
    gateway: &'a Gateway,
    config: &'a LoopConfig,
    session: Option<String>,
}

impl<'a> Experts<'a> {
    pub fn new(gateway: &'a Gateway, config: &'a LoopConfig) -> Self {
        Experts {
            gateway,
            config,
            session: None,
        }
    }

    /// Scopes mock-script ordinals to `session` (normally the seed id).
    pub fn with_session(mut self, session: impl Into<String>) -> Self {
        self.session = Some(session.into());
        self
    }

    fn complete(&self, backend: &str, prompt: String) -> Result<String, GatewayError> {
        let mut request = CompletionRequest::new(backend, prompt).with_temperature(self.config.temperature);
        request.session = self.session.clone();
        self.gateway.complete(&request)
    }

    /// Calls `backend`, re-asking once if the reply fails to parse.
    fn ask<T>(
        &self,
        backend: &str,
        prompt: &str,
        call: &'static str,
        parse: impl Fn(&str) -> Result<T, TagError>,
    ) -> Result<T, ExpertError> {
        let mut last = None;
        for _ in 0..=REASK_BUDGET {
            let reply = self.complete(backend, prompt.to_string())?;
            match parse(&reply) {
                Ok(value) => return Ok(value),
                Err(e) => {
                    log::debug!("{call}: unparseable reply ({e}), re-asking");
                    last = Some(e);
                }
            }
        }
        Err(ExpertError::Parse {
            call,
            source: last.expect("at least one attempt"),
        })
    }

    fn reasoning_prompt(&self, question: &str, context: &StepContext, task: &str) -> Result<String, ExpertError> {
        let requirements = format!("{}\n{task}", context.render());
        Ok(self.gateway.templates().render(
            REASONING_EXPERT,
            [("Q", question), ("requirements", requirements.as_str())],
        )?)
    }

    fn ask_reasoning<T>(
        &self,
        question: &str,
        context: &StepContext,
        task: &str,
        call: &'static str,
        parse: impl Fn(&str) -> Result<T, TagError>,
    ) -> Result<T, ExpertError> {
        let prompt = self.reasoning_prompt(question, context, task)?;
        self.ask(&self.config.reasoning_backend_id, &prompt, call, parse)
    }

    pub fn list_known_facts(&self, question: &str) -> Result<Vec<String>, ExpertError> {
        if question.trim().is_empty() {
            return Err(ExpertError::Precondition("question is empty".into()));
        }
        let block = self.ask_reasoning(question, &StepContext::default(), TASK_FACTS, "list_known_facts", |r| {
            parse_tagged(r, "Reasoning").map(str::to_string)
        })?;
        let facts = block_lines(&block);
        if facts.is_empty() {
            return Err(ExpertError::Degenerate("no known facts listed"));
        }
        Ok(facts)
    }

    pub fn propose_hypotheses(&self, question: &str, facts: &[String]) -> Result<Vec<String>, ExpertError> {
        if facts.is_empty() {
            return Err(ExpertError::Precondition("facts are empty".into()));
        }
        let context = StepContext {
            facts: facts.to_vec(),
            ..Default::default()
        };
        let block = self.ask_reasoning(question, &context, TASK_HYPOTHESES, "propose_hypotheses", |r| {
            parse_tagged(r, "Reasoning").map(str::to_string)
        })?;
        let hypotheses = dedup_casefold(block_lines(&block));
        if hypotheses.is_empty() {
            return Err(ExpertError::Degenerate("no hypotheses proposed"));
        }
        Ok(hypotheses)
    }

    pub fn reason_step(&self, question: &str, context: &StepContext) -> Result<String, ExpertError> {
        self.ask_reasoning(question, context, TASK_STEP, "reason_step", |r| {
            let block = parse_tagged(r, "Reasoning")?;
            if block.is_empty() {
                return Err(TagError::Absent("Reasoning".into()));
            }
            Ok(block.to_string())
        })
    }

    pub fn reflect(
        &self,
        question: &str,
        ground_truth: Option<&str>,
        previous_thought: &str,
        step: &str,
    ) -> Result<(String, u8), ExpertError> {
        let templates = self.gateway.templates();
        let base = [
            ("Q", question),
            ("previous_thought", previous_thought),
            ("reasoning_step", step),
        ];
        let prompt = if self.config.gt_guided {
            let gt = ground_truth
                .filter(|g| !g.trim().is_empty())
                .ok_or_else(|| ExpertError::Precondition("ground-truth guidance requires a ground truth".into()))?;
            let gt_block = format!("<Ground Truth>\n{gt}\n</Ground Truth>");
            let mut bindings = base.to_vec();
            bindings.push(("GT", gt_block.as_str()));
            templates.render(REFLECTION_EXPERT, bindings)?
        } else {
            templates.render(REFLECTION_EXPERT_FREE, base)?
        };
        self.ask(&self.config.reflection_backend_id, &prompt, "reflect", |r| {
            let rating = parse_rating(r)?;
            let feedback = parse_tagged(r, "Feedback")?;
            Ok((feedback.to_string(), rating))
        })
    }

    fn discussion_complete(&self, question: &str, context: &StepContext) -> Result<bool, ExpertError> {
        self.ask_reasoning(question, context, TASK_DISCUSSED, "discussion_complete", parse_decision)
    }

    fn rank_hypotheses(&self, question: &str, context: &StepContext) -> Result<Vec<String>, ExpertError> {
        let block = self.ask_reasoning(question, context, TASK_RANK, "rank_hypotheses", |r| {
            parse_tagged(r, "Reasoning").map(str::to_string)
        })?;
        let mut ranked = block_lines(&block);
        ranked.extend(context.hypotheses.iter().cloned());
        Ok(dedup_casefold(ranked))
    }

    fn decide_diagnosis(&self, question: &str, context: &StepContext) -> Result<Option<String>, ExpertError> {
        self.ask_reasoning(question, context, TASK_DIAGNOSE, "decide_diagnosis", parse_diagnosis)
    }

    fn request_knowledge(&self, question: &str, context: &StepContext) -> Result<String, ExpertError> {
        self.ask_reasoning(question, context, TASK_KNOWLEDGE, "request_knowledge", |r| {
            parse_tagged(r, "Request").map(str::to_string)
        })
    }

    /// Runs the full loop for one seed.
    pub fn run_loop(
        &self,
        seed: &QuestionSeed,
        open: Option<&OpenQuestion>,
        knowledge: &dyn KnowledgeProvider,
    ) -> Result<ReasoningTrace, ExpertError> {
        self.config.check()?;
        let question = open.map(|o| o.open_stem.as_str()).unwrap_or(&seed.stem);
        let ground_truth = self.config.gt_guided.then_some(seed.ground_truth.as_str());
        if self.config.gt_guided && seed.ground_truth.trim().is_empty() {
            return Err(ExpertError::Precondition(
                "ground-truth guidance requires a ground truth".into(),
            ));
        }

        let mut context = StepContext {
            facts: self.list_known_facts(question)?,
            ..Default::default()
        };
        let mut iterations = 0;
        let mut knowledge_used = 0;
        let finish = |context: StepContext, final_answer: String, termination, iterations| ReasoningTrace {
            seed_id: seed.id.clone(),
            known_facts: context.facts,
            hypotheses: context.hypotheses,
            steps: context.steps,
            final_answer,
            termination,
            iterations,
        };

        loop {
            iterations += 1;
            context.hypotheses = self.propose_hypotheses(question, &context.facts)?;
            for _ in 0..self.config.steps_per_iteration {
                let content = self.reason_step(question, &context)?;
                let (feedback, rating) =
                    self.reflect(question, ground_truth, &context.established_thought(), &content)?;
                context.steps.push(ReasoningStep {
                    index: context.steps.len(),
                    content,
                    feedback,
                    rating,
                });
                if self.discussion_complete(question, &context)? {
                    break;
                }
            }
            context.hypotheses = self.rank_hypotheses(question, &context)?;
            if let Some(diagnosis) = self.decide_diagnosis(question, &context)? {
                return Ok(finish(context, diagnosis, Termination::Diagnosed, iterations));
            }
            if iterations >= self.config.max_iterations {
                return Ok(finish(context, String::new(), Termination::BudgetExhausted, iterations));
            }
            if knowledge_used >= self.config.max_knowledge_requests {
                return Ok(finish(context, String::new(), Termination::KnowledgeLimit, iterations));
            }
            let request = self.request_knowledge(question, &context)?;
            knowledge_used += 1;
            if let Some(info) = knowledge.provide(seed, &request) {
                context.facts.push(info);
            }
        }
    }
}
