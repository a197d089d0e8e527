use std::collections::{BTreeSet, HashMap};
use std::path::PathBuf;

use clap::{Args, ValueEnum};

use forge_core::expert::{Experts, GroundTruthKnowledge, KnowledgeProvider, LoopConfig, NoFurtherInformation};
use forge_core::model::{Difficulty, Narration, OpenQuestion, QuestionSeed, ReasoningTrace, Rejection, SftRecord};
use forge_core::questions::{
    check_narration, check_trace_answer, emit_sft as build_sft, narrate_first_person, question_text, rewrite_open,
    sample_training_pool, stages, triage_difficulty, Outcome, TriagePanel, VotingRule,
};

use super::{par_map, parse_list, split_results};
use crate::manifest::sibling;
use crate::{Ctx, Invalid};

fn sorted_seeds(ctx: &mut Ctx, path: &std::path::Path) -> anyhow::Result<Vec<QuestionSeed>> {
    let mut seeds: Vec<QuestionSeed> = ctx.read(path)?;
    seeds.sort_by(|a, b| a.id.cmp(&b.id));
    if let Some(w) = seeds.windows(2).find(|w| w[0].id == w[1].id) {
        return Err(Invalid(format!("{}: duplicate seed id `{}`", path.display(), w[0].id)).into());
    }
    Ok(seeds)
}

fn open_map(ctx: &mut Ctx, path: Option<&PathBuf>) -> anyhow::Result<HashMap<String, OpenQuestion>> {
    let Some(path) = path else {
        return Ok(HashMap::new());
    };
    let open: Vec<OpenQuestion> = ctx.read(path)?;
    Ok(open.into_iter().map(|o| (o.seed_id.clone(), o)).collect())
}

fn partition<T>(outcomes: Vec<Outcome<T>>) -> (Vec<T>, Vec<Rejection>) {
    let mut ok = Vec::new();
    let mut rejected = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Accepted(v) => ok.push(v),
            Outcome::Rejected(r) => rejected.push(r),
        }
    }
    (ok, rejected)
}

fn finish<E: Into<anyhow::Error>>(error: Option<E>) -> anyhow::Result<()> {
    error.map_or(Ok(()), |e| Err(e.into()))
}

#[derive(Debug, Args)]
pub struct RewriteArgs {
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    backend: Option<String>,
    /// Defaults to `<out stem>.rejections.jsonl`.
    #[arg(long)]
    rejections: Option<PathBuf>,
}

pub fn rewrite(ctx: &mut Ctx, a: RewriteArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let seeds = sorted_seeds(ctx, &a.seeds)?;
    let backend = ctx.cfg.backend_for(
        a.backend.as_deref(),
        "rewriter",
        ctx.cfg.config.roles.rewriter.as_deref(),
    )?;
    let gw = ctx.gateway()?;
    let (outcomes, error) = split_results(par_map(&seeds, |s| rewrite_open(&gw, &backend, s)));
    let (open, rejected) = partition(outcomes);
    let n = ctx.write(&a.out, &open)?;
    let r = ctx.write(
        &a.rejections.unwrap_or_else(|| sibling(&a.out, "rejections")),
        &rejected,
    )?;
    ctx.count("open_questions", n);
    ctx.count("rejections", r);
    finish(error)
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RuleArg {
    AllCorrectEasy,
    Majority,
    Any,
}

impl From<RuleArg> for VotingRule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::AllCorrectEasy => VotingRule::AllCorrectEasy,
            RuleArg::Majority => VotingRule::Majority,
            RuleArg::Any => VotingRule::Any,
        }
    }
}

#[derive(Debug, Args)]
pub struct TriageArgs {
    #[arg(long)]
    seeds: PathBuf,
    /// Seeds with their difficulty filled in.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated backend ids.
    #[arg(long)]
    panel: Option<String>,
    #[arg(long, value_enum, default_value = "all-correct-easy")]
    rule: RuleArg,
    /// Also write all hard seeds plus a sampled share of easy ones here.
    #[arg(long)]
    pool: Option<PathBuf>,
    #[arg(long)]
    easy_fraction: Option<f64>,
}

pub fn triage(ctx: &mut Ctx, a: TriageArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let seeds = sorted_seeds(ctx, &a.seeds)?;
    let members = match &a.panel {
        Some(p) => parse_list(p),
        None => ctx.cfg.config.roles.panel.clone(),
    };
    if members.is_empty() {
        return Err(Invalid("triage needs --panel or roles.panel".into()).into());
    }
    for m in &members {
        ctx.cfg.backend_for(Some(m), "panel", None)?;
    }
    let panel = TriagePanel {
        voting_rule: a.rule.into(),
        ..TriagePanel::new(members)
    };
    let gw = ctx.gateway()?;
    let (labeled, error) = split_results(par_map(&seeds, |s| {
        triage_difficulty(&gw, s, &panel).map(|t| QuestionSeed {
            difficulty: t.difficulty,
            ..s.clone()
        })
    }));
    ctx.write(&a.out, &labeled)?;
    let (easy, hard): (Vec<QuestionSeed>, Vec<QuestionSeed>) =
        labeled.into_iter().partition(|s| s.difficulty == Difficulty::Easy);
    ctx.count("easy", easy.len());
    ctx.count("hard", hard.len());
    if let Some(error) = error {
        return Err(error.into());
    }
    if let Some(pool_path) = &a.pool {
        let fraction = a.easy_fraction.unwrap_or(ctx.cfg.config.defaults.easy_fraction);
        let pool = sample_training_pool(&easy, &hard, fraction, ctx.seed.unwrap_or(0))?;
        let n = ctx.write(pool_path, &pool)?;
        ctx.count("pool", n);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KnowledgeArg {
    /// Requests for more information go unanswered.
    None,
    /// Requests are answered with the seed's ground truth.
    GroundTruth,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    seeds: PathBuf,
    /// Reasoning traces, one per seed.
    #[arg(long)]
    out: PathBuf,
    /// Open rewrites to reason over instead of the closed stems.
    #[arg(long)]
    open: Option<PathBuf>,
    /// Show the reflection expert the ground truth.
    #[arg(long)]
    gt_guided: bool,
    /// Maximum loop iterations per seed.
    #[arg(long)]
    budget: Option<usize>,
    #[arg(long)]
    reasoning: Option<String>,
    #[arg(long)]
    reflection: Option<String>,
    #[arg(long, value_enum, default_value = "none")]
    knowledge: KnowledgeArg,
}

pub fn synth(ctx: &mut Ctx, a: SynthArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let seeds = sorted_seeds(ctx, &a.seeds)?;
    let open = open_map(ctx, a.open.as_ref())?;
    let roles = &ctx.cfg.config.roles;
    let reasoning = ctx
        .cfg
        .backend_for(a.reasoning.as_deref(), "reasoning", roles.reasoning.as_deref())?;
    let reflection = ctx
        .cfg
        .backend_for(a.reflection.as_deref(), "reflection", roles.reflection.as_deref())?;
    let d = &ctx.cfg.config.defaults;
    let config = LoopConfig {
        max_iterations: a.budget.unwrap_or(d.budget),
        max_knowledge_requests: d.knowledge_requests,
        steps_per_iteration: d.steps_per_iteration,
        gt_guided: a.gt_guided,
        ..LoopConfig::new(reasoning, reflection)
    };
    config.check()?;
    let knowledge: &dyn KnowledgeProvider = match a.knowledge {
        KnowledgeArg::None => &NoFurtherInformation,
        KnowledgeArg::GroundTruth => &GroundTruthKnowledge,
    };
    let gw = ctx.gateway()?;
    let (traces, error) = split_results(par_map(&seeds, |s| {
        Experts::new(&gw, &config)
            .with_session(s.id.clone())
            .run_loop(s, open.get(&s.id), knowledge)
    }));
    let n = ctx.write(&a.out, &traces)?;
    ctx.count("traces", n);
    ctx.count("seeds", seeds.len());
    finish(error)
}

fn index_by_seed<'a>(
    seeds: &'a [QuestionSeed],
    ids: impl IntoIterator<Item = &'a str>,
    what: &str,
) -> anyhow::Result<HashMap<&'a str, &'a QuestionSeed>> {
    let by_id: HashMap<&str, &QuestionSeed> = seeds.iter().map(|s| (s.id.as_str(), s)).collect();
    let missing: BTreeSet<&str> = ids.into_iter().filter(|id| !by_id.contains_key(id)).collect();
    if let Some(id) = missing.first() {
        return Err(Invalid(format!("{what} refers to unknown seed `{id}`")).into());
    }
    Ok(by_id)
}

#[derive(Debug, Args)]
pub struct NarrateArgs {
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    open: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    backend: Option<String>,
    #[arg(long)]
    rejections: Option<PathBuf>,
}

pub fn narrate(ctx: &mut Ctx, a: NarrateArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let mut traces: Vec<ReasoningTrace> = ctx.read(&a.traces)?;
    traces.sort_by(|x, y| x.seed_id.cmp(&y.seed_id));
    let seeds = sorted_seeds(ctx, &a.seeds)?;
    let open = open_map(ctx, a.open.as_ref())?;
    let by_id = index_by_seed(&seeds, traces.iter().map(|t| t.seed_id.as_str()), "trace")?;
    let backend = ctx.cfg.backend_for(
        a.backend.as_deref(),
        "narrator",
        ctx.cfg.config.roles.narrator.as_deref(),
    )?;
    let gw = ctx.gateway()?;
    let (outcomes, error) = split_results(par_map(&traces, |trace| {
        let seed = by_id[trace.seed_id.as_str()];
        if let Err(reason) = check_trace_answer(trace, seed) {
            return Ok(Outcome::Rejected(Rejection::new(
                stages::ANSWER_CHECK,
                &seed.id,
                reason,
            )));
        }
        if trace.accepted_steps().next().is_none() {
            return Ok(Outcome::Rejected(Rejection::new(
                stages::NARRATE,
                &seed.id,
                "no accepted steps",
            )));
        }
        let question = question_text(seed, open.get(&seed.id));
        narrate_first_person(&gw, &backend, trace, question).map(|o| match o {
            Outcome::Accepted(think) => Outcome::Accepted(Narration {
                seed_id: seed.id.clone(),
                think,
            }),
            Outcome::Rejected(r) => Outcome::Rejected(r),
        })
    }));
    let (narrations, rejected) = partition(outcomes);
    let n = ctx.write(&a.out, &narrations)?;
    let r = ctx.write(
        &a.rejections.unwrap_or_else(|| sibling(&a.out, "rejections")),
        &rejected,
    )?;
    ctx.count("narrations", n);
    ctx.count("rejections", r);
    finish(error)
}

#[derive(Debug, Args)]
pub struct EmitSftArgs {
    #[arg(long)]
    narrations: PathBuf,
    #[arg(long)]
    traces: PathBuf,
    #[arg(long)]
    seeds: PathBuf,
    #[arg(long)]
    open: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    rejections: Option<PathBuf>,
}

pub fn emit_sft(ctx: &mut Ctx, a: EmitSftArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let mut narrations: Vec<Narration> = ctx.read(&a.narrations)?;
    narrations.sort_by(|x, y| x.seed_id.cmp(&y.seed_id));
    let traces: Vec<ReasoningTrace> = ctx.read(&a.traces)?;
    let seeds = sorted_seeds(ctx, &a.seeds)?;
    let open = open_map(ctx, a.open.as_ref())?;
    let by_id = index_by_seed(&seeds, narrations.iter().map(|n| n.seed_id.as_str()), "narration")?;
    let traces: HashMap<&str, &ReasoningTrace> = traces.iter().map(|t| (t.seed_id.as_str(), t)).collect();
    let mut records: Vec<SftRecord> = Vec::new();
    let mut rejected = Vec::new();
    for n in &narrations {
        let seed = by_id[n.seed_id.as_str()];
        let Some(trace) = traces.get(n.seed_id.as_str()) else {
            return Err(Invalid(format!("narration `{}` has no trace", n.seed_id)).into());
        };
        let checked = check_trace_answer(trace, seed)
            .map_err(|reason| (stages::ANSWER_CHECK, reason))
            .and_then(|_| check_narration(&n.think, trace).map_err(|v| (stages::NARRATE, v.to_string())))
            .and_then(|_| {
                build_sft(question_text(seed, open.get(&seed.id)), &n.think, &trace.final_answer)
                    .map_err(|e| ("emit-sft", e.to_string()))
            });
        match checked {
            Ok(record) => records.push(record),
            Err((stage, reason)) => rejected.push(Rejection::new(stage, &seed.id, reason)),
        }
    }
    let n = ctx.write(&a.out, &records)?;
    let r = ctx.write(
        &a.rejections.unwrap_or_else(|| sibling(&a.out, "rejections")),
        &rejected,
    )?;
    ctx.count("sft_records", n);
    ctx.count("rejections", r);
    Ok(())
}
