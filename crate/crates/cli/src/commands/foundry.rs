use std::collections::HashMap;
use std::net::SocketAddr;
use std::path::PathBuf;

use clap::{Args, Subcommand};

use forge_core::foundry::{build_items, compute_stats, DeidRule, FoundryConfig, ReviewStore, RuleSet, Vocabulary};
use forge_core::model::{DialogueRecord, FoundryItem};

use crate::manifest::sibling;
use crate::{Ctx, Invalid};

#[derive(Debug, Subcommand)]
pub enum FoundryCommand {
    /// De-identify, deduplicate and turn dialogues into 21-option items.
    Build(BuildArgs),
}

#[derive(Debug, Args)]
pub struct BuildArgs {
    #[arg(long)]
    dialogues: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Diagnosis vocabulary, one term per line.
    #[arg(long)]
    vocab: PathBuf,
    /// Opening complaints at or above this similarity are dropped as repeats.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    backend: Option<String>,
    /// JSON array of {name, pattern, replacement} rules replacing the builtin set.
    #[arg(long)]
    rules: Option<PathBuf>,
    /// Allow "None of the above" to be the keyed answer.
    #[arg(long)]
    nota_keyed: bool,
}

pub fn foundry(ctx: &mut Ctx, command: FoundryCommand) -> anyhow::Result<()> {
    match command {
        FoundryCommand::Build(a) => build(ctx, a),
    }
}

fn build(ctx: &mut Ctx, a: BuildArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let mut dialogues: Vec<DialogueRecord> = ctx.read(&a.dialogues)?;
    dialogues.sort_by(|x, y| x.id.cmp(&y.id));
    ctx.note_input(&a.vocab);
    let vocabulary = Vocabulary::load(&a.vocab)?;
    let backend = ctx
        .cfg
        .backend_for(a.backend.as_deref(), "foundry", ctx.cfg.config.roles.foundry.as_deref())?;
    let tau = a.tau.unwrap_or(ctx.cfg.config.defaults.tau);
    if !(tau > 0.0 && tau <= 1.0) {
        return Err(Invalid(format!("--tau {tau} outside (0, 1]")).into());
    }
    let mut config = FoundryConfig::new(&backend, vocabulary);
    config.tau = tau;
    config.seed = ctx.seed.unwrap_or(0);
    config.nota_keyed = a.nota_keyed;
    if let Some(path) = &a.rules {
        let text = ctx.read_text(path)?;
        let rules: Vec<DeidRule> =
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        config.rules = RuleSet::new(rules)?;
    }
    let gw = ctx.gateway()?;
    let out = build_items(&gw, &config, &dialogues)?;
    let n = ctx.write(&a.out, &out.items)?;
    let r = ctx.write(&sibling(&a.out, "rejections"), &out.rejections)?;
    let d = ctx.write(&sibling(&a.out, "drops"), &out.drops)?;
    ctx.count("dialogues", dialogues.len());
    ctx.count("items", n);
    ctx.count("rejections", r);
    ctx.count("drops", d);
    Ok(())
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    items: PathBuf,
    /// JSON output. Printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn stats(ctx: &mut Ctx, a: StatsArgs) -> anyhow::Result<()> {
    if let Some(out) = &a.out {
        ctx.set_primary(out);
    }
    let items: Vec<FoundryItem> = ctx.read(&a.items)?;
    let text = serde_json::to_string_pretty(&compute_stats(&items))? + "\n";
    ctx.count("items", items.len());
    match &a.out {
        Some(out) => ctx.write_text(out, &text)?,
        None => print!("{text}"),
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Item file; review decisions are written back to it.
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    bind: Option<String>,
    #[arg(long)]
    port: Option<u16>,
    /// JSON object mapping reviewer id to the tier they may decide.
    #[arg(long)]
    roster: Option<PathBuf>,
}

pub fn serve(ctx: &mut Ctx, a: ServeArgs) -> anyhow::Result<()> {
    let service = &ctx.cfg.config.service;
    let bind = a.bind.clone().unwrap_or_else(|| service.bind.clone());
    let port = a.port.map(u32::from).unwrap_or(service.port);
    let addr: SocketAddr = format!("{bind}:{port}")
        .parse()
        .map_err(|e| Invalid(format!("bad bind address {bind}:{port}: {e}")))?;
    let mut store = ReviewStore::open(&a.items).map_err(|e| Invalid(format!("{}: {e}", a.items.display())))?;
    if let Some(path) = &a.roster {
        let text = ctx.read_text(path)?;
        let roster: HashMap<String, u8> =
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        if let Some((id, tier)) = roster.iter().find(|(_, t)| !(1..=3).contains(*t)) {
            return Err(Invalid(format!("roster: reviewer {id} has tier {tier}")).into());
        }
        store = store.with_roster(roster);
    }
    log::warn!("serving {} items on http://{addr}", store.len());
    let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    runtime.block_on(forge_service::serve(store, addr))?;
    Ok(())
}
