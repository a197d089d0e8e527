use std::path::PathBuf;

use clap::{Args, ValueEnum};

use forge_core::mixer::{init_mixer, schedule, Normalization, Policy, RewardEvent};

use super::parse_list;
use crate::{Ctx, Invalid};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum PolicyArg {
    Exp3,
    Ucb1,
}

#[derive(Debug, Args)]
pub struct MixArgs {
    /// Reward events in stream order.
    #[arg(long)]
    events: PathBuf,
    /// Phase ratios, one line per phase.
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated source ids. Defaults to the ids seen in the events, sorted.
    #[arg(long)]
    sources: Option<String>,
    #[arg(long)]
    phase_len: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long, value_enum, default_value = "exp3")]
    policy: PolicyArg,
    /// Min-max normalization window.
    #[arg(long, conflicts_with = "raw_rewards")]
    window: Option<usize>,
    /// Rewards are already in [0, 1]; skip normalization.
    #[arg(long)]
    raw_rewards: bool,
    /// Also write the final mixer state as JSON.
    #[arg(long)]
    state_out: Option<PathBuf>,
}

pub fn mix(ctx: &mut Ctx, a: MixArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let events: Vec<RewardEvent> = ctx.read(&a.events)?;
    let sources = match &a.sources {
        Some(list) => parse_list(list),
        None => {
            let mut ids: Vec<String> = events.iter().map(|e| e.source_id.clone()).collect();
            ids.sort();
            ids.dedup();
            ids
        }
    };
    let d = &ctx.cfg.config.defaults;
    let phase_len = a.phase_len.unwrap_or(d.phase_len);
    if phase_len == 0 {
        return Err(Invalid("--phase-len must be at least 1".into()).into());
    }
    let normalization = if a.raw_rewards {
        Normalization::Identity
    } else {
        Normalization::WindowedMinMax {
            window: a.window.unwrap_or(d.window),
        }
    };
    let policy = match a.policy {
        PolicyArg::Exp3 => Policy::Exp3,
        PolicyArg::Ucb1 => Policy::Ucb1,
    };
    let state = init_mixer(&sources, a.epsilon.unwrap_or(d.epsilon), a.eta.unwrap_or(d.eta))?
        .with_policy(policy)
        .with_normalization(normalization)?;
    let (phases, state) = schedule(state, &events, phase_len)?;
    let n = ctx.write(&a.out, &phases)?;
    ctx.count("events", events.len());
    ctx.count("phases", n);
    if let Some(path) = &a.state_out {
        ctx.write_text(path, &(serde_json::to_string_pretty(&state)? + "\n"))?;
    }
    Ok(())
}
