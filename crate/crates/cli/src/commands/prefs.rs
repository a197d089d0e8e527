use std::collections::HashMap;
use std::path::PathBuf;

use clap::Args;
use serde::{Deserialize, Serialize};

use forge_core::model::{OpenQuestion, PreferenceRecord, QuestionSeed, Record};
use forge_core::preference::{build_group, PrefsConfig};
use forge_core::questions::question_text;

use super::{par_map, split_results};
use crate::manifest::sibling;
use crate::{Ctx, Invalid};

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GroupWarning {
    seed_id: String,
    message: String,
}

impl Record for GroupWarning {
    const KIND: &'static str = "group_warning";
}

#[derive(Debug, Args)]
pub struct PrefsArgs {
    #[arg(long)]
    seeds: PathBuf,
    /// Open rewrites; sampled responses answer these instead of the closed stems.
    #[arg(long)]
    open: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Responses sampled per seed.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    sampler: Option<String>,
    #[arg(long)]
    judge: Option<String>,
}

pub fn prefs(ctx: &mut Ctx, a: PrefsArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let mut seeds: Vec<QuestionSeed> = ctx.read(&a.seeds)?;
    seeds.sort_by(|x, y| x.id.cmp(&y.id));
    let open: HashMap<String, OpenQuestion> = match &a.open {
        Some(p) => ctx
            .read::<OpenQuestion>(p)?
            .into_iter()
            .map(|o| (o.seed_id.clone(), o))
            .collect(),
        None => HashMap::new(),
    };
    let roles = &ctx.cfg.config.roles;
    let sampler = ctx
        .cfg
        .backend_for(a.sampler.as_deref(), "sampler", roles.sampler.as_deref())?;
    let judge = ctx
        .cfg
        .backend_for(a.judge.as_deref(), "judge", roles.judge.as_deref())?;
    let d = &ctx.cfg.config.defaults;
    let config = PrefsConfig {
        k: a.k.unwrap_or(d.k),
        temperature: a.temperature.unwrap_or(d.temperature),
        ..PrefsConfig::new(sampler, judge)
    };
    if config.k < 2 {
        return Err(Invalid("--k must be at least 2".into()).into());
    }
    if !config.temperature.is_finite() || config.temperature < 0.0 {
        return Err(Invalid("--temperature must be finite and >= 0".into()).into());
    }
    let gw = ctx.gateway()?;
    let (groups, error) = split_results(par_map(&seeds, |s| {
        build_group(&gw, &config, s, question_text(s, open.get(&s.id))).map(|g| (s.id.clone(), g))
    }));
    let mut records: Vec<PreferenceRecord> = Vec::new();
    let mut warnings = Vec::new();
    let mut skipped = 0;
    for (seed_id, g) in groups {
        records.extend(g.record);
        skipped += usize::from(g.skipped);
        warnings.extend(g.warnings.into_iter().map(|message| GroupWarning {
            seed_id: seed_id.clone(),
            message,
        }));
    }
    let n = ctx.write(&a.out, &records)?;
    let w = ctx.write(&sibling(&a.out, "warnings"), &warnings)?;
    ctx.count("pairs", n);
    ctx.count("groups", seeds.len());
    ctx.count("skipped_groups", skipped);
    ctx.count("warnings", w);
    error.map_or(Ok(()), |e| Err(e.into()))
}
