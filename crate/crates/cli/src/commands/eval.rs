use std::path::PathBuf;

use clap::Args;

use forge_core::eval::{evaluate, render_report, EvalItem, EvalResult, ResultsGrid};

use crate::{Ctx, Invalid};

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    items: PathBuf,
    #[arg(long)]
    backend: Option<String>,
    /// Result JSON with per-item predictions.
    #[arg(long)]
    out: PathBuf,
    /// Model name recorded in the result. Defaults to the backend id.
    #[arg(long)]
    model: Option<String>,
}

pub fn eval(ctx: &mut Ctx, a: EvalArgs) -> anyhow::Result<()> {
    ctx.set_primary(&a.out);
    let items: Vec<EvalItem> = ctx.read(&a.items)?;
    let backend = ctx
        .cfg
        .backend_for(a.backend.as_deref(), "eval", ctx.cfg.config.roles.eval.as_deref())?;
    let gw = ctx.gateway()?;
    let mut result = evaluate(&gw, &backend, &items)?;
    if let Some(model) = a.model {
        result.model = model;
    }
    let failed = result.items.iter().filter(|i| i.error.is_some()).count();
    ctx.write_text(&a.out, &(serde_json::to_string_pretty(&result)? + "\n"))?;
    ctx.count("items", result.n_items);
    ctx.count("correct", result.n_correct);
    ctx.count("backend_errors", failed);
    println!(
        "{} {} {:.4} ({}/{})",
        result.model, result.benchmark, result.accuracy, result.n_correct, result.n_items
    );
    Ok(())
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Result files written by `forge eval`.
    #[arg(long, num_args = 1.., required = true)]
    results: Vec<PathBuf>,
    /// Markdown output. Printed to stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

pub fn report(ctx: &mut Ctx, a: ReportArgs) -> anyhow::Result<()> {
    if let Some(out) = &a.out {
        ctx.set_primary(out);
    }
    let mut results = Vec::new();
    for path in &a.results {
        let text = ctx.read_text(path)?;
        let result: EvalResult =
            serde_json::from_str(&text).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        results.push(result);
    }
    let table = render_report(&ResultsGrid::from_results(&results));
    ctx.count("results", results.len());
    match &a.out {
        Some(out) => ctx.write_text(out, &table)?,
        None => print!("{table}"),
    }
    Ok(())
}
