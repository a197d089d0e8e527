//! The `forge` command line.
//!
//! Every subcommand reads JSONL, writes JSONL (or JSON / Markdown), and
//! leaves a `<out>.manifest.json` sidecar describing the run. Exit status is
//! 0 on success, 1 for invalid input, flags or configuration, and 2 when the
//! run itself fails, e.g. a backend error part way through.

mod commands;
pub mod config;
pub mod manifest;

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::Context as _;
use clap::{Parser, Subcommand};

use forge_core::expert::ExpertError;
use forge_core::foundry::FoundryError;
use forge_core::gateway::{Gateway, GatewayError, TemplateError};
use forge_core::mixer::MixerError;
use forge_core::model::{read_records, JsonlWriter, Record, RecordError};
use forge_core::preference::PreferenceError;
use forge_core::questions::QuestionError;

use config::LoadedConfig;
use manifest::{manifest_path, FileDigest, RunManifest, RunStatus};

/// Bad input, flags or configuration. Maps to exit status 1.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{0}")]
pub struct Invalid(pub String);

#[derive(Debug, Parser)]
#[command(
    name = "forge",
    version,
    about = "Medical reasoning-data synthesis, preference pairs, corpus mixing, benchmark building and evaluation"
)]
struct Cli {
    /// JSON configuration file.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Seed for every sampling step of the run.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-record parallelism.
    #[arg(long, global = true, value_name = "N")]
    jobs: Option<usize>,
    /// Writes every backend prompt of the run to this JSONL file.
    #[arg(long, global = true, value_name = "PATH")]
    prompt_log: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Rewrite closed-form seeds as open questions.
    Rewrite(commands::seeds::RewriteArgs),
    /// Label seeds easy or hard with a model panel and sample a training pool.
    Triage(commands::seeds::TriageArgs),
    /// Run the reasoning/reflection loop over seeds.
    Synth(commands::seeds::SynthArgs),
    /// Turn answer-checked traces into first-person monologues.
    Narrate(commands::seeds::NarrateArgs),
    /// Assemble SFT records from narrations.
    EmitSft(commands::seeds::EmitSftArgs),
    /// Build chosen/rejected pairs by rejection sampling.
    Prefs(commands::prefs::PrefsArgs),
    /// Replay reward events through the bandit and emit phase ratios.
    Mix(commands::mix::MixArgs),
    /// Benchmark construction.
    #[command(subcommand)]
    Foundry(commands::foundry::FoundryCommand),
    /// Dataset statistics for benchmark items.
    Stats(commands::foundry::StatsArgs),
    /// Score a backend on MCQ items.
    Eval(commands::eval::EvalArgs),
    /// Render evaluation results as a Markdown table.
    Report(commands::eval::ReportArgs),
    /// Serve the review API over a benchmark item file.
    Serve(commands::foundry::ServeArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Rewrite(_) => "rewrite",
            Command::Triage(_) => "triage",
            Command::Synth(_) => "synth",
            Command::Narrate(_) => "narrate",
            Command::EmitSft(_) => "emit-sft",
            Command::Prefs(_) => "prefs",
            Command::Mix(_) => "mix",
            Command::Foundry(_) => "foundry build",
            Command::Stats(_) => "stats",
            Command::Eval(_) => "eval",
            Command::Report(_) => "report",
            Command::Serve(_) => "serve",
        }
    }
}

/// Per-run state shared by the subcommands: configuration, the lazily built
/// gateway, and what goes into the manifest.
pub struct Ctx {
    pub cfg: LoadedConfig,
    pub seed: Option<u64>,
    gateway: Option<Arc<Gateway>>,
    inputs: Vec<PathBuf>,
    outputs: Vec<(PathBuf, Option<usize>)>,
    counts: BTreeMap<String, usize>,
    primary: Option<PathBuf>,
}

impl Ctx {
    fn new(cfg: LoadedConfig, seed: Option<u64>) -> Self {
        Ctx {
            cfg,
            seed,
            gateway: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            counts: BTreeMap::new(),
            primary: None,
        }
    }

    pub fn gateway(&mut self) -> anyhow::Result<Arc<Gateway>> {
        if let Some(g) = &self.gateway {
            return Ok(g.clone());
        }
        let g = Arc::new(self.cfg.gateway()?);
        self.inputs.extend(self.cfg.script_paths());
        self.gateway = Some(g.clone());
        Ok(g)
    }

    /// The file the manifest sits next to.
    pub fn set_primary(&mut self, out: &Path) {
        self.primary = Some(out.to_path_buf());
    }

    pub fn read<T: Record>(&mut self, path: &Path) -> anyhow::Result<Vec<T>> {
        let records = read_records::<T>(path)
            .and_then(|r| r.collect::<Result<Vec<_>, _>>())
            .map_err(|e| Invalid(e.to_string()))?;
        self.inputs.push(path.to_path_buf());
        Ok(records)
    }

    pub fn read_text(&mut self, path: &Path) -> anyhow::Result<String> {
        let text = std::fs::read_to_string(path).map_err(|e| Invalid(format!("{}: {e}", path.display())))?;
        self.inputs.push(path.to_path_buf());
        Ok(text)
    }

    pub fn note_input(&mut self, path: &Path) {
        self.inputs.push(path.to_path_buf());
    }

    pub fn write<'a, T: Record + 'a>(
        &mut self,
        path: &Path,
        records: impl IntoIterator<Item = &'a T>,
    ) -> anyhow::Result<usize> {
        let mut writer = JsonlWriter::create(path)?;
        for r in records {
            writer.append(r)?;
        }
        let n = writer.finish()?;
        self.outputs.push((path.to_path_buf(), Some(n)));
        Ok(n)
    }

    pub fn write_text(&mut self, path: &Path, text: &str) -> anyhow::Result<()> {
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.push((path.to_path_buf(), None));
        Ok(())
    }

    pub fn count(&mut self, key: &str, n: usize) {
        self.counts.insert(key.to_string(), n);
    }

    fn manifest(&self, command: &str, argv: &[String], result: &anyhow::Result<()>) -> anyhow::Result<RunManifest> {
        let digest = |paths: &mut dyn Iterator<Item = (&PathBuf, Option<usize>)>| -> anyhow::Result<Vec<FileDigest>> {
            paths
                .map(|(p, n)| FileDigest::of(p, n).with_context(|| format!("hashing {}", p.display())))
                .collect()
        };
        Ok(RunManifest {
            command: command.to_string(),
            argv: argv.to_vec(),
            forge_version: env!("CARGO_PKG_VERSION").to_string(),
            config_path: self.cfg.path.clone(),
            config_sha256: self.cfg.digest.clone(),
            seed: self.seed,
            inputs: digest(&mut self.inputs.iter().map(|p| (p, None)))?,
            outputs: digest(&mut self.outputs.iter().map(|(p, n)| (p, *n)))?,
            counts: self.counts.clone(),
            status: if result.is_ok() {
                RunStatus::Ok
            } else {
                RunStatus::Failed
            },
            error: result.as_ref().err().map(|e| format!("{e:#}")),
        })
    }

    fn dump_prompt_log(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = String::new();
        if let Some(g) = &self.gateway {
            for entry in g.prompt_log() {
                text.push_str(&serde_json::to_string(&entry)?);
                text.push('\n');
            }
        }
        std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
    }
}

fn is_invalid_gateway(e: &GatewayError) -> bool {
    matches!(
        e,
        GatewayError::Config(_)
            | GatewayError::UnknownBackend(_)
            | GatewayError::InvalidRequest(_)
            | GatewayError::MissingCredential(_)
    )
}

fn is_invalid_expert(e: &ExpertError) -> bool {
    match e {
        ExpertError::Config(_)
        | ExpertError::Precondition(_)
        | ExpertError::Degenerate(_)
        | ExpertError::Template(_) => true,
        ExpertError::Gateway(g) => is_invalid_gateway(g),
        ExpertError::Parse { .. } => false,
    }
}

/// 1 for anything the caller can fix in inputs, flags or configuration, else 2.
pub fn exit_code(error: &anyhow::Error) -> i32 {
    for cause in error.chain() {
        let invalid = if cause.is::<Invalid>() || cause.is::<MixerError>() || cause.is::<TemplateError>() {
            true
        } else if let Some(e) = cause.downcast_ref::<RecordError>() {
            !matches!(e, RecordError::Io { .. })
        } else if let Some(e) = cause.downcast_ref::<GatewayError>() {
            is_invalid_gateway(e)
        } else if let Some(e) = cause.downcast_ref::<ExpertError>() {
            is_invalid_expert(e)
        } else if let Some(e) = cause.downcast_ref::<QuestionError>() {
            match e {
                QuestionError::Gateway(g) => is_invalid_gateway(g),
                QuestionError::Expert(x) => is_invalid_expert(x),
                _ => true,
            }
        } else if let Some(e) = cause.downcast_ref::<PreferenceError>() {
            match e {
                PreferenceError::Gateway(g) => is_invalid_gateway(g),
                _ => true,
            }
        } else if let Some(e) = cause.downcast_ref::<FoundryError>() {
            match e {
                FoundryError::Gateway(g) => is_invalid_gateway(g),
                FoundryError::Io(_) => false,
                _ => true,
            }
        } else {
            cause.is::<forge_core::eval::EvalError>()
        };
        if invalid {
            return 1;
        }
    }
    2
}

fn dispatch(ctx: &mut Ctx, command: Command) -> anyhow::Result<()> {
    match command {
        Command::Rewrite(a) => commands::seeds::rewrite(ctx, a),
        Command::Triage(a) => commands::seeds::triage(ctx, a),
        Command::Synth(a) => commands::seeds::synth(ctx, a),
        Command::Narrate(a) => commands::seeds::narrate(ctx, a),
        Command::EmitSft(a) => commands::seeds::emit_sft(ctx, a),
        Command::Prefs(a) => commands::prefs::prefs(ctx, a),
        Command::Mix(a) => commands::mix::mix(ctx, a),
        Command::Foundry(c) => commands::foundry::foundry(ctx, c),
        Command::Stats(a) => commands::foundry::stats(ctx, a),
        Command::Eval(a) => commands::eval::eval(ctx, a),
        Command::Report(a) => commands::eval::report(ctx, a),
        Command::Serve(a) => commands::foundry::serve(ctx, a),
    }
}

/// Runs one `forge` invocation and returns its exit status.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let cfg = match LoadedConfig::load(cli.config.as_deref()) {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e}");
            return 1;
        }
    };
    let command_name = cli.command.name();
    let argv_text: Vec<String> = argv.iter().skip(1).map(|a| a.to_string_lossy().into_owned()).collect();
    let mut ctx = Ctx::new(cfg, cli.seed);
    let result = match cli.jobs {
        Some(0) => Err(Invalid("--jobs must be at least 1".into()).into()),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| dispatch(&mut ctx, cli.command)),
            Err(e) => Err(e.into()),
        },
        None => dispatch(&mut ctx, cli.command),
    };
    let mut code = match &result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(e)
        }
    };
    if let Some(path) = &cli.prompt_log {
        if let Err(e) = ctx.dump_prompt_log(path) {
            eprintln!("error: {e:#}");
            code = code.max(2);
        }
    }
    if let Some(primary) = ctx.primary.clone() {
        let written = ctx
            .manifest(command_name, &argv_text, &result)
            .and_then(|m| Ok(serde_json::to_string_pretty(&m)?))
            .and_then(|text| Ok(std::fs::write(manifest_path(&primary), text + "\n")?));
        if let Err(e) = written {
            eprintln!("error: manifest: {e:#}");
            code = code.max(2);
        }
    }
    code
}
