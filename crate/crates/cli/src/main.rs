//! `tiloss` command-line driver.
//!
//! Settings come from built-in defaults, then an optional JSON config
//! (`--config`), then command-line flags, each overriding the last. Exit
//! status is 0 on success, 1 for validation or numeric failures and 2 for
//! I/O or configuration problems.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use tiloss::features::FeatureId;
use tiloss::loss::{LossKind, MarginBackprop};

use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: tiloss::Error,
    },

    #[error("{stage}: {message}")]
    Failed { stage: &'static str, message: String },

    #[error("{0}")]
    Usage(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } | CliError::Usage(_) => 2,
            CliError::Stage { source, .. } if source.is_io() => 2,
            CliError::Stage { .. } | CliError::Failed { .. } => 1,
        }
    }
}

/// Wraps a library error with the name of the stage that produced it.
pub fn at(stage: &'static str) -> impl FnOnce(tiloss::Error) -> CliError {
    move |source| CliError::Stage { stage, source }
}

#[derive(Debug, Parser)]
#[command(name = "tiloss", version, about = "Template-instance loss toolkit")]
struct Cli {
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Seed for every random stream.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Print the default configuration as JSON and exit.
    #[arg(long)]
    dump_defaults: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write the synthetic template set (and optionally digit IDX files).
    Synth(SynthArgs),
    /// Compute feature similarities, the fused affinity and prior margins.
    Affinity(AffinityArgs),
    /// Pretty-print a binary margin cache.
    Margins(MarginsArgs),
    /// Train the toy cosine-head network.
    Train(TrainArgs),
    /// Check analytic loss gradients against finite differences.
    Gradcheck(GradcheckArgs),
}

#[derive(Debug, Args)]
struct SynthArgs {
    #[arg(long)]
    templates: Option<usize>,
    #[arg(long)]
    fonts: Option<usize>,
    #[arg(long)]
    side: Option<usize>,
    /// Also write train/test seven-segment digit sets in IDX format.
    #[arg(long)]
    digits: bool,
}

#[derive(Debug, Args)]
struct AffinityArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    root: Option<PathBuf>,
    /// Restrict to these features (repeatable).
    #[arg(long = "feature")]
    features: Vec<FeatureId>,
    /// Leave the self-affinity out of the margin softmax.
    #[arg(long)]
    exclude_diagonal: bool,
}

#[derive(Debug, Args)]
struct MarginsArgs {
    /// Defaults to `<out>/affinity/margins.bin`.
    #[arg(long)]
    cache: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long)]
    loss: Option<LossKind>,
    #[arg(long)]
    alpha_max: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    margins: Option<PathBuf>,
    #[arg(long)]
    train_images: Option<PathBuf>,
    #[arg(long)]
    train_labels: Option<PathBuf>,
    #[arg(long)]
    test_images: Option<PathBuf>,
    #[arg(long)]
    test_labels: Option<PathBuf>,
    /// Train once per configured `alpha_max` value.
    #[arg(long)]
    sweep_alpha: bool,
    #[arg(long)]
    no_embeddings: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Detached,
    Differentiated,
    Both,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,
    #[arg(long)]
    batches: Option<usize>,
    /// Perturb one analytic gradient entry by 1e-3 to prove the check fails.
    #[arg(long)]
    corrupt: bool,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if cli.dump_defaults {
        print!("{}", RunConfig::default().to_json());
        return Ok(());
    }
    let Some(command) = cli.command else {
        return Err(CliError::Usage(Cli::command().render_help().to_string()));
    };
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.out = out;
    }
    match command {
        Command::Synth(a) => {
            let s = &mut cfg.synth;
            s.templates = a.templates.unwrap_or(s.templates);
            s.fonts = a.fonts.unwrap_or(s.fonts);
            s.side = a.side.unwrap_or(s.side);
            commands::synth(&cfg, a.digits)
        }
        Command::Affinity(a) => {
            let s = &mut cfg.affinity;
            if a.manifest.is_some() {
                s.manifest = a.manifest;
            }
            if a.root.is_some() {
                s.root = a.root;
            }
            if !a.features.is_empty() {
                s.features = a.features;
            }
            if a.exclude_diagonal {
                s.margins.exclude_diagonal_in_softmax = true;
            }
            commands::affinity(&cfg)
        }
        Command::Margins(a) => {
            let path = a.cache.unwrap_or_else(|| commands::margin_cache_path(&cfg));
            commands::margins(&path)
        }
        Command::Train(a) => {
            let t = &mut cfg.train;
            let replace = |slot: &mut Option<PathBuf>, v: Option<PathBuf>| {
                if v.is_some() {
                    *slot = v;
                }
            };
            replace(&mut t.margins, a.margins);
            replace(&mut t.train_images, a.train_images);
            replace(&mut t.train_labels, a.train_labels);
            replace(&mut t.test_images, a.test_images);
            replace(&mut t.test_labels, a.test_labels);
            let c = &mut t.config;
            c.loss = a.loss.unwrap_or(c.loss);
            c.loss_config.alpha_max = a.alpha_max.unwrap_or(c.loss_config.alpha_max);
            c.loss_config.gamma = a.gamma.unwrap_or(c.loss_config.gamma);
            c.max_iter = a.max_iter.unwrap_or(c.max_iter);
            if a.no_embeddings {
                t.embeddings = false;
            }
            commands::train(&cfg, a.sweep_alpha)
        }
        Command::Gradcheck(a) => {
            cfg.gradcheck.batches = a.batches.unwrap_or(cfg.gradcheck.batches);
            let modes = match a.mode {
                ModeArg::Detached => vec![MarginBackprop::Detached],
                ModeArg::Differentiated => vec![MarginBackprop::Differentiated],
                ModeArg::Both => vec![MarginBackprop::Detached, MarginBackprop::Differentiated],
            };
            commands::gradcheck(&cfg, &modes, a.corrupt)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
