//! Thin binary entry point; the heavy lifting lives in the library so the
//! test suites can drive the same code paths.

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use mtada_cli::config::ExperimentConfig;
use mtada_cli::{report, runner};

#[derive(Parser)]
#[command(
    name = "mtada",
    about = "Multi-target active domain adaptation lab",
    long_about = "Seeded benchmark harness for multi-target active domain adaptation:\n\
                  adversarial alignment training plus active sampling strategies on\n\
                  synthetic multi-domain classification tasks.\n\n\
                  Option precedence: built-in defaults < --config file < --set pairs\n\
                  < dedicated flags (e.g. --seed). MTADA_SEED is used when no flag or\n\
                  file provides a seed."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// Config file of flat `key = value` lines (# comments allowed).
    #[arg(long)]
    config: Option<String>,
    /// Extra `key=value` overrides, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Experiment seed (highest precedence).
    #[arg(long)]
    seed: Option<u64>,
    /// Domain discrimination: binary, all-way, or decomposed.
    #[arg(long)]
    mode: Option<String>,
    /// Weight of the all-way term in decomposed discrimination.
    #[arg(long)]
    alpha: Option<f64>,
    /// Active sampling strategy.
    #[arg(long)]
    sampler: Option<String>,
    /// Utility-vs-diversity exponent for gu-kmeans.
    #[arg(long)]
    beta: Option<f64>,
    /// Number of active learning stages.
    #[arg(long)]
    stages: Option<usize>,
    /// Uniform per-stage annotation budget.
    #[arg(long)]
    budget: Option<usize>,
    /// Dataset CSV to load instead of generating.
    #[arg(long)]
    dataset: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset CSV (plus config echo and content hash).
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Run the full protocol: pretrain, then sample/annotate/train stages.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated seed list; multiple values fan out into
        /// per-combination subdirectories plus a comparison table.
        #[arg(long)]
        seeds: Option<String>,
        /// Comma-separated sampler list for matrix runs.
        #[arg(long)]
        samplers: Option<String>,
        /// Overwrite existing outputs.
        #[arg(long)]
        force: bool,
    },
    /// Aggregate finished run directories: mean/std per (sampler, mode, stage).
    Report {
        /// Completed run directories.
        #[arg(required = true)]
        dirs: Vec<String>,
        /// Write the aggregate CSV here as well as stdout.
        #[arg(long)]
        out: Option<String>,
    },
    /// Evaluate a saved checkpoint on a dataset's test split.
    Eval {
        /// Dataset CSV.
        #[arg(long)]
        dataset: String,
        /// Model checkpoint file.
        #[arg(long)]
        model: String,
    },
}

/// Resolve the effective config: defaults < file < --set < dedicated flags,
/// with MTADA_SEED as the seed fallback below all explicit sources.
fn resolve_config(args: &ConfigArgs) -> Result<ExperimentConfig> {
    let (mut cfg, file_keys) = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading config {path}"))?;
            ExperimentConfig::parse_tracking(&text)?
        }
        None => (ExperimentConfig::default(), Default::default()),
    };
    for pair in &args.set {
        let (k, v) = pair
            .split_once('=')
            .with_context(|| format!("--set expects key=value, got {pair:?}"))?;
        cfg.set(k.trim(), v).with_context(|| format!("--set {pair}"))?;
    }
    let mut seed_explicit = file_keys.contains("seed")
        || args.set.iter().any(|p| p.trim_start().starts_with("seed"));
    if let Some(seed) = args.seed {
        cfg.seed = seed;
        seed_explicit = true;
    }
    if !seed_explicit {
        if let Ok(env_seed) = std::env::var("MTADA_SEED") {
            cfg.seed = env_seed
                .parse()
                .context("MTADA_SEED must be an unsigned integer")?;
        }
    }
    if let Some(v) = &args.mode {
        cfg.mode = v.clone();
    }
    if let Some(v) = args.alpha {
        cfg.alpha = v;
    }
    if let Some(v) = &args.sampler {
        cfg.sampler = v.clone();
    }
    if let Some(v) = args.beta {
        cfg.beta = v;
    }
    if let Some(v) = args.stages {
        cfg.stages = v;
        if cfg.budgets.len() != v {
            let b = cfg.budgets.first().copied().unwrap_or(10);
            cfg.budgets = vec![b; v];
        }
    }
    if let Some(v) = args.budget {
        cfg.budgets = vec![v; cfg.stages.max(1)];
    }
    if let Some(v) = &args.dataset {
        cfg.dataset = Some(v.clone());
    }
    if let Some(v) = &args.out {
        cfg.out = v.clone();
    }
    cfg.finalize()?;
    Ok(cfg)
}

fn parse_u64_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<u64>()
                .with_context(|| format!("bad seed {p:?}"))
        })
        .collect()
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match cli.command {
        Command::Generate { cfg, force } => {
            let cfg = resolve_config(&cfg)?;
            runner::cmd_generate(&cfg, force)
        }
        Command::Run {
            cfg,
            seeds,
            samplers,
            force,
        } => {
            let base = resolve_config(&cfg)?;
            let seeds = match seeds {
                Some(s) => parse_u64_list(&s)?,
                None => vec![base.seed],
            };
            let samplers = match samplers {
                Some(s) => s.split(',').map(|p| p.trim().to_string()).collect(),
                None => vec![base.sampler.clone()],
            };
            if seeds.is_empty() || samplers.is_empty() {
                bail!("empty seed or sampler list");
            }
            runner::cmd_run(&base, &seeds, &samplers, force)
        }
        Command::Report { dirs, out } => report::cmd_report(&dirs, out.as_deref()),
        Command::Eval { dataset, model } => runner::cmd_eval(&dataset, &model),
    }
}
