//! Command-line front end: one recipe per invocation, configured by a TOML
//! file, writing CSV/JSON artifacts and a `manifest.json` into one directory.

pub mod config;
pub mod error;
pub mod output;
pub mod recipes;

use std::path::PathBuf;
use std::time::Instant;

use clap::Parser;

use config::{ExperimentConfig, Recipe};
use error::CliError;
use output::{RunManifest, Writer};

/// Default output directory when neither `--output` nor `output_dir` is given.
pub const OUTPUT_ENV: &str = "FRACSYNC_OUTPUT_DIR";

#[derive(Debug, Parser)]
#[command(name = "fracsync", version, about = "Synchronization experiments on open spin-1 chains")]
pub struct Args {
    /// recipe to run; must match `recipe` in the config when both are set
    #[arg(value_enum)]
    pub recipe: Recipe,
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub output: Option<PathBuf>,
    /// overrides `seed` from the config
    #[arg(long)]
    pub seed: Option<u64>,
    /// worker threads for seed sweeps
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
    /// check the config and print a resource estimate without running
    #[arg(long)]
    pub validate: bool,
}

pub enum Outcome {
    Validated(recipes::ResourceEstimate),
    Ran(RunManifest),
}

/// Loads the config, applies command-line overrides and validates it.
pub fn prepare(args: &Args) -> Result<ExperimentConfig, CliError> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    match cfg.recipe {
        Some(r) if r != args.recipe => {
            return Err(CliError::Config(format!("config recipe `{}` does not match subcommand `{}`", r.name(), args.recipe.name())));
        }
        _ => cfg.recipe = Some(args.recipe),
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if args.threads == 0 {
        return Err(CliError::Config("--threads must be at least 1".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output_dir(args: &Args, cfg: &ExperimentConfig) -> PathBuf {
    args.output
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out").join(args.recipe.name()))
}

pub fn execute(args: &Args) -> Result<Outcome, CliError> {
    let cfg = prepare(args)?;
    if args.validate {
        return Ok(Outcome::Validated(recipes::estimate(&cfg)));
    }
    let start = Instant::now();
    let hash = cfg.hash();
    let mut w = Writer::new(&output_dir(args, &cfg), &hash)?;
    recipes::run(&cfg, &mut w, args.threads)?;
    let manifest = RunManifest {
        recipe: args.recipe.name().to_string(),
        config_hash: hash,
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        seed: cfg.seed,
        wall_time_s: start.elapsed().as_secs_f64(),
        peak_rss_bytes: output::peak_rss_bytes(),
        outputs: Vec::new(),
    };
    Ok(Outcome::Ran(w.finish(manifest)?))
}
