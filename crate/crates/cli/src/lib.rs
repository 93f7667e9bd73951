//! Command-line pipeline over the spatial graph regression library:
//! stage-per-subcommand with file handoffs, content-hash manifests, and
//! deterministic outputs for any fixed seed.

pub mod commands;
pub mod errors;
pub mod io;
pub mod opts;

use std::path::PathBuf;

use commands::Ctx;
use errors::{CliError, Result};
use opts::{Cli, Command};

/// Resolve globals (flags over config over defaults) and dispatch.
pub fn run(cli: Cli) -> Result<()> {
    let config = match &cli.config {
        Some(path) => Some(io::read_json(path)?),
        None => None,
    };
    let cfg_u64 = |key: &str| -> Result<Option<u64>> {
        match config.as_ref().and_then(|c| c.get(key)) {
            None | Some(serde_json::Value::Null) => Ok(None),
            Some(v) => v
                .as_u64()
                .map(Some)
                .ok_or_else(|| CliError::config(format!("config key {key:?} must be a nonnegative integer"))),
        }
    };
    let ctx = Ctx {
        seed: match cli.seed {
            Some(s) => s,
            None => cfg_u64("seed")?.unwrap_or(0),
        },
        jobs: match cli.jobs {
            Some(j) => j.max(1),
            None => cfg_u64("jobs")?.unwrap_or(1).max(1) as usize,
        },
        out: cli
            .out
            .or_else(|| {
                config
                    .as_ref()
                    .and_then(|c| c.get("out"))
                    .and_then(|v| v.as_str())
                    .map(PathBuf::from)
            })
            .unwrap_or_else(|| PathBuf::from(".")),
        config,
    };
    match cli.command {
        Command::Synth(args) => commands::synth::run(args, &ctx),
        Command::BuildGraph(args) => commands::build_graph::run(args, &ctx),
        Command::Preprocess(args) => commands::preprocess::run(args, &ctx),
        Command::Encode(args) => commands::encode::run(args, &ctx),
        Command::Train(args) => commands::train::run(args, &ctx),
        Command::Cv(args) => commands::cv::run(args, &ctx),
        Command::Ablate(args) => commands::ablate::run(args, &ctx),
        Command::Baselines(args) => commands::baselines::run(args, &ctx),
        Command::Explain(args) => commands::explain::run(args, &ctx),
    }
}
