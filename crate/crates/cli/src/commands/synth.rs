//! `sgnn synth`: deterministic synthetic region grid with features and a
//! planted outcome, in the exact formats the other commands consume.

use serde_json::json;

use sgnn_core::synth::{generate, SynthConfig};

use crate::commands::{num, parse_f64_list, Ctx};
use crate::errors::{CliError, Result};
use crate::io;
use crate::opts::SynthArgs;

fn parse_collinear(s: &str) -> Result<Vec<(usize, f64)>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|pair| {
            let (src, std) = pair
                .split_once(':')
                .ok_or_else(|| CliError::config(format!("--collinear: {pair:?} is not src:std")))?;
            Ok((
                src.parse()
                    .map_err(|_| CliError::config(format!("--collinear: bad column index {src:?}")))?,
                std.parse()
                    .map_err(|_| CliError::config(format!("--collinear: bad noise std {std:?}")))?,
            ))
        })
        .collect()
}

pub fn run(args: SynthArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let defaults = SynthConfig::default();
    let config = SynthConfig {
        grid_rows: args.rows.unwrap_or(defaults.grid_rows),
        grid_cols: args.cols.unwrap_or(defaults.grid_cols),
        n_features: args.n_features.unwrap_or(defaults.n_features),
        smoothing_passes: args.passes.unwrap_or(defaults.smoothing_passes),
        collinear_pairs: match &args.collinear {
            Some(s) => parse_collinear(s)?,
            None => Vec::new(),
        },
        beta: match &args.beta {
            Some(s) => parse_f64_list(s, "--beta")?,
            None => defaults.beta.clone(),
        },
        rho: args.rho.unwrap_or(defaults.rho),
        nonlinear: args.nonlinear.unwrap_or(false),
        noise_std: args.noise_std.unwrap_or(defaults.noise_std),
        seed: ctx.seed,
    };
    if !(config.rho > -1.0 && config.rho < 1.0) {
        return Err(CliError::config("--rho must lie in (-1, 1)"));
    }
    if config.grid_rows * config.grid_cols < 10 {
        return Err(CliError::config("grid needs at least 10 regions"));
    }
    if config.beta.len() > config.n_features {
        return Err(CliError::config("--beta has more entries than --n-features"));
    }
    for &(src, _) in &config.collinear_pairs {
        if src >= config.n_features {
            return Err(CliError::config(format!(
                "--collinear source column {src} is out of range"
            )));
        }
    }

    let data = generate(&config)?;

    io::write_regions_geojson(&ctx.out_path("regions.geojson"), &data.graph.regions)?;
    io::write_features(&ctx.out_path("features.csv"), &data.features)?;
    io::write_target(
        &ctx.out_path("target.csv"),
        &data.target,
        &data.features.region_ids,
    )?;
    let truth = json!({
        "beta": data.truth.beta,
        "rho": num(data.truth.rho),
        "nonlinear": data.truth.nonlinear,
        "noise_std": num(data.truth.noise_std),
        "collinear_map": data.truth.collinear_map,
    });
    io::write_json(&ctx.out_path("truth.json"), &truth)?;

    let config_json = json!({
        "rows": config.grid_rows,
        "cols": config.grid_cols,
        "n_features": config.n_features,
        "passes": config.smoothing_passes,
        "collinear": config.collinear_pairs,
        "beta": config.beta,
        "rho": num(config.rho),
        "nonlinear": config.nonlinear,
        "noise_std": num(config.noise_std),
    });
    io::write_manifest(
        &ctx.out,
        "synth",
        ctx.seed,
        config_json,
        &[],
        &["regions.geojson", "features.csv", "target.csv", "truth.json"],
    )?;
    println!(
        "synth: {} regions, {} feature columns",
        data.graph.node_count(),
        data.features.n_cols()
    );
    Ok(())
}
