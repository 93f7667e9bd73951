//! `sgnn ablate`: greedy axis-by-axis component sweep — architecture,
//! then spatial representation, then depth, then encoding combination —
//! scoring each option by a short random hyperparameter search.

use std::path::Path;

use serde_json::json;

use sgnn_core::cv::{ablation_grid, AblationAxes, EncodingConfig, SearchSpace};
use sgnn_core::encodings::align_location_embeddings;

use crate::commands::{load_design, load_graph, load_target, require, Ctx};
use crate::errors::Result;
use crate::io;
use crate::opts::AblateArgs;

pub fn run(args: AblateArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let regions_path = require(&args.regions, "--regions")?;
    let edges_path = require(&args.edges, "--edges")?;
    let features_path = require(&args.features, "--features")?;
    let target_path = require(&args.target, "--target")?;
    let budget = args.budget.unwrap_or(5).max(1);

    let graph = load_graph(regions_path, edges_path)?;
    let (x, _) = load_design(&graph, features_path, None)?;
    let target = load_target(target_path, &graph, true)?;
    let location = match &args.location_embeddings {
        Some(path) => {
            let rows = io::read_location_embeddings(path)?;
            Some(align_location_embeddings(&graph, &rows)?.values)
        }
        None => None,
    };

    let outcome = ablation_grid(
        &graph,
        &x,
        &target.values,
        location.as_ref(),
        &AblationAxes::default(),
        &SearchSpace::default(),
        &EncodingConfig::default(),
        budget,
        ctx.seed,
    )?;

    let rows: Vec<Vec<String>> = outcome
        .steps
        .iter()
        .map(|s| {
            vec![
                s.axis.to_string(),
                s.option.clone(),
                io::fmt_f64(s.score),
                s.chosen.to_string(),
            ]
        })
        .collect();
    io::write_csv(
        &ctx.out_path("ablation.csv"),
        &["axis", "option", "score", "chosen"],
        &rows,
    )?;
    let summary = json!({
        "architecture": outcome.architecture.label(),
        "representation": outcome.representation.label(),
        "depth": outcome.depth,
        "encodings": outcome.encodings.iter().map(|k| k.label()).collect::<Vec<_>>(),
        "budget": budget,
    });
    io::write_json(&ctx.out_path("ablation_summary.json"), &summary)?;

    let mut inputs: Vec<&Path> = vec![regions_path, edges_path, features_path, target_path];
    if let Some(l) = &args.location_embeddings {
        inputs.push(l);
    }
    io::write_manifest(
        &ctx.out,
        "ablate",
        ctx.seed,
        json!({ "budget": budget }),
        &inputs,
        &["ablation.csv", "ablation_summary.json"],
    )?;
    println!(
        "ablate: {} / {} / depth {} / [{}]",
        outcome.architecture.label(),
        outcome.representation.label(),
        outcome.depth,
        outcome
            .encodings
            .iter()
            .map(|k| k.label())
            .collect::<Vec<_>>()
            .join("+"),
    );
    Ok(())
}
