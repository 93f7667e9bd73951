//! `sgnn train`: fit one network transductively on all labeled regions,
//! holding out a seeded 20% of them for early stopping.

use std::path::Path;

use serde_json::json;

use sgnn_core::nn;
use sgnn_core::rng::Rng;

use crate::commands::{load_design, load_target, require, resolve_model, Ctx};
use crate::errors::{CliError, Result};
use crate::io;
use crate::opts::TrainArgs;

pub fn run(args: TrainArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let regions_path = require(&args.regions, "--regions")?;
    let edges_path = require(&args.edges, "--edges")?;
    let features_path = require(&args.features, "--features")?;
    let target_path = require(&args.target, "--target")?;

    let graph = crate::commands::load_graph(regions_path, edges_path)?;
    let (x, names) = load_design(&graph, features_path, args.encodings.as_deref())?;
    let target = load_target(target_path, &graph, false)?;
    let (spec, config) = resolve_model(&args.model, ctx.seed)?;

    let observed = target.observed_indices();
    if observed.is_empty() {
        return Err(CliError::input(target_path, "no region has a target value"));
    }
    let mut rng = Rng::seed_from_u64(ctx.seed);
    let val_count = observed.len() / 5;
    let picks = rng.sample_indices(observed.len(), val_count);
    let mut val_mask = vec![false; graph.node_count()];
    let mut train_mask = vec![false; graph.node_count()];
    for &i in &observed {
        train_mask[i] = true;
    }
    for &p in &picks {
        val_mask[observed[p]] = true;
        train_mask[observed[p]] = false;
    }

    let model = nn::train(&spec, &graph, &x, &target.values, &train_mask, &val_mask, &config)?;

    io::write_checkpoint(&ctx.out_path("checkpoint.json"), &model, &names)?;
    io::write_training_log(&ctx.out_path("training_log.csv"), &model.training_log)?;

    let mut inputs: Vec<&Path> = vec![regions_path, edges_path, features_path, target_path];
    if let Some(e) = &args.encodings {
        inputs.push(e);
    }
    io::write_manifest(
        &ctx.out,
        "train",
        ctx.seed,
        json!({
            "architecture": spec.architecture.label(),
            "depth": spec.depth,
            "hidden1": spec.hidden1,
            "hidden2": spec.hidden2,
            "dropout": spec.dropout,
            "heads": spec.gat_heads,
            "lr": config.lr,
            "weight_decay": config.weight_decay,
            "optimizer": config.optimizer.label(),
            "epochs": config.epochs,
            "patience": config.patience,
        }),
        &inputs,
        &["checkpoint.json", "training_log.csv"],
    )?;
    let last = model.training_log.last();
    println!(
        "train: {} epochs, final train loss {}, val loss {}",
        model.training_log.len(),
        last.map(|e| io::fmt_f64(e.train_loss)).unwrap_or_default(),
        last.map(|e| io::fmt_f64(e.val_loss)).unwrap_or_default(),
    );
    Ok(())
}
