//! `sgnn cv`: buffered spatial cross-validation, optionally preceded by
//! uniform random hyperparameter search with an inner resampling
//! objective. Folds are independent given the command seed, so they can
//! be partitioned across `--jobs` worker threads with identical results.

use std::path::Path;

use serde_json::{json, Value};

use sgnn_core::cv::{
    inner_cv_score, loocv_splits, random_search, run_cv, tenfold_split, BufferRole, Candidate,
    CvResult, FoldMetrics, SearchSpace,
};
use sgnn_core::graph::{FoldPlan, RegionGraph};
use sgnn_core::linalg::Mat;
use sgnn_core::nn::{ModelSpec, TrainConfig};

use crate::commands::{
    load_design, load_graph, load_target, mean_std, num, parse_string_list, require,
    resolve_model, Ctx,
};
use crate::errors::{CliError, Result};
use crate::io;
use crate::opts::CvArgs;

/// Evaluate the folds, splitting the plan list round-robin over worker
/// threads. Per-fold seeding depends only on (seed, fold id), so any
/// partition reproduces the single-threaded results exactly.
#[allow(clippy::too_many_arguments)]
pub fn run_folds(
    graph: &RegionGraph,
    x: &Mat,
    y: &[f64],
    spec: &ModelSpec,
    config: &TrainConfig,
    plans: &[FoldPlan],
    hops: usize,
    buffer_role: BufferRole,
    seed: u64,
    jobs: usize,
) -> Result<(Vec<FoldMetrics>, Vec<String>)> {
    let jobs = jobs.max(1).min(plans.len().max(1));
    let results: Vec<sgnn_core::error::Result<CvResult>> = if jobs == 1 {
        vec![run_cv(graph, x, y, spec, config, plans, hops, buffer_role, seed)]
    } else {
        let chunks: Vec<Vec<FoldPlan>> = (0..jobs)
            .map(|w| plans.iter().skip(w).step_by(jobs).cloned().collect())
            .collect();
        std::thread::scope(|scope| {
            let handles: Vec<_> = chunks
                .iter()
                .map(|chunk| {
                    scope.spawn(move || {
                        run_cv(graph, x, y, spec, config, chunk, hops, buffer_role, seed)
                    })
                })
                .collect();
            handles.into_iter().map(|h| h.join().expect("cv worker")).collect()
        })
    };
    let mut per_fold = Vec::new();
    let mut warnings = Vec::new();
    for r in results {
        let r = r?;
        per_fold.extend(r.per_fold);
        warnings.extend(r.warnings);
    }
    per_fold.sort_by_key(|f| f.fold_id);
    warnings.sort();
    Ok((per_fold, warnings))
}

fn candidate_json(c: &Candidate) -> Value {
    json!({
        "lr": c.lr,
        "weight_decay": c.weight_decay,
        "hidden1": c.hidden1,
        "hidden2": c.hidden2,
        "dropout": c.dropout,
        "epochs": c.epochs,
        "optimizer": c.optimizer.label(),
        "patience": c.patience,
    })
}

pub fn run(args: CvArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let regions_path = require(&args.regions, "--regions")?;
    let edges_path = require(&args.edges, "--edges")?;
    let features_path = require(&args.features, "--features")?;
    let target_path = require(&args.target, "--target")?;

    let graph = load_graph(regions_path, edges_path)?;
    let (x, _) = load_design(&graph, features_path, args.encodings.as_deref())?;
    let target = load_target(target_path, &graph, true)?;
    let (mut spec, mut config) = resolve_model(&args.model, ctx.seed)?;

    let hops = args.hops.unwrap_or(2);
    if hops == 0 {
        return Err(CliError::config("--hops must be at least 1"));
    }
    let buffer_role = match args.buffer_role.as_deref() {
        None => BufferRole::Train,
        Some(s) => BufferRole::parse(s)
            .ok_or_else(|| CliError::config(format!("unknown buffer role {s:?} (train|excluded)")))?,
    };
    let scheme = args.scheme.as_deref().unwrap_or("tenfold");
    let plans = match scheme {
        "tenfold" => tenfold_split(&graph, ctx.seed, hops)?,
        "loocv" => {
            let groups = args
                .groups
                .as_deref()
                .map(parse_string_list)
                .filter(|g| !g.is_empty())
                .ok_or_else(|| CliError::config("--scheme loocv needs --groups a,b,c"))?;
            loocv_splits(&graph, &groups, hops)?
        }
        other => return Err(CliError::config(format!("unknown scheme {other:?} (tenfold|loocv)"))),
    };

    // optional hyperparameter search over all labeled nodes, tuned once
    // before the outer folds rather than nested per fold
    let search_rounds = args.search_rounds.unwrap_or(0);
    let mut search_json = Value::Null;
    if search_rounds > 0 {
        let eligible: Vec<usize> = (0..graph.node_count()).collect();
        let base_spec = spec.clone();
        let (best, trials) = random_search(&SearchSpace::default(), search_rounds, ctx.seed, |t, cand| {
            let (s, c) = cand.apply(&base_spec);
            let trial_seed = ctx.seed ^ (t as u64 + 1).wrapping_mul(0x517CC1B727220A95);
            inner_cv_score(&graph, &x, &target.values, &eligible, &s, &c, trial_seed)
        })?;
        let (s, c) = best.apply(&spec);
        spec = s;
        config = TrainConfig { seed: ctx.seed, ..c };
        search_json = json!({
            "rounds": search_rounds,
            "best": candidate_json(&best),
            "trials": trials
                .iter()
                .map(|t| json!({ "index": t.index, "score": num(t.score), "candidate": candidate_json(&t.candidate) }))
                .collect::<Vec<_>>(),
        });
    }

    let (per_fold, warnings) = run_folds(
        &graph,
        &x,
        &target.values,
        &spec,
        &config,
        &plans,
        hops,
        buffer_role,
        ctx.seed,
        ctx.jobs,
    )?;

    // results.csv: one row per fold and metric, plus aggregate rows
    let mut rows: Vec<Vec<String>> = Vec::new();
    for f in &per_fold {
        for (metric, v) in [("rmse", f.rmse), ("mae", f.mae), ("r2", f.r2)] {
            rows.push(vec![f.fold_id.to_string(), metric.to_string(), io::fmt_f64(v)]);
        }
    }
    let mut aggregate = serde_json::Map::new();
    for (metric, values) in [
        ("rmse", per_fold.iter().map(|f| f.rmse).collect::<Vec<_>>()),
        ("mae", per_fold.iter().map(|f| f.mae).collect()),
        ("r2", per_fold.iter().map(|f| f.r2).collect()),
    ] {
        let (mean, std) = mean_std(values.iter().copied());
        rows.push(vec!["mean".to_string(), metric.to_string(), io::fmt_f64(mean)]);
        rows.push(vec!["std".to_string(), metric.to_string(), io::fmt_f64(std)]);
        aggregate.insert(metric.to_string(), json!({ "mean": num(mean), "std": num(std) }));
    }
    io::write_csv(&ctx.out_path("results.csv"), &["fold", "metric", "value"], &rows)?;

    let mut pred_rows: Vec<Vec<String>> = Vec::new();
    for f in &per_fold {
        for &(node, y, yhat) in &f.predictions {
            pred_rows.push(vec![
                graph.regions[node].id.clone(),
                io::fmt_f64(y),
                io::fmt_f64(yhat),
                f.fold_id.to_string(),
            ]);
        }
    }
    io::write_csv(
        &ctx.out_path("predictions.csv"),
        &["id", "y", "yhat", "fold"],
        &pred_rows,
    )?;

    let config_json = json!({
        "scheme": scheme,
        "hops": hops,
        "buffer_role": buffer_role.label(),
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
        "search_rounds": search_rounds,
    });
    let summary = json!({
        "config": config_json,
        "seed": ctx.seed,
        "folds": per_fold.len(),
        "aggregate": Value::Object(aggregate.clone()),
        "warnings": warnings,
        "search": search_json,
    });
    io::write_json(&ctx.out_path("summary.json"), &summary)?;

    let mut inputs: Vec<&Path> = vec![regions_path, edges_path, features_path, target_path];
    if let Some(e) = &args.encodings {
        inputs.push(e);
    }
    io::write_manifest(
        &ctx.out,
        "cv",
        ctx.seed,
        config_json,
        &inputs,
        &["results.csv", "predictions.csv", "summary.json"],
    )?;
    for w in &warnings {
        eprintln!("warning: {w}");
    }
    let r2 = &aggregate["r2"];
    println!(
        "cv: {} folds, mean r2 {} (std {})",
        per_fold.len(),
        r2["mean"],
        r2["std"]
    );
    Ok(())
}
