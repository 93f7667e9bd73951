//! `sgnn explain`: explainability bundle for a trained checkpoint —
//! embedding PCA up to a cumulative-variance target, component-feature
//! correlations, an outcome regression on the component scores, residual
//! diagnostics, and a per-region map layer.

use std::path::Path;

use serde_json::{json, Value};

use sgnn_core::explain::{
    extract_embeddings, pc_feature_correlations, pc_outcome_regression, pca_embeddings,
    residual_diagnostics,
};
use sgnn_core::linalg::Mat;
use sgnn_core::nn::{self, GraphOps};

use crate::commands::{load_design, load_graph, num, require, Ctx};
use crate::errors::{CliError, Result};
use crate::io;
use crate::opts::ExplainArgs;

pub fn run(args: ExplainArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let checkpoint_path = require(&args.checkpoint, "--checkpoint")?;
    let regions_path = require(&args.regions, "--regions")?;
    let edges_path = require(&args.edges, "--edges")?;
    let features_path = require(&args.features, "--features")?;
    let target_path = require(&args.target, "--target")?;
    let variance_target = args.variance_target.unwrap_or(0.8);
    if !(0.0 < variance_target && variance_target <= 1.0) {
        return Err(CliError::config("--variance-target must lie in (0, 1]"));
    }

    let (model, trained_columns) = io::read_checkpoint(checkpoint_path)?;
    let graph = load_graph(regions_path, edges_path)?;
    let (x, names) = load_design(&graph, features_path, args.encodings.as_deref())?;
    if names != trained_columns {
        return Err(CliError::input(
            features_path,
            "feature columns do not match the ones the checkpoint was trained on",
        ));
    }
    let target = crate::commands::load_target(target_path, &graph, false)?;

    let embeddings = extract_embeddings(&model, &graph, &x)?;
    let (yhat, _) = nn::forward(&model, &GraphOps::new(&graph), &x);
    let pca = pca_embeddings(&embeddings, variance_target)?;
    let k = pca.n_selected;
    let correlations = pc_feature_correlations(&pca.scores, &x);

    // outcome regression over labeled regions only
    let observed = target.observed_indices();
    if observed.is_empty() {
        return Err(CliError::input(target_path, "no region has a target value"));
    }
    let mut scores_obs = Mat::zeros(observed.len(), k);
    let mut y_obs = Vec::with_capacity(observed.len());
    for (r, &i) in observed.iter().enumerate() {
        scores_obs.row_mut(r).copy_from_slice(pca.scores.row(i));
        y_obs.push(target.values[i]);
    }
    let regression = pc_outcome_regression(&scores_obs, &y_obs)?;
    let residuals = residual_diagnostics(&yhat, &target.values, &target.mask)?;

    // --- bundle files ---
    let mut cumulative = 0.0;
    let ratio_rows: Vec<Vec<String>> = pca
        .ratios
        .iter()
        .enumerate()
        .map(|(i, &r)| {
            cumulative += r;
            vec![
                (i + 1).to_string(),
                io::fmt_f64(r),
                io::fmt_f64(cumulative),
                (i < k).to_string(),
            ]
        })
        .collect();
    io::write_csv(
        &ctx.out_path("ratios.csv"),
        &["component", "ratio", "cumulative", "selected"],
        &ratio_rows,
    )?;

    let pc_names: Vec<String> = (1..=k).map(|c| format!("pc{c}")).collect();
    io::write_node_matrix(&ctx.out_path("scores.csv"), &graph, &pc_names, &pca.scores)?;

    let mut loading_header: Vec<&str> = vec!["dimension"];
    loading_header.extend(pc_names.iter().map(String::as_str));
    let loading_rows: Vec<Vec<String>> = (0..pca.loadings.rows)
        .map(|d| {
            let mut row = vec![(d + 1).to_string()];
            row.extend(pca.loadings.row(d).iter().map(|&v| io::fmt_f64(v)));
            row
        })
        .collect();
    io::write_csv(&ctx.out_path("loadings.csv"), &loading_header, &loading_rows)?;

    let corr_rows: Vec<Vec<String>> = correlations
        .ranked
        .iter()
        .enumerate()
        .flat_map(|(c, ranked)| {
            ranked.iter().enumerate().map(move |(rank, &(j, r))| {
                (c, rank, j, r)
            })
        })
        .map(|(c, rank, j, r)| {
            vec![
                (c + 1).to_string(),
                names[j].clone(),
                io::fmt_f64(r),
                (rank + 1).to_string(),
            ]
        })
        .collect();
    io::write_csv(
        &ctx.out_path("correlations.csv"),
        &["component", "feature", "r", "rank"],
        &corr_rows,
    )?;

    io::write_json(
        &ctx.out_path("pc_regression.json"),
        &json!({
            "intercept": num(regression.intercept),
            "coefficients": regression.coefficients.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "r2": num(regression.r2),
            "residual_mean": num(residuals.mean),
            "residual_std": num(residuals.std),
            "histogram": residuals.histogram,
            "bin_lo": num(residuals.bin_lo),
            "bin_hi": num(residuals.bin_hi),
        }),
    )?;

    let residual_rows: Vec<Vec<String>> = (0..graph.node_count())
        .map(|i| {
            vec![
                graph.regions[i].id.clone(),
                residuals.residuals[i].map(io::fmt_f64).unwrap_or_default(),
            ]
        })
        .collect();
    io::write_csv(&ctx.out_path("residuals.csv"), &["id", "residual"], &residual_rows)?;

    // map layer: GeoJSON when every region has a boundary, CSV otherwise
    let have_boundaries = graph.regions.iter().all(|r| r.boundary.is_some());
    let layer_file = if have_boundaries {
        let features: Vec<Value> = (0..graph.node_count())
            .map(|i| {
                let mut extra = serde_json::Map::new();
                for (c, name) in pc_names.iter().enumerate() {
                    extra.insert(name.clone(), num(pca.scores[(i, c)]));
                }
                extra.insert("yhat".into(), num(yhat[i]));
                extra.insert(
                    "y".into(),
                    if target.mask[i] { num(target.values[i]) } else { Value::Null },
                );
                extra.insert(
                    "residual".into(),
                    residuals.residuals[i].map(num).unwrap_or(Value::Null),
                );
                extra.insert("missing".into(), json!(!target.mask[i]));
                io::region_feature(&graph.regions[i], Value::Object(extra))
            })
            .collect();
        io::write_json(
            &ctx.out_path("layers.geojson"),
            &json!({ "type": "FeatureCollection", "features": features }),
        )?;
        "layers.geojson"
    } else {
        eprintln!("warning: regions carry no boundary polygons; writing layers.csv instead of layers.geojson");
        let mut header: Vec<&str> = vec!["id"];
        header.extend(pc_names.iter().map(String::as_str));
        header.extend(["yhat", "y", "residual", "missing"]);
        let rows: Vec<Vec<String>> = (0..graph.node_count())
            .map(|i| {
                let mut row = vec![graph.regions[i].id.clone()];
                row.extend((0..k).map(|c| io::fmt_f64(pca.scores[(i, c)])));
                row.push(io::fmt_f64(yhat[i]));
                row.push(if target.mask[i] {
                    io::fmt_f64(target.values[i])
                } else {
                    String::new()
                });
                row.push(residuals.residuals[i].map(io::fmt_f64).unwrap_or_default());
                row.push((!target.mask[i]).to_string());
                row
            })
            .collect();
        io::write_csv(&ctx.out_path("layers.csv"), &header, &rows)?;
        "layers.csv"
    };

    let mut inputs: Vec<&Path> = vec![
        checkpoint_path,
        regions_path,
        edges_path,
        features_path,
        target_path,
    ];
    if let Some(e) = &args.encodings {
        inputs.push(e);
    }
    io::write_manifest(
        &ctx.out,
        "explain",
        ctx.seed,
        json!({ "variance_target": variance_target }),
        &inputs,
        &[
            "ratios.csv",
            "scores.csv",
            "loadings.csv",
            "correlations.csv",
            "pc_regression.json",
            "residuals.csv",
            layer_file,
        ],
    )?;
    for w in pca.warnings.iter().chain(&correlations.warnings) {
        eprintln!("warning: {w}");
    }
    println!(
        "explain: {} components reach {} cumulative variance; outcome regression r2 {}",
        k,
        io::fmt_f64(variance_target),
        io::fmt_f64(regression.r2)
    );
    Ok(())
}
