//! `sgnn baselines`: in-sample statistical baselines — OLS, the spatial
//! lag model by profile maximum likelihood, and geographically weighted
//! regression with leave-one-out bandwidth selection — plus metrics for
//! externally produced predictions.

use std::collections::BTreeMap;
use std::path::Path;

use serde_json::{json, Value};

use sgnn_core::baselines::{align_external_predictions, gwr_fit_predict, ols_fit, slm_fit, GwrConfig};
use sgnn_core::cv::metrics;
use sgnn_core::graph::RegionGraph;

use crate::commands::{load_design, load_graph, load_target, num, parse_f64_list, require, Ctx};
use crate::errors::{CliError, Result};
use crate::io;
use crate::opts::BaselinesArgs;

/// Default GWR bandwidth candidates: fractions of the centroid
/// bounding-box diagonal, spanning hyper-local to near-global kernels.
fn default_bandwidths(graph: &RegionGraph) -> Vec<f64> {
    let xs: Vec<f64> = graph.regions.iter().map(|r| r.centroid.0).collect();
    let ys: Vec<f64> = graph.regions.iter().map(|r| r.centroid.1).collect();
    let span = |v: &[f64]| {
        v.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - v.iter().cloned().fold(f64::INFINITY, f64::min)
    };
    let diag = (span(&xs).powi(2) + span(&ys).powi(2)).sqrt().max(1e-9);
    [0.05, 0.1, 0.2, 0.4, 0.8].iter().map(|f| f * diag).collect()
}

pub fn run(args: BaselinesArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let regions_path = require(&args.regions, "--regions")?;
    let edges_path = require(&args.edges, "--edges")?;
    let features_path = require(&args.features, "--features")?;
    let target_path = require(&args.target, "--target")?;

    let graph = load_graph(regions_path, edges_path)?;
    let (x, _) = load_design(&graph, features_path, None)?;
    let target = load_target(target_path, &graph, true)?;
    let y = &target.values;
    let n = graph.node_count();

    let ols = ols_fit(&x, y)?;
    let slm = slm_fit(&graph, &x, y)?;
    let bandwidths = match &args.bandwidths {
        Some(s) => {
            let b = parse_f64_list(s, "--bandwidths")?;
            if b.is_empty() || b.iter().any(|&v| v <= 0.0) {
                return Err(CliError::config("--bandwidths needs positive values"));
            }
            b
        }
        None => default_bandwidths(&graph),
    };
    let gwr = gwr_fit_predict(&graph, &x, y, &GwrConfig { bandwidths: bandwidths.clone() })?;

    let mut external_json = Value::Null;
    let mut external_pred: Option<Vec<f64>> = None;
    if let Some(path) = &args.external {
        let table = io::read_id_table(path)?;
        if table.column_names.len() != 1 {
            return Err(CliError::input(path, "external CSV needs exactly one yhat column"));
        }
        let mut rows = BTreeMap::new();
        for (i, id) in table.ids.iter().enumerate() {
            let v = table.cells[i][0]
                .ok_or_else(|| CliError::input(path, format!("missing prediction for {id:?}")))?;
            rows.insert(id.clone(), v);
        }
        let aligned = align_external_predictions(&graph, &rows)?;
        let (rmse, mae, r2) = metrics(&aligned, y, &vec![true; n])?;
        external_json = json!({ "rmse": num(rmse), "mae": num(mae), "r2": num(r2) });
        external_pred = Some(aligned);
    }

    let pred_rows: Vec<Vec<String>> = (0..n)
        .map(|i| {
            let mut row = vec![
                graph.regions[i].id.clone(),
                io::fmt_f64(y[i]),
                io::fmt_f64(ols.fitted[i]),
                io::fmt_f64(slm.fitted[i]),
                io::fmt_f64(gwr.predictions[i]),
            ];
            if let Some(p) = &external_pred {
                row.push(io::fmt_f64(p[i]));
            }
            row
        })
        .collect();
    let mut header = vec!["id", "y", "ols", "slm", "gwr"];
    if external_pred.is_some() {
        header.push("external");
    }
    io::write_csv(&ctx.out_path("baseline_predictions.csv"), &header, &pred_rows)?;

    let summary = json!({
        "ols": {
            "intercept": num(ols.intercept),
            "coefficients": ols.coefficients.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "r2": num(ols.r2),
        },
        "slm": {
            "rho": num(slm.rho),
            "intercept": num(slm.intercept),
            "coefficients": slm.coefficients.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "pseudo_r2": num(slm.pseudo_r2),
            "log_likelihood": num(slm.log_likelihood),
        },
        "gwr": {
            "bandwidth": num(gwr.bandwidth),
            "candidates": bandwidths.iter().map(|&v| num(v)).collect::<Vec<_>>(),
            "r2": num(gwr.r2),
            "fallback_regions": gwr.fallback_regions,
            "warnings": gwr.warnings,
        },
        "external": external_json,
    });
    io::write_json(&ctx.out_path("baselines.json"), &summary)?;

    let mut inputs: Vec<&Path> = vec![regions_path, edges_path, features_path, target_path];
    if let Some(e) = &args.external {
        inputs.push(e);
    }
    io::write_manifest(
        &ctx.out,
        "baselines",
        ctx.seed,
        json!({ "bandwidths": bandwidths }),
        &inputs,
        &["baselines.json", "baseline_predictions.csv"],
    )?;
    println!(
        "baselines: ols r2 {}, slm rho {} pseudo-r2 {}, gwr bw {} r2 {}",
        io::fmt_f64(ols.r2),
        io::fmt_f64(slm.rho),
        io::fmt_f64(slm.pseudo_r2),
        io::fmt_f64(gwr.bandwidth),
        io::fmt_f64(gwr.r2),
    );
    Ok(())
}
