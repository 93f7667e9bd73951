//! `sgnn preprocess`: standardize feature columns and iteratively drop
//! the most collinear free column while any VIF exceeds its threshold.

use serde_json::json;

use sgnn_core::features::{
    standardize, vif_select, FeatureTable, VIF_THRESHOLD_FIXED, VIF_THRESHOLD_FREE,
};

use crate::commands::{num, require, Ctx};
use crate::errors::Result;
use crate::io;
use crate::opts::PreprocessArgs;

pub fn run(args: PreprocessArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let features_path = require(&args.features, "--features")?;
    let fixed = match &args.fixed {
        Some(path) => io::read_fixed_list(path)?,
        None => Vec::new(),
    };

    // rows follow the region file when given, else the feature CSV itself
    let table: FeatureTable = match &args.regions {
        Some(regions_path) => {
            let regions = io::read_regions(regions_path)?;
            let graph = sgnn_core::graph::RegionGraph::from_edges(regions, &[]);
            io::read_features(features_path, &graph, &fixed)?
        }
        None => {
            let raw = io::read_id_table(features_path)?;
            FeatureTable::new(raw.ids, raw.column_names, &fixed, raw.cells)?
        }
    };

    let standardized = standardize(&table)?;
    let skip_vif = args.skip_vif.unwrap_or(false);
    let (selected, removals, fixed_violations) = if skip_vif {
        (standardized.clone(), Vec::new(), Vec::new())
    } else {
        let selection = vif_select(&standardized, VIF_THRESHOLD_FREE, VIF_THRESHOLD_FIXED);
        (
            standardized.select_columns(&selection.retained),
            selection.removals,
            selection.fixed_violations,
        )
    };

    io::write_features(&ctx.out_path("features_selected.csv"), &selected)?;
    let removal_rows: Vec<Vec<String>> = removals
        .iter()
        .map(|r| vec![r.iteration.to_string(), r.column.clone(), io::fmt_f64(r.vif)])
        .collect();
    io::write_csv(
        &ctx.out_path("vif_removals.csv"),
        &["iteration", "column", "vif"],
        &removal_rows,
    )?;
    let summary = json!({
        "input_columns": table.n_cols(),
        "retained_columns": selected.n_cols(),
        "removed": removals.iter().map(|r| r.column.clone()).collect::<Vec<_>>(),
        "fixed_violations": fixed_violations
            .iter()
            .map(|(name, v)| json!({ "column": name, "vif": num(*v) }))
            .collect::<Vec<_>>(),
        "warnings": selected.warnings,
    });
    io::write_json(&ctx.out_path("preprocess_summary.json"), &summary)?;

    let mut inputs: Vec<&std::path::Path> = vec![features_path];
    if let Some(f) = &args.fixed {
        inputs.push(f);
    }
    if let Some(r) = &args.regions {
        inputs.push(r);
    }
    io::write_manifest(
        &ctx.out,
        "preprocess",
        ctx.seed,
        json!({
            "features": features_path.display().to_string(),
            "fixed": fixed,
            "skip_vif": skip_vif,
        }),
        &inputs,
        &["features_selected.csv", "vif_removals.csv", "preprocess_summary.json"],
    )?;
    println!(
        "preprocess: {} -> {} columns ({} removed by VIF)",
        table.n_cols(),
        selected.n_cols(),
        removals.len()
    );
    Ok(())
}
