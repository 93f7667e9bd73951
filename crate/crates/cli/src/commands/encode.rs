//! `sgnn encode`: positional and locational node encodings as an
//! id-keyed CSV with columns named `<kind>_<t>`.

use std::path::Path;

use serde_json::json;

use sgnn_core::encodings::{
    align_location_embeddings, fallback_coordinate_encoding, laplacian_smooth,
    laplacian_spectral_pe, pca_reduce, random_walk_pe, NodeEncoding,
};
use sgnn_core::graph::RegionGraph;
use sgnn_core::linalg::Mat;

use crate::commands::{load_graph, parse_string_list, require, Ctx};
use crate::errors::{CliError, Result};
use crate::io;
use crate::opts::EncodeArgs;

fn build_one(
    kind: &str,
    graph: &RegionGraph,
    args: &EncodeArgs,
    features_path: Option<&Path>,
) -> Result<(NodeEncoding, Vec<String>)> {
    let named = |enc: NodeEncoding, label: &str| {
        let names = (1..=enc.values.cols).map(|t| format!("{label}_{t}")).collect();
        (enc, names)
    };
    match kind {
        "laplacian_spectral" => {
            let dim = args.dim.unwrap_or(8).min(graph.node_count().saturating_sub(1)).max(1);
            Ok(named(laplacian_spectral_pe(graph, dim)?, "laplacian_spectral"))
        }
        "random_walk" => {
            let steps = args.steps.unwrap_or(8);
            if steps == 0 {
                return Err(CliError::config("--steps must be at least 1"));
            }
            Ok(named(random_walk_pe(graph, steps), "random_walk"))
        }
        "location" => {
            let enc = match &args.location_embeddings {
                Some(path) => {
                    let rows = io::read_location_embeddings(path)?;
                    let aligned = align_location_embeddings(graph, &rows)?;
                    match args.pca_dim {
                        Some(k) => pca_reduce(&aligned, k)?,
                        None => aligned,
                    }
                }
                None => fallback_coordinate_encoding(graph, 2),
            };
            Ok(named(enc, "location"))
        }
        "laplacian_smooth" => {
            let features_path = features_path.ok_or_else(|| {
                CliError::config("the laplacian_smooth kind needs --features")
            })?;
            let table = io::read_features(features_path, graph, &[])?;
            let enc = laplacian_smooth(graph, &table, args.lambda.unwrap_or(0.5))?;
            Ok(named(enc, "laplacian_smooth"))
        }
        other => Err(CliError::config(format!(
            "unknown encoding kind {other:?} (laplacian_spectral|random_walk|location|laplacian_smooth)"
        ))),
    }
}

pub fn run(args: EncodeArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let regions_path = require(&args.regions, "--regions")?;
    let edges_path = require(&args.edges, "--edges")?;
    let kinds = parse_string_list(
        args.kinds
            .as_deref()
            .unwrap_or("laplacian_spectral,random_walk"),
    );
    if kinds.is_empty() {
        return Err(CliError::config("--kinds selects no encodings"));
    }

    let graph = load_graph(regions_path, edges_path)?;
    let mut values = Mat::zeros(graph.node_count(), 0);
    let mut names = Vec::new();
    for kind in &kinds {
        let (enc, col_names) = build_one(kind, &graph, &args, args.features.as_deref())?;
        values = values.hcat(&enc.values);
        names.extend(col_names);
    }

    io::write_node_matrix(&ctx.out_path("encodings.csv"), &graph, &names, &values)?;
    let mut inputs: Vec<&Path> = vec![regions_path, edges_path];
    for opt in [&args.location_embeddings, &args.features] {
        if let Some(p) = opt {
            inputs.push(p);
        }
    }
    io::write_manifest(
        &ctx.out,
        "encode",
        ctx.seed,
        json!({
            "kinds": kinds,
            "dim": args.dim,
            "steps": args.steps,
            "pca_dim": args.pca_dim,
            "lambda": args.lambda,
        }),
        &inputs,
        &["encodings.csv"],
    )?;
    println!("encode: {} columns over {} regions", names.len(), graph.node_count());
    Ok(())
}
