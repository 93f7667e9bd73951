//! `sgnn build-graph`: adjacency from region geometry, optionally
//! expanded to a k-hop relation, persisted as an edge list.

use serde_json::json;

use sgnn_core::graph::{build_contiguity_graph, connected_components, khop_expand, knn_graph};

use crate::commands::{require, Ctx};
use crate::errors::{CliError, Result};
use crate::io;
use crate::opts::BuildGraphArgs;

pub fn run(args: BuildGraphArgs, ctx: &Ctx) -> Result<()> {
    let args = args.merged(ctx.config())?;
    let regions_path = require(&args.regions, "--regions")?;
    let base = args.base.as_deref().unwrap_or("contiguity");
    let hops = args.hops.unwrap_or(1);
    if hops == 0 {
        return Err(CliError::config("--hops must be at least 1"));
    }

    let regions = io::read_regions(regions_path)?;
    let graph = match base {
        "contiguity" => build_contiguity_graph(regions)?,
        "knn" => knn_graph(regions, args.k.unwrap_or(8))?,
        other => {
            return Err(CliError::config(format!(
                "unknown graph base {other:?} (contiguity|knn)"
            )))
        }
    };
    let graph = if hops > 1 { khop_expand(&graph, hops) } else { graph };
    let components = connected_components(&graph).len();

    io::write_edges(&ctx.out_path("edges.csv"), &graph)?;
    let summary = json!({
        "nodes": graph.node_count(),
        "edges": graph.edge_count(),
        "components": components,
    });
    io::write_json(&ctx.out_path("graph_summary.json"), &summary)?;
    io::write_manifest(
        &ctx.out,
        "build-graph",
        ctx.seed,
        json!({
            "regions": regions_path.display().to_string(),
            "base": base,
            "k": args.k,
            "hops": hops,
        }),
        &[regions_path],
        &["edges.csv", "graph_summary.json"],
    )?;
    println!(
        "build-graph: nodes={} edges={} components={}",
        graph.node_count(),
        graph.edge_count(),
        components
    );
    Ok(())
}
