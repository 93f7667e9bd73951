//! Command implementations: one module per pipeline stage.

use std::path::{Path, PathBuf};

use serde_json::Value;

use sgnn_core::features::{FeatureTable, TargetVector};
use sgnn_core::graph::RegionGraph;
use sgnn_core::linalg::Mat;

use crate::errors::{CliError, Result};
use crate::io;

pub mod ablate;
pub mod baselines;
pub mod build_graph;
pub mod cv;
pub mod encode;
pub mod explain;
pub mod preprocess;
pub mod synth;
pub mod train;

/// Resolved global options shared by every command.
pub struct Ctx {
    pub seed: u64,
    pub jobs: usize,
    pub out: PathBuf,
    pub config: Option<Value>,
}

impl Ctx {
    pub fn config(&self) -> Option<&Value> {
        self.config.as_ref()
    }

    pub fn out_path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }
}

/// A required path option that neither the flags nor the config supplied.
pub fn require<'a>(value: &'a Option<PathBuf>, flag: &str) -> Result<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| CliError::config(format!("missing required option {flag}")))
}

/// Regions plus a stored edge list, as one graph.
pub fn load_graph(regions: &Path, edges: &Path) -> Result<RegionGraph> {
    io::read_graph(io::read_regions(regions)?, edges)
}

/// Design matrix for model fitting: feature columns, optionally extended
/// with a stored encoding matrix. Every row must be complete.
pub fn load_design(
    graph: &RegionGraph,
    features: &Path,
    encodings: Option<&Path>,
) -> Result<(Mat, Vec<String>)> {
    let table = io::read_features(features, graph, &[])?;
    if let Some(i) = table.row_mask.iter().position(|&m| !m) {
        return Err(CliError::input(
            features,
            format!("region {:?} has missing feature values", table.region_ids[i]),
        ));
    }
    let mut x = table.values.clone();
    let mut names: Vec<String> = table.columns.iter().map(|c| c.name.clone()).collect();
    if let Some(path) = encodings {
        let (enc_names, enc) = io::read_node_matrix(path, graph)?;
        x = x.hcat(&enc);
        names.extend(enc_names);
    }
    Ok((x, names))
}

/// Target aligned to the graph. `complete` demands a label on every node.
pub fn load_target(path: &Path, graph: &RegionGraph, complete: bool) -> Result<TargetVector> {
    let target = io::read_target(path, graph)?;
    if complete {
        if let Some(i) = target.mask.iter().position(|&m| !m) {
            return Err(CliError::input(
                path,
                format!(
                    "region {:?} has no target value; this command needs a label on every region",
                    graph.regions[i].id
                ),
            ));
        }
    }
    Ok(target)
}

pub fn feature_table_or_default(
    features: &Option<PathBuf>,
    graph: &RegionGraph,
) -> Result<Option<FeatureTable>> {
    match features {
        Some(path) => Ok(Some(io::read_features(path, graph, &[])?)),
        None => Ok(None),
    }
}

/// Model spec and optimizer settings from the shared model options.
pub fn resolve_model(args: &crate::opts::ModelArgs, seed: u64) -> Result<(sgnn_core::nn::ModelSpec, sgnn_core::nn::TrainConfig)> {
    let spec_defaults = sgnn_core::nn::ModelSpec::default();
    let spec = sgnn_core::nn::ModelSpec {
        architecture: match &args.architecture {
            Some(s) => io::parse_architecture(s)?,
            None => spec_defaults.architecture,
        },
        depth: args.depth.unwrap_or(spec_defaults.depth),
        hidden1: args.hidden1.unwrap_or(spec_defaults.hidden1),
        hidden2: args.hidden2.unwrap_or(spec_defaults.hidden2),
        dropout: args.dropout.unwrap_or(spec_defaults.dropout),
        gat_heads: args.heads.unwrap_or(spec_defaults.gat_heads),
        ..spec_defaults
    };
    if spec.depth == 0 {
        return Err(CliError::config("--depth must be at least 1"));
    }
    if !(0.0..1.0).contains(&spec.dropout) {
        return Err(CliError::config("--dropout must lie in [0, 1)"));
    }
    let config_defaults = sgnn_core::nn::TrainConfig::default();
    let config = sgnn_core::nn::TrainConfig {
        lr: args.lr.unwrap_or(config_defaults.lr),
        weight_decay: args.weight_decay.unwrap_or(config_defaults.weight_decay),
        optimizer: match &args.optimizer {
            Some(s) => io::parse_optimizer(s)?,
            None => config_defaults.optimizer,
        },
        epochs: args.epochs.unwrap_or(config_defaults.epochs),
        patience: args.patience.unwrap_or(config_defaults.patience),
        seed,
    };
    Ok((spec, config))
}

/// Mean and population standard deviation.
pub fn mean_std(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count().max(1) as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn parse_f64_list(s: &str, flag: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CliError::config(format!("{flag}: {t:?} is not a number")))
        })
        .collect()
}

pub fn parse_string_list(s: &str) -> Vec<String> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::to_string)
        .collect()
}

/// JSON value for a float, mapping non-finite to null.
pub fn num(v: f64) -> Value {
    serde_json::Number::from_f64(v).map(Value::Number).unwrap_or(Value::Null)
}
