//! Command-line surface.
//!
//! Every per-command option is also accepted as a key in the JSON file
//! given to `--config`; explicit flags win over config values, which win
//! over built-in defaults. Global flags: `--config`, `--seed`, `--jobs`,
//! `--out`.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

use crate::errors::{CliError, Result};

#[derive(Parser, Debug)]
#[command(
    name = "sgnn",
    version,
    about = "Spatial graph regression pipeline: graphs from regions, feature selection, node encodings, message-passing networks, buffered cross-validation, statistical baselines, and embedding explainability"
)]
pub struct Cli {
    /// JSON file supplying defaults for any option (flags win)
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Seed for every random choice in the command
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Worker threads for fold-level parallelism
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Output directory
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic region grid with features and a planted outcome
    Synth(SynthArgs),
    /// Build a spatial adjacency graph from region geometry
    BuildGraph(BuildGraphArgs),
    /// Standardize features and drop multicollinear columns by VIF
    Preprocess(PreprocessArgs),
    /// Compute positional and locational node encodings
    Encode(EncodeArgs),
    /// Train one network on all labeled regions
    Train(TrainArgs),
    /// Buffered spatial cross-validation with optional hyperparameter search
    Cv(CvArgs),
    /// Greedy component ablation over architecture, graph, depth, encodings
    Ablate(AblateArgs),
    /// OLS, spatial lag model, and geographically weighted regression
    Baselines(BaselinesArgs),
    /// Embedding explainability: PCA, feature correlations, residual maps
    Explain(ExplainArgs),
}

/// Merge `self` (flag values) over config-file values: any field still
/// unset after parsing takes the config value.
macro_rules! merge_fields {
    ($a:ident, $b:ident, $($f:ident),* $(,)?) => {
        $( if $a.$f.is_none() { $a.$f = $b.$f; } )*
    };
}

fn from_config<T: for<'de> Deserialize<'de> + Default>(config: Option<&serde_json::Value>) -> Result<T> {
    match config {
        None => Ok(T::default()),
        Some(v) => serde_json::from_value(v.clone())
            .map_err(|e| CliError::config(format!("bad config file: {e}"))),
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct SynthArgs {
    /// Grid height in regions
    #[arg(long)]
    pub rows: Option<usize>,
    /// Grid width in regions
    #[arg(long)]
    pub cols: Option<usize>,
    /// Number of base feature columns
    #[arg(long)]
    pub n_features: Option<usize>,
    /// Neighbour-averaging smoothing passes per feature
    #[arg(long)]
    pub passes: Option<usize>,
    /// Near-duplicate columns to append, as "src:noise_std,src:noise_std"
    #[arg(long)]
    pub collinear: Option<String>,
    /// Linear outcome coefficients over the leading features, comma-separated
    #[arg(long)]
    pub beta: Option<String>,
    /// Spatial-lag strength in (-1, 1)
    #[arg(long)]
    pub rho: Option<f64>,
    /// Add a squared term of feature 0 to the outcome
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub nonlinear: Option<bool>,
    /// Outcome noise standard deviation
    #[arg(long)]
    pub noise_std: Option<f64>,
}

impl SynthArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: SynthArgs = from_config(config)?;
        merge_fields!(self, b, rows, cols, n_features, passes, collinear, beta, rho, nonlinear, noise_std);
        Ok(self)
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct BuildGraphArgs {
    /// Region geometry: GeoJSON FeatureCollection or CSV id,x,y[,group]
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Base relation: "contiguity" (queen, needs polygons) or "knn"
    #[arg(long)]
    pub base: Option<String>,
    /// Neighbour count for the knn base
    #[arg(long)]
    pub k: Option<usize>,
    /// Connect nodes within this many hops of the base relation
    #[arg(long)]
    pub hops: Option<usize>,
}

impl BuildGraphArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: BuildGraphArgs = from_config(config)?;
        merge_fields!(self, b, regions, base, k, hops);
        Ok(self)
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct PreprocessArgs {
    /// Feature CSV: first column "id", the rest numeric
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Region file; rows are aligned to its region order
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Plain-text list of fixed control columns (one name per line)
    #[arg(long)]
    pub fixed: Option<PathBuf>,
    /// Skip VIF selection; only standardize
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub skip_vif: Option<bool>,
}

impl PreprocessArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: PreprocessArgs = from_config(config)?;
        merge_fields!(self, b, features, regions, fixed, skip_vif);
        Ok(self)
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct EncodeArgs {
    #[arg(long)]
    pub regions: Option<PathBuf>,
    /// Edge-list CSV with header src,dst
    #[arg(long)]
    pub edges: Option<PathBuf>,
    /// Comma list: laplacian_spectral,random_walk,location,laplacian_smooth
    #[arg(long)]
    pub kinds: Option<String>,
    /// Spectral encoding width
    #[arg(long)]
    pub dim: Option<usize>,
    /// Random-walk step count
    #[arg(long)]
    pub steps: Option<usize>,
    /// Pretrained location embeddings CSV (id + numeric columns)
    #[arg(long)]
    pub location_embeddings: Option<PathBuf>,
    /// Reduce location embeddings to this many principal components
    #[arg(long)]
    pub pca_dim: Option<usize>,
    /// Feature CSV, needed by the laplacian_smooth kind
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Self-weight for laplacian_smooth
    #[arg(long)]
    pub lambda: Option<f64>,
}

impl EncodeArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: EncodeArgs = from_config(config)?;
        merge_fields!(
            self, b, regions, edges, kinds, dim, steps, location_embeddings, pca_dim, features,
            lambda
        );
        Ok(self)
    }
}

/// Model and optimizer options shared by train, cv, and ablate.
#[derive(Args, Debug, Default, Deserialize, Clone)]
#[serde(default)]
pub struct ModelArgs {
    /// gcn | gin | graphsage | gatv2
    #[arg(long)]
    pub architecture: Option<String>,
    /// Message-passing layers
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub hidden1: Option<usize>,
    #[arg(long)]
    pub hidden2: Option<usize>,
    #[arg(long)]
    pub dropout: Option<f64>,
    /// Attention heads (gatv2 only)
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    /// adam | sgd | rmsprop
    #[arg(long)]
    pub optimizer: Option<String>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Early-stopping patience in epochs
    #[arg(long)]
    pub patience: Option<usize>,
}

impl ModelArgs {
    fn merge(&mut self, b: ModelArgs) {
        let a = self;
        merge_fields!(
            a, b, architecture, depth, hidden1, hidden2, dropout, heads, lr, weight_decay,
            optimizer, epochs, patience
        );
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct TrainArgs {
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    /// Target CSV: id plus one outcome column; empty cells = unlabeled
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Node-encoding CSV appended to the features
    #[arg(long)]
    pub encodings: Option<PathBuf>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

impl TrainArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: TrainArgs = from_config(config)?;
        merge_fields!(self, b, regions, edges, features, target, encodings);
        self.model.merge(b.model);
        Ok(self)
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct CvArgs {
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub encodings: Option<PathBuf>,
    /// "tenfold" or "loocv"
    #[arg(long)]
    pub scheme: Option<String>,
    /// Group labels for loocv, comma-separated
    #[arg(long)]
    pub groups: Option<String>,
    /// Buffer radius in hops around each test set
    #[arg(long)]
    pub hops: Option<usize>,
    /// "train": buffer labels join training; "excluded": context only
    #[arg(long)]
    pub buffer_role: Option<String>,
    /// Random-search rounds before the outer evaluation (0 = use flags as-is)
    #[arg(long)]
    pub search_rounds: Option<usize>,
    #[command(flatten)]
    #[serde(flatten)]
    pub model: ModelArgs,
}

impl CvArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: CvArgs = from_config(config)?;
        merge_fields!(
            self, b, regions, edges, features, target, encodings, scheme, groups, hops,
            buffer_role, search_rounds
        );
        self.model.merge(b.model);
        Ok(self)
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct AblateArgs {
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub location_embeddings: Option<PathBuf>,
    /// Random-search rounds spent on every swept option
    #[arg(long)]
    pub budget: Option<usize>,
}

impl AblateArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: AblateArgs = from_config(config)?;
        merge_fields!(self, b, regions, edges, features, target, location_embeddings, budget);
        Ok(self)
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct BaselinesArgs {
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// Candidate GWR bandwidths, comma-separated (default: fractions of
    /// the centroid bounding-box diagonal)
    #[arg(long)]
    pub bandwidths: Option<String>,
    /// Externally produced predictions CSV "id,yhat" to score alongside
    #[arg(long)]
    pub external: Option<PathBuf>,
}

impl BaselinesArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: BaselinesArgs = from_config(config)?;
        merge_fields!(self, b, regions, edges, features, target, bandwidths, external);
        Ok(self)
    }
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default)]
pub struct ExplainArgs {
    /// Model checkpoint written by the train command
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub regions: Option<PathBuf>,
    #[arg(long)]
    pub edges: Option<PathBuf>,
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long)]
    pub encodings: Option<PathBuf>,
    /// Cumulative explained-variance target for component selection
    #[arg(long)]
    pub variance_target: Option<f64>,
}

impl ExplainArgs {
    pub fn merged(mut self, config: Option<&serde_json::Value>) -> Result<Self> {
        let b: ExplainArgs = from_config(config)?;
        merge_fields!(
            self, b, checkpoint, regions, edges, features, target, encodings, variance_target
        );
        Ok(self)
    }
}
