//! Spatially buffered model evaluation.
//!
//! Ten-fold cross-validation over connected test regions grown by seeded
//! BFS, leave-one-region-out splits over named groups, RMSE/MAE/R²
//! metrics, random hyperparameter search with an inner 3-fold objective,
//! and a greedy component-ablation sweep (architecture, then spatial
//! representation, then depth, then node encodings).
//!
//! Every fold keeps a hop-radius buffer around its test set so no training
//! signal sits within message-passing range of a test node. Training is
//! transductive on the full graph with test losses masked; inference runs
//! on the induced test-plus-buffer subgraph.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::encodings::{
    self, EncodingKind, NodeEncoding,
};
use crate::error::{Error, Result};
use crate::graph::{subgraph_with_buffer, FoldPlan, RegionGraph};
use crate::linalg::Mat;
use crate::nn::{
    self, Architecture, GraphOps, ModelSpec, Optimizer, TrainConfig,
};
use crate::rng::Rng;

/// Candidate values per tunable hyperparameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchSpace {
    pub lr: Vec<f64>,
    pub weight_decay: Vec<f64>,
    pub hidden1: Vec<usize>,
    pub hidden2: Vec<usize>,
    pub dropout: Vec<f64>,
    pub epochs: Vec<usize>,
    pub optimizer: Vec<Optimizer>,
    pub patience: Vec<usize>,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lr: vec![0.001, 0.005, 0.01],
            weight_decay: vec![1e-4, 5e-4, 1e-3],
            hidden1: vec![64, 128, 256],
            hidden2: vec![16, 32, 64],
            dropout: vec![0.1, 0.3, 0.5],
            epochs: vec![200, 300],
            optimizer: vec![Optimizer::Adam, Optimizer::Sgd, Optimizer::Rmsprop],
            patience: vec![10, 20],
        }
    }
}

/// One sampled hyperparameter assignment.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub lr: f64,
    pub weight_decay: f64,
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout: f64,
    pub epochs: usize,
    pub optimizer: Optimizer,
    pub patience: usize,
}

impl SearchSpace {
    pub fn sample(&self, rng: &mut Rng) -> Candidate {
        Candidate {
            lr: *rng.choose(&self.lr),
            weight_decay: *rng.choose(&self.weight_decay),
            hidden1: *rng.choose(&self.hidden1),
            hidden2: *rng.choose(&self.hidden2),
            dropout: *rng.choose(&self.dropout),
            epochs: *rng.choose(&self.epochs),
            optimizer: *rng.choose(&self.optimizer),
            patience: *rng.choose(&self.patience),
        }
    }
}

impl Candidate {
    /// Merge the sampled values into a base model spec and train config.
    pub fn apply(&self, spec: &ModelSpec) -> (ModelSpec, TrainConfig) {
        let mut s = spec.clone();
        s.hidden1 = self.hidden1;
        s.hidden2 = self.hidden2;
        s.dropout = self.dropout;
        let c = TrainConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            optimizer: self.optimizer,
            epochs: self.epochs,
            patience: self.patience,
            seed: 0,
        };
        (s, c)
    }
}

/// Per-fold scores and per-node predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct FoldMetrics {
    pub fold_id: usize,
    pub rmse: f64,
    pub mae: f64,
    pub r2: f64,
    /// (full-graph node index, observed y, predicted y)
    pub predictions: Vec<(usize, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricSummary {
    pub mean: f64,
    pub std: f64,
}

fn summarize(values: impl Iterator<Item = f64> + Clone) -> MetricSummary {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    MetricSummary {
        mean,
        std: libm::sqrt(var),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub per_fold: Vec<FoldMetrics>,
    pub rmse: MetricSummary,
    pub mae: MetricSummary,
    pub r2: MetricSummary,
    pub warnings: Vec<String>,
}

impl CvResult {
    fn from_folds(per_fold: Vec<FoldMetrics>, warnings: Vec<String>) -> Self {
        let rmse = summarize(per_fold.iter().map(|f| f.rmse));
        let mae = summarize(per_fold.iter().map(|f| f.mae));
        let r2 = summarize(per_fold.iter().map(|f| f.r2));
        CvResult {
            per_fold,
            rmse,
            mae,
            r2,
            warnings,
        }
    }
}

/// Whether buffer nodes carry labels into training or act as unlabeled
/// message-passing context only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferRole {
    Train,
    Excluded,
}

impl BufferRole {
    pub fn label(&self) -> &'static str {
        match self {
            BufferRole::Train => "train",
            BufferRole::Excluded => "excluded",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "train" => Some(BufferRole::Train),
            "excluded" => Some(BufferRole::Excluded),
            _ => None,
        }
    }
}

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

/// RMSE, MAE and R² over masked nodes. R² is NaN when y is constant over
/// the mask (undefined rather than zero).
pub fn metrics(yhat: &[f64], y: &[f64], mask: &[bool]) -> Result<(f64, f64, f64)> {
    assert_eq!(yhat.len(), y.len());
    assert_eq!(yhat.len(), mask.len());
    let idx: Vec<usize> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then_some(i))
        .collect();
    if idx.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = idx.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    for &i in &idx {
        let r = yhat[i] - y[i];
        sq += r * r;
        abs += libm::fabs(r);
    }
    let mean_y = idx.iter().map(|&i| y[i]).sum::<f64>() / n;
    let ss_tot: f64 = idx.iter().map(|&i| (y[i] - mean_y) * (y[i] - mean_y)).sum();
    let r2 = if ss_tot == 0.0 {
        f64::NAN
    } else {
        1.0 - sq / ss_tot
    };
    Ok((libm::sqrt(sq / n), abs / n, r2))
}

// ---------------------------------------------------------------------------
// fold construction
// ---------------------------------------------------------------------------

/// Partition all nodes into ten connected test regions of near-equal size
/// (sizes differ by at most one) by seeded BFS growth from spread-out
/// seeds, then wrap each with its hop-radius buffer.
pub fn tenfold_split(graph: &RegionGraph, seed: u64, hops: usize) -> Result<Vec<FoldPlan>> {
    let n = graph.node_count();
    if n < 10 {
        return Err(Error::GraphTooSmall { n, needed: 10 });
    }
    let mut rng = Rng::seed_from_u64(seed);
    let base = n / 10;
    let extra = n % 10;
    let sizes: Vec<usize> = (0..10).map(|f| base + usize::from(f < extra)).collect();
    let mut assigned = vec![false; n];

    // grow folds one at a time; each new fold starts at the unassigned
    // node farthest from everything assigned so far (first fold: random)
    // and expands by always taking the frontier node with the fewest
    // unassigned neighbours, which fills concavities before they can
    // become stranded enclaves
    let unassigned_degree = |assigned: &[bool], v: usize| {
        graph.neighbors(v).iter().filter(|&&w| !assigned[w]).count()
    };
    let mut test_sets: Vec<Vec<usize>> = Vec::with_capacity(10);
    for fold in 0..10 {
        let start = if fold == 0 {
            rng.next_below(n)
        } else {
            let sources: Vec<usize> = (0..n).filter(|&i| assigned[i]).collect();
            let dist = graph.bfs_distances(&sources);
            (0..n)
                .filter(|&i| !assigned[i])
                .max_by_key(|&i| (dist[i], usize::MAX - i))
                .expect("nodes remain for every fold")
        };

        let mut fold_nodes = vec![start];
        assigned[start] = true;
        let mut frontier: alloc::collections::BTreeSet<usize> = graph
            .neighbors(start)
            .iter()
            .copied()
            .filter(|&v| !assigned[v])
            .collect();
        while fold_nodes.len() < sizes[fold] {
            let pick = match frontier
                .iter()
                .copied()
                .min_by_key(|&v| (unassigned_degree(&assigned, v), v))
            {
                Some(v) => v,
                None => {
                    // walled in: restart from the nearest unassigned node
                    let dist = graph.bfs_distances(&fold_nodes);
                    (0..n)
                        .filter(|&i| !assigned[i])
                        .min_by_key(|&i| (dist[i], i))
                        .expect("sizes sum to n")
                }
            };
            assigned[pick] = true;
            frontier.remove(&pick);
            fold_nodes.push(pick);
            for &w in graph.neighbors(pick) {
                if !assigned[w] {
                    frontier.insert(w);
                }
            }
        }
        test_sets.push(fold_nodes);
    }

    let mut plans = Vec::with_capacity(10);
    for (fold_id, test) in test_sets.into_iter().enumerate() {
        let mut plan = subgraph_with_buffer(graph, &test, hops)?.plan;
        plan.fold_id = fold_id;
        plans.push(plan);
    }
    Ok(plans)
}

/// One leave-one-region-out fold: all nodes carrying `target_group` form
/// the test set.
pub fn loocv_region_split(
    graph: &RegionGraph,
    target_group: &str,
    hops: usize,
) -> Result<FoldPlan> {
    let test: Vec<usize> = graph
        .regions
        .iter()
        .enumerate()
        .filter(|(_, r)| r.group.as_deref() == Some(target_group))
        .map(|(i, _)| i)
        .collect();
    if test.is_empty() {
        return Err(Error::UnknownGroup {
            group: target_group.to_string(),
        });
    }
    Ok(subgraph_with_buffer(graph, &test, hops)?.plan)
}

/// All leave-one-region-out folds over the given group names, with fold
/// ids in argument order.
pub fn loocv_splits(
    graph: &RegionGraph,
    groups: &[String],
    hops: usize,
) -> Result<Vec<FoldPlan>> {
    groups
        .iter()
        .enumerate()
        .map(|(fold_id, g)| {
            let mut plan = loocv_region_split(graph, g, hops)?;
            plan.fold_id = fold_id;
            Ok(plan)
        })
        .collect()
}

/// Training and early-stopping masks for one fold. Test-node labels never
/// enter either mask; buffer labels join training only under
/// `BufferRole::Train`. A seed-chosen 20% of eligible nodes becomes the
/// validation set.
pub fn fold_masks(
    plan: &FoldPlan,
    n: usize,
    buffer_role: BufferRole,
    rng: &mut Rng,
) -> (Vec<bool>, Vec<bool>) {
    let mut eligible: Vec<usize> = plan.train_nodes.clone();
    if buffer_role == BufferRole::Train {
        eligible.extend_from_slice(&plan.buffer_nodes);
    }
    eligible.sort_unstable();
    let val_count = eligible.len() / 5;
    let val_pick = rng.sample_indices(eligible.len(), val_count);
    let mut is_val = vec![false; eligible.len()];
    for &p in &val_pick {
        is_val[p] = true;
    }
    let mut train_mask = vec![false; n];
    let mut val_mask = vec![false; n];
    for (pos, &node) in eligible.iter().enumerate() {
        if is_val[pos] {
            val_mask[node] = true;
        } else {
            train_mask[node] = true;
        }
    }
    (train_mask, val_mask)
}

// ---------------------------------------------------------------------------
// cross-validation driver
// ---------------------------------------------------------------------------

/// Evaluate one model configuration over pre-built folds.
///
/// Per fold: transductive training on the full graph with test losses
/// masked out, then inference on the induced test-plus-buffer subgraph;
/// metrics are computed over test nodes only.
pub fn run_cv(
    graph: &RegionGraph,
    x: &Mat,
    y: &[f64],
    spec: &ModelSpec,
    config: &TrainConfig,
    plans: &[FoldPlan],
    hops: usize,
    buffer_role: BufferRole,
    seed: u64,
) -> Result<CvResult> {
    let n = graph.node_count();
    let mut per_fold = Vec::with_capacity(plans.len());
    let mut warnings = Vec::new();

    for plan in plans {
        // per-fold seeding depends only on (seed, fold_id), so evaluating
        // any subset of folds — e.g. split across workers — reproduces
        // exactly the full-run results for those folds
        let mut fold_rng = Rng::seed_from_u64(
            seed ^ (plan.fold_id as u64 + 1).wrapping_mul(0x9E3779B97F4A7C15),
        );
        let (train_mask, val_mask) = fold_masks(plan, n, buffer_role, &mut fold_rng);
        // leakage guard: a test label in either mask would contaminate a
        // loss term, so refuse to continue rather than warn
        for &t in &plan.test_nodes {
            assert!(
                !train_mask[t] && !val_mask[t],
                "test node {t} leaked into a training mask"
            );
        }
        let fold_config = TrainConfig {
            seed: fold_rng.next_u64(),
            ..config.clone()
        };
        let model = nn::train(spec, graph, x, y, &train_mask, &val_mask, &fold_config)?;

        // inference on the induced test∪buffer subgraph
        let sub = subgraph_with_buffer(graph, &plan.test_nodes, hops)?;
        if crate::graph::connected_components(&sub.subgraph).len() > 1 {
            warnings.push(format!(
                "fold {}: test subgraph is disconnected",
                plan.fold_id
            ));
        }
        let mut x_sub = Mat::zeros(sub.to_full.len(), x.cols);
        for (s, &f) in sub.to_full.iter().enumerate() {
            x_sub.row_mut(s).copy_from_slice(x.row(f));
        }
        let (pred_sub, _) = nn::forward(&model, &GraphOps::new(&sub.subgraph), &x_sub);

        let mut yhat = vec![0.0; n];
        let mut test_mask = vec![false; n];
        let mut predictions = Vec::with_capacity(plan.test_nodes.len());
        for &t in &plan.test_nodes {
            let s = sub.to_sub[&t];
            yhat[t] = pred_sub[s];
            test_mask[t] = true;
            predictions.push((t, y[t], pred_sub[s]));
        }
        let (rmse, mae, r2) = metrics(&yhat, y, &test_mask)?;
        if r2.is_nan() {
            warnings.push(format!(
                "fold {}: target constant over test nodes; r2 undefined",
                plan.fold_id
            ));
        }
        per_fold.push(FoldMetrics {
            fold_id: plan.fold_id,
            rmse,
            mae,
            r2,
            predictions,
        });
    }

    Ok(CvResult::from_folds(per_fold, warnings))
}

// ---------------------------------------------------------------------------
// random search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub index: usize,
    pub candidate: Candidate,
    pub score: f64,
}

/// Uniform random search: sample `rounds` candidates with replacement and
/// keep the best by `objective`, ties to the earlier trial.
pub fn random_search(
    space: &SearchSpace,
    rounds: usize,
    seed: u64,
    mut objective: impl FnMut(usize, &Candidate) -> Result<f64>,
) -> Result<(Candidate, Vec<Trial>)> {
    assert!(rounds >= 1);
    let mut rng = Rng::seed_from_u64(seed);
    let mut trials: Vec<Trial> = Vec::with_capacity(rounds);
    let mut best: Option<usize> = None;
    for index in 0..rounds {
        let candidate = space.sample(&mut rng);
        let score = objective(index, &candidate)?;
        let better = match best {
            None => true,
            // NaN scores never win; strict inequality keeps earlier ties
            Some(b) => score > trials[b].score,
        };
        trials.push(Trial {
            index,
            candidate,
            score,
        });
        if better && !score.is_nan() {
            best = Some(index);
        }
    }
    let best = best.unwrap_or(0);
    Ok((trials[best].candidate.clone(), trials))
}

/// Inner 3-fold objective: three independent 80:20 resamples of the
/// eligible nodes; train on the 80%, validate on the 20%, return the mean
/// validation R².
pub fn inner_cv_score(
    graph: &RegionGraph,
    x: &Mat,
    y: &[f64],
    eligible: &[usize],
    spec: &ModelSpec,
    config: &TrainConfig,
    seed: u64,
) -> Result<f64> {
    let n = graph.node_count();
    let mut rng = Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for inner in 0..3u64 {
        let mut fold_rng = rng.fork(inner);
        let val_count = (eligible.len() / 5).max(1);
        let picks = fold_rng.sample_indices(eligible.len(), val_count);
        let mut val_mask = vec![false; n];
        let mut train_mask = vec![false; n];
        for &e in eligible {
            train_mask[e] = true;
        }
        for &p in &picks {
            val_mask[eligible[p]] = true;
            train_mask[eligible[p]] = false;
        }
        let inner_config = TrainConfig {
            seed: fold_rng.next_u64(),
            ..config.clone()
        };
        let model = nn::train(spec, graph, x, y, &train_mask, &val_mask, &inner_config)?;
        let (pred, _) = nn::forward(&model, &GraphOps::new(graph), x);
        let (_, _, r2) = metrics(&pred, y, &val_mask)?;
        total += r2;
    }
    Ok(total / 3.0)
}

// ---------------------------------------------------------------------------
// component ablation
// ---------------------------------------------------------------------------

/// A spatial representation option for the ablation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpatialRep {
    /// k-hop expansion of the base contiguity graph.
    Hops(usize),
    /// k-nearest-neighbour graph on centroids.
    Knn(usize),
}

impl SpatialRep {
    pub fn label(&self) -> String {
        match self {
            SpatialRep::Hops(k) => format!("{k}-hop"),
            SpatialRep::Knn(k) => format!("knn-{k}"),
        }
    }

    pub fn build(&self, base: &RegionGraph) -> Result<RegionGraph> {
        match self {
            SpatialRep::Hops(k) => Ok(crate::graph::khop_expand(base, *k)),
            SpatialRep::Knn(k) => crate::graph::knn_graph(base.regions.clone(), *k),
        }
    }
}

/// Sizes used when materializing encodings inside the ablation sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EncodingConfig {
    pub spectral_dim: usize,
    pub rw_steps: usize,
}

impl Default for EncodingConfig {
    fn default() -> Self {
        EncodingConfig {
            spectral_dim: 8,
            rw_steps: 8,
        }
    }
}

/// Materialize one encoding kind on a graph. Location embeddings come from
/// the caller (aligned rows) or fall back to sinusoidal centroid features.
pub fn build_encoding(
    kind: EncodingKind,
    graph: &RegionGraph,
    location: Option<&Mat>,
    cfg: &EncodingConfig,
) -> Result<NodeEncoding> {
    match kind {
        EncodingKind::LaplacianSpectral => {
            let d = cfg.spectral_dim.min(graph.node_count().saturating_sub(1));
            encodings::laplacian_spectral_pe(graph, d.max(1))
        }
        EncodingKind::RandomWalk => Ok(encodings::random_walk_pe(graph, cfg.rw_steps)),
        EncodingKind::Location => match location {
            Some(m) => {
                assert_eq!(m.rows, graph.node_count());
                Ok(NodeEncoding {
                    kind: EncodingKind::Location,
                    dim: m.cols,
                    values: m.clone(),
                })
            }
            None => Ok(encodings::fallback_coordinate_encoding(graph, 2)),
        },
        EncodingKind::LaplacianSmooth => {
            panic!("smoothing transforms features in place; it is not a standalone encoding")
        }
    }
}

/// Base features extended with the requested encodings.
pub fn build_design(
    graph: &RegionGraph,
    features: &Mat,
    kinds: &[EncodingKind],
    location: Option<&Mat>,
    cfg: &EncodingConfig,
) -> Result<Mat> {
    let mut out = features.clone();
    for &kind in kinds {
        let enc = build_encoding(kind, graph, location, cfg)?;
        out = out.hcat(&enc.values);
    }
    Ok(out)
}

/// Axes of the greedy ablation sweep, explored in field order.
#[derive(Debug, Clone, PartialEq)]
pub struct AblationAxes {
    pub architectures: Vec<Architecture>,
    pub representations: Vec<SpatialRep>,
    pub depths: Vec<usize>,
    pub encodings: Vec<Vec<EncodingKind>>,
}

impl Default for AblationAxes {
    fn default() -> Self {
        use EncodingKind::*;
        AblationAxes {
            architectures: Architecture::ALL.to_vec(),
            representations: vec![
                SpatialRep::Hops(1),
                SpatialRep::Hops(2),
                SpatialRep::Hops(3),
                SpatialRep::Knn(8),
            ],
            depths: vec![1, 2, 3],
            encodings: vec![
                vec![],
                vec![LaplacianSpectral],
                vec![RandomWalk],
                vec![Location],
                vec![LaplacianSpectral, RandomWalk],
                vec![LaplacianSpectral, Location],
                vec![RandomWalk, Location],
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationStep {
    pub axis: &'static str,
    pub option: String,
    pub score: f64,
    pub chosen: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationOutcome {
    pub steps: Vec<AblationStep>,
    pub architecture: Architecture,
    pub representation: SpatialRep,
    pub depth: usize,
    pub encodings: Vec<EncodingKind>,
}

fn encoding_combo_label(kinds: &[EncodingKind]) -> String {
    if kinds.is_empty() {
        "none".to_string()
    } else {
        let mut s = String::new();
        for (i, k) in kinds.iter().enumerate() {
            if i > 0 {
                s.push('+');
            }
            s.push_str(k.label());
        }
        s
    }
}

/// Greedy axis-by-axis component sweep. Each option is scored by random
/// search (`budget` rounds) over `space` with the inner 3-fold objective;
/// the winner of each axis is frozen before the next axis is explored.
#[allow(clippy::too_many_arguments)]
pub fn ablation_grid(
    base: &RegionGraph,
    features: &Mat,
    y: &[f64],
    location: Option<&Mat>,
    axes: &AblationAxes,
    space: &SearchSpace,
    enc_cfg: &EncodingConfig,
    budget: usize,
    seed: u64,
) -> Result<AblationOutcome> {
    assert!(
        !axes.architectures.is_empty()
            && !axes.representations.is_empty()
            && !axes.depths.is_empty()
            && !axes.encodings.is_empty(),
        "every ablation axis needs at least one option"
    );
    let eligible: Vec<usize> = (0..base.node_count()).collect();
    let mut steps = Vec::new();
    let mut stage_seed = Rng::seed_from_u64(seed);

    let mut evaluate = |arch: Architecture,
                        rep: SpatialRep,
                        depth: usize,
                        kinds: &[EncodingKind],
                        eval_seed: u64|
     -> Result<f64> {
        let graph = rep.build(base)?;
        let x = build_design(&graph, features, kinds, location, enc_cfg)?;
        let base_spec = ModelSpec {
            architecture: arch,
            depth,
            ..ModelSpec::default()
        };
        let (_, trials) = random_search(space, budget, eval_seed, |_, cand| {
            let (spec, config) = cand.apply(&base_spec);
            inner_cv_score(&graph, &x, y, &eligible, &spec, &config, eval_seed)
        })?;
        Ok(trials
            .iter()
            .map(|t| t.score)
            .fold(f64::NEG_INFINITY, f64::max))
    };

    let sweep = |axis: &'static str,
                     options: Vec<(String, Architecture, SpatialRep, usize, Vec<EncodingKind>)>,
                     steps: &mut Vec<AblationStep>,
                     stage_seed: &mut Rng,
                     evaluate: &mut dyn FnMut(
        Architecture,
        SpatialRep,
        usize,
        &[EncodingKind],
        u64,
    ) -> Result<f64>|
     -> Result<usize> {
        let eval_seed = stage_seed.next_u64();
        let mut best = 0usize;
        let mut best_score = f64::NEG_INFINITY;
        let first = steps.len();
        for (i, (label, arch, rep, depth, kinds)) in options.iter().enumerate() {
            let score = evaluate(*arch, *rep, *depth, kinds, eval_seed)?;
            steps.push(AblationStep {
                axis,
                option: label.clone(),
                score,
                chosen: false,
            });
            if score > best_score {
                best_score = score;
                best = i;
            }
        }
        steps[first + best].chosen = true;
        Ok(best)
    };

    // defaults for the axes not yet swept
    let mut rep = axes.representations[0];
    let mut depth = *axes.depths.first().unwrap();
    let mut kinds: Vec<EncodingKind> = Vec::new();

    let options: Vec<_> = axes
        .architectures
        .iter()
        .map(|&a| (a.label().to_string(), a, rep, depth, kinds.clone()))
        .collect();
    let w = sweep("architecture", options, &mut steps, &mut stage_seed, &mut evaluate)?;
    let arch = axes.architectures[w];

    let options: Vec<_> = axes
        .representations
        .iter()
        .map(|&r| (r.label(), arch, r, depth, kinds.clone()))
        .collect();
    let w = sweep("representation", options, &mut steps, &mut stage_seed, &mut evaluate)?;
    rep = axes.representations[w];

    let options: Vec<_> = axes
        .depths
        .iter()
        .map(|&d| (format!("depth-{d}"), arch, rep, d, kinds.clone()))
        .collect();
    let w = sweep("depth", options, &mut steps, &mut stage_seed, &mut evaluate)?;
    depth = axes.depths[w];

    let options: Vec<_> = axes
        .encodings
        .iter()
        .map(|k| (encoding_combo_label(k), arch, rep, depth, k.clone()))
        .collect();
    let w = sweep("encodings", options, &mut steps, &mut stage_seed, &mut evaluate)?;
    kinds = axes.encodings[w].clone();

    Ok(AblationOutcome {
        steps,
        architecture: arch,
        representation: rep,
        depth,
        encodings: kinds,
    })
}
