//! Message-passing networks with exact reverse-mode gradients.
//!
//! Four layer families share one training loop: spectral convolution over
//! the normalized adjacency, isomorphism-style sum aggregation through a
//! two-layer MLP, mean-aggregation with self concatenation, and
//! attention-weighted aggregation with per-neighbourhood softmax. A scalar
//! fully connected head maps the final embedding to the outcome, trained
//! against masked mean squared error with Adam, SGD or RMSprop and
//! patience-based early stopping.

use alloc::format;
use alloc::rc::Rc;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::autodiff::{EdgeIndex, NodeId, Tape};
use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::linalg::{Mat, SparseMat};
use crate::rng::Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Gcn,
    Gin,
    GraphSage,
    Gatv2,
}

impl Architecture {
    pub const ALL: [Architecture; 4] = [
        Architecture::Gcn,
        Architecture::Gin,
        Architecture::GraphSage,
        Architecture::Gatv2,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            Architecture::Gcn => "gcn",
            Architecture::Gin => "gin",
            Architecture::GraphSage => "graphsage",
            Architecture::Gatv2 => "gatv2",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.iter().copied().find(|a| a.label() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    LeakyRelu,
    /// Linear pass-through; used by diagnostics and hand-checked tests,
    /// not part of the tuning space.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Adam,
    Sgd,
    Rmsprop,
}

impl Optimizer {
    pub fn label(&self) -> &'static str {
        match self {
            Optimizer::Adam => "adam",
            Optimizer::Sgd => "sgd",
            Optimizer::Rmsprop => "rmsprop",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [Optimizer::Adam, Optimizer::Sgd, Optimizer::Rmsprop]
            .into_iter()
            .find(|o| o.label() == s)
    }
}

/// Architecture and layer hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub architecture: Architecture,
    /// Number of message-passing layers.
    pub depth: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub dropout: f64,
    pub activation: Activation,
    pub gin_epsilon_init: f64,
    pub gat_heads: usize,
    pub leaky_slope: f64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        ModelSpec {
            architecture: Architecture::Gatv2,
            depth: 2,
            hidden1: 128,
            hidden2: 64,
            dropout: 0.1,
            activation: Activation::Relu,
            gin_epsilon_init: 0.0,
            gat_heads: 1,
            leaky_slope: 0.2,
        }
    }
}

impl ModelSpec {
    /// Output width per message-passing layer: hidden1 for all but the
    /// last, hidden2 for the last (the embedding width).
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut widths = vec![self.hidden1; self.depth.saturating_sub(1)];
        widths.push(self.hidden2);
        widths
    }
}

/// Optimizer and schedule settings.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub weight_decay: f64,
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.001,
            weight_decay: 1e-4,
            optimizer: Optimizer::Adam,
            epochs: 300,
            patience: 20,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub value: Mat,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: Vec<Param>,
    pub training_log: Vec<EpochLog>,
    pub seed: u64,
}

/// Cached graph operators shared by every forward pass on one graph.
#[derive(Debug, Clone)]
pub struct GraphOps {
    pub n: usize,
    /// D~^(-1/2) (A + I) D~^(-1/2)
    pub norm_adj: Rc<SparseMat>,
    /// plain 0/1 adjacency
    pub adj: Rc<SparseMat>,
    /// row-normalized adjacency D^(-1) A; zero rows for isolated nodes
    pub mean_agg: Rc<SparseMat>,
    /// edges with self-loops, grouped by destination (attention support)
    pub edges: Rc<EdgeIndex>,
    src: Rc<Vec<usize>>,
    dst: Rc<Vec<usize>>,
}

impl GraphOps {
    pub fn new(graph: &RegionGraph) -> Self {
        let n = graph.node_count();
        let norm_adj = Rc::new(normalize_adjacency(graph));
        let mut adj = SparseMat::new(n, n);
        let mut mean = SparseMat::new(n, n);
        for i in 0..n {
            let deg = graph.degree(i);
            for &j in graph.neighbors(i) {
                adj.entries[i].push((j, 1.0));
                mean.entries[i].push((j, 1.0 / deg as f64));
            }
        }
        let edges = Rc::new(EdgeIndex::with_self_loops(
            |i| graph.neighbors(i).to_vec(),
            n,
        ));
        let src = Rc::new(edges.src.clone());
        let dst = Rc::new(edges.dst.clone());
        GraphOps {
            n,
            norm_adj,
            adj: Rc::new(adj),
            mean_agg: Rc::new(mean),
            edges,
            src,
            dst,
        }
    }
}

/// Symmetrically normalized adjacency with self-loops:
/// D~^(-1/2) (A + I) D~^(-1/2). Isolated nodes reduce to self-weight 1.
pub fn normalize_adjacency(graph: &RegionGraph) -> SparseMat {
    let n = graph.node_count();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| 1.0 / libm::sqrt((graph.degree(i) + 1) as f64))
        .collect();
    let mut m = SparseMat::new(n, n);
    for i in 0..n {
        // sorted column order: neighbors below i, self, neighbors above i
        for &j in graph.neighbors(i) {
            if j < i {
                m.entries[i].push((j, inv_sqrt[i] * inv_sqrt[j]));
            }
        }
        m.entries[i].push((i, inv_sqrt[i] * inv_sqrt[i]));
        for &j in graph.neighbors(i) {
            if j > i {
                m.entries[i].push((j, inv_sqrt[i] * inv_sqrt[j]));
            }
        }
    }
    m
}

fn apply_activation(tape: &mut Tape, x: NodeId, activation: Activation, slope: f64) -> NodeId {
    match activation {
        Activation::Relu => tape.relu(x),
        Activation::LeakyRelu => tape.leaky_relu(x, slope),
        Activation::Identity => x,
    }
}

/// One GCN layer: H' = act(A^ H W).
pub fn gcn_forward(
    norm_adj: &Rc<SparseMat>,
    h: &Mat,
    w: &Mat,
    activation: Activation,
    slope: f64,
) -> Mat {
    let mut tape = Tape::new();
    let h = tape.leaf(h.clone());
    let w = tape.leaf(w.clone());
    let out = gcn_layer(&mut tape, norm_adj, h, w, activation, slope);
    tape.value(out).clone()
}

fn gcn_layer(
    tape: &mut Tape,
    norm_adj: &Rc<SparseMat>,
    h: NodeId,
    w: NodeId,
    activation: Activation,
    slope: f64,
) -> NodeId {
    let agg = tape.spmm(norm_adj.clone(), h);
    let z = tape.matmul(agg, w);
    apply_activation(tape, z, activation, slope)
}

/// One GIN layer: MLP((1 + eps) h_i + sum of neighbour h_j) with a
/// two-layer relu MLP.
pub fn gin_forward(adj: &Rc<SparseMat>, h: &Mat, eps: f64, mlp: &GinMlp) -> Mat {
    let mut tape = Tape::new();
    let h = tape.leaf(h.clone());
    let eps = tape.leaf(Mat::from_vec(1, 1, vec![eps]));
    let w1 = tape.leaf(mlp.w1.clone());
    let b1 = tape.leaf(mlp.b1.clone());
    let w2 = tape.leaf(mlp.w2.clone());
    let b2 = tape.leaf(mlp.b2.clone());
    let out = gin_layer(&mut tape, adj, h, eps, (w1, b1, w2, b2));
    tape.value(out).clone()
}

/// Weights of the GIN two-layer MLP.
#[derive(Debug, Clone)]
pub struct GinMlp {
    pub w1: Mat,
    pub b1: Mat,
    pub w2: Mat,
    pub b2: Mat,
}

fn gin_layer(
    tape: &mut Tape,
    adj: &Rc<SparseMat>,
    h: NodeId,
    eps: NodeId,
    (w1, b1, w2, b2): (NodeId, NodeId, NodeId, NodeId),
) -> NodeId {
    let neigh = tape.spmm(adj.clone(), h);
    let selfed = tape.scalar_gain(h, eps, 1.0);
    let z = tape.add(selfed, neigh);
    let l1 = tape.matmul(z, w1);
    let l1 = tape.add_row(l1, b1);
    let l1 = tape.relu(l1);
    let l2 = tape.matmul(l1, w2);
    tape.add_row(l2, b2)
}

/// One GraphSAGE layer with mean aggregation:
/// H'_i = act(W . concat(h_i, mean of neighbour h_j)).
pub fn sage_forward(
    mean_agg: &Rc<SparseMat>,
    h: &Mat,
    w: &Mat,
    activation: Activation,
    slope: f64,
) -> Mat {
    let mut tape = Tape::new();
    let h = tape.leaf(h.clone());
    let w = tape.leaf(w.clone());
    let out = sage_layer(&mut tape, mean_agg, h, w, activation, slope);
    tape.value(out).clone()
}

fn sage_layer(
    tape: &mut Tape,
    mean_agg: &Rc<SparseMat>,
    h: NodeId,
    w: NodeId,
    activation: Activation,
    slope: f64,
) -> NodeId {
    let agg = tape.spmm(mean_agg.clone(), h);
    let cat = tape.concat_cols(h, agg);
    let z = tape.matmul(cat, w);
    apply_activation(tape, z, activation, slope)
}

/// One GATv2 layer. Per edge (j -> i): e_ij = a^T LeakyReLU(W h_i || W h_j),
/// alpha = softmax over j in N(i) u {i}, H'_i = act(sum_j alpha_ij W h_j).
/// Multi-head outputs concatenate when `concat_heads`, otherwise average.
///
/// Returns (H', per-head attention columns) for inspection.
pub fn gatv2_forward(
    ops: &GraphOps,
    h: &Mat,
    ws: &[Mat],
    attn: &[Mat],
    leaky_slope: f64,
    concat_heads: bool,
    activation: Activation,
    act_slope: f64,
) -> (Mat, Vec<Mat>) {
    let mut tape = Tape::new();
    let h = tape.leaf(h.clone());
    let mut head_params = Vec::new();
    for (w, a) in ws.iter().zip(attn) {
        let w = tape.leaf(w.clone());
        let a = tape.leaf(a.clone());
        head_params.push((w, a));
    }
    let (out, alphas) = gatv2_layer(
        &mut tape,
        ops,
        h,
        &head_params,
        leaky_slope,
        concat_heads,
        activation,
        act_slope,
    );
    let alpha_mats = alphas.iter().map(|&a| tape.value(a).clone()).collect();
    (tape.value(out).clone(), alpha_mats)
}

#[allow(clippy::too_many_arguments)]
fn gatv2_layer(
    tape: &mut Tape,
    ops: &GraphOps,
    h: NodeId,
    heads: &[(NodeId, NodeId)],
    leaky_slope: f64,
    concat_heads: bool,
    activation: Activation,
    act_slope: f64,
) -> (NodeId, Vec<NodeId>) {
    let mut outputs = Vec::new();
    let mut alphas = Vec::new();
    for &(w, a) in heads {
        let wh = tape.matmul(h, w);
        let hi = tape.gather_rows(wh, ops.dst.clone());
        let hj = tape.gather_rows(wh, ops.src.clone());
        let cat = tape.concat_cols(hi, hj);
        let act = tape.leaky_relu(cat, leaky_slope);
        let scores = tape.matmul(act, a);
        let alpha = tape.segment_softmax(scores, ops.edges.clone());
        let agg = tape.edge_aggregate(alpha, hj, ops.edges.clone());
        outputs.push(agg);
        alphas.push(alpha);
    }
    let combined = if concat_heads {
        let mut acc = outputs[0];
        for &o in &outputs[1..] {
            acc = tape.concat_cols(acc, o);
        }
        acc
    } else {
        let mut acc = outputs[0];
        for &o in &outputs[1..] {
            acc = tape.add(acc, o);
        }
        tape.scale(acc, 1.0 / outputs.len() as f64)
    };
    (
        apply_activation(tape, combined, activation, act_slope),
        alphas,
    )
}

/// Mean squared error over masked nodes.
pub fn mse_loss(pred: &[f64], y: &[f64], mask: &[bool]) -> Result<f64> {
    assert_eq!(pred.len(), y.len());
    assert_eq!(pred.len(), mask.len());
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..pred.len() {
        if mask[i] {
            let r = pred[i] - y[i];
            sum += r * r;
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(sum / count as f64)
}

// ---------------------------------------------------------------------------
// parameter initialization and the shared forward builder
// ---------------------------------------------------------------------------

fn glorot(rng: &mut Rng, rows: usize, cols: usize) -> Mat {
    let limit = libm::sqrt(6.0 / (rows + cols) as f64);
    let mut m = Mat::zeros(rows, cols);
    for v in m.data.iter_mut() {
        *v = rng.uniform(-limit, limit);
    }
    m
}

/// Allocate all trainable parameters for a spec and input width.
pub fn init_params(spec: &ModelSpec, in_dim: usize, rng: &mut Rng) -> Vec<Param> {
    let mut params = Vec::new();
    let mut push = |name: String, value: Mat| params.push(Param { name, value });
    let widths = spec.layer_widths();
    let mut d_in = in_dim;
    for (l, &d_out) in widths.iter().enumerate() {
        match spec.architecture {
            Architecture::Gcn => {
                push(format!("layer{l}.w"), glorot(rng, d_in, d_out));
                d_in = d_out;
            }
            Architecture::Gin => {
                push(
                    format!("layer{l}.eps"),
                    Mat::from_vec(1, 1, vec![spec.gin_epsilon_init]),
                );
                push(format!("layer{l}.mlp.w1"), glorot(rng, d_in, d_out));
                push(format!("layer{l}.mlp.b1"), Mat::zeros(1, d_out));
                push(format!("layer{l}.mlp.w2"), glorot(rng, d_out, d_out));
                push(format!("layer{l}.mlp.b2"), Mat::zeros(1, d_out));
                d_in = d_out;
            }
            Architecture::GraphSage => {
                push(format!("layer{l}.w"), glorot(rng, 2 * d_in, d_out));
                d_in = d_out;
            }
            Architecture::Gatv2 => {
                let last = l + 1 == widths.len();
                for head in 0..spec.gat_heads {
                    push(format!("layer{l}.head{head}.w"), glorot(rng, d_in, d_out));
                    push(
                        format!("layer{l}.head{head}.a"),
                        glorot(rng, 2 * d_out, 1),
                    );
                }
                // hidden layers concatenate heads, the final layer averages
                d_in = if last { d_out } else { d_out * spec.gat_heads };
            }
        }
    }
    push("head.w".into(), glorot(rng, d_in, 1));
    push("head.b".into(), Mat::zeros(1, 1));
    params
}

struct BuiltForward {
    pred: NodeId,
    embedding: NodeId,
    param_ids: Vec<NodeId>,
}

/// Record the full network on a tape. `dropout_masks` carries one
/// keep/scale mask per hidden layer when training; None means eval mode.
fn build_forward(
    tape: &mut Tape,
    ops: &GraphOps,
    spec: &ModelSpec,
    params: &[Param],
    x: &Mat,
    dropout_masks: Option<&[Rc<Vec<f64>>]>,
) -> BuiltForward {
    let param_ids: Vec<NodeId> = params.iter().map(|p| tape.leaf(p.value.clone())).collect();
    let x_id = tape.leaf(x.clone());
    let widths = spec.layer_widths();
    let mut cursor = 0usize;
    let mut next = || {
        let id = param_ids[cursor];
        cursor += 1;
        id
    };
    let mut h = x_id;
    for (l, _) in widths.iter().enumerate() {
        let last = l + 1 == widths.len();
        h = match spec.architecture {
            Architecture::Gcn => {
                let w = next();
                gcn_layer(tape, &ops.norm_adj, h, w, spec.activation, spec.leaky_slope)
            }
            Architecture::Gin => {
                let eps = next();
                let mlp = (next(), next(), next(), next());
                let z = gin_layer(tape, &ops.adj, h, eps, mlp);
                apply_activation(tape, z, spec.activation, spec.leaky_slope)
            }
            Architecture::GraphSage => {
                let w = next();
                sage_layer(tape, &ops.mean_agg, h, w, spec.activation, spec.leaky_slope)
            }
            Architecture::Gatv2 => {
                let heads: Vec<(NodeId, NodeId)> =
                    (0..spec.gat_heads).map(|_| (next(), next())).collect();
                gatv2_layer(
                    tape,
                    ops,
                    h,
                    &heads,
                    spec.leaky_slope,
                    !last,
                    spec.activation,
                    spec.leaky_slope,
                )
                .0
            }
        };
        // dropout after each hidden activation, never on the head input
        if !last {
            if let Some(masks) = dropout_masks {
                h = tape.mask_mul(h, masks[l].clone());
            }
        }
    }
    let embedding = h;
    let head_w = next();
    let head_b = next();
    let z = tape.matmul(embedding, head_w);
    let pred = tape.add_row(z, head_b);
    debug_assert_eq!(cursor, param_ids.len());
    BuiltForward {
        pred,
        embedding,
        param_ids,
    }
}

/// Eval-mode forward pass: predictions and the penultimate embedding.
pub fn forward(
    model: &TrainedModel,
    ops: &GraphOps,
    x: &Mat,
) -> (Vec<f64>, Mat) {
    let mut tape = Tape::new();
    let built = build_forward(&mut tape, ops, &model.spec, &model.params, x, None);
    let pred = tape.value(built.pred).col(0);
    let embedding = tape.value(built.embedding).clone();
    (pred, embedding)
}

// ---------------------------------------------------------------------------
// optimizers
// ---------------------------------------------------------------------------

/// Per-parameter optimizer state (first/second moment accumulators).
#[derive(Debug, Clone)]
pub struct OptState {
    m: Vec<Mat>,
    v: Vec<Mat>,
    t: usize,
}

impl OptState {
    pub fn new(params: &[Param]) -> Self {
        OptState {
            m: params
                .iter()
                .map(|p| Mat::zeros(p.value.rows, p.value.cols))
                .collect(),
            v: params
                .iter()
                .map(|p| Mat::zeros(p.value.rows, p.value.cols))
                .collect(),
            t: 0,
        }
    }
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const RMS_DECAY: f64 = 0.99;
const OPT_EPS: f64 = 1e-8;

/// One optimizer update. Weight decay enters as an L2 gradient addition
/// before the rule-specific step.
pub fn optimizer_step(
    state: &mut OptState,
    params: &mut [Param],
    grads: &[Mat],
    config: &TrainConfig,
) {
    assert_eq!(params.len(), grads.len());
    state.t += 1;
    for (k, param) in params.iter_mut().enumerate() {
        let theta = &mut param.value.data;
        let g_raw = &grads[k].data;
        match config.optimizer {
            Optimizer::Sgd => {
                for i in 0..theta.len() {
                    let g = g_raw[i] + config.weight_decay * theta[i];
                    theta[i] -= config.lr * g;
                }
            }
            Optimizer::Rmsprop => {
                for i in 0..theta.len() {
                    let g = g_raw[i] + config.weight_decay * theta[i];
                    let v = &mut state.v[k].data[i];
                    *v = RMS_DECAY * *v + (1.0 - RMS_DECAY) * g * g;
                    theta[i] -= config.lr * g / (libm::sqrt(*v) + OPT_EPS);
                }
            }
            Optimizer::Adam => {
                let bc1 = 1.0 - libm::pow(ADAM_BETA1, state.t as f64);
                let bc2 = 1.0 - libm::pow(ADAM_BETA2, state.t as f64);
                for i in 0..theta.len() {
                    let g = g_raw[i] + config.weight_decay * theta[i];
                    let m = &mut state.m[k].data[i];
                    let v = &mut state.v[k].data[i];
                    *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
                    *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
                    let m_hat = *m / bc1;
                    let v_hat = *v / bc2;
                    theta[i] -= config.lr * m_hat / (libm::sqrt(v_hat) + OPT_EPS);
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

/// Gradients of the masked MSE with respect to every parameter, for one
/// forward/backward pass. Exposed for gradient-checking tests.
pub fn loss_gradients(
    spec: &ModelSpec,
    ops: &GraphOps,
    params: &[Param],
    x: &Mat,
    y: &[f64],
    mask: &[bool],
) -> Result<(f64, Vec<Mat>)> {
    let mut tape = Tape::new();
    let built = build_forward(&mut tape, ops, spec, params, x, None);
    let mask_idx: Rc<Vec<usize>> = Rc::new(
        mask.iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect(),
    );
    let loss = tape.mse_masked(built.pred, Rc::new(y.to_vec()), mask_idx)?;
    let loss_val = tape.value(loss)[(0, 0)];
    let grads = tape.backward(loss)?;
    let out = built
        .param_ids
        .iter()
        .zip(params)
        .map(|(&id, p)| grads.get(id, p.value.shape()))
        .collect();
    Ok((loss_val, out))
}

/// Train a network transductively on one graph.
///
/// Loss is computed over `train_mask`; `val_mask` drives early stopping
/// with the configured patience, restoring the best-validation parameters.
/// Deterministic for a fixed seed.
pub fn train(
    spec: &ModelSpec,
    graph: &RegionGraph,
    x: &Mat,
    y: &[f64],
    train_mask: &[bool],
    val_mask: &[bool],
    config: &TrainConfig,
) -> Result<TrainedModel> {
    let n = graph.node_count();
    assert_eq!(x.rows, n);
    assert_eq!(y.len(), n);
    assert_eq!(train_mask.len(), n);
    assert_eq!(val_mask.len(), n);
    assert!(
        train_mask.iter().zip(val_mask).all(|(&t, &v)| !(t && v)),
        "train and validation masks overlap"
    );
    if !train_mask.iter().any(|&m| m) {
        return Err(Error::EmptyTrainMask);
    }
    let has_val = val_mask.iter().any(|&m| m);

    let ops = GraphOps::new(graph);
    let mut rng = Rng::seed_from_u64(config.seed);
    let mut params = init_params(spec, x.cols, &mut rng);
    let mut state = OptState::new(&params);

    let train_idx: Rc<Vec<usize>> = Rc::new(
        train_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect(),
    );
    let y_rc: Rc<Vec<f64>> = Rc::new(y.to_vec());
    let widths = spec.layer_widths();

    let mut log = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_params = params.clone();
    let mut bad_epochs = 0usize;

    for epoch in 1..=config.epochs {
        // fresh dropout masks each epoch
        let masks: Option<Vec<Rc<Vec<f64>>>> = if spec.dropout > 0.0 && widths.len() > 1 {
            let keep = 1.0 - spec.dropout;
            Some(
                widths[..widths.len() - 1]
                    .iter()
                    .map(|&w_out| {
                        let cols = if spec.architecture == Architecture::Gatv2 {
                            w_out * spec.gat_heads
                        } else {
                            w_out
                        };
                        Rc::new(
                            (0..n * cols)
                                .map(|_| {
                                    if rng.next_f64() < keep {
                                        1.0 / keep
                                    } else {
                                        0.0
                                    }
                                })
                                .collect(),
                        )
                    })
                    .collect(),
            )
        } else {
            None
        };

        let mut tape = Tape::new();
        let built = build_forward(&mut tape, &ops, spec, &params, x, masks.as_deref());
        let loss = tape.mse_masked(built.pred, y_rc.clone(), train_idx.clone())?;
        let train_loss = tape.value(loss)[(0, 0)];
        let grads = tape.backward(loss)?;
        let grad_mats: Vec<Mat> = built
            .param_ids
            .iter()
            .zip(&params)
            .map(|(&id, p)| grads.get(id, p.value.shape()))
            .collect();
        optimizer_step(&mut state, &mut params, &grad_mats, config);

        // eval-mode pass for the early-stopping criterion
        let model_view = TrainedModel {
            spec: spec.clone(),
            params: params.clone(),
            training_log: Vec::new(),
            seed: config.seed,
        };
        let (pred, _) = forward(&model_view, &ops, x);
        let val_loss = if has_val {
            mse_loss(&pred, y, val_mask)?
        } else {
            mse_loss(&pred, y, train_mask)?
        };
        log.push(EpochLog {
            epoch,
            train_loss,
            val_loss,
        });

        if val_loss < best_val {
            best_val = val_loss;
            best_params = params.clone();
            bad_epochs = 0;
        } else {
            bad_epochs += 1;
            if bad_epochs >= config.patience {
                break;
            }
        }
    }

    Ok(TrainedModel {
        spec: spec.clone(),
        params: best_params,
        training_log: log,
        seed: config.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Region;
    use approx::assert_abs_diff_eq;

    fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> RegionGraph {
        let regions: Vec<Region> = (0..n)
            .map(|i| Region::point(format!("p{i}"), i as f64, 0.0))
            .collect();
        RegionGraph::from_edges(regions, edges)
    }

    fn random_graph(rng: &mut Rng, n: usize, p: f64) -> RegionGraph {
        let mut edges = Vec::new();
        for i in 0..n {
            for j in i + 1..n {
                if rng.next_f64() < p {
                    edges.push((i, j));
                }
            }
        }
        // avoid fully isolated graphs
        if edges.is_empty() {
            edges.push((0, 1 % n.max(2)));
        }
        graph_from_edges(n, &edges)
    }

    fn rand_mat(rng: &mut Rng, r: usize, c: usize) -> Mat {
        let mut m = Mat::zeros(r, c);
        for v in m.data.iter_mut() {
            *v = rng.normal();
        }
        m
    }

    #[test]
    fn normalize_single_node() {
        let g = graph_from_edges(1, &[]);
        let a = normalize_adjacency(&g).to_dense();
        assert_eq!(a[(0, 0)], 1.0);
    }

    #[test]
    fn normalize_edge_pair() {
        let g = graph_from_edges(2, &[(0, 1)]);
        let a = normalize_adjacency(&g).to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert_abs_diff_eq!(a[(i, j)], 0.5, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn normalize_symmetric() {
        let mut rng = Rng::seed_from_u64(61);
        let g = random_graph(&mut rng, 12, 0.3);
        let a = normalize_adjacency(&g).to_dense();
        for i in 0..12 {
            for j in 0..12 {
                assert_eq!(a[(i, j)], a[(j, i)]);
            }
        }
    }

    #[test]
    fn gcn_identity_case() {
        let g = graph_from_edges(3, &[]); // normalize -> identity
        let ops = GraphOps::new(&g);
        let h = Mat::from_rows(&[vec![1.0, 2.0], vec![0.5, 0.0], vec![3.0, 1.0]]);
        let w = Mat::identity(2);
        let out = gcn_forward(&ops.norm_adj, &h, &w, Activation::Relu, 0.0);
        assert_eq!(out, h);
    }

    #[test]
    fn gcn_two_node_hand_value() {
        // 2-node graph, H = ((1),(3)), W = (1), linear: H' = ((2),(2))
        let g = graph_from_edges(2, &[(0, 1)]);
        let ops = GraphOps::new(&g);
        let h = Mat::from_rows(&[vec![1.0], vec![3.0]]);
        let w = Mat::from_vec(1, 1, vec![1.0]);
        let out = gcn_forward(&ops.norm_adj, &h, &w, Activation::Identity, 0.0);
        assert_abs_diff_eq!(out[(0, 0)], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[(1, 0)], 2.0, epsilon = 1e-12);
    }

    #[test]
    fn gcn_matches_dense_oracle() {
        let mut rng = Rng::seed_from_u64(62);
        let g = random_graph(&mut rng, 5, 0.5);
        let ops = GraphOps::new(&g);
        let h = rand_mat(&mut rng, 5, 3);
        let w = rand_mat(&mut rng, 3, 2);
        let out = gcn_forward(&ops.norm_adj, &h, &w, Activation::Relu, 0.0);
        let dense = ops
            .norm_adj
            .to_dense()
            .matmul(&h)
            .matmul(&w)
            .map(|v| v.max(0.0));
        assert!(out.sub(&dense).max_abs() < 1e-10);
    }

    fn identity_mlp(dim: usize) -> GinMlp {
        GinMlp {
            w1: Mat::identity(dim),
            b1: Mat::zeros(1, dim),
            w2: Mat::identity(dim),
            b2: Mat::zeros(1, dim),
        }
    }

    #[test]
    fn gin_edgeless_identity() {
        let g = graph_from_edges(3, &[]);
        let ops = GraphOps::new(&g);
        let h = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let out = gin_forward(&ops.adj, &h, 0.0, &identity_mlp(1));
        assert_eq!(out, h);
    }

    #[test]
    fn gin_triangle_sums() {
        // triangle, h = (1,2,3), eps = 0: z_i = h_i + sum of others = 6
        let g = graph_from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        let ops = GraphOps::new(&g);
        let h = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let out = gin_forward(&ops.adj, &h, 0.0, &identity_mlp(1));
        for i in 0..3 {
            assert_abs_diff_eq!(out[(i, 0)], 6.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gin_eps_minus_one_drops_self() {
        let g = graph_from_edges(3, &[(0, 1), (1, 2), (0, 2)]);
        let ops = GraphOps::new(&g);
        let h = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let out = gin_forward(&ops.adj, &h, -1.0, &identity_mlp(1));
        assert_abs_diff_eq!(out[(0, 0)], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[(1, 0)], 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[(2, 0)], 3.0, epsilon = 1e-12);
    }

    #[test]
    fn sage_isolated_and_means() {
        // path 0-1-2: neighbour means (2, 2, 2); W selecting the aggregate
        let g = graph_from_edges(3, &[(0, 1), (1, 2)]);
        let ops = GraphOps::new(&g);
        let h = Mat::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]);
        let w = Mat::from_rows(&[vec![0.0], vec![1.0]]); // pick aggregate half
        let out = sage_forward(&ops.mean_agg, &h, &w, Activation::Identity, 0.0);
        for i in 0..3 {
            assert_abs_diff_eq!(out[(i, 0)], 2.0, epsilon = 1e-12);
        }
        // isolated node aggregates zero
        let g2 = graph_from_edges(2, &[]);
        let ops2 = GraphOps::new(&g2);
        let h2 = Mat::from_rows(&[vec![5.0], vec![7.0]]);
        let out2 = sage_forward(&ops2.mean_agg, &h2, &w, Activation::Identity, 0.0);
        assert_eq!(out2.data, vec![0.0, 0.0]);
    }

    #[test]
    fn sage_matches_dense_oracle() {
        let mut rng = Rng::seed_from_u64(63);
        let g = random_graph(&mut rng, 6, 0.4);
        let ops = GraphOps::new(&g);
        let h = rand_mat(&mut rng, 6, 2);
        let w = rand_mat(&mut rng, 4, 3);
        let out = sage_forward(&ops.mean_agg, &h, &w, Activation::Relu, 0.0);
        let agg = ops.mean_agg.to_dense().matmul(&h);
        let dense = h.hcat(&agg).matmul(&w).map(|v| v.max(0.0));
        assert!(out.sub(&dense).max_abs() < 1e-10);
    }

    #[test]
    fn gatv2_zero_attention_is_uniform_mean() {
        let mut rng = Rng::seed_from_u64(64);
        let g = random_graph(&mut rng, 5, 0.5);
        let ops = GraphOps::new(&g);
        let h = rand_mat(&mut rng, 5, 2);
        let w = rand_mat(&mut rng, 2, 3);
        let a = Mat::zeros(6, 1);
        let (out, alphas) = gatv2_forward(
            &ops,
            &h,
            &[w.clone()],
            &[a],
            0.2,
            false,
            Activation::Identity,
            0.0,
        );
        // uniform alpha over N(i) u {i}: out_i = mean of W h_j
        let wh = h.matmul(&w);
        for i in 0..5 {
            let mut neigh: Vec<usize> = g.neighbors(i).to_vec();
            neigh.push(i);
            for c in 0..3 {
                let mean: f64 =
                    neigh.iter().map(|&j| wh[(j, c)]).sum::<f64>() / neigh.len() as f64;
                assert_abs_diff_eq!(out[(i, c)], mean, epsilon = 1e-10);
            }
        }
        // attention rows sum to 1
        let alpha = &alphas[0];
        for seg in 0..5 {
            let (lo, hi) = (ops.edges.offsets[seg], ops.edges.offsets[seg + 1]);
            let sum: f64 = (lo..hi).map(|e| alpha[(e, 0)]).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gatv2_single_node() {
        let g = graph_from_edges(1, &[]);
        let ops = GraphOps::new(&g);
        let h = Mat::from_rows(&[vec![2.0]]);
        let w = Mat::from_vec(1, 1, vec![3.0]);
        let a = Mat::from_rows(&[vec![0.7], vec![-0.4]]);
        let (out, alphas) = gatv2_forward(
            &ops,
            &h,
            &[w],
            &[a],
            0.2,
            false,
            Activation::Identity,
            0.0,
        );
        assert_abs_diff_eq!(alphas[0][(0, 0)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out[(0, 0)], 6.0, epsilon = 1e-12);
    }

    #[test]
    fn mse_loss_examples() {
        assert_eq!(
            mse_loss(&[1.0, 2.0], &[1.0, 2.0], &[true, true]).unwrap(),
            0.0
        );
        assert_eq!(
            mse_loss(&[1.0, -1.0], &[0.0, 0.0], &[true, true]).unwrap(),
            1.0
        );
        assert_eq!(
            mse_loss(&[4.0, 0.0], &[1.0, 0.0], &[true, false]).unwrap(),
            9.0
        );
        assert_eq!(
            mse_loss(&[1.0], &[1.0], &[false]),
            Err(Error::EmptyMask)
        );
    }

    fn fd_gradient_check(arch: Architecture, seed: u64) {
        let mut rng = Rng::seed_from_u64(seed);
        let n = 8;
        let g = random_graph(&mut rng, n, 0.4);
        let ops = GraphOps::new(&g);
        let spec = ModelSpec {
            architecture: arch,
            depth: 2,
            hidden1: 4,
            hidden2: 3,
            dropout: 0.0,
            activation: Activation::Relu,
            gin_epsilon_init: 0.1,
            gat_heads: 2,
            leaky_slope: 0.2,
            ..ModelSpec::default()
        };
        let x = rand_mat(&mut rng, n, 3);
        let y: Vec<f64> = (0..n).map(|_| rng.normal()).collect();
        let mask: Vec<bool> = (0..n).map(|i| i % 3 != 0).collect();
        let mut params = init_params(&spec, 3, &mut rng);
        // jitter every parameter (biases init to zero, which can park a
        // relu input exactly at its kink where finite differences and the
        // subgradient legitimately disagree)
        for p in params.iter_mut() {
            for v in p.value.data.iter_mut() {
                *v += 0.05 * rng.normal();
            }
        }
        let (_, grads) = loss_gradients(&spec, &ops, &params, &x, &y, &mask).unwrap();
        let step = 1e-5;
        for (k, p) in params.iter().enumerate() {
            for e in 0..p.value.data.len() {
                let mut plus = params.clone();
                plus[k].value.data[e] += step;
                let (lp, _) = loss_gradients(&spec, &ops, &plus, &x, &y, &mask).unwrap();
                let mut minus = params.clone();
                minus[k].value.data[e] -= step;
                let (lm, _) = loss_gradients(&spec, &ops, &minus, &x, &y, &mask).unwrap();
                let numeric = (lp - lm) / (2.0 * step);
                let analytic = grads[k].data[e];
                let denom = numeric.abs().max(analytic.abs()).max(1e-6);
                assert!(
                    ((analytic - numeric) / denom).abs() < 1e-4,
                    "{} param {} entry {e}: {analytic} vs {numeric}",
                    arch.label(),
                    p.name
                );
            }
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        for (i, arch) in Architecture::ALL.into_iter().enumerate() {
            fd_gradient_check(arch, 100 + i as u64);
        }
    }

    #[test]
    fn forward_embedding_width_and_determinism() {
        let mut rng = Rng::seed_from_u64(70);
        let g = random_graph(&mut rng, 10, 0.3);
        let spec = ModelSpec {
            architecture: Architecture::Gcn,
            depth: 2,
            hidden1: 8,
            hidden2: 5,
            dropout: 0.0,
            ..ModelSpec::default()
        };
        let x = rand_mat(&mut rng, 10, 4);
        let mut prng = Rng::seed_from_u64(1);
        let params = init_params(&spec, 4, &mut prng);
        let model = TrainedModel {
            spec,
            params,
            training_log: Vec::new(),
            seed: 1,
        };
        let ops = GraphOps::new(&g);
        let (p1, emb) = forward(&model, &ops, &x);
        assert_eq!(emb.cols, 5);
        let (p2, _) = forward(&model, &ops, &x);
        assert_eq!(p1, p2); // bitwise identical in eval mode
    }

    #[test]
    fn zero_weight_head_predicts_bias() {
        let mut rng = Rng::seed_from_u64(71);
        let g = random_graph(&mut rng, 6, 0.4);
        let spec = ModelSpec {
            architecture: Architecture::Gcn,
            depth: 1,
            hidden1: 4,
            hidden2: 4,
            dropout: 0.0,
            ..ModelSpec::default()
        };
        let x = rand_mat(&mut rng, 6, 3);
        let mut params = init_params(&spec, 3, &mut rng);
        for p in params.iter_mut() {
            if p.name == "head.w" {
                p.value = Mat::zeros(p.value.rows, 1);
            }
            if p.name == "head.b" {
                p.value = Mat::from_vec(1, 1, vec![2.5]);
            }
        }
        let model = TrainedModel {
            spec,
            params,
            training_log: Vec::new(),
            seed: 0,
        };
        let ops = GraphOps::new(&g);
        let (pred, _) = forward(&model, &ops, &x);
        assert!(pred.iter().all(|&p| p == 2.5));
    }

    #[test]
    fn permutation_equivariance_of_predictions() {
        let mut rng = Rng::seed_from_u64(72);
        let n = 9;
        let g = random_graph(&mut rng, n, 0.35);
        let spec = ModelSpec {
            architecture: Architecture::Gatv2,
            depth: 2,
            hidden1: 4,
            hidden2: 3,
            dropout: 0.0,
            gat_heads: 2,
            ..ModelSpec::default()
        };
        let x = rand_mat(&mut rng, n, 3);
        let mut prng = Rng::seed_from_u64(5);
        let params = init_params(&spec, 3, &mut prng);
        let model = TrainedModel {
            spec,
            params,
            training_log: Vec::new(),
            seed: 5,
        };
        let (pred, _) = forward(&model, &GraphOps::new(&g), &x);

        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let mut inv = vec![0usize; n];
        for (new_i, &old_i) in perm.iter().enumerate() {
            inv[old_i] = new_i;
        }
        let regions: Vec<Region> = perm.iter().map(|&i| g.regions[i].clone()).collect();
        let edges: Vec<(usize, usize)> = g
            .edge_list()
            .into_iter()
            .map(|(a, b)| (inv[a], inv[b]))
            .collect();
        let gp = RegionGraph::from_edges(regions, &edges);
        let mut xp = Mat::zeros(n, 3);
        for old_i in 0..n {
            xp.row_mut(inv[old_i]).copy_from_slice(x.row(old_i));
        }
        let (pred_p, _) = forward(&model, &GraphOps::new(&gp), &xp);
        for old_i in 0..n {
            assert_abs_diff_eq!(pred[old_i], pred_p[inv[old_i]], epsilon = 1e-10);
        }
    }

    #[test]
    fn sgd_hand_step() {
        let mut params = vec![Param {
            name: "w".into(),
            value: Mat::from_vec(1, 1, vec![1.0]),
        }];
        let grads = vec![Mat::from_vec(1, 1, vec![0.5])];
        let config = TrainConfig {
            lr: 0.1,
            weight_decay: 0.0,
            optimizer: Optimizer::Sgd,
            ..TrainConfig::default()
        };
        let mut state = OptState::new(&params);
        optimizer_step(&mut state, &mut params, &grads, &config);
        assert_abs_diff_eq!(params[0].value[(0, 0)], 0.95, epsilon = 1e-15);
    }

    #[test]
    fn adam_first_step_magnitude() {
        // bias-corrected first Adam step is ~lr regardless of gradient scale
        for &gscale in &[1e-3, 1.0, 1e3] {
            let mut params = vec![Param {
                name: "w".into(),
                value: Mat::from_vec(1, 1, vec![0.0]),
            }];
            let grads = vec![Mat::from_vec(1, 1, vec![gscale])];
            let config = TrainConfig {
                lr: 0.01,
                weight_decay: 0.0,
                optimizer: Optimizer::Adam,
                ..TrainConfig::default()
            };
            let mut state = OptState::new(&params);
            optimizer_step(&mut state, &mut params, &grads, &config);
            assert_abs_diff_eq!(params[0].value[(0, 0)].abs(), 0.01, epsilon = 1e-5);
        }
    }

    #[test]
    fn zero_gradient_leaves_params() {
        for opt in [Optimizer::Adam, Optimizer::Sgd, Optimizer::Rmsprop] {
            let mut params = vec![Param {
                name: "w".into(),
                value: Mat::from_vec(1, 1, vec![1.5]),
            }];
            let grads = vec![Mat::zeros(1, 1)];
            let config = TrainConfig {
                weight_decay: 0.0,
                optimizer: opt,
                ..TrainConfig::default()
            };
            let mut state = OptState::new(&params);
            optimizer_step(&mut state, &mut params, &grads, &config);
            assert_eq!(params[0].value[(0, 0)], 1.5);
        }
    }

    fn linear_fixture(
        seed: u64,
    ) -> (RegionGraph, Mat, Vec<f64>, Vec<bool>, Vec<bool>) {
        let mut rng = Rng::seed_from_u64(seed);
        let n = 30;
        let g = random_graph(&mut rng, n, 0.15);
        let x = rand_mat(&mut rng, n, 3);
        let y: Vec<f64> = (0..n)
            .map(|i| 2.0 * x[(i, 0)] - x[(i, 1)] + 0.5 * x[(i, 2)])
            .collect();
        let train: Vec<bool> = (0..n).map(|i| i % 5 != 0).collect();
        let val: Vec<bool> = (0..n).map(|i| i % 5 == 0).collect();
        (g, x, y, train, val)
    }

    #[test]
    fn training_descends() {
        let (g, x, y, train_mask, val_mask) = linear_fixture(80);
        let spec = ModelSpec {
            architecture: Architecture::Gcn,
            depth: 2,
            hidden1: 8,
            hidden2: 4,
            dropout: 0.0,
            ..ModelSpec::default()
        };
        let config = TrainConfig {
            lr: 0.01,
            epochs: 100,
            patience: 100,
            seed: 3,
            ..TrainConfig::default()
        };
        let model = train(&spec, &g, &x, &y, &train_mask, &val_mask, &config).unwrap();
        let first = model.training_log.first().unwrap().train_loss;
        let last = model.training_log.last().unwrap().train_loss;
        assert!(last < first, "no descent: {first} -> {last}");
    }

    #[test]
    fn training_is_deterministic() {
        let (g, x, y, train_mask, val_mask) = linear_fixture(81);
        let spec = ModelSpec {
            architecture: Architecture::GraphSage,
            depth: 2,
            hidden1: 6,
            hidden2: 4,
            dropout: 0.3,
            ..ModelSpec::default()
        };
        let config = TrainConfig {
            epochs: 20,
            seed: 9,
            ..TrainConfig::default()
        };
        let m1 = train(&spec, &g, &x, &y, &train_mask, &val_mask, &config).unwrap();
        let m2 = train(&spec, &g, &x, &y, &train_mask, &val_mask, &config).unwrap();
        assert_eq!(m1.training_log, m2.training_log);
        assert_eq!(m1.params, m2.params);
    }

    #[test]
    fn patience_one_stops_after_two_epochs() {
        // an lr of 0 keeps parameters frozen, so val loss never improves
        // after the first epoch; patience=1 stops at epoch 2
        let (g, x, y, train_mask, val_mask) = linear_fixture(82);
        let spec = ModelSpec {
            architecture: Architecture::Gcn,
            depth: 1,
            hidden1: 4,
            hidden2: 4,
            dropout: 0.0,
            ..ModelSpec::default()
        };
        let config = TrainConfig {
            lr: 0.0,
            epochs: 50,
            patience: 1,
            seed: 4,
            weight_decay: 0.0,
            ..TrainConfig::default()
        };
        let model = train(&spec, &g, &x, &y, &train_mask, &val_mask, &config).unwrap();
        assert_eq!(model.training_log.len(), 2);
    }

    #[test]
    fn empty_train_mask_errors() {
        let (g, x, y, _, val_mask) = linear_fixture(83);
        let spec = ModelSpec::default();
        let config = TrainConfig::default();
        let none = vec![false; g.node_count()];
        assert_eq!(
            train(&spec, &g, &x, &y, &none, &val_mask, &config).unwrap_err(),
            Error::EmptyTrainMask
        );
    }
}
