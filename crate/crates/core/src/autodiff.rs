//! Tape-based reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a forward pass; [`Tape::backward`]
//! replays the recording in reverse, accumulating exact gradients for every
//! node. The operation set is exactly what the message-passing layers need:
//! dense and sparse matrix products, elementwise activations, column
//! concatenation, edge gather/scatter with per-neighbourhood softmax, and a
//! masked mean-squared-error terminal.

use alloc::rc::Rc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{Mat, SparseMat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(pub usize);

/// Edge structure for attention: edges grouped by destination node, each
/// group contiguous. `offsets[i]..offsets[i+1]` are the edges into node i.
#[derive(Debug, Clone)]
pub struct EdgeIndex {
    /// Source node of each edge.
    pub src: Vec<usize>,
    /// Destination node of each edge.
    pub dst: Vec<usize>,
    /// Group boundaries per destination node (len = n + 1).
    pub offsets: Vec<usize>,
    pub n_nodes: usize,
}

impl EdgeIndex {
    /// Build from neighbour lists with a self-loop added to every node.
    pub fn with_self_loops(neighbors: impl Fn(usize) -> Vec<usize>, n: usize) -> Self {
        let mut src = Vec::new();
        let mut dst = Vec::new();
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for i in 0..n {
            src.push(i);
            dst.push(i);
            for j in neighbors(i) {
                src.push(j);
                dst.push(i);
            }
            offsets.push(src.len());
        }
        EdgeIndex {
            src,
            dst,
            offsets,
            n_nodes: n,
        }
    }

    pub fn n_edges(&self) -> usize {
        self.src.len()
    }
}

enum Op {
    Leaf,
    /// a (n x m) * b (m x p)
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    /// x (n x c) + row-broadcast bias (1 x c)
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    /// sparse operator times dense x
    SpMM(Rc<SparseMat>, NodeId),
    /// (offset + eps) * x where eps is a 1x1 node (GIN's epsilon term)
    ScalarGain {
        x: NodeId,
        eps: NodeId,
        offset: f64,
    },
    ConcatCols(NodeId, NodeId),
    /// select rows of x by index (edge gather)
    GatherRows(NodeId, Rc<Vec<usize>>),
    /// softmax of an E x 1 score column within each contiguous segment
    SegmentSoftmax(NodeId, Rc<EdgeIndex>),
    /// out[dst[e]] += alpha[e] * feats[e] (attention-weighted aggregation)
    EdgeAggregate {
        alpha: NodeId,
        feats: NodeId,
        edges: Rc<EdgeIndex>,
    },
    /// elementwise product with a constant mask (dropout)
    MaskMul(NodeId, Rc<Vec<f64>>),
    /// mean squared error of pred (n x 1) vs target over masked indices
    MseMasked {
        pred: NodeId,
        target: Rc<Vec<f64>>,
        mask: Rc<Vec<usize>>,
    },
}

struct Node {
    value: Mat,
    op: Op,
}

/// Recorded computation graph.
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    fn push(&mut self, value: Mat, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Mat) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Mat {
        &self.nodes[id.0].value
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).matmul(self.value(b));
        self.push(v, Op::MatMul(a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).add(self.value(b));
        self.push(v, Op::Add(a, b))
    }

    /// Add a 1 x c bias row to every row of x.
    pub fn add_row(&mut self, x: NodeId, bias: NodeId) -> NodeId {
        let xv = self.value(x);
        let bv = self.value(bias);
        assert_eq!(bv.rows, 1);
        assert_eq!(bv.cols, xv.cols);
        let mut v = xv.clone();
        for i in 0..v.rows {
            for j in 0..v.cols {
                v[(i, j)] += bv[(0, j)];
            }
        }
        self.push(v, Op::AddRow(x, bias))
    }

    pub fn scale(&mut self, x: NodeId, c: f64) -> NodeId {
        let v = self.value(x).scale(c);
        self.push(v, Op::Scale(x, c))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { 0.0 });
        self.push(v, Op::Relu(x))
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: f64) -> NodeId {
        let v = self.value(x).map(|a| if a > 0.0 { a } else { slope * a });
        self.push(v, Op::LeakyRelu(x, slope))
    }

    pub fn spmm(&mut self, m: Rc<SparseMat>, x: NodeId) -> NodeId {
        let v = m.matmul(self.value(x));
        self.push(v, Op::SpMM(m, x))
    }

    /// (offset + eps) * x with eps a trainable 1x1 node.
    pub fn scalar_gain(&mut self, x: NodeId, eps: NodeId, offset: f64) -> NodeId {
        let e = self.value(eps)[(0, 0)];
        let v = self.value(x).scale(offset + e);
        self.push(v, Op::ScalarGain { x, eps, offset })
    }

    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let v = self.value(a).hcat(self.value(b));
        self.push(v, Op::ConcatCols(a, b))
    }

    pub fn gather_rows(&mut self, x: NodeId, idx: Rc<Vec<usize>>) -> NodeId {
        let xv = self.value(x);
        let mut v = Mat::zeros(idx.len(), xv.cols);
        for (out_i, &i) in idx.iter().enumerate() {
            v.row_mut(out_i).copy_from_slice(xv.row(i));
        }
        self.push(v, Op::GatherRows(x, idx))
    }

    /// Softmax within each destination's contiguous edge block.
    pub fn segment_softmax(&mut self, scores: NodeId, edges: Rc<EdgeIndex>) -> NodeId {
        let sv = self.value(scores);
        assert_eq!(sv.cols, 1);
        assert_eq!(sv.rows, edges.n_edges());
        let mut v = Mat::zeros(sv.rows, 1);
        for seg in 0..edges.n_nodes {
            let (lo, hi) = (edges.offsets[seg], edges.offsets[seg + 1]);
            if lo == hi {
                continue;
            }
            let max = (lo..hi).map(|e| sv[(e, 0)]).fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for e in lo..hi {
                let x = libm::exp(sv[(e, 0)] - max);
                v[(e, 0)] = x;
                sum += x;
            }
            for e in lo..hi {
                v[(e, 0)] /= sum;
            }
        }
        self.push(v, Op::SegmentSoftmax(scores, edges))
    }

    /// out[dst[e]] += alpha[e] * feats[e].
    pub fn edge_aggregate(&mut self, alpha: NodeId, feats: NodeId, edges: Rc<EdgeIndex>) -> NodeId {
        let av = self.value(alpha);
        let fv = self.value(feats);
        assert_eq!(av.rows, edges.n_edges());
        assert_eq!(fv.rows, edges.n_edges());
        let mut v = Mat::zeros(edges.n_nodes, fv.cols);
        for e in 0..edges.n_edges() {
            let w = av[(e, 0)];
            let frow = fv.row(e);
            let orow = v.row_mut(edges.dst[e]);
            for (o, &f) in orow.iter_mut().zip(frow) {
                *o += w * f;
            }
        }
        self.push(v, Op::EdgeAggregate { alpha, feats, edges })
    }

    pub fn mask_mul(&mut self, x: NodeId, mask: Rc<Vec<f64>>) -> NodeId {
        let xv = self.value(x);
        assert_eq!(mask.len(), xv.data.len());
        let data = xv.data.iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
        let v = Mat::from_vec(xv.rows, xv.cols, data);
        self.push(v, Op::MaskMul(x, mask))
    }

    /// Mean of squared residuals over the masked node indices; 1x1 output.
    pub fn mse_masked(
        &mut self,
        pred: NodeId,
        target: Rc<Vec<f64>>,
        mask: Rc<Vec<usize>>,
    ) -> Result<NodeId> {
        if mask.is_empty() {
            return Err(Error::EmptyMask);
        }
        let pv = self.value(pred);
        assert_eq!(pv.cols, 1);
        assert_eq!(pv.rows, target.len());
        let mut sum = 0.0;
        for &i in mask.iter() {
            let r = pv[(i, 0)] - target[i];
            sum += r * r;
        }
        let v = Mat::from_vec(1, 1, vec![sum / mask.len() as f64]);
        Ok(self.push(v, Op::MseMasked { pred, target, mask }))
    }

    /// Reverse pass from a scalar output. Returns one gradient per node
    /// (None where the node does not influence the output).
    pub fn backward(&mut self, output: NodeId) -> Result<Gradients> {
        if output.0 >= self.nodes.len() {
            return Err(Error::NoRecordedForward);
        }
        let out_shape = self.nodes[output.0].value.shape();
        assert_eq!(out_shape, (1, 1), "backward needs a scalar output");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[output.0] = Some(Mat::from_vec(1, 1, vec![1.0]));

        for id in (0..=output.0).rev() {
            let g = match grads[id].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[id].op {
                Op::Leaf => {
                    grads[id] = Some(g);
                    continue;
                }
                Op::MatMul(a, b) => {
                    let (a, b) = (*a, *b);
                    let ga = g.matmul(&self.nodes[b.0].value.transpose());
                    let gb = self.nodes[a.0].value.transpose().matmul(&g);
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::Add(a, b) => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, g.clone());
                    accumulate(&mut grads, b, g);
                }
                Op::AddRow(x, bias) => {
                    let (x, bias) = (*x, *bias);
                    let mut gb = Mat::zeros(1, g.cols);
                    for i in 0..g.rows {
                        for j in 0..g.cols {
                            gb[(0, j)] += g[(i, j)];
                        }
                    }
                    accumulate(&mut grads, x, g);
                    accumulate(&mut grads, bias, gb);
                }
                Op::Scale(x, c) => {
                    let (x, c) = (*x, *c);
                    accumulate(&mut grads, x, g.scale(c));
                }
                Op::Relu(x) => {
                    let x = *x;
                    let xv = &self.nodes[x.0].value;
                    let data = g
                        .data
                        .iter()
                        .zip(xv.data.iter())
                        .map(|(&gg, &v)| if v > 0.0 { gg } else { 0.0 })
                        .collect();
                    accumulate(&mut grads, x, Mat::from_vec(g.rows, g.cols, data));
                }
                Op::LeakyRelu(x, slope) => {
                    let (x, slope) = (*x, *slope);
                    let xv = &self.nodes[x.0].value;
                    let data = g
                        .data
                        .iter()
                        .zip(xv.data.iter())
                        .map(|(&gg, &v)| if v > 0.0 { gg } else { slope * gg })
                        .collect();
                    accumulate(&mut grads, x, Mat::from_vec(g.rows, g.cols, data));
                }
                Op::SpMM(m, x) => {
                    let x = *x;
                    let gx = m.t_matmul(&g);
                    accumulate(&mut grads, x, gx);
                }
                Op::ScalarGain { x, eps, offset } => {
                    let (x, eps, offset) = (*x, *eps, *offset);
                    let e = self.nodes[eps.0].value[(0, 0)];
                    let gx = g.scale(offset + e);
                    let ge: f64 = g
                        .data
                        .iter()
                        .zip(self.nodes[x.0].value.data.iter())
                        .map(|(a, b)| a * b)
                        .sum();
                    accumulate(&mut grads, x, gx);
                    accumulate(&mut grads, eps, Mat::from_vec(1, 1, vec![ge]));
                }
                Op::ConcatCols(a, b) => {
                    let (a, b) = (*a, *b);
                    let ca = self.nodes[a.0].value.cols;
                    let mut ga = Mat::zeros(g.rows, ca);
                    let mut gb = Mat::zeros(g.rows, g.cols - ca);
                    for i in 0..g.rows {
                        ga.row_mut(i).copy_from_slice(&g.row(i)[..ca]);
                        gb.row_mut(i).copy_from_slice(&g.row(i)[ca..]);
                    }
                    accumulate(&mut grads, a, ga);
                    accumulate(&mut grads, b, gb);
                }
                Op::GatherRows(x, idx) => {
                    let x = *x;
                    let xv = &self.nodes[x.0].value;
                    let mut gx = Mat::zeros(xv.rows, xv.cols);
                    for (out_i, &i) in idx.iter().enumerate() {
                        let grow = g.row(out_i);
                        let orow = gx.row_mut(i);
                        for (o, &v) in orow.iter_mut().zip(grow) {
                            *o += v;
                        }
                    }
                    accumulate(&mut grads, x, gx);
                }
                Op::SegmentSoftmax(scores, edges) => {
                    let scores = *scores;
                    let alpha = &self.nodes[id].value;
                    let mut gs = Mat::zeros(alpha.rows, 1);
                    for seg in 0..edges.n_nodes {
                        let (lo, hi) = (edges.offsets[seg], edges.offsets[seg + 1]);
                        let dot: f64 = (lo..hi).map(|e| alpha[(e, 0)] * g[(e, 0)]).sum();
                        for e in lo..hi {
                            gs[(e, 0)] = alpha[(e, 0)] * (g[(e, 0)] - dot);
                        }
                    }
                    accumulate(&mut grads, scores, gs);
                }
                Op::EdgeAggregate { alpha, feats, edges } => {
                    let (alpha, feats) = (*alpha, *feats);
                    let av = &self.nodes[alpha.0].value;
                    let fv = &self.nodes[feats.0].value;
                    let mut ga = Mat::zeros(av.rows, 1);
                    let mut gf = Mat::zeros(fv.rows, fv.cols);
                    for e in 0..edges.n_edges() {
                        let grow = g.row(edges.dst[e]);
                        let frow = fv.row(e);
                        ga[(e, 0)] = grow.iter().zip(frow).map(|(a, b)| a * b).sum();
                        let w = av[(e, 0)];
                        for (o, &v) in gf.row_mut(e).iter_mut().zip(grow) {
                            *o += w * v;
                        }
                    }
                    accumulate(&mut grads, alpha, ga);
                    accumulate(&mut grads, feats, gf);
                }
                Op::MaskMul(x, mask) => {
                    let x = *x;
                    let data = g.data.iter().zip(mask.iter()).map(|(a, m)| a * m).collect();
                    accumulate(&mut grads, x, Mat::from_vec(g.rows, g.cols, data));
                }
                Op::MseMasked { pred, target, mask } => {
                    let pred = *pred;
                    let pv = &self.nodes[pred.0].value;
                    let scale = g[(0, 0)] * 2.0 / mask.len() as f64;
                    let mut gp = Mat::zeros(pv.rows, 1);
                    for &i in mask.iter() {
                        gp[(i, 0)] = scale * (pv[(i, 0)] - target[i]);
                    }
                    accumulate(&mut grads, pred, gp);
                }
            }
        }
        Ok(Gradients { grads })
    }
}

impl Default for Tape {
    fn default() -> Self {
        Tape::new()
    }
}

fn accumulate(grads: &mut [Option<Mat>], id: NodeId, g: Mat) {
    match &mut grads[id.0] {
        Some(existing) => *existing = existing.add(&g),
        slot => *slot = Some(g),
    }
}

#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Mat>>,
}

impl Gradients {
    /// Gradient of the output with respect to a node; zeros if the node
    /// does not influence the output.
    pub fn get(&self, id: NodeId, shape: (usize, usize)) -> Mat {
        match &self.grads[id.0] {
            Some(g) => g.clone(),
            None => Mat::zeros(shape.0, shape.1),
        }
    }
}
