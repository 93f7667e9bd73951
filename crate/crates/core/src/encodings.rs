//! Positional and locational node encodings.
//!
//! Four encoding kinds: spectral eigenvectors of the symmetric normalized
//! Laplacian, a one-pass Laplacian feature smoothing, random-walk return
//! probabilities, and externally supplied location embeddings (with a
//! deterministic sinusoidal fallback when no embedding file exists). A PCA
//! reduction and a concatenating assembler finish the node feature vectors.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::graph::RegionGraph;
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodingKind {
    LaplacianSpectral,
    LaplacianSmooth,
    RandomWalk,
    Location,
}

impl EncodingKind {
    pub fn label(&self) -> &'static str {
        match self {
            EncodingKind::LaplacianSpectral => "laplacian_spectral",
            EncodingKind::LaplacianSmooth => "laplacian_smooth",
            EncodingKind::RandomWalk => "random_walk",
            EncodingKind::Location => "location",
        }
    }
}

/// N x dim matrix of per-node encoding vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeEncoding {
    pub kind: EncodingKind,
    pub dim: usize,
    pub values: Mat,
}

/// Flip each column so its largest-magnitude entry is positive; ties break
/// on the first occurrence. Keeps eigenvector and PC outputs stable.
fn sign_fix_columns(m: &mut Mat) {
    for j in 0..m.cols {
        let mut best = 0.0;
        let mut best_val = 0.0;
        for i in 0..m.rows {
            let a = libm::fabs(m[(i, j)]);
            if a > best {
                best = a;
                best_val = m[(i, j)];
            }
        }
        if best_val < 0.0 {
            for i in 0..m.rows {
                m[(i, j)] = -m[(i, j)];
            }
        }
    }
}

/// Eigenvectors of the symmetric normalized Laplacian for the `d` smallest
/// nontrivial eigenvalues (eigenvalues below 1e-10 are skipped). Isolated
/// nodes receive zero rows.
pub fn laplacian_spectral_pe(graph: &RegionGraph, d: usize) -> Result<NodeEncoding> {
    let n = graph.node_count();
    let connected: Vec<usize> = (0..n).filter(|&i| graph.degree(i) > 0).collect();
    let m = connected.len();
    let mut lap = Mat::zeros(m, m);
    let inv_sqrt_deg: Vec<f64> = connected
        .iter()
        .map(|&i| 1.0 / libm::sqrt(graph.degree(i) as f64))
        .collect();
    let sub_index: BTreeMap<usize, usize> = connected
        .iter()
        .enumerate()
        .map(|(s, &f)| (f, s))
        .collect();
    for (si, &fi) in connected.iter().enumerate() {
        lap[(si, si)] = 1.0;
        for &fj in graph.neighbors(fi) {
            let sj = sub_index[&fj];
            lap[(si, sj)] = -inv_sqrt_deg[si] * inv_sqrt_deg[sj];
        }
    }
    let (evals, evecs) = linalg::sym_eigen(&lap);
    let nontrivial: Vec<usize> = (0..m).filter(|&k| evals[k] >= 1e-10).collect();
    if nontrivial.len() < d {
        return Err(Error::DimTooLarge {
            requested: d,
            available: nontrivial.len(),
        });
    }
    let mut values = Mat::zeros(n, d);
    for (out_k, &k) in nontrivial.iter().take(d).enumerate() {
        for (si, &fi) in connected.iter().enumerate() {
            values[(fi, out_k)] = evecs[(si, k)];
        }
    }
    sign_fix_columns(&mut values);
    Ok(NodeEncoding {
        kind: EncodingKind::LaplacianSpectral,
        dim: d,
        values,
    })
}

/// Eigenvalues paired with the columns of [`laplacian_spectral_pe`], for
/// diagnostics and tests.
pub fn laplacian_nontrivial_eigenvalues(graph: &RegionGraph, d: usize) -> Result<Vec<f64>> {
    let n = graph.node_count();
    let connected: Vec<usize> = (0..n).filter(|&i| graph.degree(i) > 0).collect();
    let m = connected.len();
    let mut lap = Mat::zeros(m, m);
    let sub_index: BTreeMap<usize, usize> = connected
        .iter()
        .enumerate()
        .map(|(s, &f)| (f, s))
        .collect();
    for (si, &fi) in connected.iter().enumerate() {
        lap[(si, si)] = 1.0;
        for &fj in graph.neighbors(fi) {
            let sj = sub_index[&fj];
            lap[(si, sj)] =
                -1.0 / libm::sqrt((graph.degree(fi) * graph.degree(fj)) as f64);
        }
    }
    let (evals, _) = linalg::sym_eigen(&lap);
    let nontrivial: Vec<f64> = evals.into_iter().filter(|&v| v >= 1e-10).collect();
    if nontrivial.len() < d {
        return Err(Error::DimTooLarge {
            requested: d,
            available: nontrivial.len(),
        });
    }
    Ok(nontrivial.into_iter().take(d).collect())
}

/// One-pass neighbourhood smoothing: h_i = (A x)_i + lambda * deg(i) * x_i.
/// Isolated nodes come out as zero rows.
pub fn laplacian_smooth(
    graph: &RegionGraph,
    features: &FeatureTable,
    lambda: f64,
) -> Result<NodeEncoding> {
    let n = graph.node_count();
    if features.n_rows() != n {
        return Err(Error::ShapeMismatch {
            expected: format!("{n} rows"),
            got: format!("{} rows", features.n_rows()),
        });
    }
    let f = features.n_cols();
    let mut values = Mat::zeros(n, f);
    for i in 0..n {
        for &j in graph.neighbors(i) {
            for c in 0..f {
                values[(i, c)] += features.values[(j, c)] + lambda * features.values[(i, c)];
            }
        }
    }
    Ok(NodeEncoding {
        kind: EncodingKind::LaplacianSmooth,
        dim: f,
        values,
    })
}

/// Random-walk return probabilities: column t holds [(D^-1 A)^t]_ii.
/// Isolated nodes get zeros.
pub fn random_walk_pe(graph: &RegionGraph, steps: usize) -> NodeEncoding {
    assert!(steps >= 1);
    let n = graph.node_count();
    let mut values = Mat::zeros(n, steps);
    for i in 0..n {
        if graph.degree(i) == 0 {
            continue;
        }
        // propagate e_i through the transition operator step by step
        let mut prob = vec![0.0; n];
        prob[i] = 1.0;
        for t in 0..steps {
            let mut next = vec![0.0; n];
            for (u, &p) in prob.iter().enumerate() {
                if p == 0.0 {
                    continue;
                }
                let deg = graph.degree(u);
                if deg == 0 {
                    continue;
                }
                let w = p / deg as f64;
                for &v in graph.neighbors(u) {
                    next[v] += w;
                }
            }
            prob = next;
            values[(i, t)] = prob[i];
        }
    }
    NodeEncoding {
        kind: EncodingKind::RandomWalk,
        dim: steps,
        values,
    }
}

/// Align externally produced embedding rows (id -> vector) to graph order.
pub fn align_location_embeddings(
    graph: &RegionGraph,
    rows: &BTreeMap<String, Vec<f64>>,
) -> Result<NodeEncoding> {
    let n = graph.node_count();
    let mut dim = None;
    let mut values = Vec::new();
    for (i, region) in graph.regions.iter().enumerate() {
        let row = rows.get(&region.id).ok_or(Error::MissingRegion {
            id: region.id.clone(),
        })?;
        match dim {
            None => dim = Some(row.len()),
            Some(d) if d != row.len() => return Err(Error::RaggedRows { row: i }),
            _ => {}
        }
        values.push(row.clone());
    }
    let dim = dim.unwrap_or(0);
    Ok(NodeEncoding {
        kind: EncodingKind::Location,
        dim,
        values: if n == 0 {
            Mat::zeros(0, dim)
        } else {
            Mat::from_rows(&values)
        },
    })
}

/// Deterministic sinusoidal stand-in for a pretrained location embedding.
///
/// Centroids are min-max normalized to [0,1]; octave f contributes
/// sin/cos(2^f * pi * x) and sin/cos(2^f * pi * y), giving 4*frequencies
/// columns.
pub fn fallback_coordinate_encoding(graph: &RegionGraph, frequencies: usize) -> NodeEncoding {
    assert!(frequencies >= 1);
    let n = graph.node_count();
    let xs: Vec<f64> = graph.regions.iter().map(|r| r.centroid.0).collect();
    let ys: Vec<f64> = graph.regions.iter().map(|r| r.centroid.1).collect();
    let norm = |vals: &[f64]| -> Vec<f64> {
        let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if hi > lo {
            vals.iter().map(|&v| (v - lo) / (hi - lo)).collect()
        } else {
            vec![0.0; vals.len()]
        }
    };
    let nx = norm(&xs);
    let ny = norm(&ys);
    let dim = 4 * frequencies;
    let mut values = Mat::zeros(n, dim);
    for i in 0..n {
        for f in 0..frequencies {
            let scale = libm::pow(2.0, f as f64) * core::f64::consts::PI;
            values[(i, 4 * f)] = libm::sin(scale * nx[i]);
            values[(i, 4 * f + 1)] = libm::cos(scale * nx[i]);
            values[(i, 4 * f + 2)] = libm::sin(scale * ny[i]);
            values[(i, 4 * f + 3)] = libm::cos(scale * ny[i]);
        }
    }
    NodeEncoding {
        kind: EncodingKind::Location,
        dim,
        values,
    }
}

/// PCA scores, loadings and explained-variance ratios of a column-centered
/// matrix, components in descending variance with a deterministic sign fix.
#[derive(Debug, Clone)]
pub struct Pca {
    /// N x k projected coordinates.
    pub scores: Mat,
    /// dim x k component loadings (orthonormal columns).
    pub loadings: Mat,
    /// Explained-variance ratio per retained component, descending.
    pub ratios: Vec<f64>,
}

/// PCA via eigendecomposition of the sample covariance.
pub fn pca(data: &Mat, k: usize) -> Result<Pca> {
    let n = data.rows;
    let d = data.cols;
    if k > d {
        return Err(Error::KTooLarge { k, n: d });
    }
    if n < 2 {
        return Err(Error::TooFewRows { rows: n });
    }
    let mut centered = data.clone();
    for j in 0..d {
        let mean: f64 = (0..n).map(|i| data[(i, j)]).sum::<f64>() / n as f64;
        for i in 0..n {
            centered[(i, j)] -= mean;
        }
    }
    let cov = centered.transpose().matmul(&centered).scale(1.0 / (n as f64 - 1.0));
    let total: f64 = (0..d).map(|j| cov[(j, j)]).sum();
    let (evals, evecs) = linalg::sym_eigen(&cov);
    // descending variance
    let mut loadings = Mat::zeros(d, k);
    let mut ratios = Vec::with_capacity(k);
    for out_j in 0..k {
        let src = d - 1 - out_j;
        for i in 0..d {
            loadings[(i, out_j)] = evecs[(i, src)];
        }
        let ev = evals[src].max(0.0);
        ratios.push(if total > 0.0 { ev / total } else { 0.0 });
    }
    sign_fix_columns(&mut loadings);
    let scores = centered.matmul(&loadings);
    Ok(Pca {
        scores,
        loadings,
        ratios,
    })
}

/// Reduce an encoding to its top-k principal components.
pub fn pca_reduce(encoding: &NodeEncoding, k: usize) -> Result<NodeEncoding> {
    let p = pca(&encoding.values, k)?;
    Ok(NodeEncoding {
        kind: encoding.kind,
        dim: k,
        values: p.scores,
    })
}

/// Column span of one input block in an assembled feature matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnSpan {
    pub label: String,
    pub start: usize,
    pub len: usize,
}

/// Concatenate base features with encodings in declared order, returning
/// the matrix and a provenance map for explainability.
pub fn assemble_features(
    base: &FeatureTable,
    encodings: &[NodeEncoding],
) -> Result<(Mat, Vec<ColumnSpan>)> {
    let n = base.n_rows();
    for e in encodings {
        if e.values.rows != n {
            return Err(Error::ShapeMismatch {
                expected: format!("{n} rows"),
                got: format!("{} rows", e.values.rows),
            });
        }
    }
    let mut out = base.values.clone();
    let mut spans = vec![ColumnSpan {
        label: "base".to_string(),
        start: 0,
        len: base.n_cols(),
    }];
    for e in encodings {
        spans.push(ColumnSpan {
            label: e.kind.label().to_string(),
            start: out.cols,
            len: e.dim,
        });
        out = out.hcat(&e.values);
    }
    Ok((out, spans))
}

/// Column names for an assembled matrix: base column names followed by
/// `<kind>_<t>` per encoding column.
pub fn assembled_column_names(base: &FeatureTable, encodings: &[NodeEncoding]) -> Vec<String> {
    let mut names: Vec<String> = base.columns.iter().map(|c| c.name.clone()).collect();
    for e in encodings {
        for t in 0..e.dim {
            names.push(format!("{}_{}", e.kind.label(), t + 1));
        }
    }
    names
}
