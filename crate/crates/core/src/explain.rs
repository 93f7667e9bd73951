//! Post-hoc interpretation of trained models.
//!
//! PCA over penultimate-layer embeddings, Pearson correlation of the
//! retained components against the input features, a linear regression of
//! the outcome on the component scores, and residual diagnostics. Outputs
//! are plot-ready tables; rendering is left to downstream tooling.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::encodings::pca;
use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::linalg::{self, Mat};
use crate::nn::{self, GraphOps, TrainedModel};

/// Penultimate-layer activations in eval mode; hidden2-wide, aligned to
/// graph node order, bitwise deterministic across repeated extraction.
pub fn extract_embeddings(
    model: &TrainedModel,
    graph: &RegionGraph,
    x: &Mat,
) -> Result<Mat> {
    if model.params.is_empty() {
        return Err(Error::UntrainedModel);
    }
    let (_, embedding) = nn::forward(model, &GraphOps::new(graph), x);
    Ok(embedding)
}

/// PCA of embeddings with components retained up to a cumulative
/// explained-variance target.
#[derive(Debug, Clone, PartialEq)]
pub struct PcaSelection {
    /// all component ratios, descending
    pub ratios: Vec<f64>,
    /// smallest count whose cumulative ratio reaches the target
    pub n_selected: usize,
    /// N x n_selected
    pub scores: Mat,
    /// dim x n_selected
    pub loadings: Mat,
    pub warnings: Vec<String>,
}

pub fn pca_embeddings(embeddings: &Mat, variance_target: f64) -> Result<PcaSelection> {
    let first = embeddings.row(0).to_vec();
    if (0..embeddings.rows).all(|i| embeddings.row(i) == first.as_slice()) {
        return Err(Error::DegenerateData);
    }
    let full = pca(embeddings, embeddings.cols)?;
    let mut cumulative = 0.0;
    let mut n_selected = full.ratios.len();
    let mut reached = false;
    for (k, &r) in full.ratios.iter().enumerate() {
        cumulative += r;
        if cumulative >= variance_target {
            n_selected = k + 1;
            reached = true;
            break;
        }
    }
    let mut warnings = Vec::new();
    if !reached {
        warnings.push(format!(
            "cumulative variance {cumulative:.4} below target {variance_target}; all components kept"
        ));
    }
    let mut scores = Mat::zeros(embeddings.rows, n_selected);
    let mut loadings = Mat::zeros(embeddings.cols, n_selected);
    for k in 0..n_selected {
        for i in 0..embeddings.rows {
            scores[(i, k)] = full.scores[(i, k)];
        }
        for d in 0..embeddings.cols {
            loadings[(d, k)] = full.loadings[(d, k)];
        }
    }
    Ok(PcaSelection {
        ratios: full.ratios,
        n_selected,
        scores,
        loadings,
        warnings,
    })
}

/// Pearson correlations between PC scores and input features, with a
/// ranking by |r| per component. Constant features correlate 0 with a
/// warning.
#[derive(Debug, Clone, PartialEq)]
pub struct PcCorrelations {
    /// n_selected x F
    pub matrix: Mat,
    /// per component: (feature index, r) sorted by |r| descending,
    /// ties to the smaller feature index
    pub ranked: Vec<Vec<(usize, f64)>>,
    pub warnings: Vec<String>,
}

pub fn pc_feature_correlations(scores: &Mat, features: &Mat) -> PcCorrelations {
    assert_eq!(scores.rows, features.rows);
    let k = scores.cols;
    let f = features.cols;
    let mut matrix = Mat::zeros(k, f);
    let mut warnings = Vec::new();
    for j in 0..f {
        let col = features.col(j);
        let constant = col.iter().all(|&v| v == col[0]);
        if constant {
            warnings.push(format!("feature column {j} is constant; r set to 0"));
            continue;
        }
        for c in 0..k {
            matrix[(c, j)] = linalg::pearson(&scores.col(c), &col);
        }
    }
    let ranked = (0..k)
        .map(|c| {
            let mut row: Vec<(usize, f64)> = (0..f).map(|j| (j, matrix[(c, j)])).collect();
            row.sort_by(|a, b| {
                libm::fabs(b.1)
                    .partial_cmp(&libm::fabs(a.1))
                    .unwrap()
                    .then(a.0.cmp(&b.0))
            });
            row
        })
        .collect();
    PcCorrelations {
        matrix,
        ranked,
        warnings,
    }
}

/// OLS of the outcome on the selected PC scores.
#[derive(Debug, Clone, PartialEq)]
pub struct PcRegression {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub r2: f64,
}

pub fn pc_outcome_regression(scores: &Mat, y: &[f64]) -> Result<PcRegression> {
    let (intercept, coefficients, fitted) = linalg::ols(scores, y)?;
    Ok(PcRegression {
        intercept,
        coefficients,
        r2: linalg::r_squared(y, &fitted),
    })
}

/// Residual summary over masked nodes: mean, population standard
/// deviation, and a 30-bin histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualStats {
    pub mean: f64,
    pub std: f64,
    /// 30 equal-width bin counts over [min, max] of the residuals
    pub histogram: Vec<usize>,
    pub bin_lo: f64,
    pub bin_hi: f64,
    /// residual per node; None where masked out
    pub residuals: Vec<Option<f64>>,
}

pub const HISTOGRAM_BINS: usize = 30;

pub fn residual_diagnostics(yhat: &[f64], y: &[f64], mask: &[bool]) -> Result<ResidualStats> {
    assert_eq!(yhat.len(), y.len());
    assert_eq!(yhat.len(), mask.len());
    let masked: Vec<f64> = mask
        .iter()
        .enumerate()
        .filter_map(|(i, &m)| m.then(|| y[i] - yhat[i]))
        .collect();
    if masked.is_empty() {
        return Err(Error::EmptyMask);
    }
    let n = masked.len() as f64;
    let mean = masked.iter().sum::<f64>() / n;
    let var = masked.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / n;
    let std = libm::sqrt(var);

    let lo = masked.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = masked.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut histogram = vec![0usize; HISTOGRAM_BINS];
    let width = (hi - lo) / HISTOGRAM_BINS as f64;
    for &r in &masked {
        let bin = if width > 0.0 {
            (((r - lo) / width) as usize).min(HISTOGRAM_BINS - 1)
        } else {
            0
        };
        histogram[bin] += 1;
    }
    let residuals = mask
        .iter()
        .enumerate()
        .map(|(i, &m)| m.then(|| y[i] - yhat[i]))
        .collect();
    Ok(ResidualStats {
        mean,
        std,
        histogram,
        bin_lo: lo,
        bin_hi: hi,
        residuals,
    })
}
