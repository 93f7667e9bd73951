//! Statistical reference models: OLS, a spatial lag model fitted by
//! profile maximum likelihood, and geographically weighted regression
//! with a Gaussian kernel. External per-node predictions can be aligned
//! into the same metric pipeline for comparison tables.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::RegionGraph;
use crate::linalg::{self, Mat, SparseMat};

/// Row-standardized spatial weights from graph adjacency. Rows of nodes
/// with at least one neighbour sum to 1; isolated nodes get zero rows.
#[derive(Debug, Clone)]
pub struct SpatialWeights {
    pub w: SparseMat,
}

impl SpatialWeights {
    pub fn from_graph(graph: &RegionGraph) -> Self {
        let n = graph.node_count();
        let mut w = SparseMat::new(n, n);
        for i in 0..n {
            let deg = graph.degree(i);
            if deg == 0 {
                continue;
            }
            let share = 1.0 / deg as f64;
            for &j in graph.neighbors(i) {
                w.entries[i].push((j, share));
            }
        }
        SpatialWeights { w }
    }

    /// Spatial lag Wy.
    pub fn lag(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.w.rows);
        self.w
            .entries
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * y[j]).sum())
            .collect()
    }

    /// Eigenvalues of W. The row-standardized matrix D^(-1)A is similar
    /// to the symmetric D^(-1/2) A D^(-1/2), so its spectrum is real and
    /// computable with a symmetric solver. Isolated nodes contribute 0.
    pub fn eigenvalues(&self, graph: &RegionGraph) -> Vec<f64> {
        let n = graph.node_count();
        let mut s = Mat::zeros(n, n);
        for i in 0..n {
            for &j in graph.neighbors(i) {
                let di = graph.degree(i) as f64;
                let dj = graph.degree(j) as f64;
                s[(i, j)] = 1.0 / libm::sqrt(di * dj);
            }
        }
        let (evals, _) = linalg::sym_eigen(&s);
        evals
    }
}

/// Ordinary least squares with intercept.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub fitted: Vec<f64>,
    pub r2: f64,
}

pub fn ols_fit(x: &Mat, y: &[f64]) -> Result<OlsFit> {
    let (intercept, coefficients, fitted) = linalg::ols(x, y)?;
    let r2 = linalg::r_squared(y, &fitted);
    Ok(OlsFit {
        intercept,
        coefficients,
        fitted,
        r2,
    })
}

impl OlsFit {
    pub fn predict(&self, x: &Mat) -> Vec<f64> {
        (0..x.rows)
            .map(|i| {
                self.intercept
                    + self
                        .coefficients
                        .iter()
                        .enumerate()
                        .map(|(j, b)| b * x[(i, j)])
                        .sum::<f64>()
            })
            .collect()
    }
}

// ---------------------------------------------------------------------------
// spatial lag model
// ---------------------------------------------------------------------------

/// Spatial lag model y = rho W y + X beta + eps, fitted by profile
/// maximum likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct SlmFit {
    pub rho: f64,
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    /// reduced-form predictions (I - rho W)^(-1) X beta
    pub fitted: Vec<f64>,
    /// squared correlation between fitted and observed y
    pub pseudo_r2: f64,
    pub log_likelihood: f64,
}

/// Concentrated log-likelihood of rho given precomputed eigenvalues of W.
fn concentrated_ll(
    x: &Mat,
    y: &[f64],
    wy: &[f64],
    evals: &[f64],
    rho: f64,
) -> Result<f64> {
    let n = y.len();
    let y_star: Vec<f64> = y.iter().zip(wy).map(|(a, b)| a - rho * b).collect();
    let (_, _, fitted) = linalg::ols(x, &y_star)?;
    let sse: f64 = y_star
        .iter()
        .zip(&fitted)
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let sigma2 = sse / n as f64;
    if !(sigma2 > 0.0) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut log_det = 0.0;
    for &l in evals {
        let t = 1.0 - rho * l;
        if t <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        log_det += libm::log(t);
    }
    let nf = n as f64;
    Ok(-0.5 * nf * (libm::log(2.0 * core::f64::consts::PI) + 1.0)
        - 0.5 * nf * libm::log(sigma2)
        + log_det)
}

/// Profile-ML fit: golden-section search of the concentrated
/// log-likelihood over rho in (1/lambda_min, 1) to an interval of 1e-6,
/// then GLS coefficients at the optimum.
pub fn slm_fit(graph: &RegionGraph, x: &Mat, y: &[f64]) -> Result<SlmFit> {
    let n = graph.node_count();
    assert_eq!(x.rows, n);
    assert_eq!(y.len(), n);
    let weights = SpatialWeights::from_graph(graph);
    let wy = weights.lag(y);
    let evals = weights.eigenvalues(graph);
    let lambda_min = evals.iter().cloned().fold(f64::INFINITY, f64::min);
    let margin = 1e-6;
    let lo = if lambda_min < 0.0 {
        1.0 / lambda_min + margin
    } else {
        -1.0 + margin
    };
    let hi = 1.0 - margin;
    if !(lo < hi) {
        return Err(Error::NonConvergence);
    }

    // golden-section maximization
    let phi = (libm::sqrt(5.0) - 1.0) / 2.0;
    let mut a = lo;
    let mut b = hi;
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let mut fc = concentrated_ll(x, y, &wy, &evals, c)?;
    let mut fd = concentrated_ll(x, y, &wy, &evals, d)?;
    let mut iterations = 0;
    while b - a > 1e-6 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = concentrated_ll(x, y, &wy, &evals, c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = concentrated_ll(x, y, &wy, &evals, d)?;
        }
        iterations += 1;
        if iterations > 200 {
            return Err(Error::NonConvergence);
        }
    }
    let rho = 0.5 * (a + b);
    let log_likelihood = concentrated_ll(x, y, &wy, &evals, rho)?;
    if !log_likelihood.is_finite() {
        return Err(Error::NonConvergence);
    }

    let y_star: Vec<f64> = y.iter().zip(&wy).map(|(a, b)| a - rho * b).collect();
    let (intercept, coefficients, _) = linalg::ols(x, &y_star)?;

    // reduced form: (I - rho W) yhat = X beta
    let mut system = Mat::identity(n);
    for (i, row) in weights.w.entries.iter().enumerate() {
        for &(j, v) in row {
            system[(i, j)] -= rho * v;
        }
    }
    let xb: Vec<f64> = (0..n)
        .map(|i| {
            intercept
                + coefficients
                    .iter()
                    .enumerate()
                    .map(|(j, b)| b * x[(i, j)])
                    .sum::<f64>()
        })
        .collect();
    let fitted = linalg::solve(&system, &xb)?;

    let r = linalg::pearson(&fitted, y);
    Ok(SlmFit {
        rho,
        intercept,
        coefficients,
        fitted,
        pseudo_r2: r * r,
        log_likelihood,
    })
}

/// Concentrated log-likelihood exposed for diagnostics and the argmax
/// property test.
pub fn slm_profile_ll(graph: &RegionGraph, x: &Mat, y: &[f64], rho: f64) -> Result<f64> {
    let weights = SpatialWeights::from_graph(graph);
    let wy = weights.lag(y);
    let evals = weights.eigenvalues(graph);
    concentrated_ll(x, y, &wy, &evals, rho)
}

/// Search interval of the profile likelihood, (1/lambda_min, 1).
pub fn slm_rho_bounds(graph: &RegionGraph) -> (f64, f64) {
    let weights = SpatialWeights::from_graph(graph);
    let evals = weights.eigenvalues(graph);
    let lambda_min = evals.iter().cloned().fold(f64::INFINITY, f64::min);
    let lo = if lambda_min < 0.0 { 1.0 / lambda_min } else { -1.0 };
    (lo, 1.0)
}

// ---------------------------------------------------------------------------
// geographically weighted regression
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct GwrConfig {
    /// candidate bandwidths; a single entry fixes the bandwidth
    pub bandwidths: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GwrFit {
    pub bandwidth: f64,
    /// per-region [intercept, slopes...]
    pub coefficients: Vec<Vec<f64>>,
    pub predictions: Vec<f64>,
    pub r2: f64,
    /// regions whose local system was rank-deficient (global OLS used)
    pub fallback_regions: Vec<usize>,
    pub warnings: Vec<String>,
}

fn centroid_distances(graph: &RegionGraph) -> Mat {
    let n = graph.node_count();
    let mut d = Mat::zeros(n, n);
    for i in 0..n {
        let (xi, yi) = graph.regions[i].centroid;
        for j in i + 1..n {
            let (xj, yj) = graph.regions[j].centroid;
            let dx = xi - xj;
            let dy = yi - yj;
            let dist = libm::sqrt(dx * dx + dy * dy);
            d[(i, j)] = dist;
            d[(j, i)] = dist;
        }
    }
    d
}

/// Weighted least squares with intercept; weights per row.
fn wls(x: &Mat, y: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let n = x.rows;
    let f = x.cols;
    let p = f + 1;
    let mut xtwx = Mat::zeros(p, p);
    let mut xtwy = vec![0.0; p];
    for i in 0..n {
        let w = weights[i];
        if w == 0.0 {
            continue;
        }
        let mut row = Vec::with_capacity(p);
        row.push(1.0);
        for j in 0..f {
            row.push(x[(i, j)]);
        }
        for a in 0..p {
            xtwy[a] += w * row[a] * y[i];
            for b in a..p {
                xtwx[(a, b)] += w * row[a] * row[b];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            xtwx[(a, b)] = xtwx[(b, a)];
        }
    }
    linalg::solve(&xtwx, &xtwy)
}

fn gaussian_weights(dist_row: &[f64], bw: f64) -> Vec<f64> {
    dist_row
        .iter()
        .map(|&d| libm::exp(-d * d / (2.0 * bw * bw)))
        .collect()
}

fn predict_row(coef: &[f64], x: &Mat, i: usize) -> f64 {
    coef[0]
        + coef[1..]
            .iter()
            .enumerate()
            .map(|(j, b)| b * x[(i, j)])
            .sum::<f64>()
}

/// Leave-one-out squared prediction error for one bandwidth.
fn loo_error(x: &Mat, y: &[f64], dist: &Mat, bw: f64) -> f64 {
    let n = x.rows;
    let mut err = 0.0;
    for i in 0..n {
        let mut w = gaussian_weights(dist.row(i), bw);
        w[i] = 0.0;
        match wls(x, y, &w) {
            Ok(coef) => {
                let r = y[i] - predict_row(&coef, x, i);
                err += r * r;
            }
            Err(_) => return f64::INFINITY,
        }
    }
    err
}

/// Gaussian-kernel GWR: a local weighted regression per region, with the
/// bandwidth chosen from the candidates by leave-one-out error. Locally
/// rank-deficient regions fall back to global OLS coefficients.
pub fn gwr_fit_predict(
    graph: &RegionGraph,
    x: &Mat,
    y: &[f64],
    config: &GwrConfig,
) -> Result<GwrFit> {
    assert!(!config.bandwidths.is_empty(), "need at least one bandwidth");
    assert!(config.bandwidths.iter().all(|&b| b > 0.0));
    let n = graph.node_count();
    assert_eq!(x.rows, n);
    assert_eq!(y.len(), n);
    let dist = centroid_distances(graph);

    let bandwidth = if config.bandwidths.len() == 1 {
        config.bandwidths[0]
    } else {
        let mut best = config.bandwidths[0];
        let mut best_err = f64::INFINITY;
        for &bw in &config.bandwidths {
            let err = loo_error(x, y, &dist, bw);
            if err < best_err {
                best_err = err;
                best = bw;
            }
        }
        best
    };

    let global = ols_fit(x, y)?;
    let mut coefficients = Vec::with_capacity(n);
    let mut predictions = Vec::with_capacity(n);
    let mut fallback_regions = Vec::new();
    let mut warnings = Vec::new();
    for i in 0..n {
        let w = gaussian_weights(dist.row(i), bandwidth);
        let coef = match wls(x, y, &w) {
            Ok(c) => c,
            Err(Error::RankDeficient) => {
                fallback_regions.push(i);
                warnings.push(format!(
                    "region {}: local fit rank-deficient; global coefficients used",
                    graph.regions[i].id
                ));
                let mut c = vec![global.intercept];
                c.extend_from_slice(&global.coefficients);
                c
            }
            Err(e) => return Err(e),
        };
        predictions.push(predict_row(&coef, x, i));
        coefficients.push(coef);
    }
    let r2 = linalg::r_squared(y, &predictions);
    Ok(GwrFit {
        bandwidth,
        coefficients,
        predictions,
        r2,
        fallback_regions,
        warnings,
    })
}

/// Align externally produced predictions (keyed by region id) to graph
/// node order for the shared metric pipeline.
pub fn align_external_predictions(
    graph: &RegionGraph,
    rows: &BTreeMap<String, f64>,
) -> Result<Vec<f64>> {
    graph
        .regions
        .iter()
        .map(|r| {
            rows.get(&r.id).copied().ok_or(Error::MissingRegion {
                id: r.id.clone(),
            })
        })
        .collect()
}
