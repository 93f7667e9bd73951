//! Deterministic synthetic geodata for desk-scale testing.
//!
//! A unit-square grid of regions with quadrant group labels, Gaussian
//! features optionally smoothed for spatial autocorrelation, engineered
//! near-collinear columns, and an outcome with a planted linear signal,
//! spatial lag, optional nonlinearity, and noise. The planted parameters
//! are returned so recovery tests can check estimates against truth.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::baselines::SpatialWeights;
use crate::error::Result;
use crate::features::{FeatureTable, TargetVector};
use crate::graph::{build_contiguity_graph, unit_square, Region, RegionGraph};
use crate::linalg::Mat;
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub n_features: usize,
    /// neighbour-averaging passes applied to every feature column
    pub smoothing_passes: usize,
    /// (source column, noise std): appended near-duplicates of a column
    pub collinear_pairs: Vec<(usize, f64)>,
    /// linear coefficients over the leading base feature columns
    pub beta: Vec<f64>,
    /// spatial-lag strength applied to the noiseless signal
    pub rho: f64,
    /// add a squared term of feature 0 to the signal
    pub nonlinear: bool,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            grid_rows: 20,
            grid_cols: 20,
            n_features: 8,
            smoothing_passes: 5,
            collinear_pairs: Vec::new(),
            beta: vec![1.0, -0.5, 0.25],
            rho: 0.4,
            nonlinear: false,
            noise_std: 0.5,
            seed: 0,
        }
    }
}

/// Planted parameters, persisted alongside generated data so recovery
/// tests can compare estimates against truth.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub beta: Vec<f64>,
    pub rho: f64,
    pub nonlinear: bool,
    pub noise_std: f64,
    /// (source column index, appended column index)
    pub collinear_map: Vec<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub graph: RegionGraph,
    pub features: FeatureTable,
    pub target: TargetVector,
    pub truth: GroundTruth,
}

fn quadrant(r: usize, c: usize, rows: usize, cols: usize) -> &'static str {
    match (r * 2 >= rows, c * 2 >= cols) {
        (false, false) => "northwest",
        (false, true) => "northeast",
        (true, false) => "southwest",
        (true, true) => "southeast",
    }
}

/// One neighbour-averaging pass: x_i <- (x_i + sum of neighbour x_j) / (1 + deg_i).
fn smooth_column(graph: &RegionGraph, col: &[f64]) -> Vec<f64> {
    (0..col.len())
        .map(|i| {
            let sum: f64 = graph.neighbors(i).iter().map(|&j| col[j]).sum();
            (col[i] + sum) / (1.0 + graph.degree(i) as f64)
        })
        .collect()
}

pub fn generate(config: &SynthConfig) -> Result<SynthData> {
    assert!(config.grid_rows * config.grid_cols >= 10, "grid too small");
    assert!(config.rho > -1.0 && config.rho < 1.0, "rho out of range");
    assert!(config.beta.len() <= config.n_features);
    for &(src, _) in &config.collinear_pairs {
        assert!(src < config.n_features, "collinear source out of range");
    }
    let rows = config.grid_rows;
    let cols = config.grid_cols;
    let n = rows * cols;
    let mut rng = Rng::seed_from_u64(config.seed);

    let regions: Vec<Region> = (0..n)
        .map(|i| {
            let r = i / cols;
            let c = i % cols;
            Region {
                id: format!("r{r:03}c{c:03}"),
                centroid: (c as f64 + 0.5, r as f64 + 0.5),
                boundary: Some(unit_square(c as f64, r as f64)),
                group: Some(quadrant(r, c, rows, cols).into()),
            }
        })
        .collect();
    let graph = build_contiguity_graph(regions)?;

    // base features: iid normals smoothed toward spatial autocorrelation
    let mut base = Mat::zeros(n, config.n_features);
    for v in base.data.iter_mut() {
        *v = rng.normal();
    }
    for _ in 0..config.smoothing_passes {
        for j in 0..config.n_features {
            let smoothed = smooth_column(&graph, &base.col(j));
            for i in 0..n {
                base[(i, j)] = smoothed[i];
            }
        }
    }

    // near-collinear columns appended after the base block
    let mut values = base.clone();
    let mut names: Vec<String> = (0..config.n_features).map(|j| format!("f{j}")).collect();
    let mut collinear_map = Vec::new();
    for (k, &(src, std)) in config.collinear_pairs.iter().enumerate() {
        let col: Vec<f64> = (0..n).map(|i| base[(i, src)] + std * rng.normal()).collect();
        values = values.hcat(&Mat::from_vec(n, 1, col));
        collinear_map.push((src, names.len()));
        names.push(format!("f{src}_dup{k}"));
    }

    // outcome: linear signal, optional nonlinearity, one lag application
    // of the row-standardized weights to the noiseless signal, then noise
    let signal: Vec<f64> = (0..n)
        .map(|i| {
            let mut s: f64 = config
                .beta
                .iter()
                .enumerate()
                .map(|(j, b)| b * base[(i, j)])
                .sum();
            if config.nonlinear {
                s += base[(i, 0)] * base[(i, 0)];
            }
            s
        })
        .collect();
    let lagged = SpatialWeights::from_graph(&graph).lag(&signal);
    let y: Vec<Option<f64>> = (0..n)
        .map(|i| Some(signal[i] + config.rho * lagged[i] + config.noise_std * rng.normal()))
        .collect();

    let region_ids: Vec<String> = graph.regions.iter().map(|r| r.id.clone()).collect();
    let features = FeatureTable::from_mat(region_ids, names, values);
    let target = TargetVector::new("outcome", y);
    Ok(SynthData {
        graph,
        features,
        target,
        truth: GroundTruth {
            beta: config.beta.clone(),
            rho: config.rho,
            nonlinear: config.nonlinear,
            noise_std: config.noise_std,
            collinear_map,
        },
    })
}
