//! Per-region feature tables and multicollinearity-aware selection.
//!
//! Ingested features go through correlation screening, iterative VIF-based
//! removal with a protected set of fixed control columns, and z-score
//! standardization. Missing data is handled by row masking, never
//! imputation.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, PartialEq)]
pub struct Column {
    pub name: String,
    /// Fixed control columns are never removed by VIF selection.
    pub fixed: bool,
}

/// N x F feature matrix aligned to the graph's region order.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub region_ids: Vec<String>,
    pub columns: Vec<Column>,
    pub values: Mat,
    pub standardized: bool,
    /// Recorded at standardization time for the inverse transform.
    pub column_means: Vec<f64>,
    pub column_stds: Vec<f64>,
    /// True where the row had a finite value in every column.
    pub row_mask: Vec<bool>,
    pub warnings: Vec<String>,
}

/// Per-region outcome with an observed/missing mask.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetVector {
    pub outcome_name: String,
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl TargetVector {
    pub fn new(outcome_name: impl Into<String>, cells: Vec<Option<f64>>) -> Self {
        let mask: Vec<bool> = cells.iter().map(|c| matches!(c, Some(v) if v.is_finite())).collect();
        let values: Vec<f64> = cells.into_iter().map(|c| c.unwrap_or(0.0)).collect();
        TargetVector {
            outcome_name: outcome_name.into(),
            values,
            mask,
        }
    }

    pub fn observed_indices(&self) -> Vec<usize> {
        self.mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }
}

/// One removal step of the VIF iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct VifRemoval {
    pub iteration: usize,
    pub column: String,
    pub vif: f64,
}

/// Outcome of [`vif_select`].
#[derive(Debug, Clone, PartialEq)]
pub struct VifSelection {
    /// Retained column indices into the original table, in header order.
    pub retained: Vec<usize>,
    pub removals: Vec<VifRemoval>,
    /// Fixed columns whose VIF reached the fixed threshold: diagnostic only.
    pub fixed_violations: Vec<(String, f64)>,
}

impl FeatureTable {
    /// Assemble a table from parsed cells. Rows containing any missing or
    /// non-finite value are masked out with a warning. Every declared fixed
    /// name must appear among the column names.
    pub fn new(
        region_ids: Vec<String>,
        column_names: Vec<String>,
        fixed_names: &[String],
        cells: Vec<Vec<Option<f64>>>,
    ) -> Result<Self> {
        for fixed in fixed_names {
            if !column_names.contains(fixed) {
                return Err(Error::MissingColumn {
                    column: fixed.clone(),
                });
            }
        }
        let n = region_ids.len();
        let f = column_names.len();
        assert_eq!(cells.len(), n);
        let mut values = Mat::zeros(n, f);
        let mut row_mask = vec![true; n];
        let mut warnings = Vec::new();
        for (i, row) in cells.iter().enumerate() {
            assert_eq!(row.len(), f, "ragged feature row");
            for (j, cell) in row.iter().enumerate() {
                match cell {
                    Some(v) if v.is_finite() => values[(i, j)] = *v,
                    _ => {
                        if row_mask[i] {
                            warnings.push(format!(
                                "region {} masked: missing value in column {}",
                                region_ids[i], column_names[j]
                            ));
                        }
                        row_mask[i] = false;
                    }
                }
            }
        }
        let columns = column_names
            .into_iter()
            .map(|name| {
                let fixed = fixed_names.contains(&name);
                Column { name, fixed }
            })
            .collect();
        Ok(FeatureTable {
            region_ids,
            columns,
            values,
            standardized: false,
            column_means: Vec::new(),
            column_stds: Vec::new(),
            row_mask,
            warnings,
        })
    }

    /// Convenience constructor for fully observed data.
    pub fn from_mat(region_ids: Vec<String>, column_names: Vec<String>, values: Mat) -> Self {
        let n = region_ids.len();
        assert_eq!(values.rows, n);
        FeatureTable {
            region_ids,
            columns: column_names
                .into_iter()
                .map(|name| Column { name, fixed: false })
                .collect(),
            values,
            standardized: false,
            column_means: Vec::new(),
            column_stds: Vec::new(),
            row_mask: vec![true; n],
            warnings: Vec::new(),
        }
    }

    pub fn n_rows(&self) -> usize {
        self.values.rows
    }

    pub fn n_cols(&self) -> usize {
        self.values.cols
    }

    pub fn mark_fixed(&mut self, name: &str) -> Result<()> {
        match self.columns.iter_mut().find(|c| c.name == name) {
            Some(c) => {
                c.fixed = true;
                Ok(())
            }
            None => Err(Error::MissingColumn {
                column: name.to_string(),
            }),
        }
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Indices of rows with complete data.
    pub fn masked_rows(&self) -> Vec<usize> {
        self.row_mask
            .iter()
            .enumerate()
            .filter_map(|(i, &m)| m.then_some(i))
            .collect()
    }

    fn masked_column(&self, j: usize, rows: &[usize]) -> Vec<f64> {
        rows.iter().map(|&i| self.values[(i, j)]).collect()
    }

    /// Keep only the listed columns (indices in ascending order).
    pub fn select_columns(&self, keep: &[usize]) -> FeatureTable {
        let mut values = Mat::zeros(self.n_rows(), keep.len());
        for i in 0..self.n_rows() {
            for (out_j, &j) in keep.iter().enumerate() {
                values[(i, out_j)] = self.values[(i, j)];
            }
        }
        FeatureTable {
            region_ids: self.region_ids.clone(),
            columns: keep.iter().map(|&j| self.columns[j].clone()).collect(),
            values,
            standardized: self.standardized,
            column_means: if self.column_means.is_empty() {
                Vec::new()
            } else {
                keep.iter().map(|&j| self.column_means[j]).collect()
            },
            column_stds: if self.column_stds.is_empty() {
                Vec::new()
            } else {
                keep.iter().map(|&j| self.column_stds[j]).collect()
            },
            row_mask: self.row_mask.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

/// Pearson correlation matrix over complete rows.
///
/// The diagonal is exactly 1. Constant columns yield zero off-diagonal
/// entries and a warning.
pub fn correlation_matrix(table: &FeatureTable) -> Result<(Mat, Vec<String>)> {
    let rows = table.masked_rows();
    if rows.len() < 2 {
        return Err(Error::TooFewRows { rows: rows.len() });
    }
    let f = table.n_cols();
    let cols: Vec<Vec<f64>> = (0..f).map(|j| table.masked_column(j, &rows)).collect();
    let mut warnings = Vec::new();
    for (j, col) in cols.iter().enumerate() {
        if col.iter().all(|&v| v == col[0]) {
            warnings.push(format!(
                "column {} is constant; correlations reported as 0",
                table.columns[j].name
            ));
        }
    }
    let mut m = Mat::identity(f);
    for a in 0..f {
        for b in a + 1..f {
            let r = linalg::pearson(&cols[a], &cols[b]);
            m[(a, b)] = r;
            m[(b, a)] = r;
        }
    }
    Ok((m, warnings))
}

/// R^2 of regressing column `target` on the columns `predictors`, over the
/// masked rows. Returns +infinity VIF as 1/(1-R^2) with the near-singular
/// guard R^2 >= 1 - 1e-12.
fn vif_of_subset(table: &FeatureTable, predictors: &[usize], target: usize) -> f64 {
    let rows = table.masked_rows();
    let y = table.masked_column(target, &rows);
    let mut x = Mat::zeros(rows.len(), predictors.len());
    for (i, &row) in rows.iter().enumerate() {
        for (jj, &j) in predictors.iter().enumerate() {
            x[(i, jj)] = table.values[(row, j)];
        }
    }
    let r2 = match linalg::ols(&x, &y) {
        Ok((_, _, fitted)) => linalg::r_squared(&y, &fitted),
        // singular design: perfect collinearity somewhere in the predictors
        Err(_) => return f64::INFINITY,
    };
    if !r2.is_finite() || r2 >= 1.0 - 1e-12 {
        f64::INFINITY
    } else {
        1.0 / (1.0 - r2)
    }
}

/// Variance inflation factor of one column against all others.
pub fn vif(table: &FeatureTable, column_index: usize) -> f64 {
    let predictors: Vec<usize> = (0..table.n_cols()).filter(|&j| j != column_index).collect();
    vif_of_subset(table, &predictors, column_index)
}

/// Iterative VIF selection.
///
/// Each iteration removes the single highest-VIF non-fixed column above
/// `threshold_free` (ties resolve to the later header column) and
/// recomputes. Fixed columns are never removed; any with VIF at or above
/// `threshold_fixed` is reported as a violation.
pub fn vif_select(table: &FeatureTable, threshold_free: f64, threshold_fixed: f64) -> VifSelection {
    assert!(threshold_free > 1.0 && threshold_fixed > 1.0);
    let mut retained: Vec<usize> = (0..table.n_cols()).collect();
    let mut removals = Vec::new();
    let mut iteration = 0;
    loop {
        iteration += 1;
        let mut worst: Option<(usize, f64)> = None; // (position in retained, vif)
        for (pos, &j) in retained.iter().enumerate() {
            if table.columns[j].fixed {
                continue;
            }
            let others: Vec<usize> = retained.iter().copied().filter(|&o| o != j).collect();
            let v = vif_of_subset(table, &others, j);
            if v >= threshold_free {
                // ties (including inf vs inf) resolve to the later column
                let replace = match worst {
                    None => true,
                    Some((_, wv)) => v >= wv,
                };
                if replace {
                    worst = Some((pos, v));
                }
            }
        }
        match worst {
            Some((pos, v)) => {
                let j = retained.remove(pos);
                removals.push(VifRemoval {
                    iteration,
                    column: table.columns[j].name.clone(),
                    vif: v,
                });
            }
            None => break,
        }
    }
    let mut fixed_violations = Vec::new();
    for &j in &retained {
        if table.columns[j].fixed {
            let others: Vec<usize> = retained.iter().copied().filter(|&o| o != j).collect();
            let v = vif_of_subset(table, &others, j);
            if v >= threshold_fixed {
                fixed_violations.push((table.columns[j].name.clone(), v));
            }
        }
    }
    VifSelection {
        retained,
        removals,
        fixed_violations,
    }
}

/// Default thresholds for [`vif_select`].
pub const VIF_THRESHOLD_FREE: f64 = 1000.0;
pub const VIF_THRESHOLD_FIXED: f64 = 1500.0;

/// Z-score each non-constant column using masked rows only (population
/// standard deviation). Constant columns become all zeros with a warning.
pub fn standardize(table: &FeatureTable) -> Result<FeatureTable> {
    if table.standardized {
        return Err(Error::AlreadyStandardized);
    }
    let rows = table.masked_rows();
    let m = rows.len() as f64;
    let mut out = table.clone();
    out.standardized = true;
    out.column_means = vec![0.0; table.n_cols()];
    out.column_stds = vec![0.0; table.n_cols()];
    for j in 0..table.n_cols() {
        let col = table.masked_column(j, &rows);
        let mean = col.iter().sum::<f64>() / m;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / m;
        let std = libm::sqrt(var);
        out.column_means[j] = mean;
        out.column_stds[j] = std;
        if std == 0.0 {
            out.warnings.push(format!(
                "column {} is constant; standardized to zeros",
                table.columns[j].name
            ));
            for i in 0..table.n_rows() {
                out.values[(i, j)] = 0.0;
            }
        } else {
            for i in 0..table.n_rows() {
                out.values[(i, j)] = (table.values[(i, j)] - mean) / std;
            }
        }
    }
    Ok(out)
}

/// Undo [`standardize`] using the recorded means and stds.
pub fn inverse_standardize(table: &FeatureTable) -> Result<FeatureTable> {
    if !table.standardized {
        return Err(Error::Numeric {
            message: "table is not standardized".into(),
        });
    }
    let mut out = table.clone();
    out.standardized = false;
    for j in 0..table.n_cols() {
        let (mean, std) = (table.column_means[j], table.column_stds[j]);
        for i in 0..table.n_rows() {
            out.values[(i, j)] = if std == 0.0 {
                mean
            } else {
                table.values[(i, j)] * std + mean
            };
        }
    }
    out.column_means = Vec::new();
    out.column_stds = Vec::new();
    Ok(out)
}
