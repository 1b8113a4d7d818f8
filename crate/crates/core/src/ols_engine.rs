//! Weighted least squares with heteroskedasticity-robust covariance and
//! high-dimensional fixed-effect absorption.
//!
//! The solver path is QR on the weighted design, never normal equations.
//! Fixed effects are absorbed by alternating projections (weighted group
//! demeaning swept over dimensions until the residual group means vanish),
//! which keeps designs with very large categorical dimensions feasible.
//! Robust covariance follows the sandwich formula
//! `(X'WX)^-1 (sum_i w_i^2 e_i^2 x_i x_i') (X'WX)^-1`, optionally scaled by
//! `n/(n-k)` (HC1).

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Relative column-norm threshold below which a regressor is treated as
/// collinear with the preceding ones and dropped.
const RANK_TOL: f64 = 1e-10;

/// Default absorption tolerance (max absolute residual group mean).
pub const DEFAULT_ABSORB_TOL: f64 = 1e-8;
/// Default cap on alternating-projection sweeps.
pub const DEFAULT_ABSORB_MAX_ITER: usize = 10_000;

/// Sandwich covariance flavor.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SeType {
    /// Plain White sandwich, no small-sample scaling.
    Hc0,
    /// Sandwich scaled by `n/(n-k)`, the common software default.
    #[default]
    Hc1,
}

impl std::str::FromStr for SeType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "hc0" => Ok(SeType::Hc0),
            "hc1" => Ok(SeType::Hc1),
            other => Err(format!("unknown se type `{other}`")),
        }
    }
}

/// A categorical dimension to absorb: integer level codes per row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeDimension {
    pub name: String,
    pub codes: Vec<usize>,
    pub n_levels: usize,
}

impl FeDimension {
    /// Factorizes string keys into dense level codes in first-appearance order.
    pub fn from_keys<S: AsRef<str>>(name: &str, keys: &[S]) -> FeDimension {
        let mut index: HashMap<String, usize> = HashMap::new();
        let mut codes = Vec::with_capacity(keys.len());
        for key in keys {
            let next = index.len();
            let code = *index.entry(key.as_ref().to_string()).or_insert(next);
            codes.push(code);
        }
        FeDimension {
            name: name.to_string(),
            codes,
            n_levels: index.len(),
        }
    }
}

/// A regression design: response, regressor columns, fixed effects to absorb,
/// and row weights.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignSpec {
    pub response: Vec<f64>,
    /// Column-major regressors, excluding the intercept.
    pub regressors: Vec<Vec<f64>>,
    pub column_names: Vec<String>,
    /// Whether to include an intercept. Ignored when fixed effects are
    /// absorbed (the constant lies in the span of any fixed effect).
    pub intercept: bool,
    pub fe_dimensions: Vec<FeDimension>,
    pub weights: Vec<f64>,
}

impl DesignSpec {
    pub fn n_rows(&self) -> usize {
        self.response.len()
    }

    pub fn validate(&self) -> Result<(), OlsError> {
        let n = self.n_rows();
        if self.weights.len() != n {
            return Err(OlsError::DimensionMismatch {
                what: "weights".into(),
                expected: n,
                got: self.weights.len(),
            });
        }
        for (j, col) in self.regressors.iter().enumerate() {
            if col.len() != n {
                return Err(OlsError::DimensionMismatch {
                    what: format!("regressor column {j}"),
                    expected: n,
                    got: col.len(),
                });
            }
        }
        for dim in &self.fe_dimensions {
            if dim.codes.len() != n {
                return Err(OlsError::DimensionMismatch {
                    what: format!("fe dimension `{}`", dim.name),
                    expected: n,
                    got: dim.codes.len(),
                });
            }
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            return Err(OlsError::DegenerateWeights);
        }
        Ok(())
    }
}

/// Outcome of an absorption pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AbsorptionInfo {
    pub iterations: usize,
    pub converged: bool,
    /// Largest absolute weighted group mean remaining after the final sweep.
    pub max_residual_mean: f64,
}

impl AbsorptionInfo {
    fn none() -> AbsorptionInfo {
        AbsorptionInfo {
            iterations: 0,
            converged: true,
            max_residual_mean: 0.0,
        }
    }
}

/// A fitted weighted least-squares model.
#[derive(Debug, Clone)]
pub struct FitResult {
    /// Coefficients in design-column order (intercept first when present).
    /// Dropped collinear columns carry 0 with a zeroed covariance row.
    pub coefficients: Vec<f64>,
    pub column_names: Vec<String>,
    pub robust_vcov: DMatrix<f64>,
    pub residuals: Vec<f64>,
    pub n_obs: usize,
    /// Retained (non-collinear) column count.
    pub rank: usize,
    pub dof: usize,
    /// Parameters absorbed by fixed effects, by the connected-components rule
    /// for two dimensions; an upper bound beyond that.
    pub absorbed_dof: usize,
    pub absorbed_dof_is_upper_bound: bool,
    /// Indices of columns dropped as collinear, in design order.
    pub dropped_columns: Vec<usize>,
    pub absorption_iterations: usize,
    pub converged: bool,
    pub se_type: SeType,
}

impl FitResult {
    pub fn robust_se(&self, j: usize) -> f64 {
        self.robust_vcov[(j, j)].max(0.0).sqrt()
    }

    pub fn robust_ses(&self) -> Vec<f64> {
        (0..self.coefficients.len()).map(|j| self.robust_se(j)).collect()
    }
}

#[derive(Debug, Error)]
pub enum OlsError {
    #[error("all weights must be strictly positive and finite")]
    DegenerateWeights,
    #[error("{what}: expected length {expected}, got {got}")]
    DimensionMismatch {
        what: String,
        expected: usize,
        got: usize,
    },
    #[error("design has {rows} rows but {cols} columns after absorption")]
    InsufficientRows { rows: usize, cols: usize },
    #[error("within transform requires at least one fixed-effect dimension")]
    NoFeDimensions,
}

/// Demeans the response and every regressor column within each fixed-effect
/// dimension by alternating projections, respecting weights.
///
/// Iterates until the largest absolute weighted group mean falls below `tol`
/// or `max_iter` sweeps elapse. A non-converged pass is surfaced through the
/// returned [`AbsorptionInfo`], not an error; the fit may still proceed.
pub fn within_transform(
    spec: &DesignSpec,
    tol: f64,
    max_iter: usize,
) -> Result<(DesignSpec, AbsorptionInfo), OlsError> {
    spec.validate()?;
    if spec.fe_dimensions.is_empty() {
        return Err(OlsError::NoFeDimensions);
    }

    // Pre-compute weight totals per level for each dimension.
    let weight_totals: Vec<Vec<f64>> = spec
        .fe_dimensions
        .iter()
        .map(|dim| {
            let mut totals = vec![0.0; dim.n_levels];
            for (i, &code) in dim.codes.iter().enumerate() {
                totals[code] += spec.weights[i];
            }
            totals
        })
        .collect();

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(1 + spec.regressors.len());
    columns.push(spec.response.clone());
    columns.extend(spec.regressors.iter().cloned());

    let demean = |col: &mut [f64], dim: &FeDimension, totals: &[f64], weights: &[f64]| {
        let mut sums = vec![0.0; dim.n_levels];
        for i in 0..col.len() {
            sums[dim.codes[i]] += weights[i] * col[i];
        }
        for i in 0..col.len() {
            col[i] -= sums[dim.codes[i]] / totals[dim.codes[i]];
        }
    };

    let residual_mean = |col: &[f64], dim: &FeDimension, totals: &[f64], weights: &[f64]| -> f64 {
        let mut sums = vec![0.0; dim.n_levels];
        for i in 0..col.len() {
            sums[dim.codes[i]] += weights[i] * col[i];
        }
        sums.iter()
            .zip(totals)
            .map(|(s, t)| (s / t).abs())
            .fold(0.0, f64::max)
    };

    let mut iterations = 0;
    let mut converged = false;
    let mut max_residual = f64::INFINITY;
    while iterations < max_iter {
        for (d, dim) in spec.fe_dimensions.iter().enumerate() {
            for col in columns.iter_mut() {
                demean(col, dim, &weight_totals[d], &spec.weights);
            }
        }
        iterations += 1;
        max_residual = 0.0;
        for (d, dim) in spec.fe_dimensions.iter().enumerate() {
            for col in columns.iter() {
                let r = residual_mean(col, dim, &weight_totals[d], &spec.weights);
                if r > max_residual {
                    max_residual = r;
                }
            }
        }
        if max_residual < tol {
            converged = true;
            break;
        }
    }
    let response = columns.remove(0);
    let out = DesignSpec {
        response,
        regressors: columns,
        column_names: spec.column_names.clone(),
        intercept: false,
        fe_dimensions: spec.fe_dimensions.clone(),
        weights: spec.weights.clone(),
    };
    Ok((
        out,
        AbsorptionInfo {
            iterations,
            converged,
            max_residual_mean: max_residual,
        },
    ))
}

/// Absorbed parameter count. Exact for one dimension; connected-components
/// rule for two; an upper bound for three or more.
fn absorbed_dof(dims: &[FeDimension]) -> (usize, bool) {
    match dims.len() {
        0 => (0, false),
        1 => (dims[0].n_levels, false),
        _ => {
            let l0 = dims[0].n_levels;
            let l1 = dims[1].n_levels;
            let components = bipartite_components(&dims[0], &dims[1]);
            let mut total = l0 + l1 - components;
            let mut upper_bound = false;
            for dim in &dims[2..] {
                total += dim.n_levels.saturating_sub(1);
                upper_bound = true;
            }
            (total, upper_bound)
        }
    }
}

/// Connected components of the bipartite graph whose vertices are the levels
/// of two fixed-effect dimensions and whose edges are observations.
fn bipartite_components(a: &FeDimension, b: &FeDimension) -> usize {
    let total = a.n_levels + b.n_levels;
    let mut parent: Vec<usize> = (0..total).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..a.codes.len() {
        let ra = find(&mut parent, a.codes[i]);
        let rb = find(&mut parent, a.n_levels + b.codes[i]);
        if ra != rb {
            parent[ra] = rb;
        }
    }
    let mut roots = std::collections::HashSet::new();
    for x in 0..total {
        let r = find(&mut parent, x);
        roots.insert(r);
    }
    roots.len()
}

/// Fits the design by weighted least squares through a QR decomposition,
/// absorbing any declared fixed effects first.
///
/// Collinear columns are dropped in design order (the later column loses)
/// and reported in [`FitResult::dropped_columns`] rather than failing the fit.
pub fn fit_ols(spec: &DesignSpec, se_type: SeType) -> Result<FitResult, OlsError> {
    spec.validate()?;

    let (working, absorption, fe_dof, fe_dof_upper) = if spec.fe_dimensions.is_empty() {
        (spec.clone(), AbsorptionInfo::none(), 0, false)
    } else {
        let (demeaned, info) = within_transform(spec, DEFAULT_ABSORB_TOL, DEFAULT_ABSORB_MAX_ITER)?;
        let (dof, upper) = absorbed_dof(&spec.fe_dimensions);
        (demeaned, info, dof, upper)
    };

    let n = working.n_rows();
    let mut columns: Vec<Vec<f64>> = Vec::new();
    let mut names: Vec<String> = Vec::new();
    if working.intercept {
        columns.push(vec![1.0; n]);
        names.push("intercept".to_string());
    }
    for (j, col) in working.regressors.iter().enumerate() {
        columns.push(col.clone());
        names.push(
            working
                .column_names
                .get(j)
                .cloned()
                .unwrap_or_else(|| format!("x{j}")),
        );
    }
    let k_full = columns.len();
    if n < k_full {
        return Err(OlsError::InsufficientRows {
            rows: n,
            cols: k_full,
        });
    }

    let sqrt_w: Vec<f64> = working.weights.iter().map(|w| w.sqrt()).collect();
    let yw = DVector::from_iterator(n, working.response.iter().zip(&sqrt_w).map(|(y, s)| y * s));

    // Sequential rank screen: drop a column whose weighted version is (nearly)
    // in the span of the kept columns before it.
    let mut kept: Vec<usize> = Vec::new();
    let mut dropped: Vec<usize> = Vec::new();
    let mut basis: Vec<DVector<f64>> = Vec::new(); // orthonormal, weighted space
    for (j, col) in columns.iter().enumerate() {
        let mut v = DVector::from_iterator(n, col.iter().zip(&sqrt_w).map(|(x, s)| x * s));
        let orig_norm = v.norm();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        // Reorthogonalize once for stability.
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let resid_norm = v.norm();
        if resid_norm <= RANK_TOL * orig_norm.max(1.0) {
            dropped.push(j);
        } else {
            kept.push(j);
            basis.push(v / resid_norm);
        }
    }
    let rank = kept.len();

    let mut coefficients = vec![0.0; k_full];
    let mut vcov = DMatrix::zeros(k_full, k_full);
    let residuals: Vec<f64>;

    if rank > 0 {
        let xw = DMatrix::from_fn(n, rank, |i, c| columns[kept[c]][i] * sqrt_w[i]);
        let qr = xw.qr();
        let q = qr.q();
        let r = qr.r();
        let qty = q.transpose() * &yw;
        let beta = r
            .solve_upper_triangular(&qty)
            .expect("R is nonsingular after rank screening");
        for (c, &j) in kept.iter().enumerate() {
            coefficients[j] = beta[c];
        }

        // Unweighted residuals on the (possibly demeaned) data.
        let mut e = working.response.clone();
        for (c, &j) in kept.iter().enumerate() {
            let b = beta[c];
            for i in 0..n {
                e[i] -= b * columns[j][i];
            }
        }
        residuals = e;

        // Bread: (X'WX)^-1 = R^-1 R^-T.
        let r_inv = r
            .solve_upper_triangular(&DMatrix::identity(rank, rank))
            .expect("R is nonsingular after rank screening");
        let bread = &r_inv * r_inv.transpose();

        // Meat: sum_i w_i^2 e_i^2 x_i x_i' over kept columns.
        let mut meat = DMatrix::zeros(rank, rank);
        for i in 0..n {
            let s = working.weights[i] * working.weights[i] * residuals[i] * residuals[i];
            if s == 0.0 {
                continue;
            }
            for a in 0..rank {
                let xa = columns[kept[a]][i];
                if xa == 0.0 {
                    continue;
                }
                for b in a..rank {
                    meat[(a, b)] += s * xa * columns[kept[b]][i];
                }
            }
        }
        for a in 0..rank {
            for b in 0..a {
                meat[(a, b)] = meat[(b, a)];
            }
        }

        let mut sandwich = &bread * meat * &bread;
        if se_type == SeType::Hc1 {
            let k_total = rank + fe_dof;
            if n > k_total {
                sandwich *= n as f64 / (n - k_total) as f64;
            }
        }
        // Enforce exact symmetry.
        let symmetric = (&sandwich + sandwich.transpose()) * 0.5;
        for (a, &ja) in kept.iter().enumerate() {
            for (b, &jb) in kept.iter().enumerate() {
                vcov[(ja, jb)] = symmetric[(a, b)];
            }
        }
    } else {
        residuals = working.response.clone();
    }

    let dof = n.saturating_sub(rank + fe_dof);
    Ok(FitResult {
        coefficients,
        column_names: names,
        robust_vcov: vcov,
        residuals,
        n_obs: n,
        rank,
        dof,
        absorbed_dof: fe_dof,
        absorbed_dof_is_upper_bound: fe_dof_upper,
        dropped_columns: dropped,
        absorption_iterations: absorption.iterations,
        converged: absorption.converged,
        se_type,
    })
}

/// Point estimate and robust standard error of `w' beta`.
pub fn linear_combination_se(fit: &FitResult, weights: &[f64]) -> Result<(f64, f64), OlsError> {
    let k = fit.coefficients.len();
    if weights.len() != k {
        return Err(OlsError::DimensionMismatch {
            what: "contrast weights".into(),
            expected: k,
            got: weights.len(),
        });
    }
    let w = DVector::from_column_slice(weights);
    let estimate = fit
        .coefficients
        .iter()
        .zip(weights)
        .map(|(b, w)| b * w)
        .sum();
    let variance = (w.transpose() * &fit.robust_vcov * &w)[(0, 0)];
    Ok((estimate, variance.max(0.0).sqrt()))
}

/// Builds the saturated 2x2 design (intercept, treat, post, treat x post).
pub fn dd_design(
    response: Vec<f64>,
    treat: &[u8],
    post: &[u8],
    weights: Vec<f64>,
) -> DesignSpec {
    let n = response.len();
    let treat_col: Vec<f64> = treat.iter().map(|&d| d as f64).collect();
    let post_col: Vec<f64> = post.iter().map(|&t| t as f64).collect();
    let inter_col: Vec<f64> = (0..n).map(|i| treat_col[i] * post_col[i]).collect();
    DesignSpec {
        response,
        regressors: vec![treat_col, post_col, inter_col],
        column_names: vec!["treat".into(), "post".into(), "treat_post".into()],
        intercept: true,
        fe_dimensions: vec![],
        weights,
    }
}
