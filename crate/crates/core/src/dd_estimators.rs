//! The DD estimands: level, log and IHS fits of the 2x2 interaction model,
//! the growth-rate decomposition of the exponentiated log coefficient, and
//! balance tables.
//!
//! Two routes to a "proportional" effect are kept deliberately distinct:
//! [`dd_from_cells`] works on raw (pre-transform) cell means, while the log
//! coefficient comes from the regression on log outcomes. Under noise these
//! differ (mean of logs vs log of means); on noiseless constant-within-cell
//! data the saturated fit makes them coincide exactly.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use thiserror::Error;

use crate::data_model::{self, DataError, DDCellMeans, PanelDataset};
use crate::ols_engine::{self, DesignSpec, FeDimension, OlsError, SeType};
use crate::transform::OutcomeTransform;

/// Gross growth rates per group and the two DD estimands they imply.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthDecomposition {
    /// Treated-group gross growth, `E[Y_T1] / E[Y_T0]`.
    pub g_t: f64,
    /// Control-group gross growth, `E[Y_C1] / E[Y_C0]`.
    pub g_c: f64,
    /// Proportional difference in growth rates, `g_t / g_c - 1`.
    pub ratio_minus_one: f64,
    /// Level DD, `(Y_T1 - Y_T0) - (Y_C1 - Y_C0)`.
    pub level_dd: f64,
}

#[derive(Debug, Error)]
pub enum DDError {
    #[error("a pre-period cell mean is zero; growth ratios undefined")]
    ZeroBaseline,
    #[error("control-group growth is zero; growth-rate ratio undefined")]
    ZeroControlGrowth,
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Ols(#[from] OlsError),
}

/// Computes the growth decomposition from raw (untransformed) cell means.
pub fn dd_from_cells(cells: &DDCellMeans) -> Result<GrowthDecomposition, DDError> {
    if cells.mean_t0 == 0.0 || cells.mean_c0 == 0.0 {
        return Err(DDError::ZeroBaseline);
    }
    let g_t = cells.mean_t1 / cells.mean_t0;
    let g_c = cells.mean_c1 / cells.mean_c0;
    if g_c == 0.0 {
        return Err(DDError::ZeroControlGrowth);
    }
    Ok(GrowthDecomposition {
        g_t,
        g_c,
        ratio_minus_one: g_t / g_c - 1.0,
        level_dd: (cells.mean_t1 - cells.mean_t0) - (cells.mean_c1 - cells.mean_c0),
    })
}

/// First-order delta method for `exp(b) - 1`.
pub fn delta_method(beta4: f64, se_beta4: f64) -> (f64, f64) {
    let e = beta4.exp();
    (e - 1.0, e * se_beta4)
}

/// A fitted DD specification under one outcome transform.
#[derive(Debug, Clone, Serialize)]
pub struct DDFit {
    pub transform: OutcomeTransform,
    /// Full coefficient vector: intercept, treat, post, treat x post, then
    /// any covariates. Absorbed or dropped terms carry 0.
    pub coefficients: Vec<f64>,
    pub robust_ses: Vec<f64>,
    pub term_names: Vec<String>,
    /// The interaction coefficient (alpha_4 or beta_4).
    pub dd_estimate: f64,
    pub dd_se: f64,
    /// `exp(b4) - 1` with its delta-method SE; log fits only.
    pub exp_minus_one: Option<(f64, f64)>,
    /// Raw (pre-transform) cell means of the estimation sample.
    pub cells: DDCellMeans,
    pub n_obs: usize,
    pub se_type: SeType,
    /// Design-column indices dropped as collinear (e.g. a main effect
    /// absorbed by a fixed-effect dimension).
    pub dropped_columns: Vec<usize>,
}

impl DDFit {
    /// Two-sided p-value of the DD coefficient under the normal approximation.
    pub fn dd_p_value(&self) -> Option<f64> {
        normal_p_value(self.dd_estimate, self.dd_se)
    }
}

/// Controls to add beyond the saturated 2x2 terms.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Controls {
    /// Names of dataset covariates to include as regressors.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Names of dataset fixed-effect dimensions to absorb.
    #[serde(default)]
    pub absorb: Vec<String>,
}

/// Fits the DD interaction model on the (transformed) outcome.
///
/// The design is intercept, treat, post, treat x post, plus any requested
/// covariates; requested fixed-effect dimensions are absorbed. For log fits
/// the `exp(b4) - 1` transform and its delta-method SE are attached.
pub fn estimate_dd(
    data: &PanelDataset,
    transform: OutcomeTransform,
    controls: &Controls,
    se_type: SeType,
) -> Result<DDFit, DDError> {
    data.validate()?;
    let empty = data.empty_cells();
    if !empty.is_empty() {
        return Err(DDError::Data(DataError::EmptyCell(empty)));
    }
    if transform.requires_positive() {
        let bad = data
            .observations
            .iter()
            .filter(|o| o.outcome <= 0.0)
            .count();
        if bad > 0 {
            return Err(DDError::Data(DataError::NonPositiveOutcome { count: bad }));
        }
    }

    let n = data.n_obs();
    let response: Vec<f64> = data
        .observations
        .iter()
        .map(|o| transform.apply(o.outcome))
        .collect();
    let treat: Vec<u8> = data.observations.iter().map(|o| o.treat).collect();
    let post: Vec<u8> = data.observations.iter().map(|o| o.post).collect();
    let weights: Vec<f64> = data.observations.iter().map(|o| o.weight).collect();

    let mut spec = ols_engine::dd_design(response, &treat, &post, weights);
    for name in &controls.covariates {
        let idx = data
            .covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DDError::Data(DataError::MissingColumn(name.clone())))?;
        spec.regressors
            .push(data.observations.iter().map(|o| o.covariates[idx]).collect());
        spec.column_names.push(name.clone());
    }
    for name in &controls.absorb {
        let idx = data
            .fe_dimension_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DDError::Data(DataError::MissingColumn(name.clone())))?;
        let keys: Vec<&str> = data
            .observations
            .iter()
            .map(|o| o.fe_keys[idx].as_str())
            .collect();
        spec.fe_dimensions.push(FeDimension::from_keys(name, &keys));
    }

    let fit = ols_engine::fit_ols(&spec, se_type)?;

    // With absorbed fixed effects the intercept is excluded from the design,
    // so coefficient positions shift by one.
    let offset = if spec.fe_dimensions.is_empty() { 1 } else { 0 };
    let dd_index = offset + 2; // intercept?, treat, post, treat_post
    let mut coefficients = fit.coefficients.clone();
    let mut ses = fit.robust_ses();
    let mut names = fit.column_names.clone();
    if offset == 0 {
        coefficients.insert(0, 0.0);
        ses.insert(0, 0.0);
        names.insert(0, "intercept".to_string());
    }
    let dd_estimate = fit.coefficients[dd_index];
    let dd_se = fit.robust_se(dd_index);

    let exp_minus_one = match transform {
        OutcomeTransform::Log => Some(delta_method(dd_estimate, dd_se)),
        _ => None,
    };
    let cells = data_model::cell_means(data, OutcomeTransform::Level)?;

    Ok(DDFit {
        transform,
        coefficients,
        robust_ses: ses,
        term_names: names,
        dd_estimate,
        dd_se,
        exp_minus_one,
        cells,
        n_obs: n,
        se_type,
        dropped_columns: fit.dropped_columns,
    })
}

/// Two-sided p-value of `estimate / se` under the standard normal.
/// `None` when the SE is degenerate (zero with a nonzero estimate is 0.0;
/// zero with a zero estimate is undefined).
pub fn normal_p_value(estimate: f64, se: f64) -> Option<f64> {
    if se == 0.0 {
        if estimate == 0.0 {
            return None;
        }
        return Some(0.0);
    }
    let z = (estimate / se).abs();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    Some(2.0 * (1.0 - normal.cdf(z)))
}

/// Paper-style significance stars: 1% / 5% / 10%.
pub fn stars(p: Option<f64>) -> &'static str {
    match p {
        Some(p) if p < 0.01 => "***",
        Some(p) if p < 0.05 => "**",
        Some(p) if p < 0.10 => "*",
        _ => "",
    }
}

/// One covariate row of a balance table.
#[derive(Debug, Clone, Serialize)]
pub struct BalanceRow {
    pub covariate: String,
    pub control_pre_mean: f64,
    pub control_post_mean: f64,
    /// Pre/post difference p-value within the control group.
    pub control_p_diff: Option<f64>,
    pub treated_pre_mean: f64,
    pub treated_post_mean: f64,
    pub treated_p_diff: Option<f64>,
    /// p-value of the DD interaction for this covariate.
    pub p_dd: Option<f64>,
    /// Set when the covariate has zero variance and no test is defined.
    pub degenerate: bool,
}

/// Balance table: each covariate regressed on treat, post and their
/// interaction with robust SEs; within-group difference p-values from the
/// post coefficient in group-restricted regressions.
pub fn balance_table(
    data: &PanelDataset,
    covariates: &[String],
    se_type: SeType,
) -> Result<Vec<BalanceRow>, DDError> {
    data.validate()?;
    let empty = data.empty_cells();
    if !empty.is_empty() {
        return Err(DDError::Data(DataError::EmptyCell(empty)));
    }

    let mut rows = Vec::with_capacity(covariates.len());
    for name in covariates {
        let idx = data
            .covariate_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| DDError::Data(DataError::MissingColumn(name.clone())))?;
        let values: Vec<f64> = data.observations.iter().map(|o| o.covariates[idx]).collect();
        let treat: Vec<u8> = data.observations.iter().map(|o| o.treat).collect();
        let post: Vec<u8> = data.observations.iter().map(|o| o.post).collect();
        let weights: Vec<f64> = data.observations.iter().map(|o| o.weight).collect();

        let mean_of = |want_treat: u8, want_post: u8| -> f64 {
            let mut num = 0.0;
            let mut den = 0.0;
            for i in 0..values.len() {
                if treat[i] == want_treat && post[i] == want_post {
                    num += weights[i] * values[i];
                    den += weights[i];
                }
            }
            num / den
        };

        let first = values[0];
        let degenerate = values.iter().all(|&v| v == first);

        let (p_dd, control_p, treated_p) = if degenerate {
            (None, None, None)
        } else {
            let spec = ols_engine::dd_design(values.clone(), &treat, &post, weights.clone());
            let fit = ols_engine::fit_ols(&spec, se_type)?;
            let p_dd = normal_p_value(fit.coefficients[3], fit.robust_se(3));
            let group_p = |want_treat: u8| -> Result<Option<f64>, DDError> {
                let mut y = Vec::new();
                let mut t = Vec::new();
                let mut w = Vec::new();
                for i in 0..values.len() {
                    if treat[i] == want_treat {
                        y.push(values[i]);
                        t.push(post[i] as f64);
                        w.push(weights[i]);
                    }
                }
                if y.iter().all(|&v| v == y[0]) {
                    return Ok(None);
                }
                let spec = DesignSpec {
                    response: y,
                    regressors: vec![t],
                    column_names: vec!["post".into()],
                    intercept: true,
                    fe_dimensions: vec![],
                    weights: w,
                };
                let fit = ols_engine::fit_ols(&spec, se_type)?;
                Ok(normal_p_value(fit.coefficients[1], fit.robust_se(1)))
            };
            (p_dd, group_p(0)?, group_p(1)?)
        };

        rows.push(BalanceRow {
            covariate: name.clone(),
            control_pre_mean: mean_of(0, 0),
            control_post_mean: mean_of(0, 1),
            control_p_diff: control_p,
            treated_pre_mean: mean_of(1, 0),
            treated_post_mean: mean_of(1, 1),
            treated_p_diff: treated_p,
            p_dd,
            degenerate,
        });
    }
    Ok(rows)
}
