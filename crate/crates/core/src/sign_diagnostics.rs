//! Executable form of the level/log sign-switch condition.
//!
//! Writing the additive 2x2 model as intercept `a1`, group gap `a2`, time
//! effect `a3` and interaction `a4`, the log-specification DD is zero exactly
//! on the boundary `a4 = a3 * a2 / a1`, and the two specifications disagree
//! in sign when `a4` lies strictly between zero and that boundary value.
//! These functions classify a design against the boundary, compare
//! predictions with fitted estimates, and solve for the crossing point along
//! a one-dimensional sweep.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::DDCellMeans;
use crate::dd_estimators::DDFit;
use crate::transform::OutcomeTransform;

/// Classification of a design against the sign-switch condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchPrediction {
    /// Level and log DD will disagree in sign.
    Switch,
    /// Signs agree (or the level DD is exactly zero).
    NoSwitch,
    /// The design sits on the boundary: the log DD is exactly zero.
    BoundaryZeroLog,
    /// The condition is undefined: zero time effect, zero baseline gap, or a
    /// nonpositive pre-period mean.
    Degenerate,
}

/// Observed relation between two fitted DD estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservedRelation {
    Concordant,
    Discordant,
    /// The log DD is statistically indistinguishable from zero.
    LogZero,
}

/// Full diagnostic report for one design.
#[derive(Debug, Clone, Serialize)]
pub struct SignSwitchReport {
    /// Treated-group change over time.
    pub delta_t: f64,
    /// Control-group change over time (the aggregate time effect, `a3`).
    pub delta_c: f64,
    /// Relative baseline gap `(Y_T0 - Y_C0) / Y_C0 = a2 / a1`.
    pub baseline_gap_ratio: Option<f64>,
    pub time_effect: f64,
    /// Level DD, `a4`.
    pub level_dd: f64,
    /// Magnitude of the boundary value `|a3 * a2 / a1|`.
    pub threshold: Option<f64>,
    /// `threshold - |level_dd|`; positive inside the band.
    pub margin: Option<f64>,
    pub prediction: SwitchPrediction,
    pub degenerate_reason: Option<String>,
    pub observed: Option<ObservedRelation>,
}

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error("level and log fits come from different samples ({level} vs {log} rows)")]
    MismatchedSamples { level: usize, log: usize },
    #[error("expected a level fit and a log fit, got {0} and {1}")]
    WrongTransforms(OutcomeTransform, OutcomeTransform),
    #[error("no crossing: the required divisor is zero")]
    NoCrossing,
}

/// Classifies a set of raw cell means against the sign-switch condition.
///
/// The comparison against the boundary is relative with tolerance `tol`.
/// Nonpositive pre-period means, a zero time effect, or a zero baseline gap
/// short-circuit to `Degenerate`.
pub fn diagnose_from_cells(cells: &DDCellMeans, tol: f64) -> SignSwitchReport {
    let delta_t = cells.mean_t1 - cells.mean_t0;
    let delta_c = cells.mean_c1 - cells.mean_c0;
    let level_dd = delta_t - delta_c;

    if cells.mean_c0 <= 0.0 || cells.mean_t0 <= 0.0 {
        return SignSwitchReport {
            delta_t,
            delta_c,
            baseline_gap_ratio: None,
            time_effect: delta_c,
            level_dd,
            threshold: None,
            margin: None,
            prediction: SwitchPrediction::Degenerate,
            degenerate_reason: Some("nonpositive pre-period mean; log estimand undefined".into()),
            observed: None,
        };
    }

    let gap_ratio = (cells.mean_t0 - cells.mean_c0) / cells.mean_c0;
    // Signed boundary value of the level DD at which the log DD is zero.
    let boundary = delta_c * gap_ratio;
    let threshold = boundary.abs();
    let margin = threshold - level_dd.abs();

    let (prediction, reason) = if delta_c == 0.0 {
        (
            SwitchPrediction::Degenerate,
            Some("zero aggregate time effect; no switch possible".to_string()),
        )
    } else if gap_ratio == 0.0 {
        (
            SwitchPrediction::Degenerate,
            Some("zero baseline outcome gap; no switch possible".to_string()),
        )
    } else if (level_dd - boundary).abs() <= tol * threshold.max(f64::MIN_POSITIVE) {
        (SwitchPrediction::BoundaryZeroLog, None)
    } else if level_dd != 0.0
        && level_dd.signum() == boundary.signum()
        && level_dd.abs() < threshold
    {
        // Strictly between zero and the boundary, on the boundary's side.
        (SwitchPrediction::Switch, None)
    } else {
        (SwitchPrediction::NoSwitch, None)
    };

    SignSwitchReport {
        delta_t,
        delta_c,
        baseline_gap_ratio: Some(gap_ratio),
        time_effect: delta_c,
        level_dd,
        threshold: Some(threshold),
        margin: Some(margin),
        prediction,
        degenerate_reason: reason,
        observed: None,
    }
}

/// Diagnoses from a fitted level/log pair on the same sample.
///
/// The prediction comes from the level fit's raw cell means with a boundary
/// band scaled by the level DD's standard error; the observed field compares
/// the fitted signs, reporting `LogZero` when the log DD is within
/// `tol` standard errors of zero.
pub fn diagnose_from_fits(
    level_fit: &DDFit,
    log_fit: &DDFit,
    tol: f64,
) -> Result<SignSwitchReport, DiagnosticsError> {
    if level_fit.transform != OutcomeTransform::Level || log_fit.transform != OutcomeTransform::Log
    {
        return Err(DiagnosticsError::WrongTransforms(
            level_fit.transform,
            log_fit.transform,
        ));
    }
    if level_fit.n_obs != log_fit.n_obs {
        return Err(DiagnosticsError::MismatchedSamples {
            level: level_fit.n_obs,
            log: log_fit.n_obs,
        });
    }

    // Boundary band in level-DD units: tol standard errors, expressed
    // relative to the threshold.
    let cells = &level_fit.cells;
    let provisional = diagnose_from_cells(cells, 0.0);
    let rel_tol = match provisional.threshold {
        Some(t) if t > 0.0 => tol * level_fit.dd_se / t,
        _ => 0.0,
    };
    let mut report = diagnose_from_cells(cells, rel_tol);

    let observed = if log_fit.dd_estimate.abs() < tol * log_fit.dd_se {
        ObservedRelation::LogZero
    } else if level_fit.dd_estimate.signum() == log_fit.dd_estimate.signum() {
        ObservedRelation::Concordant
    } else {
        ObservedRelation::Discordant
    };
    report.observed = Some(observed);
    Ok(report)
}

/// Axis of a one-dimensional sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Relative baseline gap `a2 / a1`.
    BaselineGapRatio,
    /// Aggregate time effect `a3`.
    TimeEffect,
}

/// Solves for the axis value at which the log DD is exactly zero, holding the
/// other parameters fixed.
///
/// On the baseline axis the crossing is at `a4 / a3`; on the time axis at
/// `a4 / (a2 / a1)`. A zero level DD crosses at zero on either axis.
pub fn crossing_point(
    level_dd: f64,
    time_effect: Option<f64>,
    baseline_gap_ratio: Option<f64>,
    axis: SweepAxis,
) -> Result<f64, DiagnosticsError> {
    if level_dd == 0.0 {
        return Ok(0.0);
    }
    match axis {
        SweepAxis::BaselineGapRatio => {
            let a3 = time_effect.ok_or(DiagnosticsError::NoCrossing)?;
            if a3 == 0.0 {
                return Err(DiagnosticsError::NoCrossing);
            }
            Ok(level_dd / a3)
        }
        SweepAxis::TimeEffect => {
            let ratio = baseline_gap_ratio.ok_or(DiagnosticsError::NoCrossing)?;
            if ratio == 0.0 {
                return Err(DiagnosticsError::NoCrossing);
            }
            Ok(level_dd / ratio)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_model::DDCellMeans;
    use approx::assert_relative_eq;

    fn cells(c0: f64, c1: f64, t0: f64, t1: f64) -> DDCellMeans {
        DDCellMeans::from_means(c0, c1, t0, t1)
    }

    #[test]
    fn switch_predicted_inside_band() {
        let r = diagnose_from_cells(&cells(10.0, 12.0, 20.0, 23.0), 1e-9);
        assert_eq!(r.prediction, SwitchPrediction::Switch);
        assert_relative_eq!(r.threshold.unwrap(), 2.0, epsilon = 1e-12);
        assert_relative_eq!(r.level_dd, 1.0, epsilon = 1e-12);
        assert_relative_eq!(r.margin.unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn boundary_is_detected() {
        // a = (10, 2, 2, 0.4): boundary at 2 * 0.2 = 0.4 = a4.
        let r = diagnose_from_cells(&cells(10.0, 12.0, 12.0, 14.4), 1e-9);
        assert_eq!(r.prediction, SwitchPrediction::BoundaryZeroLog);
    }

    #[test]
    fn zero_time_effect_is_degenerate() {
        let r = diagnose_from_cells(&cells(10.0, 10.0, 20.0, 21.0), 1e-9);
        assert_eq!(r.prediction, SwitchPrediction::Degenerate);
        assert!(r.degenerate_reason.unwrap().contains("time effect"));
    }

    #[test]
    fn concordant_case_is_no_switch() {
        // a = (50, 10, 20, 10): threshold 4 < 10, both estimands positive.
        let r = diagnose_from_cells(&cells(50.0, 70.0, 60.0, 90.0), 1e-9);
        assert_eq!(r.prediction, SwitchPrediction::NoSwitch);
        assert!(r.margin.unwrap() < 0.0);
        // Oracle: g_t / g_c = (90/60) / (70/50) > 1, concordant with +10.
        assert!((90.0 / 60.0) / (70.0 / 50.0) > 1.0);
    }

    #[test]
    fn opposite_signed_boundary_is_not_a_switch() {
        // a2 < 0 makes the boundary negative while a4 > 0: log DD moves
        // further positive, so signs agree despite |a4| < threshold.
        let r = diagnose_from_cells(&cells(10.0, 12.0, 5.0, 7.5), 1e-9);
        assert_relative_eq!(r.level_dd, 0.5, epsilon = 1e-12);
        assert_relative_eq!(r.threshold.unwrap(), 1.0, epsilon = 1e-12);
        assert_eq!(r.prediction, SwitchPrediction::NoSwitch);
        // Oracle: both estimands positive here.
        assert!((7.5 / 5.0) / (12.0 / 10.0) - 1.0 > 0.0);
    }

    #[test]
    fn nonpositive_baseline_is_degenerate() {
        let r = diagnose_from_cells(&cells(-1.0, 2.0, 3.0, 4.0), 1e-9);
        assert_eq!(r.prediction, SwitchPrediction::Degenerate);
        assert!(r.threshold.is_none());
    }

    #[test]
    fn prediction_matches_estimand_signs_on_random_grid() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let mut checked = 0;
        for _ in 0..10_000 {
            let c0 = rng.gen_range(1.0..100.0);
            let c1 = rng.gen_range(1.0..100.0);
            let t0 = rng.gen_range(1.0..100.0);
            let t1 = rng.gen_range(1.0..100.0);
            let cell = cells(c0, c1, t0, t1);
            let r = diagnose_from_cells(&cell, 1e-9);
            let level = (t1 - t0) - (c1 - c0);
            let log_side = (t1 / t0) / (c1 / c0) - 1.0;
            // Skip boundary band and degenerate draws (measure zero anyway).
            match r.prediction {
                SwitchPrediction::Switch => {
                    assert!(level.signum() != log_side.signum(), "cells {cell:?}");
                    checked += 1;
                }
                SwitchPrediction::NoSwitch => {
                    assert!(
                        level == 0.0 || log_side == 0.0 || level.signum() == log_side.signum(),
                        "cells {cell:?}"
                    );
                    checked += 1;
                }
                _ => {}
            }
        }
        assert!(checked > 9_000);
    }

    #[test]
    fn both_condition_forms_agree() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..1_000 {
            let c0 = rng.gen_range(1.0..50.0);
            let c1 = rng.gen_range(1.0..50.0);
            let t0 = rng.gen_range(1.0..50.0);
            let t1 = rng.gen_range(1.0..50.0);
            let r = diagnose_from_cells(&cells(c0, c1, t0, t1), 1e-9);
            // Cell-mean form |Delta_C (T0 - C0)/C0| vs parameter form
            // |a3 * a2 / a1| with a1 = C0, a2 = T0 - C0, a3 = C1 - C0.
            let cell_form = ((c1 - c0) * (t0 - c0) / c0).abs();
            let param_form = ((c1 - c0) * ((t0 - c0) / c0)).abs();
            if let Some(threshold) = r.threshold {
                assert_relative_eq!(threshold, cell_form, max_relative = 1e-12);
                assert_relative_eq!(threshold, param_form, max_relative = 1e-12);
            }
        }
    }

    #[test]
    fn negative_level_dd_case_is_detected_symmetrically() {
        // Mirror of the positive case: a4 < 0 with the boundary below it.
        let base = cells(10.0, 12.0, 20.0, 23.0); // switch, a4 = +1
        let mirrored = cells(10.0, 8.0, 20.0, 17.0); // a3 = -2, a4 = -1
        let r_pos = diagnose_from_cells(&base, 1e-9);
        let r_neg = diagnose_from_cells(&mirrored, 1e-9);
        assert_eq!(r_pos.prediction, SwitchPrediction::Switch);
        assert_eq!(r_neg.prediction, SwitchPrediction::Switch);
        assert_relative_eq!(r_neg.level_dd, -r_pos.level_dd, epsilon = 1e-12);
    }

    #[test]
    fn crossing_points_match_figure_setups() {
        // Fixed Y_C0 = 50, Delta_T = 30, Delta_C = 20: a4 = 10, a3 = 20.
        let x = crossing_point(10.0, Some(20.0), None, SweepAxis::BaselineGapRatio).unwrap();
        assert_relative_eq!(x, 0.5, epsilon = 1e-12);
        // Fixed gap ratio 0.2 (Y_C0 = 50, Y_T0 = 60), a4 = 10.
        let x = crossing_point(10.0, None, Some(0.2), SweepAxis::TimeEffect).unwrap();
        assert_relative_eq!(x, 50.0, epsilon = 1e-12);
        // Zero level DD crosses at zero on either axis.
        assert_eq!(
            crossing_point(0.0, Some(5.0), None, SweepAxis::BaselineGapRatio).unwrap(),
            0.0
        );
        assert_eq!(
            crossing_point(0.0, None, Some(0.3), SweepAxis::TimeEffect).unwrap(),
            0.0
        );
        // Required divisor zero: no crossing.
        assert!(crossing_point(10.0, Some(0.0), None, SweepAxis::BaselineGapRatio).is_err());
    }
}
