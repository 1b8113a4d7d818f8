//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line.
//!
//! Monte Carlo criteria run at desk scale (500 runs instead of 10,000) with
//! tolerances doubled accordingly. Run with `--nocapture` to see the lines
//! for passing criteria too.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dd_signal::data_model::{dataset_from_cells, DDCellMeans, PanelDataset};
use dd_signal::dd_estimators::{dd_from_cells, estimate_dd, Controls};
use dd_signal::ols_engine::{fit_ols, DesignSpec, FeDimension, SeType};
use dd_signal::sign_diagnostics::{
    diagnose_from_cells, diagnose_from_fits, ObservedRelation, SwitchPrediction,
};
use dd_signal::sim_engine::{generate_run, presets, run_monte_carlo, run_sweep, CellTargets, SimConfig};
use dd_signal::transform::OutcomeTransform;

const DESK_RUNS: usize = 500;

fn report(criterion: &str, ok: bool, detail: &str) {
    println!(
        "criterion {criterion}: {}",
        if ok { "PASS" } else { "FAIL" }
    );
    assert!(ok, "criterion {criterion} failed: {detail}");
}

fn desk_sim(name: &str, seed: u64, stream: u64) -> SimConfig {
    let mut config = presets::simulation(name, DESK_RUNS, seed).expect("known preset");
    config.stream = stream;
    config.bootstrap_reps = 200;
    config
}

/// Criterion 1: Table 1 reproduction at desk scale (tolerances doubled).
#[test]
fn criterion_1_table1_reproduction() {
    let alpha_targets = [0.40, 1.00, 0.40, 1.00, 0.80];
    let exp_targets = [0.000, 0.000, 0.000, -0.042, -0.017];
    let mut failures = Vec::new();
    for col in 1..=5 {
        let config = desk_sim(&format!("table1-col{col}"), 71, col as u64);
        let summary = run_monte_carlo(&config).unwrap();
        let da = summary.alpha4.mean - alpha_targets[col - 1];
        let de = summary.expb4m1.mean - exp_targets[col - 1];
        if da.abs() > 0.02 {
            failures.push(format!("col {col}: mean alpha4 off by {da:.4}"));
        }
        if de.abs() > 0.004 {
            failures.push(format!("col {col}: mean exp(b4)-1 off by {de:.4}"));
        }
    }
    report("1 (table 1 reproduction)", failures.is_empty(), &failures.join("; "));
}

/// Criterion 2: Table C1 reproduction at desk scale (tolerances doubled).
#[test]
fn criterion_2_table_c1_reproduction() {
    let exp_targets = [0.167, 0.083, 0.167, -0.083, -0.143];
    let mut failures = Vec::new();
    for col in 1..=5 {
        let config = desk_sim(&format!("tablec1-col{col}"), 72, col as u64);
        let summary = run_monte_carlo(&config).unwrap();
        let da = summary.alpha4.mean;
        let de = summary.expb4m1.mean - exp_targets[col - 1];
        if da.abs() > 0.02 {
            failures.push(format!("col {col}: mean alpha4 off by {da:.4}"));
        }
        if de.abs() > 0.004 {
            failures.push(format!("col {col}: mean exp(b4)-1 off by {de:.4}"));
        }
    }
    report("2 (table C1 reproduction)", failures.is_empty(), &failures.join("; "));
}

/// Criterion 3: Figure 1 zero crossings with a constant level DD of 10.
#[test]
fn criterion_3_figure1_crossings() {
    let mut failures = Vec::new();

    let left = run_sweep(&presets::sweep_preset("fig1-left", 100, 73).unwrap()).unwrap();
    match left.crossing {
        Some(x) if (x - 0.50).abs() <= 0.02 => {}
        other => failures.push(format!("left crossing = {other:?}, want 0.50 +/- 0.02")),
    }
    let right = run_sweep(&presets::sweep_preset("fig1-right", 100, 73).unwrap()).unwrap();
    match right.crossing {
        Some(x) if (x - 50.0).abs() <= 2.0 => {}
        other => failures.push(format!("right crossing = {other:?}, want 50 +/- 2")),
    }
    for (panel, result) in [("left", &left), ("right", &right)] {
        for p in &result.points {
            if (p.level_dd_mean - 10.0).abs() > 0.05 {
                failures.push(format!(
                    "{panel} panel: level DD = {:.4} at axis {:.3}",
                    p.level_dd_mean, p.axis_value
                ));
            }
        }
    }
    report("3 (figure 1 crossings)", failures.is_empty(), &failures.join("; "));
}

/// Criterion 4: Figure 2 variants show no sign change in the mean log DD.
#[test]
fn criterion_4_figure2_no_crossing() {
    let mut failures = Vec::new();
    for name in ["fig2-left", "fig2-right"] {
        let result = run_sweep(&presets::sweep_preset(name, 50, 74).unwrap()).unwrap();
        if result.crossing.is_some() {
            failures.push(format!("{name}: crossing at {:?}", result.crossing));
        }
        let first_sign = result.points[0].log_dd_mean.signum();
        let changes = result
            .points
            .iter()
            .filter(|p| p.log_dd_mean.signum() != first_sign)
            .count();
        if changes != 0 {
            failures.push(format!("{name}: {changes} sign changes in mean log DD"));
        }
    }
    report("4 (figure 2 no crossing)", failures.is_empty(), &failures.join("; "));
}

/// Criterion 5: the sign-switch classifier matches a direct oracle on 10^4
/// random positive cell-mean quadruples, and the boundary construction
/// (equalizing within-group growth rates) produces an exactly zero log DD.
#[test]
fn criterion_5_proposition_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(75);
    let mut failures = Vec::new();

    let mut accepted = 0usize;
    while accepted < 10_000 {
        let c0: f64 = rng.gen_range(0.5..50.0);
        let t0: f64 = rng.gen_range(0.5..50.0);
        let c1: f64 = rng.gen_range(0.05..60.0);
        let t1: f64 = rng.gen_range(0.05..60.0);

        let level_dd = (t1 - t0) - (c1 - c0);
        let delta_c = c1 - c0;
        let gap_ratio = (t0 - c0) / c0;
        let boundary = delta_c * gap_ratio;
        // Exclude degenerate points and a band around the boundary.
        if delta_c.abs() < 1e-6 || gap_ratio.abs() < 1e-6 || level_dd.abs() < 1e-6 {
            continue;
        }
        if (level_dd - boundary).abs() <= 1e-3 * boundary.abs().max(1.0) {
            continue;
        }
        accepted += 1;

        let ratio_minus_one = (t1 / t0) / (c1 / c0) - 1.0;
        let oracle_switch = level_dd.signum() != ratio_minus_one.signum();
        let cells = DDCellMeans::from_means(c0, c1, t0, t1);
        let predicted = diagnose_from_cells(&cells, 1e-9).prediction;
        let predicted_switch = predicted == SwitchPrediction::Switch;
        if predicted_switch != oracle_switch {
            failures.push(format!(
                "cells ({c0:.4},{c1:.4},{t0:.4},{t1:.4}): predicted {predicted:?}, \
                 oracle switch = {oracle_switch}"
            ));
            if failures.len() > 5 {
                break;
            }
        }
    }

    // Boundary construction: t1 chosen so both groups share one growth rate.
    for _ in 0..100 {
        let c0: f64 = rng.gen_range(0.5..50.0);
        let c1: f64 = rng.gen_range(0.05..60.0);
        let t0: f64 = rng.gen_range(0.5..50.0);
        let t1 = t0 * c1 / c0;
        let data = dataset_from_cells(
            [(0, 0, c0), (0, 0, c0), (0, 1, c1), (0, 1, c1),
             (1, 0, t0), (1, 0, t0), (1, 1, t1), (1, 1, t1)],
            "y",
        );
        let fit = estimate_dd(&data, OutcomeTransform::Log, &Controls::default(), SeType::Hc1)
            .unwrap();
        if fit.dd_estimate.abs() > 1e-10 {
            failures.push(format!(
                "boundary cells ({c0:.4},{c1:.4},{t0:.4},{t1:.4}): log DD = {:.3e}",
                fit.dd_estimate
            ));
        }
    }

    report("5 (proposition 1 oracle)", failures.is_empty(), &failures.join("; "));
}

fn brute_force_wls(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    w: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows();
    let wd = DMatrix::from_diagonal(&DVector::from_row_slice(w));
    let xtwx = x.transpose() * &wd * x;
    let bread = xtwx.try_inverse().expect("full-rank test design");
    let beta = &bread * (x.transpose() * &wd * y);
    let e = y - x * &beta;
    let mut meat = DMatrix::zeros(x.ncols(), x.ncols());
    for i in 0..n {
        let xi = x.row(i).transpose();
        meat += (w[i] * w[i] * e[i] * e[i]) * (&xi * xi.transpose());
    }
    let vcov = &bread * meat * &bread;
    (beta, vcov)
}

/// Criterion 6: coefficients and the HC0 sandwich match brute-force normal
/// equations on random instances; fixed-effect absorption matches
/// dummy-variable OLS.
#[test]
fn criterion_6_ols_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(76);
    let mut failures = Vec::new();

    for instance in 0..100 {
        let n = rng.gen_range(20..=500);
        let k = rng.gen_range(1..=8usize);
        let regressors: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();

        let spec = DesignSpec {
            response: y.clone(),
            regressors: regressors.clone(),
            column_names: (0..k).map(|j| format!("x{j}")).collect(),
            intercept: true,
            fe_dimensions: vec![],
            weights: w.clone(),
        };
        let fit = fit_ols(&spec, SeType::Hc0).unwrap();

        let x = DMatrix::from_fn(n, k + 1, |i, j| if j == 0 { 1.0 } else { regressors[j - 1][i] });
        let (beta, vcov) = brute_force_wls(&x, &DVector::from_row_slice(&y), &w);
        let scale = vcov.diagonal().amax().max(1.0);
        for j in 0..=k {
            let db = (fit.coefficients[j] - beta[j]).abs();
            if db > 1e-8 * beta[j].abs().max(1.0) {
                failures.push(format!("instance {instance}: coefficient {j} off by {db:.3e}"));
            }
            for l in 0..=k {
                let dv = (fit.robust_vcov[(j, l)] - vcov[(j, l)]).abs();
                if dv > 1e-8 * scale {
                    failures.push(format!("instance {instance}: vcov ({j},{l}) off by {dv:.3e}"));
                }
            }
        }
        if failures.len() > 5 {
            break;
        }
    }

    // Fixed-effect absorption vs. explicit dummy-variable OLS.
    for instance in 0..20 {
        let n = 600;
        let levels = rng.gen_range(50..=200usize);
        let k = rng.gen_range(1..=3usize);
        let codes: Vec<usize> = (0..n).map(|i| if i < levels { i } else { rng.gen_range(0..levels) }).collect();
        let effects: Vec<f64> = (0..levels).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let regressors: Vec<Vec<f64>> = (0..k)
            .map(|_| (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let y: Vec<f64> = (0..n)
            .map(|i| {
                effects[codes[i]]
                    + (0..k).map(|j| 0.7 * regressors[j][i]).sum::<f64>()
                    + rng.gen_range(-1.0..1.0)
            })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..2.0)).collect();

        let spec = DesignSpec {
            response: y.clone(),
            regressors: regressors.clone(),
            column_names: (0..k).map(|j| format!("x{j}")).collect(),
            intercept: false,
            fe_dimensions: vec![FeDimension {
                name: "g".into(),
                codes: codes.clone(),
                n_levels: levels,
            }],
            weights: w.clone(),
        };
        let fit = fit_ols(&spec, SeType::Hc0).unwrap();

        let x = DMatrix::from_fn(n, k + levels, |i, j| {
            if j < k {
                regressors[j][i]
            } else if codes[i] == j - k {
                1.0
            } else {
                0.0
            }
        });
        let (beta, _) = brute_force_wls(&x, &DVector::from_row_slice(&y), &w);
        for j in 0..k {
            let db = (fit.coefficients[j] - beta[j]).abs();
            if db > 1e-6 * beta[j].abs().max(1.0) {
                failures.push(format!(
                    "fe instance {instance} ({levels} levels): coefficient {j} off by {db:.3e}"
                ));
            }
        }
    }

    report("6 (OLS oracle equivalence)", failures.is_empty(), &failures.join("; "));
}

fn noiseless_dataset(cells: CellTargets) -> PanelDataset {
    // Unequal cell counts to exercise the weighting in cell recovery.
    let mut rows = Vec::new();
    for (count, treat, post, value) in [
        (3, 0u8, 0u8, cells.c0),
        (4, 0, 1, cells.c1),
        (5, 1, 0, cells.t0),
        (6, 1, 1, cells.t1),
    ] {
        rows.extend(std::iter::repeat((treat, post, value)).take(count));
    }
    dataset_from_cells(rows, "y")
}

/// Criterion 7: on noiseless constant-within-cell data the saturated fit
/// recovers the cell means exactly and exp(b4) - 1 equals the growth-rate
/// ratio minus one exactly.
#[test]
fn criterion_7_saturated_identities() {
    let mut failures = Vec::new();
    for col in 1..=5 {
        let cells = presets::table1_column(col).unwrap();
        let data = noiseless_dataset(cells);
        let level = estimate_dd(&data, OutcomeTransform::Level, &Controls::default(), SeType::Hc1)
            .unwrap();
        let b = &level.coefficients;
        let recovered = [b[0], b[0] + b[2], b[0] + b[1], b[0] + b[1] + b[2] + b[3]];
        for (got, want) in recovered.iter().zip([cells.c0, cells.c1, cells.t0, cells.t1]) {
            if (got - want).abs() > 1e-10 * want.abs().max(1.0) {
                failures.push(format!("col {col}: recovered {got:.12} vs {want:.12}"));
            }
        }

        let log = estimate_dd(&data, OutcomeTransform::Log, &Controls::default(), SeType::Hc1)
            .unwrap();
        let growth = dd_from_cells(&log.cells).unwrap();
        let identity = (log.dd_estimate.exp() - 1.0) - growth.ratio_minus_one;
        if identity.abs() > 1e-12 * growth.ratio_minus_one.abs().max(1.0) {
            failures.push(format!("col {col}: identity gap {identity:.3e}"));
        }
    }
    report("7 (saturated identities)", failures.is_empty(), &failures.join("; "));
}

/// Criterion 8: on a noisy synthetic fixture with opposing-sign cell means,
/// the level DD is positive, the log DD negative, and the fit-based
/// diagnostic reports a switch.
#[test]
fn criterion_8_empirical_pipeline() {
    let config = SimConfig {
        cell_means: CellTargets {
            c0: 48_088.0,
            c1: 45_905.0,
            t0: 30_020.0,
            t1: 28_495.0,
        },
        sigma: 3_000.0,
        n_total: 40_000,
        p_treat: 0.5,
        p_post: 0.5,
        runs: 1,
        base_seed: 78,
        bootstrap_reps: 10,
        stream: 0,
    };
    let data = generate_run(&config, 0).unwrap();
    let level = estimate_dd(&data, OutcomeTransform::Level, &Controls::default(), SeType::Hc1)
        .unwrap();
    let log = estimate_dd(&data, OutcomeTransform::Log, &Controls::default(), SeType::Hc1)
        .unwrap();
    let diagnosis = diagnose_from_fits(&level, &log, 1.0).unwrap();

    let mut failures = Vec::new();
    if level.dd_estimate <= 0.0 {
        failures.push(format!("level DD = {:.2}, want > 0", level.dd_estimate));
    }
    if log.dd_estimate >= 0.0 {
        failures.push(format!("log DD = {:.5}, want < 0", log.dd_estimate));
    }
    if diagnosis.prediction != SwitchPrediction::Switch {
        failures.push(format!("prediction = {:?}, want Switch", diagnosis.prediction));
    }
    if diagnosis.observed != Some(ObservedRelation::Discordant) {
        failures.push(format!("observed = {:?}, want Discordant", diagnosis.observed));
    }
    report("8 (empirical pipeline)", failures.is_empty(), &failures.join("; "));
}
