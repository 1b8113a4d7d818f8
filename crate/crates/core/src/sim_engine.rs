//! Monte Carlo engine: additive 2x2 data generation, many-run aggregation
//! with bootstrap standard errors, and one-dimensional parameter sweeps with
//! zero-crossing detection.
//!
//! Determinism contract: every run's RNG is seeded from `(base_seed,
//! stream, run_index)` alone, so any run is reproducible in isolation and
//! aggregate output is independent of thread count. Aggregation walks runs
//! in index order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data_model::{self, DDCellMeans, PanelDataset, PanelObservation};
use crate::sign_diagnostics::SweepAxis;
use crate::transform::OutcomeTransform;

fn default_bootstrap_reps() -> usize {
    1_000
}

/// Configuration of one simulation experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Target cell means (mu_C0, mu_C1, mu_T0, mu_T1).
    pub cell_means: CellTargets,
    /// Error standard deviation.
    pub sigma: f64,
    /// Total sample size per run.
    pub n_total: usize,
    pub p_treat: f64,
    pub p_post: f64,
    /// Number of simulation runs.
    pub runs: usize,
    pub base_seed: u64,
    /// Bootstrap resamples of the runs vector.
    #[serde(default = "default_bootstrap_reps")]
    pub bootstrap_reps: usize,
    /// Distinguishes RNG streams when many configs share a base seed
    /// (e.g. sweep grid points).
    #[serde(default)]
    pub stream: u64,
}

/// The four DGP cell means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellTargets {
    pub c0: f64,
    pub c1: f64,
    pub t0: f64,
    pub t1: f64,
}

impl CellTargets {
    pub fn as_cell_means(&self) -> DDCellMeans {
        DDCellMeans::from_means(self.c0, self.c1, self.t0, self.t1)
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error("run {run_index} (stream {stream}) produced a nonpositive outcome; log fit undefined")]
    NonPositiveOutcome { run_index: usize, stream: u64 },
}

impl SimConfig {
    /// Exact per-cell sample sizes implied by `n_total` and the proportions.
    pub fn cell_counts(&self) -> Result<[usize; 4], SimError> {
        let f = |p: f64| p * self.n_total as f64;
        let counts = [
            f((1.0 - self.p_treat) * (1.0 - self.p_post)),
            f((1.0 - self.p_treat) * self.p_post),
            f(self.p_treat * (1.0 - self.p_post)),
            f(self.p_treat * self.p_post),
        ];
        let mut out = [0usize; 4];
        for (i, c) in counts.iter().enumerate() {
            if (c - c.round()).abs() > 1e-9 {
                return Err(SimError::InvalidConfig(format!(
                    "cell sizes must be integers; got {c} for cell {i}"
                )));
            }
            out[i] = c.round() as usize;
        }
        Ok(out)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.sigma > 0.0) {
            return Err(SimError::InvalidConfig("sigma must be positive".into()));
        }
        if !(self.p_treat > 0.0 && self.p_treat < 1.0) || !(self.p_post > 0.0 && self.p_post < 1.0)
        {
            return Err(SimError::InvalidConfig(
                "proportions must lie strictly in (0, 1)".into(),
            ));
        }
        if self.runs == 0 {
            return Err(SimError::InvalidConfig("runs must be at least 1".into()));
        }
        if self.n_total == 0 {
            return Err(SimError::InvalidConfig("n_total must be positive".into()));
        }
        self.cell_counts()?;
        Ok(())
    }
}

/// Level and log DD estimates from one simulated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub alpha4_hat: f64,
    pub beta4_hat: f64,
    pub expb4m1_hat: f64,
    pub run_index: usize,
    /// Raw cell means of the simulated sample.
    pub cells: [f64; 4],
}

fn run_rng(base_seed: u64, stream: u64, run_index: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    seed[0..8].copy_from_slice(&base_seed.to_le_bytes());
    seed[8..16].copy_from_slice(&stream.to_le_bytes());
    seed[16..24].copy_from_slice(&run_index.to_le_bytes());
    ChaCha8Rng::from_seed(seed)
}

/// Generates one simulated panel: exact per-cell counts, outcome equal to the
/// cell mean plus a Normal(0, sigma) draw.
pub fn generate_run(config: &SimConfig, run_index: usize) -> Result<PanelDataset, SimError> {
    config.validate()?;
    let counts = config.cell_counts()?;
    let means = [
        config.cell_means.c0,
        config.cell_means.c1,
        config.cell_means.t0,
        config.cell_means.t1,
    ];
    let flags = [(0u8, 0u8), (0, 1), (1, 0), (1, 1)];
    let mut rng = run_rng(config.base_seed, config.stream, run_index as u64);
    let noise = Normal::new(0.0, config.sigma)
        .map_err(|e| SimError::InvalidConfig(e.to_string()))?;

    let mut observations = Vec::with_capacity(config.n_total);
    for cell in 0..4 {
        let (treat, post) = flags[cell];
        for _ in 0..counts[cell] {
            observations.push(PanelObservation {
                unit_id: None,
                time_id: None,
                outcome: means[cell] + noise.sample(&mut rng),
                treat,
                post,
                covariates: vec![],
                fe_keys: vec![],
                weight: 1.0,
            });
        }
    }
    Ok(PanelDataset {
        observations,
        covariate_names: vec![],
        fe_dimension_names: vec![],
        outcome_name: "y".into(),
    })
}

/// Saturated level and log DD estimates for one run.
///
/// With no controls the model is saturated, so the interaction coefficient is
/// the cell-mean double difference of the (transformed) outcome. This is the
/// exact OLS estimate computed without a matrix factorization.
pub fn estimate_run(config: &SimConfig, run_index: usize) -> Result<RunResult, SimError> {
    let data = generate_run(config, run_index)?;
    if data.observations.iter().any(|o| o.outcome <= 0.0) {
        return Err(SimError::NonPositiveOutcome {
            run_index,
            stream: config.stream,
        });
    }
    let level = data_model::cell_means(&data, OutcomeTransform::Level)
        .expect("cells populated by construction");
    let log = data_model::cell_means(&data, OutcomeTransform::Log)
        .expect("positivity checked above");
    let alpha4_hat = (level.mean_t1 - level.mean_t0) - (level.mean_c1 - level.mean_c0);
    let beta4_hat = (log.mean_t1 - log.mean_t0) - (log.mean_c1 - log.mean_c0);
    Ok(RunResult {
        alpha4_hat,
        beta4_hat,
        expb4m1_hat: beta4_hat.exp() - 1.0,
        run_index,
        cells: [level.mean_c0, level.mean_c1, level.mean_t0, level.mean_t1],
    })
}

/// Mean and bootstrap SE of one statistic across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AggregateStat {
    pub mean: f64,
    pub bootstrap_se: f64,
}

/// Aggregate output of a Monte Carlo experiment.
#[derive(Debug, Clone, Serialize)]
pub struct MonteCarloSummary {
    pub alpha4: AggregateStat,
    pub beta4: AggregateStat,
    pub expb4m1: AggregateStat,
    /// Mean raw cell means across runs (C0, C1, T0, T1).
    pub mean_cells: [f64; 4],
    pub runs: usize,
    pub n_total: usize,
    pub config: SimConfig,
}

/// Runs the full experiment: per-run saturated fits in parallel, aggregation
/// in run-index order, and a seeded bootstrap over the runs vector.
pub fn run_monte_carlo(config: &SimConfig) -> Result<MonteCarloSummary, SimError> {
    config.validate()?;
    let results: Vec<RunResult> = (0..config.runs)
        .into_par_iter()
        .map(|i| estimate_run(config, i))
        .collect::<Result<_, _>>()?;

    let n = results.len() as f64;
    let mean_of = |f: &dyn Fn(&RunResult) -> f64| results.iter().map(|r| f(r)).sum::<f64>() / n;
    let alpha_mean = mean_of(&|r| r.alpha4_hat);
    let beta_mean = mean_of(&|r| r.beta4_hat);
    let exp_mean = mean_of(&|r| r.expb4m1_hat);
    let mean_cells = [
        mean_of(&|r| r.cells[0]),
        mean_of(&|r| r.cells[1]),
        mean_of(&|r| r.cells[2]),
        mean_of(&|r| r.cells[3]),
    ];

    // Bootstrap SE of the mean: resample the runs vector with replacement.
    let mut rng = run_rng(config.base_seed, config.stream, u64::MAX);
    let reps = config.bootstrap_reps;
    let mut boot = vec![[0.0f64; 3]; reps];
    for b in boot.iter_mut() {
        let mut sums = [0.0f64; 3];
        for _ in 0..results.len() {
            let r = &results[rng.gen_range(0..results.len())];
            sums[0] += r.alpha4_hat;
            sums[1] += r.beta4_hat;
            sums[2] += r.expb4m1_hat;
        }
        *b = [sums[0] / n, sums[1] / n, sums[2] / n];
    }
    let boot_se = |k: usize| -> f64 {
        if reps < 2 {
            return 0.0;
        }
        let mean = boot.iter().map(|b| b[k]).sum::<f64>() / reps as f64;
        let var = boot.iter().map(|b| (b[k] - mean).powi(2)).sum::<f64>() / (reps - 1) as f64;
        var.sqrt()
    };

    Ok(MonteCarloSummary {
        alpha4: AggregateStat {
            mean: alpha_mean,
            bootstrap_se: boot_se(0),
        },
        beta4: AggregateStat {
            mean: beta_mean,
            bootstrap_se: boot_se(1),
        },
        expb4m1: AggregateStat {
            mean: exp_mean,
            bootstrap_se: boot_se(2),
        },
        mean_cells,
        runs: results.len(),
        n_total: config.n_total,
        config: config.clone(),
    })
}

/// How the per-point cell means are pinned down along a sweep.
///
/// On the baseline-gap axis `y_c0`, `delta_t` and `delta_c` must be fixed;
/// the axis value `r` sets `Y_T0 = y_c0 * (1 + r)`. On the time-effect axis
/// `y_c0`, `y_t0` and `dd_effect` must be fixed; the axis value `t` sets
/// `Y_C1 = y_c0 + t` and `Y_T1 = y_t0 + t + dd_effect`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepTemplate {
    pub y_c0: f64,
    #[serde(default)]
    pub y_t0: Option<f64>,
    #[serde(default)]
    pub delta_t: Option<f64>,
    #[serde(default)]
    pub delta_c: Option<f64>,
    /// Fixed level DD (`delta_t - delta_c`) on the time-effect axis.
    #[serde(default)]
    pub dd_effect: Option<f64>,
}

/// Configuration of a one-dimensional sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    /// Strictly increasing axis values.
    pub grid: Vec<f64>,
    pub template: SweepTemplate,
    pub sigma: f64,
    pub n_total: usize,
    pub p_treat: f64,
    pub p_post: f64,
    /// Runs per grid point.
    pub runs: usize,
    pub base_seed: u64,
    #[serde(default = "default_bootstrap_reps")]
    pub bootstrap_reps: usize,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.grid.len() < 2 {
            return Err(SimError::InvalidConfig(
                "sweep grid needs at least 2 points".into(),
            ));
        }
        if !self.grid.windows(2).all(|w| w[0] < w[1]) {
            return Err(SimError::InvalidConfig(
                "sweep grid must be strictly increasing".into(),
            ));
        }
        for (i, &value) in self.grid.iter().enumerate() {
            self.point_config(i, value)?.validate()?;
        }
        Ok(())
    }

    /// Cell means implied by one axis value.
    pub fn cells_at(&self, value: f64) -> Result<CellTargets, SimError> {
        let t = &self.template;
        match self.axis {
            SweepAxis::BaselineGapRatio => {
                let (delta_t, delta_c) = match (t.delta_t, t.delta_c) {
                    (Some(dt), Some(dc)) => (dt, dc),
                    _ => {
                        return Err(SimError::InvalidConfig(
                            "baseline-gap sweep requires delta_t and delta_c".into(),
                        ))
                    }
                };
                let t0 = t.y_c0 * (1.0 + value);
                Ok(CellTargets {
                    c0: t.y_c0,
                    c1: t.y_c0 + delta_c,
                    t0,
                    t1: t0 + delta_t,
                })
            }
            SweepAxis::TimeEffect => {
                let (y_t0, dd) = match (t.y_t0, t.dd_effect) {
                    (Some(y), Some(d)) => (y, d),
                    _ => {
                        return Err(SimError::InvalidConfig(
                            "time-effect sweep requires y_t0 and dd_effect".into(),
                        ))
                    }
                };
                Ok(CellTargets {
                    c0: t.y_c0,
                    c1: t.y_c0 + value,
                    t0: y_t0,
                    t1: y_t0 + value + dd,
                })
            }
        }
    }

    fn point_config(&self, index: usize, value: f64) -> Result<SimConfig, SimError> {
        Ok(SimConfig {
            cell_means: self.cells_at(value)?,
            sigma: self.sigma,
            n_total: self.n_total,
            p_treat: self.p_treat,
            p_post: self.p_post,
            runs: self.runs,
            base_seed: self.base_seed,
            bootstrap_reps: self.bootstrap_reps,
            stream: index as u64 + 1,
        })
    }
}

/// Aggregates at one grid point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepPoint {
    pub axis_value: f64,
    pub level_dd_mean: f64,
    pub level_dd_se: f64,
    pub log_dd_mean: f64,
    pub log_dd_se: f64,
    pub expb4m1_mean: f64,
}

/// Full sweep output with any detected zero crossing of the mean log DD.
#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    /// Axis value where the mean log DD changes sign, by linear interpolation
    /// between the bracketing grid points. `None` when the sign is constant.
    pub crossing: Option<f64>,
}

/// Runs the sweep: one Monte Carlo experiment per grid point, then scans the
/// mean log DD for a sign change.
pub fn run_sweep(config: &SweepConfig) -> Result<SweepResult, SimError> {
    config.validate()?;
    let mut points = Vec::with_capacity(config.grid.len());
    for (i, &value) in config.grid.iter().enumerate() {
        let summary = run_monte_carlo(&config.point_config(i, value)?)?;
        points.push(SweepPoint {
            axis_value: value,
            level_dd_mean: summary.alpha4.mean,
            level_dd_se: summary.alpha4.bootstrap_se,
            log_dd_mean: summary.beta4.mean,
            log_dd_se: summary.beta4.bootstrap_se,
            expb4m1_mean: summary.expb4m1.mean,
        });
    }
    Ok(SweepResult {
        crossing: detect_crossing(&points),
        points,
    })
}

fn detect_crossing(points: &[SweepPoint]) -> Option<f64> {
    for pair in points.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        if a.log_dd_mean == 0.0 {
            return Some(a.axis_value);
        }
        if a.log_dd_mean * b.log_dd_mean < 0.0 {
            let t = a.log_dd_mean / (a.log_dd_mean - b.log_dd_mean);
            return Some(a.axis_value + t * (b.axis_value - a.axis_value));
        }
    }
    None
}

/// Built-in configurations reproducing the reference tables and figures.
pub mod presets {
    use super::*;

    /// Names of all built-in presets.
    pub const ALL: [&str; 14] = [
        "table1-col1",
        "table1-col2",
        "table1-col3",
        "table1-col4",
        "table1-col5",
        "tablec1-col1",
        "tablec1-col2",
        "tablec1-col3",
        "tablec1-col4",
        "tablec1-col5",
        "fig1-left",
        "fig1-right",
        "fig2-left",
        "fig2-right",
    ];

    fn sim(cells: CellTargets, runs: usize, base_seed: u64) -> SimConfig {
        SimConfig {
            cell_means: cells,
            sigma: 0.2,
            n_total: 40_000,
            p_treat: 0.5,
            p_post: 0.5,
            runs,
            base_seed,
            bootstrap_reps: 1_000,
            stream: 0,
        }
    }

    /// The five positive-level-DD columns.
    pub fn table1_column(col: usize) -> Option<CellTargets> {
        let (c0, c1, t0, t1) = match col {
            1 => (10.0, 12.0, 12.0, 14.4),
            2 => (10.0, 15.0, 12.0, 18.0),
            3 => (20.0, 22.0, 24.0, 26.4),
            4 => (10.0, 12.0, 20.0, 23.0),
            5 => (5.0, 6.0, 10.0, 11.8),
            _ => return None,
        };
        Some(CellTargets { c0, c1, t0, t1 })
    }

    /// The five zero-level-DD columns.
    pub fn table_c1_column(col: usize) -> Option<CellTargets> {
        let (c0, c1, t0, t1) = match col {
            1 => (10.0, 12.0, 5.0, 7.0),
            2 => (10.0, 12.0, 20.0 / 3.0, 20.0 / 3.0 + 2.0),
            3 => (20.0, 24.0, 10.0, 14.0),
            4 => (10.0, 12.0, 20.0, 22.0),
            5 => (20.0, 28.0, 40.0, 48.0),
            _ => return None,
        };
        Some(CellTargets { c0, c1, t0, t1 })
    }

    fn grid(from: f64, to: f64, step: f64) -> Vec<f64> {
        let n = ((to - from) / step).round() as usize;
        (0..=n).map(|i| from + i as f64 * step).collect()
    }

    fn sweep(
        axis: SweepAxis,
        grid: Vec<f64>,
        template: SweepTemplate,
        runs: usize,
        base_seed: u64,
    ) -> SweepConfig {
        SweepConfig {
            axis,
            grid,
            template,
            sigma: 0.2,
            n_total: 40_000,
            p_treat: 0.5,
            p_post: 0.5,
            runs,
            base_seed,
            bootstrap_reps: 1_000,
        }
    }

    /// Looks up a simulation preset by name.
    pub fn simulation(name: &str, runs: usize, base_seed: u64) -> Option<SimConfig> {
        let cells = match name {
            "table1-col1" => table1_column(1),
            "table1-col2" => table1_column(2),
            "table1-col3" => table1_column(3),
            "table1-col4" => table1_column(4),
            "table1-col5" => table1_column(5),
            "tablec1-col1" => table_c1_column(1),
            "tablec1-col2" => table_c1_column(2),
            "tablec1-col3" => table_c1_column(3),
            "tablec1-col4" => table_c1_column(4),
            "tablec1-col5" => table_c1_column(5),
            _ => None,
        }?;
        Some(sim(cells, runs, base_seed))
    }

    /// Looks up a sweep preset by name.
    pub fn sweep_preset(name: &str, runs: usize, base_seed: u64) -> Option<SweepConfig> {
        match name {
            // Constant level DD of 10; gap ratio varies, crossing at 0.5.
            "fig1-left" => Some(sweep(
                SweepAxis::BaselineGapRatio,
                grid(0.1, 1.0, 0.05),
                SweepTemplate {
                    y_c0: 50.0,
                    y_t0: None,
                    delta_t: Some(30.0),
                    delta_c: Some(20.0),
                    dd_effect: None,
                },
                runs,
                base_seed,
            )),
            // Gap ratio fixed at 0.2; time effect varies, crossing at 50.
            "fig1-right" => Some(sweep(
                SweepAxis::TimeEffect,
                grid(10.0, 90.0, 5.0),
                SweepTemplate {
                    y_c0: 50.0,
                    y_t0: Some(60.0),
                    delta_t: None,
                    delta_c: None,
                    dd_effect: Some(10.0),
                },
                runs,
                base_seed,
            )),
            // Zero time effect: no crossing anywhere on the grid.
            "fig2-left" => Some(sweep(
                SweepAxis::BaselineGapRatio,
                grid(0.1, 1.0, 0.05),
                SweepTemplate {
                    y_c0: 50.0,
                    y_t0: None,
                    delta_t: Some(30.0),
                    delta_c: Some(0.0),
                    dd_effect: None,
                },
                runs,
                base_seed,
            )),
            // Zero baseline gap: no crossing anywhere on the grid.
            "fig2-right" => Some(sweep(
                SweepAxis::TimeEffect,
                grid(10.0, 90.0, 5.0),
                SweepTemplate {
                    y_c0: 50.0,
                    y_t0: Some(50.0),
                    delta_t: None,
                    delta_c: None,
                    dd_effect: Some(10.0),
                },
                runs,
                base_seed,
            )),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dd_estimators::{estimate_dd, Controls};
    use crate::ols_engine::SeType;
    use approx::assert_relative_eq;

    fn small_config() -> SimConfig {
        SimConfig {
            cell_means: CellTargets {
                c0: 10.0,
                c1: 12.0,
                t0: 20.0,
                t1: 23.0,
            },
            sigma: 0.2,
            n_total: 400,
            p_treat: 0.5,
            p_post: 0.5,
            runs: 50,
            base_seed: 17,
            bootstrap_reps: 200,
            stream: 0,
        }
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let config = small_config();
        let a = generate_run(&config, 3).unwrap();
        let b = generate_run(&config, 3).unwrap();
        assert_eq!(a.observations, b.observations);
        let c = generate_run(&config, 4).unwrap();
        assert_ne!(a.observations, c.observations);
    }

    #[test]
    fn sigma_zero_limit_recovers_cell_means() {
        let mut config = small_config();
        config.sigma = 1e-12;
        let data = generate_run(&config, 0).unwrap();
        for o in &data.observations {
            let target = match (o.treat, o.post) {
                (0, 0) => 10.0,
                (0, 1) => 12.0,
                (1, 0) => 20.0,
                _ => 23.0,
            };
            assert!((o.outcome - target).abs() < 1e-9);
        }
    }

    #[test]
    fn sample_cell_means_concentrate_on_targets() {
        // table1-col2 cells at the full reference sample size, single run.
        let config = SimConfig {
            cell_means: CellTargets {
                c0: 10.0,
                c1: 15.0,
                t0: 12.0,
                t1: 18.0,
            },
            sigma: 0.2,
            n_total: 40_000,
            p_treat: 0.5,
            p_post: 0.5,
            runs: 1,
            base_seed: 8,
            bootstrap_reps: 10,
            stream: 0,
        };
        let run = estimate_run(&config, 0).unwrap();
        let tol = 4.0 * 0.2 / (10_000f64).sqrt();
        for (got, want) in run.cells.iter().zip([10.0, 15.0, 12.0, 18.0]) {
            assert!((got - want).abs() < tol, "{got} vs {want}");
        }
    }

    #[test]
    fn estimate_run_matches_saturated_ols_fit() {
        let config = small_config();
        let run = estimate_run(&config, 2).unwrap();
        let data = generate_run(&config, 2).unwrap();
        let level = estimate_dd(
            &data,
            OutcomeTransform::Level,
            &Controls::default(),
            SeType::Hc1,
        )
        .unwrap();
        let log = estimate_dd(
            &data,
            OutcomeTransform::Log,
            &Controls::default(),
            SeType::Hc1,
        )
        .unwrap();
        assert_relative_eq!(run.alpha4_hat, level.dd_estimate, max_relative = 1e-10);
        assert_relative_eq!(run.beta4_hat, log.dd_estimate, max_relative = 1e-10);
    }

    #[test]
    fn expb4m1_identity_holds_per_run() {
        let run = estimate_run(&small_config(), 0).unwrap();
        assert_eq!(run.expb4m1_hat, run.beta4_hat.exp() - 1.0);
    }

    #[test]
    fn aggregates_are_reproducible_and_thread_independent() {
        let config = small_config();
        let a = run_monte_carlo(&config).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| run_monte_carlo(&config)).unwrap();
        assert_eq!(a.alpha4.mean.to_bits(), b.alpha4.mean.to_bits());
        assert_eq!(a.beta4.bootstrap_se.to_bits(), b.beta4.bootstrap_se.to_bits());
    }

    #[test]
    fn single_run_aggregate_has_zero_bootstrap_se() {
        let mut config = small_config();
        config.runs = 1;
        let summary = run_monte_carlo(&config).unwrap();
        // Every resample of a single run is identical; only rounding in the
        // bootstrap mean survives.
        assert!(summary.alpha4.bootstrap_se < 1e-12);
        let run = estimate_run(&config, 0).unwrap();
        assert_eq!(summary.alpha4.mean, run.alpha4_hat);
    }

    #[test]
    fn mean_alpha4_converges_to_target() {
        let config = small_config();
        let summary = run_monte_carlo(&config).unwrap();
        // Target (23 - 20) - (12 - 10) = 1; MC SE = sigma * 2 / sqrt(n_cell * runs).
        let mc_se = 0.2 * 2.0 / (100.0f64 * 50.0).sqrt();
        assert!((summary.alpha4.mean - 1.0).abs() < 4.0 * mc_se);
    }

    #[test]
    fn nonpositive_outcome_identifies_the_run() {
        let config = SimConfig {
            cell_means: CellTargets {
                c0: 0.1,
                c1: 0.1,
                t0: 0.1,
                t1: 0.1,
            },
            sigma: 1.0,
            n_total: 40,
            p_treat: 0.5,
            p_post: 0.5,
            runs: 3,
            base_seed: 1,
            bootstrap_reps: 10,
            stream: 0,
        };
        match run_monte_carlo(&config) {
            Err(SimError::NonPositiveOutcome { .. }) => {}
            other => panic!("expected NonPositiveOutcome, got {other:?}"),
        }
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut config = small_config();
        config.runs = 0;
        assert!(config.validate().is_err());
        let mut config = small_config();
        config.p_treat = 0.3; // 400 * 0.3 * 0.5 = 60 exact; push to non-integer
        config.n_total = 401;
        assert!(config.validate().is_err());
    }

    #[test]
    fn sweep_cells_follow_figure_notes() {
        let sweep = presets::sweep_preset("fig1-left", 10, 1).unwrap();
        let cells = sweep.cells_at(0.2).unwrap();
        assert_relative_eq!(cells.c0, 50.0);
        assert_relative_eq!(cells.c1, 70.0);
        assert_relative_eq!(cells.t0, 60.0);
        assert_relative_eq!(cells.t1, 90.0);

        let sweep = presets::sweep_preset("fig1-right", 10, 1).unwrap();
        let cells = sweep.cells_at(20.0).unwrap();
        assert_relative_eq!(cells.c1, 70.0);
        assert_relative_eq!(cells.t0, 60.0);
        assert_relative_eq!(cells.t1, 90.0);
    }

    #[test]
    fn crossing_detection_interpolates_linearly() {
        let mk = |axis_value: f64, log_dd_mean: f64| SweepPoint {
            axis_value,
            level_dd_mean: 10.0,
            level_dd_se: 0.0,
            log_dd_mean,
            log_dd_se: 0.0,
            expb4m1_mean: 0.0,
        };
        let points = vec![mk(0.0, 2.0), mk(1.0, 1.0), mk(2.0, -1.0)];
        let crossing = detect_crossing(&points).unwrap();
        assert_relative_eq!(crossing, 1.5, epsilon = 1e-12);
        assert!(detect_crossing(&[mk(0.0, 1.0), mk(1.0, 2.0)]).is_none());
    }

    #[test]
    fn small_scale_sweep_brackets_the_analytic_crossing() {
        let mut sweep = presets::sweep_preset("fig1-left", 20, 33).unwrap();
        sweep.n_total = 4_000;
        sweep.bootstrap_reps = 50;
        let result = run_sweep(&sweep).unwrap();
        let crossing = result.crossing.expect("crossing should exist");
        assert!((crossing - 0.5).abs() < 0.05, "crossing = {crossing}");
        for p in &result.points {
            assert!((p.level_dd_mean - 10.0).abs() < 0.2);
        }
    }
}
