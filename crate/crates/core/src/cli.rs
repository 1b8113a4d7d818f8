//! Command-line interface for the `dd-signal` binary.
//!
//! Five subcommands cover the workflow: `estimate` fits level/log DD models
//! on a CSV extract, `diagnose` classifies a design against the sign-switch
//! condition, `simulate` and `sweep` drive the Monte Carlo engine, and
//! `balance` produces a covariate balance table.
//!
//! Every invocation that writes files also writes a run manifest recording
//! the command, a SHA-256 digest of the resolved configuration, the seed,
//! tool version, timestamp, and output paths, so any artifact can be traced
//! back to the exact run that produced it.
//!
//! Exit codes: 2 for configuration problems, 3 for data problems, 4 for
//! estimation failures.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::data_model::{self, ColumnMapping, DDCellMeans, DataError, IngestReport, PanelDataset};
use crate::dd_estimators::{
    self, balance_table, dd_from_cells, estimate_dd, stars, Controls, DDError, DDFit,
};
use crate::ols_engine::{OlsError, SeType};
use crate::sign_diagnostics::{diagnose_from_cells, diagnose_from_fits, DiagnosticsError};
use crate::sim_engine::{presets, run_monte_carlo, run_sweep, SimConfig, SimError, SweepConfig};
use crate::transform::OutcomeTransform;

/// Difference-in-differences functional-form toolkit.
#[derive(Debug, Parser)]
#[command(name = "dd-signal", version, about)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub global: GlobalOpts,
}

/// Options shared by every subcommand.
#[derive(Debug, Args)]
pub struct GlobalOpts {
    /// Base RNG seed for anything stochastic.
    #[arg(long, global = true, default_value_t = 20_240_001)]
    pub seed: u64,
    /// Worker thread count (defaults to the rayon default).
    #[arg(long, global = true, env = "DD_SIGNAL_THREADS")]
    pub threads: Option<usize>,
    /// Directory for output files and manifests.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Output file format.
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Both)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    fn wants_csv(self) -> bool {
        matches!(self, OutputFormat::Csv | OutputFormat::Both)
    }
    fn wants_json(self) -> bool {
        matches!(self, OutputFormat::Json | OutputFormat::Both)
    }
}

/// Outcome transform selector, including the paired `both` mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TransformArg {
    Level,
    Log,
    Ihs,
    /// Level and log fitted on a common sample: rows with nonpositive
    /// outcomes are dropped from both fits and the drop count reported.
    Both,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit DD interaction models on a CSV extract.
    Estimate(EstimateArgs),
    /// Classify a 2x2 design against the sign-switch condition.
    Diagnose(DiagnoseArgs),
    /// Run a Monte Carlo experiment at fixed cell means.
    Simulate(SimulateArgs),
    /// Sweep one design parameter and locate the log-DD zero crossing.
    Sweep(SweepArgs),
    /// Covariate balance table with DD p-values.
    Balance(BalanceArgs),
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Input CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Column-mapping JSON file.
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long, value_enum, default_value_t = TransformArg::Both)]
    pub transform: TransformArg,
    /// Robust standard-error flavor (hc0 or hc1).
    #[arg(long, default_value = "hc1")]
    pub se: SeType,
}

#[derive(Debug, Args)]
pub struct DiagnoseArgs {
    /// Inline cell means `c0,c1,t0,t1` (skips data ingestion).
    #[arg(long, conflicts_with_all = ["data", "mapping"])]
    pub cells: Option<String>,
    /// Input CSV file (fit-based diagnosis).
    #[arg(long, requires = "mapping")]
    pub data: Option<PathBuf>,
    /// Column-mapping JSON file.
    #[arg(long, requires = "data")]
    pub mapping: Option<PathBuf>,
    /// Relative boundary tolerance for inline cells.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
    /// Boundary band width in standard errors for fit-based diagnosis.
    #[arg(long, default_value_t = 1.0)]
    pub se_band: f64,
    #[arg(long, default_value = "hc1")]
    pub se: SeType,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in configuration name (e.g. `table1-col2`).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Simulation configuration JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Simulation runs (overrides preset/config).
    #[arg(long)]
    pub runs: Option<usize>,
    /// Run every table preset and emit one combined table.
    #[arg(long, conflicts_with_all = ["preset", "config"])]
    pub paper_tables: bool,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Built-in sweep name (e.g. `fig1-left`).
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    /// Sweep configuration JSON file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Runs per grid point (overrides preset/config).
    #[arg(long)]
    pub runs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    /// Input CSV file.
    #[arg(long)]
    pub data: PathBuf,
    /// Column-mapping JSON file; its `covariates` list is tabulated.
    #[arg(long)]
    pub mapping: PathBuf,
    #[arg(long, default_value = "hc1")]
    pub se: SeType,
}

/// CLI failure with its process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, unknown presets, malformed configuration files. Exit 2.
    Config(String),
    /// Unreadable or invalid input data. Exit 3.
    Data(String),
    /// A well-posed model that could not be estimated. Exit 4.
    Estimation(String),
    /// Failure writing outputs. Exit 1.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Estimation(_) => 4,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Config(m)
            | CliError::Data(m)
            | CliError::Estimation(m)
            | CliError::Io(m) => m,
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<OlsError> for CliError {
    fn from(e: OlsError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

impl From<DDError> for CliError {
    fn from(e: DDError) -> Self {
        match e {
            DDError::Data(d) => d.into(),
            other => CliError::Estimation(other.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidConfig(_) => CliError::Config(e.to_string()),
            SimError::NonPositiveOutcome { .. } => CliError::Estimation(e.to_string()),
        }
    }
}

impl From<DiagnosticsError> for CliError {
    fn from(e: DiagnosticsError) -> Self {
        CliError::Estimation(e.to_string())
    }
}

/// Parses arguments, dispatches, prints errors, and returns the exit code.
pub fn main_entry() -> i32 {
    let cli = Cli::parse();
    if let Some(threads) = cli.global.threads {
        // Ignore the error if a global pool already exists (e.g. under test).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global();
    }
    match dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Estimate(args) => run_estimate(&cli.global, args),
        Command::Diagnose(args) => run_diagnose(&cli.global, args),
        Command::Simulate(args) => run_simulate(&cli.global, args),
        Command::Sweep(args) => run_sweep_cmd(&cli.global, args),
        Command::Balance(args) => run_balance(&cli.global, args),
    }
}

// ---------------------------------------------------------------------------
// Output plumbing
// ---------------------------------------------------------------------------

/// Manifest written next to every output set.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    /// SHA-256 of the resolved configuration JSON.
    pub config_digest: String,
    pub seed: u64,
    pub tool_version: String,
    /// RFC 3339 UTC timestamp.
    pub timestamp: String,
    pub outputs: Vec<String>,
}

fn config_digest<T: Serialize>(config: &T) -> Result<String, CliError> {
    let bytes = serde_json::to_vec(config)
        .map_err(|e| CliError::Config(format!("cannot serialize configuration: {e}")))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

struct OutputSet<'a> {
    global: &'a GlobalOpts,
    command: &'a str,
    digest: String,
    written: Vec<PathBuf>,
}

impl<'a> OutputSet<'a> {
    fn new<T: Serialize>(
        global: &'a GlobalOpts,
        command: &'a str,
        config: &T,
    ) -> Result<Self, CliError> {
        std::fs::create_dir_all(&global.out_dir)
            .map_err(|e| CliError::Io(format!("cannot create {:?}: {e}", global.out_dir)))?;
        Ok(Self {
            global,
            command,
            digest: config_digest(config)?,
            written: Vec::new(),
        })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.global.out_dir.join(name)
    }

    fn write_json<T: Serialize>(&mut self, value: &T) -> Result<(), CliError> {
        if !self.global.format.wants_json() {
            return Ok(());
        }
        let path = self.path(&format!("{}.json", self.command));
        let text = serde_json::to_string_pretty(value)
            .map_err(|e| CliError::Io(format!("cannot serialize output: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {path:?}: {e}")))?;
        self.written.push(path);
        Ok(())
    }

    fn write_csv(&mut self, header: &[&str], rows: &[Vec<String>]) -> Result<(), CliError> {
        if !self.global.format.wants_csv() {
            return Ok(());
        }
        let path = self.path(&format!("{}.csv", self.command));
        let mut writer = csv::Writer::from_path(&path)
            .map_err(|e| CliError::Io(format!("cannot write {path:?}: {e}")))?;
        writer
            .write_record(header)
            .and_then(|()| rows.iter().try_for_each(|r| writer.write_record(r)))
            .and_then(|()| writer.flush().map_err(csv::Error::from))
            .map_err(|e| CliError::Io(format!("cannot write {path:?}: {e}")))?;
        self.written.push(path);
        Ok(())
    }

    fn finish(mut self) -> Result<(), CliError> {
        let manifest = RunManifest {
            command: self.command.to_string(),
            config_digest: self.digest.clone(),
            seed: self.global.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: chrono::Utc::now().to_rfc3339(),
            outputs: self
                .written
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
        };
        let path = self.path(&format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::Io(format!("cannot serialize manifest: {e}")))?;
        std::fs::write(&path, text + "\n")
            .map_err(|e| CliError::Io(format!("cannot write {path:?}: {e}")))?;
        self.written.push(path);
        Ok(())
    }
}

fn load_mapping(path: &Path) -> Result<ColumnMapping, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read mapping {path:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid mapping {path:?}: {e}")))
}

fn ingest(data: &Path, mapping: &ColumnMapping) -> Result<(PanelDataset, IngestReport), CliError> {
    Ok(data_model::ingest_csv(data, mapping)?)
}

fn fmt4(x: f64) -> String {
    format!("{x:.4}")
}

fn fmt_opt_p(p: Option<f64>) -> String {
    p.map(|v| format!("{v:.4}")).unwrap_or_default()
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

/// Full-precision JSON payload of an `estimate` invocation.
#[derive(Debug, Serialize)]
struct EstimateOutput {
    fits: Vec<DDFit>,
    /// Rows removed from every fit because the outcome was nonpositive
    /// (only in `--transform both` mode).
    dropped_nonpositive: usize,
    rows_used: usize,
    ingest: IngestReport,
}

fn run_estimate(global: &GlobalOpts, args: &EstimateArgs) -> Result<(), CliError> {
    let mapping = load_mapping(&args.mapping)?;
    let (dataset, ingest_report) = ingest(&args.data, &mapping)?;
    let controls = Controls {
        covariates: mapping.covariates.clone(),
        absorb: mapping.fixed_effects.clone(),
    };

    let (sample, dropped) = match args.transform {
        TransformArg::Both => drop_nonpositive(&dataset),
        _ => (dataset.clone(), 0),
    };
    let transforms: &[OutcomeTransform] = match args.transform {
        TransformArg::Level => &[OutcomeTransform::Level],
        TransformArg::Log => &[OutcomeTransform::Log],
        TransformArg::Ihs => &[OutcomeTransform::Ihs],
        TransformArg::Both => &[OutcomeTransform::Level, OutcomeTransform::Log],
    };
    let fits = transforms
        .iter()
        .map(|&t| estimate_dd(&sample, t, &controls, args.se))
        .collect::<Result<Vec<_>, _>>()?;

    let output = EstimateOutput {
        rows_used: sample.n_obs(),
        dropped_nonpositive: dropped,
        fits,
        ingest: ingest_report,
    };

    let config = serde_json::json!({
        "data": args.data.display().to_string(),
        "mapping": mapping,
        "transform": format!("{:?}", args.transform).to_lowercase(),
        "se": args.se,
    });
    let mut out = OutputSet::new(global, "estimate", &config)?;
    out.write_json(&output)?;
    out.write_csv(
        &["transform", "term", "estimate", "robust_se", "p_value", "stars"],
        &estimate_csv_rows(&output.fits),
    )?;
    print_estimate(&output);
    out.finish()
}

/// Drops rows with nonpositive outcomes so level and log share a sample.
fn drop_nonpositive(data: &PanelDataset) -> (PanelDataset, usize) {
    let mut kept = data.clone();
    let before = kept.observations.len();
    kept.observations.retain(|o| o.outcome > 0.0);
    let dropped = before - kept.observations.len();
    (kept, dropped)
}

fn estimate_csv_rows(fits: &[DDFit]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    for fit in fits {
        for (j, name) in fit.term_names.iter().enumerate() {
            let p = dd_estimators::normal_p_value(fit.coefficients[j], fit.robust_ses[j]);
            rows.push(vec![
                fit.transform.to_string(),
                name.clone(),
                fmt4(fit.coefficients[j]),
                fmt4(fit.robust_ses[j]),
                fmt_opt_p(p),
                stars(p).to_string(),
            ]);
        }
        if let Some((est, se)) = fit.exp_minus_one {
            let p = dd_estimators::normal_p_value(est, se);
            rows.push(vec![
                fit.transform.to_string(),
                "exp(dd)-1".into(),
                fmt4(est),
                fmt4(se),
                fmt_opt_p(p),
                stars(p).to_string(),
            ]);
        }
    }
    rows
}

fn print_estimate(output: &EstimateOutput) {
    for fit in &output.fits {
        let p = fit.dd_p_value();
        println!(
            "{}: dd = {:.4} (se {:.4}){}  n = {}",
            fit.transform,
            fit.dd_estimate,
            fit.dd_se,
            stars(p),
            fit.n_obs
        );
        if let Some((est, se)) = fit.exp_minus_one {
            println!("  exp(dd)-1 = {:.4} (se {:.4})", est, se);
        }
    }
    if output.dropped_nonpositive > 0 {
        println!(
            "dropped {} rows with nonpositive outcomes from both fits (common n = {})",
            output.dropped_nonpositive, output.rows_used
        );
    }
}

// ---------------------------------------------------------------------------
// diagnose
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct DiagnoseOutput {
    report: crate::sign_diagnostics::SignSwitchReport,
    /// Growth-rate decomposition; absent when a pre-period mean is zero.
    growth: Option<crate::dd_estimators::GrowthDecomposition>,
    cells: DDCellMeans,
}

fn parse_cells(text: &str) -> Result<DDCellMeans, CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 4 {
        return Err(CliError::Config(format!(
            "--cells expects 4 comma-separated means, got {}",
            parts.len()
        )));
    }
    let mut values = [0.0f64; 4];
    for (v, p) in values.iter_mut().zip(&parts) {
        *v = p
            .parse()
            .map_err(|_| CliError::Config(format!("invalid cell mean `{p}`")))?;
    }
    Ok(DDCellMeans::from_means(values[0], values[1], values[2], values[3]))
}

fn run_diagnose(global: &GlobalOpts, args: &DiagnoseArgs) -> Result<(), CliError> {
    let (report, cells) = if let Some(text) = &args.cells {
        let cells = parse_cells(text)?;
        (diagnose_from_cells(&cells, args.tol), cells)
    } else if let (Some(data), Some(mapping_path)) = (&args.data, &args.mapping) {
        let mapping = load_mapping(mapping_path)?;
        let (dataset, _) = ingest(data, &mapping)?;
        let (sample, _) = drop_nonpositive(&dataset);
        let controls = Controls {
            covariates: mapping.covariates.clone(),
            absorb: mapping.fixed_effects.clone(),
        };
        let level = estimate_dd(&sample, OutcomeTransform::Level, &controls, args.se)?;
        let log = estimate_dd(&sample, OutcomeTransform::Log, &controls, args.se)?;
        let cells = level.cells;
        (diagnose_from_fits(&level, &log, args.se_band)?, cells)
    } else {
        return Err(CliError::Config(
            "diagnose needs either --cells or --data with --mapping".into(),
        ));
    };

    let growth = dd_from_cells(&cells).ok();
    let output = DiagnoseOutput {
        report,
        growth,
        cells,
    };

    let config = serde_json::json!({
        "cells": args.cells,
        "data": args.data.as_ref().map(|p| p.display().to_string()),
        "tol": args.tol,
        "se_band": args.se_band,
    });
    let mut out = OutputSet::new(global, "diagnose", &config)?;
    out.write_json(&output)?;
    let r = &output.report;
    out.write_csv(
        &[
            "prediction", "level_dd", "time_effect", "baseline_gap_ratio", "threshold", "margin",
        ],
        &[vec![
            serde_variant_name(&r.prediction),
            fmt4(r.level_dd),
            fmt4(r.time_effect),
            r.baseline_gap_ratio.map(fmt4).unwrap_or_default(),
            r.threshold.map(fmt4).unwrap_or_default(),
            r.margin.map(fmt4).unwrap_or_default(),
        ]],
    )?;
    println!("{}", render_diagnosis(&output));
    out.finish()
}

fn serde_variant_name<T: Serialize>(value: &T) -> String {
    serde_json::to_value(value)
        .ok()
        .and_then(|v| v.as_str().map(str::to_owned))
        .unwrap_or_default()
}

/// Renders the report with the two equivalent statements of the condition:
/// the threshold form on the level DD and the growth-rate form.
fn render_diagnosis(output: &DiagnoseOutput) -> String {
    let r = &output.report;
    let mut text = String::new();
    let _ = writeln!(text, "prediction: {}", serde_variant_name(&r.prediction));
    if let Some(reason) = &r.degenerate_reason {
        let _ = writeln!(text, "  reason: {reason}");
    }
    let _ = writeln!(
        text,
        "level dd = {:.6}  time effect = {:.6}  baseline gap ratio = {}",
        r.level_dd,
        r.time_effect,
        r.baseline_gap_ratio
            .map(|g| format!("{g:.6}"))
            .unwrap_or_else(|| "undefined".into())
    );
    if let (Some(threshold), Some(margin)) = (r.threshold, r.margin) {
        let boundary = r.time_effect
            * r.baseline_gap_ratio.unwrap_or(f64::NAN);
        let _ = writeln!(
            text,
            "threshold form: switch iff level dd lies strictly between 0 and {boundary:.6} \
             (|boundary| = {threshold:.6}, margin = {margin:.6})"
        );
    }
    if let Some(g) = &output.growth {
        let _ = writeln!(
            text,
            "growth form: g_T/g_C - 1 = {:.6} vs level dd = {:.6}; signs {}",
            g.ratio_minus_one,
            g.level_dd,
            if g.ratio_minus_one == 0.0 || g.level_dd == 0.0 {
                "include an exact zero"
            } else if g.ratio_minus_one.signum() == g.level_dd.signum() {
                "agree"
            } else {
                "disagree"
            }
        );
    }
    if let Some(observed) = &r.observed {
        let _ = writeln!(text, "observed fits: {}", serde_variant_name(observed));
    }
    text.trim_end().to_string()
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize)]
struct SimulateOutput {
    results: Vec<NamedSummary>,
}

#[derive(Debug, Serialize)]
struct NamedSummary {
    name: String,
    #[serde(flatten)]
    summary: crate::sim_engine::MonteCarloSummary,
}

fn load_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read config {path:?}: {e}")))?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("invalid config {path:?}: {e}")))
}

fn run_simulate(global: &GlobalOpts, args: &SimulateArgs) -> Result<(), CliError> {
    let mut configs: Vec<(String, SimConfig)> = Vec::new();
    if args.paper_tables {
        let runs = args.runs.unwrap_or(10_000);
        for name in presets::ALL.iter().filter(|n| n.starts_with("table")) {
            let config = presets::simulation(name, runs, global.seed)
                .expect("table presets are simulation presets");
            configs.push((name.to_string(), config));
        }
    } else if let Some(name) = &args.preset {
        let runs = args.runs.unwrap_or(10_000);
        let config = presets::simulation(name, runs, global.seed).ok_or_else(|| {
            CliError::Config(format!(
                "unknown simulation preset `{name}`; available: {}",
                presets::ALL.join(", ")
            ))
        })?;
        configs.push((name.clone(), config));
    } else if let Some(path) = &args.config {
        let mut config: SimConfig = load_config(path)?;
        if let Some(runs) = args.runs {
            config.runs = runs;
        }
        configs.push(("custom".into(), config));
    } else {
        return Err(CliError::Config(
            "simulate needs --preset, --config, or --paper-tables".into(),
        ));
    }

    // Distinguish RNG streams across presets sharing one base seed.
    for (i, (_, config)) in configs.iter_mut().enumerate() {
        if config.stream == 0 {
            config.stream = 1_000 + i as u64;
        }
        config.validate()?;
    }

    let mut results = Vec::with_capacity(configs.len());
    for (name, config) in &configs {
        let summary = run_monte_carlo(config)?;
        println!(
            "{name}: mean a4 = {:.4} (se {:.4})  mean exp(b4)-1 = {:.4} (se {:.4})  runs = {}",
            summary.alpha4.mean,
            summary.alpha4.bootstrap_se,
            summary.expb4m1.mean,
            summary.expb4m1.bootstrap_se,
            summary.runs
        );
        results.push(NamedSummary {
            name: name.clone(),
            summary,
        });
    }

    let output = SimulateOutput { results };
    let config_json: Vec<&SimConfig> = configs.iter().map(|(_, c)| c).collect();
    let mut out = OutputSet::new(global, "simulate", &config_json)?;
    out.write_json(&output)?;
    out.write_csv(
        &[
            "name", "alpha4_mean", "alpha4_se", "beta4_mean", "beta4_se", "expb4m1_mean",
            "expb4m1_se", "runs", "n_total",
        ],
        &output
            .results
            .iter()
            .map(|r| {
                vec![
                    r.name.clone(),
                    fmt4(r.summary.alpha4.mean),
                    fmt4(r.summary.alpha4.bootstrap_se),
                    fmt4(r.summary.beta4.mean),
                    fmt4(r.summary.beta4.bootstrap_se),
                    fmt4(r.summary.expb4m1.mean),
                    fmt4(r.summary.expb4m1.bootstrap_se),
                    r.summary.runs.to_string(),
                    r.summary.n_total.to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    out.finish()
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

fn run_sweep_cmd(global: &GlobalOpts, args: &SweepArgs) -> Result<(), CliError> {
    let mut config: SweepConfig = if let Some(name) = &args.preset {
        presets::sweep_preset(name, args.runs.unwrap_or(10_000), global.seed).ok_or_else(|| {
            CliError::Config(format!(
                "unknown sweep preset `{name}`; available: {}",
                presets::ALL.join(", ")
            ))
        })?
    } else if let Some(path) = &args.config {
        load_config(path)?
    } else {
        return Err(CliError::Config("sweep needs --preset or --config".into()));
    };
    if let Some(runs) = args.runs {
        config.runs = runs;
    }
    config.validate()?;

    let result = run_sweep(&config)?;
    match result.crossing {
        Some(x) => println!("log dd crosses zero at axis value {x:.4}"),
        None => println!("log dd does not change sign on the grid"),
    }

    let mut out = OutputSet::new(global, "sweep", &config)?;
    out.write_json(&result)?;
    out.write_csv(
        &[
            "axis_value", "level_dd_mean", "level_dd_se", "log_dd_mean", "log_dd_se",
            "expb4m1_mean",
        ],
        &result
            .points
            .iter()
            .map(|p| {
                vec![
                    fmt4(p.axis_value),
                    fmt4(p.level_dd_mean),
                    fmt4(p.level_dd_se),
                    format!("{:.6}", p.log_dd_mean),
                    format!("{:.6}", p.log_dd_se),
                    format!("{:.6}", p.expb4m1_mean),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    out.finish()
}

// ---------------------------------------------------------------------------
// balance
// ---------------------------------------------------------------------------

fn run_balance(global: &GlobalOpts, args: &BalanceArgs) -> Result<(), CliError> {
    let mapping = load_mapping(&args.mapping)?;
    if mapping.covariates.is_empty() {
        return Err(CliError::Config(
            "balance requires a mapping with a nonempty `covariates` list".into(),
        ));
    }
    let (dataset, _) = ingest(&args.data, &mapping)?;
    let rows = balance_table(&dataset, &mapping.covariates, args.se)?;

    for row in &rows {
        println!(
            "{}: control {:.4} -> {:.4}, treated {:.4} -> {:.4}, dd p = {}{}",
            row.covariate,
            row.control_pre_mean,
            row.control_post_mean,
            row.treated_pre_mean,
            row.treated_post_mean,
            fmt_opt_p(row.p_dd),
            if row.degenerate { " (degenerate)" } else { "" }
        );
    }

    let config = serde_json::json!({
        "data": args.data.display().to_string(),
        "mapping": mapping,
        "se": args.se,
    });
    let mut out = OutputSet::new(global, "balance", &config)?;
    out.write_json(&rows)?;
    out.write_csv(
        &[
            "covariate",
            "control_pre",
            "control_post",
            "control_p_diff",
            "treated_pre",
            "treated_post",
            "treated_p_diff",
            "p_dd",
            "stars",
        ],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.covariate.clone(),
                    fmt4(r.control_pre_mean),
                    fmt4(r.control_post_mean),
                    fmt_opt_p(r.control_p_diff),
                    fmt4(r.treated_pre_mean),
                    fmt4(r.treated_post_mean),
                    fmt_opt_p(r.treated_p_diff),
                    fmt_opt_p(r.p_dd),
                    stars(r.p_dd).to_string(),
                ]
            })
            .collect::<Vec<_>>(),
    )?;
    out.finish()
}
