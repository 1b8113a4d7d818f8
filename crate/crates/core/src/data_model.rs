//! Panel data representation, validation, and CSV ingestion.
//!
//! A [`PanelDataset`] is an immutable collection of unit-time rows carrying
//! the outcome, the treatment and post-period indicators, optional covariates
//! and fixed-effect keys, and a sampling weight. Ingestion is CSV-only
//! (RFC 4180 quoting), driven by a [`ColumnMapping`] supplied as JSON.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::transform::OutcomeTransform;

/// One of the four cells of the 2x2 design, named by (group, period).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Cell {
    /// Control group, pre period.
    C0,
    /// Control group, post period.
    C1,
    /// Treated group, pre period.
    T0,
    /// Treated group, post period.
    T1,
}

impl Cell {
    pub const ALL: [Cell; 4] = [Cell::C0, Cell::C1, Cell::T0, Cell::T1];

    pub fn of(treat: u8, post: u8) -> Cell {
        match (treat, post) {
            (0, 0) => Cell::C0,
            (0, _) => Cell::C1,
            (_, 0) => Cell::T0,
            _ => Cell::T1,
        }
    }
}

impl fmt::Display for Cell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Cell::C0 => write!(f, "C0"),
            Cell::C1 => write!(f, "C1"),
            Cell::T0 => write!(f, "T0"),
            Cell::T1 => write!(f, "T1"),
        }
    }
}

/// One unit-time row of the panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelObservation {
    pub unit_id: Option<String>,
    pub time_id: Option<String>,
    pub outcome: f64,
    /// Treatment-group indicator, exactly 0 or 1.
    pub treat: u8,
    /// Post-period indicator, exactly 0 or 1.
    pub post: u8,
    pub covariates: Vec<f64>,
    pub fe_keys: Vec<String>,
    /// Sampling weight, strictly positive. Default 1.
    pub weight: f64,
}

impl PanelObservation {
    pub fn cell(&self) -> Cell {
        Cell::of(self.treat, self.post)
    }
}

/// An immutable panel dataset with uniform covariate and fixed-effect arity.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PanelDataset {
    pub observations: Vec<PanelObservation>,
    pub covariate_names: Vec<String>,
    pub fe_dimension_names: Vec<String>,
    pub outcome_name: String,
}

/// Errors raised by ingestion and cell-mean computation.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("mapped column `{0}` is missing from the input header")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: cannot parse `{value}`")]
    ParseFailure {
        row: usize,
        column: String,
        value: String,
    },
    #[error("empty (treat, post) cell(s): {}", format_cells(.0))]
    EmptyCell(Vec<Cell>),
    #[error("{count} outcome value(s) are not strictly positive; log transform undefined")]
    NonPositiveOutcome { count: usize },
    #[error("observation {row}: {reason}")]
    InvalidObservation { row: usize, reason: String },
    #[error("i/o error reading `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn format_cells(cells: &[Cell]) -> String {
    cells
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

impl PanelDataset {
    /// Validates arity, indicator coding, outcome finiteness, and weights.
    pub fn validate(&self) -> Result<(), DataError> {
        let n_cov = self.covariate_names.len();
        let n_fe = self.fe_dimension_names.len();
        for (i, obs) in self.observations.iter().enumerate() {
            if obs.treat > 1 || obs.post > 1 {
                return Err(DataError::InvalidObservation {
                    row: i,
                    reason: "treat and post must be exactly 0 or 1".into(),
                });
            }
            if !obs.outcome.is_finite() {
                return Err(DataError::InvalidObservation {
                    row: i,
                    reason: format!("outcome {} is not finite", obs.outcome),
                });
            }
            if obs.covariates.len() != n_cov {
                return Err(DataError::InvalidObservation {
                    row: i,
                    reason: format!(
                        "covariate arity {} != declared {}",
                        obs.covariates.len(),
                        n_cov
                    ),
                });
            }
            if obs.fe_keys.len() != n_fe {
                return Err(DataError::InvalidObservation {
                    row: i,
                    reason: format!("fe arity {} != declared {}", obs.fe_keys.len(), n_fe),
                });
            }
            if !(obs.weight > 0.0) || !obs.weight.is_finite() {
                return Err(DataError::InvalidObservation {
                    row: i,
                    reason: format!("weight {} must be a positive real", obs.weight),
                });
            }
        }
        Ok(())
    }

    /// Cells of the 2x2 design with zero observations.
    pub fn empty_cells(&self) -> Vec<Cell> {
        let mut counts = [0usize; 4];
        for obs in &self.observations {
            counts[cell_index(obs.cell())] += 1;
        }
        Cell::ALL
            .into_iter()
            .filter(|c| counts[cell_index(*c)] == 0)
            .collect()
    }

    pub fn n_obs(&self) -> usize {
        self.observations.len()
    }
}

fn cell_index(cell: Cell) -> usize {
    match cell {
        Cell::C0 => 0,
        Cell::C1 => 1,
        Cell::T0 => 2,
        Cell::T1 => 3,
    }
}

/// The four weighted cell means of the 2x2 design, plus observation counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DDCellMeans {
    pub mean_c0: f64,
    pub mean_c1: f64,
    pub mean_t0: f64,
    pub mean_t1: f64,
    pub n_c0: usize,
    pub n_c1: usize,
    pub n_t0: usize,
    pub n_t1: usize,
    pub transform: OutcomeTransform,
}

impl DDCellMeans {
    /// Builds cell means directly from four values (counts recorded as zero).
    /// Used for inline diagnostics and simulation targets.
    pub fn from_means(c0: f64, c1: f64, t0: f64, t1: f64) -> DDCellMeans {
        DDCellMeans {
            mean_c0: c0,
            mean_c1: c1,
            mean_t0: t0,
            mean_t1: t1,
            n_c0: 0,
            n_c1: 0,
            n_t0: 0,
            n_t1: 0,
            transform: OutcomeTransform::Level,
        }
    }

    pub fn mean(&self, cell: Cell) -> f64 {
        match cell {
            Cell::C0 => self.mean_c0,
            Cell::C1 => self.mean_c1,
            Cell::T0 => self.mean_t0,
            Cell::T1 => self.mean_t1,
        }
    }
}

/// Weighted per-cell means of the (optionally transformed) outcome.
pub fn cell_means(
    data: &PanelDataset,
    transform: OutcomeTransform,
) -> Result<DDCellMeans, DataError> {
    let empty = data.empty_cells();
    if !empty.is_empty() {
        return Err(DataError::EmptyCell(empty));
    }
    if transform.requires_positive() {
        let bad = data
            .observations
            .iter()
            .filter(|o| o.outcome <= 0.0)
            .count();
        if bad > 0 {
            return Err(DataError::NonPositiveOutcome { count: bad });
        }
    }
    let mut wsum = [0.0f64; 4];
    let mut ysum = [0.0f64; 4];
    let mut count = [0usize; 4];
    for obs in &data.observations {
        let i = cell_index(obs.cell());
        wsum[i] += obs.weight;
        ysum[i] += obs.weight * transform.apply(obs.outcome);
        count[i] += 1;
    }
    Ok(DDCellMeans {
        mean_c0: ysum[0] / wsum[0],
        mean_c1: ysum[1] / wsum[1],
        mean_t0: ysum[2] / wsum[2],
        mean_t1: ysum[3] / wsum[3],
        n_c0: count[0],
        n_c1: count[1],
        n_t0: count[2],
        n_t1: count[3],
        transform,
    })
}

/// Comparison operator for a row filter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FilterOp {
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "==")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
}

/// Literal a filter compares against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FilterValue {
    Number(f64),
    Text(String),
}

/// A row-level predicate: keep rows where `column op value` holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub column: String,
    pub op: FilterOp,
    pub value: FilterValue,
}

impl Filter {
    fn keep(&self, raw: &str, row: usize) -> Result<bool, DataError> {
        match &self.value {
            FilterValue::Number(rhs) => {
                let lhs: f64 = raw.trim().parse().map_err(|_| DataError::ParseFailure {
                    row,
                    column: self.column.clone(),
                    value: raw.to_string(),
                })?;
                Ok(match self.op {
                    FilterOp::Gt => lhs > *rhs,
                    FilterOp::Ge => lhs >= *rhs,
                    FilterOp::Lt => lhs < *rhs,
                    FilterOp::Le => lhs <= *rhs,
                    FilterOp::Eq => lhs == *rhs,
                    FilterOp::Ne => lhs != *rhs,
                })
            }
            FilterValue::Text(rhs) => {
                let lhs = raw.trim();
                Ok(match self.op {
                    FilterOp::Gt => lhs > rhs.as_str(),
                    FilterOp::Ge => lhs >= rhs.as_str(),
                    FilterOp::Lt => lhs < rhs.as_str(),
                    FilterOp::Le => lhs <= rhs.as_str(),
                    FilterOp::Eq => lhs == rhs.as_str(),
                    FilterOp::Ne => lhs != rhs.as_str(),
                })
            }
        }
    }
}

/// Maps CSV columns onto the panel schema. Supplied as a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnMapping {
    pub outcome: String,
    pub treat: String,
    pub post: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    #[serde(default)]
    pub fixed_effects: Vec<String>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub weight: Option<String>,
    #[serde(default)]
    pub unit: Option<String>,
    #[serde(default)]
    pub time: Option<String>,
}

/// What ingestion did beyond the returned dataset: per-filter drop counts and
/// any 2x2 cells that came out empty (flagged here, fatal only at estimation).
#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    /// Dropped row count per filter, in mapping order.
    pub dropped_per_filter: Vec<usize>,
    pub empty_cells: Vec<Cell>,
    pub rows_kept: usize,
}

/// Reads a CSV file into a [`PanelDataset`] under a column mapping.
///
/// Rows failing any numeric parse are hard errors. Rows failing a filter are
/// dropped and counted. Output preserves file order.
pub fn ingest_csv(
    path: &Path,
    mapping: &ColumnMapping,
) -> Result<(PanelDataset, IngestReport), DataError> {
    let file = std::fs::File::open(path).map_err(|e| DataError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|s| s.trim().to_string())
        .collect();

    let col = |name: &str| -> Result<usize, DataError> {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DataError::MissingColumn(name.to_string()))
    };

    let outcome_idx = col(&mapping.outcome)?;
    let treat_idx = col(&mapping.treat)?;
    let post_idx = col(&mapping.post)?;
    let cov_idx: Vec<usize> = mapping
        .covariates
        .iter()
        .map(|c| col(c))
        .collect::<Result<_, _>>()?;
    let fe_idx: Vec<usize> = mapping
        .fixed_effects
        .iter()
        .map(|c| col(c))
        .collect::<Result<_, _>>()?;
    let weight_idx = mapping.weight.as_deref().map(col).transpose()?;
    let unit_idx = mapping.unit.as_deref().map(col).transpose()?;
    let time_idx = mapping.time.as_deref().map(col).transpose()?;
    let filter_idx: Vec<usize> = mapping
        .filters
        .iter()
        .map(|f| col(&f.column))
        .collect::<Result<_, _>>()?;

    let mut observations = Vec::new();
    let mut dropped = vec![0usize; mapping.filters.len()];

    for (row_number, record) in reader.records().enumerate() {
        let record = record?;
        let field = |idx: usize| record.get(idx).unwrap_or("");

        let mut keep = true;
        for (fi, filter) in mapping.filters.iter().enumerate() {
            if !filter.keep(field(filter_idx[fi]), row_number)? {
                dropped[fi] += 1;
                keep = false;
                break;
            }
        }
        if !keep {
            continue;
        }

        let parse_f64 = |idx: usize, name: &str| -> Result<f64, DataError> {
            let raw = field(idx).trim();
            raw.parse().map_err(|_| DataError::ParseFailure {
                row: row_number,
                column: name.to_string(),
                value: raw.to_string(),
            })
        };
        let parse_flag = |idx: usize, name: &str| -> Result<u8, DataError> {
            let v = parse_f64(idx, name)?;
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(DataError::ParseFailure {
                    row: row_number,
                    column: name.to_string(),
                    value: field(idx).trim().to_string(),
                })
            }
        };

        let outcome = parse_f64(outcome_idx, &mapping.outcome)?;
        let treat = parse_flag(treat_idx, &mapping.treat)?;
        let post = parse_flag(post_idx, &mapping.post)?;
        let covariates = cov_idx
            .iter()
            .zip(&mapping.covariates)
            .map(|(&i, name)| parse_f64(i, name))
            .collect::<Result<Vec<_>, _>>()?;
        let fe_keys = fe_idx.iter().map(|&i| field(i).trim().to_string()).collect();
        let weight = match weight_idx {
            Some(i) => parse_f64(i, mapping.weight.as_deref().unwrap())?,
            None => 1.0,
        };
        let unit_id = unit_idx.map(|i| field(i).trim().to_string());
        let time_id = time_idx.map(|i| field(i).trim().to_string());

        observations.push(PanelObservation {
            unit_id,
            time_id,
            outcome,
            treat,
            post,
            covariates,
            fe_keys,
            weight,
        });
    }

    let dataset = PanelDataset {
        observations,
        covariate_names: mapping.covariates.clone(),
        fe_dimension_names: mapping.fixed_effects.clone(),
        outcome_name: mapping.outcome.clone(),
    };
    dataset.validate()?;
    let report = IngestReport {
        dropped_per_filter: dropped,
        empty_cells: dataset.empty_cells(),
        rows_kept: dataset.n_obs(),
    };
    Ok((dataset, report))
}

/// In-memory dataset builder used by the simulator and by tests.
pub fn dataset_from_cells(
    rows: impl IntoIterator<Item = (u8, u8, f64)>,
    outcome_name: &str,
) -> PanelDataset {
    let observations = rows
        .into_iter()
        .map(|(treat, post, outcome)| PanelObservation {
            unit_id: None,
            time_id: None,
            outcome,
            treat,
            post,
            covariates: vec![],
            fe_keys: vec![],
            weight: 1.0,
        })
        .collect();
    PanelDataset {
        observations,
        covariate_names: vec![],
        fe_dimension_names: vec![],
        outcome_name: outcome_name.to_string(),
    }
}
