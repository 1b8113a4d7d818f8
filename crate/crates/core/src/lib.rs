//! Difference-in-differences estimation with functional-form diagnostics.
//!
//! The 2x2 DD coefficient answers a different question depending on how the
//! outcome enters the regression. In levels it is the difference in changes
//! across groups; in logs it approximates the proportional difference in
//! growth rates. When baseline outcome means differ enough across groups,
//! the two can disagree in sign. This crate provides:
//!
//! - [`data_model`] — panel data representation and CSV ingestion,
//! - [`ols_engine`] — weighted least squares with Eicker-Huber-White
//!   covariance and high-dimensional fixed-effect absorption,
//! - [`dd_estimators`] — level / log / IHS DD fits, the growth-rate
//!   decomposition, and the `exp(b)-1` transform with delta-method SE,
//! - [`sign_diagnostics`] — the sign-switch condition in executable form,
//! - [`sim_engine`] — a deterministic Monte Carlo harness and 1-D parameter
//!   sweeps with zero-crossing detection,
//! - [`cli`] — the `dd-signal` command-line surface.

pub mod cli;
pub mod data_model;
pub mod dd_estimators;
pub mod ols_engine;
pub mod sign_diagnostics;
pub mod sim_engine;
pub mod transform;

pub use data_model::{ColumnMapping, DDCellMeans, PanelDataset, PanelObservation};
pub use dd_estimators::{DDFit, GrowthDecomposition};
pub use ols_engine::{DesignSpec, FitResult, SeType};
pub use sign_diagnostics::{SignSwitchReport, SwitchPrediction};
pub use sim_engine::{SimConfig, SweepConfig};
pub use transform::OutcomeTransform;
