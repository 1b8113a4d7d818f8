//! Outcome transforms applied before estimation.

use std::fmt;

use serde::{Deserialize, Serialize};

/// How the outcome variable enters the regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeTransform {
    /// Outcome in levels (identity).
    #[default]
    Level,
    /// Natural log; requires strictly positive outcomes.
    Log,
    /// Inverse hyperbolic sine, `arsinh(y) = ln(y + sqrt(y^2 + 1))`.
    /// Behaves like `ln(2y)` for large `y` but is defined at zero.
    Ihs,
}

impl OutcomeTransform {
    pub fn apply(self, y: f64) -> f64 {
        match self {
            OutcomeTransform::Level => y,
            OutcomeTransform::Log => y.ln(),
            OutcomeTransform::Ihs => y.asinh(),
        }
    }

    /// Whether the transform is only defined on strictly positive values.
    pub fn requires_positive(self) -> bool {
        matches!(self, OutcomeTransform::Log)
    }
}

impl fmt::Display for OutcomeTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            OutcomeTransform::Level => write!(f, "level"),
            OutcomeTransform::Log => write!(f, "log"),
            OutcomeTransform::Ihs => write!(f, "ihs"),
        }
    }
}

impl std::str::FromStr for OutcomeTransform {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "level" => Ok(OutcomeTransform::Level),
            "log" => Ok(OutcomeTransform::Log),
            "ihs" => Ok(OutcomeTransform::Ihs),
            other => Err(format!("unknown transform `{other}`")),
        }
    }
}
