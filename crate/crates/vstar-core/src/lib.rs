//! Analytics and simulation for wealth processes with a rectified-Gaussian
//! growth step: scalar normal primitives, iterated-expectation chains,
//! survivorship (selection-bias) analytics with a criticality phase diagram,
//! a deterministic population simulator, and power-law tail estimation.

pub mod atv;
pub mod chain;
pub mod gaussian;
pub mod tail;
pub mod vstar;

/// Crate-wide error. Variants map onto the CLI exit-code classes.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid argument or configuration value.
    #[error("domain error: {0}")]
    Domain(String),
    /// A result left the representable/meaningful range (e.g. probability underflow).
    #[error("range error: {0}")]
    Range(String),
    /// A run would exceed a hard resource budget.
    #[error("resource limit: {0}")]
    Resource(String),
    /// Not enough (or degenerate) data for an estimator.
    #[error("estimation error: {0}")]
    Estimation(String),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

/// Criticality classification of a growth factor relative to 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    #[serde(rename = "sub")]
    Subcritical,
    Critical,
    #[serde(rename = "super")]
    Supercritical,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Subcritical => "sub",
            Regime::Critical => "critical",
            Regime::Supercritical => "super",
        })
    }
}

/// Half-width of the |growth factor - 1| band classified as critical.
pub const CRITICAL_BAND: f64 = 1e-9;

pub(crate) fn require_finite(name: &str, x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Domain(format!("{name} must be finite, got {x}")))
    }
}
