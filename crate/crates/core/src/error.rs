use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Inequality side-conditions under which the explicit mode formulas hold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Guard {
    /// `mu != 0`
    MuNonzero,
    /// `kP != 0`
    KpNonzero,
    /// `mu != kB`
    MuNotKb,
    /// `(1 - beta)(kB - mu) - kDV != 0`
    ClosedFormDenominator,
    /// pairwise distinct growth rates
    DistinctRates,
    /// every mode defines the same `f` (checked against mode 1)
    CommonF,
}

impl fmt::Display for Guard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Guard::MuNonzero => "mu != 0",
            Guard::KpNonzero => "kP != 0",
            Guard::MuNotKb => "mu != kB",
            Guard::ClosedFormDenominator => "(1-beta)(kB-mu)-kDV != 0",
            Guard::DistinctRates => "pairwise distinct mu",
            Guard::CommonF => "modes share f",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("singular denominator x1+x2+x3+beta*x4{}", at_time(.time))]
    SingularDenominator { time: Option<f64> },

    #[error("all polynomial coefficients vanish")]
    ZeroPolynomial,

    #[error("guard violated: {0}")]
    GuardViolation(Guard),

    #[error(
        "mode {index}: growth rate is not a quartic root (normalized residual {residual:.3e})"
    )]
    NotARoot { index: usize, residual: f64 },

    #[error("duplicate growth rates at modes {first} and {second}")]
    DuplicateMu { first: usize, second: usize },

    #[error("kD is not a quartic root (normalized residual {residual:.3e})")]
    NotEquilibriumParameterization { residual: f64 },

    #[error("state frame mismatch: expected {expected:?}, got {found:?}")]
    FrameMismatch {
        expected: crate::model::Frame,
        found: crate::model::Frame,
    },

    #[error("step size underflow at t = {t} (h = {step:.3e})")]
    StepUnderflow { t: f64, step: f64 },

    #[error("exponential overflow: |mu| * t_end = {0:.1} exceeds the limit")]
    Overflow(f64),

    #[error("seed {seed}: no convergence ({reason})")]
    NoConvergence { seed: usize, reason: String },

    #[error("root tracking break at grid index {0}")]
    TrackingBreak(usize),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

fn at_time(t: &Option<f64>) -> String {
    match t {
        Some(t) => format!(" at t = {t}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
