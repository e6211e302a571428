//! Numerical thresholds shared across modules.

/// Relative threshold for the `f` denominator against the sum of its term
/// magnitudes.
pub const DENOMINATOR: f64 = 1e-12;

/// Leading coefficients below this fraction of `max |c_k|` are trimmed.
pub const COEFF_TRIM: f64 = 1e-13;

/// Normalized polynomial residual every reported root must reach.
pub const ROOT_RESIDUAL: f64 = 1e-10;

pub const NEWTON_MAX_ITER: usize = 50;

/// Roots closer than this (relative to `max(1, max |mu|)`) are coincident.
pub const DISTINCT: f64 = 1e-8;

/// Relative threshold for the inequality guards.
pub const GUARD: f64 = 1e-12;

/// Normalized residual below which a growth rate counts as a quartic root.
pub const ROOT_MEMBERSHIP: f64 = 1e-9;

/// Normalized constraint tolerance.
pub const CONSTRAINT: f64 = 1e-9;

/// Allowed relative spread of the per-mode `f` values in a mode set.
pub const F_CONSISTENCY: f64 = 1e-9;

/// Allowed relative mismatch between the per-mode `f` values of a
/// constrained root tuple. Looser than [`F_CONSISTENCY`] because the
/// mismatch amplifies the constraint residual by the conditioning of `F`.
pub const F_MISMATCH: f64 = 1e-7;

pub const VERIFY_DEVIATION: f64 = 1e-6;
pub const VERIFY_DRIFT: f64 = 1e-7;

/// Local relative error target per integration step.
pub const STEP_ERROR: f64 = 1e-10;

pub const DEVIATION_FLOOR: f64 = 1e-30;

/// Largest admissible `|mu| * t_end` before `exp` overflows.
pub const OVERFLOW_EXPONENT: f64 = 700.0;

pub const BISECTION_WIDTH: f64 = 1e-12;

/// Relative step of the finite-difference Jacobian.
pub const FD_STEP: f64 = 1e-7;

/// Solutions closer than this (relative) are merged.
pub const DEDUP: f64 = 1e-8;

/// Largest Newton correction, relative to the iterate, accepted at a point
/// whose constraint residual is already within tolerance.
pub const NEWTON_CORRECTION: f64 = 1e-6;

/// Tolerances that can be overridden per run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Root membership for growth rates handed to mode construction.
    pub root: f64,
    /// Constraint residual threshold (tau_c).
    pub constraint: f64,
    /// Maximum relative deviation numeric vs analytic.
    pub deviation: f64,
    /// Maximum relative drift of `f` along the numeric trajectory.
    pub drift: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            root: ROOT_MEMBERSHIP,
            constraint: CONSTRAINT,
            deviation: VERIFY_DEVIATION,
            drift: VERIFY_DRIFT,
        }
    }
}

/// Largest [`crate::integrate::transverse_exponent`] for which a
/// double-precision integration can confirm a single mode: rounding in the
/// initial state grows by at most `e^10 ~ 2e4`.
pub const TRANSVERSE_EXPONENT_MAX: f64 = 10.0;
