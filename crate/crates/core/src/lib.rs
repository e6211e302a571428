//! Exponential-mode exact solutions of a 4-compartment respiratory-epidemic
//! ODE model.
//!
//! The model couples four host populations through the rational
//! nonlinearity `f = kI (x3 + beta x4) / (x1 + x2 + x3 + beta x4)`. Its
//! right-hand sides are homogeneous of degree one, so states that evolve as
//! a single exponential `x(0) exp(mu t)` keep `f` constant. The admissible
//! growth rates are the roots of a quartic in `mu`; superpositions of two,
//! three or four such modes are exact solutions only when the parameters
//! satisfy additional algebraic constraints.
//!
//! Crate layout:
//!
//! * [`model`]: parameters, states, the two right-hand sides and the
//!   `kD`-eliminating frame transform.
//! * [`spectrum`]: quartic coefficients, root finding and per-root ratios.
//! * [`solutions`]: multi-mode assembly, constraint residuals, equilibrium.
//! * [`integrate`]: RK4 with step doubling, used as an independent oracle.
//! * [`search`]: parameter sweeps and Newton solves for the constraints.

// `!(x <= tol)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod compensated;
pub mod cplx;
pub mod error;
pub mod integrate;
pub mod model;
pub mod search;
pub mod solutions;
pub mod spectrum;
pub mod tol;

pub use error::{Error, Guard, Result};
pub use integrate::{
    default_horizon, integrate, transverse_exponent, verify_modeset, IntegrateOptions, Trajectory,
    VerificationReport, VerifyOptions,
};
pub use model::{
    f_of_state, jacobian_reduced, rhs_original, rhs_reduced, to_original, Frame, ModelParameters,
    Param, State,
};
pub use num_complex::Complex64;
pub use search::{
    solve_multi, sweep_constraint, MultiOptions, MultiOutcome, MultiSolution, SweepOptions,
    SweepPoint, SweepResult, SweepSolution,
};
pub use solutions::{
    build_modes, build_modes_with, consistency_check_k4, constraint_report, constraint_residuals,
    equilibrium, h_of_t, ratio_residuals, ConstraintReport, Equilibrium, GuardOutcome,
    K4Consistency, Mode, ModeSet,
};
pub use spectrum::{
    algebraic_residuals, model_spectrum, normalized_residual, poly_eval, quartic_coefficients,
    ratios_for_mu, solve_quartic, QuarticSpectrum, RatioVector, SpectrumWarning,
};
pub use tol::Tolerances;
