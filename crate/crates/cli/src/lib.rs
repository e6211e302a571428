//! Command implementations behind the `expomodes` binary.
//!
//! Every command reads a [`RunConfig`], writes its artifacts into an output
//! directory and returns an [`Outcome`] whose [`Exit`] code follows a fixed
//! contract: 0 success, 1 invalid input, 2 degenerate spectrum, 3 constraint
//! or verification failure.

pub mod config;

use std::fs;
use std::path::PathBuf;

use expomodes::spectrum::{describe_roots, RootInfo};
use expomodes::{
    build_modes_with, constraint_report, cplx, equilibrium, model_spectrum,
    solutions::pin_kd_to_root, solve_quartic, sweep_constraint, verify_modeset, Complex64,
    ConstraintReport, Equilibrium, Error, ModeSet, ModelParameters, QuarticSpectrum, SweepOptions,
    SweepSolution, Tolerances, VerificationReport, VerifyOptions,
};
use serde::Serialize;
use thiserror::Error;

pub use config::RunConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exit {
    Ok = 0,
    InvalidInput = 1,
    Degenerate = 2,
    Failed = 3,
}

impl Exit {
    pub fn code(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] Error),
    #[error("degenerate spectrum: {0}")]
    Degenerate(String),
    #[error("writing {path}: {message}")]
    Output { path: PathBuf, message: String },
}

impl CliError {
    pub fn exit(&self) -> Exit {
        match self {
            CliError::Degenerate(_) => Exit::Degenerate,
            _ => Exit::InvalidInput,
        }
    }
}

/// Result of a command that ran to completion.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub exit: Exit,
    pub files: Vec<PathBuf>,
    pub summary: String,
}

/// Output directory and tolerance overrides from the command line.
#[derive(Debug, Clone, Default)]
pub struct Context {
    pub out: Option<PathBuf>,
    pub tolerances: config::ToleranceConfig,
}

impl Context {
    fn out_dir(&self, cfg: &RunConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output_dir.clone())
            .unwrap_or_else(|| PathBuf::from("."))
    }
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Writer, CliError> {
        fs::create_dir_all(&dir).map_err(|e| CliError::Output {
            path: dir.clone(),
            message: e.to_string(),
        })?;
        Ok(Writer { dir, files: vec![] })
    }

    fn bytes(&mut self, name: &str, data: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        fs::write(&path, data).map_err(|e| CliError::Output {
            path: path.clone(),
            message: e.to_string(),
        })?;
        self.files.push(path);
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Output {
            path: self.dir.join(name),
            message: e.to_string(),
        })?;
        text.push('\n');
        self.bytes(name, text.as_bytes())
    }

    fn csv(
        &mut self,
        name: &str,
        write: impl FnOnce(&mut Vec<u8>) -> Result<(), String>,
    ) -> Result<(), CliError> {
        let mut buf = Vec::new();
        write(&mut buf).map_err(|message| CliError::Output {
            path: self.dir.join(name),
            message,
        })?;
        self.bytes(name, &buf)
    }

    fn finish(self, exit: Exit, summary: String) -> Outcome {
        Outcome {
            exit,
            files: self.files,
            summary,
        }
    }
}

#[derive(Serialize)]
struct SpectrumOutput<'a> {
    #[serde(skip_serializing_if = "Option::is_none")]
    parameters: Option<ModelParameters>,
    #[serde(flatten)]
    spectrum: &'a QuarticSpectrum,
    /// Ratios, guard status and sign patterns per root (empty for raw
    /// coefficients).
    root_info: Vec<RootInfo>,
}

/// Roots of the characteristic quartic, or of `coefficients` when given.
pub fn cmd_spectrum(
    cfg: &RunConfig,
    ctx: &Context,
    coefficients: Option<[Complex64; 5]>,
) -> Result<Outcome, CliError> {
    let (parameters, spectrum) = match coefficients {
        Some(c) => (None, solve_quartic(&c)?),
        None => {
            let p = cfg.parameters()?;
            (Some(p), model_spectrum(&p)?)
        }
    };
    let root_info = parameters
        .map(|p| describe_roots(&p, &spectrum))
        .unwrap_or_default();
    let mut w = Writer::new(ctx.out_dir(cfg))?;
    w.json(
        "spectrum.json",
        &SpectrumOutput {
            parameters,
            spectrum: &spectrum,
            root_info,
        },
    )?;
    let exit = if spectrum.degenerate {
        Exit::Degenerate
    } else {
        Exit::Ok
    };
    let summary = format!(
        "spectrum: degree {}, {} roots, max residual {:.2e}{}",
        spectrum.degree,
        spectrum.roots.len(),
        spectrum.residuals.iter().copied().fold(0.0, f64::max),
        if spectrum.degenerate {
            ", degenerate"
        } else {
            ""
        }
    );
    Ok(w.finish(exit, summary))
}

/// Parameters, tolerances and the mode set requested by the config.
fn assemble(
    cfg: &RunConfig,
    ctx: &Context,
) -> Result<(ModelParameters, Tolerances, ModeSet), CliError> {
    let p = cfg.parameters()?;
    let tol = config::tolerances(cfg, &ctx.tolerances)?;
    let modes = cfg.modes()?;
    let k = modes.roots.len();
    if !(1..=4).contains(&k) {
        return Err(CliError::Invalid(format!(
            "modes.roots must list 1 to 4 indices, got {k}"
        )));
    }
    let a4 = match &modes.amplitudes {
        Some(a) if a.len() != k => {
            return Err(CliError::Invalid(format!(
                "{} amplitudes given for {k} modes",
                a.len()
            )))
        }
        Some(a) => a.clone(),
        None => vec![Complex64::new(1.0, 0.0); k],
    };
    let spectrum = model_spectrum(&p)?;
    if spectrum.degenerate {
        return Err(CliError::Degenerate(format!("roots {:?}", spectrum.roots)));
    }
    let mus = modes
        .roots
        .iter()
        .map(|&i| {
            spectrum.roots.get(i).copied().ok_or_else(|| {
                CliError::Invalid(format!(
                    "root index {i} out of range ({} roots)",
                    spectrum.roots.len()
                ))
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ms = build_modes_with(&p, &mus, &a4, &tol)?;
    Ok((p, tol, ms))
}

#[derive(Serialize)]
struct BuildSummary<'a> {
    modeset: &'a ModeSet,
    #[serde(with = "cplx::seq")]
    initial_state: [Complex64; 4],
}

/// Builds the requested mode set and its constraint report.
pub fn cmd_build(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let (p, tol, ms) = assemble(cfg, ctx)?;
    let report = constraint_report(&p, &ms.mus(), tol.constraint)?;
    let mut w = Writer::new(ctx.out_dir(cfg))?;
    w.json(
        "modeset.json",
        &BuildSummary {
            modeset: &ms,
            initial_state: ms.initial_state().x,
        },
    )?;
    w.json("constraint_report.json", &report)?;
    let ok = report.satisfied && ms.f_consistent;
    let summary = format!(
        "build: K={}, constraint {} (max residual {:.2e}), f spread {:.2e}",
        ms.k(),
        if report.satisfied {
            "satisfied"
        } else {
            "not satisfied"
        },
        report.max_residual(),
        ms.f_spread
    );
    Ok(w.finish(if ok { Exit::Ok } else { Exit::Failed }, summary))
}

#[derive(Serialize)]
struct VerifyOutput {
    k: usize,
    #[serde(with = "cplx::seq")]
    mus: Vec<Complex64>,
    perturbed: bool,
    constraint: ConstraintReport,
    report: Option<VerificationReport>,
    /// Set when the integration itself failed.
    error: Option<String>,
    passed: bool,
}

/// Integrates from the mode set's initial state and compares with the
/// analytic curve.
pub fn cmd_verify(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let (p, tol, mut ms) = assemble(cfg, ctx)?;
    let vcfg = cfg.verify.clone().unwrap_or_default();
    let constraint = constraint_report(&p, &ms.mus(), tol.constraint)?;
    if let Some(pt) = &vcfg.perturb {
        if pt.mode >= ms.k() || pt.component >= 4 || !pt.relative.is_finite() {
            return Err(CliError::Invalid(format!(
                "perturbation mode {} component {} is out of range",
                pt.mode, pt.component
            )));
        }
        ms = ms.perturbed(pt.mode, pt.component, pt.relative);
    }
    if let Some(h) = vcfg.horizon {
        if !(h.is_finite() && h >= 0.0) {
            return Err(CliError::Invalid(format!(
                "horizon {h} must be finite and >= 0"
            )));
        }
    }
    let samples = vcfg.samples.unwrap_or(200);
    if samples == 0 {
        return Err(CliError::Invalid("samples must be positive".into()));
    }
    let opts = VerifyOptions {
        horizon: vcfg.horizon,
        samples,
        deviation_tol: tol.deviation,
        drift_tol: tol.drift,
        ..VerifyOptions::default()
    };
    let mut w = Writer::new(ctx.out_dir(cfg))?;
    let (report, error) = match verify_modeset(&ms, &opts) {
        Ok((report, traj)) => {
            w.csv("trajectory.csv", |buf| {
                traj.write_csv(buf).map_err(|e| e.to_string())
            })?;
            (Some(report), None)
        }
        Err(e @ (Error::InvalidInput(_) | Error::FrameMismatch { .. })) => return Err(e.into()),
        Err(e) => (None, Some(e.to_string())),
    };
    let passed = report.as_ref().is_some_and(|r| r.passed);
    let summary = match (&report, &error) {
        (Some(r), _) => format!(
            "verify: {} (deviation {:.2e}, f drift {:.2e}, t_end {})",
            if r.passed { "passed" } else { "FAILED" },
            r.max_rel_deviation,
            r.f_drift,
            r.t_end
        ),
        (None, Some(e)) => format!("verify: FAILED ({e})"),
        (None, None) => unreachable!("either a report or an error"),
    };
    w.json(
        "verification.json",
        &VerifyOutput {
            k: ms.k(),
            mus: ms.mus(),
            perturbed: vcfg.perturb.is_some(),
            constraint,
            report,
            error,
            passed,
        },
    )?;
    Ok(w.finish(if passed { Exit::Ok } else { Exit::Failed }, summary))
}

#[derive(Serialize)]
struct SweepOutput<'a> {
    free: expomodes::Param,
    range: [f64; 2],
    grid_n: usize,
    log_spacing: bool,
    selection: &'a [usize],
    breaks: &'a [usize],
    brackets: &'a [(usize, usize)],
    rejected: &'a [expomodes::search::RejectedBracket],
    solutions: &'a [SweepSolution],
}

/// Sweeps one parameter for sign changes of the K=2 constraint and refines
/// them. Exit 3 when no solution is found.
pub fn cmd_sweep(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let p = cfg.parameters()?;
    let tol = config::tolerances(cfg, &ctx.tolerances)?;
    let sc = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Invalid("config has no `sweep`".into()))?;
    let mut opts = SweepOptions::new(
        sc.free,
        (sc.range[0], sc.range[1]),
        sc.grid_n,
        sc.roots.clone(),
    );
    opts.log_spacing = sc.log_spacing;
    opts.constraint_tol = tol.constraint;
    let res = sweep_constraint(&p, &opts)?;
    let mut w = Writer::new(ctx.out_dir(cfg))?;
    w.csv("sweep.csv", |buf| {
        res.write_csv(buf).map_err(|e| e.to_string())
    })?;
    w.json(
        "solutions.json",
        &SweepOutput {
            free: sc.free,
            range: sc.range,
            grid_n: sc.grid_n,
            log_spacing: sc.log_spacing,
            selection: &res.selection,
            breaks: &res.breaks,
            brackets: &res.brackets,
            rejected: &res.rejected,
            solutions: &res.solutions,
        },
    )?;
    let summary = format!(
        "sweep: {} solution(s), {} bracket(s), {} tracking break(s)",
        res.solutions.len(),
        res.brackets.len(),
        res.breaks.len()
    );
    let exit = if res.solutions.is_empty() {
        Exit::Failed
    } else {
        Exit::Ok
    };
    Ok(w.finish(exit, summary))
}

#[derive(Serialize)]
struct EquilibriumOutput {
    parameters: ModelParameters,
    equilibrium: Option<Equilibrium>,
    /// Normalized quartic residual at `mu = kD`.
    quartic_residual: f64,
    error: Option<String>,
}

/// Stationary point of the original system for `kD` at a quartic root.
pub fn cmd_equilibrium(cfg: &RunConfig, ctx: &Context) -> Result<Outcome, CliError> {
    let mut p = cfg.parameters()?;
    let ecfg = cfg
        .equilibrium
        .clone()
        .unwrap_or(config::EquilibriumConfig {
            x4bar: Complex64::new(1.0, 0.0),
            pin_kd_to_root: None,
        });
    if let Some(i) = ecfg.pin_kd_to_root {
        p = pin_kd_to_root(&p, i)?;
    }
    if !(ecfg.x4bar.re.is_finite() && ecfg.x4bar.im.is_finite()) {
        return Err(CliError::Invalid("x4bar must be finite".into()));
    }
    let quartic_residual =
        expomodes::normalized_residual(&expomodes::quartic_coefficients(&p), p.k_d);
    let (eq, error) = match equilibrium(&p, ecfg.x4bar) {
        Ok(e) => (Some(e), None),
        Err(
            e @ (Error::NotEquilibriumParameterization { .. } | Error::SingularDenominator { .. }),
        ) => (None, Some(e.to_string())),
        Err(e) => return Err(e.into()),
    };
    let ok = eq.as_ref().is_some_and(|e| e.satisfied);
    let summary = match (&eq, &error) {
        (Some(e), _) => format!(
            "equilibrium: {} (|rhs| {:.2e}, bound {:.2e})",
            if e.satisfied {
                "satisfied"
            } else {
                "NOT satisfied"
            },
            e.rhs_norm,
            e.bound
        ),
        (None, Some(m)) => format!("equilibrium: FAILED ({m})"),
        (None, None) => unreachable!("either an equilibrium or an error"),
    };
    let mut w = Writer::new(ctx.out_dir(cfg))?;
    w.json(
        "equilibrium.json",
        &EquilibriumOutput {
            parameters: p,
            equilibrium: eq,
            quartic_residual,
            error,
        },
    )?;
    Ok(w.finish(if ok { Exit::Ok } else { Exit::Failed }, summary))
}

/// Parses raw coefficients `c0..c4` given as a JSON array of numbers or
/// `[re, im]` pairs.
pub fn parse_coefficients(text: &str) -> Result<[Complex64; 5], CliError> {
    let v: Vec<cplx::Json> =
        serde_json::from_str(text).map_err(|e| CliError::Invalid(format!("coefficients: {e}")))?;
    let v: Vec<Complex64> = v.into_iter().map(|j| j.0).collect();
    v.try_into().map_err(|v: Vec<Complex64>| {
        CliError::Invalid(format!("expected 5 coefficients, got {}", v.len()))
    })
}

/// Output directory that a command would write to.
pub fn output_dir(cfg: &RunConfig, ctx: &Context) -> PathBuf {
    ctx.out_dir(cfg)
}
