//! Numerical integration used as an independent check on the analytic
//! mode sets.
//!
//! Classical RK4 with step doubling: each step is taken once with `h` and
//! twice with `h/2`. The difference over 15 estimates the local error of the
//! half-step result, which is the one kept. Outputs land exactly on a
//! uniform sample grid.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use nalgebra::{DMatrix, Schur};

use crate::model::{
    f_of_state, jacobian_reduced, rhs_original, rhs_reduced, Frame, ModelParameters, State,
};
use crate::solutions::ModeSet;
use crate::tol;

#[derive(Debug, Clone, PartialEq)]
pub struct IntegrateOptions {
    /// Largest step; derived from `growth_rates` when `None`.
    pub base_step: Option<f64>,
    /// Known growth rates; the default step satisfies `h max|mu| <= 0.05`.
    pub growth_rates: Vec<Complex64>,
    /// Number of output intervals.
    pub samples: usize,
    /// Local relative error target per step.
    pub step_error: f64,
    /// When false every step has the base size (error estimates are still
    /// recorded).
    pub adaptive: bool,
}

impl Default for IntegrateOptions {
    fn default() -> Self {
        IntegrateOptions {
            base_step: None,
            growth_rates: vec![],
            samples: 200,
            step_error: tol::STEP_ERROR,
            adaptive: true,
        }
    }
}

impl IntegrateOptions {
    fn resolve_base_step(&self, t_end: f64) -> f64 {
        if let Some(h) = self.base_step {
            return h;
        }
        let rate = self
            .growth_rates
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if rate > 0.0 {
            (0.05 / rate).min(t_end)
        } else {
            t_end / 2000.0
        }
    }
}

/// Sampled numerical solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub frame: Frame,
    pub times: Vec<f64>,
    pub states: Vec<State>,
    /// Sum of the local error estimates of the steps ending in each sample
    /// interval (zero for the initial point).
    pub step_error_estimate: Vec<f64>,
    pub steps: usize,
    pub rejected_steps: usize,
}

pub const CSV_HEADER: [&str; 10] = [
    "t", "x1_re", "x1_im", "x2_re", "x2_im", "x3_re", "x3_im", "x4_re", "x4_im", "err_est",
];

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn last(&self) -> &State {
        self.states
            .last()
            .expect("trajectory has at least one point")
    }

    /// Writes `t, x1_re, x1_im, ..., x4_im, err_est`, one row per sample.
    pub fn write_csv<W: Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(CSV_HEADER)?;
        for ((t, s), e) in self
            .times
            .iter()
            .zip(&self.states)
            .zip(&self.step_error_estimate)
        {
            let mut row = Vec::with_capacity(10);
            row.push(t.to_string());
            for z in &s.x {
                row.push(z.re.to_string());
                row.push(z.im.to_string());
            }
            row.push(e.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn rk4_step<F>(rhs: &F, t: f64, y: &State, h: f64) -> Result<State>
where
    F: Fn(&State) -> Result<State>,
{
    let at = |s: f64| {
        move |e: Error| match e {
            Error::SingularDenominator { .. } => Error::SingularDenominator { time: Some(s) },
            other => other,
        }
    };
    let k1 = rhs(y).map_err(at(t))?;
    let k2 = rhs(&y.axpy(h / 2.0, &k1)).map_err(at(t + h / 2.0))?;
    let k3 = rhs(&y.axpy(h / 2.0, &k2)).map_err(at(t + h / 2.0))?;
    let k4 = rhs(&y.axpy(h, &k3)).map_err(at(t + h))?;
    let mut x = y.x;
    for (i, xi) in x.iter_mut().enumerate() {
        *xi += (k1.x[i] + (k2.x[i] + k3.x[i]) * 2.0 + k4.x[i]) * (h / 6.0);
    }
    Ok(State::new(x, y.frame))
}

/// Integrates the system matching `x0`'s frame from `t = 0` to `t_end`.
pub fn integrate(
    p: &ModelParameters,
    x0: &State,
    t_end: f64,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    if !(t_end.is_finite() && t_end >= 0.0) {
        return Err(Error::InvalidInput(format!(
            "t_end = {t_end} must be finite and >= 0"
        )));
    }
    if !x0.is_finite() {
        return Err(Error::InvalidInput("initial state is not finite".into()));
    }
    f_of_state(p, x0).map_err(|_| Error::SingularDenominator { time: Some(0.0) })?;
    let frame = x0.frame;
    let rhs = |s: &State| match frame {
        Frame::Reduced => rhs_reduced(p, s),
        Frame::Original => rhs_original(p, s),
    };

    let mut traj = Trajectory {
        frame,
        times: vec![0.0],
        states: vec![*x0],
        step_error_estimate: vec![0.0],
        steps: 0,
        rejected_steps: 0,
    };
    if t_end == 0.0 {
        return Ok(traj);
    }
    let samples = opts.samples.max(1);
    let h_max = opts.resolve_base_step(t_end);
    if !(h_max > 0.0 && h_max.is_finite()) {
        return Err(Error::InvalidInput(format!("invalid base step {h_max}")));
    }
    let h_min = 1e-14 * t_end;

    let mut y = *x0;
    let mut h = h_max;
    let mut t = 0.0;
    for i in 1..=samples {
        let t_next = t_end * i as f64 / samples as f64;
        let mut acc = 0.0;
        if !opts.adaptive {
            let n = ((t_next - t) / h_max).ceil().max(1.0) as usize;
            let step = (t_next - t) / n as f64;
            for j in 0..n {
                let ts = t + step * j as f64;
                let full = rk4_step(&rhs, ts, &y, step)?;
                let half = rk4_step(&rhs, ts, &y, step / 2.0)?;
                let half = rk4_step(&rhs, ts + step / 2.0, &half, step / 2.0)?;
                acc += half.distance(&full) / 15.0;
                y = half;
                traj.steps += 1;
            }
            t = t_next;
        } else {
            while t < t_next {
                let remaining = t_next - t;
                let clipped = h >= remaining;
                let step = if clipped { remaining } else { h };
                let full = rk4_step(&rhs, t, &y, step)?;
                let half = rk4_step(&rhs, t, &y, step / 2.0)?;
                let half = rk4_step(&rhs, t + step / 2.0, &half, step / 2.0)?;
                let err = half.distance(&full) / 15.0;
                let ratio = err / (opts.step_error * half.norm().max(tol::DEVIATION_FLOOR));
                if ratio.is_finite() && ratio <= 1.0 {
                    y = half;
                    t = if clipped { t_next } else { t + step };
                    acc += err;
                    traj.steps += 1;
                    if !clipped {
                        let grow = if ratio > 0.0 {
                            (0.9 * ratio.powf(-0.2)).min(2.0)
                        } else {
                            2.0
                        };
                        h = (step * grow.max(1.0)).min(h_max);
                    }
                } else {
                    traj.rejected_steps += 1;
                    let shrink = if ratio.is_finite() {
                        (0.9 * ratio.powf(-0.2)).clamp(0.1, 0.9)
                    } else {
                        0.1
                    };
                    h = step * shrink;
                    if h < h_min {
                        return Err(Error::StepUnderflow { t, step: h });
                    }
                }
            }
        }
        traj.times.push(t_next);
        traj.states.push(y);
        traj.step_error_estimate.push(acc);
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyOptions {
    /// Integration horizon; [`default_horizon`] when `None`.
    pub horizon: Option<f64>,
    pub samples: usize,
    pub deviation_tol: f64,
    pub drift_tol: f64,
    pub step_error: f64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            horizon: None,
            samples: 200,
            deviation_tol: tol::VERIFY_DEVIATION,
            drift_tol: tol::VERIFY_DRIFT,
            step_error: tol::STEP_ERROR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub t_end: f64,
    pub samples: usize,
    pub steps: usize,
    /// `max_t ||x_num - x_an|| / max(||x_an||, 1e-30)`.
    pub max_rel_deviation: f64,
    /// `max_t |f(t) - f(0)| / |f(0)|` along the numeric trajectory.
    pub f_drift: f64,
    pub deviation_tol: f64,
    pub drift_tol: f64,
    pub passed: bool,
    /// [`transverse_exponent`] for single modes.
    pub transverse_exponent: Option<f64>,
}

/// `min(3 / max|Re mu|, 10)`, or 10 when every growth rate is imaginary.
pub fn default_horizon(mus: &[Complex64]) -> f64 {
    let m = mus.iter().map(|z| z.re.abs()).fold(0.0, f64::max);
    if m > 0.0 {
        (3.0 / m).min(10.0)
    } else {
        10.0
    }
}

/// Growth exponent of perturbations transverse to a single-mode solution
/// over `[0, t_end]`: `t_end * max Re(lambda - mu)` over the Jacobian
/// eigenvalues `lambda` other than `mu`. Along the mode the Jacobian is
/// constant, so a relative error `e` in the initial state reaches about
/// `e * exp(exponent)` at `t_end`, whatever the integrator. `None` for
/// `K != 1`.
pub fn transverse_exponent(ms: &ModeSet, t_end: f64) -> Result<Option<f64>> {
    if ms.modes.len() != 1 {
        return Ok(None);
    }
    let mu = ms.modes[0].mu;
    let j = jacobian_reduced(&ms.parameters, &ms.initial_state())?;
    let m = DMatrix::from_fn(4, 4, |r, c| j[r][c]);
    let schur = Schur::try_new(m.clone(), f64::EPSILON, 10_000).unwrap_or_else(|| Schur::new(m));
    let (_, t) = schur.unpack();
    let mut eig: Vec<Complex64> = (0..4).map(|i| t[(i, i)]).collect();
    // the mode itself is an eigenvalue (Euler's relation J x = rhs(x) = mu x)
    let own = (0..4)
        .min_by(|&a, &b| (eig[a] - mu).norm().total_cmp(&(eig[b] - mu).norm()))
        .expect("four eigenvalues");
    eig.remove(own);
    let worst = eig
        .iter()
        .map(|l| (l - mu).re)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Some(worst.max(0.0) * t_end))
}

/// Integrates the reduced system from the mode set's initial state and
/// compares against the analytic superposition on the sample grid.
pub fn verify_modeset(
    ms: &ModeSet,
    opts: &VerifyOptions,
) -> Result<(VerificationReport, Trajectory)> {
    let p = &ms.parameters;
    let mus = ms.mus();
    let t_end = opts.horizon.unwrap_or_else(|| default_horizon(&mus));
    if let Some(big) = mus
        .iter()
        .map(|z| z.norm() * t_end)
        .find(|&e| e > tol::OVERFLOW_EXPONENT)
    {
        return Err(Error::Overflow(big));
    }
    let x0 = ms.initial_state();
    let transverse = transverse_exponent(ms, t_end)?;
    let iopts = IntegrateOptions {
        growth_rates: mus,
        samples: opts.samples,
        step_error: opts.step_error,
        ..IntegrateOptions::default()
    };
    let traj = integrate(p, &x0, t_end, &iopts)?;

    let f0 = f_of_state(p, &x0)?;
    let f_scale = f0.norm().max(tol::DEVIATION_FLOOR);
    let mut max_dev: f64 = 0.0;
    let mut drift: f64 = 0.0;
    for (&t, s) in traj.times.iter().zip(&traj.states) {
        let exact = ms.evaluate(t);
        max_dev = max_dev.max(s.distance(&exact) / exact.norm().max(tol::DEVIATION_FLOOR));
        let f = f_of_state(p, s).map_err(|_| Error::SingularDenominator { time: Some(t) })?;
        drift = drift.max((f - f0).norm() / f_scale);
    }
    let report = VerificationReport {
        t_end,
        samples: traj.len() - 1,
        steps: traj.steps,
        max_rel_deviation: max_dev,
        f_drift: drift,
        deviation_tol: opts.deviation_tol,
        drift_tol: opts.drift_tol,
        passed: max_dev <= opts.deviation_tol && drift <= opts.drift_tol,
        transverse_exponent: transverse,
    };
    Ok((report, traj))
}
