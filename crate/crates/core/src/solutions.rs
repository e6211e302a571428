//! Multi-exponential solutions and the constraints that make them exact.
//!
//! Each mode is a single-exponential solution `a exp(mu t)` with `mu` a
//! quartic root and `a = a4 (r1, r2, r3, 1)`. A sum of modes solves the
//! nonlinear system only if every mode sees the same value of `f`, which
//! for two or more modes imposes algebraic constraints on the parameters
//! and the selected roots.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cplx;
use crate::error::{Error, Guard, Result};
use crate::model::{self, rhs_original, Frame, ModelParameters, State};
use crate::spectrum::{
    self, check_guards, model_spectrum, normalized_residual, quartic_coefficients, ratios_for_mu,
};
use crate::tol::{self, Tolerances};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    #[serde(with = "cplx")]
    pub mu: Complex64,
    /// `a_{1l}..a_{4l}`.
    #[serde(with = "cplx::seq")]
    pub amplitudes: [Complex64; 4],
}

/// A superposition `x_n(t) = sum_l a_{nl} exp(mu_l t)` in the reduced frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    pub parameters: ModelParameters,
    pub modes: Vec<Mode>,
    /// `f(0)` of the first mode (closed form).
    #[serde(with = "cplx")]
    pub f0: Complex64,
    /// Largest relative difference between `f0` and the closed-form `f` of
    /// any other mode with nonzero amplitude.
    pub f_spread: f64,
    /// `f_spread <= 1e-9`; a mode set failing this is not an exact solution.
    pub f_consistent: bool,
    pub frame: Frame,
}

fn rel_diff(a: Complex64, b: Complex64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// [`build_modes_with`] at default tolerances.
pub fn build_modes(p: &ModelParameters, mus: &[Complex64], a4: &[Complex64]) -> Result<ModeSet> {
    build_modes_with(p, mus, a4, &Tolerances::default())
}

/// Assembles a mode set from `K` quartic roots and `K` free amplitudes
/// `a_{4l}`.
pub fn build_modes_with(
    p: &ModelParameters,
    mus: &[Complex64],
    a4: &[Complex64],
    tol: &Tolerances,
) -> Result<ModeSet> {
    let k = mus.len();
    if !(1..=4).contains(&k) {
        return Err(Error::InvalidInput(format!("mode count {k} outside 1..=4")));
    }
    if a4.len() != k {
        return Err(Error::InvalidInput(format!(
            "{} amplitudes given for {k} modes",
            a4.len()
        )));
    }
    if a4
        .iter()
        .chain(mus)
        .any(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return Err(Error::InvalidInput(
            "non-finite growth rate or amplitude".into(),
        ));
    }
    if let Some((first, second)) = spectrum::coincident_pair(mus) {
        return Err(Error::DuplicateMu { first, second });
    }
    let c = quartic_coefficients(p);
    for (index, &mu) in mus.iter().enumerate() {
        let residual = normalized_residual(&c, mu);
        if !(residual <= tol.root) {
            return Err(Error::NotARoot { index, residual });
        }
    }
    let ratios = mus
        .iter()
        .map(|&mu| ratios_for_mu(p, mu))
        .collect::<Result<Vec<_>>>()?;

    // closed form rather than kI (r3 + beta) / (r1 + r2 + r3 + beta): the
    // two agree identically, but the sum cancels heavily when kP or mu is
    // small
    let f0 = ratios[0].f;
    let f_spread = ratios
        .iter()
        .zip(a4)
        .skip(1)
        .filter(|(_, a)| a.norm() != 0.0)
        .map(|(r, _)| rel_diff(r.f, f0))
        .fold(0.0, f64::max);

    let modes = mus
        .iter()
        .zip(&ratios)
        .zip(a4)
        .map(|((&mu, r), &a)| Mode {
            mu,
            amplitudes: r.amplitudes(a),
        })
        .collect();

    Ok(ModeSet {
        parameters: *p,
        modes,
        f0,
        f_spread,
        f_consistent: f_spread <= tol::F_CONSISTENCY,
        frame: Frame::Reduced,
    })
}

fn normalized(terms: &[Complex64]) -> f64 {
    let sum: Complex64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|z| z.norm()).sum();
    if scale == 0.0 {
        0.0
    } else {
        sum.norm() / scale
    }
}

impl ModeSet {
    pub fn k(&self) -> usize {
        self.modes.len()
    }

    pub fn mus(&self) -> Vec<Complex64> {
        self.modes.iter().map(|m| m.mu).collect()
    }

    /// `x_n(t) = sum_l a_{nl} exp(mu_l t)`.
    pub fn evaluate(&self, t: f64) -> State {
        let mut x = [Complex64::new(0.0, 0.0); 4];
        for m in &self.modes {
            let e = (m.mu * t).exp();
            for (xi, ai) in x.iter_mut().zip(&m.amplitudes) {
                *xi += ai * e;
            }
        }
        State::reduced(x)
    }

    /// Analytic time derivative `sum_l mu_l a_{nl} exp(mu_l t)`.
    pub fn derivative(&self, t: f64) -> State {
        let mut x = [Complex64::new(0.0, 0.0); 4];
        for m in &self.modes {
            let e = m.mu * (m.mu * t).exp();
            for (xi, ai) in x.iter_mut().zip(&m.amplitudes) {
                *xi += ai * e;
            }
        }
        State::reduced(x)
    }

    pub fn initial_state(&self) -> State {
        self.evaluate(0.0)
    }

    /// Multiplies every amplitude by `s`.
    pub fn scaled(&self, s: Complex64) -> ModeSet {
        let mut out = self.clone();
        for m in &mut out.modes {
            m.amplitudes = m.amplitudes.map(|a| a * s);
        }
        out
    }

    /// Copy with a single amplitude component multiplied by `1 + rel`.
    /// This breaks the per-mode relations; used for negative controls.
    pub fn perturbed(&self, mode: usize, component: usize, rel: f64) -> ModeSet {
        let mut out = self.clone();
        out.modes[mode].amplitudes[component] *= 1.0 + rel;
        out
    }

    /// Normalized residuals of the four per-mode linear relations
    /// (`mu a_{1l} = alpha kR (a_{3l} + a_{4l})`, ...) with `f = f0`.
    pub fn mode_relation_residuals(&self) -> Vec<[f64; 4]> {
        let p = &self.parameters;
        let f = self.f0;
        let cross = p.k_b + (ONE - p.alpha) * p.k_r;
        self.modes
            .iter()
            .map(|m| {
                let [a1, a2, a3, a4] = m.amplitudes;
                let mu = m.mu;
                [
                    normalized(&[mu * a1, -p.alpha * p.k_r * a3, -p.alpha * p.k_r * a4]),
                    normalized(&[
                        mu * a2,
                        -p.k_b * a1,
                        -p.k_b * a2,
                        f * a2,
                        -cross * a3,
                        -cross * a4,
                    ]),
                    normalized(&[mu * a3, -f * a2, p.k_r * a3, p.k_p * a3]),
                    normalized(&[mu * a4, -p.k_p * a3, p.k_r * a4, p.k_dv * a4]),
                ]
            })
            .collect()
    }

    pub fn max_mode_relation_residual(&self) -> f64 {
        self.mode_relation_residuals()
            .iter()
            .flatten()
            .copied()
            .fold(0.0, f64::max)
    }
}

/// `h(t) = (x3 + beta x4) / (x1 + x2 + x3 + beta x4)` along the mode set,
/// so that `f = kI h`.
pub fn h_of_t(ms: &ModeSet, t: f64) -> Result<Complex64> {
    let x = ms.evaluate(t);
    let (num, den) = model::h_parts(ms.parameters.beta, &x.x)
        .map_err(|_| Error::SingularDenominator { time: Some(t) })?;
    Ok(num / den)
}

/// Outcome of a single guard check; `mode` is `None` for parameter-only or
/// pairwise guards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GuardOutcome {
    pub guard: Guard,
    pub mode: Option<usize>,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintReport {
    pub k: usize,
    /// Normalized residual magnitudes (1 for K=2, 2 for K=3, 3 for K=4).
    pub residuals: Vec<f64>,
    /// Normalized residuals with their phase; real-valued for real
    /// parameters and conjugate-symmetric root selections.
    #[serde(with = "cplx::seq")]
    pub signed: Vec<Complex64>,
    pub guards: Vec<GuardOutcome>,
    /// Relative difference between the closed-form `f` of mode 1 and of
    /// each other mode (1 where not finite), checked by the `CommonF` guard.
    /// The constraint polynomials also vanish where `f` of mode 1 is `0/0`;
    /// this guard rejects those points.
    pub f_mismatch: Vec<f64>,
    pub tolerance: f64,
    pub satisfied: bool,
}

impl ConstraintReport {
    pub fn guards_pass(&self) -> bool {
        self.guards.iter().all(|g| g.passed)
    }

    pub fn first_failed_guard(&self) -> Option<Guard> {
        self.guards.iter().find(|g| !g.passed).map(|g| g.guard)
    }

    /// All guards except `CommonF` pass, i.e. the residuals are well
    /// defined. `CommonF` holds only at (or very near) a solution.
    pub fn admissible(&self) -> bool {
        self.first_inadmissible().is_none()
    }

    pub fn first_inadmissible(&self) -> Option<Guard> {
        self.guards
            .iter()
            .find(|g| !g.passed && g.guard != Guard::CommonF)
            .map(|g| g.guard)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// The K=2 constraint polynomial for the pair `(m1, m2)` as a list of
/// terms:
///
/// ```text
/// (1-beta) kB^2 - kB kDV + kDV (kDV + beta kP + kR + m1)
///   + (kDV + (1-beta) m1) m2 - (1-beta) kB (m1 + m2)
/// ```
///
/// The same polynomial with `m2 -> m3` is the second K=3 constraint.
fn pair_constraint_terms(p: &ModelParameters, m1: Complex64, m2: Complex64) -> [Complex64; 10] {
    let omb = ONE - p.beta;
    let (kb, kdv) = (p.k_b, p.k_dv);
    [
        omb * kb * kb,
        -kb * kdv,
        kdv * kdv,
        kdv * p.beta * p.k_p,
        kdv * p.k_r,
        kdv * m1,
        kdv * m2,
        omb * m1 * m2,
        -omb * kb * m1,
        -omb * kb * m2,
    ]
}

fn signed_normalized(terms: &[Complex64]) -> Complex64 {
    let sum: Complex64 = terms.iter().sum();
    let scale: f64 = terms.iter().map(|z| z.norm()).sum();
    if scale == 0.0 {
        Complex64::new(0.0, 0.0)
    } else {
        sum / scale
    }
}

/// Value of the pair constraint polynomial.
pub fn pair_constraint(p: &ModelParameters, m1: Complex64, m2: Complex64) -> Complex64 {
    pair_constraint_terms(p, m1, m2).iter().sum()
}

/// Cross-multiplied b-ratio differences for pairs `(1, q)`, `q = 2..K`:
/// `(b_{3q} + beta) S_1 - (b_{31} + beta) S_q` with
/// `S = b_1 + b_2 + b_3 + beta`, normalized by the magnitudes of the two
/// products.
fn ratio_residuals_signed(p: &ModelParameters, mus: &[Complex64]) -> Result<Vec<Complex64>> {
    let rs = mus
        .iter()
        .map(|&mu| ratios_for_mu(p, mu))
        .collect::<Result<Vec<_>>>()?;
    let b = p.beta;
    let s1 = rs[0].r1 + rs[0].r2 + rs[0].r3 + b;
    let n1 = rs[0].r3 + b;
    Ok(rs[1..]
        .iter()
        .map(|r| {
            let sq = r.r1 + r.r2 + r.r3 + b;
            let nq = r.r3 + b;
            signed_normalized(&[nq * s1, -(n1 * sq)])
        })
        .collect())
}

/// Normalized b-ratio residuals for any mode count (empty for K=1).
pub fn ratio_residuals(p: &ModelParameters, mus: &[Complex64]) -> Result<Vec<f64>> {
    Ok(ratio_residuals_signed(p, mus)?
        .iter()
        .map(|z| z.norm())
        .collect())
}

fn f_mismatch(p: &ModelParameters, mus: &[Complex64]) -> Result<Vec<f64>> {
    let fs = mus
        .iter()
        .map(|&mu| ratios_for_mu(p, mu).map(|r| r.f))
        .collect::<Result<Vec<_>>>()?;
    Ok(fs[1..]
        .iter()
        .map(|&fq| {
            let d = rel_diff(fs[0], fq);
            if d.is_finite() {
                d
            } else {
                1.0
            }
        })
        .collect())
}

fn guard_outcomes(p: &ModelParameters, mus: &[Complex64]) -> Vec<GuardOutcome> {
    let scale = p.reduced_rate_scale();
    let mut out = vec![GuardOutcome {
        guard: Guard::KpNonzero,
        mode: None,
        passed: p.k_p.norm() > tol::GUARD * scale,
    }];
    for (l, &mu) in mus.iter().enumerate() {
        let failed = match check_guards(p, mu) {
            Err(Error::GuardViolation(g)) => Some(g),
            _ => None,
        };
        for g in [
            Guard::MuNonzero,
            Guard::MuNotKb,
            Guard::ClosedFormDenominator,
        ] {
            out.push(GuardOutcome {
                guard: g,
                mode: Some(l),
                passed: failed != Some(g),
            });
        }
    }
    out.push(GuardOutcome {
        guard: Guard::DistinctRates,
        mode: None,
        passed: spectrum::coincident_pair(mus).is_none(),
    });
    out
}

/// Constraint residuals and guard outcomes without failing on guards.
///
/// K=2 and K=3 use the constraint polynomials in the growth rates; K=4 uses
/// the cross-multiplied b-ratio equalities (left empty when a guard fails,
/// as the ratios are then undefined).
pub fn constraint_report(
    p: &ModelParameters,
    mus: &[Complex64],
    tolerance: f64,
) -> Result<ConstraintReport> {
    let k = mus.len();
    if !(1..=4).contains(&k) {
        return Err(Error::InvalidInput(format!("mode count {k} outside 1..=4")));
    }
    if k == 1 {
        return Ok(ConstraintReport {
            k,
            residuals: vec![],
            signed: vec![],
            guards: vec![],
            f_mismatch: vec![],
            tolerance,
            satisfied: true,
        });
    }
    let mut guards = guard_outcomes(p, mus);
    let guards_ok = guards.iter().all(|g| g.passed);
    let signed: Vec<Complex64> = match k {
        2 | 3 => mus[1..]
            .iter()
            .map(|&mq| signed_normalized(&pair_constraint_terms(p, mus[0], mq)))
            .collect(),
        _ if guards_ok => ratio_residuals_signed(p, mus)?,
        _ => vec![],
    };
    let residuals: Vec<f64> = signed.iter().map(|z| z.norm()).collect();
    let f_mismatch = if guards_ok {
        f_mismatch(p, mus)?
    } else {
        vec![]
    };
    guards.extend(f_mismatch.iter().enumerate().map(|(i, &m)| GuardOutcome {
        guard: Guard::CommonF,
        mode: Some(i + 1),
        passed: m <= tol::F_MISMATCH,
    }));
    let satisfied = guards.iter().all(|g| g.passed)
        && residuals.len() == k - 1
        && residuals.iter().all(|&r| r <= tolerance);
    Ok(ConstraintReport {
        k,
        residuals,
        signed,
        guards,
        f_mismatch,
        tolerance,
        satisfied,
    })
}

/// Strict variant of [`constraint_report`] at the default tolerance:
/// coincident rates yield `DuplicateMu`, a failed admissibility guard
/// `GuardViolation`. A `CommonF` failure only makes the report unsatisfied.
pub fn constraint_residuals(p: &ModelParameters, mus: &[Complex64]) -> Result<ConstraintReport> {
    if let Some((first, second)) = spectrum::coincident_pair(mus) {
        return Err(Error::DuplicateMu { first, second });
    }
    let report = constraint_report(p, mus, tol::CONSTRAINT)?;
    match report.first_inadmissible() {
        Some(g) => Err(Error::GuardViolation(g)),
        None => Ok(report),
    }
}

/// Amplitude-form and b-form residuals of the K=4 ratio equalities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct K4Consistency {
    pub a_form: Vec<f64>,
    pub b_form: Vec<f64>,
    /// Largest `|a_form - b_form|` over modes with nonzero amplitude.
    pub max_disagreement: f64,
}

/// Evaluates the three time-independence conditions of `f` directly from
/// the amplitudes, `(a_{3q} + beta a_{4q}) D_1 = (a_{31} + beta a_{41}) D_q`
/// with `D = a_1 + a_2 + a_3 + beta a_4`, and compares them with the
/// b-form. A zero-amplitude mode contributes a zero a-form residual.
pub fn consistency_check_k4(ms: &ModeSet) -> Result<K4Consistency> {
    if ms.k() != 4 {
        return Err(Error::InvalidInput(format!(
            "consistency check needs 4 modes, got {}",
            ms.k()
        )));
    }
    let p = &ms.parameters;
    let b = p.beta;
    let nd = |m: &Mode| {
        let [a1, a2, a3, a4] = m.amplitudes;
        (a3 + b * a4, a1 + a2 + a3 + b * a4)
    };
    let (n1, d1) = nd(&ms.modes[0]);
    let a_form: Vec<f64> = ms.modes[1..]
        .iter()
        .map(|m| {
            let (nq, dq) = nd(m);
            normalized(&[nq * d1, -(n1 * dq)])
        })
        .collect();
    let b_form = ratio_residuals(p, &ms.mus())?;
    let max_disagreement = a_form
        .iter()
        .zip(&b_form)
        .zip(&ms.modes[1..])
        .filter(|(_, m)| m.amplitudes[3].norm() != 0.0)
        .map(|((a, b), _)| (a - b).abs())
        .fold(0.0, f64::max);
    Ok(K4Consistency {
        a_form,
        b_form,
        max_disagreement,
    })
}

/// A stationary point of the original system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Equilibrium {
    pub state: State,
    /// Normalized quartic residual at `mu = kD`.
    pub quartic_residual: f64,
    /// `||rhs_original(x)||`.
    pub rhs_norm: f64,
    /// `1e-9 ||x|| max_rate`.
    pub bound: f64,
    pub satisfied: bool,
}

/// Equilibrium of the original system: the single-mode solution with
/// `mu = kD`, which requires `kD` to be a quartic root.
pub fn equilibrium(p: &ModelParameters, x4bar: Complex64) -> Result<Equilibrium> {
    let quartic_residual = normalized_residual(&quartic_coefficients(p), p.k_d);
    if !(quartic_residual <= tol::ROOT_MEMBERSHIP) {
        return Err(Error::NotEquilibriumParameterization {
            residual: quartic_residual,
        });
    }
    let r = ratios_for_mu(p, p.k_d)?;
    let state = State::new(r.amplitudes(x4bar), Frame::Original);
    let rhs_norm = rhs_original(p, &state)?.norm();
    let bound = 1e-9 * state.norm() * p.rate_scale();
    Ok(Equilibrium {
        state,
        quartic_residual,
        rhs_norm,
        bound,
        satisfied: rhs_norm <= bound,
    })
}

/// Sets `kD` to the quartic root with the given index (in spectrum order).
pub fn pin_kd_to_root(p: &ModelParameters, index: usize) -> Result<ModelParameters> {
    let s = model_spectrum(p)?;
    let mu = *s.roots.get(index).ok_or_else(|| {
        Error::InvalidInput(format!(
            "root index {index} out of range ({} roots)",
            s.roots.len()
        ))
    })?;
    Ok(p.with(crate::model::Param::KD, mu))
}
