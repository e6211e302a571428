//! The quartic characteristic equation for single-exponential solutions.
//!
//! A state proportional to `exp(mu t)` solves the reduced system exactly
//! when its component ratios `r_m = x_m(0) / x_4(0)` satisfy a small
//! algebraic system. Three of its equations are linear in the ratios, which
//! gives them in closed form. Inserting them into the remaining equation
//! yields a degree-4 polynomial in `mu`.

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compensated::{csum, Expansion};
use crate::cplx;
use crate::error::{Error, Guard, Result};
use crate::model::ModelParameters;
use crate::tol;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Coefficients `c0..c4` of `sum_k c_k mu^k = 0`. `kD` does not enter.
pub fn quartic_coefficients(p: &ModelParameters) -> [Complex64; 5] {
    let (kr, kb, kp, kdv, ki, a, b) = (p.k_r, p.k_b, p.k_p, p.k_dv, p.k_i, p.alpha, p.beta);
    let two = 2.0;

    let c4 = ki - kp + b * kp;

    let c3 = kdv * ki * two - kdv * kp * two + ki * kp - kp * kp + ki * kr * two - kp * kr * two
        + a * ki * kr
        - kb * (ki - (ONE - b) * kp)
        + b * kp * (kdv + ki + kp + kr * two);

    let c2 = (ki - kp) * (kdv * kdv + kr * (kp + kr))
        + a * ki * kr * (kp + kr * two)
        + b * kp * ((ki + kr) * (kp + kr) + a * ki * kr)
        + kdv
            * ((b + two) * ki * kp + ki * (kr + a * kr) * two
                - kp * ((two - b) * kp + (3.0 - b) * kr))
        + kb * ((ONE - b) * kp * (kp + kr * two) + kdv * (-ki * two + kp - b * kp)
            - ki * (kp + kr * two + a * kr + b * kp));

    let c1 = (kdv + kr) * (kdv * kp * (ki - kp - kr) + a * ki * kr * (kdv + kp + kr))
        + b * ki * kp * (kdv * kp + a * kr * (kdv + kp + kr))
        + kb * (-(kdv + kr) * (kdv * ki + (ki - kp) * (kp + kr))
            - a * ki * kr * (kdv * two + kp + kr * two)
            - b * kp * ((ki + kr) * (kp + kr) + kdv * (ki + kp + kr) + a * ki * kr));

    let c0 = -a * kb * ki * kr * (kdv + kp + kr) * (kdv + kr + b * kp);

    [c0, c1, c2, c3, c4]
}

/// Horner evaluation of `sum_k c[k] z^k` (coefficients in ascending order).
pub fn poly_eval(c: &[Complex64], z: Complex64) -> Complex64 {
    c.iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, &ck| acc * z + ck)
}

fn poly_eval_with_derivative(c: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let zero = Complex64::new(0.0, 0.0);
    c.iter()
        .rev()
        .fold((zero, zero), |(p, dp), &ck| (p * z + ck, dp * z + p))
}

/// `|sum c_k z^k| / sum |c_k z^k|`; zero when every term vanishes.
pub fn normalized_residual(c: &[Complex64], z: Complex64) -> f64 {
    let r = z.norm();
    let mut zk = 1.0;
    let mut scale = 0.0;
    for ck in c {
        scale += ck.norm() * zk;
        zk *= r;
    }
    let v = poly_eval(c, z).norm();
    if scale == 0.0 {
        0.0
    } else {
        v / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "degree")]
pub enum SpectrumWarning {
    /// The leading coefficient(s) were trimmed; the actual degree is given.
    DegreeDropped(usize),
}

/// Roots of the characteristic polynomial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarticSpectrum {
    #[serde(with = "cplx::seq")]
    pub coefficients: [Complex64; 5],
    pub degree: usize,
    /// Sorted by real part (descending), ties broken by imaginary part.
    #[serde(with = "cplx::seq")]
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub degenerate: bool,
    pub warnings: Vec<SpectrumWarning>,
}

impl QuarticSpectrum {
    pub fn max_abs_root(&self) -> f64 {
        self.roots.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_residual(&self) -> f64 {
        self.residuals.iter().copied().fold(0.0, f64::max)
    }
}

/// Finds all roots of `sum c_k mu^k` of its actual degree.
///
/// The companion matrix eigenvalues seed Newton iterations on the Horner
/// form; each root is polished while its normalized residual keeps
/// decreasing (at most [`tol::NEWTON_MAX_ITER`] steps).
pub fn solve_quartic(c: &[Complex64; 5]) -> Result<QuarticSpectrum> {
    if c.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::InvalidInput(
            "non-finite polynomial coefficient".into(),
        ));
    }
    let cmax = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
    if cmax == 0.0 {
        return Err(Error::ZeroPolynomial);
    }
    let degree = (0..5)
        .rev()
        .find(|&k| c[k].norm() > tol::COEFF_TRIM * cmax)
        .unwrap_or(0);
    let trimmed = &c[..=degree];

    // exactly vanishing low-order coefficients are exact roots at zero; no
    // nonzero iterate could lower their normalized residual
    let zeros = trimmed.iter().take_while(|z| z.norm() == 0.0).count();
    let reduced = &trimmed[zeros..];
    let mut seeds = vec![Complex64::new(0.0, 0.0); zeros];
    seeds.extend(companion_eigenvalues(reduced));
    let mut roots: Vec<Complex64> = seeds
        .iter()
        .enumerate()
        .map(|(i, &z)| {
            if i < zeros {
                return z;
            }
            let gap = seeds
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &w)| (w - z).norm())
                .fold(f64::INFINITY, f64::min);
            polish(reduced, z, gap)
        })
        .collect();
    sort_roots(&mut roots);

    let residuals = roots
        .iter()
        .map(|&z| normalized_residual(trimmed, z))
        .collect();
    let mut warnings = Vec::new();
    if degree < 4 {
        warnings.push(SpectrumWarning::DegreeDropped(degree));
    }
    let degenerate = degree < 4 || has_coincident(trimmed, &roots);

    Ok(QuarticSpectrum {
        coefficients: *c,
        degree,
        roots,
        residuals,
        degenerate,
        warnings,
    })
}

fn companion_eigenvalues(c: &[Complex64]) -> Vec<Complex64> {
    let d = c.len() - 1;
    match d {
        0 => vec![],
        1 => vec![-c[0] / c[1]],
        _ => {
            let lead = c[d];
            let mut m = DMatrix::<Complex64>::zeros(d, d);
            for j in 0..d {
                m[(0, j)] = -c[d - 1 - j] / lead;
            }
            for i in 1..d {
                m[(i, i - 1)] = ONE;
            }
            let schur =
                Schur::try_new(m.clone(), f64::EPSILON, 10_000).unwrap_or_else(|| Schur::new(m));
            let (_, t) = schur.unpack();
            (0..d).map(|i| t[(i, i)]).collect()
        }
    }
}

/// Newton polishing. Steps are accepted only while they reduce the residual
/// and stay within half the distance to the nearest other seed, so a root
/// cannot migrate onto a neighbour.
fn polish(c: &[Complex64], seed: Complex64, gap: f64) -> Complex64 {
    let mut z = seed;
    let mut res = normalized_residual(c, z);
    for _ in 0..tol::NEWTON_MAX_ITER {
        if res == 0.0 {
            break;
        }
        let (p, dp) = poly_eval_with_derivative(c, z);
        if dp.norm() == 0.0 {
            break;
        }
        let next = z - p / dp;
        if !(next.re.is_finite() && next.im.is_finite()) || (next - seed).norm() > 0.5 * gap {
            break;
        }
        let next_res = normalized_residual(c, next);
        if next_res >= res {
            break;
        }
        z = next;
        res = next_res;
    }
    z
}

/// Real part descending; real parts equal to within a relative `1e-9` are
/// ordered by imaginary part descending.
pub(crate) fn sort_roots(roots: &mut [Complex64]) {
    let scale = roots.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let tie = 1e-9 * scale;
    roots.sort_by(|a, b| b.re.total_cmp(&a.re));
    let mut start = 0;
    while start < roots.len() {
        let mut end = start + 1;
        while end < roots.len() && (roots[end - 1].re - roots[end].re).abs() <= tie {
            end += 1;
        }
        roots[start..end].sort_by(|a, b| b.im.total_cmp(&a.im));
        start = end;
    }
}

pub(crate) fn distinct_threshold(roots: &[Complex64]) -> f64 {
    tol::DISTINCT * roots.iter().map(|z| z.norm()).fold(1.0, f64::max)
}

/// First pair of indices closer than the distinctness threshold.
pub(crate) fn coincident_pair(roots: &[Complex64]) -> Option<(usize, usize)> {
    let thr = distinct_threshold(roots);
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            if (roots[i] - roots[j]).norm() <= thr {
                return Some((i, j));
            }
        }
    }
    None
}

/// Coincident under the distinctness threshold, or closer than the two
/// roots' forward-error bounds. A double root computed in floating point
/// splits by about `sqrt(eps)`, which the relative threshold alone misses.
fn has_coincident(c: &[Complex64], roots: &[Complex64]) -> bool {
    if coincident_pair(roots).is_some() {
        return true;
    }
    let err: Vec<f64> = roots.iter().map(|&z| forward_error(c, z)).collect();
    (0..roots.len())
        .any(|i| (i + 1..roots.len()).any(|j| (roots[i] - roots[j]).norm() <= err[i] + err[j]))
}

/// First-order forward-error bound of a computed root: backward error of a
/// few ulps in every coefficient, divided by `|p'(z)|`.
fn forward_error(c: &[Complex64], z: Complex64) -> f64 {
    let (_, dp) = poly_eval_with_derivative(c, z);
    let r = z.norm();
    let scale: f64 = c.iter().rev().fold(0.0, |acc, ck| acc * r + ck.norm());
    if scale == 0.0 {
        return 0.0;
    }
    8.0 * f64::EPSILON * scale / dp.norm()
}

/// Ratios `x_m(0)/x_4(0)` for a single-exponential mode, and the value of
/// the nonlinearity in closed form.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatioVector {
    #[serde(with = "cplx")]
    pub r1: Complex64,
    #[serde(with = "cplx")]
    pub r2: Complex64,
    #[serde(with = "cplx")]
    pub r3: Complex64,
    /// `F` from the closed form in `mu`.
    #[serde(rename = "F", with = "cplx")]
    pub f: Complex64,
}

impl RatioVector {
    /// `F` from its definition `kI (r3 + beta) / (r1 + r2 + r3 + beta)`.
    pub fn f_definition(&self, p: &ModelParameters) -> Option<Complex64> {
        let den = self.r1 + self.r2 + self.r3 + p.beta;
        let scale = self.r1.norm() + self.r2.norm() + self.r3.norm() + p.beta.norm();
        (den.norm() > tol::DENOMINATOR * scale).then(|| p.k_i * (self.r3 + p.beta) / den)
    }

    /// Amplitude vector `(r1, r2, r3, 1)` scaled by `x4`.
    pub fn amplitudes(&self, x4: Complex64) -> [Complex64; 4] {
        [self.r1 * x4, self.r2 * x4, self.r3 * x4, x4]
    }
}

fn check(ok: bool, g: Guard) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::GuardViolation(g))
    }
}

/// Evaluates the inequality side-conditions for a growth rate.
pub fn check_guards(p: &ModelParameters, mu: Complex64) -> Result<()> {
    let scale = p.reduced_rate_scale();
    check(p.k_p.norm() > tol::GUARD * scale, Guard::KpNonzero)?;
    check(mu.norm() > tol::GUARD * scale, Guard::MuNonzero)?;
    check(
        (mu - p.k_b).norm() > tol::GUARD * mu.norm().max(p.k_b.norm()),
        Guard::MuNotKb,
    )?;
    let omb = ONE - p.beta;
    let g = omb * (p.k_b - mu) - p.k_dv;
    let g_scale = omb.norm() * (p.k_b.norm() + mu.norm()) + p.k_dv.norm();
    check(
        g.norm() > tol::GUARD * g_scale,
        Guard::ClosedFormDenominator,
    )
}

/// Closed-form ratios for growth rate `mu`.
pub fn ratios_for_mu(p: &ModelParameters, mu: Complex64) -> Result<RatioVector> {
    check_guards(p, mu)?;
    let (kr, kb, kp, kdv, ki, a) = (p.k_r, p.k_b, p.k_p, p.k_dv, p.k_i, p.alpha);
    let r3 = csum(&[mu, kdv, kr]) / kp;
    let r1 = a * kr * csum(&[mu, kdv, kp, kr]) / (mu * kp);
    let r2 = -csum(&[mu, kdv]) / kp
        - csum(&[mu, -kb, kdv]) / (mu - kb)
        - (((ONE + a) * mu + a * (kdv + kp)) * kr + a * kr * kr) / (mu * kp);
    let (zero_factor, pole_factor) = closed_form_factors(p, mu);
    let f = -ki * (mu - kb) * zero_factor / (kp * pole_factor);
    Ok(RatioVector { r1, r2, r3, f })
}

/// `mu + kDV + beta kP + kR` and `(1 - beta)(mu - kB) + kDV`, summed
/// without cancellation error: roots close to either zero are common, and
/// plain evaluation there loses most significant digits of `F`.
fn closed_form_factors(p: &ModelParameters, mu: Complex64) -> (Complex64, Complex64) {
    let e = Expansion::from;
    let zero = Expansion::sum(&[&e(mu), &e(p.k_dv), &e(p.beta).mul(&e(p.k_p)), &e(p.k_r)]);
    let omb = Expansion::sum(&[&e(ONE), &e(p.beta).neg()]);
    let shifted = Expansion::sum(&[&e(mu), &e(p.k_b).neg()]);
    let pole = Expansion::sum(&[&omb.mul(&shifted), &e(p.k_dv)]);
    (zero.value(), pole.value())
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

/// Normalized residuals of the four ratio equations, using `F = r.f`:
///
/// ```text
/// mu r1 = alpha kR (r3 + 1)
/// mu r2 = kB r1 + (kB - F) r2 + (kB + (1 - alpha) kR)(r3 + 1)
/// mu r3 = F r2 - (kR + kP) r3
/// mu    = kP r3 - (kR + kDV)
/// ```
pub fn algebraic_residuals(p: &ModelParameters, mu: Complex64, r: &RatioVector) -> [f64; 4] {
    let (kr, kb, kp, kdv, a) = (p.k_r, p.k_b, p.k_p, p.k_dv, p.alpha);
    let cross = kb + (ONE - a) * kr;
    [
        normalized(&[mu * r.r1, -a * kr * r.r3, -a * kr]),
        normalized(&[
            mu * r.r2,
            -kb * r.r1,
            -kb * r.r2,
            r.f * r.r2,
            -cross * r.r3,
            -cross,
        ]),
        normalized(&[mu * r.r3, -r.f * r.r2, kr * r.r3, kp * r.r3]),
        normalized(&[mu, -kp * r.r3, kr, kdv]),
    ]
}

/// Value and term-magnitude sum of the third ratio equation
/// `mu r3 - F r2 + (kR + kP) r3` with the closed-form ratios substituted.
fn ratio_equation(p: &ModelParameters, mu: Complex64) -> Option<(Complex64, f64)> {
    let r = ratios_for_mu(p, mu).ok()?;
    let terms = [mu * r.r3, -r.f * r.r2, p.k_r * r.r3, p.k_p * r.r3];
    let v: Complex64 = terms.iter().sum();
    let s: f64 = terms.iter().map(|z| z.norm()).sum();
    (v.re.is_finite() && v.im.is_finite() && s > 0.0).then_some((v, s))
}

fn max_ratio_residual(p: &ModelParameters, mu: Complex64) -> f64 {
    match ratios_for_mu(p, mu) {
        Ok(r) => algebraic_residuals(p, mu, &r)
            .into_iter()
            .fold(0.0, f64::max),
        Err(_) => f64::INFINITY,
    }
}

/// Newton steps on the third ratio equation. When the quartic coefficients
/// suffer cancellation this equation pins the root more tightly than the
/// polynomial does; steps are tiny and kept only while they lower the
/// ratio residuals without pushing the polynomial residual past the root
/// tolerance.
fn refine_on_ratios(p: &ModelParameters, c: &[Complex64], mu: Complex64) -> Complex64 {
    let mut z = mu;
    let mut best = max_ratio_residual(p, z);
    let poly_cap = normalized_residual(c, z).max(tol::ROOT_RESIDUAL);
    for _ in 0..4 {
        let Some((e, scale)) = ratio_equation(p, z) else {
            break;
        };
        if e.norm() <= f64::EPSILON * scale {
            break;
        }
        let h = 1e-7 * z.norm().max(1e-3);
        let (Some((ep, _)), Some((em, _))) = (ratio_equation(p, z + h), ratio_equation(p, z - h))
        else {
            break;
        };
        let d = (ep - em) / (2.0 * h);
        let step = e / d;
        if !(step.re.is_finite() && step.im.is_finite()) || step.norm() > 1e-6 * z.norm().max(1.0) {
            break;
        }
        let next = z - step;
        let res = max_ratio_residual(p, next);
        if !(res < best) || normalized_residual(c, next) > poly_cap {
            break;
        }
        z = next;
        best = res;
    }
    z
}

/// Quartic spectrum of the model: [`solve_quartic`] on
/// [`quartic_coefficients`], with each admissible root further refined on
/// the ratio equations.
pub fn model_spectrum(p: &ModelParameters) -> Result<QuarticSpectrum> {
    let mut s = solve_quartic(&quartic_coefficients(p))?;
    let c = &s.coefficients[..=s.degree];
    let refined: Vec<Complex64> = s
        .roots
        .iter()
        .map(|&mu| refine_on_ratios(p, c, mu))
        .collect();
    s.roots = refined;
    sort_roots(&mut s.roots);
    s.residuals = s.roots.iter().map(|&z| normalized_residual(c, z)).collect();
    s.degenerate = s.degree < 4 || has_coincident(c, &s.roots);
    Ok(s)
}

/// Per-root diagnostics: ratios when the guards pass, and the sign pattern
/// of `(r1, r2, r3, 1)` when the ratios are real.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RootInfo {
    #[serde(with = "cplx")]
    pub mu: Complex64,
    pub ratios: Option<RatioVector>,
    pub guard_violation: Option<Guard>,
    pub sign_pattern: Option<[i8; 4]>,
}

pub fn describe_roots(p: &ModelParameters, spectrum: &QuarticSpectrum) -> Vec<RootInfo> {
    spectrum
        .roots
        .iter()
        .map(|&mu| match ratios_for_mu(p, mu) {
            Ok(r) => {
                let comps = [r.r1, r.r2, r.r3, ONE];
                let real = comps
                    .iter()
                    .all(|z| z.im.abs() <= 1e-10 * z.norm().max(1e-300));
                let sign = |z: &Complex64| match z.re {
                    x if x > 0.0 => 1,
                    x if x < 0.0 => -1,
                    _ => 0,
                };
                RootInfo {
                    mu,
                    ratios: Some(r),
                    guard_violation: None,
                    sign_pattern: real.then(|| comps.map(|z| sign(&z))),
                }
            }
            Err(Error::GuardViolation(g)) => RootInfo {
                mu,
                ratios: None,
                guard_violation: Some(g),
                sign_pattern: None,
            },
            Err(_) => unreachable!("ratios_for_mu only fails on guards"),
        })
        .collect()
}
