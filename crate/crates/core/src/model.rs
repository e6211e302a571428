//! The original and `kD`-reduced dynamical systems.
//!
//! The original system carries an extra `-kD x~n` term in every equation.
//! Writing `x~n(t) = xn(t) exp(-kD t)` removes it, so the reduced system
//! depends on seven parameters only. States carry a [`Frame`] tag so the two
//! coordinate systems are never mixed.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cplx;
use crate::error::{Error, Result};
use crate::tol;

/// The eight constants of the model. Real inputs are embedded as complex
/// numbers with zero imaginary part.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParameters", into = "RawParameters")]
pub struct ModelParameters {
    pub k_d: Complex64,
    pub k_r: Complex64,
    pub k_b: Complex64,
    pub k_p: Complex64,
    pub k_dv: Complex64,
    pub k_i: Complex64,
    pub alpha: Complex64,
    pub beta: Complex64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParameters {
    #[serde(rename = "kD", with = "cplx")]
    k_d: Complex64,
    #[serde(rename = "kR", with = "cplx")]
    k_r: Complex64,
    #[serde(rename = "kB", with = "cplx")]
    k_b: Complex64,
    #[serde(rename = "kP", with = "cplx")]
    k_p: Complex64,
    #[serde(rename = "kDV", with = "cplx")]
    k_dv: Complex64,
    #[serde(rename = "kI", with = "cplx")]
    k_i: Complex64,
    #[serde(with = "cplx")]
    alpha: Complex64,
    #[serde(with = "cplx")]
    beta: Complex64,
}

impl TryFrom<RawParameters> for ModelParameters {
    type Error = Error;

    fn try_from(r: RawParameters) -> Result<Self> {
        let p = ModelParameters {
            k_d: r.k_d,
            k_r: r.k_r,
            k_b: r.k_b,
            k_p: r.k_p,
            k_dv: r.k_dv,
            k_i: r.k_i,
            alpha: r.alpha,
            beta: r.beta,
        };
        p.validate()?;
        Ok(p)
    }
}

impl From<ModelParameters> for RawParameters {
    fn from(p: ModelParameters) -> Self {
        RawParameters {
            k_d: p.k_d,
            k_r: p.k_r,
            k_b: p.k_b,
            k_p: p.k_p,
            k_dv: p.k_dv,
            k_i: p.k_i,
            alpha: p.alpha,
            beta: p.beta,
        }
    }
}

/// Names of the individual parameters, as used in JSON and on the command
/// line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Param {
    #[serde(rename = "kD")]
    KD,
    #[serde(rename = "kR")]
    KR,
    #[serde(rename = "kB")]
    KB,
    #[serde(rename = "kP")]
    KP,
    #[serde(rename = "kDV")]
    KDV,
    #[serde(rename = "kI")]
    KI,
    #[serde(rename = "alpha")]
    Alpha,
    #[serde(rename = "beta")]
    Beta,
}

impl Param {
    pub const ALL: [Param; 8] = [
        Param::KD,
        Param::KR,
        Param::KB,
        Param::KP,
        Param::KDV,
        Param::KI,
        Param::Alpha,
        Param::Beta,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Param::KD => "kD",
            Param::KR => "kR",
            Param::KB => "kB",
            Param::KP => "kP",
            Param::KDV => "kDV",
            Param::KI => "kI",
            Param::Alpha => "alpha",
            Param::Beta => "beta",
        }
    }
}

impl fmt::Display for Param {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Param {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Param::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown parameter name `{s}`")))
    }
}

impl ModelParameters {
    /// Real-valued parameter set, argument order `kD, kR, kB, kP, kDV, kI,
    /// alpha, beta`.
    #[allow(clippy::too_many_arguments)]
    pub fn real(
        k_d: f64,
        k_r: f64,
        k_b: f64,
        k_p: f64,
        k_dv: f64,
        k_i: f64,
        alpha: f64,
        beta: f64,
    ) -> Self {
        let c = |x| Complex64::new(x, 0.0);
        ModelParameters {
            k_d: c(k_d),
            k_r: c(k_r),
            k_b: c(k_b),
            k_p: c(k_p),
            k_dv: c(k_dv),
            k_i: c(k_i),
            alpha: c(alpha),
            beta: c(beta),
        }
    }

    pub fn get(&self, p: Param) -> Complex64 {
        match p {
            Param::KD => self.k_d,
            Param::KR => self.k_r,
            Param::KB => self.k_b,
            Param::KP => self.k_p,
            Param::KDV => self.k_dv,
            Param::KI => self.k_i,
            Param::Alpha => self.alpha,
            Param::Beta => self.beta,
        }
    }

    pub fn set(&mut self, p: Param, v: Complex64) {
        match p {
            Param::KD => self.k_d = v,
            Param::KR => self.k_r = v,
            Param::KB => self.k_b = v,
            Param::KP => self.k_p = v,
            Param::KDV => self.k_dv = v,
            Param::KI => self.k_i = v,
            Param::Alpha => self.alpha = v,
            Param::Beta => self.beta = v,
        }
    }

    pub fn with(mut self, p: Param, v: Complex64) -> Self {
        self.set(p, v);
        self
    }

    pub fn values(&self) -> [Complex64; 8] {
        Param::ALL.map(|p| self.get(p))
    }

    pub fn validate(&self) -> Result<()> {
        for p in Param::ALL {
            let v = self.get(p);
            if !(v.re.is_finite() && v.im.is_finite()) {
                return Err(Error::InvalidInput(format!("parameter {p} is not finite")));
            }
        }
        Ok(())
    }

    /// True iff all eight values are real and non-negative.
    pub fn strictly_epidemic(&self) -> bool {
        self.values().iter().all(|v| v.im == 0.0 && v.re >= 0.0)
    }

    pub fn is_real(&self) -> bool {
        self.values().iter().all(|v| v.im == 0.0)
    }

    /// Largest modulus among the six rate constants.
    pub fn rate_scale(&self) -> f64 {
        [self.k_d, self.k_r, self.k_b, self.k_p, self.k_dv, self.k_i]
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }

    /// Largest modulus among the rates entering the reduced system.
    pub fn reduced_rate_scale(&self) -> f64 {
        [self.k_r, self.k_b, self.k_p, self.k_dv, self.k_i]
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

/// Which coordinates a state is expressed in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// The original variables, with `kD` present.
    Original,
    /// `kD` eliminated by the exponential weight.
    Reduced,
}

/// Four host populations (immune, susceptible, asymptomatic, symptomatic).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct State {
    #[serde(with = "cplx::seq")]
    pub x: [Complex64; 4],
    pub frame: Frame,
}

impl State {
    pub fn new(x: [Complex64; 4], frame: Frame) -> Self {
        State { x, frame }
    }

    pub fn reduced(x: [Complex64; 4]) -> Self {
        State::new(x, Frame::Reduced)
    }

    pub fn original(x: [Complex64; 4]) -> Self {
        State::new(x, Frame::Original)
    }

    pub fn from_real(x: [f64; 4], frame: Frame) -> Self {
        State::new(x.map(|v| Complex64::new(v, 0.0)), frame)
    }

    pub fn zero(frame: Frame) -> Self {
        State::new([Complex64::new(0.0, 0.0); 4], frame)
    }

    pub fn scale(&self, s: Complex64) -> State {
        State::new(self.x.map(|v| v * s), self.frame)
    }

    /// Euclidean norm over the four complex components.
    pub fn norm(&self) -> f64 {
        self.x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn distance(&self, other: &State) -> f64 {
        self.x
            .iter()
            .zip(&other.x)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.x.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub(crate) fn axpy(&self, a: f64, y: &State) -> State {
        let mut x = self.x;
        for (xi, yi) in x.iter_mut().zip(&y.x) {
            *xi += yi * a;
        }
        State::new(x, self.frame)
    }
}

/// Numerator and denominator of `f / kI`, i.e. `(x3 + beta x4)` over
/// `(x1 + x2 + x3 + beta x4)`, with the singularity check applied.
pub(crate) fn h_parts(beta: Complex64, x: &[Complex64; 4]) -> Result<(Complex64, Complex64)> {
    let bx4 = beta * x[3];
    let den = x[0] + x[1] + x[2] + bx4;
    let scale = x[0].norm() + x[1].norm() + x[2].norm() + bx4.norm();
    if !(den.norm() > tol::DENOMINATOR * scale) {
        return Err(Error::SingularDenominator { time: None });
    }
    Ok((x[2] + bx4, den))
}

/// The nonlinearity `kI (x3 + beta x4) / (x1 + x2 + x3 + beta x4)`.
pub fn f_of_state(p: &ModelParameters, s: &State) -> Result<Complex64> {
    let (num, den) = h_parts(p.beta, &s.x)?;
    Ok(p.k_i * num / den)
}

fn expect_frame(s: &State, frame: Frame) -> Result<()> {
    if s.frame != frame {
        return Err(Error::FrameMismatch {
            expected: frame,
            found: s.frame,
        });
    }
    Ok(())
}

/// Right-hand side of the reduced system, shared by both frames; `k_d`
/// adds the `-kD xn` decay terms.
fn rhs(p: &ModelParameters, x: &[Complex64; 4], k_d: Complex64) -> Result<[Complex64; 4]> {
    let f = p.k_i * {
        let (num, den) = h_parts(p.beta, x)?;
        num / den
    };
    let one = Complex64::new(1.0, 0.0);
    let infected = x[2] + x[3];
    Ok([
        p.alpha * p.k_r * infected - k_d * x[0],
        p.k_b * x[0] + (p.k_b - k_d - f) * x[1] + (p.k_b + (one - p.alpha) * p.k_r) * infected,
        f * x[1] - (p.k_r + k_d + p.k_p) * x[2],
        p.k_p * x[2] - (p.k_r + k_d + p.k_dv) * x[3],
    ])
}

/// Time derivative under the reduced (`kD`-free) system.
pub fn rhs_reduced(p: &ModelParameters, s: &State) -> Result<State> {
    expect_frame(s, Frame::Reduced)?;
    Ok(State::reduced(rhs(p, &s.x, Complex64::new(0.0, 0.0))?))
}

/// Time derivative under the original system.
pub fn rhs_original(p: &ModelParameters, s: &State) -> Result<State> {
    expect_frame(s, Frame::Original)?;
    Ok(State::original(rhs(p, &s.x, p.k_d)?))
}

/// Jacobian `d rhs_i / d x_j` of the reduced system at `s`. Zero-degree
/// homogeneous in `s`, so it is constant along any single-mode ray.
pub fn jacobian_reduced(p: &ModelParameters, s: &State) -> Result<[[Complex64; 4]; 4]> {
    expect_frame(s, Frame::Reduced)?;
    let (num, den) = h_parts(p.beta, &s.x)?;
    let f = p.k_i * num / den;
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    // df/dx_j = (kI dnum_j - f dden_j) / den
    let dnum = [zero, zero, one, p.beta];
    let dden = [one, one, one, p.beta];
    let df: [Complex64; 4] = std::array::from_fn(|j| (p.k_i * dnum[j] - f * dden[j]) / den);
    let ar = p.alpha * p.k_r;
    let cross = p.k_b + (one - p.alpha) * p.k_r;
    let mut j = [
        [zero, zero, ar, ar],
        [p.k_b, p.k_b - f, cross, cross],
        [zero, f, -(p.k_r + p.k_p), zero],
        [zero, zero, p.k_p, -(p.k_r + p.k_dv)],
    ];
    for c in 0..4 {
        j[1][c] -= df[c] * s.x[1];
        j[2][c] += df[c] * s.x[1];
    }
    Ok(j)
}

/// Maps a reduced-frame state at time `t` to original coordinates:
/// `x~n(t) = xn(t) exp(-kD t)`.
pub fn to_original(p: &ModelParameters, x_reduced: &State, t: f64) -> Result<State> {
    expect_frame(x_reduced, Frame::Reduced)?;
    if !t.is_finite() {
        return Err(Error::InvalidInput("time is not finite".into()));
    }
    let w = (-p.k_d * t).exp();
    Ok(State::original(x_reduced.x.map(|v| v * w)))
}

/// Inverse of [`to_original`].
pub fn to_reduced(p: &ModelParameters, x_original: &State, t: f64) -> Result<State> {
    expect_frame(x_original, Frame::Original)?;
    if !t.is_finite() {
        return Err(Error::InvalidInput("time is not finite".into()));
    }
    let w = (p.k_d * t).exp();
    Ok(State::reduced(x_original.x.map(|v| v * w)))
}
