#![allow(dead_code)]

use expomodes::{Complex64, ModelParameters};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn c(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Rates log-uniform in [0.01, 10], alpha and beta uniform in [0.05, 0.95].
pub fn random_params(rng: &mut StdRng) -> ModelParameters {
    let mut rate = || 10f64.powf(rng.gen_range(-2.0..1.0));
    let (kd, kr, kb, kp, kdv, ki) = (rate(), rate(), rate(), rate(), rate(), rate());
    ModelParameters::real(
        kd,
        kr,
        kb,
        kp,
        kdv,
        ki,
        rng.gen_range(0.05..0.95),
        rng.gen_range(0.05..0.95),
    )
}

pub fn cx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn random_state(rng: &mut StdRng) -> [f64; 4] {
    [
        rng.gen_range(0.1..2.0),
        rng.gen_range(0.1..2.0),
        rng.gen_range(0.1..2.0),
        rng.gen_range(0.1..2.0),
    ]
}

pub fn rel_err(a: Complex64, b: Complex64) -> f64 {
    let s = a.norm().max(b.norm());
    if s == 0.0 {
        0.0
    } else {
        (a - b).norm() / s
    }
}

/// Collects K=2 sweep solutions over random parameter sets until `want`
/// are found (or the trial budget runs out).
pub fn k2_solutions(seed: u64, want: usize) -> Vec<expomodes::SweepSolution> {
    use expomodes::{sweep_constraint, Param, SweepOptions};
    let frees = [
        Param::KR,
        Param::KB,
        Param::KP,
        Param::KDV,
        Param::KI,
        Param::Alpha,
        Param::Beta,
    ];
    let pairs = [[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]];
    let mut r = rng(seed);
    let mut out = Vec::new();
    for trial in 0..400 {
        if out.len() >= want {
            break;
        }
        let p = random_params(&mut r);
        let free = frees[trial % frees.len()];
        let unit = matches!(free, Param::Alpha | Param::Beta);
        let range = if unit { (0.05, 0.95) } else { (0.01, 10.0) };
        for sel in pairs {
            let mut o = SweepOptions::new(free, range, 48, sel.to_vec());
            o.log_spacing = !unit;
            let res = sweep_constraint(&p, &o).expect("sweep");
            out.extend(res.solutions);
        }
    }
    out.truncate(want);
    out
}

pub mod exact {
    use expomodes::{Complex64, ModelParameters};
    use num_complex::Complex;
    use num_rational::BigRational;
    use num_traits::{One, ToPrimitive};

    pub type Q = Complex<BigRational>;

    pub fn q(z: Complex64) -> Q {
        Complex::new(
            BigRational::from_float(z.re).expect("finite"),
            BigRational::from_float(z.im).expect("finite"),
        )
    }

    pub fn back(z: &Q) -> Complex64 {
        Complex64::new(z.re.to_f64().unwrap(), z.im.to_f64().unwrap())
    }

    /// `kI (r3 + beta) / (r1 + r2 + r3 + beta)` with the ratio formulas
    /// evaluated exactly at the given (f64) parameters and growth rate.
    pub fn f_definition(p: &ModelParameters, mu: Complex64) -> Complex64 {
        let [kr, kb, kp, kdv, ki, a, b] =
            [p.k_r, p.k_b, p.k_p, p.k_dv, p.k_i, p.alpha, p.beta].map(q);
        let mu = q(mu);
        let one = Q::one();
        let r3 = (&mu + &kdv + &kr) / &kp;
        let r1 = &a * &kr * (&mu + &kdv + &kp + &kr) / (&mu * &kp);
        let r2 = -(&mu + &kdv) / &kp
            - (&mu - &kb + &kdv) / (&mu - &kb)
            - (((&one + &a) * &mu + &a * (&kdv + &kp)) * &kr + &a * &kr * &kr) / (&mu * &kp);
        back(&(&ki * (&r3 + &b) / (r1 + r2 + &r3 + &b)))
    }
}

/// Quartic coefficients recovered by interpolation, independent of the
/// library's expanded formulas.
pub mod oracle {
    use std::f64::consts::PI;

    use super::c;
    use expomodes::{Complex64, ModelParameters};
    use nalgebra::{DMatrix, DVector};

    /// Third ratio equation `mu r3 - (F r2 - (kR + kP) r3)` with the ratios and
    /// the closed form of `F` substituted, written out independently of the
    /// library.
    fn third_ratio_equation(p: &ModelParameters, mu: Complex64) -> Complex64 {
        let (kr, kb, kp, kdv, ki, a, b) = (p.k_r, p.k_b, p.k_p, p.k_dv, p.k_i, p.alpha, p.beta);
        let one = c(1.0);
        let r3 = (mu + kdv + kr) / kp;
        let r2 = -(mu + kdv) / kp
            - (mu - kb + kdv) / (mu - kb)
            - (((one + a) * mu + a * (kdv + kp)) * kr + a * kr * kr) / (mu * kp);
        let g = (one - b) * (mu - kb) + kdv;
        let f = -ki * (mu - kb) * (mu + kdv + b * kp + kr) / (kp * g);
        mu * r3 - (f * r2 - (kr + kp) * r3)
    }

    /// Clears denominators with `-mu kP^2 G(mu)` at five points on a circle of
    /// the given radius and interpolates the degree-4 polynomial. Also returns
    /// the largest sampled magnitude, which bounds the rounding error.
    fn interpolate_on_circle(p: &ModelParameters, radius: f64) -> ([Complex64; 5], f64) {
        let pts: Vec<Complex64> = (0..5)
            .map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / 5.0 + 0.3))
            .collect();
        let vals: Vec<Complex64> = pts
            .iter()
            .map(|&mu| {
                let g = (c(1.0) - p.beta) * (mu - p.k_b) + p.k_dv;
                third_ratio_equation(p, mu) * (-mu * p.k_p * p.k_p * g)
            })
            .collect();
        let vmax = vals.iter().map(|z| z.norm()).fold(0.0, f64::max);
        let v = DMatrix::from_fn(5, 5, |i, k| pts[i].powu(k as u32));
        let sol = v
            .lu()
            .solve(&DVector::from_vec(vals))
            .expect("Vandermonde solve");
        ([sol[0], sol[1], sol[2], sol[3], sol[4]], vmax)
    }

    /// Interpolation oracle. The error of `c_k` from a circle of radius `R` is
    /// about `eps max|Q| / R^k`, so each coefficient is taken from the radius
    /// (out of a geometric ladder) that minimizes this bound.
    pub fn interpolated_coefficients(p: &ModelParameters) -> [Complex64; 5] {
        let mut best = [(f64::INFINITY, c(0.0)); 5];
        for m in -12..=8 {
            let radius = 2f64.powi(m);
            let (coeffs, vmax) = interpolate_on_circle(p, radius);
            for k in 0..5 {
                let bound = vmax / radius.powi(k as i32);
                if bound < best[k].0 {
                    best[k] = (bound, coeffs[k]);
                }
            }
        }
        best.map(|(_, z)| z)
    }
}
