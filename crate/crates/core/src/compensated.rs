//! Error-free sums and products for the few closed-form factors whose
//! evaluation cancels near roots of interest.

use num_complex::Complex64;

fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

/// Sum of the terms, accurate as if computed in twice the working precision
/// (cascaded `two_sum`).
fn sum2(terms: &[f64]) -> f64 {
    let mut s = 0.0;
    let mut err = 0.0;
    for &t in terms {
        let (ns, e) = two_sum(s, t);
        s = ns;
        err += e;
    }
    s + err
}

/// Sum of complex values with a single final rounding per component.
pub(crate) fn csum(terms: &[Complex64]) -> Complex64 {
    let re: Vec<f64> = terms.iter().map(|z| z.re).collect();
    let im: Vec<f64> = terms.iter().map(|z| z.im).collect();
    Complex64::new(sum2(&re), sum2(&im))
}

/// An unevaluated sum of complex terms held as real and imaginary parts.
#[derive(Debug, Clone, Default)]
pub(crate) struct Expansion {
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Expansion {
    pub fn from(z: Complex64) -> Self {
        Expansion {
            re: vec![z.re],
            im: vec![z.im],
        }
    }

    pub fn sum(parts: &[&Expansion]) -> Self {
        let mut out = Expansion::default();
        for p in parts {
            out.re.extend_from_slice(&p.re);
            out.im.extend_from_slice(&p.im);
        }
        out
    }

    pub fn neg(&self) -> Self {
        Expansion {
            re: self.re.iter().map(|x| -x).collect(),
            im: self.im.iter().map(|x| -x).collect(),
        }
    }

    /// Exact product: every term pair contributes through `two_prod`.
    pub fn mul(&self, other: &Expansion) -> Self {
        let mut out = Expansion::default();
        let push = |dst: &mut Vec<f64>, a: f64, b: f64, sign: f64| {
            let (p, e) = two_prod(a, b);
            dst.push(sign * p);
            dst.push(sign * e);
        };
        for &ar in &self.re {
            for &br in &other.re {
                push(&mut out.re, ar, br, 1.0);
            }
            for &bi in &other.im {
                push(&mut out.im, ar, bi, 1.0);
            }
        }
        for &ai in &self.im {
            for &bi in &other.im {
                push(&mut out.re, ai, bi, -1.0);
            }
            for &br in &other.re {
                push(&mut out.im, ai, br, 1.0);
            }
        }
        out
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(sum2(&self.re), sum2(&self.im))
    }
}
