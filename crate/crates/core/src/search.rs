//! Solving the multi-mode constraints for free model parameters.
//!
//! With all but one parameter fixed numerically, the K=2 constraint becomes
//! a scalar function of the remaining parameter. [`sweep_constraint`]
//! samples it on a grid while following the selected quartic roots by
//! continuity, then refines each sign change. For K=3 and K=4 the number of
//! free parameters equals the number of constraints and [`solve_multi`]
//! runs a damped Newton iteration in complex arithmetic.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cplx;
use crate::error::{Error, Guard, Result};
use crate::model::{ModelParameters, Param};
use crate::solutions::{constraint_report, ConstraintReport};
use crate::spectrum::model_spectrum;
use crate::tol;

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for perm in permutations(n - 1) {
        for pos in 0..=perm.len() {
            let mut p = perm.clone();
            p.insert(pos, n - 1);
            out.push(p);
        }
    }
    out
}

fn min_gap(roots: &[Complex64]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..roots.len() {
        for j in i + 1..roots.len() {
            gap = gap.min((roots[i] - roots[j]).norm());
        }
    }
    gap
}

/// Reorders `new` to follow `prev` with the smallest total displacement.
/// Returns the reordered roots and the largest single displacement.
pub(crate) fn match_roots(prev: &[Complex64], new: &[Complex64]) -> (Vec<Complex64>, f64) {
    debug_assert_eq!(prev.len(), new.len());
    let best = permutations(new.len())
        .into_iter()
        .map(|perm| {
            let cost: f64 = perm
                .iter()
                .zip(prev)
                .map(|(&j, a)| (new[j] - a).norm())
                .sum();
            (cost, perm)
        })
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map(|(_, perm)| perm)
        .unwrap_or_default();
    let matched: Vec<Complex64> = best.iter().map(|&j| new[j]).collect();
    let jump = matched
        .iter()
        .zip(prev)
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    (matched, jump)
}

/// Whether a new root set continues `prev` without a tracking break.
fn continues(prev: &[Complex64], jump: f64) -> bool {
    prev.len() < 2 || jump <= 0.5 * min_gap(prev)
}

fn is_real_valued(z: Complex64) -> bool {
    z.im.abs() <= 1e-10 * z.re.abs() + 1e-14
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOptions {
    pub free: Param,
    pub range: (f64, f64),
    pub grid_n: usize,
    /// Root indices (into the spectrum ordering at the first grid point);
    /// the mode count is its length.
    pub selection: Vec<usize>,
    pub log_spacing: bool,
    pub constraint_tol: f64,
}

impl SweepOptions {
    pub fn new(free: Param, range: (f64, f64), grid_n: usize, selection: Vec<usize>) -> Self {
        SweepOptions {
            free,
            range,
            grid_n,
            selection,
            log_spacing: false,
            constraint_tol: tol::CONSTRAINT,
        }
    }

    fn validate(&self) -> Result<()> {
        let (lo, hi) = self.range;
        let bad = |m: String| Err(Error::InvalidInput(m));
        if self.free == Param::KD {
            return bad("kD does not enter the constraints; choose another free parameter".into());
        }
        if self.grid_n < 8 {
            return bad(format!("grid_n = {} must be at least 8", self.grid_n));
        }
        if !(lo.is_finite() && hi.is_finite() && lo < hi) {
            return bad(format!("invalid range [{lo}, {hi}]"));
        }
        if self.log_spacing && lo <= 0.0 {
            return bad("log spacing needs a positive range".into());
        }
        validate_selection(&self.selection)
    }

    fn grid(&self) -> Vec<f64> {
        let (lo, hi) = self.range;
        let n = self.grid_n;
        (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                if self.log_spacing {
                    (lo.ln() + s * (hi.ln() - lo.ln())).exp()
                } else {
                    lo + s * (hi - lo)
                }
            })
            .collect()
    }
}

fn validate_selection(sel: &[usize]) -> Result<()> {
    if !(1..=4).contains(&sel.len()) {
        return Err(Error::InvalidInput(format!(
            "selection of {} roots; expected 1..=4",
            sel.len()
        )));
    }
    for (i, &a) in sel.iter().enumerate() {
        if a > 3 {
            return Err(Error::InvalidInput(format!(
                "root index {a} out of range 0..=3"
            )));
        }
        if sel[..i].contains(&a) {
            return Err(Error::DuplicateMu {
                first: sel.iter().position(|&b| b == a).unwrap_or(0),
                second: i,
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    /// All roots, in tracked order.
    #[serde(with = "cplx::seq")]
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    /// First normalized residual when it is real-valued.
    pub signed: Option<f64>,
    pub guards_ok: bool,
    pub failed_guard: Option<Guard>,
    pub tracking_break: bool,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSolution {
    pub value: f64,
    pub parameters: ModelParameters,
    /// Selected roots at the solution.
    #[serde(with = "cplx::seq")]
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    /// Grid indices enclosing the solution.
    pub bracket: (usize, usize),
    /// Bracket widths after each bisection step.
    pub bisection_widths: Vec<f64>,
    pub secant_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectedBracket {
    pub bracket: (usize, usize),
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub free: Param,
    pub k: usize,
    pub selection: Vec<usize>,
    pub points: Vec<SweepPoint>,
    pub breaks: Vec<usize>,
    pub brackets: Vec<(usize, usize)>,
    pub solutions: Vec<SweepSolution>,
    pub rejected: Vec<RejectedBracket>,
    /// K=1: no constraint, the whole range is a solution.
    pub whole_range: bool,
}

pub const SWEEP_CSV_HEADER: [&str; 9] = [
    "value",
    "residual_1",
    "residual_2",
    "residual_3",
    "signed",
    "guards_ok",
    "failed_guard",
    "tracking_break",
    "satisfied",
];

impl SweepResult {
    pub fn grid(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.value).collect()
    }

    /// One row per grid value; missing residuals are empty cells.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> csv::Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(SWEEP_CSV_HEADER)?;
        for pt in &self.points {
            let mut row = vec![pt.value.to_string()];
            for i in 0..3 {
                row.push(
                    pt.residuals
                        .get(i)
                        .map(|r| r.to_string())
                        .unwrap_or_default(),
                );
            }
            row.push(pt.signed.map(|s| s.to_string()).unwrap_or_default());
            row.push(pt.guards_ok.to_string());
            row.push(pt.failed_guard.map(|g| g.to_string()).unwrap_or_default());
            row.push(pt.tracking_break.to_string());
            row.push(pt.satisfied.to_string());
            out.write_record(&row)?;
        }
        out.flush()?;
        Ok(())
    }
}

struct Eval {
    roots: Vec<Complex64>,
    report: Option<ConstraintReport>,
    signed: Option<f64>,
}

fn evaluate_at(
    base: &ModelParameters,
    opts: &SweepOptions,
    value: f64,
    roots: Vec<Complex64>,
) -> Result<Eval> {
    let p = base.with(opts.free, Complex64::new(value, 0.0));
    if opts.selection.iter().any(|&i| i >= roots.len()) {
        return Ok(Eval {
            roots,
            report: None,
            signed: None,
        });
    }
    let mus: Vec<Complex64> = opts.selection.iter().map(|&i| roots[i]).collect();
    let report = constraint_report(&p, &mus, opts.constraint_tol)?;
    let signed = match (report.admissible(), report.signed.first()) {
        (true, Some(&z)) if is_real_valued(z) => Some(z.re),
        _ => None,
    };
    Ok(Eval {
        roots,
        report: Some(report),
        signed,
    })
}

/// Sweeps one parameter and solves the selected constraint for it.
pub fn sweep_constraint(base: &ModelParameters, opts: &SweepOptions) -> Result<SweepResult> {
    base.validate()?;
    opts.validate()?;
    let grid = opts.grid();
    let spectra: Vec<Option<Vec<Complex64>>> = grid
        .par_iter()
        .map(|&v| {
            let p = base.with(opts.free, Complex64::new(v, 0.0));
            model_spectrum(&p).ok().map(|s| s.roots)
        })
        .collect();

    let mut points = Vec::with_capacity(grid.len());
    let mut breaks = Vec::new();
    let mut prev: Option<Vec<Complex64>> = None;
    for (i, (&v, sorted)) in grid.iter().zip(spectra).enumerate() {
        let sorted = sorted.unwrap_or_default();
        let (tracked, brk) = match &prev {
            Some(pr) if pr.len() == sorted.len() => {
                let (m, jump) = match_roots(pr, &sorted);
                let ok = continues(pr, jump);
                (m, !ok)
            }
            Some(_) => (sorted, true),
            None => (sorted, false),
        };
        if brk {
            breaks.push(i);
        }
        let ev = evaluate_at(base, opts, v, tracked.clone())?;
        let (residuals, guards_ok, failed_guard, satisfied) = match &ev.report {
            Some(r) => (
                r.residuals.clone(),
                r.admissible(),
                r.first_inadmissible(),
                r.satisfied,
            ),
            None => (vec![], false, None, false),
        };
        points.push(SweepPoint {
            value: v,
            roots: tracked.clone(),
            residuals,
            signed: ev.signed,
            guards_ok,
            failed_guard,
            tracking_break: brk,
            satisfied,
        });
        prev = Some(tracked);
    }

    let k = opts.selection.len();
    let mut result = SweepResult {
        free: opts.free,
        k,
        selection: opts.selection.clone(),
        points,
        breaks,
        brackets: vec![],
        solutions: vec![],
        rejected: vec![],
        whole_range: k == 1,
    };
    if k == 1 {
        return Ok(result);
    }

    for i in 0..result.points.len() - 1 {
        let (a, b) = (&result.points[i], &result.points[i + 1]);
        if b.tracking_break {
            continue;
        }
        if let (Some(sa), Some(sb)) = (a.signed, b.signed) {
            if sa == 0.0 || sa * sb < 0.0 {
                result.brackets.push((i, i + 1));
            }
        }
    }

    let scale = opts.range.0.abs().max(opts.range.1.abs());
    for &(i, j) in &result.brackets {
        match refine(base, opts, &result.points[i], &result.points[j], scale) {
            Ok(mut sol) => {
                sol.bracket = (i, j);
                result.solutions.push(sol);
            }
            Err(reason) => result.rejected.push(RejectedBracket {
                bracket: (i, j),
                reason,
            }),
        }
    }
    Ok(result)
}

/// Evaluates at `v`, tracking roots from `reference`.
fn tracked_eval(
    base: &ModelParameters,
    opts: &SweepOptions,
    v: f64,
    reference: &[Complex64],
) -> std::result::Result<Eval, String> {
    let p = base.with(opts.free, Complex64::new(v, 0.0));
    let s = model_spectrum(&p).map_err(|e| e.to_string())?;
    if s.roots.len() != reference.len() {
        return Err(format!("degree changed at {v}"));
    }
    let (m, jump) = match_roots(reference, &s.roots);
    if !continues(reference, jump) {
        return Err(format!("tracking break at {v}"));
    }
    evaluate_at(base, opts, v, m).map_err(|e| e.to_string())
}

fn refine(
    base: &ModelParameters,
    opts: &SweepOptions,
    a: &SweepPoint,
    b: &SweepPoint,
    scale: f64,
) -> std::result::Result<SweepSolution, String> {
    let (mut va, mut vb) = (a.value, b.value);
    let mut sa = a.signed.ok_or("left end not real-valued")?;
    let mut sb = b.signed.ok_or("right end not real-valued")?;
    let mut ra = a.roots.clone();
    let mut rb = b.roots.clone();
    let mut widths = Vec::new();

    if sa != 0.0 {
        let target = tol::BISECTION_WIDTH * scale;
        for _ in 0..200 {
            if vb - va <= target {
                break;
            }
            let vm = 0.5 * (va + vb);
            if vm <= va || vm >= vb {
                break;
            }
            let ev = tracked_eval(base, opts, vm, &ra)?;
            let sm = ev
                .signed
                .ok_or_else(|| format!("residual not real-valued at {vm}"))?;
            if sm == 0.0 {
                va = vm;
                vb = vm;
                sa = 0.0;
                ra = ev.roots.clone();
                rb = ev.roots;
                widths.push(0.0);
                break;
            }
            if sa * sm < 0.0 {
                vb = vm;
                sb = sm;
                rb = ev.roots;
            } else {
                va = vm;
                sa = sm;
                ra = ev.roots;
            }
            widths.push(vb - va);
        }
    }

    // secant polish inside the final bracket
    let (mut best_v, mut best_s, mut best_r) = if sa.abs() <= sb.abs() {
        (va, sa, ra.clone())
    } else {
        (vb, sb, rb)
    };
    let mut secant_steps = 0;
    let (mut x0, mut f0, mut x1, mut f1) = (va, sa, vb, sb);
    for _ in 0..5 {
        if best_s == 0.0 || f1 == f0 {
            break;
        }
        let x2 = x1 - f1 * (x1 - x0) / (f1 - f0);
        if !(x2 >= va.min(vb) && x2 <= va.max(vb)) {
            break;
        }
        let Ok(ev) = tracked_eval(base, opts, x2, &ra) else {
            break;
        };
        let Some(f2) = ev.signed else { break };
        secant_steps += 1;
        if f2.abs() < best_s.abs() {
            best_v = x2;
            best_s = f2;
            best_r = ev.roots;
        } else {
            break;
        }
        (x0, f0, x1, f1) = (x1, f1, x2, f2);
    }

    let fin = evaluate_at(base, opts, best_v, best_r).map_err(|e| e.to_string())?;
    let report = fin.report.ok_or("selection out of range at solution")?;
    if !report.satisfied {
        return Err(match report.first_failed_guard() {
            Some(g) => format!("guard violated at solution: {g}"),
            None => format!(
                "residual {:.3e} above tolerance at {best_v} (sign change through a singularity)",
                report.max_residual()
            ),
        });
    }
    let roots = opts.selection.iter().map(|&i| fin.roots[i]).collect();
    Ok(SweepSolution {
        value: best_v,
        parameters: base.with(opts.free, Complex64::new(best_v, 0.0)),
        roots,
        residuals: report.residuals,
        bracket: (0, 0),
        bisection_widths: widths,
        secant_steps,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiOptions {
    pub free: Vec<Param>,
    /// Root indices into the seed spectrum; `free.len() + 1` entries.
    pub selection: Vec<usize>,
    pub max_iter: usize,
    pub constraint_tol: f64,
    pub fd_step: f64,
}

impl MultiOptions {
    pub fn new(free: Vec<Param>, selection: Vec<usize>) -> Self {
        MultiOptions {
            free,
            selection,
            max_iter: 100,
            constraint_tol: tol::CONSTRAINT,
            fd_step: tol::FD_STEP,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiSolution {
    pub seed: usize,
    #[serde(with = "cplx::seq")]
    pub values: Vec<Complex64>,
    pub parameters: ModelParameters,
    #[serde(with = "cplx::seq")]
    pub roots: Vec<Complex64>,
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiOutcome {
    pub solutions: Vec<MultiSolution>,
    pub failures: Vec<Error>,
}

/// `h(mu) = F(mu) / kI` from the closed form
/// `-(mu - kB)(mu + kDV + beta kP + kR) / (kP ((1 - beta)(mu - kB) + kDV))`.
fn h_closed(p: &ModelParameters, mu: Complex64) -> Complex64 {
    let a = p.k_dv + p.beta * p.k_p + p.k_r;
    let g = (Complex64::new(1.0, 0.0) - p.beta) * (mu - p.k_b) + p.k_dv;
    -(mu - p.k_b) * (mu + a) / (p.k_p * g)
}

/// Newton target: `h(mu_1) - h(mu_q)` for `q = 2..K`. Unlike the
/// constraint polynomials it has no zeros where `h(mu_1)` degenerates to
/// `0/0` (`kDV = 0, mu_1 = kB`, or `mu_1 = -(kDV + beta kP + kR)` with a
/// vanishing denominator).
fn newton_target(p: &ModelParameters, mus: &[Complex64]) -> DVector<Complex64> {
    let h1 = h_closed(p, mus[0]);
    DVector::from_iterator(
        mus.len() - 1,
        mus[1..].iter().map(|&mq| h1 - h_closed(p, mq)),
    )
}

struct NewtonState {
    params: ModelParameters,
    all_roots: Vec<Complex64>,
    mus: Vec<Complex64>,
    target: DVector<Complex64>,
}

fn newton_state(
    p: ModelParameters,
    reference: &[Complex64],
    selection: &[usize],
) -> Option<NewtonState> {
    let s = model_spectrum(&p).ok()?;
    if s.roots.len() != reference.len() {
        return None;
    }
    let (all_roots, _) = match_roots(reference, &s.roots);
    let mus: Vec<Complex64> = selection.iter().map(|&i| all_roots[i]).collect();
    let target = newton_target(&p, &mus);
    if target
        .iter()
        .any(|z| !(z.re.is_finite() && z.im.is_finite()))
    {
        return None;
    }
    Some(NewtonState {
        params: p,
        all_roots,
        mus,
        target,
    })
}

fn apply(base: &ModelParameters, free: &[Param], x: &[Complex64]) -> ModelParameters {
    let mut p = *base;
    for (&f, &v) in free.iter().zip(x) {
        p.set(f, v);
    }
    p
}

/// Damped Newton on `K - 1` constraints in `K - 1` free parameters, run
/// from each seed. Converged tuples closer than `1e-8` (relative) are
/// merged.
pub fn solve_multi(
    base: &ModelParameters,
    opts: &MultiOptions,
    seeds: &[Vec<Complex64>],
) -> Result<MultiOutcome> {
    base.validate()?;
    validate_selection(&opts.selection)?;
    let k = opts.selection.len();
    if k < 2 || opts.free.len() != k - 1 {
        return Err(Error::InvalidInput(format!(
            "{} free parameters for {k} modes; need {}",
            opts.free.len(),
            k.saturating_sub(1)
        )));
    }
    for (i, f) in opts.free.iter().enumerate() {
        if *f == Param::KD || opts.free[..i].contains(f) {
            return Err(Error::InvalidInput(format!(
                "invalid free parameter list {:?}",
                opts.free
            )));
        }
    }
    let mut solutions: Vec<MultiSolution> = Vec::new();
    let mut failures = Vec::new();
    for (si, seed) in seeds.iter().enumerate() {
        if seed.len() != opts.free.len()
            || seed.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()))
        {
            failures.push(Error::NoConvergence {
                seed: si,
                reason: "seed has wrong length or is not finite".into(),
            });
            continue;
        }
        match newton_from(base, opts, si, seed) {
            Ok(sol) => {
                let dup = solutions.iter().any(|s| {
                    s.values.iter().zip(&sol.values).all(|(a, b)| {
                        (a - b).norm() <= tol::DEDUP * a.norm().max(b.norm()).max(1.0)
                    })
                });
                if !dup {
                    solutions.push(sol);
                }
            }
            Err(e) => failures.push(e),
        }
    }
    Ok(MultiOutcome {
        solutions,
        failures,
    })
}

fn newton_from(
    base: &ModelParameters,
    opts: &MultiOptions,
    seed_index: usize,
    seed: &[Complex64],
) -> Result<MultiSolution> {
    let fail = |reason: String| Error::NoConvergence {
        seed: seed_index,
        reason,
    };
    let p0 = apply(base, &opts.free, seed);
    let s0 = model_spectrum(&p0).map_err(|e| fail(e.to_string()))?;
    if s0.degenerate {
        return Err(fail("degenerate spectrum at seed".into()));
    }
    let mus0: Vec<Complex64> = opts.selection.iter().map(|&i| s0.roots[i]).collect();
    let rep0 = constraint_report(&p0, &mus0, opts.constraint_tol)?;
    if let Some(g) = rep0.first_inadmissible() {
        return Err(fail(format!("guard violated at seed: {g}")));
    }
    let mut x: Vec<Complex64> = seed.to_vec();
    let mut st = newton_state(p0, &s0.roots, &opts.selection)
        .ok_or_else(|| fail("cannot evaluate constraints at seed".into()))?;

    let newton_step =
        |x: &[Complex64], st: &NewtonState, iter: usize| -> Result<DVector<Complex64>> {
            let n = x.len();
            let mut jac = DMatrix::<Complex64>::zeros(n, n);
            for j in 0..n {
                let h = opts.fd_step * x[j].norm().max(1.0);
                let mut xp = x.to_vec();
                xp[j] += h;
                let sp = newton_state(apply(base, &opts.free, &xp), &st.all_roots, &opts.selection)
                    .ok_or_else(|| fail(format!("finite difference failed at iteration {iter}")))?;
                let col = (&sp.target - &st.target) / Complex64::new(h, 0.0);
                jac.set_column(j, &col);
            }
            jac.lu()
                .solve(&(-&st.target))
                .ok_or_else(|| fail(format!("singular Jacobian at iteration {iter}")))
        };

    for iter in 0..=opts.max_iter {
        let report = constraint_report(&st.params, &st.mus, opts.constraint_tol)?;
        if report.satisfied {
            // Iterates running off along an asymptote (e.g. |beta| -> inf,
            // where f -> kI for every mode) also reach tiny residuals. At a
            // genuine root the remaining Newton correction is tiny as well.
            let dx = newton_step(&x, &st, iter)?;
            let scale = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
            let rel = dx.norm() / scale;
            if !(rel <= tol::NEWTON_CORRECTION) {
                return Err(fail(format!(
                    "diverging: residual within tolerance but Newton correction {rel:.2e} of the iterate at iteration {iter}"
                )));
            }
            return Ok(MultiSolution {
                seed: seed_index,
                values: x,
                parameters: st.params,
                roots: st.mus,
                residuals: report.residuals,
                iterations: iter,
            });
        }
        if iter == opts.max_iter {
            break;
        }
        let dx = newton_step(&x, &st, iter)?;
        let norm0 = st.target.norm();
        let mut lambda = 1.0;
        let next = loop {
            let xn: Vec<Complex64> = x
                .iter()
                .zip(dx.iter())
                .map(|(a, d)| a + d * lambda)
                .collect();
            if let Some(sn) =
                newton_state(apply(base, &opts.free, &xn), &st.all_roots, &opts.selection)
            {
                if sn.target.norm() < norm0 {
                    break Some((xn, sn));
                }
            }
            lambda *= 0.5;
            if lambda < 1e-4 {
                break None;
            }
        };
        let (xn, sn) =
            next.ok_or_else(|| fail(format!("line search stalled at iteration {iter}")))?;
        x = xn;
        st = sn;
    }
    Err(fail(format!(
        "no convergence in {} iterations",
        opts.max_iter
    )))
}
