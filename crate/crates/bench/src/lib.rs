//! Fixed inputs for the benchmarks in `benches/`.

use expomodes::{Complex64, ModelParameters};

/// Generic parameter set with four real, distinct growth rates.
pub fn sample_parameters() -> ModelParameters {
    ModelParameters::real(0.3, 0.7, 0.2, 1.3, 0.4, 2.1, 0.35, 0.6)
}

/// A parameter set on the two-mode constraint surface (found by sweeping
/// `kI`), with its two selected growth rates.
pub fn two_mode_solution() -> (ModelParameters, [Complex64; 2]) {
    let p = ModelParameters::real(0.3, 0.7, 0.2, 1.3, 0.4, 0.8223673414373408, 0.35, 0.6);
    let mus = [
        Complex64::new(-0.3255370669460217, 0.0),
        Complex64::new(-3.0762579007981876, 0.0),
    ];
    (p, mus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use expomodes::{constraint_report, model_spectrum, solve_multi, tol, MultiOptions, Param};

    #[test]
    fn fixtures_are_what_they_claim() {
        assert!(!model_spectrum(&sample_parameters()).unwrap().degenerate);
        let (p, mus) = two_mode_solution();
        assert!(
            constraint_report(&p, &mus, tol::CONSTRAINT)
                .unwrap()
                .satisfied
        );
        // the Newton benchmark starts 2% off and must converge
        let out = solve_multi(
            &p,
            &MultiOptions::new(vec![Param::KI], vec![1, 3]),
            &[vec![p.k_i * 1.02]],
        )
        .unwrap();
        assert_eq!(out.solutions.len(), 1, "{:?}", out.failures);
    }
}
