use mdd_core::su2::{
    bloch_vector, compose, evolve_density, fidelity_axial, infidelity_axial, pauli_expm,
};
use mdd_core::{Density2, PauliCoeffs, Unitary2};
use num_complex::Complex64;
use proptest::prelude::*;

type M = [Complex64; 4];

fn mul(a: &M, b: &M) -> M {
    [
        a[0] * b[0] + a[1] * b[2],
        a[0] * b[1] + a[1] * b[3],
        a[2] * b[0] + a[3] * b[2],
        a[2] * b[1] + a[3] * b[3],
    ]
}

/// Taylor series with scaling and squaring, independent of the closed form.
fn taylor_expm(h: &PauliCoeffs, dt: f64) -> M {
    let hm = h.to_matrix();
    let norm = hm.iter().map(|z| z.norm()).sum::<f64>() * dt;
    let squarings = norm.log2().ceil().max(0.0) as i32 + 4;
    let s = dt / 2f64.powi(squarings);
    let a: M = hm.map(|z| z * Complex64::new(0.0, -s));
    let one = Complex64::new(1.0, 0.0);
    let zero = Complex64::new(0.0, 0.0);
    let mut sum: M = [one, zero, zero, one];
    let mut term = sum;
    for k in 1..30 {
        term = mul(&term, &a).map(|z| z / k as f64);
        for i in 0..4 {
            sum[i] += term[i];
        }
    }
    for _ in 0..squarings {
        sum = mul(&sum, &sum);
    }
    sum
}

fn generator() -> impl Strategy<Value = PauliCoeffs> {
    (-5.0..5.0f64, -20.0..20.0f64, -20.0..20.0f64, -20.0..20.0f64)
        .prop_map(|(h0, hx, hy, hz)| PauliCoeffs::new(h0, hx, hy, hz))
}

fn unitary() -> impl Strategy<Value = Unitary2> {
    (generator(), 0.0..1.0f64).prop_map(|(h, t)| pauli_expm(h, t).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn closed_form_matches_taylor(h in generator(), dt in 0.0..1.0f64) {
        let u = pauli_expm(h, dt).unwrap();
        let t = taylor_expm(&h, dt);
        for i in 0..4 {
            prop_assert!((u.m[i] - t[i]).norm() < 1e-12, "{:?} vs {:?}", u.m, t);
        }
    }

    #[test]
    fn propagators_are_unitary_with_expected_det(h in generator(), dt in 0.0..2.0f64) {
        let u = pauli_expm(h, dt).unwrap();
        prop_assert!(u.unitarity_residual() < 1e-13);
        let det = Complex64::from_polar(1.0, -2.0 * h.h0 * dt);
        prop_assert!((u.det() - det).norm() < 1e-12);
    }

    #[test]
    fn time_evolution_is_a_semigroup(h in generator(), a in 0.0..1.0f64, b in 0.0..1.0f64) {
        let split = compose(&pauli_expm(h, b).unwrap(), &pauli_expm(h, a).unwrap());
        prop_assert!(split.max_abs_diff(&pauli_expm(h, a + b).unwrap()) < 1e-12);
    }

    #[test]
    fn fidelity_ignores_global_phase_and_inversion(u in unitary(), phi in -3.2..3.2f64) {
        let f = fidelity_axial(&u);
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&f));
        prop_assert!((fidelity_axial(&u.scale(Complex64::from_polar(1.0, phi))) - f).abs() < 1e-12);
        prop_assert!((fidelity_axial(&u.dagger()) - f).abs() < 1e-12);
        prop_assert!((infidelity_axial(&u) - (1.0 - f)).abs() < 1e-12);
    }

    #[test]
    fn evolution_preserves_bloch_length(
        u in unitary(),
        (x, y, z) in (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64),
    ) {
        let r = (x * x + y * y + z * z).sqrt().max(1.0);
        let rho = Density2::from_bloch(x / r, y / r, z / r);
        let (a, b, c) = bloch_vector(&rho);
        let (a2, b2, c2) = bloch_vector(&evolve_density(&rho, &u));
        let before = (a * a + b * b + c * c).sqrt();
        let after = (a2 * a2 + b2 * b2 + c2 * c2).sqrt();
        prop_assert!((before - after).abs() < 1e-12);
        prop_assert!((evolve_density(&rho, &u).trace() - 1.0).norm() < 1e-12);
    }

    #[test]
    fn reunitarize_is_idempotent_on_unitaries(u in unitary()) {
        prop_assert!(u.reunitarize().max_abs_diff(&u) < 1e-12);
    }
}
