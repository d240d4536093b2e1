use std::f64::consts::PI;

use mdd_core::closedform::{
    error_ur4, fidelity_ccdd, pulse_train, sequence_propagator, static_pulse_propagator,
    StaticErrors, StaticSequence,
};
use mdd_core::su2::fidelity_axial;
use proptest::prelude::*;

fn errors() -> impl Strategy<Value = StaticErrors> {
    (-0.5..0.5f64, -0.5..0.5f64).prop_map(|(a, b)| StaticErrors::new(a, b))
}

fn sequence() -> impl Strategy<Value = StaticSequence> {
    prop::sample::select(vec![
        StaticSequence::Cp4,
        StaticSequence::Ur4,
        StaticSequence::Cp10,
        StaticSequence::Ur10,
    ])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn ccdd_formula_matches_composed_propagator(area in 0.0..40.0f64, e in errors()) {
        let composed = fidelity_axial(&static_pulse_propagator(0.0, area, e));
        prop_assert!((fidelity_ccdd(area, e) - composed).abs() < 1e-12);
    }

    #[test]
    fn ur4_error_matches_composition(eps1 in -0.5..0.5f64) {
        let u = StaticSequence::Ur4.propagator(StaticErrors::new(eps1, 0.0));
        prop_assert!((error_ur4(eps1) - (1.0 - fidelity_axial(&u))).abs() < 1e-12);
    }

    #[test]
    fn fidelity_is_even_in_the_detuning(seq in sequence(), e in errors()) {
        let mirrored = StaticErrors::new(-e.eps1_tilde, e.eps2);
        let a = fidelity_axial(&seq.propagator(e));
        let b = fidelity_axial(&seq.propagator(mirrored));
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn equal_phase_pulses_merge(phase in -PI..PI, n in 1usize..6, e in errors()) {
        let merged = static_pulse_propagator(phase, n as f64 * PI, e);
        let split = sequence_propagator(&pulse_train(&vec![phase; n], 0.0), e);
        prop_assert!(merged.max_abs_diff(&split) < 1e-12);
    }

    #[test]
    fn error_free_sequences_are_identity_up_to_phase(seq in sequence()) {
        let u = seq.propagator(StaticErrors::default());
        prop_assert!((fidelity_axial(&u) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ur4_is_immune_to_amplitude_error(eps2 in -0.5..0.5f64) {
        let u = StaticSequence::Ur4.propagator(StaticErrors::new(0.0, eps2));
        prop_assert!((fidelity_axial(&u) - 1.0).abs() < 1e-12);
    }
}
