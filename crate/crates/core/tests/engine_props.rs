use std::f64::consts::PI;

use mdd_core::evolve::{
    ensemble_fidelity, ensemble_sensing, frame_to_I2, propagate, reference_propagator,
};
use mdd_core::noise::NoiseTraces;
use mdd_core::presets::{SensingParams, StorageParams, StorageProtocol};
use mdd_core::schedule::build_storage;
use mdd_core::su2::fidelity_axial;
use mdd_core::units::mhz_to_rad_per_us;
use mdd_core::{NoiseSpec, PhaseProgram, RunConfig, SensingKind, SequenceName, StorageKind};
use proptest::prelude::*;

fn free(total: f64, omega1: f64) -> mdd_core::DriveSchedule {
    build_storage(
        StorageKind::Cdd,
        omega1,
        0.0,
        0.0,
        0.0,
        &PhaseProgram::new(SequenceName::Cp),
        total,
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn static_detuning_gives_analytic_dephasing(delta in -3.0..3.0f64) {
        let cfg = RunConfig::new(free(5.0, 0.0), NoiseSpec::Frozen { delta, eps1: 0.0, eps2: 0.0 })
            .with_stride(0.25, 5.0)
            .with_realizations(2, 1);
        let c = ensemble_fidelity(&cfg).unwrap();
        for (t, f) in c.times.iter().zip(&c.mean) {
            let expect = (2.0 + (delta * t).cos()) / 3.0;
            prop_assert!((f - expect).abs() < 1e-12, "t {t}: {f} vs {expect}");
        }
    }

    #[test]
    fn bare_first_drive_is_undone_by_the_frame(mhz in 0.1..5.0f64) {
        let cfg = RunConfig::new(free(20.0, mhz_to_rad_per_us(mhz)), NoiseSpec::noiseless())
            .with_stride(1.0, 20.0)
            .with_realizations(2, 1);
        let c = ensemble_fidelity(&cfg).unwrap();
        prop_assert!(c.mean.iter().all(|f| (f - 1.0).abs() < 1e-11));
    }

    #[test]
    fn frozen_runs_match_explicit_traces(
        delta in -1.0..1.0f64,
        eps1 in -0.02..0.02f64,
        eps2 in -0.02..0.02f64,
    ) {
        let mut p = StorageParams::reference(StorageProtocol::Mdd);
        p.total_us = 30.0;
        let noise = NoiseSpec::Frozen { delta, eps1, eps2 };
        let cfg = RunConfig::new(p.schedule().unwrap(), noise)
            .with_stride(15.0, 30.0)
            .with_realizations(2, 3);
        let us = propagate(&cfg, &NoiseTraces::frozen(3000, 0.01, delta, eps1, eps2)).unwrap();
        let c = ensemble_fidelity(&cfg).unwrap();
        for ((u, t), f) in us.iter().zip(&cfg.sample_times).zip(&c.mean) {
            let direct = fidelity_axial(&frame_to_I2(u, *t, cfg.schedule.omega1));
            prop_assert!((direct - f).abs() < 1e-12);
            prop_assert!(u.unitarity_residual() < 1e-10);
        }
    }

    #[test]
    fn ensembles_are_seed_deterministic_and_thread_independent(seed in any::<u64>()) {
        let mut p = StorageParams::reference(StorageProtocol::Ccdd);
        p.total_us = 20.0;
        let mut cfg = p.run_config(6, seed).unwrap();
        cfg.threads = Some(1);
        let a = ensemble_fidelity(&cfg).unwrap();
        cfg.threads = Some(3);
        let b = ensemble_fidelity(&cfg).unwrap();
        prop_assert_eq!(&a, &b);
        prop_assert!(a.mean.iter().all(|f| (0.0..=1.0 + 1e-12).contains(f)));
        prop_assert!(a.stderr.iter().all(|s| *s >= 0.0));
    }
}

#[test]
fn signal_free_sensing_reads_the_ground_state() {
    let mut p = SensingParams::reference(SensingKind::Continuous);
    p.g_khz = 0.0;
    p.total_us = 320.0;
    let mut cfg = p.run_config(2, 1).unwrap();
    cfg.noise = NoiseSpec::noiseless();
    let s = ensemble_sensing(&cfg).unwrap();
    assert!(s.sigma_z.mean.iter().all(|z| (z - 1.0).abs() < 1e-10));
    assert!(s.ground_pop.mean.iter().all(|p| (p - 1.0).abs() < 1e-10));
}

#[test]
fn reference_propagator_is_the_noiseless_run() {
    let mut p = StorageParams::reference(StorageProtocol::Mdd);
    p.total_us = 30.0;
    let cfg = RunConfig::new(p.schedule().unwrap(), NoiseSpec::noiseless()).with_samples(vec![30.0]);
    let u = propagate(&cfg, &NoiseTraces::frozen(3000, 0.01, 0.0, 0.0, 0.0)).unwrap()[0];
    let r = reference_propagator(&cfg, 30.0).unwrap();
    assert!(u.max_abs_diff(&r) < 1e-12);
}

#[test]
fn ensembles_need_two_realizations() {
    let cfg = RunConfig::new(free(1.0, 2.0 * PI), NoiseSpec::noiseless()).with_stride(0.5, 1.0);
    assert!(ensemble_fidelity(&cfg).is_err());
}
