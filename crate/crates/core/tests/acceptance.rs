//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any criterion fails.
//!
//! Run alone with `cargo test -p mdd-core --test acceptance`.

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::Instant;

use mdd_core::analysis::{
    fit_damped_cosine, mode_amplitude, sensing_t2, t2_threshold, FIDELITY_LIMIT,
    FIDELITY_THRESHOLD,
};
use mdd_core::closedform::{
    error_ur4, error_ur4_approx, fidelity_ccdd, heatmap, scaling_order, static_pulse_propagator,
    ErrorChannel, HeatmapGrid, StaticErrors, StaticSequence,
};
use mdd_core::evolve::{ensemble_fidelity, ensemble_sensing};
use mdd_core::presets::{DephasingParams, SensingParams, StorageParams, StorageProtocol};
use mdd_core::schedule::build_storage;
use mdd_core::su2::fidelity_axial;
use mdd_core::units::{khz_to_rad_per_us, mhz_to_rad_per_us};
use mdd_core::{EnsembleCurve, NoiseSpec, PhaseProgram, RunConfig, SensingKind, SequenceName, StorageKind};

const SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn storage_curve(p: StorageProtocol, n: usize) -> EnsembleCurve {
    let cfg = StorageParams::reference(p).run_config(n, SEED).expect("storage config");
    ensemble_fidelity(&cfg).expect("storage run")
}

fn t2_of(c: &EnsembleCurve) -> (f64, bool) {
    let r = t2_threshold(c, FIDELITY_LIMIT, FIDELITY_THRESHOLD).expect("threshold");
    (r.t2, r.crossed)
}

fn at(c: &EnsembleCurve, t: f64) -> (f64, f64) {
    let j = c
        .times
        .iter()
        .position(|x| (x - t).abs() < 1e-9)
        .unwrap_or_else(|| panic!("no sample at {t}"));
    (c.mean[j], c.stderr[j])
}

fn dephasing() -> Outcome {
    let cfg = DephasingParams::default().run_config(500, SEED).unwrap();
    let (t2, crossed) = t2_of(&ensemble_fidelity(&cfg).unwrap());
    outcome(
        crossed && (1.8..=4.2).contains(&t2),
        format!("T2* = {t2:.3} us (band [1.8, 4.2])"),
    )
}

fn cdd() -> Outcome {
    let c = storage_curve(StorageProtocol::Cdd, 300);
    let (f10, _) = at(&c, 10.0);
    let (f100, _) = at(&c, 100.0);
    let (t2, _) = t2_of(&c);
    outcome(
        f10 >= 0.9 && f100 < FIDELITY_THRESHOLD,
        format!("F(10 us) = {f10:.4} (>= 0.9), F(100 us) = {f100:.4} (< 0.79), T2 = {t2:.1} us"),
    )
}

fn ccdd(ccdd_t2: &mut f64) -> Outcome {
    let c = storage_curve(StorageProtocol::Ccdd, 300);
    let (t2, crossed) = t2_of(&c);
    *ccdd_t2 = t2;
    outcome(
        crossed && (t2 - 220.0).abs() <= 0.3 * 220.0,
        format!("T2 = {t2:.1} us (band [154, 286])"),
    )
}

fn ccdd_ideal2() -> Outcome {
    let c = storage_curve(StorageProtocol::CcddIdeal2, 200);
    let (t2, _) = t2_of(&c);
    let (f, se) = at(&c, 1100.0);
    // consistent within ensemble error: two standard errors
    let consistent = f + 2.0 * se >= FIDELITY_THRESHOLD;
    outcome(
        t2 > 700.0 && consistent,
        format!("T2 = {t2:.1} us (> 700), F(1100 us) = {f:.4} +- {se:.4} (needs F + 2 se >= 0.79)"),
    )
}

fn mdd(ccdd_t2: f64) -> Outcome {
    let c = storage_curve(StorageProtocol::Mdd, 100);
    let (t2, crossed) = t2_of(&c);
    let (f_end, se_end) = at(&c, 6000.0);
    let ratio = t2 / ccdd_t2;
    let detail = if crossed {
        format!("T2 = {t2:.0} us (band [3000, 6500]), T2/T2(ccdd) = {ratio:.1} (> 10)")
    } else {
        format!(
            "no crossing by 6000 us, F(6000 us) = {f_end:.4} +- {se_end:.4}; \
             T2/T2(ccdd) > {ratio:.1} (> 10)"
        )
    };
    outcome(crossed && (3000.0..=6500.0).contains(&t2) && ratio > 10.0, detail)
}

fn sensing_fit(kind: SensingKind, xi: f64) -> (EnsembleCurve, SensingParams) {
    let mut p = SensingParams::reference(kind);
    p.xi_rad = xi;
    let s = ensemble_sensing(&p.run_config(200, SEED).unwrap()).unwrap();
    (s.sigma_z, p)
}

fn pulsed_sensing() -> Outcome {
    let (c, p) = sensing_fit(SensingKind::Pulsed, 0.0);
    let expect = 2.0 / PI * khz_to_rad_per_us(p.g_khz);
    match fit_damped_cosine(&c) {
        Ok(fit) => {
            let rel = fit.angular_frequency / expect - 1.0;
            let t2 = sensing_t2(&c, &fit);
            outcome(
                rel.abs() <= 0.05 && t2.crossed && (700.0..=1500.0).contains(&t2.t2),
                format!(
                    "omega = {:.5} rad/us vs {expect:.5} ({:+.2}%), T2 = {:.0} us (band [700, 1500])",
                    fit.angular_frequency,
                    100.0 * rel,
                    t2.t2
                ),
            )
        }
        Err(e) => outcome(false, format!("fit failed: {e}")),
    }
}

fn continuous_sensing() -> Outcome {
    let (c, p) = sensing_fit(SensingKind::Continuous, 0.0);
    let expect = 0.5 * khz_to_rad_per_us(p.g_khz);
    let fit = match fit_damped_cosine(&c) {
        Ok(f) => f,
        Err(e) => return outcome(false, format!("fit failed: {e}")),
    };
    let rel = fit.angular_frequency / expect - 1.0;
    let t2 = sensing_t2(&c, &fit);
    let (c_q, _) = sensing_fit(SensingKind::Continuous, PI / 2.0);
    // both amplitudes measured on the xi = 0 mode so a slow drift cannot pose as a response
    let a0 = mode_amplitude(&c, fit.angular_frequency, fit.decay_time).unwrap();
    let aq = mode_amplitude(&c_q, fit.angular_frequency, fit.decay_time).unwrap();
    let sel = aq / a0;
    outcome(
        rel.abs() <= 0.05 && t2.crossed && (3000.0..=5800.0).contains(&t2.t2) && sel <= 0.2,
        format!(
            "omega = {:.5} rad/us vs {expect:.5} ({:+.2}%), T2 = {:.0} us (band [3000, 5800]), \
             amplitude(pi/2) / amplitude(0) = {sel:.3} (<= 0.2)",
            fit.angular_frequency,
            100.0 * rel,
            t2.t2
        ),
    )
}

fn closed_form() -> Outcome {
    let mut worst = 0.0f64;
    for area in [2.0 * PI, 10.0 * PI, 7.3] {
        for i in 0..21 {
            for j in 0..21 {
                let e = StaticErrors::new(-0.5 + 0.05 * i as f64, -0.5 + 0.05 * j as f64);
                let composed = fidelity_axial(&static_pulse_propagator(0.0, area, e));
                worst = worst.max((fidelity_ccdd(area, e) - composed).abs());
            }
        }
    }
    let ur4 = error_ur4(0.1);
    let approx = error_ur4_approx(0.1);
    let approx_rel = (approx - ur4).abs() / ur4;
    let mut ur4_eps2 = 0.0f64;
    for k in 0..=100 {
        let e = StaticErrors::new(0.0, -0.5 + 0.01 * k as f64);
        ur4_eps2 = ur4_eps2.max((1.0 - fidelity_axial(&StaticSequence::Ur4.propagator(e))).abs());
    }
    let cp = scaling_order(StaticSequence::Cp4, ErrorChannel::Eps1, 0.02, 0.08, 9).unwrap();
    let ur4_s = scaling_order(StaticSequence::Ur4, ErrorChannel::Eps1, 0.02, 0.08, 9).unwrap();
    let ur10_1 = scaling_order(StaticSequence::Ur10, ErrorChannel::Eps1, 0.1, 0.2, 9).unwrap();
    let ur10_2 = scaling_order(StaticSequence::Ur10, ErrorChannel::Eps2, 0.1, 0.2, 9).unwrap();
    let pass = worst <= 1e-12
        && (ur4 - 6.48e-6).abs() <= 1e-8
        && approx_rel <= 0.02
        && ur4_eps2 <= 1e-12
        && (cp - 4.0).abs() <= 0.3
        && (ur4_s - 6.0).abs() <= 0.3
        && (ur10_1 - 12.0).abs() <= 0.6
        && (ur10_2 - 10.0).abs() <= 0.6;
    outcome(
        pass,
        format!(
            "ccdd grid max diff = {worst:.1e}, error_ur4(0.1) = {ur4:.4e}, approx off by {:.2}%, \
             UR4 eps2-only max error = {ur4_eps2:.1e}, slopes CP4 {cp:.2} UR4 {ur4_s:.2} \
             UR10 {ur10_1:.2} (eps1) {ur10_2:.2} (eps2)",
            100.0 * approx_rel
        ),
    )
}

fn heatmaps() -> Outcome {
    let grid = HeatmapGrid::default();
    let frac = |s| heatmap(s, &grid).unwrap().area_fraction(0.95);
    let (cp4, ur4, cp10, ur10) = (
        frac(StaticSequence::Cp4),
        frac(StaticSequence::Ur4),
        frac(StaticSequence::Cp10),
        frac(StaticSequence::Ur10),
    );
    outcome(
        ur4 >= 2.0 * cp4 && ur10 >= 2.0 * cp10,
        format!("F >= 0.95 area: CP4 {cp4:.3}, UR4 {ur4:.3}, CP10 {cp10:.3}, UR10 {ur10:.3}"),
    )
}

fn engine_vs_closed_form() -> Outcome {
    let w1 = mhz_to_rad_per_us(2.0);
    let w2 = 0.01 * w1;
    let pulse = PI / w2;
    let sched = build_storage(
        StorageKind::Mdd,
        w1,
        w2,
        pulse,
        0.0,
        &PhaseProgram::new(SequenceName::Ur4),
        4.0 * pulse,
    )
    .unwrap();
    let mut worst = 0.0f64;
    // 9x9 grid over +-0.2, four standard deviations of the reference eps1_tilde
    let grid = (0..81).map(|k| (-0.2 + 0.05 * (k / 9) as f64, -0.2 + 0.05 * (k % 9) as f64));
    for (eps1_tilde, eps2) in grid {
        let noise = NoiseSpec::Frozen {
            delta: 0.0,
            eps1: eps1_tilde * w2 / w1,
            eps2,
        };
        let cfg = RunConfig::new(sched.clone(), noise)
            .with_samples(vec![4.0 * pulse])
            .with_realizations(2, SEED);
        let engine = ensemble_fidelity(&cfg).unwrap().mean[0];
        let closed = fidelity_axial(&StaticSequence::Ur4.propagator(StaticErrors::new(eps1_tilde, eps2)));
        worst = worst.max((engine - closed).abs());
    }
    outcome(worst <= 1e-3, format!("max |F_engine - F_closed| over eps1_tilde, eps2 in [-0.2, 0.2] = {worst:.2e} (<= 1e-3)"))
}

fn determinism_and_convergence() -> Outcome {
    let mut p = StorageParams::reference(StorageProtocol::Ccdd);
    p.total_us = 100.0;
    let base = p.run_config(16, SEED).unwrap();
    let mut one = base.clone();
    one.threads = Some(1);
    let mut eight = base;
    eight.threads = Some(8);
    let identical = ensemble_fidelity(&one).unwrap() == ensemble_fidelity(&eight).unwrap();

    let mut worst = 0.0f64;
    let mut per = Vec::new();
    for proto in [
        StorageProtocol::Cdd,
        StorageProtocol::Ccdd,
        StorageProtocol::CcddIdeal2,
        StorageProtocol::Mdd,
    ] {
        let mut p = StorageParams::reference(proto);
        p.total_us = 120.0;
        let mut coarse = p.run_config(20, SEED).unwrap();
        coarse.sample_times.retain(|t| *t <= 100.0);
        let fine = coarse.clone().with_step(0.5 * coarse.dt, 2 * coarse.substeps);
        let a = ensemble_fidelity(&coarse).unwrap();
        let b = ensemble_fidelity(&fine).unwrap();
        let d = a.mean.iter().zip(&b.mean).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        per.push(format!("{} {d:.1e}", proto.as_str()));
        worst = worst.max(d);
    }
    outcome(
        identical && worst < 1e-4,
        format!(
            "1 vs 8 threads identical: {identical}; dt halving max |dF|: {}",
            per.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let start = Instant::now();
    let mut ccdd_t2 = f64::NAN;
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    let mut run = |name: &'static str, f: &mut dyn FnMut() -> Outcome| {
        let t0 = Instant::now();
        let o = f();
        println!(
            "{} [{:>2}] {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            results.len() + 1,
            o.detail,
            t0.elapsed().as_secs_f64()
        );
        results.push((name, o));
    };
    run("pure dephasing", &mut dephasing);
    run("single-drive cdd storage", &mut cdd);
    run("concatenated cdd storage", &mut || ccdd(&mut ccdd_t2));
    run("ccdd with noiseless second drive", &mut ccdd_ideal2);
    run("mdd storage", &mut || mdd(ccdd_t2));
    run("pulsed mdd sensing", &mut pulsed_sensing);
    run("continuous mdd sensing", &mut continuous_sensing);
    run("closed-form oracles", &mut closed_form);
    run("heatmap robustness area", &mut heatmaps);
    run("engine vs closed form", &mut engine_vs_closed_form);
    run("determinism and dt convergence", &mut determinism_and_convergence);
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "acceptance: {} passed, {failed} failed ({:.0} s)",
        results.len() - failed,
        start.elapsed().as_secs_f64()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
