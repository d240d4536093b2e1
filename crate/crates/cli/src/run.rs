//! One function per subcommand. Each writes its data files, optional SVG plots
//! and a manifest into the output directory.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use mdd_core::analysis::{
    fit_damped_cosine, sensing_t2, t2_threshold, theoretical_theta, ThetaKind, FIDELITY_LIMIT,
    FIDELITY_THRESHOLD, POPULATION_THRESHOLD,
};
use mdd_core::closedform::{
    bloch_trajectory, heatmap, pulse_train, sequence_propagator, HeatmapGrid, StaticErrors,
    StaticSequence,
};
use mdd_core::evolve::{ensemble_fidelity, ensemble_sensing};
use mdd_core::noise::{stationary_std, TraceStream};
use mdd_core::schedule::validate_phase_alignment;
use mdd_core::su2::fidelity_axial;
use mdd_core::units::mhz_to_rad_per_us;
use mdd_core::{Density2, EnsembleCurve, OUParams, PhaseProgram, RunConfig, SensingKind, SequenceName};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{
    need, DephasingConfig, HeatmapConfig, InitialState, SensingConfig, StorageConfig,
    TrajectoryConfig, ValidateNoiseConfig,
};
use crate::error::{config_err, CliError, CliResult};
use crate::manifest::{config_hash, Manifest, Output};
use crate::svg::{heat_plot, line_plot, Series};

/// Output settings shared by all subcommands.
pub struct Sink<'a> {
    pub dir: &'a Path,
    pub svg: bool,
    pub threads: Option<usize>,
}

struct Meta {
    subcommand: &'static str,
    config: Value,
    seed: Option<u64>,
    realizations: Option<usize>,
    dt_us: Option<f64>,
}

fn meta<C: Serialize>(subcommand: &'static str, cfg: &C) -> Meta {
    Meta {
        subcommand,
        config: serde_json::to_value(cfg).expect("config serializes"),
        seed: None,
        realizations: None,
        dt_us: None,
    }
}

fn finish(out: &Output, m: Meta, start: Instant, warnings: Vec<String>, summary: Value) -> CliResult<()> {
    let manifest = Manifest {
        tool: "mdd",
        version: env!("CARGO_PKG_VERSION"),
        subcommand: m.subcommand,
        config_hash: config_hash(m.subcommand, &m.config),
        config: m.config,
        master_seed: m.seed,
        realizations: m.realizations,
        dt_us: m.dt_us,
        wall_time_s: start.elapsed().as_secs_f64(),
        files: out.files.clone(),
        warnings,
        summary,
    };
    let path = out.write_manifest(&manifest)?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn curve_csv(header: &str, c: &EnsembleCurve) -> String {
    let mut s = format!("{header}\n");
    for i in 0..c.len() {
        let _ = writeln!(s, "{},{},{}", c.times[i], c.mean[i], c.stderr[i]);
    }
    s
}

fn points(c: &EnsembleCurve) -> Vec<(f64, f64)> {
    c.times.iter().copied().zip(c.mean.iter().copied()).collect()
}

fn stochastic_run(mut cfg: RunConfig, dt: f64, sink: &Sink) -> CliResult<RunConfig> {
    cfg.dt = dt;
    cfg.threads = sink.threads;
    cfg.validate()?;
    Ok(cfg)
}

pub fn dephasing(cfg: DephasingConfig, sink: &Sink) -> CliResult<()> {
    let start = Instant::now();
    let mut m = meta("dephasing", &cfg);
    let (seed, n, dt) = (need(cfg.seed, "seed")?, need(cfg.realizations, "realizations")?, need(cfg.dt_us, "dt_us")?);
    (m.seed, m.realizations, m.dt_us) = (Some(seed), Some(n), Some(dt));
    let run = stochastic_run(cfg.params()?.run_config(n, seed)?, dt, sink)?;
    let curve = ensemble_fidelity(&run)?;
    let t2 = t2_threshold(&curve, FIDELITY_LIMIT, FIDELITY_THRESHOLD)?;

    let mut out = Output::new(sink.dir, "dephasing")?;
    out.write(".csv", curve_csv("t_us,fidelity_mean,fidelity_stderr", &curve).as_bytes())?;
    if sink.svg {
        let svg = line_plot(
            "Free evolution",
            "t (us)",
            "fidelity",
            &[Series { label: "no decoupling", points: points(&curve) }],
            &[FIDELITY_THRESHOLD],
        );
        out.write(".svg", svg.as_bytes())?;
    }
    println!("T2* = {:.3} us (crossed: {})", t2.t2, t2.crossed);
    let summary = json!({ "t2_star": t2, "final_fidelity": curve.mean.last() });
    finish(&out, m, start, run.schedule.warnings.clone(), summary)
}

pub fn storage(cfg: StorageConfig, sink: &Sink) -> CliResult<()> {
    let start = Instant::now();
    let mut m = meta("storage", &cfg);
    let (seed, n, dt) = (need(cfg.seed, "seed")?, need(cfg.realizations, "realizations")?, need(cfg.dt_us, "dt_us")?);
    (m.seed, m.realizations, m.dt_us) = (Some(seed), Some(n), Some(dt));
    let params = cfg.params()?;
    let run = stochastic_run(params.run_config(n, seed)?, dt, sink)?;
    let curve = ensemble_fidelity(&run)?;
    let t2 = t2_threshold(&curve, FIDELITY_LIMIT, FIDELITY_THRESHOLD)?;

    let name = params.protocol.as_str();
    let mut out = Output::new(sink.dir, format!("storage-{name}"))?;
    out.write(".csv", curve_csv("t_us,fidelity_mean,fidelity_stderr", &curve).as_bytes())?;
    if sink.svg {
        let svg = line_plot(
            &format!("Storage fidelity, {name}"),
            "t (us)",
            "fidelity",
            &[Series { label: name, points: points(&curve) }],
            &[FIDELITY_THRESHOLD],
        );
        out.write(".svg", svg.as_bytes())?;
    }
    if t2.crossed {
        println!("{name}: T2 = {:.1} us", t2.t2);
    } else {
        println!("{name}: no crossing of {FIDELITY_THRESHOLD} by {:.1} us", t2.t2);
    }
    let summary = json!({
        "t2": t2,
        "final_fidelity": curve.mean.last(),
        "final_stderr": curve.stderr.last(),
        "schedule": run.schedule.to_json(),
    });
    finish(&out, m, start, run.schedule.warnings.clone(), summary)
}

pub fn sensing(cfg: SensingConfig, sink: &Sink) -> CliResult<()> {
    let start = Instant::now();
    let mut m = meta("sensing", &cfg);
    let (seed, n, dt) = (need(cfg.seed, "seed")?, need(cfg.realizations, "realizations")?, need(cfg.dt_us, "dt_us")?);
    (m.seed, m.realizations, m.dt_us) = (Some(seed), Some(n), Some(dt));
    let mode = need(cfg.mode, "mode")?;
    let params = cfg.params()?;
    let run = stochastic_run(params.run_config(n, seed)?, dt, sink)?;
    let signal = params.signal()?;
    // a sequence without phase changes has nothing to align
    let alignment = validate_phase_alignment(&run.schedule, &signal).ok();
    let curves = ensemble_sensing(&run)?;
    let sz = &curves.sigma_z;

    let (theta_kind, expected) = match params.kind {
        SensingKind::Pulsed => (ThetaKind::Pulsed, 2.0 / PI * signal.g),
        SensingKind::Continuous => (ThetaKind::Continuous, 0.5 * signal.g),
    };
    let mut csv = String::from("t_us,sigma_z_mean,sigma_z_stderr,ground_pop_corrected,theory_cos2_half_theta\n");
    let mut theory = Vec::with_capacity(sz.len());
    for i in 0..sz.len() {
        let t = sz.times[i];
        let th = theoretical_theta(theta_kind, signal.g, signal.delta, t)?;
        let c2 = (0.5 * th).cos().powi(2);
        theory.push((t, c2));
        let _ = writeln!(csv, "{t},{},{},{},{c2}", sz.mean[i], sz.stderr[i], curves.ground_pop.mean[i]);
    }

    let mut out = Output::new(sink.dir, format!("sensing-{}", mode.as_str()))?;
    out.write(".csv", csv.as_bytes())?;
    if sink.svg {
        let svg = line_plot(
            &format!("{} sensing", mode.as_str()),
            "t (us)",
            "ground population",
            &[
                Series { label: "simulated", points: points(&curves.ground_pop) },
                Series { label: "ideal cos^2(theta/2)", points: theory },
            ],
            &[POPULATION_THRESHOLD],
        );
        out.write(".svg", svg.as_bytes())?;
    }
    let alignment_json = alignment.as_ref().map(|a| {
        json!({
            "aligned": a.aligned,
            "residual_rad": a.residual,
            "phase_changes": a.phase_changes.len(),
        })
    });
    let mut warnings = run.schedule.warnings.clone();
    match &alignment {
        Some(a) if !a.aligned => warnings.push(format!(
            "pulse phase changes are not aligned with signal nodes (residual {:.3e} rad)",
            a.residual
        )),
        None => warnings.push("sequence has no phase changes; signal selectivity is not checked".into()),
        _ => {}
    }
    match fit_damped_cosine(sz) {
        Ok(fit) => {
            let t2 = sensing_t2(sz, &fit);
            println!(
                "omega = {:.5} rad/us (expected {expected:.5}), T2 = {:.0} us",
                fit.angular_frequency, t2.t2
            );
            let summary = json!({
                "fit": fit,
                "expected_angular_frequency": expected,
                "t2": t2,
                "phase_alignment": alignment_json,
            });
            finish(&out, m, start, warnings, summary)
        }
        Err(e) => {
            let spectrum = match &e {
                mdd_core::Error::FitFailed { spectrum, .. } => spectrum.clone(),
                _ => Vec::new(),
            };
            let summary = json!({
                "fit_error": e.to_string(),
                "spectrum": spectrum,
                "expected_angular_frequency": expected,
                "phase_alignment": alignment_json,
            });
            finish(&out, m, start, warnings, summary)?;
            Err(e.into())
        }
    }
}

pub fn heatmap_cmd(cfg: HeatmapConfig, sink: &Sink) -> CliResult<()> {
    let start = Instant::now();
    let m = meta("heatmap", &cfg);
    let seq: StaticSequence = need(cfg.sequence.clone(), "sequence")?.parse()?;
    let grid = HeatmapGrid {
        eps1_min: need(cfg.eps1_tilde_min, "eps1_tilde_min")?,
        eps1_max: need(cfg.eps1_tilde_max, "eps1_tilde_max")?,
        eps2_min: need(cfg.eps2_min, "eps2_min")?,
        eps2_max: need(cfg.eps2_max, "eps2_max")?,
        resolution: need(cfg.resolution, "resolution")?,
    };
    let map = heatmap(seq, &grid)?;
    let contours = map.contours();

    let mut out = Output::new(sink.dir, format!("heatmap-{}", seq.as_str()))?;
    let mut csv = Vec::new();
    map.write_csv(&mut csv).expect("writing to memory");
    out.write(".csv", &csv)?;
    out.write(".contours.json", serde_json::to_string(&contours).expect("serializes").as_bytes())?;
    if sink.svg {
        let svg = heat_plot(
            &format!("{} fidelity", seq.as_str()),
            "eps1~",
            "eps2",
            &map.eps1_tilde,
            &map.eps2,
            &map.fidelity,
            (0.0, 1.0),
        );
        out.write(".svg", svg.as_bytes())?;
    }
    let areas: Vec<Value> = contours
        .iter()
        .map(|c| json!({ "level": c.level, "area_fraction": c.area_fraction }))
        .collect();
    for c in &contours {
        println!("{}: area(F >= {}) = {:.4}", seq.as_str(), c.level, c.area_fraction);
    }
    finish(&out, m, start, Vec::new(), json!({ "contours": areas }))
}

fn initial_density(s: InitialState) -> Density2 {
    match s {
        InitialState::X => Density2::from_bloch(1.0, 0.0, 0.0),
        InitialState::Y => Density2::from_bloch(0.0, 1.0, 0.0),
        InitialState::Z => Density2::from_bloch(0.0, 0.0, 1.0),
    }
}

pub fn trajectory(cfg: TrajectoryConfig, sink: &Sink) -> CliResult<()> {
    let start = Instant::now();
    let m = meta("trajectory", &cfg);
    let omega2 = mhz_to_rad_per_us(need(cfg.omega2_mhz, "omega2_MHz")?);
    let pulse = need(cfg.pulse_us, "pulse_us")?;
    let gap = need(cfg.tau_us, "tau_us")?;
    let pulses = need(cfg.pulses, "pulses")?;
    let samples = need(cfg.samples_per_segment, "samples_per_segment")?;
    let e = StaticErrors::new(need(cfg.eps1_tilde, "eps1_tilde")?, need(cfg.eps2, "eps2")?);
    let rho0 = initial_density(need(cfg.initial_state, "initial_state")?);

    if !(omega2 > 0.0 && pulse > 0.0 && gap >= 0.0) {
        return Err(config_err("omega2_MHz and pulse_us must be > 0 and tau_us >= 0"));
    }
    let area = omega2 * pulse;
    if (area - PI).abs() > 1e-6 * PI {
        return Err(CliError::Core(mdd_core::Error::Precondition {
            condition: "pi-pulse area Omega2*T = pi",
            detail: format!("Omega2*T = {area:.6} rad for omega2 = {omega2:.6} rad/us, T = {pulse} us"),
        }));
    }
    let ur4 = PhaseProgram::new(SequenceName::Ur4);
    if pulses == 0 || pulses % ur4.len() != 0 {
        return Err(config_err(format!("pulses must be a positive multiple of {}, got {pulses}", ur4.len())));
    }
    let layouts = [
        ("cp", vec![0.0; pulses]),
        ("ur4", ur4.repeated(pulses / ur4.len())),
    ];

    let mut csv = String::from("layout,t_us,x,y,z\n");
    let mut summary = serde_json::Map::new();
    let mut series = Vec::new();
    for (name, phases) in &layouts {
        let segs = pulse_train(phases, omega2 * gap);
        let path = bloch_trajectory(&segs, e, &rho0, samples);
        for p in &path {
            let _ = writeln!(csv, "{name},{},{},{},{}", p.area / omega2, p.x, p.y, p.z);
        }
        let last = path.last().expect("trajectory has a start point");
        let fidelity = fidelity_axial(&sequence_propagator(&segs, e));
        println!("{name}: fidelity {fidelity:.6}, final Bloch ({:.4}, {:.4}, {:.4})", last.x, last.y, last.z);
        summary.insert(
            (*name).to_string(),
            json!({
                "phases_rad": phases,
                "duration_us": last.area / omega2,
                "fidelity": fidelity,
                "final_bloch": [last.x, last.y, last.z],
            }),
        );
        series.push((*name, path.iter().map(|p| (p.area / omega2, p.z)).collect::<Vec<_>>()));
    }

    let mut out = Output::new(sink.dir, "trajectory")?;
    out.write(".csv", csv.as_bytes())?;
    if sink.svg {
        let s: Vec<Series> = series
            .into_iter()
            .map(|(label, points)| Series { label, points })
            .collect();
        out.write(".svg", line_plot("Bloch z along the pulse train", "t (us)", "z", &s, &[]).as_bytes())?;
    }
    finish(&out, m, start, Vec::new(), Value::Object(summary))
}

struct Check {
    process: &'static str,
    statistic: String,
    expected: f64,
    measured: f64,
    tolerance: f64,
}

impl Check {
    fn pass(&self) -> bool {
        (self.measured - self.expected).abs() <= self.tolerance
    }
}

/// Ensemble std and lag correlations of one process from per-realization samples
/// `rows[r][k]` taken at cell offsets `lags` (first entry 0).
fn process_checks(
    process: &'static str,
    p: &OUParams,
    dt: f64,
    lags: &[usize],
    rows: &[Vec<f64>],
    checks: &mut Vec<Check>,
) {
    let n = rows.len() as f64;
    let sigma = stationary_std(p);
    let var0 = rows.iter().map(|r| r[0] * r[0]).sum::<f64>() / n;
    checks.push(Check {
        process,
        statistic: "stationary_std".into(),
        expected: sigma,
        measured: var0.sqrt(),
        // standard error of a sample std is sigma / sqrt(2n)
        tolerance: 4.0 * sigma / (2.0 * n).sqrt(),
    });
    for (k, &lag) in lags.iter().enumerate().skip(1) {
        let cov = rows.iter().map(|r| r[0] * r[k]).sum::<f64>() / n;
        let t = lag as f64 * dt;
        checks.push(Check {
            process,
            statistic: format!("autocorrelation_{t}us"),
            expected: (-t / p.tau_c).exp(),
            measured: if var0 > 0.0 { cov / var0 } else { 0.0 },
            tolerance: 4.0 / n.sqrt(),
        });
    }
}

pub fn validate_noise(cfg: ValidateNoiseConfig, sink: &Sink) -> CliResult<()> {
    let start = Instant::now();
    let mut m = meta("validate-noise", &cfg);
    let (seed, n, dt) = (need(cfg.seed, "seed")?, need(cfg.realizations, "realizations")?, need(cfg.dt_us, "dt_us")?);
    (m.seed, m.realizations, m.dt_us) = (Some(seed), Some(n), Some(dt));
    if n < 2 {
        return Err(config_err("validate-noise needs at least 2 realizations"));
    }
    let noise = cfg.noise()?;
    let cells = |t: f64| (t / dt).round() as usize;
    let delta_lags = [0, cells(5.0), cells(25.0), cells(50.0)];
    let d = noise.drive_tau;
    let drive_lags = [0, cells(0.2 * d), cells(d), cells(2.0 * d)];
    let steps = delta_lags.iter().chain(&drive_lags).copied().max().unwrap_or(0) + 1;

    let (mut rd, mut r1, mut r2) = (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for r in 0..n as u64 {
        let mut stream = TraceStream::new(&noise, dt, mdd_core::noise::realization_seed(seed, r))?;
        let (mut a, mut b, mut c) = (Vec::new(), Vec::new(), Vec::new());
        for k in 0..steps {
            let (x, e1, e2) = stream.next_cell();
            if delta_lags.contains(&k) {
                a.push(x);
            }
            if drive_lags.contains(&k) {
                b.push(e1);
                c.push(e2);
            }
        }
        rd.push(a);
        r1.push(b);
        r2.push(c);
    }

    let mut checks = Vec::new();
    process_checks("delta", &noise.magnetic, dt, &delta_lags, &rd, &mut checks);
    process_checks("eps1", &noise.drive1(), dt, &drive_lags, &r1, &mut checks);
    process_checks("eps2", &noise.drive2(), dt, &drive_lags, &r2, &mut checks);

    let mut csv = String::from("process,statistic,expected,measured,tolerance,pass\n");
    for c in &checks {
        let _ = writeln!(
            csv,
            "{},{},{},{},{},{}",
            c.process,
            c.statistic,
            c.expected,
            c.measured,
            c.tolerance,
            c.pass()
        );
    }
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.pass())
        .map(|c| format!("{} {}", c.process, c.statistic))
        .collect();
    let mut out = Output::new(sink.dir, "validate-noise")?;
    out.write(".csv", csv.as_bytes())?;
    println!("{} of {} noise statistics within tolerance", checks.len() - failed.len(), checks.len());
    let summary = json!({
        "checks": checks.len(),
        "failed": failed,
        "delta_std_rad_per_us": stationary_std(&noise.magnetic),
    });
    finish(&out, m, start, Vec::new(), summary)
}
