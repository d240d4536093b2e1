//! Time-ordered propagation in the first interaction basis and Monte Carlo
//! ensembles over noise realizations.
//!
//! The step generator is
//! `hz = delta`, `hx = Omega1 (1 + eps1) + g cos(Delta t + xi)`,
//! `hy = 2 Omega2 (1 + eps2) cos(Omega1 t + phi) + g sin(Delta t + xi)`,
//! with noise held constant over each noise cell.

use rayon::prelude::*;

use crate::error::{invalid, precondition, Result};
use crate::noise::{realization_seed, stationary_std, NoiseConfig, NoiseTraces, TraceStream};
use crate::schedule::{DriveSchedule, SignalParams, StepRun};
use crate::su2::{PauliCoeffs, Unitary2};

/// Noise entering a run.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NoiseSpec {
    Stochastic(NoiseConfig),
    /// Static errors, identical in every realization.
    Frozen { delta: f64, eps1: f64, eps2: f64 },
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        NoiseSpec::Frozen {
            delta: 0.0,
            eps1: 0.0,
            eps2: 0.0,
        }
    }
}

/// How the oscillating coefficients are sampled within a step.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StepRule {
    /// Value at the step midpoint.
    Midpoint,
    /// Commutator-free fourth-order Magnus step: two exponentials built from
    /// the generator at the two Gauss-Legendre nodes.
    #[default]
    Magnus4,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub schedule: DriveSchedule,
    pub noise: NoiseSpec,
    pub signal: Option<SignalParams>,
    /// Integration step, us.
    pub dt: f64,
    /// Integration steps per noise cell; the noise grid is `dt * substeps`.
    pub substeps: usize,
    pub sample_times: Vec<f64>,
    pub realizations: usize,
    pub master_seed: u64,
    pub step_rule: StepRule,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl RunConfig {
    pub const DEFAULT_DT: f64 = 0.01;

    /// Config with the schedule's signal, `dt = 10 ns`, one realization and no samples.
    pub fn new(schedule: DriveSchedule, noise: NoiseSpec) -> Self {
        let signal = schedule.signal;
        Self {
            schedule,
            noise,
            signal,
            dt: Self::DEFAULT_DT,
            substeps: 1,
            sample_times: Vec::new(),
            realizations: 1,
            master_seed: 0,
            step_rule: StepRule::default(),
            threads: None,
        }
    }

    /// Samples at `stride, 2 stride, ...` up to `t_max` (and the schedule end).
    pub fn with_stride(mut self, stride: f64, t_max: f64) -> Self {
        let end = t_max.min(self.schedule.total_duration());
        let n = ((end + 1e-9) / stride).floor() as usize;
        self.sample_times = (1..=n).map(|k| k as f64 * stride).collect();
        self
    }

    pub fn with_samples(mut self, times: Vec<f64>) -> Self {
        self.sample_times = times;
        self
    }

    pub fn with_realizations(mut self, n: usize, master_seed: u64) -> Self {
        self.realizations = n;
        self.master_seed = master_seed;
        self
    }

    /// Integration step `dt` with `substeps` steps per noise cell.
    pub fn with_step(mut self, dt: f64, substeps: usize) -> Self {
        self.dt = dt;
        self.substeps = substeps;
        self
    }

    pub fn noise_dt(&self) -> f64 {
        self.dt * self.substeps as f64
    }

    fn magnetic_scale(&self) -> f64 {
        match self.noise {
            NoiseSpec::Stochastic(n) => 3.0 * stationary_std(&n.magnetic),
            NoiseSpec::Frozen { delta, .. } => delta.abs(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.substeps == 0 {
            return Err(invalid("substeps must be >= 1"));
        }
        let guard = self.dt * self.schedule.omega1.abs().max(self.magnetic_scale());
        if guard >= 0.3 {
            return Err(precondition(
                "step accuracy dt*max(|Omega1|, 3 sigma_delta) < 0.3",
                format!("dt*max(...) = {guard} rad"),
            ));
        }
        if let NoiseSpec::Stochastic(n) = &self.noise {
            n.validate()?;
        }
        self.sample_steps()?;
        Ok(())
    }

    /// Sample times as step indices; each must be a multiple of `dt` within the schedule.
    fn sample_steps(&self) -> Result<Vec<usize>> {
        let total = self.schedule.total_duration();
        let mut out = Vec::with_capacity(self.sample_times.len());
        let mut prev = None;
        for &t in &self.sample_times {
            if !(t.is_finite() && t >= 0.0 && t <= total * (1.0 + 1e-12)) {
                return Err(invalid(format!("sample time {t} outside [0, {total}]")));
            }
            let k = (t / self.dt).round();
            if (k * self.dt - t).abs() > 1e-9 * t.max(1.0) {
                return Err(invalid(format!(
                    "sample time {t} us is not a multiple of dt = {} us",
                    self.dt
                )));
            }
            let k = k as usize;
            if prev.is_some_and(|p| k < p) {
                return Err(invalid("sample times must be sorted"));
            }
            prev = Some(k);
            out.push(k);
        }
        Ok(out)
    }

    fn plan(&self) -> Result<Plan> {
        self.validate()?;
        let samples = self.sample_steps()?;
        let runs = self.schedule.step_runs(self.dt)?;
        let last = samples.last().copied().unwrap_or(0);
        Ok(Plan {
            runs,
            samples,
            steps: last,
        })
    }
}

struct Plan {
    runs: Vec<StepRun>,
    samples: Vec<usize>,
    /// Steps needed to reach the last sample.
    steps: usize,
}

/// `w I - i (x sx + y sy + z sz)`, an SU(2) element.
#[derive(Clone, Copy, Debug, PartialEq)]
struct Quat {
    w: f64,
    x: f64,
    y: f64,
    z: f64,
}

impl Quat {
    const ONE: Quat = Quat {
        w: 1.0,
        x: 0.0,
        y: 0.0,
        z: 0.0,
    };

    /// `exp(-i dt (hx sx + hy sy + hz sz) / 2)`.
    #[inline]
    fn step(hx: f64, hy: f64, hz: f64, dt: f64) -> Quat {
        let n = (hx * hx + hy * hy + hz * hz).sqrt();
        if n == 0.0 {
            return Quat::ONE;
        }
        let (s, c) = (0.5 * n * dt).sin_cos();
        let f = s / n;
        Quat {
            w: c,
            x: f * hx,
            y: f * hy,
            z: f * hz,
        }
    }

    /// `self * rhs` (`rhs` acts first).
    #[inline]
    fn mul(self, b: Quat) -> Quat {
        let a = self;
        Quat {
            w: a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            x: a.w * b.x + b.w * a.x + a.y * b.z - a.z * b.y,
            y: a.w * b.y + b.w * a.y + a.z * b.x - a.x * b.z,
            z: a.w * b.z + b.w * a.z + a.x * b.y - a.y * b.x,
        }
    }

    fn conj(self) -> Quat {
        Quat {
            w: self.w,
            x: -self.x,
            y: -self.y,
            z: -self.z,
        }
    }

    fn normalized(self) -> Quat {
        let n = (self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z).sqrt();
        Quat {
            w: self.w / n,
            x: self.x / n,
            y: self.y / n,
            z: self.z / n,
        }
    }

    /// Frame rotation `exp(+i angle sx / 2)`.
    fn x_rotation_inverse(angle: f64) -> Quat {
        let (s, c) = (0.5 * angle).sin_cos();
        Quat {
            w: c,
            x: -s,
            y: 0.0,
            z: 0.0,
        }
    }

    /// `1 - F`, with `F` the axial-average fidelity: `2 |a|^2 / 3`.
    fn infidelity(self) -> f64 {
        2.0 * (self.x * self.x + self.y * self.y + self.z * self.z) / 3.0
    }

    /// `<sz>` after acting on the ground state `|0>`.
    fn sigma_z_from_ground(self) -> f64 {
        self.w * self.w + self.z * self.z - self.x * self.x - self.y * self.y
    }

    fn to_unitary(self) -> Unitary2 {
        use num_complex::Complex64 as C;
        Unitary2::from_entries([
            C::new(self.w, -self.z),
            C::new(-self.y, -self.x),
            C::new(self.y, -self.x),
            C::new(self.w, self.z),
        ])
    }
}

/// Per-cell noise supply.
trait NoiseSource {
    fn cell(&mut self, index: usize) -> (f64, f64, f64);
}

struct FrozenNoise(f64, f64, f64);

impl NoiseSource for FrozenNoise {
    #[inline]
    fn cell(&mut self, _: usize) -> (f64, f64, f64) {
        (self.0, self.1, self.2)
    }
}

impl NoiseSource for TraceStream {
    #[inline]
    fn cell(&mut self, _: usize) -> (f64, f64, f64) {
        self.next_cell()
    }
}

struct TraceSlice<'a>(&'a NoiseTraces);

impl NoiseSource for TraceSlice<'_> {
    #[inline]
    fn cell(&mut self, i: usize) -> (f64, f64, f64) {
        (self.0.delta[i], self.0.eps1[i], self.0.eps2[i])
    }
}

/// Commutator-free fourth-order Magnus nodes and weights.
const GAUSS_OFFSET: f64 = 0.288_675_134_594_812_9; // sqrt(3) / 6
const CF4_A: f64 = 0.25 + GAUSS_OFFSET;
const CF4_B: f64 = 0.25 - GAUSS_OFFSET;

/// Steps the propagator through the plan, calling `on_sample(j, U)` at every
/// sample index `j`. `U` is in the first interaction basis.
fn run_plan<N: NoiseSource>(
    cfg: &RunConfig,
    plan: &Plan,
    signal: Option<&SignalParams>,
    noise: &mut N,
    mut on_sample: impl FnMut(usize, Quat),
) {
    const RENORM_EVERY: usize = 4096;
    let dt = cfg.dt;
    let w1 = cfg.schedule.omega1;
    let (g, sdelta, xi) = signal.map_or((0.0, 0.0, 0.0), |s| (s.g, s.delta, s.xi));

    let mut u = Quat::ONE;
    let mut next_sample = 0;
    while next_sample < plan.samples.len() && plan.samples[next_sample] == 0 {
        on_sample(next_sample, u);
        next_sample += 1;
    }
    let mut k = 0usize;
    let (mut delta, mut eps1, mut eps2) = (0.0, 0.0, 0.0);
    'outer: for run in &plan.runs {
        // (hx, hy) at time t for the current segment and noise cell
        let field = |t: f64, eps1: f64, eps2: f64| {
            let mut hx = w1 * (1.0 + eps1);
            let mut hy = if run.omega2 != 0.0 {
                2.0 * run.omega2 * (1.0 + eps2) * (w1 * t + run.phase).cos()
            } else {
                0.0
            };
            if g != 0.0 {
                let (s, c) = (sdelta * t + xi).sin_cos();
                hx += g * c;
                hy += g * s;
            }
            (hx, hy)
        };
        for _ in 0..run.steps {
            if k >= plan.steps {
                break 'outer;
            }
            if k % cfg.substeps == 0 {
                (delta, eps1, eps2) = noise.cell(k / cfg.substeps);
            }
            let tm = (k as f64 + 0.5) * dt;
            let step = match cfg.step_rule {
                StepRule::Midpoint => {
                    let (hx, hy) = field(tm, eps1, eps2);
                    Quat::step(hx, hy, delta, dt)
                }
                StepRule::Magnus4 => {
                    let (x1, y1) = field(tm - GAUSS_OFFSET * dt, eps1, eps2);
                    let (x2, y2) = field(tm + GAUSS_OFFSET * dt, eps1, eps2);
                    let first = Quat::step(
                        CF4_A * x1 + CF4_B * x2,
                        CF4_A * y1 + CF4_B * y2,
                        0.5 * delta,
                        dt,
                    );
                    let second = Quat::step(
                        CF4_B * x1 + CF4_A * x2,
                        CF4_B * y1 + CF4_A * y2,
                        0.5 * delta,
                        dt,
                    );
                    second.mul(first)
                }
            };
            u = step.mul(u);
            k += 1;
            if k % RENORM_EVERY == 0 {
                u = u.normalized();
            }
            while next_sample < plan.samples.len() && plan.samples[next_sample] == k {
                on_sample(next_sample, u);
                next_sample += 1;
            }
        }
    }
}

/// Step generator at time `t` for given noise traces (point evaluation of the
/// oscillating factors; noise taken from the cell containing `t`).
pub fn hamiltonian_at(cfg: &RunConfig, traces: &NoiseTraces, t: f64) -> Result<PauliCoeffs> {
    let drive = cfg.schedule.schedule_at(t)?;
    let cell = (t / traces.dt).floor() as usize;
    if cell >= traces.len() {
        return Err(invalid(format!("time {t} beyond the noise traces")));
    }
    let (delta, eps1, eps2) = (traces.delta[cell], traces.eps1[cell], traces.eps2[cell]);
    let w1 = cfg.schedule.omega1;
    let mut hx = w1 * (1.0 + eps1);
    let mut hy = 2.0 * drive.omega2 * (1.0 + eps2) * (w1 * t + drive.phase).cos();
    if let Some(s) = &cfg.signal {
        hx += s.g * (s.delta * t + s.xi).cos();
        hy += s.g * (s.delta * t + s.xi).sin();
    }
    Ok(PauliCoeffs::new(0.0, hx, hy, delta))
}

fn check_traces(cfg: &RunConfig, plan: &Plan, traces: &NoiseTraces) -> Result<()> {
    if (traces.dt - cfg.noise_dt()).abs() > 1e-12 * cfg.noise_dt() {
        return Err(invalid(format!(
            "trace grid {} us does not match dt * substeps = {} us",
            traces.dt,
            cfg.noise_dt()
        )));
    }
    let cells = plan.steps.div_ceil(cfg.substeps);
    if traces.len() < cells {
        return Err(invalid(format!(
            "traces hold {} cells, run needs {cells}",
            traces.len()
        )));
    }
    Ok(())
}

/// Propagators `U(t)` at the sample times for one noise realization.
pub fn propagate(cfg: &RunConfig, traces: &NoiseTraces) -> Result<Vec<Unitary2>> {
    let plan = cfg.plan()?;
    check_traces(cfg, &plan, traces)?;
    let mut out = vec![Unitary2::identity(); plan.samples.len()];
    run_plan(cfg, &plan, cfg.signal.as_ref(), &mut TraceSlice(traces), |j, u| {
        out[j] = u.to_unitary()
    });
    Ok(out)
}

/// `exp(+i Omega1 t sx / 2) u`: from the first to the second interaction basis.
#[allow(non_snake_case)]
pub fn frame_to_I2(u: &Unitary2, t: f64, omega1: f64) -> Unitary2 {
    let r = Quat::x_rotation_inverse(omega1 * t).to_unitary();
    r * *u
}

fn reference_quats(cfg: &RunConfig, plan: &Plan) -> Vec<Quat> {
    let mut out = vec![Quat::ONE; plan.samples.len()];
    run_plan(cfg, plan, None, &mut FrozenNoise(0.0, 0.0, 0.0), |j, u| out[j] = u);
    out
}

/// Noise-free, signal-free propagator at sample time `t`.
pub fn reference_propagator(cfg: &RunConfig, t: f64) -> Result<Unitary2> {
    let single = cfg.clone().with_samples(vec![t]);
    let plan = single.plan()?;
    Ok(reference_quats(&single, &plan)[0].to_unitary())
}

/// Ensemble mean and standard error per sample time.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleCurve {
    pub times: Vec<f64>,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_realizations: usize,
    pub seed: u64,
}

impl EnsembleCurve {
    /// Reduces per-realization rows in the given order.
    fn from_rows(times: Vec<f64>, rows: &[Vec<f64>], seed: u64) -> Self {
        let n = rows.len();
        let m = times.len();
        let mut mean = vec![0.0; m];
        let mut stderr = vec![0.0; m];
        for j in 0..m {
            let mu = rows.iter().map(|r| r[j]).sum::<f64>() / n as f64;
            let var = if n > 1 {
                rows.iter().map(|r| (r[j] - mu).powi(2)).sum::<f64>() / (n - 1) as f64
            } else {
                0.0
            };
            mean[j] = mu;
            stderr[j] = (var / n as f64).sqrt();
        }
        Self {
            times,
            mean,
            stderr,
            n_realizations: n,
            seed,
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Mean at the sample closest to `t`.
    pub fn at(&self, t: f64) -> Option<f64> {
        let j = self
            .times
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))?
            .0;
        Some(self.mean[j])
    }
}

fn for_each_realization<T, F>(cfg: &RunConfig, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    let work = || {
        (0..cfg.realizations)
            .into_par_iter()
            .map(&f)
            .collect::<Result<Vec<T>>>()
    };
    match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| invalid(format!("thread pool: {e}")))?
            .install(work),
        None => work(),
    }
}

/// Runs realization `r` and feeds its first-basis propagators to `on_sample`.
fn run_realization(
    cfg: &RunConfig,
    plan: &Plan,
    signal: Option<&SignalParams>,
    r: usize,
    on_sample: impl FnMut(usize, Quat),
) -> Result<()> {
    match cfg.noise {
        NoiseSpec::Frozen { delta, eps1, eps2 } => {
            run_plan(cfg, plan, signal, &mut FrozenNoise(delta, eps1, eps2), on_sample)
        }
        NoiseSpec::Stochastic(n) => {
            let seed = realization_seed(cfg.master_seed, r as u64);
            let mut stream = TraceStream::new(&n, cfg.noise_dt(), seed)?;
            run_plan(cfg, plan, signal, &mut stream, on_sample)
        }
    }
    Ok(())
}

/// Per-realization axial fidelity in the second interaction basis, averaged.
pub fn ensemble_fidelity(cfg: &RunConfig) -> Result<EnsembleCurve> {
    if cfg.realizations < 2 {
        return Err(invalid("ensembles need at least 2 realizations"));
    }
    let plan = cfg.plan()?;
    let frames: Vec<Quat> = plan
        .samples
        .iter()
        .map(|&k| Quat::x_rotation_inverse(cfg.schedule.omega1 * k as f64 * cfg.dt))
        .collect();
    let rows = for_each_realization(cfg, |r| {
        let mut row = vec![0.0; plan.samples.len()];
        run_realization(cfg, &plan, cfg.signal.as_ref(), r, |j, u| {
            row[j] = 1.0 - frames[j].mul(u).infidelity();
        })?;
        Ok(row)
    })?;
    Ok(EnsembleCurve::from_rows(
        cfg.sample_times.clone(),
        &rows,
        cfg.master_seed,
    ))
}

/// Corrected `<sz>` and ground population of a run started in the ground state.
#[derive(Clone, Debug, PartialEq)]
pub struct SensingCurves {
    pub sigma_z: EnsembleCurve,
    pub ground_pop: EnsembleCurve,
}

/// Evolves the ground state, undoes the noise-free signal-free propagator at
/// each sample time and records `<sz>` and the ground population.
pub fn ensemble_sensing(cfg: &RunConfig) -> Result<SensingCurves> {
    if cfg.signal.is_none() {
        return Err(invalid("sensing runs need a signal"));
    }
    if cfg.realizations < 2 {
        return Err(invalid("ensembles need at least 2 realizations"));
    }
    let plan = cfg.plan()?;
    let reference: Vec<Quat> = reference_quats(cfg, &plan).into_iter().map(Quat::conj).collect();
    let rows = for_each_realization(cfg, |r| {
        let mut row = vec![0.0; plan.samples.len()];
        run_realization(cfg, &plan, cfg.signal.as_ref(), r, |j, u| {
            row[j] = reference[j].mul(u).sigma_z_from_ground();
        })?;
        Ok(row)
    })?;
    let sigma_z = EnsembleCurve::from_rows(cfg.sample_times.clone(), &rows, cfg.master_seed);
    let ground_pop = EnsembleCurve {
        mean: sigma_z.mean.iter().map(|z| 0.5 * (1.0 + z)).collect(),
        stderr: sigma_z.stderr.iter().map(|s| 0.5 * s).collect(),
        ..sigma_z.clone()
    };
    Ok(SensingCurves {
        sigma_z,
        ground_pop,
    })
}
