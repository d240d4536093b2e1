//! Ornstein-Uhlenbeck sample paths for the magnetic detuning `delta(t)` and the
//! relative drive-amplitude errors `eps1(t)`, `eps2(t)`.
//!
//! Paths are generated with the exact OU update
//! `x(t+dt) = x(t) e^{-dt/tau} + n sqrt((c tau / 2)(1 - e^{-2 dt/tau}))`,
//! so the grid step introduces no bias in the noise statistics.

use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, Result};

/// Initial value of an OU path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum OuInit {
    Zero,
    /// Drawn from the stationary law `N(0, c tau / 2)`.
    Stationary,
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OUParams {
    /// Correlation time `tau = 1/gamma` in us.
    pub tau_c: f64,
    /// Diffusion constant `c` in (units of x)^2 / us.
    pub diffusion: f64,
    pub init: OuInit,
}

impl OUParams {
    pub fn new(tau_c: f64, diffusion: f64, init: OuInit) -> Result<Self> {
        if !(tau_c.is_finite() && tau_c > 0.0) {
            return Err(invalid(format!("OU correlation time must be > 0, got {tau_c}")));
        }
        if !(diffusion.is_finite() && diffusion >= 0.0) {
            return Err(invalid(format!("OU diffusion must be >= 0, got {diffusion}")));
        }
        Ok(Self {
            tau_c,
            diffusion,
            init,
        })
    }

    /// Parameters of a relative error with stationary standard deviation `rel_err`:
    /// `c = 2 rel_err^2 / tau`.
    pub fn relative(rel_err: f64, tau_c: f64, init: OuInit) -> Result<Self> {
        Self::new(tau_c, 2.0 * rel_err * rel_err / tau_c, init)
    }
}

/// `sqrt(c tau / 2)`.
pub fn stationary_std(p: &OUParams) -> f64 {
    (0.5 * p.diffusion * p.tau_c).sqrt()
}

/// One exact OU update over `dt`.
pub fn ou_step<R: Rng + ?Sized>(x: f64, dt: f64, p: &OUParams, rng: &mut R) -> f64 {
    OuStepper::new(p, dt).step(x, rng)
}

/// Precomputed OU update for a fixed step.
#[derive(Clone, Copy, Debug)]
pub struct OuStepper {
    decay: f64,
    kick: f64,
}

impl OuStepper {
    pub fn new(p: &OUParams, dt: f64) -> Self {
        let decay = (-dt / p.tau_c).exp();
        // 1 - e^{-2dt/tau} without cancellation for small dt
        let var = 0.5 * p.diffusion * p.tau_c * -(-2.0 * dt / p.tau_c).exp_m1();
        Self {
            decay,
            kick: var.sqrt(),
        }
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, x: f64, rng: &mut R) -> f64 {
        let n: f64 = rng.sample(StandardNormal);
        x * self.decay + self.kick * n
    }
}

pub(crate) fn initial_value<R: Rng + ?Sized>(p: &OUParams, rng: &mut R) -> f64 {
    match p.init {
        OuInit::Zero => 0.0,
        OuInit::Stationary => {
            let n: f64 = rng.sample(StandardNormal);
            stationary_std(p) * n
        }
        OuInit::Fixed(v) => v,
    }
}

/// Generate `n` samples of an OU path on a grid of step `dt`, starting from the
/// configured initial value.
pub fn ou_path<R: Rng + ?Sized>(p: &OUParams, n: usize, dt: f64, rng: &mut R) -> Vec<f64> {
    let stepper = OuStepper::new(p, dt);
    let mut out = Vec::with_capacity(n);
    let mut x = initial_value(p, rng);
    for _ in 0..n {
        out.push(x);
        x = stepper.step(x, rng);
    }
    out
}

/// `c = 4 / (T2*^2 tau)`, the magnetic diffusion constant for a target dephasing time.
///
/// For `t << tau` the field is quasi-static with variance `c tau / 2`, so free coherence
/// decays as `exp(-(t / T2*)^2)` and the axial fidelity `(2 + C) / 3` reaches 0.79 at `T2*`.
pub fn magnetic_diffusion(t2_star: f64, tau_c: f64) -> f64 {
    4.0 / (t2_star * t2_star * tau_c)
}

/// Noise model shared by every protocol.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseConfig {
    /// `delta(t)` in rad/us.
    pub magnetic: OUParams,
    /// Stationary relative standard deviation of the first drive amplitude.
    pub drive1_rel_err: f64,
    /// Stationary relative standard deviation of the second drive amplitude.
    pub drive2_rel_err: f64,
    /// Correlation time of both drive-amplitude processes, us.
    pub drive_tau: f64,
    pub drive_init: OuInit,
    /// Dephasing time the magnetic diffusion was derived from, us.
    pub t2_star: f64,
}

impl Default for NoiseConfig {
    /// `tau = 25 us`, `T2* = 3 us`, `tau_Omega = 500 us`, `delta_Omega = 0.005`.
    fn default() -> Self {
        Self::from_t2_star(3.0, 25.0, 0.005, 0.005, 500.0)
            .expect("default noise parameters are valid")
    }
}

impl NoiseConfig {
    pub fn from_t2_star(
        t2_star: f64,
        tau_c: f64,
        drive1_rel_err: f64,
        drive2_rel_err: f64,
        drive_tau: f64,
    ) -> Result<Self> {
        if !(t2_star.is_finite() && t2_star > 0.0) {
            return Err(invalid(format!("T2* must be > 0, got {t2_star}")));
        }
        let magnetic = OUParams::new(tau_c, magnetic_diffusion(t2_star, tau_c), OuInit::Stationary)?;
        let cfg = Self {
            magnetic,
            drive1_rel_err,
            drive2_rel_err,
            drive_tau,
            drive_init: OuInit::Stationary,
            t2_star,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        OUParams::new(self.magnetic.tau_c, self.magnetic.diffusion, self.magnetic.init)?;
        for (name, v) in [
            ("drive1_rel_err", self.drive1_rel_err),
            ("drive2_rel_err", self.drive2_rel_err),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.drive_tau.is_finite() && self.drive_tau > 0.0) {
            return Err(invalid(format!("drive_tau must be > 0, got {}", self.drive_tau)));
        }
        Ok(())
    }

    pub fn drive1(&self) -> OUParams {
        OUParams::relative(self.drive1_rel_err, self.drive_tau, self.drive_init)
            .expect("validated drive parameters")
    }

    pub fn drive2(&self) -> OUParams {
        OUParams::relative(self.drive2_rel_err, self.drive_tau, self.drive_init)
            .expect("validated drive parameters")
    }

    /// Same noise with the second drive made ideal (`eps2 = 0`).
    pub fn with_ideal_second_drive(mut self) -> Self {
        self.drive2_rel_err = 0.0;
        self
    }
}

/// Stream identifiers of the three processes within one realization.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum TraceId {
    Delta = 0,
    Eps1 = 1,
    Eps2 = 2,
}

/// Seed of realization `index` under `master_seed` (SplitMix64 finalizer of the pair).
pub fn realization_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed
        .wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent generator for one process of one realization.
pub fn trace_rng(seed: u64, trace: TraceId) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trace as u64);
    rng
}

/// Gridded noise realization; sample `i` holds the value on `[i dt, (i+1) dt)`.
#[derive(Clone, Debug, PartialEq)]
pub struct NoiseTraces {
    pub dt: f64,
    /// rad/us
    pub delta: Vec<f64>,
    pub eps1: Vec<f64>,
    pub eps2: Vec<f64>,
}

impl NoiseTraces {
    /// Constant traces, e.g. for static-error runs.
    pub fn frozen(n_steps: usize, dt: f64, delta: f64, eps1: f64, eps2: f64) -> Self {
        Self {
            dt,
            delta: vec![delta; n_steps],
            eps1: vec![eps1; n_steps],
            eps2: vec![eps2; n_steps],
        }
    }

    pub fn len(&self) -> usize {
        self.delta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delta.is_empty()
    }

    /// CSV with columns `t_us,delta_rad_per_us,eps1,eps2`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "t_us,delta_rad_per_us,eps1,eps2")?;
        for i in 0..self.len() {
            writeln!(
                w,
                "{},{},{},{}",
                i as f64 * self.dt,
                self.delta[i],
                self.eps1[i],
                self.eps2[i]
            )?;
        }
        Ok(())
    }
}

/// Three independent OU paths for one realization; deterministic in `seed`.
pub fn make_traces(cfg: &NoiseConfig, n_steps: usize, dt: f64, seed: u64) -> Result<NoiseTraces> {
    if n_steps == 0 {
        return Err(invalid("noise traces need at least one step"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(invalid(format!("grid step must be > 0, got {dt}")));
    }
    cfg.validate()?;
    let delta = ou_path(&cfg.magnetic, n_steps, dt, &mut trace_rng(seed, TraceId::Delta));
    let eps1 = ou_path(&cfg.drive1(), n_steps, dt, &mut trace_rng(seed, TraceId::Eps1));
    let eps2 = ou_path(&cfg.drive2(), n_steps, dt, &mut trace_rng(seed, TraceId::Eps2));
    Ok(NoiseTraces {
        dt,
        delta,
        eps1,
        eps2,
    })
}

struct OuStream {
    stepper: OuStepper,
    rng: ChaCha8Rng,
    x: f64,
}

impl OuStream {
    fn new(p: &OUParams, dt: f64, mut rng: ChaCha8Rng) -> Self {
        let x = initial_value(p, &mut rng);
        Self {
            stepper: OuStepper::new(p, dt),
            rng,
            x,
        }
    }

    #[inline]
    fn next(&mut self) -> f64 {
        let v = self.x;
        self.x = self.stepper.step(v, &mut self.rng);
        v
    }
}

/// On-demand version of [`make_traces`]: yields the same samples without
/// storing the whole realization.
pub struct TraceStream {
    delta: OuStream,
    eps1: OuStream,
    eps2: OuStream,
}

impl TraceStream {
    pub fn new(cfg: &NoiseConfig, dt: f64, seed: u64) -> Result<Self> {
        if !(dt.is_finite() && dt > 0.0) {
            return Err(invalid(format!("grid step must be > 0, got {dt}")));
        }
        cfg.validate()?;
        Ok(Self {
            delta: OuStream::new(&cfg.magnetic, dt, trace_rng(seed, TraceId::Delta)),
            eps1: OuStream::new(&cfg.drive1(), dt, trace_rng(seed, TraceId::Eps1)),
            eps2: OuStream::new(&cfg.drive2(), dt, trace_rng(seed, TraceId::Eps2)),
        })
    }

    /// `(delta, eps1, eps2)` of the next grid cell.
    #[inline]
    pub fn next_cell(&mut self) -> (f64, f64, f64) {
        (self.delta.next(), self.eps1.next(), self.eps2.next())
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Empirical lag-`k` autocovariance divided by the variance (mean removed).
pub fn lag_autocorrelation(xs: &[f64], lag: usize) -> f64 {
    let n = xs.len();
    assert!(lag < n, "lag {lag} exceeds trace length {n}");
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let cov = xs[..n - lag]
        .iter()
        .zip(&xs[lag..])
        .map(|(a, b)| (a - mean) * (b - mean))
        .sum::<f64>()
        / (n - lag) as f64;
    cov / var
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_step_is_deterministic_contraction() {
        let p = OUParams::new(25.0, 0.0, OuInit::Zero).unwrap();
        let mut rng = trace_rng(1, TraceId::Delta);
        let x = ou_step(0.8, 5.0, &p, &mut rng);
        assert!((x - 0.8 * (-0.2f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn vanishing_step_is_continuous() {
        let p = OUParams::new(25.0, 1.0, OuInit::Zero).unwrap();
        let mut rng = trace_rng(3, TraceId::Delta);
        let x = ou_step(0.8, 1e-14, &p, &mut rng);
        assert!((x - 0.8).abs() < 1e-6);
    }

    #[test]
    fn diffusion_matches_target_dephasing() {
        let c = magnetic_diffusion(3.0, 25.0);
        assert!((c - 4.0 / 225.0).abs() < 1e-15);
        let p = OUParams::new(25.0, c, OuInit::Stationary).unwrap();
        // quasi-static coherence exp(-sigma^2 t^2 / 2) equals exp(-1) at T2*
        assert!((stationary_std(&p) * 3.0 - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn stationary_std_examples() {
        let p = OUParams::new(25.0, 4.0 / (3.0 * 25.0), OuInit::Zero).unwrap();
        assert!((stationary_std(&p) - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        assert!((stationary_std(&p) - 0.8165).abs() < 1e-4);
        let zero = OUParams::new(25.0, 0.0, OuInit::Zero).unwrap();
        assert_eq!(stationary_std(&zero), 0.0);
        let rel = OUParams::relative(0.005, 500.0, OuInit::Zero).unwrap();
        assert!((stationary_std(&rel) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn parameter_validation() {
        assert!(OUParams::new(0.0, 1.0, OuInit::Zero).is_err());
        assert!(OUParams::new(1.0, -1.0, OuInit::Zero).is_err());
        assert!(make_traces(&NoiseConfig::default(), 0, 0.01, 1).is_err());
        assert!(make_traces(&NoiseConfig::default(), 10, 0.0, 1).is_err());
    }

    #[test]
    fn traces_are_deterministic_in_seed() {
        let cfg = NoiseConfig::default();
        let a = make_traces(&cfg, 1000, 0.01, 42).unwrap();
        let b = make_traces(&cfg, 1000, 0.01, 42).unwrap();
        let c = make_traces(&cfg, 1000, 0.01, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.delta, c.delta);
    }

    #[test]
    fn ideal_second_drive_is_zero() {
        let cfg = NoiseConfig::default().with_ideal_second_drive();
        let t = make_traces(&cfg, 500, 0.01, 5).unwrap();
        assert!(t.eps2.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn csv_header_and_rows() {
        let t = NoiseTraces::frozen(3, 0.5, 0.1, 0.2, 0.3);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "t_us,delta_rad_per_us,eps1,eps2");
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[2], "0.5,0.1,0.2,0.3");
    }

    #[test]
    fn realization_seeds_differ() {
        let seeds: std::collections::HashSet<u64> = (0..1000).map(|i| realization_seed(7, i)).collect();
        assert_eq!(seeds.len(), 1000);
    }
}
