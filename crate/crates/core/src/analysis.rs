//! Coherence times, damped-cosine fits and ideal sensing curves.

use std::f64::consts::PI;

use nalgebra::{SMatrix, SVector};
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::evolve::EnsembleCurve;

/// Axial-average fidelity of a fully dephased qubit.
pub const FIDELITY_LIMIT: f64 = 2.0 / 3.0;
/// Fidelity T2 threshold, `1/e` of the way from 1 down to the limit (rounded).
pub const FIDELITY_THRESHOLD: f64 = 0.79;
/// Population T2 threshold, `1/e` of the way from 1 down to 1/2 (rounded).
pub const POPULATION_THRESHOLD: f64 = 0.68;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum T2Method {
    FidelityThreshold,
    PopulationEnvelope,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct T2Result {
    /// us
    pub t2: f64,
    pub method: T2Method,
    pub threshold: f64,
    pub crossed: bool,
}

/// First crossing of the mean below `threshold`, linearly interpolated.
/// Without a crossing, `t2` is the last sample time.
pub fn t2_threshold(curve: &EnsembleCurve, limit: f64, threshold: f64) -> Result<T2Result> {
    if curve.len() < 2 {
        return Err(invalid("T2 needs at least 2 samples"));
    }
    if !(threshold > limit && threshold < 1.0) {
        return Err(invalid(format!(
            "threshold {threshold} must lie between the limit {limit} and 1"
        )));
    }
    let result = |t2, crossed| T2Result {
        t2,
        method: T2Method::FidelityThreshold,
        threshold,
        crossed,
    };
    let (t, y) = (&curve.times, &curve.mean);
    if y[0] < threshold {
        return Ok(result(t[0], true));
    }
    for i in 1..t.len() {
        if y[i] < threshold {
            let s = (y[i - 1] - threshold) / (y[i - 1] - y[i]);
            return Ok(result(t[i - 1] + s * (t[i] - t[i - 1]), true));
        }
    }
    Ok(result(*t.last().unwrap(), false))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ThetaKind {
    Pulsed,
    Continuous,
}

/// Rotation angle accumulated by the signal in the ideal toggling frame:
/// pulsed `int_0^t g |cos(delta s)| ds`, continuous `g t / 2`.
pub fn theoretical_theta(kind: ThetaKind, g: f64, delta: f64, t: f64) -> Result<f64> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("time must be >= 0, got {t}")));
    }
    Ok(match kind {
        ThetaKind::Continuous => 0.5 * g * t,
        ThetaKind::Pulsed => {
            let d = delta.abs();
            if d == 0.0 {
                return Ok(g * t);
            }
            let u = d * t;
            let n = (u / PI).floor();
            let r = u - n * PI;
            let part = if r <= 0.5 * PI { r.sin() } else { 2.0 - r.sin() };
            g / d * (2.0 * n + part)
        }
    })
}

/// `offset + amplitude cos(angular_frequency t + phase) exp(-t / decay_time)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OscFit {
    /// rad/us
    pub angular_frequency: f64,
    pub amplitude: f64,
    /// us; infinite for an undamped fit.
    pub decay_time: f64,
    pub residual_rms: f64,
    pub offset: f64,
    pub phase: f64,
}

impl OscFit {
    pub fn eval(&self, t: f64) -> f64 {
        let rate = if self.decay_time.is_finite() { 1.0 / self.decay_time } else { 0.0 };
        self.offset + self.amplitude * (self.angular_frequency * t + self.phase).cos() * (-rate * t).exp()
    }
}

/// Periodogram `(w, |sum (y - mean) e^{-i w t}|^2 / n)` of irregular samples.
pub fn periodogram(times: &[f64], ys: &[f64]) -> Vec<(f64, f64)> {
    let n = times.len();
    let mean = ys.iter().sum::<f64>() / n as f64;
    let span = times[n - 1] - times[0];
    let min_dt = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    let w_max = PI / min_dt;
    let dw = 2.0 * PI / span / 8.0;
    let count = ((w_max / dw).floor() as usize).clamp(1, 20_000);
    (1..=count)
        .map(|k| {
            let w = k as f64 * dw;
            let (mut re, mut im) = (0.0, 0.0);
            for (t, y) in times.iter().zip(ys) {
                let (s, c) = (w * t).sin_cos();
                re += (y - mean) * c;
                im -= (y - mean) * s;
            }
            (w, (re * re + im * im) / n as f64)
        })
        .collect()
}

type P5 = SVector<f64, 5>;

fn model(p: &P5, t: f64) -> (f64, [f64; 5]) {
    let (off, a, w, ph, k) = (p[0], p[1], p[2], p[3], p[4]);
    let e = (-k * t).exp();
    let (s, c) = (w * t + ph).sin_cos();
    let v = off + a * c * e;
    (v, [1.0, c * e, -a * t * s * e, -a * s * e, -a * t * c * e])
}

fn sse(p: &P5, ts: &[f64], ys: &[f64]) -> f64 {
    ts.iter().zip(ys).map(|(&t, &y)| (model(p, t).0 - y).powi(2)).sum()
}

/// Least-squares damped-cosine fit started from the periodogram peak.
pub fn fit_damped_cosine(curve: &EnsembleCurve) -> Result<OscFit> {
    let (ts, ys) = (&curve.times, &curve.mean);
    if ts.len() < 8 {
        return Err(invalid(format!("fit needs >= 8 samples, got {}", ts.len())));
    }
    let spectrum = periodogram(ts, ys);
    let fail = |reason: String, spectrum: Vec<(f64, f64)>| Error::FitFailed { reason, spectrum };
    let (peak_i, &(w0, peak)) = spectrum
        .iter()
        .enumerate()
        .max_by(|a, b| a.1 .1.total_cmp(&b.1 .1))
        .expect("non-empty spectrum");
    let mut powers: Vec<f64> = spectrum.iter().map(|s| s.1).collect();
    powers.sort_by(f64::total_cmp);
    let floor = powers[powers.len() / 2];
    if !(peak > 10.0 * floor && peak > 0.0) {
        return Err(fail(
            format!("no spectral peak above the noise floor (peak {peak:.3e}, median {floor:.3e})"),
            spectrum,
        ));
    }
    if peak_i == 0 {
        return Err(fail("spectral peak at the lowest resolvable frequency; less than one period sampled".into(), spectrum));
    }

    let n = ts.len() as f64;
    let mean = ys.iter().sum::<f64>() / n;
    let (mut re, mut im) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys.iter()) {
        let (s, c) = (w0 * t).sin_cos();
        re += (y - mean) * c;
        im += (y - mean) * s;
    }
    let span = ts[ts.len() - 1] - ts[0];
    // projection onto cos(w t + ph) gives (A/2) e^{i ph} per sample
    let a0 = 2.0 * (re * re + im * im).sqrt() / n;
    let ph0 = im.atan2(re);
    let mut p = P5::from([mean, a0, w0, -ph0, 1.0 / span]);

    let mut lambda = 1e-3;
    let mut cost = sse(&p, ts, ys);
    for _ in 0..500 {
        let mut jtj = SMatrix::<f64, 5, 5>::zeros();
        let mut jtr = P5::zeros();
        for (&t, &y) in ts.iter().zip(ys.iter()) {
            let (v, g) = model(&p, t);
            let g = P5::from(g);
            jtj += g * g.transpose();
            jtr += g * (y - v);
        }
        let mut improved = false;
        for _ in 0..30 {
            let mut a = jtj;
            for i in 0..5 {
                a[(i, i)] += lambda * jtj[(i, i)].max(1e-300);
            }
            let Some(step) = a.lu().solve(&jtr) else {
                lambda *= 10.0;
                continue;
            };
            let trial = p + step;
            let c = sse(&trial, ts, ys);
            if c.is_finite() && c <= cost {
                let rel = (cost - c) / cost.max(1e-300);
                p = trial;
                cost = c;
                lambda = (lambda * 0.3).max(1e-12);
                improved = rel > 1e-13;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    if !p.iter().all(|x| x.is_finite()) {
        return Err(fail("fit diverged".into(), spectrum));
    }
    let (mut a, mut w, mut ph) = (p[1], p[2], p[3]);
    if a < 0.0 {
        a = -a;
        ph += PI;
    }
    if w < 0.0 {
        w = -w;
        ph = -ph;
    }
    let k = p[4];
    Ok(OscFit {
        angular_frequency: w,
        amplitude: a,
        decay_time: if k > 0.0 { 1.0 / k } else { f64::INFINITY },
        residual_rms: (cost / n).sqrt(),
        offset: p[0],
        phase: ph.rem_euclid(2.0 * PI),
    })
}

/// Amplitude of the damped mode `exp(-t / decay_time) cos(omega t + phi)` in a curve,
/// by linear least squares against that mode plus a quadratic baseline.
///
/// Unlike [`fit_damped_cosine`] this cannot lock onto a slow drift, so it measures how
/// strongly a curve responds at a known frequency even when the response is suppressed.
pub fn mode_amplitude(curve: &EnsembleCurve, omega: f64, decay_time: f64) -> Result<f64> {
    if curve.len() < 8 {
        return Err(invalid(format!("mode projection needs >= 8 samples, got {}", curve.len())));
    }
    if !(omega.is_finite() && decay_time > 0.0) {
        return Err(invalid(format!(
            "mode projection needs finite omega and decay_time > 0, got {omega}, {decay_time}"
        )));
    }
    let span = curve.times.last().copied().unwrap_or(1.0).max(f64::MIN_POSITIVE);
    let mut ata = SMatrix::<f64, 5, 5>::zeros();
    let mut aty = SVector::<f64, 5>::zeros();
    for (&t, &y) in curve.times.iter().zip(&curve.mean) {
        let s = t / span;
        let env = (-t / decay_time).exp();
        let row = SVector::<f64, 5>::new(
            1.0,
            s,
            s * s,
            env * (omega * t).cos(),
            env * (omega * t).sin(),
        );
        ata += row * row.transpose();
        aty += row * y;
    }
    let x = ata
        .lu()
        .solve(&aty)
        .ok_or_else(|| invalid("mode projection is singular".to_string()))?;
    Ok(x[3].hypot(x[4]))
}

/// Time at which the population envelope `0.5 + 0.5 A exp(-t/decay)` falls to 0.68.
pub fn sensing_t2(curve: &EnsembleCurve, fit: &OscFit) -> T2Result {
    let margin = POPULATION_THRESHOLD - 0.5;
    let half_amp = 0.5 * fit.amplitude;
    let last = curve.times.last().copied().unwrap_or(0.0);
    let no_cross = |t2| T2Result {
        t2,
        method: T2Method::PopulationEnvelope,
        threshold: POPULATION_THRESHOLD,
        crossed: false,
    };
    if !fit.decay_time.is_finite() {
        return no_cross(last);
    }
    if half_amp <= margin {
        // the envelope starts below the threshold
        return no_cross(0.0);
    }
    T2Result {
        t2: fit.decay_time * (half_amp / margin).ln(),
        method: T2Method::PopulationEnvelope,
        threshold: POPULATION_THRESHOLD,
        crossed: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(times: Vec<f64>, mean: Vec<f64>) -> EnsembleCurve {
        let n = times.len();
        EnsembleCurve {
            times,
            mean,
            stderr: vec![0.0; n],
            n_realizations: 1,
            seed: 0,
        }
    }

    #[test]
    fn mode_projection_ignores_drift() {
        let times: Vec<f64> = (0..101).map(|i| i as f64 * 80.0).collect();
        let (w, tau) = (0.0075, 4000.0);
        let osc = times
            .iter()
            .map(|&t| 0.7 * (-t / tau).exp() * (w * t + 0.3).cos())
            .collect();
        let a = mode_amplitude(&curve(times.clone(), osc), w, tau).unwrap();
        assert!((a - 0.7).abs() < 1e-9);
        let drift = times.iter().map(|&t| (-t / 6000.0).exp()).collect();
        let a = mode_amplitude(&curve(times, drift), w, tau).unwrap();
        assert!(a < 0.02, "{a}");
    }

    #[test]
    fn threshold_interpolation() {
        let c = curve(vec![0.0, 100.0, 200.0], vec![1.0, 0.9, 0.75]);
        let r = t2_threshold(&c, FIDELITY_LIMIT, FIDELITY_THRESHOLD).unwrap();
        assert!(r.crossed);
        assert!((r.t2 - 173.333).abs() < 1e-2);
        let flat = curve(vec![0.0, 1.0, 2.0], vec![1.0; 3]);
        let r = t2_threshold(&flat, FIDELITY_LIMIT, FIDELITY_THRESHOLD).unwrap();
        assert!(!r.crossed);
        assert_eq!(r.t2, 2.0);
        assert!(t2_threshold(&curve(vec![0.0], vec![1.0]), FIDELITY_LIMIT, 0.79).is_err());
    }

    #[test]
    fn theta_examples() {
        let (g, d) = (0.04, 0.12);
        let half = theoretical_theta(ThetaKind::Pulsed, g, d, PI / d).unwrap();
        assert!((half - 2.0 * g / d).abs() < 1e-14);
        let t = 5000.0;
        let long = theoretical_theta(ThetaKind::Pulsed, g, d, t).unwrap();
        assert!((long / (2.0 / PI * g * t) - 1.0).abs() < 0.01);
        let g = 2.0 * PI * 0.00246;
        let c = theoretical_theta(ThetaKind::Continuous, g, 0.0, 813.0).unwrap();
        assert!((c - 0.5 * g * 813.0).abs() < 1e-12);
        assert!((c - 2.0 * PI).abs() < 0.01);
    }

    #[test]
    fn synthetic_fit() {
        let times: Vec<f64> = (1..=100).map(|k| 25.0 * k as f64).collect();
        let mean = times
            .iter()
            .map(|t| (0.0277 * t).cos() * (-t / 1050.0).exp())
            .collect();
        let fit = fit_damped_cosine(&curve(times, mean)).unwrap();
        assert!((fit.angular_frequency / 0.0277 - 1.0).abs() < 0.01);
        assert!((fit.decay_time / 1050.0 - 1.0).abs() < 0.05);
        assert!(fit.residual_rms < 1e-8);
    }

    #[test]
    fn flat_data_fails_with_spectrum() {
        let times: Vec<f64> = (0..40).map(|k| k as f64).collect();
        let c = curve(times, vec![0.5; 40]);
        match fit_damped_cosine(&c) {
            Err(Error::FitFailed { spectrum, .. }) => assert!(!spectrum.is_empty()),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn envelope_t2_examples() {
        let c = curve(vec![0.0, 5000.0], vec![1.0, 1.0]);
        let fit = OscFit {
            angular_frequency: 0.0277,
            amplitude: 1.0,
            decay_time: 1050.0,
            residual_rms: 0.0,
            offset: 0.0,
            phase: 0.0,
        };
        let r = sensing_t2(&c, &fit);
        assert!(r.crossed);
        assert!((r.t2 - 1050.0 * (0.5f64 / 0.18).ln()).abs() < 1e-9);
        assert!((r.t2 - 1072.0).abs() < 1.0);
        let undamped = OscFit {
            decay_time: f64::INFINITY,
            ..fit
        };
        assert!(!sensing_t2(&c, &undamped).crossed);
    }
}
