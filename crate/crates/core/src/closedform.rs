//! Static amplitude errors in the second interaction basis: exact sequence
//! propagators, fidelity formulas and their expansions, and robustness maps.
//!
//! With static errors the pulse generator is
//! `(Omega2/2) [e1 sx + (1 + e2)(cos(phi) sy + sin(phi) sz)]`, where
//! `e1 = eps1 Omega1 / Omega2`. Durations are measured as pulse areas `Omega2 t`.

use std::f64::consts::PI;
use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::schedule::{PhaseProgram, SequenceName};
use crate::su2::{
    bloch_vector, evolve_density, expm_unchecked, fidelity_axial, infidelity_axial, Density2,
    PauliCoeffs, Unitary2,
};

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize)]
pub struct StaticErrors {
    /// `eps1 Omega1 / Omega2`
    pub eps1_tilde: f64,
    pub eps2: f64,
}

impl StaticErrors {
    pub fn new(eps1_tilde: f64, eps2: f64) -> Self {
        Self { eps1_tilde, eps2 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StaticSegment {
    /// `Omega2 * duration`, also for gaps.
    pub area: f64,
    pub phase: f64,
    pub is_gap: bool,
}

impl StaticSegment {
    pub fn pulse(area: f64, phase: f64) -> Self {
        Self {
            area,
            phase,
            is_gap: false,
        }
    }

    pub fn gap(area: f64) -> Self {
        Self {
            area,
            phase: 0.0,
            is_gap: true,
        }
    }

    fn generator(&self, e: StaticErrors) -> PauliCoeffs {
        if self.is_gap {
            PauliCoeffs::new(0.0, e.eps1_tilde, 0.0, 0.0)
        } else {
            let a = 1.0 + e.eps2;
            PauliCoeffs::new(
                0.0,
                e.eps1_tilde,
                a * self.phase.cos(),
                a * self.phase.sin(),
            )
        }
    }

    fn propagator(&self, e: StaticErrors) -> Unitary2 {
        expm_unchecked(&self.generator(e), self.area)
    }
}

/// `exp(-i (area/2) [e1 sx + (1 + e2)(cos(phi) sy + sin(phi) sz)])`.
pub fn static_pulse_propagator(phase: f64, area: f64, e: StaticErrors) -> Unitary2 {
    StaticSegment::pulse(area, phase).propagator(e)
}

/// `U_n ... U_2 U_1`: the first segment acts first.
pub fn sequence_propagator(segments: &[StaticSegment], e: StaticErrors) -> Unitary2 {
    segments
        .iter()
        .fold(Unitary2::identity(), |acc, s| s.propagator(e) * acc)
}

/// Pi pulses with the given phases, each followed by a gap of area `gap_area`
/// (omitted when zero).
pub fn pulse_train(phases: &[f64], gap_area: f64) -> Vec<StaticSegment> {
    let mut out = Vec::with_capacity(2 * phases.len());
    for &phi in phases {
        out.push(StaticSegment::pulse(PI, phi));
        if gap_area > 0.0 {
            out.push(StaticSegment::gap(gap_area));
        }
    }
    out
}

/// `(2 + cos(A sqrt(e1^2 + (1 + e2)^2))) / 3`.
pub fn fidelity_ccdd(area: f64, e: StaticErrors) -> f64 {
    let r = (e.eps1_tilde.powi(2) + (1.0 + e.eps2).powi(2)).sqrt();
    (2.0 + (area * r).cos()) / 3.0
}

/// Leading first-drive error of the continuous double drive at `A = 2 pi m`: `A^2 e1^4 / 24`.
pub fn error_ccdd_first_field_approx(area: f64, eps1_tilde: f64) -> f64 {
    area * area * eps1_tilde.powi(4) / 24.0
}

/// Second-drive error of the continuous double drive at `A = 2 pi m`: `(2/3) sin^2(A e2 / 2)`.
pub fn error_second_field(area: f64, eps2: f64) -> f64 {
    2.0 / 3.0 * (0.5 * area * eps2).sin().powi(2)
}

/// Low-order error of the continuous double drive with both drives noisy.
pub fn error_ccdd_mixed(area: f64, e: StaticErrors) -> f64 {
    let a2 = area * area;
    let e1 = e.eps1_tilde;
    let e2 = e.eps2;
    a2 * e1.powi(4) / 24.0
        + (1.0 / 3.0 + e1 * e1 / 4.0) * a2 * e1 * e1 * e2 / 2.0
        + (1.0 - e1 * e1) * a2 * e2 * e2 / 6.0
}

/// Exact UR4 error with an ideal second drive, `y = sqrt(1 + e1^2)`.
pub fn error_ur4(eps1_tilde: f64) -> f64 {
    let y2 = 1.0 + eps1_tilde * eps1_tilde;
    let y = y2.sqrt();
    4.0 / (3.0 * y2 * y2)
        * (y2 - 1.0)
        * (PI * y).sin().powi(2)
        * (y2 + (y2 - 1.0) * (2.0 * PI * y).cos() + 1.0)
}

/// `(2 pi^2 / 3) e1^6`.
pub fn error_ur4_approx(eps1_tilde: f64) -> f64 {
    2.0 * PI * PI / 3.0 * eps1_tilde.powi(6)
}

/// Low-order UR4 error with both drives noisy.
pub fn error_ur4_mixed(e: StaticErrors) -> f64 {
    let e1 = e.eps1_tilde;
    let e2 = e.eps2;
    let p2 = PI * PI;
    2.0 * p2 / 3.0 * e1.powi(6)
        + 8.0 * p2 / 3.0 * e1.powi(4) * e2
        + 8.0 * p2 * (1.0 - 4.0 * e1 * e1) / 3.0 * e1 * e1 * e2 * e2
}

/// Zero-separation sequences compared in the robustness maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StaticSequence {
    /// Four zero-phase pi pulses (continuous drive, area `4 pi`).
    Cp4,
    Ur4,
    /// Ten zero-phase pi pulses (continuous drive, area `10 pi`).
    Cp10,
    Ur10,
}

impl StaticSequence {
    pub const ALL: [StaticSequence; 4] = [
        StaticSequence::Cp4,
        StaticSequence::Ur4,
        StaticSequence::Cp10,
        StaticSequence::Ur10,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            StaticSequence::Cp4 => "cp4",
            StaticSequence::Ur4 => "ur4",
            StaticSequence::Cp10 => "cp10",
            StaticSequence::Ur10 => "ur10",
        }
    }

    pub fn phases(&self) -> Vec<f64> {
        match self {
            StaticSequence::Cp4 => PhaseProgram::new(SequenceName::Cp).repeated(2),
            StaticSequence::Ur4 => PhaseProgram::new(SequenceName::Ur4).phases,
            StaticSequence::Cp10 => PhaseProgram::new(SequenceName::Cp).repeated(5),
            StaticSequence::Ur10 => PhaseProgram::new(SequenceName::Ur10).phases,
        }
    }

    pub fn segments(&self) -> Vec<StaticSegment> {
        pulse_train(&self.phases(), 0.0)
    }

    pub fn propagator(&self, e: StaticErrors) -> Unitary2 {
        sequence_propagator(&self.segments(), e)
    }
}

impl fmt::Display for StaticSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StaticSequence {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        StaticSequence::ALL
            .into_iter()
            .find(|q| q.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                Error::NotImplemented(format!(
                    "sequence `{s}` is not supported; supported: cp4, ur4, cp10, ur10"
                ))
            })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorChannel {
    Eps1,
    Eps2,
}

/// Errors below this are rounding noise and carry no scaling information.
const DEGENERATE_FLOOR: f64 = 1e-14;

/// Log-log least-squares slope of `1 - F` against one error amplitude, sampled
/// at `points` geometrically spaced values in `[lo, hi]`, the other error zero.
pub fn scaling_order(
    seq: StaticSequence,
    which: ErrorChannel,
    lo: f64,
    hi: f64,
    points: usize,
) -> Result<f64> {
    if points < 5 {
        return Err(invalid("scaling fit needs at least 5 points"));
    }
    if !(lo > 0.0 && hi > lo && hi.is_finite()) {
        return Err(invalid(format!("need 0 < lo < hi, got [{lo}, {hi}]")));
    }
    let segs = seq.segments();
    let mut xs = Vec::with_capacity(points);
    let mut ys = Vec::with_capacity(points);
    for i in 0..points {
        let x = lo * (hi / lo).powf(i as f64 / (points - 1) as f64);
        let e = match which {
            ErrorChannel::Eps1 => StaticErrors::new(x, 0.0),
            ErrorChannel::Eps2 => StaticErrors::new(0.0, x),
        };
        let err = infidelity_axial(&sequence_propagator(&segs, e));
        if !(err > DEGENERATE_FLOOR && err.is_finite()) {
            return Err(invalid(format!(
                "{seq} error vanishes at {which:?} = {x}; slope undefined"
            )));
        }
        xs.push(x.ln());
        ys.push(err.ln());
    }
    Ok(ls_slope(&xs, &ys))
}

fn ls_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct HeatmapGrid {
    pub eps1_min: f64,
    pub eps1_max: f64,
    pub eps2_min: f64,
    pub eps2_max: f64,
    pub resolution: usize,
}

impl Default for HeatmapGrid {
    fn default() -> Self {
        Self {
            eps1_min: -0.5,
            eps1_max: 0.5,
            eps2_min: -0.5,
            eps2_max: 0.5,
            resolution: 101,
        }
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

/// Fidelity over a rectangular error grid; `fidelity[i][j]` is at `(eps1[i], eps2[j])`.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub sequence: StaticSequence,
    pub eps1_tilde: Vec<f64>,
    pub eps2: Vec<f64>,
    pub fidelity: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ContourSummary {
    pub level: f64,
    pub area_fraction: f64,
    /// Row-major mask of points with fidelity >= level.
    pub mask: Vec<Vec<bool>>,
}

pub const CONTOUR_LEVELS: [f64; 2] = [0.67, 0.95];

impl Heatmap {
    pub fn mask(&self, level: f64) -> Vec<Vec<bool>> {
        self.fidelity
            .iter()
            .map(|row| row.iter().map(|&f| f >= level).collect())
            .collect()
    }

    /// Fraction of grid points with fidelity >= `level`.
    pub fn area_fraction(&self, level: f64) -> f64 {
        let total = self.eps1_tilde.len() * self.eps2.len();
        let hits: usize = self
            .fidelity
            .iter()
            .map(|row| row.iter().filter(|&&f| f >= level).count())
            .sum();
        hits as f64 / total as f64
    }

    pub fn contours(&self) -> Vec<ContourSummary> {
        CONTOUR_LEVELS
            .iter()
            .map(|&level| ContourSummary {
                level,
                area_fraction: self.area_fraction(level),
                mask: self.mask(level),
            })
            .collect()
    }

    /// CSV with columns `eps1_tilde,eps2,fidelity`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "eps1_tilde,eps2,fidelity")?;
        for (i, e1) in self.eps1_tilde.iter().enumerate() {
            for (j, e2) in self.eps2.iter().enumerate() {
                writeln!(w, "{e1},{e2},{}", self.fidelity[i][j])?;
            }
        }
        Ok(())
    }
}

pub fn heatmap(seq: StaticSequence, grid: &HeatmapGrid) -> Result<Heatmap> {
    if grid.resolution < 16 {
        return Err(invalid(format!(
            "heatmap resolution must be >= 16, got {}",
            grid.resolution
        )));
    }
    let bounds = [grid.eps1_min, grid.eps1_max, grid.eps2_min, grid.eps2_max];
    if bounds.iter().any(|b| !b.is_finite()) || grid.eps1_min >= grid.eps1_max || grid.eps2_min >= grid.eps2_max {
        return Err(invalid(format!("invalid heatmap ranges {bounds:?}")));
    }
    let e1 = linspace(grid.eps1_min, grid.eps1_max, grid.resolution);
    let e2 = linspace(grid.eps2_min, grid.eps2_max, grid.resolution);
    let segs = seq.segments();
    let fidelity = e1
        .par_iter()
        .map(|&a| {
            e2.iter()
                .map(|&b| fidelity_axial(&sequence_propagator(&segs, StaticErrors::new(a, b))))
                .collect()
        })
        .collect();
    Ok(Heatmap {
        sequence: seq,
        eps1_tilde: e1,
        eps2: e2,
        fidelity,
    })
}

/// One point of a Bloch-vector path.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TrajectoryPoint {
    /// Elapsed area `Omega2 t`.
    pub area: f64,
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// Bloch vector of `rho0` along a segment list, `samples` points per segment.
pub fn bloch_trajectory(
    segments: &[StaticSegment],
    e: StaticErrors,
    rho0: &Density2,
    samples: usize,
) -> Vec<TrajectoryPoint> {
    let samples = samples.max(1);
    let mut u = Unitary2::identity();
    let mut elapsed = 0.0;
    let (x, y, z) = bloch_vector(rho0);
    let mut out = vec![TrajectoryPoint { area: 0.0, x, y, z }];
    for seg in segments {
        let h = seg.generator(e);
        let d = seg.area / samples as f64;
        let step = expm_unchecked(&h, d);
        for _ in 0..samples {
            u = step * u;
            elapsed += d;
            let (x, y, z) = bloch_vector(&evolve_density(rho0, &u));
            out.push(TrajectoryPoint {
                area: elapsed,
                x,
                y,
                z,
            });
        }
    }
    out
}
