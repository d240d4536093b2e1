//! Piecewise-constant second-drive programs `(Omega2(t), phi(t))` for the
//! storage and sensing protocols.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{invalid, precondition, Error, Result};
use crate::units::rad_per_us_to_mhz;

/// Phased pulse sequences applied by the second drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SequenceName {
    Cp,
    Cpmg,
    Xy4,
    Xy8,
    Ur4,
    Ur10,
}

impl SequenceName {
    pub const ALL: [SequenceName; 6] = [
        SequenceName::Cp,
        SequenceName::Cpmg,
        SequenceName::Xy4,
        SequenceName::Xy8,
        SequenceName::Ur4,
        SequenceName::Ur10,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            SequenceName::Cp => "CP",
            SequenceName::Cpmg => "CPMG",
            SequenceName::Xy4 => "XY4",
            SequenceName::Xy8 => "XY8",
            SequenceName::Ur4 => "UR4",
            SequenceName::Ur10 => "UR10",
        }
    }
}

impl fmt::Display for SequenceName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SequenceName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SequenceName::ALL
            .into_iter()
            .find(|n| n.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<_> = SequenceName::ALL.iter().map(|n| n.as_str()).collect();
                Error::NotImplemented(format!(
                    "sequence `{s}` is not supported; supported: {}",
                    names.join(", ")
                ))
            })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PhaseProgram {
    pub name: SequenceName,
    /// Pulse phases in rad, one per pi pulse.
    pub phases: Vec<f64>,
}

impl PhaseProgram {
    pub fn new(name: SequenceName) -> Self {
        let h = PI / 2.0;
        let phases = match name {
            SequenceName::Cp => vec![0.0, 0.0],
            SequenceName::Cpmg => vec![h, h],
            SequenceName::Xy4 => vec![0.0, h, 0.0, h],
            SequenceName::Xy8 => vec![0.0, h, 0.0, h, h, 0.0, h, 0.0],
            SequenceName::Ur4 => vec![0.0, PI, PI, 0.0],
            SequenceName::Ur10 => [0.0, 4.0, 2.0, 4.0, 0.0, 0.0, 4.0, 2.0, 4.0, 0.0]
                .iter()
                .map(|k| k * PI / 5.0)
                .collect(),
        };
        Self { name, phases }
    }

    pub fn len(&self) -> usize {
        self.phases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phases.is_empty()
    }

    /// The phase list repeated `n` times.
    pub fn repeated(&self, n: usize) -> Vec<f64> {
        self.phases.iter().copied().cycle().take(n * self.len()).collect()
    }
}

/// Canonical phase list of a named sequence.
pub fn phase_program(name: &str) -> Result<PhaseProgram> {
    Ok(PhaseProgram::new(name.parse()?))
}

/// Sensed AC field: `g` (Rabi frequency, rad/us), detuning `delta` from the
/// qubit transition (rad/us) and initial phase `xi` (rad).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SignalParams {
    pub g: f64,
    pub delta: f64,
    pub xi: f64,
}

impl SignalParams {
    pub fn new(g: f64, delta: f64, xi: f64) -> Result<Self> {
        if !(g.is_finite() && g >= 0.0 && delta.is_finite() && xi.is_finite()) {
            return Err(invalid(format!(
                "signal needs finite g >= 0, delta, xi; got g={g}, delta={delta}, xi={xi}"
            )));
        }
        Ok(Self { g, delta, xi })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    /// us
    pub duration: f64,
    /// Second-drive Rabi frequency, rad/us; zero for gaps.
    pub omega2: f64,
    /// rad
    pub phase: f64,
}

impl Segment {
    pub fn pulse(duration: f64, omega2: f64, phase: f64) -> Self {
        Self {
            duration,
            omega2,
            phase,
        }
    }

    pub fn gap(duration: f64) -> Self {
        Self {
            duration,
            omega2: 0.0,
            phase: 0.0,
        }
    }

    pub fn is_pulse(&self) -> bool {
        self.omega2 != 0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StorageKind {
    /// First drive only.
    Cdd,
    /// First drive plus a continuous constant-phase second drive.
    Ccdd,
    /// First drive plus phased pi pulses of the second drive.
    Mdd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensingKind {
    /// Short pi pulses, signal picked up between pulses.
    Pulsed,
    /// Zero pulse separation, signal picked up during the phased drive.
    Continuous,
}

/// Second-drive value at an instant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveValue {
    pub omega2: f64,
    pub phase: f64,
}

/// A run of `steps` integration steps with a constant second drive.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct StepRun {
    pub steps: usize,
    pub omega2: f64,
    pub phase: f64,
}

/// First-drive Rabi frequency plus a repeated cycle of second-drive segments.
///
/// The timeline is the periodic cycle started `start_offset` us into its first
/// segment, and lasts `repeat_count` cycles.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveSchedule {
    /// rad/us
    pub omega1: f64,
    pub segments: Vec<Segment>,
    pub repeat_count: usize,
    pub start_offset: f64,
    pub signal: Option<SignalParams>,
    pub warnings: Vec<String>,
}

/// Relative tolerance for deciding that a time sits on a segment boundary.
const BOUNDARY_EPS: f64 = 1e-12;

#[derive(Serialize)]
struct SegmentJson {
    dur_us: f64,
    #[serde(rename = "omega2_MHz")]
    omega2_mhz: f64,
    phase_rad: f64,
}

#[derive(Serialize)]
struct ScheduleJson {
    #[serde(rename = "omega1_MHz")]
    omega1_mhz: f64,
    segments: Vec<SegmentJson>,
    repeat: usize,
    #[serde(skip_serializing_if = "is_zero")]
    start_offset_us: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl DriveSchedule {
    pub fn new(omega1: f64, segments: Vec<Segment>, repeat_count: usize) -> Result<Self> {
        if !omega1.is_finite() {
            return Err(invalid(format!("omega1 must be finite, got {omega1}")));
        }
        if segments.is_empty() || repeat_count == 0 {
            return Err(invalid("schedule needs at least one segment and one repetition"));
        }
        for s in &segments {
            if !(s.duration.is_finite() && s.duration > 0.0) {
                return Err(invalid(format!("segment duration must be > 0, got {}", s.duration)));
            }
            if !(s.omega2.is_finite() && s.phase.is_finite()) {
                return Err(invalid(format!("segment values must be finite: {s:?}")));
            }
        }
        Ok(Self {
            omega1,
            segments,
            repeat_count,
            start_offset: 0.0,
            signal: None,
            warnings: Vec::new(),
        })
    }

    pub fn cycle_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn total_duration(&self) -> f64 {
        self.repeat_count as f64 * self.cycle_duration()
    }

    /// Start the timeline `offset` us into the cycle, i.e. shorten the first segment.
    pub fn with_start_offset(mut self, offset: f64) -> Result<Self> {
        if !(offset.is_finite() && offset >= 0.0 && offset < self.segments[0].duration) {
            return Err(invalid(format!(
                "start offset {offset} must lie inside the first segment"
            )));
        }
        self.start_offset = offset;
        Ok(self)
    }

    /// Shorten the first segment so the first phase change satisfies
    /// `xi + delta (t1 - t0) = 0 (mod pi)`.
    pub fn aligned_to_signal(self, signal: &SignalParams) -> Result<Self> {
        if signal.delta == 0.0 {
            return Err(invalid("alignment needs a non-zero signal detuning"));
        }
        let first = self.segments[0].duration;
        let mut t1 = (-signal.xi).rem_euclid(PI) / signal.delta.abs();
        if t1 <= 0.0 {
            t1 = PI / signal.delta.abs();
        }
        while t1 > first {
            t1 -= PI / signal.delta.abs();
        }
        if t1 <= 0.0 {
            return Err(invalid("first segment too short to absorb the signal phase"));
        }
        self.with_start_offset(first - t1)
    }

    /// Segment index and its start time (within the cycle) for cycle time `tau`.
    /// Segment containing cycle time `tau`; times within rounding of a boundary
    /// belong to the later segment.
    fn locate(&self, tau: f64) -> usize {
        let eps = BOUNDARY_EPS * self.cycle_duration();
        let mut end = 0.0;
        for (i, s) in self.segments.iter().enumerate() {
            end += s.duration;
            if end - tau > eps {
                return i;
            }
        }
        self.segments.len() - 1
    }

    /// Second drive at time `t`; boundaries belong to the later segment.
    pub fn schedule_at(&self, t: f64) -> Result<DriveValue> {
        let total = self.total_duration();
        if !(t.is_finite() && t >= 0.0 && t < total) {
            return Err(invalid(format!("time {t} outside schedule [0, {total})")));
        }
        let cycle = self.cycle_duration();
        let mut tau = (t + self.start_offset).rem_euclid(cycle);
        if cycle - tau <= BOUNDARY_EPS * cycle {
            tau = 0.0;
        }
        let s = self.segments[self.locate(tau)];
        Ok(DriveValue {
            omega2: s.omega2,
            phase: s.phase,
        })
    }

    /// The whole timeline as `(start, segment)` pairs, with the first segment
    /// shortened by the start offset and the last one truncated at the end.
    pub fn timeline(&self) -> Vec<(f64, Segment)> {
        let total = self.total_duration();
        let mut out = Vec::with_capacity(self.segments.len() * self.repeat_count + 1);
        let mut t = 0.0;
        let mut idx = 0;
        let mut first = true;
        while t < total - 1e-9 {
            let mut seg = self.segments[idx];
            if first {
                seg.duration -= self.start_offset;
                first = false;
            }
            seg.duration = seg.duration.min(total - t);
            out.push((t, seg));
            t += seg.duration;
            idx = (idx + 1) % self.segments.len();
        }
        out
    }

    /// Integer step counts for a grid of step `dt`; every boundary must be on the grid.
    pub(crate) fn step_runs(&self, dt: f64) -> Result<Vec<StepRun>> {
        let mut runs = Vec::new();
        for (start, seg) in self.timeline() {
            let n = (seg.duration / dt).round();
            let end = start + seg.duration;
            let end_n = (end / dt).round();
            if (n * dt - seg.duration).abs() > 1e-9 * seg.duration.max(1.0)
                || (end_n * dt - end).abs() > 1e-9 * end.max(1.0)
            {
                return Err(invalid(format!(
                    "segment [{start}, {end}) us is not a multiple of the step dt = {dt} us"
                )));
            }
            runs.push(StepRun {
                steps: n as usize,
                omega2: seg.omega2,
                phase: seg.phase,
            });
        }
        Ok(runs)
    }

    /// End times of complete program cycles, `k * cycle` for `k = 1..=repeat_count`.
    pub fn cycle_boundaries(&self) -> Vec<f64> {
        let c = self.cycle_duration();
        (1..=self.repeat_count).map(|k| k as f64 * c).collect()
    }

    /// Mean of `Omega2(t)^2` over one cycle.
    pub fn mean_square_omega2(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| s.omega2 * s.omega2 * s.duration)
            .sum::<f64>()
            / self.cycle_duration()
    }

    /// `int |Omega2(t)| dt` over one cycle.
    pub fn cycle_area(&self) -> f64 {
        self.segments.iter().map(|s| s.omega2.abs() * s.duration).sum()
    }

    /// JSON export with external units (MHz, us).
    pub fn to_json(&self) -> serde_json::Value {
        let doc = ScheduleJson {
            omega1_mhz: rad_per_us_to_mhz(self.omega1),
            segments: self
                .segments
                .iter()
                .map(|s| SegmentJson {
                    dur_us: s.duration,
                    omega2_mhz: rad_per_us_to_mhz(s.omega2),
                    phase_rad: s.phase,
                })
                .collect(),
            repeat: self.repeat_count,
            start_offset_us: self.start_offset,
        };
        serde_json::to_value(doc).expect("schedule serializes")
    }
}

fn check_finite(pairs: &[(&str, f64)]) -> Result<()> {
    for (name, v) in pairs {
        if !v.is_finite() {
            return Err(invalid(format!("{name} must be finite, got {v}")));
        }
    }
    Ok(())
}

/// Number of whole cycles of length `cycle` that fit in `total_time`,
/// with a warning when a partial cycle is dropped.
fn whole_cycles(cycle: f64, total_time: f64, warnings: &mut Vec<String>) -> Result<usize> {
    let ratio = total_time / cycle;
    let n = (ratio + 1e-9).floor();
    if n < 1.0 {
        return Err(invalid(format!(
            "total time {total_time} us is shorter than one program cycle ({cycle} us)"
        )));
    }
    if (ratio - n).abs() > 1e-9 {
        warnings.push(format!(
            "total time {total_time} us is not a whole number of {cycle} us cycles; truncated to {} us",
            n * cycle
        ));
    }
    Ok(n as usize)
}

fn check_pi_area(omega2: f64, pulse_t: f64) -> Result<()> {
    if (omega2 * pulse_t - PI).abs() > 1e-9 {
        return Err(precondition(
            "pi-pulse area Omega2*T = pi",
            format!("Omega2*T = {} rad", omega2 * pulse_t),
        ));
    }
    Ok(())
}

/// Storage protocols: single drive, continuous double drive, or phased pi pulses.
#[allow(clippy::too_many_arguments)]
pub fn build_storage(
    kind: StorageKind,
    omega1: f64,
    omega2: f64,
    pulse_t: f64,
    gap_tau: f64,
    program: &PhaseProgram,
    total_time: f64,
) -> Result<DriveSchedule> {
    check_finite(&[
        ("omega1", omega1),
        ("omega2", omega2),
        ("pulse_T", pulse_t),
        ("gap_tau", gap_tau),
        ("total_time", total_time),
    ])?;
    if total_time <= 0.0 {
        return Err(invalid(format!("total time must be > 0, got {total_time}")));
    }
    match kind {
        StorageKind::Cdd => {
            if omega2 != 0.0 {
                return Err(precondition(
                    "single drive Omega2 = 0",
                    format!("got Omega2 = {omega2} rad/us"),
                ));
            }
            DriveSchedule::new(omega1, vec![Segment::gap(total_time)], 1)
        }
        StorageKind::Ccdd => {
            if gap_tau != 0.0 {
                return Err(precondition(
                    "continuous second drive tau = 0",
                    format!("got tau = {gap_tau} us"),
                ));
            }
            DriveSchedule::new(omega1, vec![Segment::pulse(total_time, omega2, 0.0)], 1)
        }
        StorageKind::Mdd => {
            check_pi_area(omega2, pulse_t)?;
            if gap_tau < 0.0 {
                return Err(invalid(format!("gap must be >= 0, got {gap_tau}")));
            }
            if program.is_empty() {
                return Err(invalid("empty phase program"));
            }
            let mut segments = Vec::with_capacity(2 * program.len());
            for &phi in &program.phases {
                segments.push(Segment::pulse(pulse_t, omega2, phi));
                if gap_tau > 0.0 {
                    segments.push(Segment::gap(gap_tau));
                }
            }
            let cycle = program.len() as f64 * (pulse_t + gap_tau);
            let mut warnings = Vec::new();
            let n = whole_cycles(cycle, total_time, &mut warnings)?;
            let mut s = DriveSchedule::new(omega1, segments, n)?;
            s.warnings = warnings;
            Ok(s)
        }
    }
}

/// Sensing protocols with pi pulses of duration `T = pi / omega2`.
///
/// Pulsed: each pulse is centred in its `tau + T` slot (free `tau/2`, pulse,
/// free `tau/2`), so pulses sit on the sign changes of `cos(delta t)` when
/// `delta (tau + T) = pi` and `xi = 0`. Continuous: back-to-back pulses with
/// `delta = omega2`.
#[allow(clippy::too_many_arguments)]
pub fn build_sensing(
    kind: SensingKind,
    omega1: f64,
    omega2: f64,
    gap_tau: f64,
    program: &PhaseProgram,
    signal: SignalParams,
    total_time: f64,
) -> Result<DriveSchedule> {
    check_finite(&[
        ("omega1", omega1),
        ("omega2", omega2),
        ("gap_tau", gap_tau),
        ("total_time", total_time),
    ])?;
    if !(omega2 > 0.0) {
        return Err(invalid(format!("sensing needs Omega2 > 0, got {omega2}")));
    }
    if program.is_empty() {
        return Err(invalid("empty phase program"));
    }
    let pulse_t = PI / omega2;
    let segments = match kind {
        SensingKind::Pulsed => {
            let resonance = signal.delta * (gap_tau + pulse_t);
            if (resonance - PI).abs() > 1e-6 {
                return Err(precondition(
                    "sensing resonance Delta*(tau + T) = pi",
                    format!("Delta*(tau + T) = {resonance} rad"),
                ));
            }
            if gap_tau <= 0.0 {
                return Err(invalid("pulsed sensing needs a positive pulse separation"));
            }
            let mut segs = vec![Segment::gap(0.5 * gap_tau)];
            for (k, &phi) in program.phases.iter().enumerate() {
                segs.push(Segment::pulse(pulse_t, omega2, phi));
                let gap = if k + 1 == program.len() { 0.5 * gap_tau } else { gap_tau };
                segs.push(Segment::gap(gap));
            }
            segs
        }
        SensingKind::Continuous => {
            if gap_tau != 0.0 {
                return Err(precondition(
                    "continuous sensing tau = 0",
                    format!("got tau = {gap_tau} us"),
                ));
            }
            if (signal.delta - omega2).abs() > 1e-6 * omega2 {
                return Err(precondition(
                    "continuous sensing resonance Delta = Omega2",
                    format!("Delta = {} rad/us, Omega2 = {omega2} rad/us", signal.delta),
                ));
            }
            program
                .phases
                .iter()
                .map(|&phi| Segment::pulse(pulse_t, omega2, phi))
                .collect()
        }
    };
    let cycle = program.len() as f64 * (pulse_t + gap_tau);
    let mut warnings = Vec::new();
    let n = whole_cycles(cycle, total_time, &mut warnings)?;
    let mut s = DriveSchedule::new(omega1, segments, n)?;
    s.warnings = warnings;
    s.signal = Some(signal);
    Ok(s)
}

/// Outcome of [`validate_phase_alignment`].
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseAlignment {
    pub aligned: bool,
    /// `xi_1` folded into `[-pi/2, pi/2]`.
    pub residual: f64,
    /// `(t_k, folded xi_k)` for every phase change.
    pub phase_changes: Vec<(f64, f64)>,
}

fn fold_half_pi(x: f64) -> f64 {
    x - PI * (x / PI).round()
}

fn same_phase(a: f64, b: f64) -> bool {
    let d = (a - b).rem_euclid(2.0 * PI);
    d < 1e-12 || (2.0 * PI - d) < 1e-12
}

/// Signal-phase selectivity check: at each instant `t_k` where the pulse phase
/// changes, the signal phase `xi_k = xi + delta (t_k - t_0)` must be `0 (mod pi)`.
///
/// For back-to-back pulses `t_k` is the segment boundary; with gaps it is the
/// midpoint of the free evolution between the two pulses. With `delta = Omega2`
/// (continuous sensing) `xi_1 = xi + Omega2 (t_1 - t_0)`.
pub fn validate_phase_alignment(
    sched: &DriveSchedule,
    signal: &SignalParams,
) -> Result<PhaseAlignment> {
    let pulses: Vec<(f64, f64, f64)> = sched
        .timeline()
        .into_iter()
        .filter(|(_, s)| s.is_pulse())
        .map(|(t, s)| (t, t + s.duration, s.phase))
        .collect();
    let mut changes = Vec::new();
    for w in pulses.windows(2) {
        let (_, end_a, phase_a) = w[0];
        let (start_b, _, phase_b) = w[1];
        if !same_phase(phase_a, phase_b) {
            let t = 0.5 * (end_a + start_b);
            changes.push((t, fold_half_pi(signal.xi + signal.delta * t)));
        }
    }
    let Some(&(_, first)) = changes.first() else {
        return Err(invalid("schedule has no phase change between pulses"));
    };
    let tol = 1e-6;
    let consistent = changes
        .iter()
        .all(|&(_, r)| fold_half_pi(r - first).abs() < tol);
    Ok(PhaseAlignment {
        aligned: first.abs() < tol && consistent,
        residual: first,
        phase_changes: changes,
    })
}

/// Free-function form of [`DriveSchedule::schedule_at`].
pub fn schedule_at(sched: &DriveSchedule, t: f64) -> Result<DriveValue> {
    sched.schedule_at(t)
}
