//! Simulation of mixed dynamical decoupling for a driven two-level system:
//! SU(2) propagators, Ornstein-Uhlenbeck noise, drive schedules, a Monte Carlo
//! propagation engine, static-error closed forms and curve analysis.

pub mod analysis;
pub mod closedform;
pub mod error;
pub mod evolve;
pub mod noise;
pub mod presets;
pub mod schedule;
pub mod su2;
pub mod units;

pub use error::{Error, Result};
pub use evolve::{EnsembleCurve, NoiseSpec, RunConfig, SensingCurves, StepRule};
pub use noise::{NoiseConfig, NoiseTraces, OUParams, OuInit};
pub use schedule::{
    DriveSchedule, PhaseProgram, Segment, SensingKind, SequenceName, SignalParams, StorageKind,
};
pub use su2::{Density2, PauliCoeffs, Unitary2};
