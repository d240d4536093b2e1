//! Reference parameter sets for the storage, dephasing and sensing experiments.
//! Frequencies are linear (MHz / kHz); builders convert to rad/us.

use crate::error::Result;
use crate::evolve::{NoiseSpec, RunConfig};
use crate::noise::NoiseConfig;
use crate::schedule::{
    build_sensing, build_storage, DriveSchedule, PhaseProgram, SensingKind, SequenceName,
    SignalParams, StorageKind,
};
use crate::units::{khz_to_rad_per_us, mhz_to_rad_per_us};

/// Storage protocol, including the variant with a noiseless second drive.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StorageProtocol {
    Cdd,
    Ccdd,
    CcddIdeal2,
    Mdd,
}

impl StorageProtocol {
    pub fn as_str(&self) -> &'static str {
        match self {
            StorageProtocol::Cdd => "cdd",
            StorageProtocol::Ccdd => "ccdd",
            StorageProtocol::CcddIdeal2 => "ccdd-ideal2",
            StorageProtocol::Mdd => "mdd",
        }
    }

    fn kind(&self) -> StorageKind {
        match self {
            StorageProtocol::Cdd => StorageKind::Cdd,
            StorageProtocol::Ccdd | StorageProtocol::CcddIdeal2 => StorageKind::Ccdd,
            StorageProtocol::Mdd => StorageKind::Mdd,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StorageParams {
    pub protocol: StorageProtocol,
    pub omega1_mhz: f64,
    /// `Omega2 / Omega1`.
    pub omega2_ratio: f64,
    pub pulse_us: f64,
    pub gap_us: f64,
    pub sequence: SequenceName,
    pub total_us: f64,
    pub stride_us: f64,
    pub noise: NoiseConfig,
}

impl StorageParams {
    /// `Omega1 = 2pi 2 MHz`, `Omega2/Omega1 = 0.1`; UR10 with `T = 2.5 us`, `tau = 0.5 us` for MDD.
    pub fn reference(protocol: StorageProtocol) -> Self {
        let (total_us, stride_us) = match protocol {
            StorageProtocol::Cdd => (200.0, 1.0),
            StorageProtocol::Ccdd => (600.0, 5.0),
            StorageProtocol::CcddIdeal2 => (2000.0, 10.0),
            StorageProtocol::Mdd => (6000.0, 30.0),
        };
        Self {
            protocol,
            omega1_mhz: 2.0,
            omega2_ratio: if protocol == StorageProtocol::Cdd { 0.0 } else { 0.1 },
            pulse_us: 2.5,
            gap_us: if protocol == StorageProtocol::Mdd { 0.5 } else { 0.0 },
            sequence: SequenceName::Ur10,
            total_us,
            stride_us,
            noise: NoiseConfig::default(),
        }
    }

    pub fn schedule(&self) -> Result<DriveSchedule> {
        let w1 = mhz_to_rad_per_us(self.omega1_mhz);
        build_storage(
            self.protocol.kind(),
            w1,
            self.omega2_ratio * w1,
            self.pulse_us,
            self.gap_us,
            &PhaseProgram::new(self.sequence),
            self.total_us,
        )
    }

    pub fn noise_spec(&self) -> NoiseSpec {
        match self.protocol {
            StorageProtocol::CcddIdeal2 => NoiseSpec::Stochastic(self.noise.with_ideal_second_drive()),
            _ => NoiseSpec::Stochastic(self.noise),
        }
    }

    pub fn run_config(&self, realizations: usize, seed: u64) -> Result<RunConfig> {
        let cfg = RunConfig::new(self.schedule()?, self.noise_spec())
            .with_stride(self.stride_us, self.total_us)
            .with_realizations(realizations, seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Free evolution under magnetic noise only (`Omega1 = Omega2 = 0`).
#[derive(Clone, Debug, PartialEq)]
pub struct DephasingParams {
    pub total_us: f64,
    pub stride_us: f64,
    pub noise: NoiseConfig,
}

impl Default for DephasingParams {
    fn default() -> Self {
        Self {
            total_us: 10.0,
            stride_us: 0.05,
            noise: NoiseConfig::default(),
        }
    }
}

impl DephasingParams {
    pub fn run_config(&self, realizations: usize, seed: u64) -> Result<RunConfig> {
        let sched = build_storage(
            StorageKind::Cdd,
            0.0,
            0.0,
            0.0,
            0.0,
            &PhaseProgram::new(SequenceName::Cp),
            self.total_us,
        )?;
        let cfg = RunConfig::new(sched, NoiseSpec::Stochastic(self.noise))
            .with_stride(self.stride_us, self.total_us)
            .with_realizations(realizations, seed);
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensingParams {
    pub kind: SensingKind,
    pub omega1_mhz: f64,
    pub omega2_mhz: f64,
    pub gap_us: f64,
    pub g_khz: f64,
    pub delta_khz: f64,
    pub xi_rad: f64,
    pub sequence: SequenceName,
    pub total_us: f64,
    pub stride_us: f64,
    pub noise: NoiseConfig,
}

impl SensingParams {
    /// Pulsed: `Omega2 = 2pi 0.2 MHz`, `tau = 22.5 us`, `g = 2pi 6.92 kHz`, `Delta = 2pi 20 kHz`.
    /// Continuous: `Omega2 = 2pi 62.5 kHz`, `tau = 0`, `g = 2pi 2.46 kHz`, `Delta = Omega2`.
    pub fn reference(kind: SensingKind) -> Self {
        match kind {
            SensingKind::Pulsed => Self {
                kind,
                omega1_mhz: 2.0,
                omega2_mhz: 0.2,
                gap_us: 22.5,
                g_khz: 6.92,
                delta_khz: 20.0,
                xi_rad: 0.0,
                sequence: SequenceName::Ur10,
                total_us: 2500.0,
                stride_us: 25.0,
                noise: NoiseConfig::default(),
            },
            SensingKind::Continuous => Self {
                kind,
                omega1_mhz: 2.0,
                omega2_mhz: 0.0625,
                gap_us: 0.0,
                g_khz: 2.46,
                delta_khz: 62.5,
                xi_rad: 0.0,
                sequence: SequenceName::Ur10,
                total_us: 8000.0,
                stride_us: 80.0,
                noise: NoiseConfig::default(),
            },
        }
    }

    pub fn signal(&self) -> Result<SignalParams> {
        SignalParams::new(
            khz_to_rad_per_us(self.g_khz),
            khz_to_rad_per_us(self.delta_khz),
            self.xi_rad,
        )
    }

    pub fn schedule(&self) -> Result<DriveSchedule> {
        build_sensing(
            self.kind,
            mhz_to_rad_per_us(self.omega1_mhz),
            mhz_to_rad_per_us(self.omega2_mhz),
            self.gap_us,
            &PhaseProgram::new(self.sequence),
            self.signal()?,
            self.total_us,
        )
    }

    pub fn run_config(&self, realizations: usize, seed: u64) -> Result<RunConfig> {
        let cfg = RunConfig::new(self.schedule()?, NoiseSpec::Stochastic(self.noise))
            .with_stride(self.stride_us, self.total_us)
            .with_realizations(realizations, seed);
        cfg.validate()?;
        Ok(cfg)
    }
}
