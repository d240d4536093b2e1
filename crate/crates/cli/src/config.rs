//! Flat JSON configs with unit-suffixed keys. Every key is also a command-line
//! flag; flags override file values and unset keys fall back to reference values.
//! Frequencies are linear (MHz or kHz) and converted to rad/us only in the core.

use std::fs;
use std::path::Path;

use clap::{Args, ValueEnum};
use mdd_core::presets::{DephasingParams, SensingParams, StorageParams, StorageProtocol};
use mdd_core::{NoiseConfig, SensingKind, SequenceName};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{config_err, CliResult};

macro_rules! config_struct {
    ($(#[$m:meta])* $name:ident { $( $(#[$fm:meta])* $field:ident : $ty:ty ),* $(,)? }) => {
        $(#[$m])*
        #[derive(Args, Serialize, Deserialize, Clone, Debug, Default, PartialEq)]
        #[serde(deny_unknown_fields)]
        pub struct $name {
            $(
                $(#[$fm])*
                #[arg(long)]
                #[serde(default, skip_serializing_if = "Option::is_none")]
                pub $field: Option<$ty>,
            )*
        }

        impl $name {
            /// Fills every unset key from `other`.
            pub fn or(self, other: Self) -> Self {
                Self { $( $field: self.$field.or(other.$field), )* }
            }
        }
    };
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    Cdd,
    Ccdd,
    CcddIdeal2,
    Mdd,
}

impl Protocol {
    pub fn core(self) -> StorageProtocol {
        match self {
            Protocol::Cdd => StorageProtocol::Cdd,
            Protocol::Ccdd => StorageProtocol::Ccdd,
            Protocol::CcddIdeal2 => StorageProtocol::CcddIdeal2,
            Protocol::Mdd => StorageProtocol::Mdd,
        }
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Pulsed,
    Continuous,
}

impl Mode {
    pub fn core(self) -> SensingKind {
        match self {
            Mode::Pulsed => SensingKind::Pulsed,
            Mode::Continuous => SensingKind::Continuous,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Pulsed => "pulsed",
            Mode::Continuous => "continuous",
        }
    }
}

#[derive(ValueEnum, Serialize, Deserialize, Clone, Copy, Debug, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum InitialState {
    X,
    Y,
    Z,
}

config_struct! {
    /// Free evolution under magnetic noise.
    DephasingConfig {
        seed: u64,
        realizations: usize,
        dt_us: f64,
        total_us: f64,
        stride_us: f64,
        t2_star_us: f64,
        tau_c_us: f64,
        drive1_rel_err: f64,
        drive2_rel_err: f64,
        drive_tau_us: f64,
    }
}

config_struct! {
    /// Storage fidelity of one decoupling protocol.
    StorageConfig {
        #[arg(value_enum)]
        protocol: Protocol,
        seed: u64,
        realizations: usize,
        dt_us: f64,
        #[serde(rename = "omega1_MHz")]
        omega1_mhz: f64,
        /// Omega2 / Omega1
        omega2_ratio: f64,
        pulse_us: f64,
        tau_us: f64,
        sequence: String,
        total_us: f64,
        stride_us: f64,
        t2_star_us: f64,
        tau_c_us: f64,
        drive1_rel_err: f64,
        drive2_rel_err: f64,
        drive_tau_us: f64,
    }
}

config_struct! {
    /// AC-field sensing with phased second-drive pulses.
    SensingConfig {
        #[arg(value_enum)]
        mode: Mode,
        seed: u64,
        realizations: usize,
        dt_us: f64,
        #[serde(rename = "omega1_MHz")]
        omega1_mhz: f64,
        #[serde(rename = "omega2_MHz")]
        omega2_mhz: f64,
        tau_us: f64,
        #[serde(rename = "g_kHz")]
        g_khz: f64,
        #[serde(rename = "signal_delta_kHz")]
        signal_delta_khz: f64,
        xi_rad: f64,
        sequence: String,
        total_us: f64,
        stride_us: f64,
        t2_star_us: f64,
        tau_c_us: f64,
        drive1_rel_err: f64,
        drive2_rel_err: f64,
        drive_tau_us: f64,
    }
}

config_struct! {
    /// Static-error fidelity map of a pulse sequence.
    HeatmapConfig {
        sequence: String,
        eps1_tilde_min: f64,
        eps1_tilde_max: f64,
        eps2_min: f64,
        eps2_max: f64,
        resolution: usize,
    }
}

config_struct! {
    /// Bloch-vector paths of CP and UR4 pulse trains with static errors.
    TrajectoryConfig {
        #[serde(rename = "omega2_MHz")]
        omega2_mhz: f64,
        pulse_us: f64,
        tau_us: f64,
        eps1_tilde: f64,
        eps2: f64,
        pulses: usize,
        samples_per_segment: usize,
        #[arg(value_enum)]
        initial_state: InitialState,
    }
}

config_struct! {
    /// Statistics of the generated noise processes.
    ValidateNoiseConfig {
        seed: u64,
        realizations: usize,
        dt_us: f64,
        t2_star_us: f64,
        tau_c_us: f64,
        drive1_rel_err: f64,
        drive2_rel_err: f64,
        drive_tau_us: f64,
    }
}

/// Reads a config file, or the config echo of a manifest.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> CliResult<T> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let text = fs::read_to_string(path)
        .map_err(|e| config_err(format!("cannot read {}: {e}", path.display())))?;
    let mut value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    if let Some(inner) = value.get("config").filter(|_| value.get("config_hash").is_some()) {
        value = inner.clone();
    }
    serde_json::from_value(value).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

pub fn need<T>(v: Option<T>, key: &str) -> CliResult<T> {
    v.ok_or_else(|| config_err(format!("missing value for `{key}`")))
}

pub fn parse_sequence(name: &str) -> CliResult<SequenceName> {
    name.parse().map_err(|e: mdd_core::Error| config_err(e.to_string()))
}

fn noise_from(
    t2_star_us: Option<f64>,
    tau_c_us: Option<f64>,
    drive1: Option<f64>,
    drive2: Option<f64>,
    drive_tau_us: Option<f64>,
) -> CliResult<NoiseConfig> {
    NoiseConfig::from_t2_star(
        need(t2_star_us, "t2_star_us")?,
        need(tau_c_us, "tau_c_us")?,
        need(drive1, "drive1_rel_err")?,
        need(drive2, "drive2_rel_err")?,
        need(drive_tau_us, "drive_tau_us")?,
    )
    .map_err(|e| config_err(e.to_string()))
}

type NoiseKeys = (Option<f64>, Option<f64>, Option<f64>, Option<f64>, Option<f64>);

fn noise_defaults(n: NoiseConfig) -> NoiseKeys {
    (
        Some(n.t2_star),
        Some(n.magnetic.tau_c),
        Some(n.drive1_rel_err),
        Some(n.drive2_rel_err),
        Some(n.drive_tau),
    )
}

impl DephasingConfig {
    pub fn defaults() -> Self {
        let p = DephasingParams::default();
        let (t2, tc, d1, d2, dtau) = noise_defaults(p.noise);
        Self {
            seed: Some(1),
            realizations: Some(500),
            dt_us: Some(0.01),
            total_us: Some(p.total_us),
            stride_us: Some(p.stride_us),
            t2_star_us: t2,
            tau_c_us: tc,
            drive1_rel_err: d1,
            drive2_rel_err: d2,
            drive_tau_us: dtau,
        }
    }

    pub fn params(&self) -> CliResult<DephasingParams> {
        Ok(DephasingParams {
            total_us: need(self.total_us, "total_us")?,
            stride_us: need(self.stride_us, "stride_us")?,
            noise: noise_from(
                self.t2_star_us,
                self.tau_c_us,
                self.drive1_rel_err,
                self.drive2_rel_err,
                self.drive_tau_us,
            )?,
        })
    }
}

impl StorageConfig {
    /// Reference values of `protocol`.
    pub fn defaults(protocol: Protocol) -> Self {
        let p = StorageParams::reference(protocol.core());
        let (t2, tc, d1, d2, dtau) = noise_defaults(p.noise);
        let realizations = match protocol {
            Protocol::Cdd | Protocol::Ccdd => 300,
            Protocol::CcddIdeal2 => 200,
            Protocol::Mdd => 100,
        };
        Self {
            protocol: Some(protocol),
            seed: Some(1),
            realizations: Some(realizations),
            dt_us: Some(0.01),
            omega1_mhz: Some(p.omega1_mhz),
            omega2_ratio: Some(p.omega2_ratio),
            pulse_us: Some(p.pulse_us),
            tau_us: Some(p.gap_us),
            sequence: Some(p.sequence.as_str().to_string()),
            total_us: Some(p.total_us),
            stride_us: Some(p.stride_us),
            t2_star_us: t2,
            tau_c_us: tc,
            drive1_rel_err: d1,
            drive2_rel_err: d2,
            drive_tau_us: dtau,
        }
    }

    pub fn params(&self) -> CliResult<StorageParams> {
        Ok(StorageParams {
            protocol: need(self.protocol, "protocol")?.core(),
            omega1_mhz: need(self.omega1_mhz, "omega1_MHz")?,
            omega2_ratio: need(self.omega2_ratio, "omega2_ratio")?,
            pulse_us: need(self.pulse_us, "pulse_us")?,
            gap_us: need(self.tau_us, "tau_us")?,
            sequence: parse_sequence(&need(self.sequence.clone(), "sequence")?)?,
            total_us: need(self.total_us, "total_us")?,
            stride_us: need(self.stride_us, "stride_us")?,
            noise: noise_from(
                self.t2_star_us,
                self.tau_c_us,
                self.drive1_rel_err,
                self.drive2_rel_err,
                self.drive_tau_us,
            )?,
        })
    }
}

impl SensingConfig {
    pub fn defaults(mode: Mode) -> Self {
        let p = SensingParams::reference(mode.core());
        let (t2, tc, d1, d2, dtau) = noise_defaults(p.noise);
        Self {
            mode: Some(mode),
            seed: Some(1),
            realizations: Some(200),
            dt_us: Some(0.01),
            omega1_mhz: Some(p.omega1_mhz),
            omega2_mhz: Some(p.omega2_mhz),
            tau_us: Some(p.gap_us),
            g_khz: Some(p.g_khz),
            signal_delta_khz: Some(p.delta_khz),
            xi_rad: Some(p.xi_rad),
            sequence: Some(p.sequence.as_str().to_string()),
            total_us: Some(p.total_us),
            stride_us: Some(p.stride_us),
            t2_star_us: t2,
            tau_c_us: tc,
            drive1_rel_err: d1,
            drive2_rel_err: d2,
            drive_tau_us: dtau,
        }
    }

    pub fn params(&self) -> CliResult<SensingParams> {
        Ok(SensingParams {
            kind: need(self.mode, "mode")?.core(),
            omega1_mhz: need(self.omega1_mhz, "omega1_MHz")?,
            omega2_mhz: need(self.omega2_mhz, "omega2_MHz")?,
            gap_us: need(self.tau_us, "tau_us")?,
            g_khz: need(self.g_khz, "g_kHz")?,
            delta_khz: need(self.signal_delta_khz, "signal_delta_kHz")?,
            xi_rad: need(self.xi_rad, "xi_rad")?,
            sequence: parse_sequence(&need(self.sequence.clone(), "sequence")?)?,
            total_us: need(self.total_us, "total_us")?,
            stride_us: need(self.stride_us, "stride_us")?,
            noise: noise_from(
                self.t2_star_us,
                self.tau_c_us,
                self.drive1_rel_err,
                self.drive2_rel_err,
                self.drive_tau_us,
            )?,
        })
    }
}

impl HeatmapConfig {
    pub fn defaults() -> Self {
        Self {
            sequence: None,
            eps1_tilde_min: Some(-0.5),
            eps1_tilde_max: Some(0.5),
            eps2_min: Some(-0.5),
            eps2_max: Some(0.5),
            resolution: Some(101),
        }
    }
}

impl TrajectoryConfig {
    /// pi pulses of 1 us (`Omega2 = 2pi 0.5 MHz`) separated by 3 us, eight pulses in total.
    pub fn defaults() -> Self {
        Self {
            omega2_mhz: Some(0.5),
            pulse_us: Some(1.0),
            tau_us: Some(3.0),
            eps1_tilde: Some(0.1),
            eps2: Some(-0.1),
            pulses: Some(8),
            samples_per_segment: Some(40),
            initial_state: Some(InitialState::Z),
        }
    }
}

impl ValidateNoiseConfig {
    pub fn defaults() -> Self {
        let (t2, tc, d1, d2, dtau) = noise_defaults(NoiseConfig::default());
        Self {
            seed: Some(1),
            realizations: Some(2000),
            dt_us: Some(0.5),
            t2_star_us: t2,
            tau_c_us: tc,
            drive1_rel_err: d1,
            drive2_rel_err: d2,
            drive_tau_us: dtau,
        }
    }

    pub fn noise(&self) -> CliResult<NoiseConfig> {
        noise_from(
            self.t2_star_us,
            self.tau_c_us,
            self.drive1_rel_err,
            self.drive2_rel_err,
            self.drive_tau_us,
        )
    }
}
