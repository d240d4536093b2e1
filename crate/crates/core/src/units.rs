//! Internal units are rad/us for angular frequencies and us for time.
//! External configuration uses linear frequencies in MHz.

use std::f64::consts::TAU;

pub fn mhz_to_rad_per_us(f_mhz: f64) -> f64 {
    TAU * f_mhz
}

pub fn rad_per_us_to_mhz(w: f64) -> f64 {
    w / TAU
}

pub fn khz_to_rad_per_us(f_khz: f64) -> f64 {
    TAU * f_khz * 1e-3
}
