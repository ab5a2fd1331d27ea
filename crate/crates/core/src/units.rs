//! Unit conversions at the configuration boundary.
//!
//! Internally every frequency is an angular frequency in rad/s. Sequence
//! durations are kept in ns and integration steps in ps, as they appear in
//! configuration files.

use std::f64::consts::TAU;

pub const NS: f64 = 1e-9;
pub const PS: f64 = 1e-12;
pub const US: f64 = 1e-6;

pub fn mhz_to_angular(f_mhz: f64) -> f64 {
    TAU * f_mhz * 1e6
}

pub fn ghz_to_angular(f_ghz: f64) -> f64 {
    TAU * f_ghz * 1e9
}

pub fn angular_to_mhz(w: f64) -> f64 {
    w / (TAU * 1e6)
}

pub fn angular_to_ghz(w: f64) -> f64 {
    w / (TAU * 1e9)
}
