//! Brightness–shape–moisture soil reflectance surrogate.
//!
//! `r(λ) = brightness · s(λ) · (1 − 0.7·smc)`, where `s` rises monotonically
//! from `1 − depth` at 400 nm to 1 at 2400 nm. `lon_shape` sets the depth,
//! `lat_shape` adds a zero-mean sinusoidal redistribution that changes band
//! ratios without changing the spectral integral.

use std::f64::consts::PI;

use super::params::SoilParams;
use super::spectrum::{Spectrum, WL_END, WL_START};
use crate::error::Result;

pub const MOISTURE_DARKENING: f64 = 0.7;
const CURVE_EXPONENT: f64 = 0.7;

fn depth(lon_shape: f64) -> f64 {
    0.3 + 0.02 * (lon_shape - 45.0)
}

fn redistribution(lat_shape: f64) -> f64 {
    0.03 * (lat_shape - 30.0) / 10.0
}

/// Dry-soil spectral shape, maximum 1 at 2400 nm.
pub fn shape(wl: f64, lat_shape: f64, lon_shape: f64) -> f64 {
    let x = (wl - WL_START) / (WL_END - WL_START);
    let base = 1.0 - depth(lon_shape) * (1.0 - x).powf(CURVE_EXPONENT);
    base + redistribution(lat_shape) * (2.0 * PI * x).sin()
}

pub fn soil_reflectance(soil: &SoilParams) -> Result<Spectrum> {
    soil.validate()?;
    let wet = 1.0 - MOISTURE_DARKENING * soil.smc;
    Ok(Spectrum::from_fn(|wl| {
        (soil.brightness * shape(wl, soil.lat_shape, soil.lon_shape) * wet).clamp(0.0, 1.0)
    }))
}
