//! Fixed optical wavelength grid shared by the leaf, soil and canopy models.

use serde::{Deserialize, Serialize};

pub const WL_START: f64 = 400.0;
pub const WL_STEP: f64 = 10.0;
pub const N_WL: usize = 201;
pub const WL_END: f64 = WL_START + WL_STEP * (N_WL as f64 - 1.0);

/// Last grid index of the 400–700 nm PAR band.
pub const PAR_LAST: usize = 30;

/// Photon yield of PAR energy, µmol J⁻¹.
pub const PAR_PHOTONS_PER_JOULE: f64 = 4.57;

pub fn wavelength(i: usize) -> f64 {
    WL_START + WL_STEP * i as f64
}

pub fn wavelengths() -> impl Iterator<Item = f64> {
    (0..N_WL).map(wavelength)
}

/// Grid index of a wavelength that lies exactly on the grid.
pub fn index_of(wl_nm: f64) -> Option<usize> {
    let pos = (wl_nm - WL_START) / WL_STEP;
    let i = pos.round();
    if (pos - i).abs() < 1e-9 && i >= 0.0 && (i as usize) < N_WL {
        Some(i as usize)
    } else {
        None
    }
}

/// Trapezoid weight (nm) of grid point `i` inside the closed index range `[lo, hi]`.
pub fn trapezoid_weight(i: usize, lo: usize, hi: usize) -> f64 {
    if i < lo || i > hi || lo == hi {
        0.0
    } else if i == lo || i == hi {
        0.5 * WL_STEP
    } else {
        WL_STEP
    }
}

/// ∫ values dλ over the grid points `lo..=hi`.
pub fn integrate(values: &[f64], lo: usize, hi: usize) -> f64 {
    (lo..=hi).map(|i| values[i] * trapezoid_weight(i, lo, hi)).sum()
}

/// A quantity sampled on the 400–2400 nm grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub values: Vec<f64>,
}

impl Spectrum {
    pub fn from_fn(f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: wavelengths().map(f).collect(),
        }
    }

    pub fn constant(v: f64) -> Self {
        Self {
            values: vec![v; N_WL],
        }
    }

    pub fn zeros() -> Self {
        Self::constant(0.0)
    }

    /// Value at an on-grid wavelength.
    ///
    /// Panics if `wl_nm` is not a grid point.
    pub fn at(&self, wl_nm: f64) -> f64 {
        let i = index_of(wl_nm).unwrap_or_else(|| panic!("{wl_nm} nm is not on the grid"));
        self.values[i]
    }

    pub fn integral(&self) -> f64 {
        integrate(&self.values, 0, N_WL - 1)
    }

    pub fn wavelengths(&self) -> Vec<f64> {
        wavelengths().collect()
    }
}

/// Normalized top-of-atmosphere-like irradiance shape: a 5778 K blackbody,
/// scaled so that its 400–2400 nm integral is 1.
pub fn solar_shape() -> &'static [f64] {
    use std::sync::OnceLock;
    static SHAPE: OnceLock<Vec<f64>> = OnceLock::new();
    SHAPE.get_or_init(|| {
        const H: f64 = 6.626_070_15e-34;
        const C: f64 = 2.997_924_58e8;
        const K: f64 = 1.380_649e-23;
        const T: f64 = 5778.0;
        let raw: Vec<f64> = wavelengths()
            .map(|wl| {
                let l = wl * 1e-9;
                1.0 / (l.powi(5) * ((H * C / (l * K * T)).exp() - 1.0))
            })
            .collect();
        let total = integrate(&raw, 0, N_WL - 1);
        raw.into_iter().map(|v| v / total).collect()
    })
}

/// Fraction of the 400–2400 nm solar energy falling in 400–700 nm.
pub fn par_energy_fraction() -> f64 {
    integrate(solar_shape(), 0, PAR_LAST)
}
