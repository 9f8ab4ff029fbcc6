//! Single-plate leaf optics with Gaussian specific-absorption bands.
//!
//! The absorption coefficient is `K(λ) = Σ kᵢ(λ)·cᵢ` over the leaf constituents.
//! A plate of structure `N` absorbs `a = 1 − exp(−K/N)`; of the remaining
//! energy a fraction `ρ_max·N/(N + 0.5)` is reflected and the rest transmitted.

use super::params::LeafParams;
use super::spectrum::{wavelength, Spectrum, N_WL};
use crate::error::Result;

/// Upper bound of the reflected share of non-absorbed energy.
pub const RHO_MAX: f64 = 0.45;

fn gaussian(wl: f64, center: f64, sigma: f64) -> f64 {
    let z = (wl - center) / sigma;
    (-0.5 * z * z).exp()
}

/// Chlorophyll a+b specific absorption, per µg cm⁻².
pub fn k_cab(wl: f64) -> f64 {
    0.10 * (gaussian(wl, 670.0, 40.0) + 0.8 * gaussian(wl, 430.0, 30.0))
}

/// Carotenoid specific absorption, per µg cm⁻².
pub fn k_cca(wl: f64) -> f64 {
    0.05 * gaussian(wl, 490.0, 35.0)
}

/// Anthocyanin specific absorption, per µg cm⁻².
pub fn k_cant(wl: f64) -> f64 {
    0.04 * gaussian(wl, 550.0, 30.0)
}

/// Water specific absorption, per cm.
pub fn k_cw(wl: f64) -> f64 {
    30.0 * gaussian(wl, 1450.0, 80.0) + 90.0 * gaussian(wl, 1940.0, 80.0)
}

/// Dry matter specific absorption, per g cm⁻²: flat beyond 750 nm, smooth onset from 650 nm.
pub fn k_cdm(wl: f64) -> f64 {
    let x = ((wl - 650.0) / 100.0).clamp(0.0, 1.0);
    30.0 * x * x * (3.0 - 2.0 * x)
}

/// Brown-pigment absorption per unit senescent fraction, ramping down over 400–800 nm.
pub fn k_cs(wl: f64) -> f64 {
    2.5 * ((800.0 - wl) / 400.0).clamp(0.0, 1.0)
}

/// Per-wavelength leaf optical properties.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafOptics {
    pub reflectance: Spectrum,
    pub transmittance: Spectrum,
    /// Share of leaf absorption attributable to chlorophyll.
    pub cab_absorption_share: Spectrum,
}

impl LeafOptics {
    pub fn absorptance(&self) -> Spectrum {
        Spectrum {
            values: self
                .reflectance
                .values
                .iter()
                .zip(&self.transmittance.values)
                .map(|(r, t)| 1.0 - r - t)
                .collect(),
        }
    }
}

pub fn leaf_optics(leaf: &LeafParams) -> Result<LeafOptics> {
    leaf.validate()?;
    let n = leaf.n_struct;
    let structure = n / (n + 0.5);

    let mut refl = Vec::with_capacity(N_WL);
    let mut trans = Vec::with_capacity(N_WL);
    let mut share = Vec::with_capacity(N_WL);
    for i in 0..N_WL {
        let wl = wavelength(i);
        let kc = k_cab(wl) * leaf.cab;
        let k_total = kc
            + k_cca(wl) * leaf.cca
            + k_cant(wl) * leaf.cant
            + k_cw(wl) * leaf.cw
            + k_cdm(wl) * leaf.cdm
            + k_cs(wl) * leaf.cs;
        let absorptance = -(-k_total / n).exp_m1();
        let r = RHO_MAX * (1.0 - absorptance) * structure;
        let t = (1.0 - absorptance - r).max(0.0);
        refl.push(r);
        trans.push(t);
        share.push(if k_total > 0.0 { kc / k_total } else { 0.0 });
    }

    Ok(LeafOptics {
        reflectance: Spectrum { values: refl },
        transmittance: Spectrum { values: trans },
        cab_absorption_share: Spectrum { values: share },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Error;

    fn leaf() -> LeafParams {
        LeafParams {
            cab: 40.0,
            cca: 10.0,
            cant: 2.0,
            cdm: 0.01,
            cw: 0.02,
            cs: 0.1,
            n_struct: 1.5,
        }
    }

    #[test]
    fn no_absorbers_means_no_absorption() {
        let l = LeafParams {
            cab: 0.0,
            cca: 0.0,
            cant: 0.0,
            cdm: 0.0,
            cw: 0.0,
            cs: 0.0,
            n_struct: 1.0,
        };
        let o = leaf_optics(&l).unwrap();
        for (a, s) in o.absorptance().values.iter().zip(&o.cab_absorption_share.values) {
            assert!(a.abs() < 1e-15, "absorptance {a}");
            assert_eq!(*s, 0.0);
        }
    }

    #[test]
    fn more_chlorophyll_darkens_red() {
        let mut lo = leaf();
        lo.cab = 20.0;
        let mut hi = leaf();
        hi.cab = 80.0;
        let r_lo = leaf_optics(&lo).unwrap().reflectance.at(670.0);
        let r_hi = leaf_optics(&hi).unwrap().reflectance.at(670.0);
        assert!(r_hi < r_lo);
    }

    #[test]
    fn single_absorber_owns_absorption() {
        let l = LeafParams {
            cab: 40.0,
            cca: 0.0,
            cant: 0.0,
            cdm: 0.0,
            cw: 0.0,
            cs: 0.0,
            n_struct: 1.5,
        };
        let o = leaf_optics(&l).unwrap();
        assert_eq!(o.cab_absorption_share.at(670.0), 1.0);
    }

    #[test]
    fn energy_bounds() {
        let o = leaf_optics(&leaf()).unwrap();
        for i in 0..N_WL {
            let r = o.reflectance.values[i];
            let t = o.transmittance.values[i];
            assert!(r >= 0.0 && t >= 0.0 && r + t <= 1.0);
            let s = o.cab_absorption_share.values[i];
            assert!((0.0..=1.0).contains(&s));
        }
    }

    #[test]
    fn out_of_range_names_field() {
        let mut l = leaf();
        l.cw = 0.5;
        match leaf_optics(&l) {
            Err(Error::Range { field, .. }) => assert_eq!(field, "cw"),
            other => panic!("expected range error, got {other:?}"),
        }
    }
}
