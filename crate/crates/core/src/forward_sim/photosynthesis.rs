//! Collatz C3 leaf photosynthesis with fixed intercellular CO₂.
//!
//! Gross assimilation is the co-limited minimum of the Rubisco (`Wc`),
//! light (`We`) and export (`Ws`) rates. Dark respiration is not subtracted.

use crate::error::{check_range, Error, Result};

/// Ambient CO₂, µmol mol⁻¹.
pub const CA: f64 = 400.0;
/// Intercellular CO₂, µmol mol⁻¹.
pub const CI: f64 = 0.7 * CA;
/// CO₂ compensation point at 25 °C, µmol mol⁻¹.
pub const GAMMA_STAR_25: f64 = 42.75;
/// Michaelis constant for CO₂ at 25 °C, µmol mol⁻¹.
pub const KC_25: f64 = 404.9;
/// Michaelis constant for O₂ at 25 °C, mmol mol⁻¹.
pub const KO_25: f64 = 278.4;
/// Oxygen mole fraction, mmol mol⁻¹.
pub const O2: f64 = 209.0;
pub const Q10_VCMAX: f64 = 2.1;
pub const Q10_KC: f64 = 2.1;
pub const Q10_KO: f64 = 1.2;
/// Q10 of Γ*, the reciprocal of the CO₂/O₂ specificity Q10 (0.57).
pub const Q10_GAMMA_STAR: f64 = 1.0 / 0.57;
/// Quantum efficiency, mol CO₂ (mol photons)⁻¹.
pub const ALPHA: f64 = 0.08;
pub const THETA_1: f64 = 0.98;
pub const THETA_2: f64 = 0.95;

fn q10(q: f64, ta: f64) -> f64 {
    q.powf((ta - 25.0) / 10.0)
}

/// High/low temperature inhibition of carboxylation capacity.
pub fn temperature_inhibition(ta: f64) -> f64 {
    1.0 / ((1.0 + (0.3 * (ta - 36.0)).exp()) * (1.0 + (0.2 * (8.0 - ta)).exp()))
}

pub fn vcmax_at(vcmax25: f64, ta: f64) -> f64 {
    vcmax25 * q10(Q10_VCMAX, ta) * temperature_inhibition(ta)
}

/// The three limiting rates `(Wc, We, Ws)`, µmol CO₂ m⁻² s⁻¹.
pub fn limiting_rates(apar_leaf: f64, ta: f64, vcmax25: f64) -> (f64, f64, f64) {
    let vcmax = vcmax_at(vcmax25, ta);
    let kc = KC_25 * q10(Q10_KC, ta);
    let ko = KO_25 * q10(Q10_KO, ta);
    let gamma_star = GAMMA_STAR_25 * q10(Q10_GAMMA_STAR, ta);
    let wc = vcmax * (CI - gamma_star) / (CI + kc * (1.0 + O2 / ko));
    let we = ALPHA * apar_leaf * (CI - gamma_star) / (CI + 2.0 * gamma_star);
    let ws = 0.5 * vcmax;
    (wc.max(0.0), we.max(0.0), ws.max(0.0))
}

/// Smaller root of `θx² − (p + q)x + pq = 0`, a smooth minimum of `p` and `q`.
pub fn colimit(p: f64, q: f64, theta: f64) -> f64 {
    let b = p + q;
    let c = p * q;
    if c <= 0.0 {
        return 0.0;
    }
    let disc = (b * b - 4.0 * theta * c).max(0.0);
    2.0 * c / (b + disc.sqrt())
}

/// Gross leaf assimilation for absorbed PAR `apar_leaf` (µmol photons m⁻² leaf s⁻¹).
pub fn leaf_photosynthesis(apar_leaf: f64, ta: f64, vcmax25: f64) -> Result<f64> {
    if !(apar_leaf >= 0.0) || !apar_leaf.is_finite() {
        return Err(Error::Domain(format!(
            "absorbed PAR must be finite and non-negative, got {apar_leaf}"
        )));
    }
    check_range("ta", ta, -10.0, 50.0)?;
    if !(vcmax25 >= 0.0) {
        return Err(Error::Domain(format!("vcmax25 must be non-negative, got {vcmax25}")));
    }
    let (wc, we, ws) = limiting_rates(apar_leaf, ta, vcmax25);
    let wp = colimit(wc, we, THETA_1);
    Ok(colimit(wp, ws, THETA_2))
}
