//! Layered two-stream canopy radiative transfer.
//!
//! The canopy is a stack of identical homogeneous sublayers over a Lambertian
//! soil. Three streams are tracked per wavelength: the collimated solar beam
//! (extinction `k_b = G(θs)/cos θs` per unit leaf area), and downward/upward
//! diffuse flux (interception rate 1 per unit leaf area, the hemispheric mean
//! of `G(θ)/cos θ` weighted by `cos θ`). An intercepted photon is absorbed with
//! probability `1 − r − t`; otherwise it is sent back into the opposite
//! hemisphere with probability `σ_b = r(1+m)/2 + t(1−m)/2` or forward with
//! `σ_f = r(1−m)/2 + t(1+m)/2`, where `m` is the mean cos² of leaf inclination.
//!
//! Each sublayer's exact response follows from the matrix exponential of the
//! three-stream system; the stack is combined by adding from the soil upward
//! and a downward sweep recovers the interface fluxes.

use nalgebra::Matrix3;

use super::leaf::{leaf_optics, LeafOptics};
use super::lidf::LeafAngleDistribution;
use super::params::{Geometry, VegetationScenario};
use super::soil::soil_reflectance;
use super::spectrum::{solar_shape, trapezoid_weight, Spectrum, N_WL, PAR_LAST};
use crate::error::{Error, Result};

pub const N_LAYERS: usize = 20;

/// Interception rate of diffuse flux per unit leaf area.
pub const DIFFUSE_INTERCEPTION: f64 = 1.0;

/// Share of incident shortwave arriving as sky diffuse radiation.
pub const SKY_DIFFUSE_FRACTION: f64 = 0.2;

/// Response of one homogeneous sublayer to unit inputs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerOperators {
    /// Direct beam transmission.
    pub tau_s: f64,
    /// Diffuse reflectance (same from above and below).
    pub rho_d: f64,
    /// Diffuse transmittance.
    pub tau_d: f64,
    /// Direct beam → upward diffuse leaving the top.
    pub rho_sd: f64,
    /// Direct beam → downward diffuse leaving the bottom.
    pub tau_sd: f64,
}

/// Scattering split for leaves with reflectance `r`, transmittance `t` and
/// inclination statistic `m`: returns `(σ_f, σ_b)`.
pub fn scattering_split(r: f64, t: f64, mean_cos2: f64) -> (f64, f64) {
    let back = 0.5 * (r * (1.0 + mean_cos2) + t * (1.0 - mean_cos2));
    let fwd = 0.5 * (r * (1.0 - mean_cos2) + t * (1.0 + mean_cos2));
    (fwd, back)
}

pub fn layer_operators(k_b: f64, layer_lai: f64, sigma_f: f64, sigma_b: f64) -> LayerOperators {
    let kd = DIFFUSE_INTERCEPTION;
    let a = kd * (1.0 - sigma_f);
    let b = kd * sigma_b;
    #[rustfmt::skip]
    let m = Matrix3::new(
        -k_b,            0.0, 0.0,
        k_b * sigma_f,   -a,  b,
        -k_b * sigma_b,  -b,  a,
    ) * layer_lai;
    let phi = m.exp();
    let rho_d = -phi[(2, 1)] / phi[(2, 2)];
    let tau_d = phi[(1, 1)] + phi[(1, 2)] * rho_d;
    let rho_sd = -phi[(2, 0)] / phi[(2, 2)];
    let tau_sd = phi[(1, 0)] + phi[(1, 2)] * rho_sd;
    LayerOperators {
        tau_s: (-k_b * layer_lai).exp(),
        rho_d,
        tau_d,
        rho_sd,
        tau_sd,
    }
}

/// Fluxes at the `n + 1` layer interfaces (index 0 is the canopy top).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceFluxes {
    pub direct: Vec<f64>,
    pub down: Vec<f64>,
    pub up: Vec<f64>,
}

impl InterfaceFluxes {
    pub fn n_layers(&self) -> usize {
        self.direct.len() - 1
    }

    /// Total absorption inside layer `l`.
    pub fn layer_absorption(&self, l: usize) -> f64 {
        (self.direct[l] - self.direct[l + 1]) + (self.down[l] - self.down[l + 1])
            + (self.up[l + 1] - self.up[l])
    }

    pub fn canopy_absorption(&self) -> f64 {
        (0..self.n_layers()).map(|l| self.layer_absorption(l)).sum()
    }

    pub fn soil_absorption(&self, soil_r: f64) -> f64 {
        let n = self.n_layers();
        (1.0 - soil_r) * (self.down[n] + self.direct[n])
    }

    pub fn reflected(&self) -> f64 {
        self.up[0]
    }
}

/// Upward adding from the soil: diffuse reflectance `R_n` and direct-sourced
/// upward flux `Q_n` (per unit top-of-canopy beam) seen at each interface.
fn add_from_soil(ops: &LayerOperators, soil_r: f64, n_layers: usize) -> (Vec<f64>, Vec<f64>) {
    let mut r = vec![0.0; n_layers + 1];
    let mut q = vec![0.0; n_layers + 1];
    r[n_layers] = soil_r;
    q[n_layers] = soil_r * ops.tau_s.powi(n_layers as i32);
    for n in (0..n_layers).rev() {
        let s_n = ops.tau_s.powi(n as i32);
        let denom = 1.0 - ops.rho_d * r[n + 1];
        r[n] = ops.rho_d + ops.tau_d * ops.tau_d * r[n + 1] / denom;
        q[n] = ops.rho_sd * s_n + ops.tau_d * (q[n + 1] + r[n + 1] * ops.tau_sd * s_n) / denom;
    }
    (r, q)
}

/// Solve the stack for top-of-canopy direct `direct_top` and diffuse `diffuse_top` inputs.
pub fn solve_stack(
    ops: &LayerOperators,
    soil_r: f64,
    n_layers: usize,
    direct_top: f64,
    diffuse_top: f64,
) -> InterfaceFluxes {
    let (r, q) = add_from_soil(ops, soil_r, n_layers);
    let mut direct = vec![0.0; n_layers + 1];
    let mut down = vec![0.0; n_layers + 1];
    let mut up = vec![0.0; n_layers + 1];
    direct[0] = direct_top;
    down[0] = diffuse_top;
    up[0] = r[0] * diffuse_top + q[0] * direct_top;
    for n in 0..n_layers {
        direct[n + 1] = direct[n] * ops.tau_s;
        let q_next = q[n + 1] * direct_top;
        down[n + 1] = (ops.tau_d * down[n] + ops.rho_d * q_next + ops.tau_sd * direct[n])
            / (1.0 - ops.rho_d * r[n + 1]);
        up[n + 1] = r[n + 1] * down[n + 1] + q_next;
    }
    InterfaceFluxes { direct, down, up }
}

/// Directional-hemispherical reflectance of the stack for a unit beam.
fn stack_reflectance(ops: &LayerOperators, soil_r: f64, n_layers: usize) -> f64 {
    add_from_soil(ops, soil_r, n_layers).1[0]
}

/// PAR absorbed within one sublayer, as fractions of incident PAR energy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerPar {
    /// Leaf area of the sublayer, m² m⁻².
    pub lai: f64,
    /// Sunlit share of the sublayer's leaf area.
    pub sunlit_fraction: f64,
    /// First-collision absorption of the solar beam (sunlit leaves only).
    pub direct: f64,
    /// Absorption of diffuse flux (shared by sunlit and shaded leaves).
    pub diffuse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CanopyRt {
    pub toc_reflectance: Spectrum,
    pub fpar: f64,
    pub fpar_cab: f64,
    pub layers: Vec<LayerPar>,
}

/// A scenario's optical medium, prepared once and queried per geometry.
#[derive(Debug, Clone)]
pub struct CanopyMedium {
    pub leaf: LeafOptics,
    pub soil: Spectrum,
    pub lidf: LeafAngleDistribution,
    pub lai: f64,
    pub scenario_id: u64,
}

impl CanopyMedium {
    pub fn new(scenario: &VegetationScenario) -> Result<Self> {
        scenario.validate()?;
        Ok(Self {
            leaf: leaf_optics(&scenario.leaf)?,
            soil: soil_reflectance(&scenario.soil)?,
            lidf: LeafAngleDistribution::new(scenario.canopy.lidf_a, scenario.canopy.lidf_b),
            lai: scenario.canopy.lai,
            scenario_id: scenario.id,
        })
    }

    pub fn beam_extinction(&self, sza_deg: f64) -> f64 {
        self.lidf.beam_extinction(sza_deg.to_radians())
    }

    pub fn operators(&self, i: usize, k_b: f64, n_layers: usize) -> LayerOperators {
        let (sf, sb) = scattering_split(
            self.leaf.reflectance.values[i],
            self.leaf.transmittance.values[i],
            self.lidf.mean_cos2(),
        );
        layer_operators(k_b, self.lai / n_layers as f64, sf, sb)
    }

    fn check_sza(&self, sza_deg: f64) -> Result<()> {
        if !(0.0..90.0).contains(&sza_deg) {
            let err = Error::Domain(format!("solar zenith {sza_deg}° must be in [0, 90)"));
            return Err(err.in_scenario(self.scenario_id));
        }
        Ok(())
    }

    fn numerical(&self, what: &str) -> Error {
        Error::Numerical {
            scenario_id: self.scenario_id,
            msg: format!("non-finite {what}"),
        }
    }

    /// Top-of-canopy reflectance for solar illumination at `sza_deg`, nadir view.
    pub fn reflectance(&self, sza_deg: f64) -> Result<Spectrum> {
        self.check_sza(sza_deg)?;
        let k_b = self.beam_extinction(sza_deg);
        let values = (0..N_WL)
            .map(|i| {
                let ops = self.operators(i, k_b, N_LAYERS);
                stack_reflectance(&ops, self.soil.values[i], N_LAYERS)
            })
            .collect::<Vec<_>>();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(self.numerical("reflectance"));
        }
        Ok(Spectrum { values })
    }

    /// Interface fluxes at grid index `i` for unit incident spectral irradiance
    /// split into beam and sky diffuse.
    pub fn fluxes(&self, i: usize, sza_deg: f64, n_layers: usize) -> InterfaceFluxes {
        let ops = self.operators(i, self.beam_extinction(sza_deg), n_layers);
        solve_stack(
            &ops,
            self.soil.values[i],
            n_layers,
            1.0 - SKY_DIFFUSE_FRACTION,
            SKY_DIFFUSE_FRACTION,
        )
    }

    /// PAR absorption profile, fPAR and fPAR_Cab for illumination at `sza_deg`.
    pub fn par_absorption(&self, sza_deg: f64, n_layers: usize) -> Result<(f64, f64, Vec<LayerPar>)> {
        self.check_sza(sza_deg)?;
        let k_b = self.beam_extinction(sza_deg);
        let dl = self.lai / n_layers as f64;
        let shape = solar_shape();
        let mut layers: Vec<LayerPar> = (0..n_layers)
            .map(|l| LayerPar {
                lai: dl,
                sunlit_fraction: (-k_b * dl * (l as f64 + 0.5)).exp(),
                direct: 0.0,
                diffuse: 0.0,
            })
            .collect();
        let mut incident = 0.0;
        let mut absorbed = 0.0;
        let mut absorbed_cab = 0.0;
        for i in 0..=PAR_LAST {
            let w = trapezoid_weight(i, 0, PAR_LAST) * shape[i];
            incident += w;
            if n_layers == 0 || self.lai == 0.0 {
                continue;
            }
            let ops = self.operators(i, k_b, n_layers);
            let fx = solve_stack(
                &ops,
                self.soil.values[i],
                n_layers,
                1.0 - SKY_DIFFUSE_FRACTION,
                SKY_DIFFUSE_FRACTION,
            );
            let albedo = self.leaf.reflectance.values[i] + self.leaf.transmittance.values[i];
            let share = self.leaf.cab_absorption_share.values[i];
            for (l, layer) in layers.iter_mut().enumerate() {
                let total = fx.layer_absorption(l);
                let direct = (1.0 - albedo) * (fx.direct[l] - fx.direct[l + 1]);
                layer.direct += w * direct;
                layer.diffuse += w * (total - direct);
                absorbed += w * total;
                absorbed_cab += w * total * share;
            }
        }
        for layer in &mut layers {
            layer.direct /= incident;
            layer.diffuse /= incident;
        }
        let fpar = (absorbed / incident).clamp(0.0, 1.0);
        let fpar_cab = (absorbed_cab / incident).clamp(0.0, fpar);
        if !fpar.is_finite() || !fpar_cab.is_finite() {
            return Err(self.numerical("fPAR"));
        }
        Ok((fpar, fpar_cab, layers))
    }
}

/// Canopy radiative transfer at the modeling-step solar geometry.
pub fn canopy_rt(scenario: &VegetationScenario, geom: &Geometry) -> Result<CanopyRt> {
    let medium = CanopyMedium::new(scenario)?;
    let toc_reflectance = medium.reflectance(geom.sza_step)?;
    let (fpar, fpar_cab, layers) = medium.par_absorption(geom.sza_step, N_LAYERS)?;
    Ok(CanopyRt {
        toc_reflectance,
        fpar,
        fpar_cab,
        layers,
    })
}
