//! Simplified soil–canopy forward model: leaf optics, soil reflectance,
//! layered canopy radiative transfer and C3 canopy photosynthesis.

pub mod canopy;
pub mod leaf;
pub mod lidf;
pub mod params;
pub mod photosynthesis;
pub mod soil;
pub mod spectrum;

use serde::{Deserialize, Serialize};

pub use canopy::{canopy_rt, CanopyMedium, CanopyRt, LayerPar, N_LAYERS};
pub use leaf::{leaf_optics, LeafOptics};
pub use params::{
    CanopyParams, Geometry, LeafParams, MeteoState, SoilParams, VcmaxMode, VegetationScenario,
};
pub use photosynthesis::leaf_photosynthesis;
pub use soil::soil_reflectance;
pub use spectrum::Spectrum;

use crate::error::Result;
use spectrum::{par_energy_fraction, PAR_PHOTONS_PER_JOULE};

/// One forward simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub scenario: VegetationScenario,
    pub meteo: MeteoState,
    pub geom: Geometry,
    /// µmol m⁻² s⁻¹.
    pub vcmax25: f64,
    /// Nadir reflectance at the observation solar zenith.
    pub toc_reflectance: Spectrum,
    /// Canopy gross photosynthesis at the step solar zenith, µmol CO₂ m⁻² s⁻¹.
    pub gpp: f64,
    pub fpar: f64,
    pub fpar_cab: f64,
    /// µmol photons m⁻² s⁻¹.
    pub apar: f64,
    /// µmol photons m⁻² s⁻¹.
    pub apar_cab: f64,
    /// µg cm⁻².
    pub ccc: f64,
}

/// Incident PAR photon flux for broadband shortwave `rin` (W m⁻²).
pub fn incident_par_umol(rin: f64) -> f64 {
    rin * par_energy_fraction() * PAR_PHOTONS_PER_JOULE
}

/// Canopy GPP from a PAR absorption profile, summing sunlit and shaded leaves per layer.
pub fn canopy_gpp(layers: &[LayerPar], par_in_umol: f64, ta: f64, vcmax25: f64) -> Result<f64> {
    let mut gpp = 0.0;
    for layer in layers {
        if layer.lai <= 0.0 {
            continue;
        }
        let sunlit_area = layer.sunlit_fraction * layer.lai;
        let diffuse_leaf = (layer.diffuse.max(0.0) * par_in_umol) / layer.lai;
        let direct_leaf = if sunlit_area > 0.0 {
            layer.direct.max(0.0) * par_in_umol / sunlit_area
        } else {
            0.0
        };
        let a_sun = leaf_photosynthesis(direct_leaf + diffuse_leaf, ta, vcmax25)?;
        let a_shade = leaf_photosynthesis(diffuse_leaf, ta, vcmax25)?;
        gpp += sunlit_area * a_sun + (layer.lai - sunlit_area) * a_shade;
    }
    Ok(gpp)
}

/// Run the full chain with `n_layers` sublayers for the photosynthesis integration.
pub fn simulate_layers(
    scenario: &VegetationScenario,
    meteo: &MeteoState,
    geom: &Geometry,
    vcmax_mode: VcmaxMode,
    n_layers: usize,
) -> Result<SimRecord> {
    let id = scenario.id;
    let run = || -> Result<SimRecord> {
        meteo.validate()?;
        geom.validate()?;
        let medium = CanopyMedium::new(scenario)?;
        let toc_reflectance = medium.reflectance(geom.sza_obs)?;
        let (fpar, fpar_cab, layers) = medium.par_absorption(geom.sza_step, n_layers)?;
        let vcmax25 = vcmax_mode.vcmax25(scenario.leaf.cab);
        let par_in = incident_par_umol(meteo.rin);
        let gpp = canopy_gpp(&layers, par_in, meteo.ta, vcmax25)?;
        if !gpp.is_finite() {
            return Err(crate::Error::Numerical {
                scenario_id: id,
                msg: "non-finite GPP".into(),
            });
        }
        Ok(SimRecord {
            scenario: *scenario,
            meteo: *meteo,
            geom: *geom,
            vcmax25,
            toc_reflectance,
            gpp,
            fpar,
            fpar_cab,
            apar: fpar * par_in,
            apar_cab: fpar_cab * par_in,
            ccc: scenario.ccc(),
        })
    };
    run().map_err(|e| e.in_scenario(id))
}

/// Forward simulation: reflectance at `geom.sza_obs`, photosynthesis at `geom.sza_step`.
pub fn simulate(
    scenario: &VegetationScenario,
    meteo: &MeteoState,
    geom: &Geometry,
    vcmax_mode: VcmaxMode,
) -> Result<SimRecord> {
    simulate_layers(scenario, meteo, geom, vcmax_mode, N_LAYERS)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dark_means_no_gpp() {
        let meteo = MeteoState {
            rin: 0.0,
            ..MeteoState::default()
        };
        let r = simulate(
            &VegetationScenario::mid_range(),
            &meteo,
            &Geometry::single(30.0),
            VcmaxMode::Constant,
        )
        .unwrap();
        assert_eq!(r.gpp, 0.0);
        assert_eq!(r.apar, 0.0);
    }

    #[test]
    fn cab_coupled_vcmax() {
        let mut s = VegetationScenario::mid_range();
        s.leaf.cab = 50.0;
        let r = simulate(&s, &MeteoState::default(), &Geometry::single(30.0), VcmaxMode::CabCoupled)
            .unwrap();
        assert!((r.vcmax25 - 99.13).abs() < 1e-9);
    }

    #[test]
    fn default_run_is_plausible() {
        let r = simulate(
            &VegetationScenario::mid_range(),
            &MeteoState::default(),
            &Geometry::single(30.0),
            VcmaxMode::Constant,
        )
        .unwrap();
        assert!(r.gpp > 0.0 && r.gpp < 60.0, "gpp {}", r.gpp);
        assert!(0.0 <= r.fpar_cab && r.fpar_cab <= r.fpar && r.fpar <= 1.0);
        assert!(r.apar <= incident_par_umol(600.0));
        assert!((r.ccc - 4.5 * 50.5).abs() < 1e-12);
    }

    #[test]
    fn bare_soil_has_no_gpp() {
        let mut s = VegetationScenario::mid_range();
        s.canopy.lai = 0.0;
        let r = simulate(&s, &MeteoState::default(), &Geometry::single(30.0), VcmaxMode::Constant)
            .unwrap();
        assert_eq!(r.gpp, 0.0);
    }

    #[test]
    fn errors_carry_scenario_id() {
        let mut s = VegetationScenario::mid_range();
        s.id = 77;
        s.canopy.lai = 12.0;
        let err = simulate(&s, &MeteoState::default(), &Geometry::single(30.0), VcmaxMode::Constant)
            .unwrap_err();
        assert!(matches!(err, crate::Error::InScenario { scenario_id: 77, .. }));
    }
}
