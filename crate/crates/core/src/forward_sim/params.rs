use serde::{Deserialize, Serialize};

use crate::error::{check_range, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafParams {
    /// Chlorophyll a+b, µg cm⁻².
    pub cab: f64,
    /// Carotenoids, µg cm⁻².
    pub cca: f64,
    /// Anthocyanins, µg cm⁻².
    pub cant: f64,
    /// Dry matter, g cm⁻².
    pub cdm: f64,
    /// Equivalent water thickness, cm.
    pub cw: f64,
    /// Senescent material fraction.
    pub cs: f64,
    /// Leaf structure parameter.
    pub n_struct: f64,
}

impl LeafParams {
    pub fn validate(&self) -> Result<()> {
        check_range("cab", self.cab, 0.0, 90.0)?;
        check_range("cca", self.cca, 0.0, 40.0)?;
        check_range("cant", self.cant, 0.0, 40.0)?;
        check_range("cdm", self.cdm, 0.0, 0.05)?;
        check_range("cw", self.cw, 0.0, 0.1)?;
        check_range("cs", self.cs, 0.0, 0.9)?;
        check_range("n_struct", self.n_struct, 1.0, 2.5)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CanopyParams {
    pub lai: f64,
    /// Canopy height, m.
    pub hc: f64,
    pub lidf_a: f64,
    pub lidf_b: f64,
}

impl CanopyParams {
    pub fn validate(&self) -> Result<()> {
        check_range("lai", self.lai, 0.0, 9.0)?;
        check_range("hc", self.hc, 0.1, 2.0)?;
        check_range("lidf_a", self.lidf_a, -1.0, 1.0)?;
        check_range("lidf_b", self.lidf_b, -1.0, 1.0)?;
        check_range(
            "lidf_a+lidf_b",
            self.lidf_a.abs() + self.lidf_b.abs(),
            0.0,
            1.0 + 1e-12,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilParams {
    pub smc: f64,
    pub brightness: f64,
    pub lat_shape: f64,
    pub lon_shape: f64,
}

impl SoilParams {
    pub fn validate(&self) -> Result<()> {
        check_range("smc", self.smc, 0.01, 0.7)?;
        check_range("brightness", self.brightness, 0.01, 0.9)?;
        check_range("lat_shape", self.lat_shape, 20.0, 40.0)?;
        check_range("lon_shape", self.lon_shape, 45.0, 65.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VegetationScenario {
    pub id: u64,
    pub leaf: LeafParams,
    pub canopy: CanopyParams,
    pub soil: SoilParams,
}

impl VegetationScenario {
    pub fn validate(&self) -> Result<()> {
        self.leaf.validate()?;
        self.canopy.validate()?;
        self.soil.validate()
    }

    /// Canopy chlorophyll content, µg cm⁻².
    pub fn ccc(&self) -> f64 {
        self.canopy.lai * self.leaf.cab
    }

    /// Mid-range point of the vegetation/soil space.
    pub fn mid_range() -> Self {
        Self {
            id: 0,
            leaf: LeafParams {
                cab: 50.5,
                cca: 20.0,
                cant: 20.0,
                cdm: 0.025,
                cw: 0.05,
                cs: 0.45,
                n_struct: 1.75,
            },
            canopy: CanopyParams {
                lai: 4.5,
                hc: 1.05,
                lidf_a: 0.0,
                lidf_b: 0.0,
            },
            soil: SoilParams {
                smc: 0.355,
                brightness: 0.455,
                lat_shape: 30.0,
                lon_shape: 55.0,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeteoState {
    /// Shortwave irradiance, W m⁻².
    pub rin: f64,
    /// Longwave irradiance, W m⁻².
    pub rli: f64,
    /// Air temperature, °C.
    pub ta: f64,
    /// Air pressure, hPa.
    pub p: f64,
    /// Vapour pressure, hPa.
    pub ea: f64,
    /// Wind speed, m s⁻¹.
    pub u: f64,
}

impl MeteoState {
    pub fn validate(&self) -> Result<()> {
        check_range("rin", self.rin, 0.0, 1400.0)?;
        check_range("rli", self.rli, 0.0, 400.0)?;
        check_range("ta", self.ta, -10.0, 50.0)?;
        check_range("p", self.p, 500.0, 1030.0)?;
        check_range("ea", self.ea, 0.0, 125.0)?;
        check_range("u", self.u, 0.0, 25.0)
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.rin, self.rli, self.ta, self.p, self.ea, self.u]
    }
}

impl Default for MeteoState {
    /// The reference meteorology used for sensitivity runs.
    fn default() -> Self {
        Self {
            rin: 600.0,
            rli: 300.0,
            ta: 20.0,
            p: 970.0,
            ea: 15.0,
            u: 2.0,
        }
    }
}

pub const FIXED_VZA: f64 = 0.0;
pub const FIXED_RAA: f64 = 90.0;
pub const MAX_SZA: f64 = 85.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Geometry {
    /// Solar zenith at the satellite overpass, degrees.
    pub sza_obs: f64,
    /// Solar zenith at the modeled time step, degrees.
    pub sza_step: f64,
    pub vza: f64,
    pub raa: f64,
}

impl Geometry {
    pub fn new(sza_obs: f64, sza_step: f64) -> Self {
        Self {
            sza_obs,
            sza_step,
            vza: FIXED_VZA,
            raa: FIXED_RAA,
        }
    }

    pub fn single(sza: f64) -> Self {
        Self::new(sza, sza)
    }

    pub fn validate(&self) -> Result<()> {
        check_range("sza_obs", self.sza_obs, 0.0, MAX_SZA)?;
        check_range("sza_step", self.sza_step, 0.0, MAX_SZA)?;
        check_range("vza", self.vza, FIXED_VZA, FIXED_VZA)?;
        check_range("raa", self.raa, FIXED_RAA, FIXED_RAA)
    }
}

/// How leaf carboxylation capacity at 25 °C is assigned.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VcmaxMode {
    /// Fixed 100 µmol m⁻² s⁻¹.
    Constant,
    /// Linear in chlorophyll content, floored at zero.
    CabCoupled,
}

pub const VCMAX25_CONSTANT: f64 = 100.0;
pub const VCMAX_CAB_SLOPE: f64 = 2.5294;
pub const VCMAX_CAB_INTERCEPT: f64 = -27.34;

impl VcmaxMode {
    pub fn vcmax25(self, cab: f64) -> f64 {
        match self {
            VcmaxMode::Constant => VCMAX25_CONSTANT,
            VcmaxMode::CabCoupled => (VCMAX_CAB_SLOPE * cab + VCMAX_CAB_INTERCEPT).max(0.0),
        }
    }
}

impl std::str::FromStr for VcmaxMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "constant" | "constant-100" => Ok(VcmaxMode::Constant),
            "cab" | "cab-coupled" => Ok(VcmaxMode::CabCoupled),
            other => Err(crate::Error::Argument(format!(
                "unknown vcmax mode `{other}` (expected constant | cab-coupled)"
            ))),
        }
    }
}
