//! Vegetation-index GPP models.
//!
//! Each model is `GPP = slope·f(x) + intercept` with `x = VI · PAR_in` and
//! `f` either the identity or the natural log. Coefficients and the PAR unit
//! each model expects live in `data/vi_models.json`.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;
use crate::pipeline::{MeteoSeries, PixelObservation};

const VI_MODELS_JSON: &str = include_str!("../data/vi_models.json");

/// Photon yield of PAR, mol per MJ.
pub const MOL_PER_MJ_PAR: f64 = 4.57;
pub const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViKind {
    CiRedEdge,
    CiGreen,
    Ndvi,
    GreenNdvi,
    Evi,
    ReNdvi,
}

impl ViKind {
    pub const ALL: [ViKind; 6] = [
        ViKind::CiRedEdge,
        ViKind::CiGreen,
        ViKind::Ndvi,
        ViKind::GreenNdvi,
        ViKind::Evi,
        ViKind::ReNdvi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ViKind::CiRedEdge => "ci_red_edge",
            ViKind::CiGreen => "ci_green",
            ViKind::Ndvi => "ndvi",
            ViKind::GreenNdvi => "green_ndvi",
            ViKind::Evi => "evi",
            ViKind::ReNdvi => "re_ndvi",
        }
    }

    /// Band roles the index reads.
    pub fn roles(self) -> &'static [BandRole] {
        use BandRole::*;
        match self {
            ViKind::CiRedEdge | ViKind::ReNdvi => &[Nir, RedEdge],
            ViKind::CiGreen | ViKind::GreenNdvi => &[Nir, Green],
            ViKind::Ndvi => &[Nir, Red],
            ViKind::Evi => &[Nir, Red, Blue],
        }
    }
}

impl fmt::Display for ViKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ViKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        ViKind::ALL
            .into_iter()
            .find(|k| k.name() == key || k.name().replace('_', "") == key)
            .ok_or_else(|| {
                let names: Vec<_> = ViKind::ALL.iter().map(|k| k.name()).collect();
                Error::Argument(format!("unknown vegetation index {s:?}; expected one of {}", names.join(", ")))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BandRole {
    Blue,
    Green,
    Red,
    RedEdge,
    Nir,
}

impl BandRole {
    /// Sentinel-2 band carrying the role.
    pub fn band_id(self) -> &'static str {
        match self {
            BandRole::Blue => "B2",
            BandRole::Green => "B3",
            BandRole::Red => "B4",
            BandRole::RedEdge => "B5",
            BandRole::Nir => "B8",
        }
    }
}

/// Reflectances by role; absent roles are `None`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ViBands {
    pub blue: Option<f64>,
    pub green: Option<f64>,
    pub red: Option<f64>,
    pub red_edge: Option<f64>,
    pub nir: Option<f64>,
}

impl ViBands {
    pub fn from_named(band_ids: &[String], values: &[f64]) -> Result<Self> {
        if band_ids.len() != values.len() {
            return Err(Error::Shape {
                expected: band_ids.len(),
                got: values.len(),
            });
        }
        let pick = |role: BandRole| {
            band_ids
                .iter()
                .position(|id| id == role.band_id())
                .map(|i| values[i])
        };
        Ok(ViBands {
            blue: pick(BandRole::Blue),
            green: pick(BandRole::Green),
            red: pick(BandRole::Red),
            red_edge: pick(BandRole::RedEdge),
            nir: pick(BandRole::Nir),
        })
    }

    fn get(&self, role: BandRole) -> Result<f64> {
        let v = match role {
            BandRole::Blue => self.blue,
            BandRole::Green => self.green,
            BandRole::Red => self.red,
            BandRole::RedEdge => self.red_edge,
            BandRole::Nir => self.nir,
        }
        .ok_or_else(|| Error::Argument(format!("band {} is required but not present", role.band_id())))?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Domain(format!("reflectance of {} is {v}", role.band_id())));
        }
        Ok(v)
    }
}

fn ratio(num: f64, den: f64, kind: ViKind) -> Result<f64> {
    if den == 0.0 {
        return Err(Error::Degenerate(format!("{kind} denominator is zero")));
    }
    Ok(num / den)
}

pub fn compute_vi(bands: &ViBands, kind: ViKind) -> Result<f64> {
    use BandRole::*;
    let nir = bands.get(Nir)?;
    match kind {
        ViKind::CiRedEdge => Ok(ratio(nir, bands.get(RedEdge)?, kind)? - 1.0),
        ViKind::CiGreen => Ok(ratio(nir, bands.get(Green)?, kind)? - 1.0),
        ViKind::Ndvi => {
            let red = bands.get(Red)?;
            ratio(nir - red, nir + red, kind)
        }
        ViKind::GreenNdvi => {
            let green = bands.get(Green)?;
            ratio(nir - green, nir + green, kind)
        }
        ViKind::Evi => {
            let (red, blue) = (bands.get(Red)?, bands.get(Blue)?);
            ratio(2.5 * (nir - red), nir + 6.0 * red - 7.5 * blue + 1.0, kind)
        }
        ViKind::ReNdvi => {
            let re = bands.get(RedEdge)?;
            ratio(nir - re, nir + re, kind)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GppForm {
    Linear,
    Log,
}

/// Unit PAR enters `x` in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParUnit {
    /// MJ m⁻² d⁻¹.
    MjM2D,
    /// mol photons m⁻² d⁻¹.
    MolM2D,
    /// Day-mean W m⁻².
    WM2,
}

impl ParUnit {
    pub fn from_mj_per_day(self, par_mj: f64) -> f64 {
        match self {
            ParUnit::MjM2D => par_mj,
            ParUnit::MolM2D => par_mj * MOL_PER_MJ_PAR,
            ParUnit::WM2 => par_mj * 1e6 / SECONDS_PER_DAY,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ViModel {
    pub kind: ViKind,
    pub form: GppForm,
    pub slope: f64,
    pub intercept: f64,
    pub par_unit: ParUnit,
}

impl ViModel {
    /// Raw daily GPP (gC m⁻² d⁻¹) for `x = VI · PAR_in`; may be negative.
    pub fn gpp_from_x(&self, x: f64) -> Result<f64> {
        match self.form {
            GppForm::Linear => Ok(self.slope * x + self.intercept),
            GppForm::Log if x > 0.0 => Ok(self.slope * x.ln() + self.intercept),
            GppForm::Log => Err(Error::Domain(format!("{} model needs x > 0, got {x}", self.kind))),
        }
    }

    /// Raw daily GPP from the index and PAR_in in MJ m⁻² d⁻¹.
    pub fn gpp(&self, vi: f64, par_in_mj: f64) -> Result<f64> {
        self.gpp_from_x(vi * self.par_unit.from_mj_per_day(par_in_mj))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParRule {
    pub fraction_of_rin: f64,
    pub unit: ParUnit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViModelSet {
    pub par_rule: ParRule,
    pub models: Vec<ViModel>,
}

impl Default for ViModelSet {
    fn default() -> Self {
        Self::from_json(VI_MODELS_JSON).expect("bundled VI model table is valid")
    }
}

impl ViModelSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let set: ViModelSet = serde_json::from_str(text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<()> {
        if self.par_rule.unit != ParUnit::MjM2D {
            return Err(Error::Argument("PAR rule must be expressed in mj_m2_d".into()));
        }
        if !(self.par_rule.fraction_of_rin > 0.0 && self.par_rule.fraction_of_rin <= 1.0) {
            return Err(Error::Argument("PAR fraction must lie in (0, 1]".into()));
        }
        for k in ViKind::ALL {
            let n = self.models.iter().filter(|m| m.kind == k).count();
            if n != 1 {
                return Err(Error::Argument(format!("{n} entries for {k}, expected exactly one")));
            }
        }
        Ok(())
    }

    pub fn get(&self, kind: ViKind) -> &ViModel {
        self.models
            .iter()
            .find(|m| m.kind == kind)
            .expect("validated set has every kind")
    }

    /// PAR_in in MJ m⁻² d⁻¹ from a day of equally spaced irradiance steps (W m⁻²).
    pub fn par_in(&self, rin_steps: &[f64], step_seconds: f64) -> f64 {
        self.par_rule.fraction_of_rin * rin_steps.iter().sum::<f64>() * step_seconds / 1e6
    }
}

/// Raw daily GPP with the bundled coefficients.
pub fn vi_gpp(vi: f64, par_in_mj: f64, kind: ViKind) -> Result<f64> {
    ViModelSet::default().get(kind).gpp(vi, par_in_mj)
}

/// Value shown in reports; the raw value is kept alongside it.
pub fn reported_gpp(raw: f64) -> f64 {
    raw.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Ordinary least squares of `y` on `x`.
pub fn fit_linear_vi(x: &[f64], y: &[f64]) -> Result<LinearFit> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            got: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::Argument(format!("need at least 3 pairs, got {}", x.len())));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxx += (a - mx) * (a - mx);
        sxy += (a - mx) * (b - my);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 {
        return Err(Error::SingularFit("x is constant".into()));
    }
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 { 0.0 } else { sxy * sxy / (sxx * syy) };
    Ok(LinearFit {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Daily VI-model output for one pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViGppRecord {
    pub pixel_id: String,
    pub field_id: String,
    pub date: String,
    pub kind: ViKind,
    pub vi: f64,
    pub par_in_mj: f64,
    pub gpp_raw: f64,
}

impl ViGppRecord {
    pub fn gpp(&self) -> f64 {
        reported_gpp(self.gpp_raw)
    }
}

/// Apply one VI model to every observation, using the day's meteorology for PAR.
pub fn baseline_daily(
    obs: &[PixelObservation],
    meteo: &MeteoSeries,
    models: &ViModelSet,
    kind: ViKind,
) -> Result<Vec<ViGppRecord>> {
    let model = models.get(kind);
    let mut out = Vec::with_capacity(obs.len());
    for o in obs {
        let date = o.timestamp.date();
        let rin: Vec<f64> = meteo.day(date)?.iter().map(|(_, m)| m.rin).collect();
        let par_in = models.par_in(&rin, meteo.step_seconds());
        let vi = compute_vi(&ViBands::from_named(&o.band_ids, &o.bands)?, kind)
            .map_err(|e| Error::Argument(format!("pixel {}: {e}", o.pixel_id)))?;
        let gpp_raw = model
            .gpp(vi, par_in)
            .map_err(|e| Error::Argument(format!("pixel {}: {e}", o.pixel_id)))?;
        out.push(ViGppRecord {
            pixel_id: o.pixel_id.clone(),
            field_id: o.field_id.clone(),
            date: date.to_string(),
            kind,
            vi,
            par_in_mj: par_in,
            gpp_raw,
        });
    }
    out.sort_by(|a, b| (&a.field_id, &a.pixel_id, &a.date).cmp(&(&b.field_id, &b.pixel_id, &b.date)));
    Ok(out)
}

/// `pixel_id, field_id, date, vi_kind, vi, par_in_mj_m2_d, gpp_raw, gpp_gc_m2_d`.
pub fn write_vi_gpp_csv(path: impl AsRef<Path>, rows: &[ViGppRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "pixel_id",
        "field_id",
        "date",
        "vi_kind",
        "vi",
        "par_in_mj_m2_d",
        "gpp_raw",
        "gpp_gc_m2_d",
    ])?;
    for r in rows {
        w.write_record([
            r.pixel_id.clone(),
            r.field_id.clone(),
            r.date.clone(),
            r.kind.name().to_string(),
            fmt_f64(r.vi),
            fmt_f64(r.par_in_mj),
            fmt_f64(r.gpp_raw),
            fmt_f64(r.gpp()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
