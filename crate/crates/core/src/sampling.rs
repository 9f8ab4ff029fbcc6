//! Synthetic training corpus: Latin hypercube design over the parameter
//! space, scenario construction and batched forward simulation.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::params::MAX_SZA;
use crate::forward_sim::{
    simulate, CanopyParams, Geometry, LeafParams, MeteoState, SoilParams, VcmaxMode,
    VegetationScenario,
};
use crate::numfmt::fmt_f64;
use crate::spectral::{normalize_spectrum, BandConvolver, SensorSpec};

/// Leaf area assigned to augmentation rows.
pub const LOW_LAI: f64 = 0.001;

/// Names of every parameter a space may contain, in canonical order.
pub const PARAMETER_NAMES: [&str; 22] = [
    "cab", "cca", "cant", "cdm", "cw", "cs", "n", "lai", "hc", "lidf_sum", "lidf_diff", "smc",
    "brightness", "lat", "lon", "sza_obs", "rin", "rli", "ta", "p", "ea", "u",
];

/// Names of the leaf, canopy and soil parameters.
pub const VEGETATION_NAMES: [&str; 15] = [
    "cab", "cca", "cant", "cdm", "cw", "cs", "n", "lai", "hc", "lidf_sum", "lidf_diff", "smc",
    "brightness", "lat", "lon",
];

/// Names of the meteorological features, in feature order.
pub const METEO_NAMES: [&str; 6] = ["rin", "rli", "ta", "p", "ea", "u"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distribution {
    #[default]
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dimension {
    pub name: String,
    pub min: f64,
    pub max: f64,
    #[serde(default)]
    pub distribution: Distribution,
}

impl Dimension {
    fn new(name: &str, min: f64, max: f64) -> Self {
        Self {
            name: name.to_string(),
            min,
            max,
            distribution: Distribution::Uniform,
        }
    }
}

/// Ordered list of sampled dimensions. Parameters absent from a space keep
/// their mid-range (or default meteorology) value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpace {
    pub dims: Vec<Dimension>,
}

impl ParameterSpace {
    /// The full 22-dimensional space with the LIDF pair sampled as sum and difference.
    pub fn full() -> Self {
        let d = Dimension::new;
        Self {
            dims: vec![
                d("cab", 11.0, 90.0),
                d("cca", 0.0, 40.0),
                d("cant", 0.0, 40.0),
                d("cdm", 0.0, 0.05),
                d("cw", 0.0, 0.1),
                d("cs", 0.0, 0.9),
                d("n", 1.0, 2.5),
                d("lai", 0.0, 9.0),
                d("hc", 0.1, 2.0),
                d("lidf_sum", -1.0, 1.0),
                d("lidf_diff", -1.0, 1.0),
                d("smc", 0.01, 0.7),
                d("brightness", 0.01, 0.9),
                d("lat", 20.0, 40.0),
                d("lon", 45.0, 65.0),
                d("sza_obs", 0.0, MAX_SZA),
                d("rin", 0.0, 1400.0),
                d("rli", 0.0, 400.0),
                d("ta", -10.0, 50.0),
                d("p", 500.0, 1030.0),
                d("ea", 0.0, 125.0),
                d("u", 0.0, 25.0),
            ],
        }
    }

    /// Leaf, canopy and soil dimensions only.
    pub fn vegetation() -> Self {
        Self::full().select(&VEGETATION_NAMES).expect("names are in the full space")
    }

    /// Sub-space with the named dimensions, in the given order.
    pub fn select(&self, names: &[&str]) -> Result<Self> {
        let dims = names
            .iter()
            .map(|n| {
                self.dims
                    .iter()
                    .find(|d| d.name == *n)
                    .cloned()
                    .ok_or_else(|| Error::Argument(format!("no dimension named {n:?}")))
            })
            .collect::<Result<_>>()?;
        Ok(Self { dims })
    }

    /// Copy without dimension `i`.
    pub fn without(&self, i: usize) -> Self {
        let mut dims = self.dims.clone();
        dims.remove(i);
        Self { dims }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let space: Self = serde_json::from_str(&text)?;
        space.validate()?;
        Ok(space)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dims.is_empty() {
            return Err(Error::Argument("parameter space has no dimensions".into()));
        }
        for (i, d) in self.dims.iter().enumerate() {
            if !PARAMETER_NAMES.contains(&d.name.as_str()) {
                return Err(Error::Argument(format!("unknown parameter {:?}", d.name)));
            }
            if self.dims[..i].iter().any(|e| e.name == d.name) {
                return Err(Error::Argument(format!("duplicate parameter {:?}", d.name)));
            }
            if !(d.min < d.max) {
                return Err(Error::Argument(format!(
                    "parameter {:?} needs min < max, got [{}, {}]",
                    d.name, d.min, d.max
                )));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.dims.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }

    pub fn names(&self) -> Vec<&str> {
        self.dims.iter().map(|d| d.name.as_str()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.dims.iter().position(|d| d.name == name)
    }
}

/// n × d Latin hypercube design: every dimension has exactly one point in
/// each of its `n` equal-width strata.
pub fn lhs_sample(space: &ParameterSpace, n: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if n == 0 {
        return Err(Error::Argument("Latin hypercube size must be at least 1".into()));
    }
    space.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = vec![vec![0.0; space.len()]; n];
    let mut strata: Vec<usize> = (0..n).collect();
    for (j, dim) in space.dims.iter().enumerate() {
        strata.shuffle(&mut rng);
        let width = dim.max - dim.min;
        for (row, &s) in rows.iter_mut().zip(&strata) {
            let u: f64 = rng.random();
            row[j] = dim.min + width * (s as f64 + u) / n as f64;
        }
    }
    Ok(rows)
}

/// Map the sampled LIDF sum/difference onto (a, b) with |a| + |b| ≤ 1.
pub fn lidf_from_sum_diff(sum: f64, diff: f64) -> (f64, f64) {
    let a = 0.5 * (sum + diff);
    let b = 0.5 * (sum - diff);
    let norm = a.abs() + b.abs();
    if norm > 1.0 {
        (a / norm, b / norm)
    } else {
        (a, b)
    }
}

/// One design point turned into simulator inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampledScenario {
    pub scenario: VegetationScenario,
    pub meteo: MeteoState,
    pub sza_obs: f64,
    pub vcmax25: f64,
}

/// Interpret one design row. Dimensions missing from `space` take the
/// mid-range scenario, default meteorology and a 30° observation zenith.
pub fn scenario_from_row(
    space: &ParameterSpace,
    row: &[f64],
    id: u64,
    vcmax_mode: VcmaxMode,
) -> SampledScenario {
    let base = VegetationScenario::mid_range();
    let meteo0 = MeteoState::default();
    let get = |name: &str, fallback: f64| space.index_of(name).map_or(fallback, |i| row[i]);
    let (lidf_a, lidf_b) = lidf_from_sum_diff(
        get("lidf_sum", base.canopy.lidf_a + base.canopy.lidf_b),
        get("lidf_diff", base.canopy.lidf_a - base.canopy.lidf_b),
    );
    let scenario = VegetationScenario {
        id,
        leaf: LeafParams {
            cab: get("cab", base.leaf.cab),
            cca: get("cca", base.leaf.cca),
            cant: get("cant", base.leaf.cant),
            cdm: get("cdm", base.leaf.cdm),
            cw: get("cw", base.leaf.cw),
            cs: get("cs", base.leaf.cs),
            n_struct: get("n", base.leaf.n_struct),
        },
        canopy: CanopyParams {
            lai: get("lai", base.canopy.lai),
            hc: get("hc", base.canopy.hc),
            lidf_a,
            lidf_b,
        },
        soil: SoilParams {
            smc: get("smc", base.soil.smc),
            brightness: get("brightness", base.soil.brightness),
            lat_shape: get("lat", base.soil.lat_shape),
            lon_shape: get("lon", base.soil.lon_shape),
        },
    };
    let meteo = MeteoState {
        rin: get("rin", meteo0.rin),
        rli: get("rli", meteo0.rli),
        ta: get("ta", meteo0.ta),
        p: get("p", meteo0.p),
        ea: get("ea", meteo0.ea),
        u: get("u", meteo0.u),
    };
    SampledScenario {
        vcmax25: vcmax_mode.vcmax25(scenario.leaf.cab),
        scenario,
        meteo,
        sza_obs: get("sza_obs", 30.0),
    }
}

/// Latin hypercube design mapped to simulator inputs, ids `0..n`.
pub fn build_scenarios(
    space: &ParameterSpace,
    n: usize,
    seed: u64,
    vcmax_mode: VcmaxMode,
) -> Result<Vec<SampledScenario>> {
    let rows = lhs_sample(space, n, seed)?;
    Ok(rows
        .iter()
        .enumerate()
        .map(|(i, r)| scenario_from_row(space, r, i as u64, vcmax_mode))
        .collect())
}

/// Independent RNG stream of one corpus row.
pub fn row_rng(seed: u64, row: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ row.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// One corpus row. Bands are normalized to unit sum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRow {
    pub id: u64,
    pub bands: Vec<f64>,
    pub sza_obs: f64,
    pub sza_step: f64,
    pub meteo: [f64; 6],
    /// µmol CO₂ m⁻² s⁻¹ at `sza_step`.
    pub gpp: f64,
    pub lai: f64,
    pub aug: bool,
}

impl TrainingRow {
    /// Bands, both zenith angles, then meteorology.
    pub fn features(&self) -> Vec<f64> {
        let mut f = Vec::with_capacity(self.bands.len() + 8);
        f.extend_from_slice(&self.bands);
        f.push(self.sza_obs);
        f.push(self.sza_step);
        f.extend_from_slice(&self.meteo);
        f
    }
}

/// Per-row simulator outputs kept for analysis, not for training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub apar: f64,
    pub apar_cab: f64,
    pub ccc: f64,
    /// Simulated GPP, before any forced augmentation label.
    pub gpp: f64,
    pub fpar: f64,
    pub fpar_cab: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub sensor: String,
    pub band_ids: Vec<String>,
    pub rows: Vec<TrainingRow>,
    /// Aligned with `rows`; empty when the set was read back from CSV.
    pub diagnostics: Vec<Diagnostics>,
    /// Rows whose simulation failed and were left out.
    pub failed: usize,
}

pub const DIAGNOSTIC_COLUMNS: [&str; 6] = ["apar", "apar_cab", "ccc", "gpp", "fpar", "fpar_cab"];

/// Corpus generation settings.
#[derive(Debug, Clone)]
pub struct CorpusConfig {
    pub n_main: usize,
    pub n_lowlai: usize,
    pub seed: u64,
    pub vcmax_mode: VcmaxMode,
}

/// Simulate the main rows and the low-LAI augmentation rows.
///
/// Reflectance is taken at the sampled observation zenith and the GPP target
/// at an independent step zenith drawn per row.
pub fn generate_training_set(
    space: &ParameterSpace,
    sensor: &SensorSpec,
    cfg: &CorpusConfig,
) -> Result<TrainingSet> {
    space.validate()?;
    let convolver = BandConvolver::new(sensor)?;
    let mut inputs = if cfg.n_main > 0 {
        build_scenarios(space, cfg.n_main, cfg.seed, cfg.vcmax_mode)?
    } else {
        Vec::new()
    };
    if cfg.n_lowlai > 0 {
        let extra = build_scenarios(space, cfg.n_lowlai, cfg.seed.wrapping_add(1), cfg.vcmax_mode)?;
        for (k, mut s) in extra.into_iter().enumerate() {
            s.scenario.id = (cfg.n_main + k) as u64;
            s.scenario.canopy.lai = LOW_LAI;
            inputs.push(s);
        }
    }
    let results: Vec<Result<(TrainingRow, Diagnostics)>> = inputs
        .par_iter()
        .enumerate()
        .map(|(i, s)| corpus_row(s, i >= cfg.n_main, cfg, &convolver))
        .collect();
    let mut rows = Vec::with_capacity(results.len());
    let mut diagnostics = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok((row, d)) => {
                rows.push(row);
                diagnostics.push(d);
            }
            Err(_) => failed += 1,
        }
    }
    Ok(TrainingSet {
        sensor: sensor.name.clone(),
        band_ids: sensor.bands.iter().map(|b| b.id.clone()).collect(),
        rows,
        diagnostics,
        failed,
    })
}

fn corpus_row(
    s: &SampledScenario,
    aug: bool,
    cfg: &CorpusConfig,
    convolver: &BandConvolver,
) -> Result<(TrainingRow, Diagnostics)> {
    let id = s.scenario.id;
    let sza_step = row_rng(cfg.seed, id).random_range(0.0..=MAX_SZA);
    let geom = Geometry::new(s.sza_obs, sza_step);
    let rec = simulate(&s.scenario, &s.meteo, &geom, cfg.vcmax_mode)?;
    let bands = normalize_spectrum(&convolver.apply(&rec.toc_reflectance))
        .map_err(|e| e.in_scenario(id))?;
    let row = TrainingRow {
        id,
        bands,
        sza_obs: s.sza_obs,
        sza_step,
        meteo: s.meteo.as_array(),
        gpp: if aug { 0.0 } else { rec.gpp },
        lai: s.scenario.canopy.lai,
        aug,
    };
    let diag = Diagnostics {
        apar: rec.apar,
        apar_cab: rec.apar_cab,
        ccc: rec.ccc,
        gpp: rec.gpp,
        fpar: rec.fpar,
        fpar_cab: rec.fpar_cab,
    };
    Ok((row, diag))
}

impl TrainingSet {
    pub fn n_features(&self) -> usize {
        self.band_ids.len() + 8
    }

    pub fn feature_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.band_ids.iter().map(|b| format!("band_{b}")).collect();
        names.push("sza_obs".into());
        names.push("sza_step".into());
        names.extend(METEO_NAMES.iter().map(|s| s.to_string()));
        names
    }

    pub fn features(&self) -> Vec<Vec<f64>> {
        self.rows.iter().map(TrainingRow::features).collect()
    }

    /// Keep only the bands of `sensor` (matched by id) and renormalize them.
    pub fn select_bands(&self, sensor: &SensorSpec) -> Result<Self> {
        let idx: Vec<usize> = sensor
            .bands
            .iter()
            .map(|b| {
                self.band_ids.iter().position(|id| *id == b.id).ok_or_else(|| {
                    Error::SensorMismatch {
                        model: self.sensor.clone(),
                        observation: sensor.name.clone(),
                    }
                })
            })
            .collect::<Result<_>>()?;
        let rows = self
            .rows
            .iter()
            .map(|r| {
                let picked: Vec<f64> = idx.iter().map(|&i| r.bands[i]).collect();
                Ok(TrainingRow {
                    bands: normalize_spectrum(&picked)?,
                    ..r.clone()
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            sensor: sensor.name.clone(),
            band_ids: sensor.bands.iter().map(|b| b.id.clone()).collect(),
            rows,
            diagnostics: self.diagnostics.clone(),
            failed: self.failed,
        })
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        let mut header = self.feature_names();
        header.extend(["gpp", "lai", "aug_flag"].map(String::from));
        w.write_record(&header)?;
        for r in &self.rows {
            let mut rec: Vec<String> = r.features().into_iter().map(fmt_f64).collect();
            rec.push(fmt_f64(r.gpp));
            rec.push(fmt_f64(r.lai));
            rec.push(u8::from(r.aug).to_string());
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    pub fn write_diagnostics_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(DIAGNOSTIC_COLUMNS)?;
        for d in &self.diagnostics {
            w.write_record([d.apar, d.apar_cab, d.ccc, d.gpp, d.fpar, d.fpar_cab].map(fmt_f64))?;
        }
        w.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Attach diagnostics written by [`TrainingSet::write_diagnostics_csv`].
    pub fn read_diagnostics_csv(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let mut rd = csv::Reader::from_path(path.as_ref())?;
        let header = rd.headers()?.clone();
        let cols: Vec<usize> = DIAGNOSTIC_COLUMNS
            .iter()
            .map(|name| {
                header.iter().position(|h| h == *name).ok_or_else(|| {
                    Error::Parse(format!("diagnostics CSV is missing column {name:?}"))
                })
            })
            .collect::<Result<_>>()?;
        let mut out = Vec::with_capacity(self.rows.len());
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let v: Vec<f64> = cols
                .iter()
                .map(|&c| {
                    rec[c].trim().parse::<f64>().map_err(|_| {
                        Error::Parse(format!("row {}: bad number {:?}", line + 1, &rec[c]))
                    })
                })
                .collect::<Result<_>>()?;
            out.push(Diagnostics {
                apar: v[0],
                apar_cab: v[1],
                ccc: v[2],
                gpp: v[3],
                fpar: v[4],
                fpar_cab: v[5],
            });
        }
        if out.len() != self.rows.len() {
            return Err(Error::Shape {
                expected: self.rows.len(),
                got: out.len(),
            });
        }
        self.diagnostics = out;
        Ok(())
    }

    /// Read a corpus written by [`TrainingSet::write_csv`].
    pub fn read_csv(path: impl AsRef<Path>, sensor: &str) -> Result<Self> {
        let mut rd = csv::Reader::from_path(path.as_ref())?;
        let header = rd.headers()?.clone();
        let band_ids: Vec<String> = header
            .iter()
            .filter_map(|h| h.strip_prefix("band_").map(String::from))
            .collect();
        let col = |name: &str| {
            header.iter().position(|h| h == name).ok_or_else(|| {
                Error::Parse(format!("training CSV is missing column {name:?}"))
            })
        };
        let band_cols: Vec<usize> = band_ids
            .iter()
            .map(|b| col(&format!("band_{b}")))
            .collect::<Result<_>>()?;
        let sza_obs = col("sza_obs")?;
        let sza_step = col("sza_step")?;
        let meteo_cols: Vec<usize> = METEO_NAMES.iter().map(|m| col(m)).collect::<Result<_>>()?;
        let (gpp, lai, aug) = (col("gpp")?, col("lai")?, col("aug_flag")?);
        let mut rows = Vec::new();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let num = |c: usize| -> Result<f64> {
                rec[c].trim().parse::<f64>().map_err(|_| {
                    Error::Parse(format!("row {}: bad number {:?}", line + 1, &rec[c]))
                })
            };
            let mut meteo = [0.0; 6];
            for (m, &c) in meteo.iter_mut().zip(&meteo_cols) {
                *m = num(c)?;
            }
            rows.push(TrainingRow {
                id: line as u64,
                bands: band_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
                sza_obs: num(sza_obs)?,
                sza_step: num(sza_step)?,
                meteo,
                gpp: num(gpp)?,
                lai: num(lai)?,
                aug: num(aug)? != 0.0,
            });
        }
        Ok(Self {
            sensor: sensor.to_string(),
            band_ids,
            rows,
            diagnostics: Vec::new(),
            failed: 0,
        })
    }
}
