//! Sensor band convolution and feature scaling.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::spectrum::{trapezoid_weight, wavelength, Spectrum, N_WL, WL_END, WL_START};

const SENTINEL2_JSON: &str = include_str!("../data/sentinel2.json");
const LANDSAT8_JSON: &str = include_str!("../data/landsat8.json");

/// Gaussian response functions are cut at this many FWHM from the center.
pub const SRF_TRUNCATION_FWHM: f64 = 2.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub id: String,
    pub center_nm: f64,
    pub fwhm_nm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorSpec {
    pub name: String,
    /// True for the 6-band set shared with Landsat 8.
    #[serde(default)]
    pub subset: bool,
    pub bands: Vec<Band>,
}

impl SensorSpec {
    pub fn sentinel2() -> Self {
        Self::from_json(SENTINEL2_JSON).expect("embedded sensor file is valid")
    }

    pub fn landsat8() -> Self {
        Self::from_json(LANDSAT8_JSON).expect("embedded sensor file is valid")
    }

    /// Built-in sensor by name, or a sensor JSON file when `name` is a path.
    pub fn resolve(name: &str) -> Result<Self> {
        match name {
            "sentinel2" | "s2" => Ok(Self::sentinel2()),
            "landsat8" | "l8" => Ok(Self::landsat8()),
            other if Path::new(other).is_file() => Self::load(other),
            other => Err(Error::Argument(format!(
                "unknown sensor {other:?} (expected sentinel2, landsat8 or a JSON file)"
            ))),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.bands.is_empty() {
            return Err(Error::Argument(format!("sensor {} has no bands", self.name)));
        }
        for b in &self.bands {
            if !(b.fwhm_nm > 0.0) || !b.center_nm.is_finite() {
                return Err(Error::Argument(format!("band {} has invalid center/fwhm", b.id)));
            }
        }
        for w in self.bands.windows(2) {
            if w[1].center_nm <= w[0].center_nm {
                return Err(Error::Argument(format!(
                    "band centers must increase ({} then {})",
                    w[0].id, w[1].id
                )));
            }
        }
        Ok(())
    }

    pub fn n_bands(&self) -> usize {
        self.bands.len()
    }

    pub fn band_ids(&self) -> Vec<&str> {
        self.bands.iter().map(|b| b.id.as_str()).collect()
    }

    pub fn band_index(&self, id: &str) -> Option<usize> {
        self.bands.iter().position(|b| b.id == id)
    }
}

/// Precomputed response weights of one band on the model grid.
#[derive(Debug, Clone)]
struct BandKernel {
    first: usize,
    weights: Vec<f64>,
}

/// Convolves model spectra to the bands of one sensor.
#[derive(Debug, Clone)]
pub struct BandConvolver {
    kernels: Vec<BandKernel>,
}

impl BandConvolver {
    pub fn new(sensor: &SensorSpec) -> Result<Self> {
        let kernels = sensor.bands.iter().map(band_kernel).collect::<Result<_>>()?;
        Ok(Self { kernels })
    }

    pub fn apply(&self, spectrum: &Spectrum) -> Vec<f64> {
        self.kernels
            .iter()
            .map(|k| {
                let v = &spectrum.values[k.first..k.first + k.weights.len()];
                v.iter().zip(&k.weights).map(|(r, w)| r * w).sum()
            })
            .collect()
    }
}

fn band_kernel(band: &Band) -> Result<BandKernel> {
    let (c, f) = (band.center_nm, band.fwhm_nm);
    if c - f < WL_START || c + f > WL_END {
        return Err(Error::Coverage {
            band: band.id.clone(),
            lo: c - f,
            hi: c + f,
        });
    }
    let sigma = f / (8.0 * std::f64::consts::LN_2).sqrt();
    let lo = c - SRF_TRUNCATION_FWHM * f;
    let hi = c + SRF_TRUNCATION_FWHM * f;
    let idx: Vec<usize> = (0..N_WL)
        .filter(|&i| (lo..=hi).contains(&wavelength(i)))
        .collect();
    let (first, last) = (idx[0], idx[idx.len() - 1]);
    let mut weights: Vec<f64> = (first..=last)
        .map(|i| {
            let z = (wavelength(i) - c) / sigma;
            (-0.5 * z * z).exp() * trapezoid_weight(i, first, last)
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::Coverage {
            band: band.id.clone(),
            lo,
            hi,
        });
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(BandKernel { first, weights })
}

/// Band-averaged reflectance of `spectrum` for every band of `sensor`.
pub fn band_convolve(spectrum: &Spectrum, sensor: &SensorSpec) -> Result<Vec<f64>> {
    Ok(BandConvolver::new(sensor)?.apply(spectrum))
}

/// Divide by the band sum so the result sums to one.
pub fn normalize_spectrum(bands: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = bands.iter().sum();
    if !(sum > 0.0) || !sum.is_finite() {
        return Err(Error::Degenerate(format!(
            "cannot normalize band vector with sum {sum}"
        )));
    }
    Ok(bands.iter().map(|b| b / sum).collect())
}

/// Per-feature affine map of the training range onto [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MinMaxScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl MinMaxScaler {
    pub fn fit<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or_else(|| Error::Argument("cannot fit a scaler on zero rows".into()))?
            .as_ref();
        let mut min = first.to_vec();
        let mut max = first.to_vec();
        for row in rows {
            let row = row.as_ref();
            if row.len() != min.len() {
                return Err(Error::Shape {
                    expected: min.len(),
                    got: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                min[j] = min[j].min(v);
                max[j] = max[j].max(v);
            }
        }
        Ok(Self { min, max })
    }

    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    /// Scale one feature. Values outside the fitted range extrapolate linearly.
    pub fn scale(&self, j: usize, v: f64) -> f64 {
        let width = self.max[j] - self.min[j];
        if width > 0.0 {
            (v - self.min[j]) / width
        } else {
            0.0
        }
    }

    pub fn unscale(&self, j: usize, s: f64) -> f64 {
        self.min[j] + s * (self.max[j] - self.min[j])
    }

    pub fn apply(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features() {
            return Err(Error::Shape {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(row.iter().enumerate().map(|(j, &v)| self.scale(j, v)).collect())
    }

    pub fn apply_in_place(&self, row: &mut [f64]) {
        for (j, v) in row.iter_mut().enumerate() {
            *v = self.scale(j, *v);
        }
    }

    pub fn invert(&self, row: &[f64]) -> Result<Vec<f64>> {
        if row.len() != self.n_features() {
            return Err(Error::Shape {
                expected: self.n_features(),
                got: row.len(),
            });
        }
        Ok(row.iter().enumerate().map(|(j, &s)| self.unscale(j, s)).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_sensors() {
        let s2 = SensorSpec::sentinel2();
        assert_eq!(s2.n_bands(), 10);
        assert!(!s2.subset);
        let l8 = SensorSpec::landsat8();
        assert_eq!(l8.band_ids(), ["B2", "B3", "B4", "B8a", "B11", "B12"]);
        assert!(l8.subset);
        for b in &l8.bands {
            let twin = &s2.bands[s2.band_index(&b.id).unwrap()];
            assert_eq!(b, twin);
        }
    }

    #[test]
    fn constant_spectrum_is_preserved() {
        let bands = band_convolve(&Spectrum::constant(0.3), &SensorSpec::sentinel2()).unwrap();
        for b in bands {
            assert!((b - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn spike_outside_supports_is_invisible() {
        let s2 = SensorSpec::sentinel2();
        let flat = Spectrum::constant(0.2);
        let mut spiked = flat.clone();
        // 1200 nm lies outside every band support.
        spiked.values[80] = 0.9;
        let a = band_convolve(&flat, &s2).unwrap();
        let b = band_convolve(&spiked, &s2).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-6);
        }
    }

    #[test]
    fn band_outside_grid_is_a_coverage_error() {
        let spec = SensorSpec {
            name: "x".into(),
            subset: false,
            bands: vec![Band {
                id: "U".into(),
                center_nm: 380.0,
                fwhm_nm: 20.0,
            }],
        };
        assert!(matches!(BandConvolver::new(&spec), Err(Error::Coverage { .. })));
    }

    #[test]
    fn invalid_sensor_json() {
        let text = r#"{"name":"bad","bands":[{"id":"a","center_nm":600,"fwhm_nm":10},{"id":"b","center_nm":500,"fwhm_nm":10}]}"#;
        assert!(SensorSpec::from_json(text).is_err());
        assert!(SensorSpec::resolve("nope").is_err());
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_spectrum(&[0.2, 0.2, 0.6]).unwrap(), [0.2, 0.2, 0.6]);
        let n = normalize_spectrum(&[2.0, 2.0, 6.0]).unwrap();
        for (a, b) in n.iter().zip([0.2, 0.2, 0.6]) {
            assert!((a - b).abs() < 1e-15);
        }
        for v in normalize_spectrum(&[0.37; 10]).unwrap() {
            assert!((v - 0.1).abs() < 1e-15);
        }
        assert!(matches!(normalize_spectrum(&[0.0; 4]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn minmax_examples() {
        let rows = vec![vec![2.0, 5.0], vec![4.0, 5.0], vec![6.0, 5.0]];
        let sc = MinMaxScaler::fit(&rows).unwrap();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| sc.apply(r).unwrap()).collect();
        assert_eq!(scaled, vec![vec![0.0, 0.0], vec![0.5, 0.0], vec![1.0, 0.0]]);
        assert_eq!(sc.scale(0, 8.0), 1.5);
        assert_eq!(sc.invert(&[1.5, 0.0]).unwrap()[0], 8.0);
        assert!(MinMaxScaler::fit::<Vec<f64>>(&[]).is_err());
        assert!(sc.apply(&[1.0]).is_err());
    }
}
