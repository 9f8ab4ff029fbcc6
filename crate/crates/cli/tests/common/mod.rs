//! Synthetic scenes for end-to-end runs: pixels observed by a sensor, a 3-hourly
//! meteorological series at one grid cell, and simulator-derived field truth.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hgpp_core::eval::{write_field_days, FieldDay};
use hgpp_core::forward_sim::params::MAX_SZA;
use hgpp_core::forward_sim::{simulate, Geometry, MeteoState, VcmaxMode};
use hgpp_core::pipeline::{
    integrate_daily, parse_timestamp, solar_zenith, write_meteo, write_pixels, MeteoSeries, PixelObservation,
    STEPS_PER_DAY, STEP_HOURS,
};
use hgpp_core::sampling::{build_scenarios, ParameterSpace, SampledScenario};
use hgpp_core::spectral::{BandConvolver, SensorSpec};

pub const LAT: f64 = 30.0;
pub const LON: f64 = 55.0;
pub const DATES: [&str; 2] = ["2020-07-01", "2020-07-02"];
/// Overpass time, UTC.
pub const OVERPASS: &str = "07:00:00";
const CLOUD: [f64; 2] = [1.0, 0.7];

pub struct Scene {
    pub pixels: Vec<PixelObservation>,
    pub meteo: MeteoSeries,
    pub reference: Vec<FieldDay>,
}

fn step_time(date: &str, k: usize) -> String {
    format!("{date}T{:02}:00:00Z", STEP_HOURS as usize * k)
}

/// Clear-sky shortwave scaled by a daily cloud factor; other variables fixed.
pub fn meteo_series() -> MeteoSeries {
    let mut series = MeteoSeries::new();
    for (date, cloud) in DATES.iter().zip(CLOUD) {
        for k in 0..STEPS_PER_DAY {
            let t = parse_timestamp(&step_time(date, k)).unwrap();
            let sza = solar_zenith(LAT, LON, t);
            let rin = if sza < 90.0 { 1000.0 * sza.to_radians().cos() * cloud } else { 0.0 };
            let m = MeteoState {
                rin,
                rli: 350.0,
                ta: 26.0,
                p: 960.0,
                ea: 18.0,
                u: 3.0,
            };
            series.insert(t, m).unwrap();
        }
    }
    series
}

/// `n` pixels drawn from the vegetation space, three fields, one overpass per date.
/// `lai` overrides the sampled leaf area when given.
pub fn scene(n: usize, seed: u64, sensor: &SensorSpec, lai: Option<f64>) -> Scene {
    let mode = VcmaxMode::CabCoupled;
    let mut scenarios: Vec<SampledScenario> = build_scenarios(&ParameterSpace::vegetation(), n, seed, mode).unwrap();
    if let Some(l) = lai {
        for s in &mut scenarios {
            s.scenario.canopy.lai = l;
        }
    }
    let meteo = meteo_series();
    let conv = BandConvolver::new(sensor).unwrap();
    let band_ids: Vec<String> = sensor.bands.iter().map(|b| b.id.clone()).collect();

    let mut pixels = Vec::new();
    let mut reference = Vec::new();
    for date in DATES {
        let overpass = parse_timestamp(&format!("{date}T{OVERPASS}Z")).unwrap();
        let sza_obs = solar_zenith(LAT, LON, overpass);
        let mut field_sum = [0.0; 3];
        for (i, s) in scenarios.iter().enumerate() {
            let at_obs = meteo.get(overpass).copied().unwrap_or_default();
            let rec = simulate(&s.scenario, &at_obs, &Geometry::single(sza_obs), mode).unwrap();
            pixels.push(PixelObservation {
                pixel_id: format!("p{i:03}"),
                field_id: format!("F{}", i % 3),
                lat: LAT,
                lon: LON,
                timestamp: overpass,
                sensor: sensor.name.clone(),
                band_ids: band_ids.clone(),
                bands: conv.apply(&rec.toc_reflectance).iter().map(|b| b.clamp(0.0, 1.0)).collect(),
                sza_obs,
            });

            let mut steps = Vec::new();
            for k in 0..STEPS_PER_DAY {
                let t = parse_timestamp(&step_time(date, k)).unwrap();
                let m = meteo.get(t).unwrap();
                let sza = solar_zenith(LAT, LON, t);
                if m.rin > 0.0 && sza < 90.0 {
                    let g = Geometry::new(sza_obs, sza.min(MAX_SZA));
                    steps.push(simulate(&s.scenario, m, &g, mode).unwrap().gpp);
                }
            }
            field_sum[i % 3] += integrate_daily(&steps);
        }
        for (f, sum) in field_sum.iter().enumerate() {
            let count = (0..n).filter(|i| i % 3 == f).count();
            if count > 0 {
                reference.push(FieldDay {
                    field_id: format!("F{f}"),
                    date: date.to_string(),
                    gpp: sum / count as f64,
                });
            }
        }
    }
    Scene {
        pixels,
        meteo,
        reference,
    }
}

pub struct SceneFiles {
    pub pixels: PathBuf,
    pub meteo: PathBuf,
    pub reference: PathBuf,
}

impl Scene {
    pub fn write(&self, dir: &Path) -> SceneFiles {
        let files = SceneFiles {
            pixels: dir.join("pixels.csv"),
            meteo: dir.join("meteo.csv"),
            reference: dir.join("reference.csv"),
        };
        write_pixels(&files.pixels, &self.pixels).unwrap();
        write_meteo(&files.meteo, &self.meteo).unwrap();
        write_field_days(&files.reference, &self.reference).unwrap();
        files
    }
}

/// Run the binary in `dir`.
pub fn hgpp(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hgpp"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

/// Run the binary and panic with its stderr on failure.
pub fn hgpp_ok(dir: &Path, args: &[&str]) -> Output {
    let out = hgpp(dir, args);
    assert!(
        out.status.success(),
        "hgpp {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}
