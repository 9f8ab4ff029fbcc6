//! Daily GPP from one reflectance observation per day and 3-hourly meteorology.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use chrono::{DateTime, Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::MeteoState;
use crate::ml::{Matrix, Target, TrainedModel};
use crate::numfmt::fmt_f64;
use crate::spectral::{normalize_spectrum, SensorSpec};

pub const STEP_HOURS: u32 = 3;
pub const STEPS_PER_DAY: usize = 8;
pub const STEP_SECONDS: f64 = 10_800.0;
/// Grams of carbon per µmol CO₂.
pub const GC_PER_UMOL: f64 = 12.011e-6;

/// Solar zenith angle in degrees from the NOAA fractional-year approximation.
/// Values above 90 mean the sun is below the horizon.
pub fn solar_zenith(lat_deg: f64, lon_deg: f64, t: NaiveDateTime) -> f64 {
    let days_in_year = if NaiveDate::from_ymd_opt(t.year(), 2, 29).is_some() { 366.0 } else { 365.0 };
    let hour = t.hour() as f64 + t.minute() as f64 / 60.0 + t.second() as f64 / 3600.0;
    let g = 2.0 * PI / days_in_year * (t.ordinal() as f64 - 1.0 + (hour - 12.0) / 24.0);
    let eqtime = 229.18
        * (0.000075 + 0.001868 * g.cos() - 0.032077 * g.sin() - 0.014615 * (2.0 * g).cos()
            - 0.040849 * (2.0 * g).sin());
    let decl = 0.006918 - 0.399912 * g.cos() + 0.070257 * g.sin() - 0.006758 * (2.0 * g).cos()
        + 0.000907 * (2.0 * g).sin()
        - 0.002697 * (3.0 * g).cos()
        + 0.00148 * (3.0 * g).sin();
    let true_solar_min = hour * 60.0 + eqtime + 4.0 * lon_deg;
    let ha = (true_solar_min / 4.0 - 180.0).to_radians();
    let lat = lat_deg.to_radians();
    let cos_z = lat.sin() * decl.sin() + lat.cos() * decl.cos() * ha.cos();
    cos_z.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Parse an ISO-8601 timestamp as UTC. Offsets are honoured; naive times are taken as UTC.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.naive_utc());
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    Err(Error::Parse(format!("bad timestamp {s:?}")))
}

fn fmt_timestamp(t: NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixelObservation {
    pub pixel_id: String,
    pub field_id: String,
    pub lat: f64,
    pub lon: f64,
    pub timestamp: NaiveDateTime,
    pub sensor: String,
    pub band_ids: Vec<String>,
    /// Reflectance in `band_ids` order.
    pub bands: Vec<f64>,
    pub sza_obs: f64,
}

impl PixelObservation {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Argument(format!("pixel {}: {what}", self.pixel_id)));
        if !(self.lat.abs() <= 90.0) || !(self.lon.abs() <= 180.0) {
            return bad(format!("coordinates ({}, {}) out of range", self.lat, self.lon));
        }
        if !(0.0..90.0).contains(&self.sza_obs) {
            return bad(format!("observation zenith {} outside [0, 90)", self.sza_obs));
        }
        if self.bands.len() != self.band_ids.len() {
            return bad(format!("{} band values for {} bands", self.bands.len(), self.band_ids.len()));
        }
        if let Some((id, v)) = self
            .band_ids
            .iter()
            .zip(&self.bands)
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return bad(format!("reflectance {v} of {id} outside [0, 1]"));
        }
        Ok(())
    }
}

/// Read `pixel_id, field_id, lat, lon, timestamp_utc, sza_obs_deg, band_<id>...`.
/// Every band of `sensor` must be present; other band columns are ignored.
pub fn read_pixels(path: impl AsRef<Path>, sensor: &SensorSpec) -> Result<Vec<PixelObservation>> {
    let path = path.as_ref();
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::Parse(format!("{}: missing column {name:?}", path.display())))
    };
    let (c_pix, c_field, c_lat, c_lon, c_ts, c_sza) = (
        col("pixel_id")?,
        col("field_id")?,
        col("lat")?,
        col("lon")?,
        col("timestamp_utc")?,
        col("sza_obs_deg")?,
    );
    let band_ids: Vec<String> = sensor.bands.iter().map(|b| b.id.clone()).collect();
    let band_cols: Vec<usize> = band_ids
        .iter()
        .map(|b| col(&format!("band_{b}")))
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let num = |c: usize| -> Result<f64> {
            rec[c].trim().parse().map_err(|_| {
                Error::Parse(format!("{} row {}: bad number {:?}", path.display(), line + 2, &rec[c]))
            })
        };
        let obs = PixelObservation {
            pixel_id: rec[c_pix].trim().to_string(),
            field_id: rec[c_field].trim().to_string(),
            lat: num(c_lat)?,
            lon: num(c_lon)?,
            timestamp: parse_timestamp(&rec[c_ts])?,
            sensor: sensor.name.clone(),
            band_ids: band_ids.clone(),
            bands: band_cols.iter().map(|&c| num(c)).collect::<Result<_>>()?,
            sza_obs: num(c_sza)?,
        };
        obs.validate()?;
        out.push(obs);
    }
    Ok(out)
}

/// Meteorology on a 3-hour UTC grid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MeteoSeries {
    steps: BTreeMap<NaiveDateTime, MeteoState>,
}

impl MeteoSeries {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add one step; the timestamp must sit on the 3-hour grid.
    pub fn insert(&mut self, t: NaiveDateTime, m: MeteoState) -> Result<()> {
        if t.hour() % STEP_HOURS != 0 || t.minute() != 0 || t.second() != 0 {
            return Err(Error::Argument(format!("meteo step {t} is not on the 3-hour UTC grid")));
        }
        if self.steps.insert(t, m).is_some() {
            return Err(Error::Argument(format!("duplicate meteo step {t}")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn step_seconds(&self) -> f64 {
        STEP_SECONDS
    }

    pub fn get(&self, t: NaiveDateTime) -> Option<&MeteoState> {
        self.steps.get(&t)
    }

    /// The eight steps 00–21 UTC of `date`; any gap is an error.
    pub fn day(&self, date: NaiveDate) -> Result<Vec<(NaiveDateTime, MeteoState)>> {
        (0..STEPS_PER_DAY)
            .map(|k| {
                let t = date.and_hms_opt(0, 0, 0).expect("midnight exists")
                    + Duration::hours((k as u32 * STEP_HOURS) as i64);
                self.steps
                    .get(&t)
                    .map(|m| (t, *m))
                    .ok_or_else(|| Error::MissingMeteo(fmt_timestamp(t)))
            })
            .collect()
    }
}

/// Read `timestamp_utc, rin_wm2, rli_wm2, ta_c, p_hpa, ea_hpa, u_ms`.
pub fn read_meteo(path: impl AsRef<Path>) -> Result<MeteoSeries> {
    let path = path.as_ref();
    let mut rd = csv::Reader::from_path(path)?;
    let header = rd.headers()?.clone();
    let names = ["timestamp_utc", "rin_wm2", "rli_wm2", "ta_c", "p_hpa", "ea_hpa", "u_ms"];
    let cols: Vec<usize> = names
        .iter()
        .map(|n| {
            header
                .iter()
                .position(|h| h.trim() == *n)
                .ok_or_else(|| Error::Parse(format!("{}: missing column {n:?}", path.display())))
        })
        .collect::<Result<_>>()?;
    let mut series = MeteoSeries::new();
    for (line, rec) in rd.records().enumerate() {
        let rec = rec?;
        let v: Vec<f64> = cols[1..]
            .iter()
            .map(|&c| {
                rec[c].trim().parse().map_err(|_| {
                    Error::Parse(format!("{} row {}: bad number {:?}", path.display(), line + 2, &rec[c]))
                })
            })
            .collect::<Result<_>>()?;
        let m = MeteoState {
            rin: v[0],
            rli: v[1],
            ta: v[2],
            p: v[3],
            ea: v[4],
            u: v[5],
        };
        if v.iter().any(|x| !x.is_finite()) || m.rin < 0.0 {
            return Err(Error::Parse(format!("{} row {}: invalid meteorology", path.display(), line + 2)));
        }
        series.insert(parse_timestamp(&rec[cols[0]])?, m)?;
    }
    Ok(series)
}

pub fn write_meteo(path: impl AsRef<Path>, series: &MeteoSeries) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["timestamp_utc", "rin_wm2", "rli_wm2", "ta_c", "p_hpa", "ea_hpa", "u_ms"])?;
    for (t, m) in &series.steps {
        let mut rec = vec![fmt_timestamp(*t)];
        rec.extend(m.as_array().iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_pixels(path: impl AsRef<Path>, obs: &[PixelObservation]) -> Result<()> {
    let path = path.as_ref();
    let Some(first) = obs.first() else {
        return Err(Error::Argument("no pixels to write".into()));
    };
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["pixel_id", "field_id", "lat", "lon", "timestamp_utc", "sza_obs_deg"]
        .map(String::from)
        .to_vec();
    header.extend(first.band_ids.iter().map(|b| format!("band_{b}")));
    w.write_record(&header)?;
    for o in obs {
        if o.band_ids != first.band_ids {
            return Err(Error::Argument("pixels mix band layouts".into()));
        }
        let mut rec = vec![
            o.pixel_id.clone(),
            o.field_id.clone(),
            fmt_f64(o.lat),
            fmt_f64(o.lon),
            fmt_timestamp(o.timestamp),
            fmt_f64(o.sza_obs),
        ];
        rec.extend(o.bands.iter().map(|&v| fmt_f64(v)));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyGppRecord {
    pub pixel_id: String,
    pub field_id: String,
    pub date: NaiveDate,
    /// µmol CO₂ m⁻² s⁻¹ per step; `None` where the step was skipped.
    pub step_gpp: [Option<f64>; STEPS_PER_DAY],
    /// gC m⁻² d⁻¹.
    pub gpp_daily: f64,
    pub steps_used: usize,
}

/// Integrate per-step GPP (µmol m⁻² s⁻¹) to gC m⁻² d⁻¹.
pub fn integrate_daily(step_gpp: &[f64]) -> f64 {
    step_gpp.iter().sum::<f64>() * STEP_SECONDS * GC_PER_UMOL
}

fn check_sensor(obs: &PixelObservation, model: &TrainedModel) -> Result<()> {
    let p = model.preprocessor();
    if p.sensor != obs.sensor || p.band_ids != obs.band_ids {
        return Err(Error::SensorMismatch {
            model: p.sensor.clone(),
            observation: obs.sensor.clone(),
        });
    }
    Ok(())
}

/// Per-step GPP for one observation and its day of meteorology.
pub fn predict_daily(obs: &PixelObservation, meteo: &MeteoSeries, model: &TrainedModel) -> Result<DailyGppRecord> {
    check_sensor(obs, model)?;
    let gpp_col = model
        .target_index(Target::Gpp)
        .ok_or_else(|| Error::Argument("model does not predict gpp".into()))?;
    let date = obs.timestamp.date();
    let day = meteo.day(date)?;
    let bands = normalize_spectrum(&obs.bands)?;

    let mut used = Vec::new();
    let mut rows = Vec::new();
    for (k, (t, m)) in day.iter().enumerate() {
        let sza = solar_zenith(obs.lat, obs.lon, *t);
        if m.rin > 0.0 && sza < 90.0 {
            let mut f = bands.clone();
            f.push(obs.sza_obs);
            f.push(sza);
            f.extend_from_slice(&m.as_array());
            rows.push(f);
            used.push(k);
        }
    }

    let mut step_gpp = [None; STEPS_PER_DAY];
    if !rows.is_empty() {
        let pred = model.predict(&Matrix::from_rows(&rows)?)?;
        for (i, &k) in used.iter().enumerate() {
            let g = pred.row(i)[gpp_col];
            if !g.is_finite() {
                return Err(Error::Numerical {
                    scenario_id: 0,
                    msg: format!("pixel {}: non-finite prediction", obs.pixel_id),
                });
            }
            step_gpp[k] = Some(g.max(0.0));
        }
    }
    let values: Vec<f64> = step_gpp.iter().flatten().copied().collect();
    Ok(DailyGppRecord {
        pixel_id: obs.pixel_id.clone(),
        field_id: obs.field_id.clone(),
        date,
        step_gpp,
        gpp_daily: integrate_daily(&values),
        steps_used: values.len(),
    })
}

/// Predict every observation in parallel; output ordered by (field, pixel, date).
/// The first failing observation in input order determines the error.
pub fn predict_all(obs: &[PixelObservation], meteo: &MeteoSeries, model: &TrainedModel) -> Result<Vec<DailyGppRecord>> {
    let results: Vec<Result<DailyGppRecord>> = obs.par_iter().map(|o| predict_daily(o, meteo, model)).collect();
    let mut out = results.into_iter().collect::<Result<Vec<_>>>()?;
    out.sort_by(|a, b| (&a.field_id, &a.pixel_id, a.date).cmp(&(&b.field_id, &b.pixel_id, b.date)));
    Ok(out)
}

pub fn step_columns() -> Vec<String> {
    (0..STEPS_PER_DAY).map(|k| format!("gpp_step_{:02}", k as u32 * STEP_HOURS)).collect()
}

/// `pixel_id, field_id, date, gpp_gc_m2_d, steps_used, gpp_step_00 ... gpp_step_21`.
pub fn write_daily_csv(path: impl AsRef<Path>, records: &[DailyGppRecord]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = ["pixel_id", "field_id", "date", "gpp_gc_m2_d", "steps_used"]
        .map(String::from)
        .to_vec();
    header.extend(step_columns());
    w.write_record(&header)?;
    for r in records {
        let mut rec = vec![
            r.pixel_id.clone(),
            r.field_id.clone(),
            r.date.to_string(),
            fmt_f64(r.gpp_daily),
            r.steps_used.to_string(),
        ];
        rec.extend(r.step_gpp.iter().map(|s| s.map(fmt_f64).unwrap_or_default()));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMean {
    pub field_id: String,
    pub date: NaiveDate,
    pub gpp: f64,
    pub n_pixels: usize,
}

/// Mean daily GPP of the pixels of one field on one date.
pub fn aggregate_field(records: &[DailyGppRecord]) -> Result<FieldMean> {
    let first = records
        .first()
        .ok_or_else(|| Error::Argument("no records to aggregate".into()))?;
    if records.iter().any(|r| r.field_id != first.field_id || r.date != first.date) {
        return Err(Error::Argument("records span more than one field and date".into()));
    }
    Ok(FieldMean {
        field_id: first.field_id.clone(),
        date: first.date,
        gpp: records.iter().map(|r| r.gpp_daily).sum::<f64>() / records.len() as f64,
        n_pixels: records.len(),
    })
}

/// Field means for every (field, date) present, in that order.
pub fn aggregate_fields(records: &[DailyGppRecord]) -> Vec<FieldMean> {
    let mut groups: BTreeMap<(&str, NaiveDate), Vec<DailyGppRecord>> = BTreeMap::new();
    for r in records {
        groups.entry((r.field_id.as_str(), r.date)).or_default().push(r.clone());
    }
    groups
        .values()
        .map(|g| aggregate_field(g).expect("groups are non-empty and homogeneous"))
        .collect()
}

/// `field_id, date, gpp_gc_m2_d, n_pixels`.
pub fn write_field_csv(path: impl AsRef<Path>, means: &[FieldMean]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["field_id", "date", "gpp_gc_m2_d", "n_pixels"])?;
    for m in means {
        w.write_record([m.field_id.clone(), m.date.to_string(), fmt_f64(m.gpp), m.n_pixels.to_string()])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
