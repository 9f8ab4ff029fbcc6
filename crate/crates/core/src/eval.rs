//! Agreement metrics between predicted and reference daily GPP.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;

/// Summary statistics of `pred` against `reference`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n: usize,
    /// Squared Pearson correlation.
    pub r2: f64,
    /// Coefficient of determination of `pred` as a predictor of `reference`.
    pub r2_one_to_one: f64,
    /// Least-squares line of `pred` on `reference`.
    pub slope: f64,
    pub intercept: f64,
    pub rmse: f64,
    /// Mean of `pred − reference`.
    pub bias: f64,
}

fn check_pair(pred: &[f64], reference: &[f64]) -> Result<()> {
    if pred.len() != reference.len() {
        return Err(Error::Shape {
            expected: reference.len(),
            got: pred.len(),
        });
    }
    if pred.len() < 2 {
        return Err(Error::Argument("metrics need at least two pairs".into()));
    }
    Ok(())
}

pub fn rmse(pred: &[f64], reference: &[f64]) -> f64 {
    let sse: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    (sse / pred.len() as f64).sqrt()
}

pub fn bias(pred: &[f64], reference: &[f64]) -> f64 {
    pred.iter().zip(reference).map(|(p, r)| p - r).sum::<f64>() / pred.len() as f64
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// 1 − SSE/SST. Negative when `pred` is worse than the reference mean.
pub fn coefficient_of_determination(pred: &[f64], reference: &[f64]) -> f64 {
    let m = mean(reference);
    let sst: f64 = reference.iter().map(|r| (r - m).powi(2)).sum();
    let sse: f64 = pred.iter().zip(reference).map(|(p, r)| (p - r).powi(2)).sum();
    1.0 - sse / sst
}

/// Squared Pearson correlation; zero when `pred` is constant.
pub fn pearson_r2(pred: &[f64], reference: &[f64]) -> f64 {
    let (mp, mr) = (mean(pred), mean(reference));
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    let mut syy = 0.0;
    for (p, r) in pred.iter().zip(reference) {
        sxy += (p - mp) * (r - mr);
        sxx += (p - mp).powi(2);
        syy += (r - mr).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return 0.0;
    }
    (sxy * sxy / (sxx * syy)).min(1.0)
}

pub fn metrics(pred: &[f64], reference: &[f64]) -> Result<Metrics> {
    check_pair(pred, reference)?;
    let rmse = rmse(pred, reference);
    let bias = bias(pred, reference);
    let mr = mean(reference);
    let mp = mean(pred);
    let syy: f64 = reference.iter().map(|r| (r - mr).powi(2)).sum();
    if syy == 0.0 {
        return Err(Error::UndefinedR2 { rmse, bias });
    }
    let sxy: f64 = pred.iter().zip(reference).map(|(p, r)| (p - mp) * (r - mr)).sum();
    let slope = sxy / syy;
    Ok(Metrics {
        n: pred.len(),
        r2: pearson_r2(pred, reference),
        r2_one_to_one: coefficient_of_determination(pred, reference),
        slope,
        intercept: mp - slope * mr,
        rmse,
        bias,
    })
}

/// Metrics for one field; `r2` fields are absent when the reference is constant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldEval {
    pub field_id: String,
    pub n: usize,
    pub r2: Option<f64>,
    pub rmse: f64,
    pub bias: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub overall: Metrics,
    pub fields: Vec<FieldEval>,
}

/// One daily GPP value keyed by field and date.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldDay {
    pub field_id: String,
    pub date: String,
    pub gpp: f64,
}

/// Join predictions to references on (field, date) and score them.
/// Several predictions for one (field, date), e.g. one per pixel, are averaged first.
pub fn evaluate(pred: &[FieldDay], reference: &[FieldDay]) -> Result<EvalReport> {
    let mut sums: BTreeMap<(&str, &str), (f64, usize)> = BTreeMap::new();
    for p in pred {
        let e = sums.entry((p.field_id.as_str(), p.date.as_str())).or_default();
        e.0 += p.gpp;
        e.1 += 1;
    }
    let lookup: BTreeMap<(&str, &str), f64> = sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    let mut per_field: BTreeMap<&str, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    let (mut all_p, mut all_r) = (Vec::new(), Vec::new());
    for r in reference {
        if let Some(&p) = lookup.get(&(r.field_id.as_str(), r.date.as_str())) {
            let e = per_field.entry(r.field_id.as_str()).or_default();
            e.0.push(p);
            e.1.push(r.gpp);
            all_p.push(p);
            all_r.push(r.gpp);
        }
    }
    if all_p.len() < 2 {
        return Err(Error::InsufficientData {
            input: "reference".into(),
            detail: format!("{} (field, date) pairs match the predictions", all_p.len()),
        });
    }
    let overall = metrics(&all_p, &all_r)?;
    let fields = per_field
        .into_iter()
        .map(|(id, (p, r))| FieldEval {
            field_id: id.to_string(),
            n: p.len(),
            r2: if p.len() >= 2 { metrics(&p, &r).ok().map(|m| m.r2) } else { None },
            rmse: rmse(&p, &r),
            bias: bias(&p, &r),
        })
        .collect();
    Ok(EvalReport { overall, fields })
}

/// Read `field_id, date, gpp_gc_m2_d` rows.
pub fn read_field_days(path: impl AsRef<Path>) -> Result<Vec<FieldDay>> {
    let mut rd = csv::Reader::from_path(path.as_ref())?;
    let header = rd.headers()?.clone();
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Parse(format!("reference CSV is missing column {name:?}")))
    };
    let (f, d, g) = (col("field_id")?, col("date")?, col("gpp_gc_m2_d")?);
    let mut out = Vec::new();
    for rec in rd.records() {
        let rec = rec?;
        let gpp = rec[g]
            .trim()
            .parse()
            .map_err(|_| Error::Parse(format!("bad GPP value {:?}", &rec[g])))?;
        out.push(FieldDay {
            field_id: rec[f].to_string(),
            date: rec[d].to_string(),
            gpp,
        });
    }
    Ok(out)
}

impl EvalReport {
    /// Plain-text table of the overall and per-field scores.
    pub fn to_table(&self) -> String {
        let m = &self.overall;
        let mut s = format!(
            "n = {}\nr2 = {:.4}\nr2 (1:1) = {:.4}\nslope = {:.4}\nintercept = {:.4}\nrmse = {:.4} gC m-2 d-1\nbias = {:.4} gC m-2 d-1\n\n",
            m.n, m.r2, m.r2_one_to_one, m.slope, m.intercept, m.rmse, m.bias
        );
        s.push_str(&format!("{:<16} {:>5} {:>8} {:>8} {:>8}\n", "field", "n", "r2", "rmse", "bias"));
        for f in &self.fields {
            let r2 = f.r2.map_or("-".to_string(), |v| format!("{v:.4}"));
            s.push_str(&format!(
                "{:<16} {:>5} {:>8} {:>8.4} {:>8.4}\n",
                f.field_id, f.n, r2, f.rmse, f.bias
            ));
        }
        s
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Write `field_id, date, gpp_gc_m2_d` rows.
pub fn write_field_days(path: impl AsRef<Path>, rows: &[FieldDay]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["field_id", "date", "gpp_gc_m2_d"])?;
    for r in rows {
        w.write_record([r.field_id.clone(), r.date.clone(), fmt_f64(r.gpp)])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
