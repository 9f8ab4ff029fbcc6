//! PAWN density-based sensitivity analysis.
//!
//! Model runs are stored in [`PawnSamples`] so that several output
//! sub-ranges can be analysed from one set of simulations.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forward_sim::{simulate, Geometry, MeteoState, VcmaxMode};
use crate::numfmt::fmt_f64;
use crate::sampling::{lhs_sample, scenario_from_row, ParameterSpace};

/// Smallest sample kept on either side of a KS comparison in sub-range mode.
pub const MIN_SUBRANGE_SAMPLES: usize = 10;

/// Two-sample Kolmogorov–Smirnov distance between empirical CDFs.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("KS statistic needs two non-empty samples".into()));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(ks_sorted(&a, &b))
}

fn ks_sorted(a: &[f64], b: &[f64]) -> f64 {
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Asymptotic two-sample KS coefficient c(α) = sqrt(−ln(α/2)/2).
pub fn ks_coefficient(alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt()
}

/// Critical KS distance for one comparison of samples of size `n1` and `n2`.
pub fn ks_critical(alpha: f64, n1: usize, n2: usize) -> f64 {
    let (n1, n2) = (n1 as f64, n2 as f64);
    ks_coefficient(alpha) * ((n1 + n2) / (n1 * n2)).sqrt()
}

/// Per-comparison level giving family-wise level `alpha` over `m` comparisons.
pub fn sidak_level(alpha: f64, m: usize) -> f64 {
    1.0 - (1.0 - alpha).powf(1.0 / m.max(1) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PawnConfig {
    pub nu: usize,
    pub nc: usize,
    pub n_cond: usize,
    pub seed: u64,
    /// Output interval (lo, hi] both samples are restricted to.
    pub subrange: Option<(f64, f64)>,
    /// Also evaluate an extra input the model ignores.
    pub dummy: bool,
    pub alpha: f64,
}

impl Default for PawnConfig {
    fn default() -> Self {
        Self {
            nu: 1000,
            nc: 400,
            n_cond: 30,
            seed: 0,
            subrange: None,
            dummy: true,
            alpha: 0.05,
        }
    }
}

impl PawnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nu < 2 || self.nc < 2 || self.n_cond < 2 {
            return Err(Error::Argument("nu, nc and n_cond must all be at least 2".into()));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::Argument(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        if let Some((lo, hi)) = self.subrange {
            if !(lo < hi) {
                return Err(Error::Argument(format!("empty sub-range ({lo}, {hi}]")));
            }
        }
        Ok(())
    }

    /// Total number of model runs.
    pub fn budget(&self, n_inputs: usize) -> usize {
        let m = n_inputs + usize::from(self.dummy);
        self.nu + m * self.n_cond * self.nc
    }
}

/// Model outputs of one PAWN design. Failed runs are stored as NaN.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PawnSamples {
    pub names: Vec<String>,
    pub nu: usize,
    pub nc: usize,
    pub n_cond: usize,
    pub unconditional: Vec<f64>,
    /// `conditional[i][k]`: outputs with input `i` fixed at `cond_values[i][k]`.
    pub conditional: Vec<Vec<Vec<f64>>>,
    pub cond_values: Vec<Vec<f64>>,
    /// Outputs for the unused extra input, one sample per conditioning value.
    pub dummy: Option<Vec<Vec<f64>>>,
    pub failed: usize,
}

fn cond_seed(seed: u64, input: usize, k: usize) -> u64 {
    let tag = ((input as u64 + 1) << 32) | k as u64;
    seed ^ tag.wrapping_mul(0xD134_2543_DE82_EF95)
}

/// Run the model over the unconditional and all conditional designs.
pub fn pawn_evaluate<F>(model: F, space: &ParameterSpace, cfg: &PawnConfig) -> Result<PawnSamples>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    cfg.validate()?;
    space.validate()?;
    let m = space.len();
    let unc_design = lhs_sample(space, cfg.nu, cfg.seed)?;

    let mut cond_values = Vec::with_capacity(m);
    let mut designs: Vec<Vec<Vec<f64>>> = Vec::new();
    for (i, dim) in space.dims.iter().enumerate() {
        let rest = space.without(i);
        let values: Vec<f64> = (0..cfg.n_cond)
            .map(|k| dim.min + (dim.max - dim.min) * k as f64 / (cfg.n_cond - 1) as f64)
            .collect();
        for (k, &v) in values.iter().enumerate() {
            let design = if rest.is_empty() {
                vec![Vec::new(); cfg.nc]
            } else {
                lhs_sample(&rest, cfg.nc, cond_seed(cfg.seed, i, k))?
            };
            designs.push(
                design
                    .into_iter()
                    .map(|mut r| {
                        r.insert(i, v);
                        r
                    })
                    .collect(),
            );
        }
        cond_values.push(values);
    }
    if cfg.dummy {
        for k in 0..cfg.n_cond {
            designs.push(lhs_sample(space, cfg.nc, cond_seed(cfg.seed, m, k))?);
        }
    }

    let run = |rows: &[Vec<f64>]| -> Vec<f64> {
        rows.par_iter()
            .map(|r| model(r).ok().filter(|y| y.is_finite()).unwrap_or(f64::NAN))
            .collect()
    };
    let unconditional = run(&unc_design);
    let mut outputs: Vec<Vec<f64>> = designs.iter().map(|d| run(d)).collect();
    let failed = unconditional
        .iter()
        .chain(outputs.iter().flatten())
        .filter(|y| y.is_nan())
        .count();

    let dummy = cfg.dummy.then(|| outputs.split_off(m * cfg.n_cond));
    let mut it = outputs.into_iter();
    let conditional = (0..m).map(|_| it.by_ref().take(cfg.n_cond).collect()).collect();
    Ok(PawnSamples {
        names: space.names().into_iter().map(String::from).collect(),
        nu: cfg.nu,
        nc: cfg.nc,
        n_cond: cfg.n_cond,
        unconditional,
        conditional,
        cond_values,
        dummy,
        failed,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PawnResult {
    pub names: Vec<String>,
    /// Max KS over conditioning values, per input.
    pub indices: Vec<f64>,
    /// KS per input and conditioning value; NaN where a sub-range left too few samples.
    pub ks: Vec<Vec<f64>>,
    /// True when some conditioning value of the input exceeds its critical distance.
    pub above_threshold: Vec<bool>,
    /// Critical distance at the mean conditional sample size kept.
    pub threshold: f64,
    pub dummy_index: Option<f64>,
    pub subrange: Option<(f64, f64)>,
    /// Unconditional outputs used after sub-range filtering.
    pub n_unconditional: usize,
    pub failed: usize,
}

impl PawnResult {
    /// Input order by decreasing index.
    pub fn ranking(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.indices.len()).collect();
        order.sort_by(|&a, &b| self.indices[b].total_cmp(&self.indices[a]).then(a.cmp(&b)));
        order
    }

    pub fn index_of(&self, name: &str) -> Option<f64> {
        self.names.iter().position(|n| n == name).map(|i| self.indices[i])
    }

    pub fn n_above(&self) -> usize {
        self.above_threshold.iter().filter(|&&b| b).count()
    }
}

fn keep(values: &[f64], subrange: Option<(f64, f64)>) -> Vec<f64> {
    let mut v: Vec<f64> = values
        .iter()
        .copied()
        .filter(|y| !y.is_nan())
        .filter(|&y| subrange.is_none_or(|(lo, hi)| y > lo && y <= hi))
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Indices from stored runs. Critical distances use the family-wise level
/// `alpha` over the conditioning values of one input.
pub fn pawn_indices_from(
    samples: &PawnSamples,
    subrange: Option<(f64, f64)>,
    alpha: f64,
) -> Result<PawnResult> {
    let level = sidak_level(alpha, samples.n_cond);
    let min_n = if subrange.is_some() { MIN_SUBRANGE_SAMPLES } else { 1 };
    let unc = keep(&samples.unconditional, subrange);
    if unc.len() < min_n.max(1) {
        return Err(Error::InsufficientData {
            input: "unconditional sample".into(),
            detail: format!("{} outputs left in the sub-range", unc.len()),
        });
    }
    let score = |groups: &[Vec<f64>], name: &str| -> Result<(Vec<f64>, f64, bool)> {
        let mut ks = Vec::with_capacity(groups.len());
        let mut above = false;
        for g in groups {
            let c = keep(g, subrange);
            if c.len() < min_n || c.is_empty() {
                ks.push(f64::NAN);
                continue;
            }
            let d = ks_sorted(&unc, &c);
            above |= d > ks_critical(level, unc.len(), c.len());
            ks.push(d);
        }
        let index = ks.iter().copied().filter(|d| !d.is_nan()).fold(f64::NAN, f64::max);
        if index.is_nan() {
            return Err(Error::InsufficientData {
                input: name.to_string(),
                detail: format!(
                    "every conditioning value left fewer than {min_n} outputs in the sub-range"
                ),
            });
        }
        Ok((ks, index, above))
    };
    let mut indices = Vec::new();
    let mut ks_all = Vec::new();
    let mut above_threshold = Vec::new();
    for (name, groups) in samples.names.iter().zip(&samples.conditional) {
        let (ks, index, above) = score(groups, name)?;
        indices.push(index);
        ks_all.push(ks);
        above_threshold.push(above);
    }
    let dummy_index = match &samples.dummy {
        Some(groups) => Some(score(groups, "dummy")?.1),
        None => None,
    };
    let kept: Vec<usize> = samples
        .conditional
        .iter()
        .flatten()
        .map(|g| keep(g, subrange).len())
        .filter(|&n| n >= min_n && n > 0)
        .collect();
    let typical_nc = (kept.iter().sum::<usize>() as f64 / kept.len().max(1) as f64).round() as usize;
    Ok(PawnResult {
        names: samples.names.clone(),
        indices,
        ks: ks_all,
        above_threshold,
        threshold: ks_critical(level, unc.len(), typical_nc.max(1)),
        dummy_index,
        subrange,
        n_unconditional: unc.len(),
        failed: samples.failed,
    })
}

/// Evaluate the model and compute indices in one step.
pub fn pawn_indices<F>(model: F, space: &ParameterSpace, cfg: &PawnConfig) -> Result<PawnResult>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let samples = pawn_evaluate(model, space, cfg)?;
    pawn_indices_from(&samples, cfg.subrange, cfg.alpha)
}

/// Canopy GPP of a design row, with fixed meteorology and solar zenith.
pub fn gpp_model(
    space: &ParameterSpace,
    meteo: MeteoState,
    sza: f64,
    vcmax_mode: VcmaxMode,
) -> impl Fn(&[f64]) -> Result<f64> + Sync + '_ {
    move |row: &[f64]| {
        let s = scenario_from_row(space, row, 0, vcmax_mode);
        let meteo = if crate::sampling::METEO_NAMES.iter().any(|n| space.index_of(n).is_some()) {
            s.meteo
        } else {
            meteo
        };
        Ok(simulate(&s.scenario, &meteo, &Geometry::single(sza), vcmax_mode)?.gpp)
    }
}


/// CSV report: one row per input with the full-range index, rank and flag,
/// followed by index and flag columns for every sub-range result.
pub fn write_report(path: impl AsRef<Path>, full: &PawnResult, subranges: &[PawnResult]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec![
        "input".to_string(),
        "index".into(),
        "rank".into(),
        "below_threshold".into(),
    ];
    for s in subranges {
        let (lo, hi) = s.subrange.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
        let tag = format!("{}_{}", fmt_f64(lo), fmt_f64(hi));
        header.push(format!("index_{tag}"));
        header.push(format!("below_threshold_{tag}"));
    }
    w.write_record(&header)?;
    let mut rank = vec![0; full.names.len()];
    for (r, &i) in full.ranking().iter().enumerate() {
        rank[i] = r + 1;
    }
    let flag = |b: bool| if b { "0" } else { "1" }.to_string();
    for (i, name) in full.names.iter().enumerate() {
        let mut rec = vec![
            name.clone(),
            fmt_f64(full.indices[i]),
            rank[i].to_string(),
            flag(full.above_threshold[i]),
        ];
        for s in subranges {
            rec.push(fmt_f64(s.indices[i]));
            rec.push(flag(s.above_threshold[i]));
        }
        w.write_record(&rec)?;
    }
    let mut tail = vec![
        "threshold".to_string(),
        fmt_f64(full.threshold),
        String::new(),
        String::new(),
    ];
    for s in subranges {
        tail.push(fmt_f64(s.threshold));
        tail.push(String::new());
    }
    w.write_record(&tail)?;
    if let Some(d) = full.dummy_index {
        let mut rec = vec!["dummy".to_string(), fmt_f64(d), String::new(), String::new()];
        for s in subranges {
            rec.push(s.dummy_index.map(fmt_f64).unwrap_or_default());
            rec.push(String::new());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
