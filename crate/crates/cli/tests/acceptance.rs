//! Acceptance run. Prints one PASS/FAIL line per criterion and exits non-zero
//! if any fails. Criteria can be selected by number:
//! `cargo test --release --test acceptance -- 2 7`.

mod common;
#[path = "../../core/tests/common/mod.rs"]
mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use common::{hgpp_ok, scene};
use hgpp_core::baselines::{compute_vi, ViBands, ViKind};
use hgpp_core::forward_sim::canopy::CanopyMedium;
use hgpp_core::forward_sim::spectrum::index_of;
use hgpp_core::forward_sim::{MeteoState, VcmaxMode, N_LAYERS};
use hgpp_core::gsa::{gpp_model, ks_statistic, pawn_evaluate, pawn_indices, pawn_indices_from, PawnConfig};
use hgpp_core::ml::forest::{fit_forest, ForestHyper};
use hgpp_core::ml::mlp::{fit_mlp, mlp_gradient_check, MlpHyper, MlpModel, MlpNet};
use hgpp_core::ml::{save_model, PreparedData, Preprocessor, Target, TrainReport, TrainedModel};
use hgpp_core::pipeline::{parse_timestamp, predict_daily, MeteoSeries, PixelObservation};
use hgpp_core::sampling::{generate_training_set, CorpusConfig, ParameterSpace, TrainingSet};
use hgpp_core::spectral::{MinMaxScaler, SensorSpec};
use oracle::{monte_carlo, random_scenario};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SPLIT_SEED: u64 = 7;
const CORPUS_SEED: u64 = 1;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

struct Ctx {
    dir: tempfile::TempDir,
    corpus: OnceLock<(TrainingSet, f64)>,
    gpp_lai: OnceLock<(TrainedModel, TrainReport, f64)>,
}

impl Ctx {
    fn corpus(&self) -> &TrainingSet {
        &self
            .corpus
            .get_or_init(|| {
                let t = Instant::now();
                let cfg = CorpusConfig {
                    n_main: 50_000,
                    n_lowlai: 3_000,
                    seed: CORPUS_SEED,
                    vcmax_mode: VcmaxMode::CabCoupled,
                };
                let set = generate_training_set(&ParameterSpace::full(), &SensorSpec::sentinel2(), &cfg).unwrap();
                (set, t.elapsed().as_secs_f64())
            })
            .0
    }

    fn gpp_lai(&self) -> &(TrainedModel, TrainReport, f64) {
        self.gpp_lai.get_or_init(|| {
            let set = self.corpus();
            let t = Instant::now();
            let (model, report) = fit(set, &[Target::Gpp, Target::Lai], 1);
            save_model(&model, self.dir.path().join("gpp_lai.json")).unwrap();
            (model, report, t.elapsed().as_secs_f64())
        })
    }
}

fn fit(set: &TrainingSet, targets: &[Target], seed: u64) -> (TrainedModel, TrainReport) {
    let data = PreparedData::new(set, targets, SPLIT_SEED).unwrap();
    let hyper = MlpHyper {
        hidden: vec![20, 12],
        seed,
        ..MlpHyper::default()
    };
    let (model, report) = fit_mlp(&data, &hyper).unwrap();
    (TrainedModel::Mlp(model), report)
}

fn r2_test(report: &TrainReport, target: Target) -> f64 {
    report.score(target).unwrap().r2_test
}

fn synthetic_self_skill(ctx: &Ctx) -> Outcome {
    let set = ctx.corpus();
    let (_, report, train_s) = ctx.gpp_lai();
    let corpus_s = ctx.corpus.get().unwrap().1;
    let r2 = r2_test(report, Target::Gpp);
    let total = corpus_s + train_s;
    outcome(
        r2 >= 0.90 && total < 1800.0,
        format!(
            "{} rows, held-out gpp r² {r2:.4} (≥ 0.90), lai r² {:.4}, weights of epoch {} of {}, corpus {corpus_s:.0} s + training {train_s:.0} s (< 1800 s)",
            set.rows.len(),
            r2_test(report, Target::Lai),
            report.best_epoch,
            report.epochs_run
        ),
    )
}

fn sensitivity_ranking(_: &Ctx) -> Outcome {
    let space = ParameterSpace::vegetation();
    let cfg = PawnConfig {
        nu: 500,
        nc: 100,
        n_cond: 10,
        seed: 1,
        ..PawnConfig::default()
    };
    let t = Instant::now();
    let model = gpp_model(&space, MeteoState::default(), 30.0, VcmaxMode::CabCoupled);
    let res = pawn_indices(model, &space, &cfg).unwrap();
    let secs = t.elapsed().as_secs_f64();
    let order = res.ranking();
    let top: Vec<&str> = order.iter().take(3).map(|&i| res.names[i].as_str()).collect();
    let soil = ["smc", "brightness", "lat", "lon"];
    let soil_above: Vec<&str> = soil
        .iter()
        .copied()
        .filter(|s| res.above_threshold[space.index_of(s).unwrap()])
        .collect();
    let soil_max = soil.iter().map(|s| res.index_of(s).unwrap()).fold(0.0, f64::max);
    outcome(
        top[0] == "lai" && top[1] == "cab" && soil_above.is_empty() && secs < 1200.0,
        format!(
            "top three {top:?} (lai {:.3}, cab {:.3}); soil max index {soil_max:.3}, threshold {:.3}, dummy {:.3}, soil above: {soil_above:?}; {secs:.0} s (< 1200 s)",
            res.indices[order[0]],
            res.indices[order[1]],
            res.threshold,
            res.dummy_index.unwrap_or(f64::NAN),
        ),
    )
}

fn subrange_divergence(_: &Ctx) -> Outcome {
    let space = ParameterSpace::vegetation();
    let cfg = PawnConfig {
        seed: 1,
        ..PawnConfig::default()
    };
    let model = gpp_model(&space, MeteoState::default(), 30.0, VcmaxMode::CabCoupled);
    let samples = pawn_evaluate(model, &space, &cfg).unwrap();
    let count = |lo: f64, hi: f64| {
        let r = pawn_indices_from(&samples, Some((lo, hi)), cfg.alpha).unwrap();
        let above: Vec<String> = r
            .names
            .iter()
            .zip(&r.above_threshold)
            .filter(|(n, &a)| a && n.as_str() != "hc")
            .map(|(n, _)| n.clone())
            .collect();
        (above, r.n_unconditional)
    };
    let (high, n_high) = count(20.0, f64::INFINITY);
    let (low, n_low) = count(f64::NEG_INFINITY, 5.0);
    outcome(
        high.len() > low.len(),
        format!(
            "{}/{}/{} design; GPP > 20: {} inputs above threshold {high:?} (n = {n_high}); GPP < 5: {} {low:?} (n = {n_low})",
            cfg.nu,
            cfg.nc,
            cfg.n_cond,
            high.len(),
            low.len()
        ),
    )
}

fn retrieval_ordering(ctx: &Ctx) -> Outcome {
    let set = ctx.corpus();
    let fpar = r2_test(&fit(set, &[Target::Fpar], 1).1, Target::Fpar);
    let lai = r2_test(&fit(set, &[Target::Lai], 1).1, Target::Lai);
    outcome(
        fpar - lai >= 0.05,
        format!("test r² fpar {fpar:.4}, lai {lai:.4}, margin {:.4} (≥ 0.05)", fpar - lai),
    )
}

fn band_subset_penalty(ctx: &Ctx) -> Outcome {
    let s2 = ctx.corpus();
    let l8 = s2.select_bands(&SensorSpec::landsat8()).unwrap();
    let seeds = [1u64, 2, 3];
    let (mut full, mut subset) = (Vec::new(), Vec::new());
    for &seed in &seeds {
        full.push(r2_test(&fit(s2, &[Target::Gpp], seed).1, Target::Gpp));
        subset.push(r2_test(&fit(&l8, &[Target::Gpp], seed).1, Target::Gpp));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let (mf, ms) = (mean(&full), mean(&subset));
    outcome(
        ms <= mf,
        format!(
            "mean held-out gpp r² over seeds {seeds:?}: {} bands {ms:.4} {subset:.4?}, {} bands {mf:.4} {full:.4?}, margin {:.4}",
            l8.n_features() - 8,
            s2.n_features() - 8,
            mf - ms
        ),
    )
}

fn forest_overfit(ctx: &Ctx) -> Outcome {
    let data = PreparedData::new(ctx.corpus(), &[Target::Gpp], SPLIT_SEED).unwrap();
    let hyper = ForestHyper {
        seed: 1,
        ..ForestHyper::default()
    };
    let (_, report) = fit_forest(&data, &hyper).unwrap();
    let s = report.score(Target::Gpp).unwrap();
    outcome(
        s.r2_train - s.r2_test >= 0.03,
        format!(
            "{} trees on {} rows: train r² {:.4}, test r² {:.4}, gap {:.4} (≥ 0.03)",
            hyper.trees,
            report.n_train,
            s.r2_train,
            s.r2_test,
            s.r2_train - s.r2_test
        ),
    )
}

/// Network whose output is `value` everywhere.
fn constant_model(sensor: &SensorSpec, value: f64) -> TrainedModel {
    let band_ids: Vec<String> = sensor.bands.iter().map(|b| b.id.clone()).collect();
    let width = band_ids.len() + 8;
    TrainedModel::Mlp(MlpModel {
        preprocessor: Preprocessor {
            sensor: sensor.name.clone(),
            feature_names: (0..width).map(|i| format!("f{i}")).collect(),
            band_ids,
            targets: vec![Target::Gpp],
            scaler: MinMaxScaler {
                min: vec![0.0; width],
                max: vec![1.0; width],
            },
        },
        target_mean: vec![value],
        target_std: vec![1.0],
        net: MlpNet::zeros(&[width, 4, 1]).unwrap(),
    })
}

fn unit_conversion_example() -> f64 {
    let s2 = SensorSpec::sentinel2();
    let mut meteo = MeteoSeries::new();
    for (k, rin) in [0.0, 200.0, 700.0, 800.0, 300.0, 0.0, 0.0, 0.0].into_iter().enumerate() {
        let t = parse_timestamp(&format!("2020-07-01T{:02}:00:00Z", 3 * k)).unwrap();
        meteo
            .insert(
                t,
                MeteoState {
                    rin,
                    ..MeteoState::default()
                },
            )
            .unwrap();
    }
    let obs = PixelObservation {
        pixel_id: "p".into(),
        field_id: "f".into(),
        lat: 30.0,
        lon: 55.0,
        timestamp: parse_timestamp("2020-07-01T07:00:00Z").unwrap(),
        sensor: s2.name.clone(),
        band_ids: s2.bands.iter().map(|b| b.id.clone()).collect(),
        bands: vec![0.1; s2.n_bands()],
        sza_obs: 35.0,
    };
    let rec = predict_daily(&obs, &meteo, &constant_model(&s2, 10.0)).unwrap();
    assert_eq!(rec.steps_used, 4);
    rec.gpp_daily
}

fn numerical_oracles(_: &Ctx) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checks: Vec<(bool, String)> = Vec::new();

    let mut grad: f64 = 0.0;
    for (k, hidden) in [&[12, 12][..], &[20, 20], &[20, 12], &[12, 12, 12], &[40, 20, 12]].iter().enumerate() {
        let mut sizes = vec![18];
        sizes.extend_from_slice(hidden);
        sizes.push(2);
        let net = MlpNet::random(&sizes, k as u64).unwrap();
        for _ in 0..3 {
            let x: Vec<f64> = (0..18).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            grad = grad.max(mlp_gradient_check(&net, &x, &y, 1e-5).unwrap());
        }
    }
    checks.push((grad < 1e-4, format!("gradient rel. error {grad:.1e}")));

    let ks = [
        ks_statistic(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(),
        ks_statistic(&[0.0; 3], &[1.0; 3]).unwrap(),
        ks_statistic(&[1.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(),
    ];
    let ks_ok = ks[0] == 0.0 && ks[1] == 1.0 && (ks[2] - 1.0 / 3.0).abs() <= f64::EPSILON;
    checks.push((ks_ok, format!("KS {ks:?}")));

    let ids: Vec<String> = ["B2", "B3", "B4", "B5", "B6", "B7", "B8", "B8a", "B11", "B12"]
        .map(String::from)
        .to_vec();
    let mut vi_err: f64 = 0.0;
    for _ in 0..20 {
        let v: Vec<f64> = (0..10).map(|_| rng.random_range(0.005..0.6)).collect();
        let (blue, green, red, re, nir) = (v[0], v[1], v[2], v[3], v[6]);
        let expected = [
            (ViKind::CiRedEdge, nir / re - 1.0),
            (ViKind::CiGreen, nir / green - 1.0),
            (ViKind::Ndvi, (nir - red) / (nir + red)),
            (ViKind::GreenNdvi, (nir - green) / (nir + green)),
            (ViKind::Evi, 2.5 * (nir - red) / (nir + 6.0 * red - 7.5 * blue + 1.0)),
            (ViKind::ReNdvi, (nir - re) / (nir + re)),
        ];
        let bands = ViBands::from_named(&ids, &v).unwrap();
        for (kind, e) in expected {
            vi_err = vi_err.max((compute_vi(&bands, kind).unwrap() - e).abs());
        }
    }
    checks.push((vi_err < 1e-9, format!("VI error {vi_err:.1e}")));

    let daily = unit_conversion_example();
    checks.push(((daily - 5.189).abs() < 1e-3, format!("10 µmol over 4 steps = {daily:.6} gC")));

    let (mut closure, mut mc_err): (f64, f64) = (0.0, 0.0);
    for id in 0..20 {
        let scenario = random_scenario(&mut rng, id);
        let medium = CanopyMedium::new(&scenario).unwrap();
        let sza = 60.0 * rng.random::<f64>();
        for i in (0..201).step_by(5) {
            let fx = medium.fluxes(i, sza, N_LAYERS);
            let total = fx.canopy_absorption() + fx.soil_absorption(medium.soil.values[i]) + fx.reflected();
            closure = closure.max((total - 1.0).abs());
        }
        let refl = medium.reflectance(sza).unwrap();
        let k_b = medium.beam_extinction(sza);
        for wl in [490.0, 560.0, 670.0, 860.0, 1610.0] {
            let i = index_of(wl).unwrap();
            let mc = monte_carlo(
                medium.leaf.reflectance.values[i],
                medium.leaf.transmittance.values[i],
                medium.lidf.mean_cos2(),
                k_b,
                scenario.canopy.lai,
                medium.soil.values[i],
                0.0,
                10_000,
                &mut rng,
            );
            mc_err = mc_err.max((mc.reflected - refl.values[i]).abs());
        }
    }
    checks.push((closure < 1e-6, format!("energy closure {closure:.1e}")));
    checks.push((mc_err < 0.02, format!("Monte-Carlo reflectance {mc_err:.4}")));

    let pass = checks.iter().all(|c| c.0);
    let detail = checks
        .iter()
        .map(|(ok, d)| if *ok { d.clone() } else { format!("{d} [failed]") })
        .collect::<Vec<_>>()
        .join("; ");
    outcome(pass, detail)
}

/// Every subcommand once in `dir`; returns output files and captured stdout.
fn cli_session(dir: &Path, threads: &str) -> BTreeMap<String, Vec<u8>> {
    let mut outputs = BTreeMap::new();
    let global = ["--threads", threads, "--seed", "5"];
    let run = |args: &[&str]| {
        let mut full: Vec<&str> = global.to_vec();
        full.extend_from_slice(args);
        hgpp_ok(dir, &full).stdout
    };
    let files = scene(6, 4, &SensorSpec::sentinel2(), None).write(dir);
    let (px, mt, rf) = (
        files.pixels.to_str().unwrap(),
        files.meteo.to_str().unwrap(),
        files.reference.to_str().unwrap(),
    );
    let steps: [(&str, Vec<&str>); 8] = [
        ("simulate", vec!["simulate", "--n", "300", "--lowlai", "20"]),
        (
            "gsa",
            vec!["gsa", "--nu", "60", "--nc", "30", "--n-cond", "4", "--subrange", "2:"],
        ),
        (
            "train-mlp",
            vec![
                "train", "--diagnostics", "diagnostics.csv", "--targets", "gpp,lai", "--epochs", "15",
                "--out", "mlp.json", "--report", "mlp_report.json",
            ],
        ),
        (
            "train-forest",
            vec![
                "train", "--model", "forest", "--trees", "8", "--out", "forest.json", "--report",
                "forest_report.json",
            ],
        ),
        (
            "predict-mlp",
            vec!["predict", "--model", "mlp.json", "--pixels", px, "--meteo", mt, "--fields", "fields.csv"],
        ),
        (
            "predict-forest",
            vec![
                "predict", "--model", "forest.json", "--pixels", px, "--meteo", mt, "--out", "daily_forest.csv",
            ],
        ),
        ("baseline", vec!["baseline", "--vi", "evi", "--pixels", px, "--meteo", mt]),
        ("evaluate", vec!["evaluate", "--pred", "daily_gpp.csv", "--reference", rf]),
    ];
    for (name, args) in &steps {
        outputs.insert(format!("stdout:{name}"), run(args));
    }
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        outputs.insert(
            path.file_name().unwrap().to_string_lossy().into_owned(),
            fs::read(&path).unwrap(),
        );
    }
    outputs
}

fn determinism(_: &Ctx) -> Outcome {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let one = cli_session(a.path(), "1");
    let two = cli_session(b.path(), "2");
    let names: Vec<&String> = one.keys().collect();
    let differing: Vec<&String> = names.iter().copied().filter(|k| one.get(*k) != two.get(*k)).collect();
    let same_set = one.keys().eq(two.keys());
    outcome(
        same_set && differing.is_empty(),
        format!(
            "{} outputs compared across --threads 1 and 2 (seed 5); differing: {differing:?}",
            names.len()
        ),
    )
}

fn zero_vegetation(ctx: &Ctx) -> Outcome {
    ctx.gpp_lai();
    let dir = ctx.dir.path();
    let bare = scene(9, 11, &SensorSpec::sentinel2(), Some(0.0));
    let files = bare.write(dir);
    hgpp_ok(
        dir,
        &[
            "predict",
            "--model",
            "gpp_lai.json",
            "--pixels",
            files.pixels.to_str().unwrap(),
            "--meteo",
            files.meteo.to_str().unwrap(),
            "--out",
            "bare_daily.csv",
        ],
    );
    let text = fs::read_to_string(dir.join("bare_daily.csv")).unwrap();
    let daily: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    let max = daily.iter().copied().fold(0.0, f64::max);
    let truth = bare.reference.iter().map(|f| f.gpp).fold(0.0, f64::max);
    outcome(
        daily.len() == bare.pixels.len() && max < 1.0,
        format!(
            "{} bare-soil pixel-days, max predicted {max:.3} gC m⁻² d⁻¹ (< 1), simulated {truth:.3}",
            daily.len()
        ),
    )
}

type Criterion = (usize, &'static str, fn(&Ctx) -> Outcome);

const CRITERIA: [Criterion; 9] = [
    (1, "synthetic self-skill", synthetic_self_skill),
    (2, "sensitivity ranking", sensitivity_ranking),
    (3, "sub-range divergence", subrange_divergence),
    (4, "retrieval ordering", retrieval_ordering),
    (5, "band-subset penalty", band_subset_penalty),
    (6, "forest overfit", forest_overfit),
    (7, "numerical oracles", numerical_oracles),
    (8, "determinism", determinism),
    (9, "zero vegetation", zero_vegetation),
];

fn main() {
    let selected: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let ctx = Ctx {
        dir: tempfile::tempdir().unwrap(),
        corpus: OnceLock::new(),
        gpp_lai: OnceLock::new(),
    };
    let mut failed = 0;
    for (n, name, check) in CRITERIA {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let t = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(|| check(&ctx))).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            outcome(false, format!("panicked: {msg}"))
        });
        if !result.pass {
            failed += 1;
        }
        println!(
            "{} criterion {n} ({name}): {} [{:.1} s]",
            if result.pass { "PASS" } else { "FAIL" },
            result.detail,
            t.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
