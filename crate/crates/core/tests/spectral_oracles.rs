use hgpp_core::forward_sim::spectrum::{WL_END, WL_START};
use hgpp_core::forward_sim::Spectrum;
use hgpp_core::spectral::{band_convolve, normalize_spectrum, MinMaxScaler, SensorSpec, SRF_TRUNCATION_FWHM};
use proptest::prelude::*;
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

/// Mean of a normal truncated to [lo, hi].
fn truncated_normal_mean(mu: f64, sigma: f64, lo: f64, hi: f64) -> f64 {
    let std = Normal::new(0.0, 1.0).unwrap();
    let (a, b) = ((lo - mu) / sigma, (hi - mu) / sigma);
    mu + sigma * (std.pdf(a) - std.pdf(b)) / (std.cdf(b) - std.cdf(a))
}

#[test]
fn ramp_reads_srf_weighted_mean_wavelength() {
    let ramp = Spectrum::from_fn(|wl| wl / 2400.0);
    for sensor in [SensorSpec::sentinel2(), SensorSpec::landsat8()] {
        let values = band_convolve(&ramp, &sensor).unwrap();
        for (band, v) in sensor.bands.iter().zip(values) {
            let sigma = band.fwhm_nm / (8.0 * 2f64.ln()).sqrt();
            let half = SRF_TRUNCATION_FWHM * band.fwhm_nm;
            let lo = (band.center_nm - half).max(WL_START);
            let hi = (band.center_nm + half).min(WL_END);
            let expected = truncated_normal_mean(band.center_nm, sigma, lo, hi) / 2400.0;
            assert!((v - expected).abs() < 1e-3, "{}: {v} vs {expected}", band.id);
        }
    }
}

#[test]
fn constant_spectrum_passes_through() {
    let v = band_convolve(&Spectrum::constant(0.3), &SensorSpec::sentinel2()).unwrap();
    assert_eq!(v.len(), 10);
    assert!(v.iter().all(|b| (b - 0.3).abs() < 1e-12));
}

#[test]
fn spike_outside_all_supports_changes_nothing() {
    let sensor = SensorSpec::sentinel2();
    let flat = band_convolve(&Spectrum::constant(0.2), &sensor).unwrap();
    // 1300 nm lies beyond 2 FWHM of B8a (865) and of B11 (1610).
    let spiked = band_convolve(&Spectrum::from_fn(|wl| if wl == 1300.0 { 0.9 } else { 0.2 }), &sensor).unwrap();
    for (a, b) in flat.iter().zip(&spiked) {
        assert!((a - b).abs() < 1e-6);
    }
}

proptest! {
    #[test]
    fn normalize_is_idempotent_and_scale_free(
        v in prop::collection::vec(0.0..1.0f64, 1..12),
        c in 0.01..100.0f64,
    ) {
        prop_assume!(v.iter().sum::<f64>() > 1e-6);
        let once = normalize_spectrum(&v).unwrap();
        let twice = normalize_spectrum(&once).unwrap();
        let scaled: Vec<f64> = v.iter().map(|x| c * x).collect();
        let from_scaled = normalize_spectrum(&scaled).unwrap();
        prop_assert!((once.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for ((a, b), s) in once.iter().zip(&twice).zip(&from_scaled) {
            prop_assert!((a - b).abs() < 1e-14);
            prop_assert!((a - s).abs() < 1e-12);
        }
    }

    #[test]
    fn minmax_maps_training_columns_onto_unit_interval(
        rows in prop::collection::vec(prop::collection::vec(-50.0..50.0f64, 3), 2..30),
    ) {
        let scaler = MinMaxScaler::fit(&rows).unwrap();
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| scaler.apply(r).unwrap()).collect();
        for j in 0..3 {
            let col: Vec<f64> = scaled.iter().map(|r| r[j]).collect();
            let (lo, hi) = col.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            if scaler.max[j] > scaler.min[j] {
                prop_assert_eq!(lo, 0.0);
                prop_assert_eq!(hi, 1.0);
            } else {
                prop_assert!(col.iter().all(|&x| x == 0.0));
            }
        }
        for (r, s) in rows.iter().zip(&scaled) {
            let back = scaler.invert(s).unwrap();
            for j in 0..3 {
                if scaler.max[j] > scaler.min[j] {
                    prop_assert!((back[j] - r[j]).abs() < 1e-9);
                }
            }
        }
    }
}
