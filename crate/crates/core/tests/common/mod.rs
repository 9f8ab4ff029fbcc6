//! Oracles shared by integration tests: a Monte-Carlo photon walk through a
//! homogeneous leaf medium and a random scenario generator.

#![allow(dead_code)]

use hgpp_core::forward_sim::canopy::scattering_split;
use hgpp_core::forward_sim::{CanopyParams, LeafParams, SoilParams, VegetationScenario};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

#[derive(Clone, Copy)]
enum Photon {
    Beam,
    Down,
    Up,
}

pub struct McTally {
    pub reflected: f64,
    pub canopy: f64,
    pub soil: f64,
}

/// Photon walk through a homogeneous leaf medium of total leaf area `lai`
/// over a Lambertian soil. Beam photons travel an exponential leaf-area path
/// with rate `k_b`, diffuse photons with rate 1.
#[allow(clippy::too_many_arguments)]
pub fn monte_carlo(
    r: f64,
    t: f64,
    mean_cos2: f64,
    k_b: f64,
    lai: f64,
    soil_r: f64,
    diffuse_share: f64,
    rays: usize,
    rng: &mut ChaCha8Rng,
) -> McTally {
    let (sigma_f, sigma_b) = scattering_split(r, t, mean_cos2);
    let absorb = 1.0 - r - t;
    let mut tally = McTally {
        reflected: 0.0,
        canopy: 0.0,
        soil: 0.0,
    };
    for _ in 0..rays {
        let mut state = if rng.random::<f64>() < diffuse_share {
            Photon::Down
        } else {
            Photon::Beam
        };
        let mut depth = 0.0;
        loop {
            let path = -(1.0 - rng.random::<f64>()).ln();
            match state {
                Photon::Beam | Photon::Down => {
                    let rate = if matches!(state, Photon::Beam) { k_b } else { 1.0 };
                    depth += path / rate;
                    if depth >= lai {
                        if rng.random::<f64>() < soil_r {
                            state = Photon::Up;
                            depth = lai;
                            continue;
                        }
                        tally.soil += 1.0;
                        break;
                    }
                }
                Photon::Up => {
                    depth -= path;
                    if depth <= 0.0 {
                        tally.reflected += 1.0;
                        break;
                    }
                }
            }
            let u = rng.random::<f64>();
            if u < absorb {
                tally.canopy += 1.0;
                break;
            }
            let backward = u < absorb + sigma_b;
            let _ = sigma_f;
            state = match (state, backward) {
                (Photon::Beam | Photon::Down, true) => Photon::Up,
                (Photon::Beam | Photon::Down, false) => Photon::Down,
                (Photon::Up, true) => Photon::Down,
                (Photon::Up, false) => Photon::Up,
            };
        }
    }
    let n = rays as f64;
    tally.reflected /= n;
    tally.canopy /= n;
    tally.soil /= n;
    tally
}

pub fn random_scenario(rng: &mut ChaCha8Rng, id: u64) -> VegetationScenario {
    let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
    let lidf_sum: f64 = u(-1.0, 1.0);
    let lidf_diff: f64 = u(-1.0, 1.0);
    let (mut a, mut b) = (0.5 * (lidf_sum + lidf_diff), 0.5 * (lidf_sum - lidf_diff));
    let s = a.abs() + b.abs();
    if s > 1.0 {
        a /= s;
        b /= s;
    }
    VegetationScenario {
        id,
        leaf: LeafParams {
            cab: u(11.0, 90.0),
            cca: u(0.0, 40.0),
            cant: u(0.0, 40.0),
            cdm: u(0.0, 0.05),
            cw: u(0.0, 0.1),
            cs: u(0.0, 0.9),
            n_struct: u(1.0, 2.5),
        },
        canopy: CanopyParams {
            lai: u(0.0, 9.0),
            hc: u(0.1, 2.0),
            lidf_a: a,
            lidf_b: b,
        },
        soil: SoilParams {
            smc: u(0.01, 0.7),
            brightness: u(0.01, 0.9),
            lat_shape: u(20.0, 40.0),
            lon_shape: u(45.0, 65.0),
        },
    }
}
