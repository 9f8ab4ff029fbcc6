//! Leaf inclination distribution from the two-parameter trigonometric
//! cumulative family, discretized into 13 inclination classes.

use std::f64::consts::{FRAC_PI_2, PI};

/// Upper bounds of the inclination classes, degrees.
const CLASS_EDGES: [f64; 13] = [
    10.0, 20.0, 30.0, 40.0, 50.0, 60.0, 70.0, 80.0, 82.0, 84.0, 86.0, 88.0, 90.0,
];

pub const N_CLASSES: usize = CLASS_EDGES.len();

/// Cumulative fraction of leaves with inclination below `theta_deg`.
fn cumulative(a: f64, b: f64, theta_deg: f64) -> f64 {
    let target = 2.0 * theta_deg.to_radians();
    let mut x = target;
    let mut y = 0.0;
    for _ in 0..10_000 {
        y = a * x.sin() + 0.5 * b * (2.0 * x).sin();
        let dx = 0.5 * (y - x + target);
        x += dx;
        if dx.abs() < 1e-12 {
            break;
        }
    }
    (2.0 * y + target) / PI
}

#[derive(Debug, Clone, PartialEq)]
pub struct LeafAngleDistribution {
    /// Class centers, radians.
    pub angles: [f64; N_CLASSES],
    pub fractions: [f64; N_CLASSES],
}

impl LeafAngleDistribution {
    pub fn new(lidf_a: f64, lidf_b: f64) -> Self {
        let mut angles = [0.0; N_CLASSES];
        let mut fractions = [0.0; N_CLASSES];
        let mut prev_edge = 0.0;
        let mut prev_cum = 0.0;
        for (i, &edge) in CLASS_EDGES.iter().enumerate() {
            let cum = cumulative(lidf_a, lidf_b, edge);
            angles[i] = (0.5 * (prev_edge + edge)).to_radians();
            fractions[i] = (cum - prev_cum).max(0.0);
            prev_edge = edge;
            prev_cum = cum;
        }
        let total: f64 = fractions.iter().sum();
        for f in &mut fractions {
            *f /= total;
        }
        Self { angles, fractions }
    }

    /// Mean projection of unit leaf area onto the plane normal to a beam at
    /// zenith `theta` (radians).
    pub fn projection(&self, theta: f64) -> f64 {
        self.angles
            .iter()
            .zip(&self.fractions)
            .map(|(&tl, &f)| f * leaf_projection(tl, theta))
            .sum()
    }

    /// Beam extinction per unit leaf area for a sun at zenith `theta` (radians).
    pub fn beam_extinction(&self, theta: f64) -> f64 {
        self.projection(theta) / theta.cos()
    }

    /// Fraction-weighted mean of cos² of leaf inclination (1 for flat leaves).
    pub fn mean_cos2(&self) -> f64 {
        self.angles
            .iter()
            .zip(&self.fractions)
            .map(|(&tl, &f)| f * tl.cos().powi(2))
            .sum()
    }
}

/// Projection of a leaf with inclination `tl` and random azimuth along a beam at zenith `theta`.
fn leaf_projection(tl: f64, theta: f64) -> f64 {
    let (ct, cl) = (theta.cos(), tl.cos());
    if theta + tl <= FRAC_PI_2 {
        return ct * cl;
    }
    let cos_phi = (-(theta.tan().recip()) * tl.tan().recip()).clamp(-1.0, 1.0);
    let phi = cos_phi.acos();
    ct * cl * (2.0 * phi / PI - 1.0) + (2.0 / PI) * theta.sin() * tl.sin() * phi.sin()
}
