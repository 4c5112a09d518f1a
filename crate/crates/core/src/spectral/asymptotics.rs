//! H_xψ / (2|x| log|x|) → ψ as x → ∞.

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::hecke::{ChartKernel, Normalization};
use crate::moduli::Configuration;
use crate::quadrature::{PlanSpec, Quad};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymptoticsReport {
    pub moduli: Vec<f64>,
    /// relative ℓ²-distance over the sample points
    pub distances: Vec<f64>,
    /// distances[i+1] / distances[i]
    pub ratios: Vec<f64>,
    /// log|x_i| / log|x_{i+1}|, the ratio of an exact O(1/log|x|) law
    pub log_ratios: Vec<f64>,
    pub strictly_decreasing: bool,
    pub ratios_in_window: bool,
}

pub const RATIO_WINDOW: (f64, f64) = (0.3, 0.9);

/// Distances ‖H_xψ/(2|x|log|x|) − ψ‖/‖ψ‖ at x = r·direction for r in `moduli`.
pub fn asymptotics_study<F>(
    cfg: &Configuration,
    psi: &F,
    points: &[Vec<C64>],
    moduli: &[f64],
    direction: C64,
    quad: &Quad,
    norm: Normalization,
) -> Result<AsymptoticsReport>
where
    F: Fn(&[C64]) -> C64 + Sync,
{
    let dir = direction / direction.norm();
    let target: Vec<C64> = points.iter().map(|v| psi(v)).collect();
    let tn: f64 = target.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let mut distances = vec![];
    for &r in moduli {
        let x = dir * r;
        let k = ChartKernel::new(cfg, x, &PlanSpec::coarse(), norm)?;
        let vals: Vec<Result<C64>> = points.par_iter().map(|v| k.apply_at_with(psi, v, quad)).collect();
        let scale = 2.0 * r * r.ln();
        let mut d2 = 0.0;
        for (v, t) in vals.into_iter().zip(&target) {
            d2 += (v? / scale - t).norm_sqr();
        }
        distances.push(if tn > 0.0 { d2.sqrt() / tn } else { d2.sqrt() });
    }
    let ratios: Vec<f64> = distances.windows(2).map(|w| if w[0] > 0.0 { w[1] / w[0] } else { 0.0 }).collect();
    let log_ratios = moduli.windows(2).map(|w| w[0].ln() / w[1].ln()).collect();
    let strictly_decreasing = distances.windows(2).all(|w| w[1] < w[0]) || distances.iter().all(|&d| d == 0.0);
    let ratios_in_window = ratios.iter().all(|r| (RATIO_WINDOW.0..=RATIO_WINDOW.1).contains(r));
    Ok(AsymptoticsReport { moduli: moduli.to_vec(), distances, ratios, log_ratios, strictly_decreasing, ratios_in_window })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hecke::{nu_mass, nu_mass_periods};

    #[test]
    fn scalar_mass_growth() {
        // m = 1: H_x on constants is the ν mass
        let cfg = Configuration::anchors_only();
        let one = |_: &[C64]| C64::new(1.0, 0.0);
        let dir = C64::new(0.6, 0.8);
        let rep = asymptotics_study(&cfg, &one, &[vec![]], &[1e2, 1e3, 1e4], dir, &Quad::adaptive(1e-9), Normalization::Representation)
            .unwrap();
        assert!(rep.strictly_decreasing, "{rep:?}");
        assert!(rep.ratios_in_window, "{rep:?}");
        for &r in &rep.moduli {
            let x = dir * r;
            let a = nu_mass(x, &Quad::adaptive(1e-9)).unwrap();
            let b = nu_mass_periods(x);
            assert!((a - b).abs() < 1e-6 * b);
        }
    }

    #[test]
    fn zero_function_exact() {
        let cfg = Configuration::classical(C64::new(2.0, 1.0));
        let zero = |_: &[C64]| C64::new(0.0, 0.0);
        let pts = vec![vec![C64::new(0.3, 0.4)]];
        let rep = asymptotics_study(&cfg, &zero, &pts, &[1e2, 1e3], C64::new(1.0, 0.0), &Quad::adaptive(1e-6), Normalization::Representation)
            .unwrap();
        assert!(rep.distances.iter().all(|&d| d == 0.0));
    }
}
