//! Oper fits: a synthetic pre-gate, eigenvalue curves of the scalar case, pole orders of G.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{guard, sci, timed, Gate, Settings, SuiteReport};
use crate::error::Result;
use crate::gaudin::{gaudin_expansion, Jet2};
use crate::hecke::{ChartKernel, Normalization};
use crate::moduli::{gauge_unfix, Configuration, Profile, TestFunction};
use crate::quadrature::{PlanSpec, Quad};
use crate::spectral::oper::{oper_fit, wirtinger_samples, OperFit, SyntheticOper};

fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Golden-angle spiral of n points in the disc.
pub fn disk_samples(c: C64, r: f64, n: usize) -> Vec<C64> {
    (0..n)
        .map(|i| {
            let rho = r * ((i as f64 + 0.5) / n as f64).sqrt();
            c + C64::from_polar(rho, i as f64 * 2.399963229728653)
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitRow {
    pub h: f64,
    pub fit: OperFit,
}

/// Synthetic oper with known potential; returns the worst coefficient error.
pub fn synthetic_recovery() -> Result<f64> {
    let points = vec![cx(0.0, 0.0), cx(1.0, 0.0), cx(2.5, 1.5)];
    let nu = vec![vec![cx(0.3, -0.2), cx(0.25, 0.0)], vec![cx(-0.1, 0.4), cx(0.25, 0.0)], vec![cx(0.05, 0.1), cx(0.25, 0.0)]];
    let base = cx(0.9, 1.6);
    let op = SyntheticOper { points: points.clone(), nu: nu.clone(), base, steps: 600 };
    let xs = disk_samples(base, 1.0, 40);
    let (b, d2) = wirtinger_samples(&|x: C64| Ok(cx(op.beta(x), 0.0)), &xs, 0.05, 2)?;
    let fit = oper_fit(&points, &[2, 2, 2], &xs, &b, &d2)?;
    Ok(fit.nu.iter().flatten().zip(nu.iter().flatten()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max))
}

/// β(x) = H_x·1 on the one-point moduli space (anchors only), by adaptive cubature.
pub fn scalar_beta(x: C64, tol: f64) -> Result<C64> {
    let cfg = Configuration::anchors_only();
    ChartKernel::new(&cfg, x, &PlanSpec::coarse(), Normalization::Representation)?.apply_at_with(&|_: &[C64]| cx(1.0, 0.0), &[], &Quad::adaptive(tol))
}

/// Fits of ∂²β = −Vβ to the scalar eigenvalue curve along the step ladder. One extra pole
/// order is allowed at each point so the fitted orders are measured rather than imposed.
pub fn scalar_oper_ladder(s: &Settings) -> Result<Vec<FitRow>> {
    let xs = disk_samples(s.oper_center, s.oper_radius, s.oper_samples);
    let points = [cx(0.0, 0.0), cx(1.0, 0.0)];
    let f = |x: C64| scalar_beta(x, 1e-12);
    let mut rows = vec![];
    for &h in &s.oper_steps {
        let (b, d2) = wirtinger_samples(&f, &xs, h, 0)?;
        rows.push(FitRow { h, fit: oper_fit(&points, &[3, 3], &xs, &b, &d2)? });
    }
    Ok(rows)
}

pub fn oper(s: &Settings) -> SuiteReport {
    timed("oper", 11, 3600.0, |rep| {
        guard(rep, 11, "oper.synthetic", |rep| {
            rep.push(Gate::below(11, "oper.synthetic_recovery", synthetic_recovery()?, 1e-6));
            Ok(())
        });
        guard(rep, 11, "oper.scalar", |rep| {
            let rows = scalar_oper_ladder(s)?;
            let res: Vec<f64> = rows.iter().map(|r| r.fit.relative_residual).collect();
            let worst = res.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
            rep.push(Gate::below(11, "oper.scalar_residual_refinement_ratio", worst, 1.0).with_detail(format!("residuals {}", sci(&res))));
            // the fitted ν carry the O(h²) error of the difference stencil; extrapolate the
            // last two rungs (step ratio 2) before reading off orders and coefficients
            let (prev, last) = match rows.as_slice() {
                [.., a, b] => (&a.fit, &b.fit),
                _ => return Err(crate::Error::ConfigInvalid("oper_steps needs at least two steps".into())),
            };
            let ratio = rows[rows.len() - 2].h / rows[rows.len() - 1].h;
            let w = ratio * ratio;
            let nu: Vec<Vec<C64>> =
                last.nu.iter().zip(&prev.nu).map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x * w - y) / (w - 1.0)).collect()).collect();
            let change = nu.iter().flatten().zip(last.nu.iter().flatten()).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
            let extrapolated = OperFit { nu: nu.clone(), ..last.clone() };
            let orders = extrapolated.pole_orders(1e-3);
            rep.push(
                Gate::below(11, "oper.scalar_pole_order_excess", orders.iter().map(|&o| o as f64 - 2.0).fold(f64::MIN, f64::max), 0.5)
                    .with_detail(format!("fitted orders {orders:?} (threshold 1e-3 of the largest coefficient), allowed 2d = 2")),
            );
            // second-order coefficients ¼ at both simple points, first-order ±¼
            let want = [[cx(0.25, 0.0), cx(0.25, 0.0)], [cx(-0.25, 0.0), cx(0.25, 0.0)]];
            let pattern = nu.iter().map(|row| (row[1] - 0.25).norm()).fold(0.0, f64::max);
            let full = nu.iter().zip(&want).flat_map(|(r, w)| r.iter().zip(w).map(|(a, b)| (a - b).norm())).fold(0.0, f64::max);
            rep.push(
                Gate::below(11, "oper.quarter_pattern", pattern, 1e-3)
                    .with_detail(format!("full potential error {full:.2e}; extrapolation changed ν by {change:.2e}")),
            );
            rep.table("extrapolated_nu", &nu);
            rep.table("scalar_ladder", &rows);
            Ok(())
        });
        guard(rep, 11, "oper.wild_orders", |rep| {
            let cfg = s.wild.build()?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(11));
            let u = gauge_unfix(&cfg, &[cx(0.4, 0.3), cx(-0.2, 0.5)], cx(0.1, 0.2), cx(1.1, -0.3));
            let jets: Vec<Jet2> =
                (0..2).map(|_| Jet2::of_test_function(&TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng), &u)).collect();
            let ex = gaudin_expansion(&cfg, &jets, &u, 2)?;
            let pts = cfg.points();
            let mut excess: f64 = 0.0;
            for fit in &ex.fits {
                let scale = fit.coeffs.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm()));
                for (row, p) in fit.coeffs.iter().zip(&pts) {
                    for c in &row[2 * p.order()..] {
                        excess = excess.max(c.norm() / scale);
                    }
                }
            }
            rep.push(Gate::below(11, "oper.wild_pole_orders", excess, 1e-6).with_detail("coefficients beyond order 2d relative to the largest"));
            Ok(())
        });
    })
}
