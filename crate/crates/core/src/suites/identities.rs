//! The first-order identity and the second-order differential equation at random (point, x).

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{guard, timed, Gate, Settings, SuiteReport};
use crate::error::Result;
use crate::gaudin::{diffeq_residual, first_order_identity_residual, IdentitySpec, Ordering};
use crate::hecke::Normalization;
use crate::moduli::{gauge_unfix, Configuration, Profile, TestFunction};
use crate::quadrature::Quad;

/// A homogeneous point with chart coordinates in a box of half-width 1.5, a random
/// representative and an x at distance ≥ ½ from the marked points.
pub fn random_case<R: Rng>(cfg: &Configuration, rng: &mut R) -> (Vec<C64>, C64) {
    let v: Vec<C64> = (0..cfg.chart_dim()).map(|_| C64::new(rng.gen_range(-1.5..1.5), rng.gen_range(-1.5..1.5))).collect();
    let tau = C64::new(rng.gen_range(-0.5..0.5), rng.gen_range(-0.5..0.5));
    let lam = C64::from_polar(rng.gen_range(0.7..1.4), rng.gen_range(0.0..std::f64::consts::TAU));
    let u = gauge_unfix(cfg, &v, tau, lam);
    loop {
        let x = C64::new(rng.gen_range(-2.0..3.0), rng.gen_range(-2.0..2.0));
        if cfg.marked_points().iter().all(|t| (t - x).norm() > 0.5) {
            return (u, x);
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityRow {
    pub config: String,
    pub x: C64,
    /// step ladder, coarse to fine
    pub h: Vec<f64>,
    /// inner-reading residuals along the ladder
    pub residual: Vec<f64>,
    /// default-settings residuals (inner, outer)
    pub default_inner: f64,
    pub default_outer: Option<f64>,
}

fn spec(s: &Settings, h: f64, richardson: bool, outer: bool) -> IdentitySpec {
    IdentitySpec { quad: Quad::adaptive(s.adaptive_tol), norm: Normalization::Representation, h_x: h, h_u: 1e-3, richardson, outer }
}

fn configs(s: &Settings) -> Result<Vec<(&'static str, Configuration)>> {
    Ok(vec![("classical", s.classical.build()?), ("wild", s.wild.build()?)])
}

/// ∂_x(H_xψ) = H_x(−½h(x)ψ): residual at the default step and under step halving.
pub fn first_order(s: &Settings) -> SuiteReport {
    timed("first_order", 9, 600.0, |rep| {
        let mut rows = vec![];
        guard(rep, 9, "first_order.evaluation", |_| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(9));
            for (name, cfg) in configs(s)? {
                let psi = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
                for _ in 0..s.identity_points {
                    let (u, x) = random_case(&cfg, &mut rng);
                    let h = [s.identity_h, s.identity_h / 2.0];
                    let mut residual = vec![];
                    for &hh in &h {
                        residual.push(first_order_identity_residual(&cfg, &psi, &u, x, &spec(s, hh, false, false))?.residual_inner);
                    }
                    let d = first_order_identity_residual(&cfg, &psi, &u, x, &spec(s, s.identity_h, true, true))?;
                    rows.push(IdentityRow {
                        config: name.into(),
                        x,
                        h: h.to_vec(),
                        residual,
                        default_inner: d.residual_inner,
                        default_outer: d.residual_outer,
                    });
                }
            }
            Ok(())
        });
        if !rows.is_empty() {
            let worst = rows.iter().map(|r| r.residual[0]).fold(0.0, f64::max);
            let halving = rows.iter().map(|r| r.residual[1] / r.residual[0]).fold(0.0, f64::max);
            rep.push(Gate::below(9, "first_order.residual", worst, 1e-2).with_detail(format!("plain central difference, h = {}", s.identity_h)));
            rep.push(Gate::below(9, "first_order.halving_ratio", halving, 0.5).with_detail("largest residual(h/2)/residual(h)"));
        }
        rep.table("cases", &rows);
    })
}

/// ∂²_x(H_xψ) = H_x(G(x)ψ) for the classical and wild configurations.
pub fn diffeq(s: &Settings) -> SuiteReport {
    timed("diffeq", 10, 3600.0, |rep| {
        let mut rows = vec![];
        guard(rep, 10, "diffeq.evaluation", |_| {
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(10));
            for (name, cfg) in configs(s)? {
                let psi = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
                for _ in 0..s.identity_points {
                    rows.push(diffeq_case(s, name, &cfg, &psi, &mut rng)?);
                }
            }
            Ok(())
        });
        for name in ["classical", "wild"] {
            let r: Vec<&IdentityRow> = rows.iter().filter(|r| r.config == name).collect();
            if r.is_empty() {
                continue;
            }
            let worst = r.iter().map(|r| r.default_inner).fold(0.0, f64::max);
            let outer = r.iter().filter_map(|r| r.default_outer).fold(0.0, f64::max);
            let decay = r.iter().flat_map(|r| r.residual.windows(2).map(|w| w[1] / w[0])).fold(0.0, f64::max);
            rep.push(Gate::below(10, &format!("diffeq.{name}.residual"), worst, 5e-2).with_detail(format!("outer reading {outer:.2e}")));
            rep.push(Gate::below(10, &format!("diffeq.{name}.refinement_ratio"), decay, 1.0).with_detail("largest residual(h/2)/residual(h)"));
        }
        rep.table("cases", &rows);
    })
}

pub fn diffeq_case<R: Rng>(s: &Settings, name: &str, cfg: &Configuration, psi: &TestFunction, rng: &mut R) -> Result<IdentityRow> {
    let (u, x) = random_case(cfg, rng);
    let h: Vec<f64> = [4.0, 2.0, 1.0].iter().map(|k| k * s.identity_h).collect();
    let mut residual = vec![];
    for &hh in &h {
        residual.push(diffeq_residual(cfg, psi, &u, x, &spec(s, hh, false, false), Ordering::Ef)?.residual_inner);
    }
    let d = diffeq_residual(cfg, psi, &u, x, &spec(s, s.identity_h, true, true), Ordering::Ef)?;
    Ok(IdentityRow { config: name.into(), x, h, residual, default_inner: d.residual_inner, default_outer: d.residual_outer })
}
