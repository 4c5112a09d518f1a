//! Limits: |x| → ∞ and the collision of points into a jet.

use num_complex::Complex64 as C64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{guard, sci, timed, Gate, Settings, SuiteReport};
use crate::collision::{
    argument_limit_error, limit_study, sample_points, twist_factor_error, two_point_kernel, CollisionSchedule, LimitStudy,
};
use crate::error::Result;
use crate::hecke::{eval_modified_point, Normalization};
use crate::moduli::{gauge_fix, Configuration, Profile, TestFunction, TestTerm};
use crate::quadrature::Quad;
use crate::spectral::asymptotics::{asymptotics_study, AsymptoticsReport};

fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn asymptotics(s: &Settings) -> SuiteReport {
    timed("asymptotics", 8, 600.0, |rep| {
        guard(rep, 8, "asymptotics.study", |rep| {
            let scalar = asymptotics_study(
                &Configuration::anchors_only(),
                &|_: &[C64]| cx(1.0, 0.0),
                &[vec![]],
                &s.asymptotic_moduli,
                s.asymptotic_direction,
                &Quad::adaptive(1e-9),
                Normalization::Representation,
            )?;
            let cfg = s.classical.build()?;
            let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(8));
            let psi = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
            // chart coordinates of points with separated constant terms
            let pts: Vec<Vec<C64>> =
                sample_points(&cfg, 5, 1.0, 0.2, &mut rng).iter().map(|u| gauge_fix(&cfg, u).map(|(v, _)| v)).collect::<Result<_>>()?;
            let classical = asymptotics_study(
                &cfg,
                &|v: &[C64]| psi.eval_chart(v),
                &pts,
                &s.asymptotic_moduli,
                s.asymptotic_direction,
                &Quad::adaptive(1e-8),
                Normalization::Representation,
            )?;
            for (name, r) in [("scalar", &scalar), ("classical", &classical)] {
                push_asymptotic(rep, name, r);
            }
            rep.table("scalar", &scalar);
            rep.table("classical", &classical);
            Ok(())
        });
    })
}

fn push_asymptotic(rep: &mut SuiteReport, name: &str, r: &AsymptoticsReport) {
    let worst = r.distances.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
    rep.push(Gate::below(8, &format!("asymptotics.{name}.decrease_ratio"), worst, 1.0).with_detail(format!("distances {}", sci(&r.distances))));
    let (lo, hi) = crate::spectral::asymptotics::RATIO_WINDOW;
    rep.push(
        Gate::holds(8, &format!("asymptotics.{name}.ratio_window"), r.ratios_in_window, worst)
            .with_detail(format!("ratios {:.3?} in [{lo}, {hi}]; exact 1/log law {:.3?}", r.ratios, r.log_ratios)),
    );
}

/// Bump function on the merged configuration.
pub fn collision_psi(cfg: &Configuration, seed: u64) -> TestFunction {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    TestFunction::random(cfg, Profile::Bump, 2, 0.8, 1.5, &mut rng)
}

/// δ-ladder for one schedule.
pub fn collision_ladder(s: &Settings, a: &[C64], seed: u64) -> Result<LimitStudy> {
    let c = &s.collision;
    let base = CollisionSchedule::new(c.t0, c.deltas[0], a)?;
    let cfg = base.target_config(&c.others)?;
    let psi = collision_psi(&cfg, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pts = sample_points(&cfg, c.samples, 1.5, 0.2, &mut rng);
    limit_study(&base, &c.others, &c.deltas, &|v: &[C64]| psi.eval(v), c.x, &pts, &Quad::adaptive(1e-8))
}

pub fn collision(s: &Settings) -> SuiteReport {
    timed("collision", 12, 1800.0, |rep| {
        let c = &s.collision;
        for (name, a) in [("two_point", &c.a), ("three_point", &c.a_long)] {
            guard(rep, 12, &format!("collision.{name}"), |rep| {
                let st = collision_ladder(s, a, s.seed.wrapping_add(12))?;
                let d: Vec<f64> = st.rows.iter().map(|r| r.distance).collect();
                let worst = d.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max);
                rep.push(Gate::below(12, &format!("collision.{name}.decrease_ratio"), worst, 1.0).with_detail(format!("distances {}", sci(&d))));
                let end = *d.last().expect("ladder");
                if name == "two_point" {
                    rep.push(Gate::below(12, &format!("collision.{name}.endpoint"), end, c.tol));
                } else {
                    // the longer cluster converges at the same O(δ) rate with a larger constant
                    rep.push(
                        Gate::below(12, &format!("collision.{name}.linear_rate"), worst, 0.6)
                            .with_detail(format!("endpoint {end:.3e} (tolerance {} applies to the two-point ladder)", c.tol)),
                    );
                }
                rep.push(Gate::below(12, &format!("collision.{name}.residue_sums"), st.sum_rule_defect, 1e-12));
                rep.table(name, &st);
                Ok(())
            });
        }
        guard(rep, 12, "collision.example", |rep| {
            let (dm, dp) = closed_form_example(s)?;
            rep.push(Gate::below(12, "collision.example_match", dm, 1e-8).with_detail("closed-form two-point kernel with exp(−2a₁Re(u₁/(s−u₀)))"));
            rep.push(Gate::holds(12, "collision.example_plus_sign_differs", dp > 1e-3, dp).with_detail("closed form with exp(+2a₁Re(u₁/(s−u₀)))"));
            Ok(())
        });
        guard(rep, 12, "collision.pointwise", |rep| {
            let sched = CollisionSchedule::new(c.t0, c.deltas[0], &c.a_long)?;
            let u = [cx(0.3, 0.2), cx(0.4, -0.3), cx(-0.2, 0.5)];
            let (sp, x) = (cx(1.7, 0.9), cx(-0.8, 1.2));
            let mut rows = vec![];
            for &d in &c.deltas {
                let sd = sched.with_delta(d)?;
                rows.push([d, twist_factor_error(&sd, sp, &u)?, argument_limit_error(&sd, x, sp, &u)?]);
            }
            let worst = rows.windows(2).map(|w| (w[1][1] / w[0][1]).max(w[1][2] / w[0][2])).fold(0.0, f64::max);
            rep.push(Gate::below(12, "collision.pointwise_decay_ratio", worst, 1.0).with_detail("twist factor and argument limits"));
            rep.table("pointwise", &rows);
            Ok(())
        });
    })
}

/// Merged-point kernel against the closed-form two-point kernel with both signs, relative
/// errors at a handful of points.
pub fn closed_form_example(s: &Settings) -> Result<(f64, f64)> {
    let c = &s.collision;
    let a1 = c.a[0];
    let sched = CollisionSchedule::new(c.t0, c.deltas[0], &[a1])?;
    let cfg = sched.target_config(&c.others)?;
    let psi = TestFunction::new(
        &cfg,
        Profile::Gaussian,
        vec![TestTerm {
            amp: cx(1.0, 0.5),
            center: (0..cfg.chart_dim()).map(|i| cx(-0.5 + 0.8 * i as f64, 0.5 - 0.7 * i as f64)).collect(),
            width: vec![0.9; cfg.chart_dim()],
        }],
    )?;
    let f = |v: &[C64]| psi.eval(v);
    let q = Quad::adaptive(1e-11);
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(13));
    let pts = sample_points(&cfg, 4, 1.0, 0.2, &mut rng);
    let (mut dm, mut dp) = (0.0f64, f64::INFINITY);
    for u in &pts {
        let want = eval_modified_point(&cfg, &f, c.x, u, &q)?;
        let minus = two_point_kernel(c.t0, a1, &c.others, &f, c.x, u, -1.0, &q)?;
        let plus = two_point_kernel(c.t0, a1, &c.others, &f, c.x, u, 1.0, &q)?;
        dm = dm.max((want - minus).norm() / want.norm());
        dp = dp.min((want - plus).norm() / want.norm());
    }
    Ok((dm, dp))
}
