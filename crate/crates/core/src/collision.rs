//! Twisted Hecke operators at distinct points, and the collision of n + 1 of them into a
//! single point of order n + 1.
//!
//! In the twisted picture the merging points carry homogeneous coordinates y_0..y_n; the
//! divided differences u_i of y (Newton coordinates) become the jet coordinates of the merged
//! point.

use num_complex::Complex64 as C64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hecke::eval_modified_point;
use crate::jet::{hecke_argument_jet, Character, Jet, MAX_ORDER};
use crate::moduli::{gauge_unfix, Cluster, Configuration};
use crate::quadrature::Quad;

const ZERO: C64 = C64::new(0.0, 0.0);

/// Equispaced points t_i = t₀ + iδ with imaginary coefficients a_1..a_n.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollisionSchedule {
    t0: C64,
    delta: f64,
    a: Vec<C64>,
}

impl CollisionSchedule {
    pub fn new(t0: C64, delta: f64, a: &[C64]) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::DegenerateSchedule(format!("separation must be positive, got {delta}")));
        }
        if a.is_empty() || a.len() + 1 > MAX_ORDER {
            return Err(Error::DegenerateSchedule(format!("need 1..={} coefficients, got {}", MAX_ORDER - 1, a.len())));
        }
        if a.iter().any(|c| !c.im.is_finite() || c.re.abs() > 1e-12 * c.norm().max(1.0)) {
            return Err(Error::DegenerateSchedule("coefficients must be imaginary".into()));
        }
        if a[a.len() - 1].norm() == 0.0 {
            return Err(Error::DegenerateSchedule("leading coefficient a_n vanishes".into()));
        }
        if !(t0.re.is_finite() && t0.im.is_finite()) {
            return Err(Error::DegenerateSchedule("non-finite base point".into()));
        }
        Ok(CollisionSchedule { t0, delta, a: a.to_vec() })
    }

    pub fn with_delta(&self, delta: f64) -> Result<Self> {
        CollisionSchedule::new(self.t0, delta, &self.a)
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn t0(&self) -> C64 {
        self.t0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn a(&self) -> &[C64] {
        &self.a
    }

    pub fn points(&self) -> Vec<C64> {
        (0..=self.n()).map(|i| self.t0 + self.delta * i as f64).collect()
    }

    /// λ_i^{(j)} = a_j / Π_{k ≤ j, k ≠ i}(t_i − t_k) for i ≤ j, stored at [i][j − 1].
    pub fn lambda_parts(&self) -> Vec<Vec<C64>> {
        let t = self.points();
        let n = self.n();
        (0..=n)
            .map(|i| {
                (1..=n)
                    .map(|j| {
                        if i > j {
                            return ZERO;
                        }
                        let den: C64 = (0..=j).filter(|&k| k != i).map(|k| t[i] - t[k]).product();
                        self.a[j - 1] / den
                    })
                    .collect()
            })
            .collect()
    }

    /// λ_i = −1 + Σ_j λ_i^{(j)}.
    pub fn lambdas(&self) -> Vec<C64> {
        self.lambda_parts().iter().map(|row| row.iter().sum::<C64>() - 1.0).collect()
    }

    /// max_j |Σ_i λ_i^{(j)}|, zero up to rounding.
    pub fn sum_rule_defect(&self) -> f64 {
        let parts = self.lambda_parts();
        (0..self.n()).map(|j| parts.iter().map(|r| r[j]).sum::<C64>().norm()).fold(0.0, f64::max)
    }

    /// Σ_i λ_i, which is −(n + 1) rather than 0 under Re λ_i = −1.
    pub fn lambda_sum(&self) -> C64 {
        self.lambdas().iter().sum()
    }

    /// Character of the merged point: c₀ = 0, c_j = −2i·a_j.
    pub fn character(&self) -> Character {
        let mut c = vec![ZERO];
        c.extend(self.a.iter().map(|a| a * C64::new(0.0, -2.0)));
        Character::new(&c).expect("imaginary coefficients give a valid character")
    }

    /// u_i = Σ_{j ≤ i} y_j / Π_{k ≤ i, k ≠ j}(t_j − t_k).
    pub fn to_u(&self, y: &[C64]) -> Vec<C64> {
        let t = self.points();
        (0..y.len())
            .map(|i| {
                (0..=i)
                    .map(|j| {
                        let den: C64 = (0..=i).filter(|&k| k != j).map(|k| t[j] - t[k]).product();
                        y[j] / den
                    })
                    .sum()
            })
            .collect()
    }

    /// Same map through u_{i,0} = y_i, u_{i,j} = (u_{i,j−1} − u_{i−1,j−1})/(t_i − t_{i−j}).
    pub fn to_u_recursive(&self, y: &[C64]) -> Vec<C64> {
        let t = self.points();
        // col[i] holds u_{i,j-1}
        let mut col = y.to_vec();
        let mut out = vec![col[0]];
        for j in 1..y.len() {
            let mut next = col.clone();
            for i in j..y.len() {
                next[i] = (col[i] - col[i - 1]) / (t[i] - t[i - j]);
            }
            out.push(next[j]);
            col = next;
        }
        out
    }

    /// Inverse of `to_u` (Newton form): y_i = Σ_{j ≤ i} u_j Π_{k < j}(t_i − t_k).
    pub fn to_y(&self, u: &[C64]) -> Vec<C64> {
        let t = self.points();
        (0..u.len())
            .map(|i| {
                let mut acc = ZERO;
                let mut w = C64::new(1.0, 0.0);
                for j in 0..=i {
                    acc += u[j] * w;
                    w *= t[i] - t[j];
                }
                acc
            })
            .collect()
    }

    /// Complex determinant of y ↦ u.
    pub fn jacobian_det(&self) -> C64 {
        let t = self.points();
        (0..=self.n()).map(|i| (0..i).map(|k| t[i] - t[k]).product::<C64>().inv()).product()
    }

    /// |det_ℂ|: the real Jacobian is its square, so ψ ↦ |det_ℂ|·ψ∘u is unitary.
    pub fn unitary_weight(&self) -> f64 {
        self.jacobian_det().norm()
    }

    /// Merged point of order n + 1 at t₀ followed by simple unramified points.
    pub fn target_config(&self, others: &[C64]) -> Result<Configuration> {
        let mut clusters = vec![Cluster { t: self.t0, chi: self.character() }];
        clusters.extend(others.iter().map(|&t| Cluster { t, chi: Character::trivial(1) }));
        Configuration::new(clusters)
    }

    fn check_target(&self, cfg: &Configuration) -> Result<Vec<C64>> {
        let cl = cfg.clusters();
        if cl.is_empty() || cl[0].order() != self.n() + 1 || (cl[0].t - self.t0).norm() > 1e-12 {
            return Err(Error::ConfigInvalid("first cluster must be the merged point".into()));
        }
        if cl[1..].iter().any(|c| c.order() != 1 || !c.chi.is_trivial()) {
            return Err(Error::ConfigInvalid("other points must be simple and untwisted".into()));
        }
        let pts = self.points();
        let mut all = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        all.extend(cl[1..].iter().map(|c| c.t));
        if pts.iter().any(|p| all.iter().any(|q| (p - q).norm() < 1e-12)) {
            return Err(Error::ConfigInvalid("a merging point hits another marked point".into()));
        }
        Ok(all)
    }
}

/// Modified twisted operator ∫ψ((t_l − x)/(s − y_l)) Π|s − y_l|^{2λ_l} d²s/π at y; with
/// `modified = false` it is multiplied by Π|t_l − x|^{−λ_l}. Entries 0 and 1 are the gauge
/// anchors; their arguments coincide at one extra s, used as a quadrature center.
pub fn twisted_hecke_apply<F>(
    points: &[C64],
    lambda: &[C64],
    psi: &F,
    x: C64,
    y: &[C64],
    quad: &Quad,
    modified: bool,
) -> Result<C64>
where
    F: Fn(&[C64]) -> C64 + ?Sized,
{
    if points.len() != lambda.len() || points.len() != y.len() || points.len() < 2 {
        return Err(Error::DimensionMismatch("twisted operator inputs".into()));
    }
    if points.iter().any(|t| (t - x).norm() < 1e-12) {
        return Err(Error::EvaluationAtMarkedPoint(format!("x = {x}")));
    }
    let scale = y.iter().map(|v| v.norm()).fold(1.0, f64::max);
    for i in 0..y.len() {
        for j in i + 1..y.len() {
            if (y[i] - y[j]).norm() < 1e-14 * scale {
                return Err(Error::CoincidentCoordinates);
            }
        }
    }
    let mut centers = y.to_vec();
    centers.push(((points[0] - x) * y[1] - (points[1] - x) * y[0]) / (points[0] - points[1]));
    let mut args = Vec::with_capacity(y.len());
    let integral = quad.integrate(&centers, |s| {
        args.clear();
        let mut expo = ZERO;
        for ((&t, &l), &yl) in points.iter().zip(lambda).zip(y) {
            let den = s - yl;
            if den.norm() == 0.0 {
                return ZERO;
            }
            args.push((t - x) / den);
            expo += l * (2.0 * den.norm().ln());
        }
        let v = psi(&args);
        if v == ZERO {
            return v;
        }
        v * expo.exp()
    })?;
    if modified {
        return Ok(integral);
    }
    let pre: C64 = points.iter().zip(lambda).map(|(&t, &l)| (-l * (t - x).norm().ln()).exp()).product();
    Ok(integral * pre)
}

/// The untwisted operator in the classical form with t₀ = 0 and y₀ = 0:
/// Π_{i=0}^m |t_i − x| ∫ψ₁((t_i s − x y_i)/(s − y_i)) |s|^{m−2} / Π_{i≥1}|s − y_i|² d²s/π,
/// where `ts` and `y` hold t_1..t_m and y_1..y_m.
pub fn classical_kernel<F>(ts: &[C64], psi1: &F, x: C64, y: &[C64], quad: &Quad) -> Result<C64>
where
    F: Fn(&[C64]) -> C64 + ?Sized,
{
    if ts.len() != y.len() || ts.is_empty() {
        return Err(Error::DimensionMismatch("classical kernel inputs".into()));
    }
    if x.norm() < 1e-12 || ts.iter().any(|t| (t - x).norm() < 1e-12) {
        return Err(Error::EvaluationAtMarkedPoint(format!("x = {x}")));
    }
    let m = ts.len() as i32;
    let mut centers = vec![ZERO];
    centers.extend_from_slice(y);
    // ψ₁'s i-th argument vanishes (collides with y₀ = 0) at s = x·y_i/t_i
    centers.extend(ts.iter().zip(y).filter(|(t, _)| t.norm() > 0.0).map(|(t, v)| x * v / t));
    let mut args = Vec::with_capacity(ts.len());
    let integral = quad.integrate(&centers, |s| {
        args.clear();
        let mut density = s.norm().powi(m - 2);
        for (&t, &v) in ts.iter().zip(y) {
            let den = s - v;
            if den.norm() == 0.0 {
                return ZERO;
            }
            args.push((t * s - x * v) / den);
            density /= den.norm_sqr();
        }
        let val = psi1(&args);
        if val == ZERO {
            return val;
        }
        val * density
    })?;
    let pre = x.norm() * ts.iter().map(|t| (t - x).norm()).product::<f64>();
    Ok(integral * pre)
}

/// U⁻¹ℍ_x^{λ(δ)}U ψ at a homogeneous point u of the target layout; `target` has the merged
/// point as its first cluster.
pub fn conjugated_twisted_apply<F>(
    sched: &CollisionSchedule,
    target: &Configuration,
    psi: &F,
    x: C64,
    u: &[C64],
    quad: &Quad,
) -> Result<C64>
where
    F: Fn(&[C64]) -> C64 + Sync + ?Sized,
{
    let rest = sched.check_target(target)?;
    if u.len() != target.n_vars() {
        return Err(Error::DimensionMismatch(format!("{} != {}", u.len(), target.n_vars())));
    }
    let d = sched.n() + 1;
    let mut points = vec![rest[0], rest[1]];
    points.extend(sched.points());
    points.extend_from_slice(&rest[2..]);
    let mut lambda = vec![C64::new(-1.0, 0.0); 2];
    lambda.extend(sched.lambdas());
    lambda.resize(points.len(), C64::new(-1.0, 0.0));
    let mut y = u.to_vec();
    y[2..2 + d].copy_from_slice(&sched.to_y(&u[2..2 + d]));
    let psi_y = |args: &[C64]| {
        let mut w = args.to_vec();
        let uu = sched.to_u(&args[2..2 + d]);
        w[2..2 + d].copy_from_slice(&uu);
        psi(&w)
    };
    twisted_hecke_apply(&points, &lambda, &psi_y, x, &y, quad, true)
}

/// Direct evaluation of the two-point collision kernel (merged point t₀ of order 2, then
/// simple points `others`), at u = (u_a0, u_a1, u₀, u₁, …):
/// ∫ψ(−x/(s − u_a0), (1 − x)/(s − u_a1), (t₀ − x)/(s − u₀), 1/(s − u₀) + u₁(t₀ − x)/(s − u₀)², …)
///   · exp(sign·2a₁Re(u₁/(s − u₀))) / (|s − u₀|⁴ Π|s − u_k|²) d²s/π.
/// The collision limit has sign = −1.
#[allow(clippy::too_many_arguments)]
pub fn two_point_kernel<F>(t0: C64, a1: C64, others: &[C64], psi: &F, x: C64, u: &[C64], sign: f64, quad: &Quad) -> Result<C64>
where
    F: Fn(&[C64]) -> C64 + ?Sized,
{
    if u.len() != 4 + others.len() {
        return Err(Error::DimensionMismatch("two-point kernel inputs".into()));
    }
    let mut simple = vec![(ZERO, u[0]), (C64::new(1.0, 0.0), u[1])];
    simple.extend(others.iter().zip(&u[4..]).map(|(&t, &v)| (t, v)));
    let mut centers: Vec<C64> = simple.iter().map(|p| p.1).collect();
    centers.push(u[2]);
    centers.push((1.0 - x) * u[0] + x * u[1]);
    let mut args = vec![ZERO; u.len()];
    quad.integrate(&centers, |s| {
        let w = s - u[2];
        if w.norm() == 0.0 {
            return ZERO;
        }
        let mut density = w.norm_sqr().powi(-2);
        for (k, &(t, v)) in simple.iter().enumerate() {
            let den = s - v;
            if den.norm() == 0.0 {
                return ZERO;
            }
            let slot = if k < 2 { k } else { k + 2 };
            args[slot] = (t - x) / den;
            density /= den.norm_sqr();
        }
        args[2] = (t0 - x) / w;
        args[3] = 1.0 / w + u[3] * (t0 - x) / (w * w);
        let val = psi(&args);
        if val == ZERO {
            return val;
        }
        let phase = (a1 * (2.0 * sign * (u[3] / w).re)).exp();
        val * density * phase
    })
}

/// max_j |Π_i |s − y_i|^{2λ_i^{(j)}} − exp(2a_j Re[ε^j]log(s − 𝐮))| with y = to_y(u).
pub fn twist_factor_error(sched: &CollisionSchedule, s: C64, u: &[C64]) -> Result<f64> {
    let d = sched.n() + 1;
    if u.len() != d {
        return Err(Error::DimensionMismatch(format!("{} != {d}", u.len())));
    }
    let y = sched.to_y(u);
    let parts = sched.lambda_parts();
    let l = (-Jet::new(u, d)? + s).log()?;
    let mut err = 0.0f64;
    for j in 1..=sched.n() {
        let expo: C64 = (0..d).map(|i| parts[i][j - 1] * (2.0 * (s - y[i]).norm().ln())).sum();
        let limit = (sched.a[j - 1] * (2.0 * l.coeff(j).re)).exp();
        err = err.max((expo.exp() - limit).norm());
    }
    Ok(err)
}

/// max_j |divided differences of (t_i − x)/(s − y_i) − [ε^j](t₀ + ε − x)/(s − 𝐮)|.
pub fn argument_limit_error(sched: &CollisionSchedule, x: C64, s: C64, u: &[C64]) -> Result<f64> {
    let d = sched.n() + 1;
    if u.len() != d {
        return Err(Error::DimensionMismatch(format!("{} != {d}", u.len())));
    }
    let y = sched.to_y(u);
    let args: Vec<C64> = sched.points().iter().zip(&y).map(|(&t, &v)| (t - x) / (s - v)).collect();
    let dd = sched.to_u(&args);
    let jet = hecke_argument_jet(sched.t0, x, s, &Jet::new(u, d)?)?;
    Ok(dd.iter().enumerate().map(|(j, v)| (v - jet.coeff(j)).norm()).fold(0.0, f64::max))
}

pub const LIMIT_LADDER: [f64; 4] = [0.2, 0.1, 0.05, 0.025];
pub const LIMIT_TOL: f64 = 5e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitRow {
    pub delta: f64,
    /// relative ℓ² distance over the sample points
    pub distance: f64,
    /// largest pointwise error over the largest target value
    pub max_pointwise_error: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitStudy {
    pub rows: Vec<LimitRow>,
    pub strictly_decreasing: bool,
    pub endpoint_ok: bool,
    pub samples: usize,
    pub sum_rule_defect: f64,
    /// Σλ_i; nonzero, reported rather than enforced
    pub lambda_sum: [f64; 2],
}

/// Distances between U⁻¹ℍ_x^{λ(δ)}Uψ and the merged-point ℍ_xψ at the sample points
/// (homogeneous, target layout) for each δ.
#[allow(clippy::too_many_arguments)]
pub fn limit_study<F>(
    base: &CollisionSchedule,
    others: &[C64],
    deltas: &[f64],
    psi: &F,
    x: C64,
    points: &[Vec<C64>],
    quad: &Quad,
) -> Result<LimitStudy>
where
    F: Fn(&[C64]) -> C64 + Sync,
{
    let target = base.target_config(others)?;
    let want: Vec<C64> = points.par_iter().map(|u| eval_modified_point(&target, psi, x, u, quad)).collect::<Result<_>>()?;
    let wn = want.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let wmax = want.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rows: Vec<LimitRow> = deltas
        .par_iter()
        .map(|&delta| {
            let sched = base.with_delta(delta)?;
            let got: Vec<C64> = points
                .par_iter()
                .map(|u| conjugated_twisted_apply(&sched, &target, psi, x, u, quad))
                .collect::<Result<_>>()?;
            let diff: Vec<f64> = got.iter().zip(&want).map(|(g, w)| (g - w).norm()).collect();
            let dn = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
            let dmax = diff.iter().cloned().fold(0.0, f64::max);
            Ok(LimitRow {
                delta,
                distance: if wn > 0.0 { dn / wn } else { dn },
                max_pointwise_error: if wmax > 0.0 { dmax / wmax } else { dmax },
            })
        })
        .collect::<Result<_>>()?;
    let mut order: Vec<&LimitRow> = rows.iter().collect();
    order.sort_by(|a, b| b.delta.total_cmp(&a.delta));
    let strictly_decreasing =
        order.windows(2).all(|w| w[1].distance < w[0].distance) || order.iter().all(|r| r.distance == 0.0);
    let endpoint_ok = order.last().is_some_and(|r| r.distance < LIMIT_TOL);
    let sum = base.lambda_sum();
    Ok(LimitStudy {
        rows,
        strictly_decreasing,
        endpoint_ok,
        samples: points.len(),
        sum_rule_defect: base.sum_rule_defect(),
        lambda_sum: [sum.re, sum.im],
    })
}

/// Random homogeneous points (u_a0 = 0, u_a1 = 1) whose chart coordinates lie in the box of
/// half-width `radius`, with point constants kept `gap` apart from each other and the anchors.
pub fn sample_points<R: Rng>(cfg: &Configuration, count: usize, radius: f64, gap: f64, rng: &mut R) -> Vec<Vec<C64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let v: Vec<C64> = (0..cfg.chart_dim())
            .map(|_| C64::new(rng.gen_range(-radius..radius), rng.gen_range(-radius..radius)))
            .collect();
        let u = gauge_unfix(cfg, &v, ZERO, C64::new(1.0, 0.0));
        let consts: Vec<C64> = cfg.offsets().iter().map(|&o| u[o]).collect();
        let ok = (0..consts.len()).all(|i| (i + 1..consts.len()).all(|j| (consts[i] - consts[j]).norm() > gap));
        if ok {
            out.push(u);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hecke::{eval_hecke_point, Normalization};
    use crate::moduli::{Profile, TestFunction, TestTerm};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cx(a: f64, b: f64) -> C64 {
        C64::new(a, b)
    }

    #[test]
    fn two_point_lambdas() {
        let s = CollisionSchedule::new(cx(0.5, 0.0), 0.1, &[cx(0.0, 2.0)]).unwrap();
        let p = s.lambda_parts();
        assert!((p[0][0] - cx(0.0, -20.0)).norm() < 1e-12);
        assert!((p[1][0] - cx(0.0, 20.0)).norm() < 1e-12);
        let l = s.lambdas();
        assert!((l[0] - cx(-1.0, -20.0)).norm() < 1e-12 && (l[1] - cx(-1.0, 20.0)).norm() < 1e-12);
        assert!((s.lambda_sum() - cx(-2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn degenerate_schedules_rejected() {
        let bad = [
            CollisionSchedule::new(cx(0.5, 0.0), 0.1, &[cx(0.0, 1.0), cx(0.0, 0.0)]),
            CollisionSchedule::new(cx(0.5, 0.0), 0.0, &[cx(0.0, 1.0)]),
            CollisionSchedule::new(cx(0.5, 0.0), -0.1, &[cx(0.0, 1.0)]),
            CollisionSchedule::new(cx(0.5, 0.0), 0.1, &[cx(1.0, 1.0)]),
            CollisionSchedule::new(cx(0.5, 0.0), 0.1, &[]),
        ];
        for b in bad {
            assert!(matches!(b, Err(Error::DegenerateSchedule(_))));
        }
    }

    #[test]
    fn newton_coordinates() {
        let s = CollisionSchedule::new(cx(0.0, 0.0), 0.1, &[cx(0.0, 1.0)]).unwrap();
        let u = s.to_u(&[cx(1.0, 0.0), cx(2.0, 0.0)]);
        assert!((u[0] - cx(1.0, 0.0)).norm() < 1e-12 && (u[1] - cx(10.0, 0.0)).norm() < 1e-9);

        let s = CollisionSchedule::new(cx(-0.3, 0.2), 0.3, &[cx(0.0, 1.0), cx(0.0, -0.5), cx(0.0, 0.2)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let y: Vec<C64> = (0..4).map(|_| cx(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let a = s.to_u(&y);
        let b = s.to_u_recursive(&y);
        for (p, q) in a.iter().zip(&b) {
            assert!((p - q).norm() < 1e-10 * p.norm().max(1.0), "{p} vs {q}");
        }
        let back = s.to_y(&a);
        for (p, q) in back.iter().zip(&y) {
            assert!((p - q).norm() < 1e-12);
        }
        // triangular map: the determinant is the product of the diagonal
        let det: C64 = (0..4).map(|i| s.to_u(&(0..4).map(|k| if k == i { cx(1.0, 0.0) } else { ZERO }).collect::<Vec<_>>())[i]).product();
        assert!((det - s.jacobian_det()).norm() < 1e-9 * det.norm());
    }

    proptest! {
        #[test]
        fn residue_sums_vanish(t0r in -2.0f64..2.0, t0i in -2.0f64..2.0, delta in 0.01f64..0.5, a in proptest::collection::vec(0.1f64..3.0, 1..5)) {
            let a: Vec<C64> = a.into_iter().map(|v| cx(0.0, v)).collect();
            let s = CollisionSchedule::new(cx(t0r, t0i), delta, &a).unwrap();
            let scale = s.lambda_parts().iter().flatten().fold(1.0, |m: f64, c| m.max(c.norm()));
            prop_assert!(s.sum_rule_defect() < 1e-12 * scale);
            prop_assert!(s.lambdas().iter().all(|l| (l.re + 1.0).abs() < 1e-12));
        }

        #[test]
        fn newton_round_trip(delta in 0.05f64..1.0, re in proptest::collection::vec(-3.0f64..3.0, 4), im in proptest::collection::vec(-3.0f64..3.0, 4)) {
            let s = CollisionSchedule::new(cx(0.2, 0.1), delta, &[cx(0.0, 1.0); 3]).unwrap();
            let y: Vec<C64> = re.iter().zip(&im).map(|(a, b)| cx(*a, *b)).collect();
            let back = s.to_y(&s.to_u(&y));
            for (p, q) in back.iter().zip(&y) {
                prop_assert!((p - q).norm() < 1e-9);
            }
        }
    }

    fn classical_psi(ts: &[C64]) -> TestFunction {
        let cfg = Configuration::new(ts.iter().map(|&t| Cluster { t, chi: Character::trivial(1) }).collect()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        TestFunction::random(&cfg, Profile::Gaussian, 2, 1.0, 1.0, &mut rng)
    }

    #[test]
    fn untwisted_matches_classical_kernel() {
        let ts = [cx(2.0, 1.0), cx(-1.0, 0.5)];
        let psi = classical_psi(&ts);
        let x = cx(0.4, -1.3);
        let y = [ZERO, cx(0.8, 0.3), cx(1.5, -0.7), cx(-0.6, 0.9)];
        let q = Quad::adaptive(1e-11);
        let mut points = vec![ZERO, cx(1.0, 0.0)];
        points.extend_from_slice(&ts);
        let lambda = vec![cx(-1.0, 0.0); 4];
        let got = twisted_hecke_apply(&points, &lambda, &|v: &[C64]| psi.eval(v), x, &y, &q, false).unwrap();
        let psi1 = |w: &[C64]| {
            let mut v = vec![ZERO];
            v.extend_from_slice(w);
            psi.eval(&v)
        };
        let mut t1 = vec![cx(1.0, 0.0)];
        t1.extend_from_slice(&ts);
        let want = classical_kernel(&t1, &psi1, x, &y[1..], &q).unwrap();
        assert!((got - want).norm() < 1e-8 * want.norm(), "{got} vs {want}");
        // the same operator through the jet engine, whose prefactor is Π|t − x| when χ = 0
        let eng = eval_hecke_point(psi.config(), &|v: &[C64]| psi.eval(v), x, &y, &q, Normalization::Definition).unwrap();
        assert!((got - eng).norm() < 1e-8 * want.norm());
    }

    #[test]
    fn modified_and_unmodified_differ_by_prefactor() {
        let ts = [cx(2.0, 1.0)];
        let psi = classical_psi(&ts);
        let points = [ZERO, cx(1.0, 0.0), ts[0]];
        let lambda = [cx(-1.0, 0.3), cx(-1.0, -0.7), cx(-1.0, 0.4)];
        let y = [cx(0.1, 0.0), cx(1.2, 0.3), cx(-0.5, 0.8)];
        let q = Quad::adaptive(1e-9);
        let f = |v: &[C64]| psi.eval(v);
        for x in [cx(0.4, -1.3), cx(-2.0, 0.5)] {
            let a = twisted_hecke_apply(&points, &lambda, &f, x, &y, &q, true).unwrap();
            let b = twisted_hecke_apply(&points, &lambda, &f, x, &y, &q, false).unwrap();
            let pre: C64 = points.iter().zip(&lambda).map(|(&t, &l)| C64::new((t - x).norm(), 0.0).powc(-l)).product();
            assert!((b - a * pre).norm() < 1e-12 * b.norm());
        }
        let zero = twisted_hecke_apply(&points, &lambda, &|_: &[C64]| ZERO, cx(0.4, -1.3), &y, &q, false).unwrap();
        assert_eq!(zero, ZERO);
    }

    fn bump(cfg: &Configuration, seed: u64) -> TestFunction {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        TestFunction::random(cfg, Profile::Bump, 2, 0.8, 1.5, &mut rng)
    }

    #[test]
    fn closed_form_two_point_kernel() {
        let a1 = cx(0.0, 0.7);
        let t0 = cx(-1.5, 0.5);
        let sched = CollisionSchedule::new(t0, 0.1, &[a1]).unwrap();
        let cfg = sched.target_config(&[]).unwrap();
        let psi = TestFunction::new(
            &cfg,
            Profile::Gaussian,
            vec![TestTerm { amp: cx(1.0, 0.5), center: vec![cx(-0.5, 0.5), cx(0.3, -0.2)], width: vec![1.0, 0.8] }],
        )
        .unwrap();
        let f = |v: &[C64]| psi.eval(v);
        let q = Quad::adaptive(1e-11);
        let x = cx(0.6, 1.1);
        let u = [ZERO, cx(1.0, 0.0), cx(-0.2, 0.4), cx(0.5, 0.3)];
        let want = eval_modified_point(&cfg, &f, x, &u, &q).unwrap();
        let minus = two_point_kernel(t0, a1, &[], &f, x, &u, -1.0, &q).unwrap();
        let plus = two_point_kernel(t0, a1, &[], &f, x, &u, 1.0, &q).unwrap();
        assert!((want - minus).norm() < 1e-8 * want.norm(), "{want} vs {minus}");
        assert!((want - plus).norm() > 1e-3 * want.norm());
    }

    #[test]
    fn pointwise_limits_converge() {
        let sched = CollisionSchedule::new(cx(0.5, -0.5), 0.2, &[cx(0.0, 0.6), cx(0.0, -0.4)]).unwrap();
        let u = [cx(0.3, 0.2), cx(0.4, -0.3), cx(-0.2, 0.5)];
        let (s, x) = (cx(1.7, 0.9), cx(-0.8, 1.2));
        let mut prev = (f64::INFINITY, f64::INFINITY);
        for delta in LIMIT_LADDER {
            let sd = sched.with_delta(delta).unwrap();
            let e = (twist_factor_error(&sd, s, &u).unwrap(), argument_limit_error(&sd, x, s, &u).unwrap());
            assert!(e.0 < prev.0 && e.1 < prev.1, "{delta}: {e:?} after {prev:?}");
            prev = e;
        }
        assert!(prev.0 < 2e-2 && prev.1 < 2e-2, "{prev:?}");
    }

    #[test]
    fn two_point_ladder_decreases() {
        let sched = CollisionSchedule::new(cx(-1.5, 0.5), 0.2, &[cx(0.0, 0.7)]).unwrap();
        let cfg = sched.target_config(&[]).unwrap();
        let psi = bump(&cfg, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pts = sample_points(&cfg, 6, 1.5, 0.2, &mut rng);
        let rep = limit_study(&sched, &[], &[0.2, 0.1, 0.05], &|v: &[C64]| psi.eval(v), cx(0.6, 1.1), &pts, &Quad::adaptive(1e-8))
            .unwrap();
        assert!(rep.strictly_decreasing, "{rep:?}");
        assert!(rep.sum_rule_defect < 1e-12);
    }

    #[test]
    fn zero_function_has_zero_distance() {
        let sched = CollisionSchedule::new(cx(-1.5, 0.5), 0.1, &[cx(0.0, 0.7)]).unwrap();
        let cfg = sched.target_config(&[]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let pts = sample_points(&cfg, 2, 1.0, 0.2, &mut rng);
        let rep = limit_study(&sched, &[], &[0.1], &|_: &[C64]| ZERO, cx(0.6, 1.1), &pts, &Quad::adaptive(1e-6)).unwrap();
        assert_eq!(rep.rows[0].distance, 0.0);
    }
}
