//! Quadrature over the complex plane with respect to d²s/π.
//!
//! A plan is a partition of unity w_k(s) ∝ |s - c_k|^{-p} over a set of centers; each
//! piece is integrated on a polar grid around its center with geometrically graded
//! Gauss-Legendre radial panels, an inverted panel out to ∞, and the trapezoid rule
//! in angle. All weights are positive.

use std::f64::consts::PI;
use std::sync::OnceLock;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Cascade (pairwise) summation with bounded memory; the result depends only on the
/// order of the input.
pub fn pairwise_sum<I: IntoIterator<Item = C64>>(it: I) -> C64 {
    let mut acc = PairwiseAcc::default();
    for v in it {
        acc.push(v);
    }
    acc.total()
}

const BLOCK: usize = 32;

#[derive(Default, Clone)]
pub struct PairwiseAcc {
    block: C64,
    in_block: usize,
    levels: Vec<Option<C64>>,
}

impl PairwiseAcc {
    pub fn push(&mut self, v: C64) {
        self.block += v;
        self.in_block += 1;
        if self.in_block == BLOCK {
            let mut carry = self.block;
            self.block = C64::new(0.0, 0.0);
            self.in_block = 0;
            for slot in self.levels.iter_mut() {
                match slot.take() {
                    Some(prev) => carry += prev,
                    None => {
                        *slot = Some(carry);
                        return;
                    }
                }
            }
            self.levels.push(Some(carry));
        }
    }

    pub fn total(&self) -> C64 {
        let mut t = self.block;
        for v in self.levels.iter().flatten() {
            t += *v;
        }
        t
    }
}

/// Gauss-Legendre nodes and weights on [0, 1] (Golub-Welsch).
pub fn gauss_legendre(n: usize) -> &'static (Vec<f64>, Vec<f64>) {
    static CACHE: OnceLock<Vec<(Vec<f64>, Vec<f64>)>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| (0..=64).map(compute_gl).collect());
    assert!(n >= 1 && n <= 64, "Gauss-Legendre order {n} unsupported");
    &cache[n]
}

fn compute_gl(n: usize) -> (Vec<f64>, Vec<f64>) {
    if n == 0 {
        return (vec![], vec![]);
    }
    let mut j = DMatrix::<f64>::zeros(n, n);
    for k in 1..n {
        let b = k as f64 / ((4 * k * k - 1) as f64).sqrt();
        j[(k, k - 1)] = b;
        j[(k - 1, k)] = b;
    }
    let eig = SymmetricEigen::new(j);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            ((eig.eigenvalues[i] + 1.0) / 2.0, v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    // symmetrize against round-off
    for i in 0..n / 2 {
        let a = pairs[i];
        let b = pairs[n - 1 - i];
        let x = 0.5 * (a.0 + 1.0 - b.0);
        let w = 0.5 * (a.1 + b.1);
        pairs[i] = (x, w);
        pairs[n - 1 - i] = (1.0 - x, w);
    }
    pairs.into_iter().unzip()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlanSpec {
    /// Gauss-Legendre nodes per radial panel.
    pub gl: usize,
    /// Geometric panels between 0 and half the distance to the nearest other center.
    pub inner_levels: usize,
    /// Angular nodes per ring.
    pub n_theta: usize,
    /// Exponent p of the partition of unity.
    pub pu_power: i32,
    /// Radial panel growth factor.
    pub ratio: f64,
    /// Extra radial panels around the rings through the other centers.
    pub ring_breaks: bool,
}

impl PlanSpec {
    /// Cheap rule for grid operators, where interpolation error dominates.
    pub fn coarse() -> Self {
        PlanSpec { gl: 4, inner_levels: 3, n_theta: 16, pu_power: 4, ratio: 2.0, ring_breaks: false }
    }

    pub fn standard() -> Self {
        PlanSpec { gl: 8, inner_levels: 4, n_theta: 32, pu_power: 8, ratio: 2.0, ring_breaks: true }
    }

    pub fn fine() -> Self {
        PlanSpec { gl: 8, inner_levels: 5, n_theta: 48, pu_power: 8, ratio: 2.0, ring_breaks: true }
    }

    /// Next level of a refinement ladder.
    pub fn refined(&self) -> Self {
        PlanSpec {
            gl: (self.gl + 2).min(64),
            inner_levels: self.inner_levels + 1,
            n_theta: self.n_theta * 3 / 2,
            pu_power: self.pu_power,
            ratio: self.ratio,
            ring_breaks: self.ring_breaks,
        }
    }

    pub fn level(k: usize) -> Self {
        let mut s = PlanSpec::coarse();
        for _ in 0..k {
            s = s.refined();
        }
        s
    }
}

impl Default for PlanSpec {
    fn default() -> Self {
        PlanSpec::standard()
    }
}

#[derive(Clone, Debug)]
pub struct QuadraturePlan {
    pub centers: Vec<C64>,
    pub nodes: Vec<C64>,
    pub weights: Vec<f64>,
}

/// Radial nodes (r, weight including the Jacobian r) for one center.
fn radial_rule(rho: f64, far: f64, breaks: &[f64], spec: &PlanSpec) -> Vec<(f64, f64)> {
    let (gx, gw) = gauss_legendre(spec.gl);
    let mut ladder = vec![];
    let mut a = rho * 0.5 / spec.ratio.powi(spec.inner_levels as i32);
    for _ in 0..spec.inner_levels {
        ladder.push(a);
        a *= spec.ratio;
    }
    ladder.push(a);
    while a < far {
        a *= spec.ratio;
        ladder.push(a);
    }
    // rings through other centers get their own panels; no merging, so the rule stays
    // continuous in the center positions
    let mut edges = vec![0.0];
    edges.extend(ladder);
    for &b in breaks {
        if spec.ring_breaks && b < far * spec.ratio {
            edges.extend([0.5 * b, 0.75 * b, b, 1.25 * b, 1.5 * b]);
        }
    }
    edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut out = Vec::new();
    for w in edges.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        for (x, wt) in gx.iter().zip(gw) {
            let r = lo + (hi - lo) * x;
            out.push((r, wt * (hi - lo) * r));
        }
    }
    // r = R/τ on (0, 1]: dr = R/τ² dτ
    let big = *edges.last().unwrap();
    for (x, wt) in gx.iter().zip(gw) {
        let r = big / x;
        out.push((r, wt * big / (x * x) * r));
    }
    out
}

fn dedup_centers(centers: &[C64]) -> Vec<C64> {
    let scale = centers.iter().map(|c| c.norm()).fold(1.0, f64::max);
    let mut out: Vec<C64> = Vec::new();
    for &c in centers {
        if out.iter().all(|o| (o - c).norm() > 1e-12 * scale) {
            out.push(c);
        }
    }
    out
}

impl QuadraturePlan {
    pub fn build(centers: &[C64], spec: &PlanSpec) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::ConfigInvalid("quadrature plan needs a center".into()));
        }
        if centers.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(Error::QuadratureNonConvergence("non-finite center".into()));
        }
        let centers = dedup_centers(centers);
        if centers.len() > 32 {
            return Err(Error::ConfigInvalid("at most 32 quadrature centers".into()));
        }
        let mut nodes = Vec::new();
        let mut weights = Vec::new();
        let dtheta = 2.0 * PI / spec.n_theta as f64;
        for (ci, &c) in centers.iter().enumerate() {
            let mut rho = f64::INFINITY;
            let mut span: f64 = 0.0;
            for (cj, &o) in centers.iter().enumerate() {
                if cj != ci {
                    let d = (o - c).norm();
                    rho = rho.min(d);
                    span = span.max(d);
                }
            }
            if !rho.is_finite() {
                rho = 1.0;
                span = 1.0;
            }
            let far = 4.0 * span.max(rho);
            let breaks: Vec<f64> = centers
                .iter()
                .enumerate()
                .filter(|(cj, _)| *cj != ci)
                .map(|(_, o)| (o - c).norm())
                .collect();
            // rotate each center's rings so they do not line up with the real axis
            let phase0 = dtheta * (0.5 + 0.1 * ci as f64);
            for (r, wr) in radial_rule(rho, far, &breaks, spec) {
                for j in 0..spec.n_theta {
                    let th = phase0 + dtheta * j as f64;
                    let s = c + C64::from_polar(r, th);
                    let pu = partition_weight(&centers, ci, s, spec.pu_power);
                    if pu == 0.0 {
                        continue;
                    }
                    nodes.push(s);
                    weights.push(pu * wr * dtheta / PI);
                }
            }
        }
        Ok(QuadraturePlan { centers, nodes, weights })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate<F: FnMut(C64) -> C64>(&self, mut f: F) -> C64 {
        let mut acc = PairwiseAcc::default();
        for (s, w) in self.nodes.iter().zip(&self.weights) {
            acc.push(f(*s) * *w);
        }
        acc.total()
    }
}

fn partition_weight(centers: &[C64], k: usize, s: C64, p: i32) -> f64 {
    let mut dists = [0.0; 32];
    let dists = &mut dists[..centers.len()];
    for (d, c) in dists.iter_mut().zip(centers) {
        *d = (s - c).norm();
        if *d == 0.0 {
            return 0.0;
        }
    }
    // w_k = 1 / Σ_j (r_k / r_j)^p
    let rk = dists[k];
    1.0 / dists.iter().map(|rj| (rk / rj).powi(p)).sum::<f64>()
}

/// Options for adaptive cubature on the partition-of-unity polar patches.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveSpec {
    pub rel_tol: f64,
    /// Gauss-Legendre nodes per direction on each panel.
    pub gl: usize,
    pub max_depth: usize,
    /// Angular sectors per root ring.
    pub sectors: usize,
    pub pu_power: i32,
}

impl AdaptiveSpec {
    pub fn with_tol(rel_tol: f64) -> Self {
        AdaptiveSpec { rel_tol, gl: 6, max_depth: 14, sectors: 8, pu_power: 8 }
    }
}

impl Default for AdaptiveSpec {
    fn default() -> Self {
        AdaptiveSpec::with_tol(1e-9)
    }
}

/// Result of an adaptive integration.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdaptiveResult {
    pub value: C64,
    pub error_estimate: f64,
    pub evaluations: usize,
}

#[derive(Clone, Copy)]
struct Panel {
    center: usize,
    /// radial variable is r, or τ with r = big/τ when `inverted`
    lo: f64,
    hi: f64,
    th_lo: f64,
    th_hi: f64,
    inverted: bool,
    big: f64,
}

struct Cubature<'a, F> {
    centers: &'a [C64],
    f: F,
    p: i32,
    gl: usize,
    evals: usize,
}

impl<'a, F: FnMut(C64) -> C64> Cubature<'a, F> {
    fn panel(&mut self, pn: &Panel) -> C64 {
        let (gx, gw) = gauss_legendre(self.gl);
        let c = self.centers[pn.center];
        let dr = pn.hi - pn.lo;
        let dth = pn.th_hi - pn.th_lo;
        let mut acc = C64::new(0.0, 0.0);
        for (xr, wr) in gx.iter().zip(gw) {
            let v = pn.lo + dr * xr;
            let (r, jac) = if pn.inverted { (pn.big / v, pn.big / (v * v)) } else { (v, 1.0) };
            let wrad = wr * dr * jac * r;
            for (xt, wt) in gx.iter().zip(gw) {
                let th = pn.th_lo + dth * xt;
                let s = c + C64::from_polar(r, th);
                let pu = partition_weight(self.centers, pn.center, s, self.p);
                if pu == 0.0 {
                    continue;
                }
                self.evals += 1;
                let val = (self.f)(s);
                acc += val * (pu * wrad * wt * dth / PI);
            }
        }
        acc
    }

    fn split(pn: &Panel) -> [Panel; 4] {
        let rm = 0.5 * (pn.lo + pn.hi);
        let tm = 0.5 * (pn.th_lo + pn.th_hi);
        [
            Panel { hi: rm, th_hi: tm, ..*pn },
            Panel { lo: rm, th_hi: tm, ..*pn },
            Panel { hi: rm, th_lo: tm, ..*pn },
            Panel { lo: rm, th_lo: tm, ..*pn },
        ]
    }

    /// Returns (value, unresolved error).
    fn refine(&mut self, pn: &Panel, coarse: C64, tol: f64, depth: usize, max_depth: usize) -> (C64, f64) {
        let kids = Self::split(pn);
        let vals: Vec<C64> = kids.iter().map(|k| self.panel(k)).collect();
        let fine: C64 = vals.iter().sum();
        let err = (fine - coarse).norm();
        if err <= tol {
            return (fine, 0.0);
        }
        if depth >= max_depth {
            return (fine, err);
        }
        let mut total = C64::new(0.0, 0.0);
        let mut unresolved = 0.0;
        for (k, v) in kids.iter().zip(vals) {
            let (val, e) = self.refine(k, v, tol * 0.5, depth + 1, max_depth);
            total += val;
            unresolved += e;
        }
        (total, unresolved)
    }
}

fn root_panels(centers: &[C64], spec: &AdaptiveSpec) -> Vec<Panel> {
    let mut out = vec![];
    for (ci, &c) in centers.iter().enumerate() {
        let mut rho = f64::INFINITY;
        let mut span: f64 = 0.0;
        let mut rings = vec![];
        for (cj, &o) in centers.iter().enumerate() {
            if cj != ci {
                let d = (o - c).norm();
                rho = rho.min(d);
                span = span.max(d);
                rings.push(d);
            }
        }
        if !rho.is_finite() {
            rho = 1.0;
            span = 1.0;
        }
        let far = 4.0 * span.max(rho);
        let mut edges = vec![0.0, rho / 8.0, rho / 4.0, rho / 2.0];
        let mut a = rho / 2.0;
        while a < far {
            a *= 2.0;
            edges.push(a);
        }
        for d in rings {
            edges.push(d);
        }
        edges.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let big = *edges.last().unwrap();
        let dth = 2.0 * PI / spec.sectors as f64;
        let th0 = 0.1 * ci as f64 + 0.05;
        for j in 0..spec.sectors {
            let th_lo = th0 + dth * j as f64;
            let th_hi = th_lo + dth;
            for w in edges.windows(2) {
                if w[1] > w[0] {
                    out.push(Panel { center: ci, lo: w[0], hi: w[1], th_lo, th_hi, inverted: false, big });
                }
            }
            out.push(Panel { center: ci, lo: 0.0, hi: 1.0, th_lo, th_hi, inverted: true, big });
        }
    }
    out
}

/// A quadrature choice for pointwise integrals over ℂ.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quad {
    Fixed(PlanSpec),
    Adaptive(AdaptiveSpec),
}

impl Quad {
    pub fn adaptive(rel_tol: f64) -> Self {
        Quad::Adaptive(AdaptiveSpec::with_tol(rel_tol))
    }

    pub fn integrate<F: FnMut(C64) -> C64>(&self, centers: &[C64], f: F) -> Result<C64> {
        match self {
            Quad::Fixed(spec) => Ok(QuadraturePlan::build(centers, spec)?.integrate(f)),
            Quad::Adaptive(spec) => Ok(integrate_adaptive(centers, f, spec)?.value),
        }
    }
}

impl From<PlanSpec> for Quad {
    fn from(s: PlanSpec) -> Self {
        Quad::Fixed(s)
    }
}

/// Adaptive cubature of f over ℂ with respect to d²s/π.
pub fn integrate_adaptive<F: FnMut(C64) -> C64>(centers: &[C64], f: F, spec: &AdaptiveSpec) -> Result<AdaptiveResult> {
    if centers.is_empty() {
        return Err(Error::ConfigInvalid("quadrature needs a center".into()));
    }
    if centers.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
        return Err(Error::QuadratureNonConvergence("non-finite center".into()));
    }
    let centers = dedup_centers(centers);
    if centers.len() > 32 {
        return Err(Error::ConfigInvalid("at most 32 quadrature centers".into()));
    }
    let roots = root_panels(&centers, spec);
    let mut cub = Cubature { centers: &centers, f, p: spec.pu_power, gl: spec.gl, evals: 0 };
    let coarse: Vec<C64> = roots.iter().map(|p| cub.panel(p)).collect();
    let scale = coarse.iter().map(|v| v.norm()).sum::<f64>().max(1e-300);
    let tol = spec.rel_tol * scale / (roots.len() as f64).sqrt();
    let mut acc = PairwiseAcc::default();
    let mut unresolved = 0.0;
    for (p, q) in roots.iter().zip(coarse) {
        let (v, e) = cub.refine(p, q, tol, 0, spec.max_depth);
        acc.push(v);
        unresolved += e;
    }
    let value = acc.total();
    if !value.re.is_finite() || !value.im.is_finite() {
        return Err(Error::QuadratureNonConvergence("non-finite integrand".into()));
    }
    if unresolved > 100.0 * spec.rel_tol * value.norm().max(scale * 1e-3) {
        return Err(Error::QuadratureNonConvergence(format!(
            "unresolved error {unresolved:.3e} at depth {}",
            spec.max_depth
        )));
    }
    Ok(AdaptiveResult { value, error_estimate: unresolved, evaluations: cub.evals })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let (x, w) = gauss_legendre(5);
        let s: f64 = x.iter().zip(w).map(|(x, w)| w * x.powi(9)).sum();
        assert!((s - 0.1).abs() < 1e-14);
    }

    #[test]
    fn gaussian_and_rational_masses() {
        let plan = QuadraturePlan::build(&[cx(0.0, 0.0), cx(1.0, 0.0), cx(0.3, 2.0)], &PlanSpec::standard()).unwrap();
        let g = plan.integrate(|s| C64::new((-(s - cx(0.5, 0.5)).norm_sqr()).exp(), 0.0));
        assert!((g.re - 1.0).abs() < 1e-5, "{g}");
        let r = plan.integrate(|s| C64::new(1.0 / (1.0 + s.norm_sqr()).powi(2), 0.0));
        assert!((r.re - 1.0).abs() < 1e-5, "{r}");
        let centers = [cx(0.0, 0.0), cx(1.0, 0.0), cx(0.3, 2.0)];
        let a = integrate_adaptive(&centers, |s| C64::new(1.0 / (1.0 + s.norm_sqr()).powi(2), 0.0), &AdaptiveSpec::with_tol(1e-11)).unwrap();
        assert!((a.value.re - 1.0).abs() < 1e-10, "{:?}", a);
    }

    #[test]
    fn pairwise_is_order_deterministic() {
        let v: Vec<C64> = (0..1000).map(|i| cx((i as f64).sin(), 1.0 / (1.0 + i as f64))).collect();
        assert_eq!(pairwise_sum(v.clone()), pairwise_sum(v));
    }
}
