//! Configurations of marked points, the gauge-fixed chart and functions on it.
//!
//! Homogeneous coordinates are laid out as [u_a0, u_a1, cluster 0 jet, cluster 1 jet, …];
//! the anchors sit at t = 0 and t = 1, the third anchor is ∞.

use num_complex::Complex64 as C64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{HyperDual, Scalar};
use crate::error::{Error, Result};
use crate::jet::{Character, Jet};

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    pub t: C64,
    pub chi: Character,
}

impl Cluster {
    pub fn order(&self) -> usize {
        self.chi.order()
    }
}

/// A finite marked point as seen by the kernel (anchors included).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub t: C64,
    pub chi: Character,
}

impl Point {
    pub fn order(&self) -> usize {
        self.chi.order()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Configuration {
    clusters: Vec<Cluster>,
}

impl Configuration {
    pub fn new(clusters: Vec<Cluster>) -> Result<Self> {
        let anchors = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)];
        let mut seen: Vec<C64> = anchors.to_vec();
        let mut c0_sum = C64::new(0.0, 0.0);
        for cl in &clusters {
            if !cl.t.re.is_finite() || !cl.t.im.is_finite() {
                return Err(Error::ConfigInvalid("non-finite marked point".into()));
            }
            if seen.iter().any(|p| (p - cl.t).norm() < 1e-12) {
                return Err(Error::ConfigInvalid(format!("marked point {} repeats", cl.t)));
            }
            seen.push(cl.t);
            c0_sum += cl.chi.coeff(0);
        }
        if c0_sum.norm() > 1e-9 {
            return Err(Error::ConfigInvalid(format!(
                "constant character terms must sum to zero, got {c0_sum}"
            )));
        }
        Ok(Configuration { clusters })
    }

    /// One simple unramified point t (besides 0, 1, ∞).
    pub fn classical(t: C64) -> Self {
        Configuration::new(vec![Cluster { t, chi: Character::trivial(1) }]).expect("valid")
    }

    /// One double point at t with character (0, c₁).
    pub fn wild_minimal(t: C64, c1: C64) -> Result<Self> {
        Configuration::new(vec![Cluster {
            t,
            chi: Character::new(&[C64::new(0.0, 0.0), c1])?,
        }])
    }

    pub fn anchors_only() -> Self {
        Configuration { clusters: vec![] }
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// m, with m + 1 the total multiplicity of finite points.
    pub fn m(&self) -> usize {
        1 + self.chart_dim()
    }

    /// Complex dimension of the gauge-fixed chart, Σ d_i = m - 1.
    pub fn chart_dim(&self) -> usize {
        self.clusters.iter().map(|c| c.order()).sum()
    }

    /// Number of homogeneous coordinates.
    pub fn n_vars(&self) -> usize {
        2 + self.chart_dim()
    }

    /// All finite points, anchors first.
    pub fn points(&self) -> Vec<Point> {
        let mut p = vec![
            Point { t: C64::new(0.0, 0.0), chi: Character::trivial(1) },
            Point { t: C64::new(1.0, 0.0), chi: Character::trivial(1) },
        ];
        p.extend(self.clusters.iter().map(|c| Point { t: c.t, chi: c.chi }));
        p
    }

    /// Offsets of each point's coordinates in a homogeneous vector.
    pub fn offsets(&self) -> Vec<usize> {
        let mut off = vec![0, 1];
        let mut k = 2;
        for c in &self.clusters {
            off.push(k);
            k += c.order();
        }
        off
    }

    /// The jet of point l in a homogeneous vector.
    pub fn point_jet(&self, u: &[C64], l: usize) -> Jet {
        let off = self.offsets();
        let pts = self.points();
        let d = pts[l].order();
        Jet::new(&u[off[l]..off[l] + d], d).expect("order checked")
    }

    pub fn marked_points(&self) -> Vec<C64> {
        self.points().iter().map(|p| p.t).collect()
    }
}

/// Chart coordinates and the scale Δ = u_a1 - u_a0 of a homogeneous point.
pub fn gauge_fix(cfg: &Configuration, u: &[C64]) -> Result<(Vec<C64>, C64)> {
    if u.len() != cfg.n_vars() {
        return Err(Error::DimensionMismatch(format!("{} != {}", u.len(), cfg.n_vars())));
    }
    let delta = u[1] - u[0];
    if delta.norm() == 0.0 {
        return Err(Error::CoincidentCoordinates);
    }
    let mut v = Vec::with_capacity(cfg.chart_dim());
    let off = cfg.offsets();
    for (i, c) in cfg.clusters().iter().enumerate() {
        let o = off[i + 2];
        v.push((u[o] - u[0]) / delta);
        for j in 1..c.order() {
            v.push(u[o + j] / delta);
        }
    }
    Ok((v, delta))
}

/// Homogeneous representative with u_a0 = τ and u_a1 = τ + λ.
pub fn gauge_unfix(cfg: &Configuration, v: &[C64], tau: C64, lambda: C64) -> Vec<C64> {
    let mut u = vec![tau, tau + lambda];
    let mut k = 0;
    for c in cfg.clusters() {
        u.push(tau + lambda * v[k]);
        for j in 1..c.order() {
            u.push(lambda * v[k + j]);
        }
        k += c.order();
    }
    u
}

/// ψ_hom(u) = |Δ|^{-m} ψ_chart(gauge_fix(u)).
pub fn transport_factor(cfg: &Configuration, delta: C64) -> f64 {
    delta.norm().powi(-(cfg.m() as i32))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    Gaussian,
    Bump,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestTerm {
    pub amp: C64,
    pub center: Vec<C64>,
    pub width: Vec<f64>,
}

/// A smooth homogeneous function |Δ|^{-m} φ(ratios), φ a sum of Gaussians or compact bumps
/// in the chart coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct TestFunction {
    cfg: Configuration,
    profile: Profile,
    terms: Vec<TestTerm>,
}

impl TestFunction {
    pub fn new(cfg: &Configuration, profile: Profile, terms: Vec<TestTerm>) -> Result<Self> {
        let dim = cfg.chart_dim();
        for t in &terms {
            if t.center.len() != dim || t.width.len() != dim {
                return Err(Error::DimensionMismatch("test term size".into()));
            }
            if t.width.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::ConfigInvalid("test widths must be positive".into()));
            }
        }
        Ok(TestFunction { cfg: cfg.clone(), profile, terms })
    }

    /// Random sum of `nterms` profiles centred in the box of half-width `spread`.
    pub fn random<R: Rng>(
        cfg: &Configuration,
        profile: Profile,
        nterms: usize,
        spread: f64,
        width: f64,
        rng: &mut R,
    ) -> Self {
        let dim = cfg.chart_dim();
        let terms = (0..nterms)
            .map(|_| TestTerm {
                amp: C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)),
                center: (0..dim)
                    .map(|_| C64::new(rng.gen_range(-spread..spread), rng.gen_range(-spread..spread)))
                    .collect(),
                width: (0..dim).map(|_| width * rng.gen_range(0.8..1.25)).collect(),
            })
            .collect();
        TestFunction { cfg: cfg.clone(), profile, terms }
    }

    pub fn config(&self) -> &Configuration {
        &self.cfg
    }

    fn profile_generic<T: Scalar>(&self, xi: &[T], xib: &[T]) -> T {
        let mut acc = T::cst(C64::new(0.0, 0.0));
        for term in &self.terms {
            let mut r2 = T::cst(C64::new(0.0, 0.0));
            for k in 0..xi.len() {
                let a = xi[k] - T::cst(term.center[k]);
                let b = xib[k] - T::cst(term.center[k].conj());
                r2 = r2 + (a * b).scale(C64::new(1.0 / (term.width[k] * term.width[k]), 0.0));
            }
            let val = match self.profile {
                Profile::Gaussian => (-r2).exp(),
                Profile::Bump => {
                    if r2.value().re >= 1.0 {
                        continue;
                    }
                    let one = T::cst(C64::new(1.0, 0.0));
                    (one - one / (one - r2)).exp()
                }
            };
            acc = acc + val.scale(term.amp);
        }
        acc
    }

    /// Value on the chart (u_a0 = 0, u_a1 = 1).
    pub fn eval_chart(&self, v: &[C64]) -> C64 {
        let vb: Vec<C64> = v.iter().map(|z| z.conj()).collect();
        self.profile_generic(v, &vb)
    }

    /// Evaluation with independent holomorphic (z) and antiholomorphic (w) arguments.
    pub fn eval_split<T: Scalar>(&self, z: &[T], w: &[T]) -> T {
        let dz = z[1] - z[0];
        let dw = w[1] - w[0];
        let mut xi = Vec::with_capacity(self.cfg.chart_dim());
        let mut xib = Vec::with_capacity(self.cfg.chart_dim());
        let off = self.cfg.offsets();
        for (i, c) in self.cfg.clusters().iter().enumerate() {
            let o = off[i + 2];
            xi.push((z[o] - z[0]) / dz);
            xib.push((w[o] - w[0]) / dw);
            for j in 1..c.order() {
                xi.push(z[o + j] / dz);
                xib.push(w[o + j] / dw);
            }
        }
        let m = self.cfg.m() as f64;
        let pre = ((dz * dw).ln().scale(C64::new(-0.5 * m, 0.0))).exp();
        pre * self.profile_generic(&xi, &xib)
    }

    pub fn eval(&self, u: &[C64]) -> C64 {
        let w: Vec<C64> = u.iter().map(|z| z.conj()).collect();
        self.eval_split(u, &w)
    }

    /// Value, holomorphic gradient and Hessian at a homogeneous point.
    pub fn jet2(&self, u: &[C64]) -> (C64, Vec<C64>, Vec<Vec<C64>>) {
        let n = u.len();
        let w: Vec<HyperDual> = u.iter().map(|z| HyperDual::cst(z.conj())).collect();
        let mut grad = vec![C64::new(0.0, 0.0); n];
        let mut hess = vec![vec![C64::new(0.0, 0.0); n]; n];
        let mut value = C64::new(0.0, 0.0);
        for j in 0..n {
            for k in j..n {
                let z: Vec<HyperDual> = (0..n)
                    .map(|i| HyperDual::var(u[i], i == j, i == k))
                    .collect();
                let r = self.eval_split(&z, &w);
                hess[j][k] = r.ab;
                hess[k][j] = r.ab;
                if k == j {
                    grad[j] = r.a;
                    value = r.v;
                }
            }
        }
        if n == 0 {
            value = self.eval(u);
        }
        (value, grad, hess)
    }
}

/// Uniform grid on the chart, N nodes per real axis, box [-R_k, R_k]² per complex coordinate.
///
/// The state is extended by zero continuously: values fall linearly to zero over one
/// spacing past the outermost nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct StateGrid {
    n: usize,
    radius: Vec<f64>,
    values: Vec<C64>,
}

impl StateGrid {
    pub fn zeros(n: usize, radius: &[f64]) -> Result<Self> {
        if n < 2 {
            return Err(Error::ConfigInvalid("grid needs at least 2 nodes per axis".into()));
        }
        if radius.iter().any(|r| !(*r > 0.0)) {
            return Err(Error::ConfigInvalid("grid radii must be positive".into()));
        }
        let len = n.pow(2 * radius.len() as u32);
        Ok(StateGrid { n, radius: radius.to_vec(), values: vec![C64::new(0.0, 0.0); len] })
    }

    pub fn with_values(&self, values: Vec<C64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} values for {} nodes",
                values.len(),
                self.values.len()
            )));
        }
        Ok(StateGrid { n: self.n, radius: self.radius.clone(), values })
    }

    pub fn nodes_per_axis(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.radius.len()
    }

    pub fn radius(&self) -> &[f64] {
        &self.radius
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[C64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [C64] {
        &mut self.values
    }

    pub fn spacing(&self, k: usize) -> f64 {
        2.0 * self.radius[k] / (self.n - 1) as f64
    }

    /// Lebesgue weight of one node.
    pub fn cell_volume(&self) -> f64 {
        (0..self.dim()).map(|k| self.spacing(k).powi(2)).product()
    }

    /// Chart point of a flat node index.
    pub fn node(&self, mut idx: usize) -> Vec<C64> {
        let mut v = Vec::with_capacity(self.dim());
        for k in 0..self.dim() {
            let h = self.spacing(k);
            let ir = idx % self.n;
            idx /= self.n;
            let ii = idx % self.n;
            idx /= self.n;
            v.push(C64::new(-self.radius[k] + ir as f64 * h, -self.radius[k] + ii as f64 * h));
        }
        v
    }

    /// Multilinear interpolation stencil: (flat index, weight) pairs with nonzero weight.
    pub fn stencil(&self, v: &[C64], out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.push((0, 1.0));
        for (k, z) in v.iter().enumerate().take(self.dim()) {
            if !self.extend_stencil(k, *z, out) {
                return;
            }
        }
    }

    /// Stencil over a subset of complex coordinates, with flat offsets in the full grid.
    pub fn partial_stencil(&self, coords: &[(usize, C64)], out: &mut Vec<(usize, f64)>) {
        out.clear();
        out.push((0, 1.0));
        for &(k, z) in coords {
            if !self.extend_stencil(k, z, out) {
                return;
            }
        }
    }

    /// Flat-index stride of the real (0) or imaginary (1) axis of coordinate k.
    pub fn stride(&self, k: usize, part: usize) -> usize {
        self.n.pow((2 * k + part) as u32)
    }

    /// Coordinate value of node index i on the real or imaginary axis of coordinate k.
    pub fn axis_value(&self, k: usize, i: usize) -> f64 {
        -self.radius[k] + i as f64 * self.spacing(k)
    }

    fn extend_stencil(&self, k: usize, z: C64, out: &mut Vec<(usize, f64)>) -> bool {
        let n = self.n as isize;
        let h = self.spacing(k);
        for (part, coord) in [z.re, z.im].into_iter().enumerate() {
            let stride = self.stride(k, part);
            let p = (coord + self.radius[k]) / h;
            if !(p > -1.0 && p < n as f64) {
                out.clear();
                return false;
            }
            let i0 = p.floor() as isize;
            let f = p - i0 as f64;
            let len = out.len();
            for e in 0..len {
                let (idx, w) = out[e];
                let mut first = true;
                for (i, wi) in [(i0, 1.0 - f), (i0 + 1, f)] {
                    if i < 0 || i >= n || wi == 0.0 {
                        continue;
                    }
                    let entry = (idx + i as usize * stride, w * wi);
                    if first {
                        out[e] = entry;
                        first = false;
                    } else {
                        out.push(entry);
                    }
                }
                if first {
                    out[e] = (usize::MAX, 0.0);
                }
            }
            out.retain(|e| e.0 != usize::MAX);
            if out.is_empty() {
                return false;
            }
        }
        true
    }

    pub fn interpolate(&self, v: &[C64]) -> C64 {
        let mut st = Vec::with_capacity(1 << (2 * self.dim()));
        self.stencil(v, &mut st);
        st.iter().map(|&(i, w)| self.values[i] * w).sum()
    }

    /// ⟨a, b⟩ = Σ conj(a) b · cell volume.
    pub fn inner(&self, other: &StateGrid) -> Result<C64> {
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch("grid sizes differ".into()));
        }
        let s: C64 = crate::quadrature::pairwise_sum(
            self.values.iter().zip(&other.values).map(|(a, b)| a.conj() * b),
        );
        Ok(s * self.cell_volume())
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).map(|v| v.re.max(0.0).sqrt()).unwrap_or(0.0)
    }
}

/// Samples a chart function at the grid nodes.
pub fn sample_state<F: Fn(&[C64]) -> C64>(grid: &StateGrid, f: F) -> StateGrid {
    let values = (0..grid.len()).map(|i| f(&grid.node(i))).collect();
    grid.with_values(values).expect("same size")
}

/// Nodal values f - (h²/12)Σ_a ∂²_a f, with second differences of f at the grid spacing.
///
/// Linear interpolation of these values has zero mean error over a cell to second order,
/// instead of the (h²/12) f'' bias of plain nodal sampling.
pub fn sample_state_prefiltered<F: Fn(&[C64]) -> C64>(grid: &StateGrid, f: F) -> StateGrid {
    let dim = grid.dim();
    let values = (0..grid.len())
        .map(|i| {
            let v = grid.node(i);
            let f0 = f(&v);
            let mut corr = C64::new(0.0, 0.0);
            let mut p = v.clone();
            for k in 0..dim {
                let h = grid.spacing(k);
                for dir in [C64::new(h, 0.0), C64::new(0.0, h)] {
                    p[k] = v[k] + dir;
                    let fp = f(&p);
                    p[k] = v[k] - dir;
                    let fm = f(&p);
                    p[k] = v[k];
                    corr += fp - f0 * 2.0 + fm;
                }
            }
            f0 - corr / 12.0
        })
        .collect();
    grid.with_values(values).expect("same size")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cx(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn gauge_roundtrip() {
        let cfg = Configuration::wild_minimal(cx(2.0, 1.0), cx(1.0, 0.0)).unwrap();
        let v = vec![cx(0.3, -0.2), cx(0.5, 0.1)];
        let u = gauge_unfix(&cfg, &v, cx(1.5, 2.0), cx(-0.7, 0.4));
        let (w, delta) = gauge_fix(&cfg, &u).unwrap();
        assert!((delta - cx(-0.7, 0.4)).norm() < 1e-15);
        for k in 0..2 {
            assert!((w[k] - v[k]).norm() < 1e-14);
        }
    }

    #[test]
    fn homogeneity_of_test_functions() {
        let cfg = Configuration::wild_minimal(cx(2.0, 1.0), cx(1.0, 0.0)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let f = TestFunction::random(&cfg, Profile::Gaussian, 3, 1.0, 0.8, &mut rng);
        let v = vec![cx(0.3, -0.2), cx(0.5, 0.1)];
        let u1 = gauge_unfix(&cfg, &v, cx(0.0, 0.0), cx(1.0, 0.0));
        let u2 = gauge_unfix(&cfg, &v, cx(1.5, 2.0), cx(-0.7, 0.4));
        let lhs = f.eval(&u2);
        let rhs = f.eval(&u1) * cx(-0.7, 0.4).norm().powi(-3);
        assert!((lhs - rhs).norm() < 1e-13 * rhs.norm().max(1.0));
        assert!((f.eval(&u1) - f.eval_chart(&v)).norm() < 1e-14);
    }

    #[test]
    fn hessian_matches_differences() {
        let cfg = Configuration::classical(cx(-1.0, 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let f = TestFunction::random(&cfg, Profile::Bump, 2, 0.5, 1.5, &mut rng);
        let u = vec![cx(0.1, 0.0), cx(1.2, 0.1), cx(0.4, 0.3)];
        let (_, g, h) = f.jet2(&u);
        let hs = 1e-5;
        for j in 0..3 {
            let mut up = u.clone();
            up[j] += hs;
            let mut um = u.clone();
            um[j] -= hs;
            let mut vp = u.clone();
            vp[j] += cx(0.0, hs);
            let mut vm = u.clone();
            vm[j] -= cx(0.0, hs);
            let dx = (f.eval(&up) - f.eval(&um)) / (2.0 * hs);
            let dy = (f.eval(&vp) - f.eval(&vm)) / (2.0 * hs);
            let wirt = (dx - cx(0.0, 1.0) * dy) * 0.5;
            assert!((wirt - g[j]).norm() < 1e-7, "{wirt} {}", g[j]);
        }
        assert!((h[0][2] - h[2][0]).norm() == 0.0);
    }

    #[test]
    fn interpolation_reproduces_bilinear_and_zero_outside() {
        let grid = StateGrid::zeros(9, &[2.0]).unwrap();
        let lin = |v: &[C64]| cx(1.0 + 0.5 * v[0].re - 0.25 * v[0].im, 0.3 * v[0].re * v[0].im);
        let s = sample_state(&grid, lin);
        let p = [cx(0.37, -1.12)];
        assert!((s.interpolate(&p) - lin(&p)).norm() < 1e-14);
        assert_eq!(s.interpolate(&[cx(3.0, 0.0)]), cx(0.0, 0.0));
        let ones = sample_state(&grid, |_| cx(1.0, 0.0));
        let ip = ones.inner(&ones).unwrap();
        assert!((ip.re - 81.0 * grid.cell_volume()).abs() < 1e-12);
    }
}
