//! Gaudin currents over sl₂(ℂ[ε]), the generating function G(x) and the differential
//! equations satisfied by Hecke operators.
//!
//! Currents act through π_L = -dρ, which is a homomorphism for the right action ρ.
//! Everything here is holomorphic: operators are Σ V_k ∂_k + λ in the coordinates u.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::group::{lie_local, Sl2};
use crate::hecke::{eval_hecke_point, Normalization};
use crate::jet::Jet;
use crate::moduli::{Configuration, TestFunction};
use crate::quadrature::Quad;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const I: C64 = C64 { re: 0.0, im: 1.0 };

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    E,
    F,
    H,
}

/// c(x) = (x - t - ε)⁻¹ = Σ_j ε^j (x-t)^{-j-1}.
pub fn current_jet(t: C64, x: C64, d: usize) -> Result<Jet> {
    if (x - t).norm() < 1e-14 * (1.0 + t.norm()) {
        return Err(Error::EvaluationAtMarkedPoint(format!("x = {x}")));
    }
    (Jet::constant(x - t, d) - Jet::eps_pow(1, d)).inv()
}

/// c′(x) = -c(x)².
pub fn current_derivative_jet(t: C64, x: C64, d: usize) -> Result<Jet> {
    let c = current_jet(t, x, d)?;
    Ok(-(c * c))
}

/// A first-order holomorphic operator Σ V_k ∂_k + λ at a point, with the first
/// derivatives of its coefficients there.
#[derive(Clone, Debug, PartialEq)]
pub struct FirstOrder {
    pub v: Vec<C64>,
    pub lambda: C64,
    /// dv[j][k] = ∂_k V_j
    pub dv: Vec<Vec<C64>>,
    pub dlambda: Vec<C64>,
}

/// Value, holomorphic gradient and holomorphic Hessian of a function at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet2 {
    pub value: C64,
    pub grad: Vec<C64>,
    pub hess: Vec<Vec<C64>>,
}

impl Jet2 {
    pub fn of_test_function(psi: &TestFunction, u: &[C64]) -> Self {
        let (value, grad, hess) = psi.jet2(u);
        Jet2 { value, grad, hess }
    }

    pub fn scale(&self, k: C64) -> Jet2 {
        Jet2 {
            value: self.value * k,
            grad: self.grad.iter().map(|g| g * k).collect(),
            hess: self.hess.iter().map(|r| r.iter().map(|h| h * k).collect()).collect(),
        }
    }
}

impl FirstOrder {
    pub fn zero(n: usize) -> Self {
        FirstOrder { v: vec![ZERO; n], lambda: ZERO, dv: vec![vec![ZERO; n]; n], dlambda: vec![ZERO; n] }
    }

    pub fn add(&self, o: &FirstOrder) -> FirstOrder {
        let n = self.v.len();
        let mut r = self.clone();
        for j in 0..n {
            r.v[j] += o.v[j];
            r.dlambda[j] += o.dlambda[j];
            for k in 0..n {
                r.dv[j][k] += o.dv[j][k];
            }
        }
        r.lambda += o.lambda;
        r
    }

    pub fn scale(&self, s: C64) -> FirstOrder {
        FirstOrder {
            v: self.v.iter().map(|a| a * s).collect(),
            lambda: self.lambda * s,
            dv: self.dv.iter().map(|r| r.iter().map(|a| a * s).collect()).collect(),
            dlambda: self.dlambda.iter().map(|a| a * s).collect(),
        }
    }

    /// (Aφ)(u).
    pub fn apply(&self, f: &Jet2) -> C64 {
        let mut acc = self.lambda * f.value;
        for (vk, gk) in self.v.iter().zip(&f.grad) {
            acc += vk * gk;
        }
        acc
    }

    /// (A(Bφ))(u) = Σ V^A_j ∂_j(Σ V^B_k ∂_k φ + λ^B φ) + λ^A (Bφ).
    pub fn compose(&self, inner: &FirstOrder, f: &Jet2) -> C64 {
        let n = self.v.len();
        let mut acc = self.lambda * inner.apply(f);
        for j in 0..n {
            let a = self.v[j];
            if a == ZERO {
                continue;
            }
            let mut dj = inner.dlambda[j] * f.value + inner.lambda * f.grad[j];
            for k in 0..n {
                dj += inner.dv[k][j] * f.grad[k] + inner.v[k] * f.hess[j][k];
            }
            acc += a * dj;
        }
        acc
    }
}

fn generator_element(gen: Generator, c: Jet) -> Sl2 {
    match gen {
        Generator::E => Sl2::e(c),
        Generator::F => Sl2::f(c),
        Generator::H => Sl2::h(c),
    }
}

/// π_L(gen ⊗ p_l) summed over points, where p_l is the coefficient jet of point l.
pub fn current_operator_with<P>(cfg: &Configuration, gen: Generator, u: &[C64], coeff: P) -> Result<FirstOrder>
where
    P: Fn(usize, C64, usize) -> Result<Jet>,
{
    let n = cfg.n_vars();
    if u.len() != n {
        return Err(Error::DimensionMismatch(format!("{} != {}", u.len(), n)));
    }
    let off = cfg.offsets();
    let mut op = FirstOrder::zero(n);
    for (l, p) in cfg.points().iter().enumerate() {
        let d = p.order();
        let c = coeff(l, p.t, d)?;
        let z = cfg.point_jet(u, l);
        let loc = lie_local(&generator_element(gen, c), &p.chi, &z)?;
        let o = off[l];
        for j in 0..d {
            op.v[o + j] -= loc.v[j];
            op.dlambda[o + j] -= loc.dlambda[j];
            for k in 0..d {
                op.dv[o + j][o + k] -= loc.dv[j][k];
            }
        }
        op.lambda -= loc.lambda;
    }
    Ok(op)
}

/// The current gen(x) = Σ_l gen ⊗ c_l(x) at u.
pub fn current_operator(cfg: &Configuration, gen: Generator, u: &[C64], x: C64) -> Result<FirstOrder> {
    current_operator_with(cfg, gen, u, |_, t, d| current_jet(t, x, d))
}

/// gen′(x) = Σ_l gen ⊗ c_l′(x).
pub fn current_derivative_operator(cfg: &Configuration, gen: Generator, u: &[C64], x: C64) -> Result<FirstOrder> {
    current_operator_with(cfg, gen, u, |_, t, d| current_derivative_jet(t, x, d))
}

/// (gen(x)ψ)(u).
pub fn current_action(gen: Generator, cfg: &Configuration, psi: &TestFunction, u: &[C64], x: C64) -> Result<C64> {
    let op = current_operator(cfg, gen, u, x)?;
    Ok(op.apply(&Jet2::of_test_function(psi, u)))
}

/// Order of the quadratic term in G(x).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// e(x)(f(x)ψ)
    Ef,
    /// f(x)(e(x)ψ)
    Fe,
}

/// G(x)φ(u) = e(x)f(x)φ + ¼h(x)²φ + ½h′(x)φ from the 2-jet of φ at u.
pub fn gaudin_on_jet(cfg: &Configuration, f: &Jet2, u: &[C64], x: C64, ordering: Ordering) -> Result<C64> {
    let e = current_operator(cfg, Generator::E, u, x)?;
    let fo = current_operator(cfg, Generator::F, u, x)?;
    let h = current_operator(cfg, Generator::H, u, x)?;
    let hp = current_derivative_operator(cfg, Generator::H, u, x)?;
    let quad = match ordering {
        Ordering::Ef => e.compose(&fo, f),
        Ordering::Fe => fo.compose(&e, f),
    };
    Ok(quad + h.compose(&h, f) * 0.25 + hp.apply(f) * 0.5)
}

/// G(x)ψ(u) for a test function.
pub fn gaudin_apply(cfg: &Configuration, psi: &TestFunction, u: &[C64], x: C64) -> Result<C64> {
    gaudin_on_jet(cfg, &Jet2::of_test_function(psi, u), u, x, Ordering::Ef)
}

pub fn gaudin_apply_ordered(
    cfg: &Configuration,
    psi: &TestFunction,
    u: &[C64],
    x: C64,
    ordering: Ordering,
) -> Result<C64> {
    gaudin_on_jet(cfg, &Jet2::of_test_function(psi, u), u, x, ordering)
}

/// Holomorphic gradient and Hessian of a non-holomorphic function by central differences
/// over the 2n real directions.
pub fn holomorphic_jet2_fd<F>(f: &F, u: &[C64], h: f64) -> Result<Jet2>
where
    F: Fn(&[C64]) -> Result<C64>,
{
    let n = u.len();
    let dir = |k: usize| -> (usize, C64) { (k / 2, if k % 2 == 0 { C64::new(1.0, 0.0) } else { I }) };
    let shifted = |steps: &[(usize, f64)]| -> Result<C64> {
        let mut p = u.to_vec();
        for &(k, a) in steps {
            let (j, d) = dir(k);
            p[j] += d * a;
        }
        f(&p)
    };
    let f0 = f(u)?;
    let m = 2 * n;
    let mut g = vec![ZERO; m];
    let mut hr = vec![vec![ZERO; m]; m];
    for a in 0..m {
        let fp = shifted(&[(a, h)])?;
        let fm = shifted(&[(a, -h)])?;
        g[a] = (fp - fm) / (2.0 * h);
        hr[a][a] = (fp - f0 * 2.0 + fm) / (h * h);
        for b in 0..a {
            let pp = shifted(&[(a, h), (b, h)])?;
            let pm = shifted(&[(a, h), (b, -h)])?;
            let mp = shifted(&[(a, -h), (b, h)])?;
            let mm = shifted(&[(a, -h), (b, -h)])?;
            let v = (pp - pm - mp + mm) / (4.0 * h * h);
            hr[a][b] = v;
            hr[b][a] = v;
        }
    }
    let mut grad = vec![ZERO; n];
    let mut hess = vec![vec![ZERO; n]; n];
    for j in 0..n {
        grad[j] = (g[2 * j] - I * g[2 * j + 1]) * 0.5;
        for k in 0..n {
            let (aj, bj, ak, bk) = (2 * j, 2 * j + 1, 2 * k, 2 * k + 1);
            hess[j][k] = (hr[aj][ak] - hr[bj][bk] - I * (hr[aj][bk] + hr[bj][ak])) * 0.25;
        }
    }
    Ok(Jet2 { value: f0, grad, hess })
}

/// Value and holomorphic gradient by central differences; the Hessian is left zero.
pub fn holomorphic_grad_fd<F>(f: &F, u: &[C64], h: f64) -> Result<Jet2>
where
    F: Fn(&[C64]) -> Result<C64>,
{
    let n = u.len();
    let mut grad = vec![ZERO; n];
    for j in 0..n {
        let mut d = [ZERO; 2];
        for (k, dir) in [C64::new(1.0, 0.0), I].into_iter().enumerate() {
            let mut p = u.to_vec();
            p[j] += dir * h;
            let fp = f(&p)?;
            p[j] -= dir * (2.0 * h);
            d[k] = (fp - f(&p)?) / (2.0 * h);
        }
        grad[j] = (d[0] - I * d[1]) * 0.5;
    }
    Ok(Jet2 { value: f(u)?, grad, hess: vec![vec![ZERO; n]; n] })
}

/// ∂_x F by a central 3×3 stencil in (Re x, Im x).
pub fn wirtinger_dx<F: Fn(C64) -> Result<C64>>(f: &F, x: C64, h: f64) -> Result<C64> {
    let fa = (f(x + h)? - f(x - h)?) / (2.0 * h);
    let fb = (f(x + I * h)? - f(x - I * h)?) / (2.0 * h);
    Ok((fa - I * fb) * 0.5)
}

/// ∂²_x F = ¼(F_aa - F_bb - 2i F_ab) on the 3×3 stencil.
pub fn wirtinger_dxx<F: Fn(C64) -> Result<C64>>(f: &F, x: C64, h: f64) -> Result<C64> {
    let c = f(x)?;
    let ih = I * h;
    let faa = (f(x + h)? - c * 2.0 + f(x - h)?) / (h * h);
    let fbb = (f(x + ih)? - c * 2.0 + f(x - ih)?) / (h * h);
    let fab = (f(x + h + ih)? - f(x + h - ih)? - f(x - h + ih)? + f(x - h - ih)?) / (4.0 * h * h);
    Ok((faa - fbb - I * fab * 2.0) * 0.25)
}

/// One Richardson level on a second-order stencil.
pub fn richardson<F: Fn(f64) -> Result<C64>>(d: &F, h: f64) -> Result<C64> {
    Ok((d(h / 2.0)? * 4.0 - d(h)?) / 3.0)
}

/// Settings shared by the identity checks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentitySpec {
    pub quad: Quad,
    pub norm: Normalization,
    /// x-stencil step.
    pub h_x: f64,
    /// u-derivative step, relative to the size of u.
    pub h_u: f64,
    pub richardson: bool,
    /// Also evaluate the reading with the operator applied to H_xψ (finite differences in u).
    pub outer: bool,
}

impl Default for IdentitySpec {
    fn default() -> Self {
        IdentitySpec {
            quad: Quad::adaptive(1e-10),
            norm: Normalization::Representation,
            h_x: 1e-2,
            h_u: 1e-3,
            richardson: true,
            outer: true,
        }
    }
}

/// Both readings of an identity lhs = rhs at one (point, x).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IdentityResidual {
    pub lhs: C64,
    /// Operator applied to ψ inside the Hecke integral.
    pub rhs_inner: C64,
    /// Operator applied to the output H_xψ.
    pub rhs_outer: Option<C64>,
    pub residual_inner: f64,
    pub residual_outer: Option<f64>,
}

impl IdentityResidual {
    fn new(lhs: C64, rhs_inner: C64, rhs_outer: Option<C64>) -> Self {
        let rel = |r: C64| {
            let scale = lhs.norm().max(r.norm());
            if scale == 0.0 {
                0.0
            } else {
                (lhs - r).norm() / scale
            }
        };
        IdentityResidual {
            lhs,
            rhs_inner,
            rhs_outer,
            residual_inner: rel(rhs_inner),
            residual_outer: rhs_outer.map(rel),
        }
    }
}

fn hecke_value(cfg: &Configuration, psi: &TestFunction, u: &[C64], x: C64, spec: &IdentitySpec) -> Result<C64> {
    eval_hecke_point(cfg, &|z: &[C64]| psi.eval(z), x, u, &spec.quad, spec.norm)
}

fn output_jet2(cfg: &Configuration, psi: &TestFunction, u: &[C64], x: C64, spec: &IdentitySpec) -> Result<Jet2> {
    let scale = u.iter().map(|z| z.norm()).fold(1.0, f64::max);
    holomorphic_jet2_fd(&|p: &[C64]| hecke_value(cfg, psi, p, x, spec), u, spec.h_u * scale)
}

/// ∂_x(H_xψ) against -½h(x) applied inside (H_x(h(x)ψ)) and outside (h(x)(H_xψ)).
pub fn first_order_identity_residual(
    cfg: &Configuration,
    psi: &TestFunction,
    u: &[C64],
    x: C64,
    spec: &IdentitySpec,
) -> Result<IdentityResidual> {
    let hv = |y: C64| hecke_value(cfg, psi, u, y, spec);
    let lhs = if spec.richardson {
        richardson(&|h| wirtinger_dx(&hv, x, h), spec.h_x)?
    } else {
        wirtinger_dx(&hv, x, spec.h_x)?
    };
    let inner_psi = |z: &[C64]| -> C64 {
        match current_operator(cfg, Generator::H, z, x) {
            Ok(op) => op.apply(&Jet2::of_test_function(psi, z)) * -0.5,
            Err(_) => ZERO,
        }
    };
    let rhs_inner = eval_hecke_point(cfg, &inner_psi, x, u, &spec.quad, spec.norm)?;
    let rhs_outer = if spec.outer {
        let scale = u.iter().map(|z| z.norm()).fold(1.0, f64::max);
        let out = holomorphic_grad_fd(&|p: &[C64]| hecke_value(cfg, psi, p, x, spec), u, spec.h_u * scale)?;
        Some(current_operator(cfg, Generator::H, u, x)?.apply(&out) * -0.5)
    } else {
        None
    };
    Ok(IdentityResidual::new(lhs, rhs_inner, rhs_outer))
}

/// ∂²_x(H_xψ) against G(x) applied inside (H_x(G(x)ψ)) and outside (G(x)(H_xψ)).
pub fn diffeq_residual(
    cfg: &Configuration,
    psi: &TestFunction,
    u: &[C64],
    x: C64,
    spec: &IdentitySpec,
    ordering: Ordering,
) -> Result<IdentityResidual> {
    let hv = |y: C64| hecke_value(cfg, psi, u, y, spec);
    let lhs = if spec.richardson {
        richardson(&|h| wirtinger_dxx(&hv, x, h), spec.h_x)?
    } else {
        wirtinger_dxx(&hv, x, spec.h_x)?
    };
    let inner_psi = |z: &[C64]| -> C64 {
        gaudin_on_jet(cfg, &Jet2::of_test_function(psi, z), z, x, ordering).unwrap_or(ZERO)
    };
    let rhs_inner = eval_hecke_point(cfg, &inner_psi, x, u, &spec.quad, spec.norm)?;
    let rhs_outer = if spec.outer {
        let out = output_jet2(cfg, psi, u, x, spec)?;
        Some(gaudin_on_jet(cfg, &out, u, x, ordering)?)
    } else {
        None
    };
    Ok(IdentityResidual::new(lhs, rhs_inner, rhs_outer))
}

/// Coefficients g_{l,j} of Σ_{l,j} g_{l,j}/(x - t_l)^{j+1}, j < max_order(l), fitted to
/// samples (x_k, y_k).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoleFit {
    pub points: Vec<C64>,
    /// coeffs[l][j]
    pub coeffs: Vec<Vec<C64>>,
    pub relative_residual: f64,
    pub condition: f64,
}

pub fn fit_partial_fractions(points: &[C64], max_order: &[usize], xs: &[C64], ys: &[C64]) -> Result<PoleFit> {
    if points.len() != max_order.len() || xs.len() != ys.len() {
        return Err(Error::DimensionMismatch("pole fit inputs".into()));
    }
    let ncol: usize = max_order.iter().sum();
    if xs.len() < ncol {
        return Err(Error::IllConditionedFit(f64::INFINITY));
    }
    let mut a = DMatrix::<C64>::zeros(xs.len(), ncol);
    for (r, &x) in xs.iter().enumerate() {
        let mut c = 0;
        for (&t, &k) in points.iter().zip(max_order) {
            let w = (x - t).inv();
            let mut p = w;
            for _ in 0..k {
                a[(r, c)] = p;
                p *= w;
                c += 1;
            }
        }
    }
    let (sol, relative_residual, condition) = equilibrated_lstsq(a, ys)?;
    let mut coeffs = vec![];
    let mut c = 0;
    for &k in max_order {
        coeffs.push(sol[c..c + k].to_vec());
        c += k;
    }
    Ok(PoleFit {
        points: points.to_vec(),
        coeffs,
        relative_residual,
        condition,
    })
}

/// Least squares with column equilibration: (solution, relative residual, condition number).
/// Fails with IllConditionedFit above 1e10.
pub(crate) fn equilibrated_lstsq(mut a: DMatrix<C64>, ys: &[C64]) -> Result<(Vec<C64>, f64, f64)> {
    let ncol = a.ncols();
    let norms: Vec<f64> = (0..ncol).map(|j| a.column(j).norm().max(1e-300)).collect();
    for j in 0..ncol {
        let s = 1.0 / norms[j];
        a.column_mut(j).scale_mut(s);
    }
    let b = DVector::from_column_slice(ys);
    if b.norm() == 0.0 {
        return Ok((vec![ZERO; ncol], 0.0, 1.0));
    }
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    if condition > 1e10 {
        return Err(Error::IllConditionedFit(condition));
    }
    let sol = svd.solve(&b, 0.0).map_err(|e| Error::NoConvergence(e.to_string()))?;
    let resid = (&a * &sol - &b).norm();
    Ok(((0..ncol).map(|j| sol[j] / norms[j]).collect(), resid / b.norm(), condition))
}

/// Sample points for a pole fit: small circles around each point plus a large ring.
pub fn fit_samples(points: &[C64], per_point: usize, ring: usize) -> Vec<C64> {
    let mut sep = f64::INFINITY;
    let mut span: f64 = 1.0;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            sep = sep.min((a - b).norm());
            span = span.max((a - b).norm());
        }
    }
    if !sep.is_finite() {
        sep = 1.0;
    }
    let center: C64 = points.iter().sum::<C64>() / points.len().max(1) as f64;
    let mut xs = vec![];
    for (i, &t) in points.iter().enumerate() {
        for k in 0..per_point {
            let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.25 + 0.1 * i as f64) / per_point as f64;
            xs.push(t + C64::from_polar(0.35 * sep, th));
        }
    }
    for k in 0..ring {
        let th = 2.0 * std::f64::consts::PI * (k as f64 + 0.37) / ring as f64;
        xs.push(center + C64::from_polar(1.5 * span, th));
    }
    xs
}

/// Partial-fraction data of G(x)φ(u) for functions φ given by their 2-jets at u.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaudinExpansion {
    /// One fit per input function; pole orders up to 2d_l + `extra`.
    pub fits: Vec<PoleFit>,
    pub extra: usize,
}

pub fn gaudin_expansion(cfg: &Configuration, jets: &[Jet2], u: &[C64], extra: usize) -> Result<GaudinExpansion> {
    let pts = cfg.points();
    let tpts: Vec<C64> = pts.iter().map(|p| p.t).collect();
    let orders: Vec<usize> = pts.iter().map(|p| 2 * p.order() + extra).collect();
    let ncol: usize = orders.iter().sum();
    let per = (2 * ncol / pts.len()).max(4) + 2;
    let xs = fit_samples(&tpts, per, 2 * ncol);
    let mut fits = vec![];
    for j in jets {
        let ys = xs
            .iter()
            .map(|&x| gaudin_on_jet(cfg, j, u, x, Ordering::Ef))
            .collect::<Result<Vec<_>>>()?;
        fits.push(fit_partial_fractions(&tpts, &orders, &xs, &ys)?);
    }
    Ok(GaudinExpansion { fits, extra })
}

/// Scalar-action constants l_l^{(j)} (d_l ≤ j < 2d_l) measured as coefficient/value for
/// two test functions, with the spread between them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalarAction {
    pub point: usize,
    pub j: usize,
    pub value: C64,
    pub spread: f64,
}

pub fn scalar_actions(cfg: &Configuration, psis: &[&TestFunction], u: &[C64]) -> Result<Vec<ScalarAction>> {
    let jets: Vec<Jet2> = psis.iter().map(|p| Jet2::of_test_function(p, u)).collect();
    let ex = gaudin_expansion(cfg, &jets, u, 0)?;
    let mut out = vec![];
    for (l, p) in cfg.points().iter().enumerate() {
        let d = p.order();
        let ratios: Vec<Vec<C64>> = (d..2 * d)
            .map(|j| ex.fits.iter().zip(&jets).map(|(f, jt)| f.coeffs[l][j] / jt.value).collect())
            .collect();
        // a vanishing constant is compared against the largest one at the same point
        let reference = ratios.iter().map(|r| r[0].norm()).fold(0.0, f64::max).max(1e-300);
        for (j, r) in (d..2 * d).zip(&ratios) {
            let value = r[0];
            let spread = r.iter().map(|z| (z - value).norm()).fold(0.0, f64::max) / value.norm().max(reference);
            out.push(ScalarAction { point: l, j, value, spread });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moduli::{gauge_unfix, Profile};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cx(a: f64, b: f64) -> C64 {
        C64::new(a, b)
    }

    #[test]
    fn current_jet_examples() {
        let c = current_jet(cx(0.0, 0.0), cx(2.0, 0.0), 1).unwrap();
        assert!((c.coeff(0) - 0.5).norm() < 1e-15);
        let c = current_jet(cx(0.0, 0.0), cx(2.0, 0.0), 2).unwrap();
        assert!((c.coeff(0) - 0.5).norm() < 1e-15 && (c.coeff(1) - 0.25).norm() < 1e-15);
        assert!(current_jet(cx(1.0, 0.0), cx(1.0, 0.0), 2).is_err());
        let (t, x, h) = (cx(0.3, -0.2), cx(1.1, 0.7), 1e-5);
        let d = current_derivative_jet(t, x, 4).unwrap();
        let fd = (current_jet(t, x + h, 4).unwrap() - current_jet(t, x - h, 4).unwrap()).scale(cx(0.5 / h, 0.0));
        for j in 0..4 {
            assert!((fd.coeff(j) - d.coeff(j)).norm() < 1e-8);
        }
    }

    #[test]
    fn classical_currents_match_hand_coded() {
        // d = 1, χ = 0: e = -∂, f = z²∂ + z, h = -2z∂ - 1 at each point
        let cfg = Configuration::classical(cx(2.5, 0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
        let u = [cx(0.2, 0.1), cx(1.3, -0.2), cx(-0.4, 0.6)];
        let x = cx(0.7, 1.3);
        let j = Jet2::of_test_function(&psi, &u);
        let t = cfg.marked_points();
        let mut e = ZERO;
        let mut f = ZERO;
        let mut h = ZERO;
        for l in 0..3 {
            let c = (x - t[l]).inv();
            e += -c * j.grad[l];
            f += c * (u[l] * u[l] * j.grad[l] + u[l] * j.value);
            h += c * (-2.0 * u[l] * j.grad[l] - j.value);
        }
        for (g, want) in [(Generator::E, e), (Generator::F, f), (Generator::H, h)] {
            let got = current_action(g, &cfg, &psi, &u, x).unwrap();
            assert!((got - want).norm() < 1e-12 * (1.0 + want.norm()), "{g:?}");
        }
    }

    #[test]
    fn bracket_of_currents() {
        let cfg = Configuration::wild_minimal(cx(2.0, 0.5), cx(0.7, -0.4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let psi = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
        let u = gauge_unfix(&cfg, &[cx(0.4, 0.3), cx(-0.2, 0.5)], cx(0.1, 0.2), cx(1.1, -0.3));
        let x = cx(-0.6, 0.9);
        let j = Jet2::of_test_function(&psi, &u);
        let e = current_operator(&cfg, Generator::E, &u, x).unwrap();
        let f = current_operator(&cfg, Generator::F, &u, x).unwrap();
        let hp = current_derivative_operator(&cfg, Generator::H, &u, x).unwrap();
        let br = e.compose(&f, &j) - f.compose(&e, &j);
        let want = -hp.apply(&j);
        assert!((br - want).norm() < 1e-10 * want.norm(), "{br} vs {want}");
    }
    fn classical_omega(j: &Jet2, u: &[C64], a: usize, b: usize) -> C64 {
        // Ω_ab = e_a f_b + f_a e_b + ½ h_a h_b with e = -∂, f = z²∂ + z, h = -2z∂ - 1
        let (za, zb) = (u[a], u[b]);
        let (g, hs, v) = (&j.grad, &j.hess, j.value);
        let ef = -(zb * zb * hs[a][b] + zb * g[a]);
        let fe = -(za * za * hs[a][b] + za * g[b]);
        let hh = 4.0 * za * zb * hs[a][b] + 2.0 * za * g[a] + 2.0 * zb * g[b] + v;
        ef + fe + hh * 0.5
    }

    #[test]
    fn classical_expansion() {
        let cfg = Configuration::classical(cx(2.5, 0.4));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let psi = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
        let u = [cx(0.2, 0.1), cx(1.3, -0.2), cx(-0.4, 0.6)];
        let j = Jet2::of_test_function(&psi, &u);
        let ex = gaudin_expansion(&cfg, &[j.clone()], &u, 2).unwrap();
        let fit = &ex.fits[0];
        assert!(fit.relative_residual < 1e-10, "{}", fit.relative_residual);
        let t = cfg.marked_points();
        for l in 0..3 {
            let mut want = ZERO;
            for k in 0..3 {
                if k != l {
                    want += classical_omega(&j, &u, l, k) / (t[l] - t[k]);
                }
            }
            let c = &fit.coeffs[l];
            assert!((c[0] - want).norm() < 1e-8 * want.norm().max(j.value.norm()), "{l}: {} vs {want}", c[0]);
            assert!((c[1] / j.value + 0.25).norm() < 1e-8, "{}", c[1] / j.value);
            for extra in &c[2..] {
                assert!(extra.norm() < 1e-8 * j.value.norm());
            }
        }
    }

    #[test]
    fn wild_scalar_actions() {
        let cfg = Configuration::wild_minimal(cx(2.0, 0.5), cx(0.7, -0.4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let p1 = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
        let p2 = TestFunction::random(&cfg, Profile::Gaussian, 3, 0.8, 1.0, &mut rng);
        let u = gauge_unfix(&cfg, &[cx(0.4, 0.3), cx(-0.2, 0.5)], cx(0.1, 0.2), cx(1.1, -0.3));
        let acts = scalar_actions(&cfg, &[&p1, &p2], &u).unwrap();
        assert_eq!(acts.len(), 4);
        // measured constants: -¼ at simple points, 0 and -c₁²/16 at the double point
        let c1 = cx(0.7, -0.4);
        assert!((acts[0].value + 0.25).norm() < 1e-10 && (acts[1].value + 0.25).norm() < 1e-10);
        assert!(acts[2].value.norm() < 1e-10);
        assert!((acts[3].value + c1 * c1 / 16.0).norm() < 1e-10);
        for a in &acts {
            assert!(a.spread < 1e-6, "{a:?}");
        }
        let ex = gaudin_expansion(&cfg, &[Jet2::of_test_function(&p1, &u)], &u, 2).unwrap();
        let c = &ex.fits[0].coeffs[2];
        let scale = c.iter().map(|z| z.norm()).fold(0.0, f64::max);
        assert!(c[4].norm() < 1e-6 * scale && c[5].norm() < 1e-6 * scale);
    }
}
