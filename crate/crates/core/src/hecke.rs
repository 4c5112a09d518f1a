//! Hecke operators: pointwise evaluation in homogeneous coordinates and the gauge-fixed
//! operator acting on grid states.

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::{hecke_argument_jet, Jet};
use crate::moduli::Configuration;
use crate::quadrature::{PairwiseAcc, PlanSpec, Quad, QuadraturePlan};

/// Which scalar multiple of the kernel integral is called H_x.
///
/// `Definition` uses Π|t_i - x| · exp(+½χ_i(log(t_i+ε-x))); `Representation` uses
/// Π|t_i - x|^{d_i} · exp(-½χ_i(log(t_i+ε-x))), which makes H_x = ∫ρ(g_{s,x}) dν(s).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Normalization {
    Definition,
    Representation,
}

fn check_x(cfg: &Configuration, x: C64) -> Result<()> {
    for t in cfg.marked_points() {
        if (t - x).norm() < 1e-12 {
            return Err(Error::EvaluationAtMarkedPoint(format!("x = {x}")));
        }
    }
    if !x.re.is_finite() || !x.im.is_finite() {
        return Err(Error::EvaluationAtMarkedPoint("x is not finite".into()));
    }
    Ok(())
}

fn sign_and_modulus(cfg: &Configuration, x: C64, norm: Normalization) -> (f64, f64) {
    let mut modulus = 1.0;
    for p in cfg.points() {
        let r = (p.t - x).norm();
        modulus *= match norm {
            Normalization::Definition => r,
            Normalization::Representation => r.powi(p.order() as i32),
        };
    }
    let sign = match norm {
        Normalization::Definition => 0.5,
        Normalization::Representation => -0.5,
    };
    (sign, modulus)
}

/// Prefactor computed through the jet logarithm of t + ε - x.
pub fn hecke_prefactor(cfg: &Configuration, x: C64, norm: Normalization) -> Result<C64> {
    check_x(cfg, x)?;
    let (sign, modulus) = sign_and_modulus(cfg, x, norm);
    let mut arg = C64::new(0.0, 0.0);
    for p in cfg.points() {
        let d = p.order();
        let l = (Jet::eps_pow(1, d) + (p.t - x)).log()?;
        arg += p.chi.eval(&l)?;
    }
    Ok((arg * sign).exp() * modulus)
}

/// Same prefactor from the expansion log(t+ε-x) = log(t-x) + Σ_j (-1)^{j+1} ε^j / (j (t-x)^j).
pub fn hecke_prefactor_closed_form(cfg: &Configuration, x: C64, norm: Normalization) -> Result<C64> {
    check_x(cfg, x)?;
    let (sign, modulus) = sign_and_modulus(cfg, x, norm);
    let mut re = 0.0;
    for p in cfg.points() {
        let w = p.t - x;
        let mut acc = p.chi.coeff(0) * w.ln();
        for j in 1..p.order() {
            let sgn = if j % 2 == 1 { 1.0 } else { -1.0 };
            acc += p.chi.coeff(j) * sgn / (j as f64 * w.powu(j as u32));
        }
        re += acc.re;
    }
    Ok(C64::new(0.0, sign * re).exp() * modulus)
}

/// Centers for a homogeneous evaluation: all point constants and the anchor collision s*.
fn homogeneous_centers(cfg: &Configuration, x: C64, u: &[C64]) -> Vec<C64> {
    let off = cfg.offsets();
    let mut c: Vec<C64> = off.iter().map(|&o| u[o]).collect();
    c.push((1.0 - x) * u[0] + x * u[1]);
    c
}

fn check_distinct(cfg: &Configuration, u: &[C64]) -> Result<()> {
    let off = cfg.offsets();
    let scale = off.iter().map(|&o| u[o].norm()).fold(1.0, f64::max);
    for i in 0..off.len() {
        for j in i + 1..off.len() {
            if (u[off[i]] - u[off[j]]).norm() < 1e-12 * scale {
                return Err(Error::CoincidentCoordinates);
            }
        }
    }
    Ok(())
}

/// The integrand of ℍ_x at s in homogeneous coordinates, without the prefactor.
pub fn homogeneous_integrand<F>(cfg: &Configuration, psi: &F, x: C64, u: &[C64], s: C64, buf: &mut Vec<C64>) -> C64
where
    F: Fn(&[C64]) -> C64 + ?Sized,
{
    buf.clear();
    let mut density = 1.0;
    let mut phase_arg = C64::new(0.0, 0.0);
    for (l, p) in cfg.points().iter().enumerate() {
        let d = p.order();
        let ul = cfg.point_jet(u, l);
        let den = -ul + s;
        let a = match hecke_argument_jet(p.t, x, s, &ul) {
            Ok(a) => a,
            Err(_) => return C64::new(0.0, 0.0),
        };
        buf.extend_from_slice(a.coeffs());
        density *= den.coeff(0).norm().powi(-2 * d as i32);
        if !p.chi.is_trivial() {
            if let Ok(l) = den.log() {
                phase_arg += p.chi.eval(&l).unwrap_or_default();
            }
        }
    }
    let v = psi(buf);
    if v == C64::new(0.0, 0.0) {
        return v;
    }
    v * density * phase_arg.exp()
}

/// H_xψ(u) for a homogeneous function ψ, by quadrature.
pub fn eval_hecke_point<F>(
    cfg: &Configuration,
    psi: &F,
    x: C64,
    u: &[C64],
    quad: &Quad,
    norm: Normalization,
) -> Result<C64>
where
    F: Fn(&[C64]) -> C64 + ?Sized,
{
    Ok(eval_modified_point(cfg, psi, x, u, quad)? * hecke_prefactor(cfg, x, norm)?)
}

/// The modified operator ℍ_xψ(u): the same integral without the prefactor.
pub fn eval_modified_point<F>(cfg: &Configuration, psi: &F, x: C64, u: &[C64], quad: &Quad) -> Result<C64>
where
    F: Fn(&[C64]) -> C64 + ?Sized,
{
    check_x(cfg, x)?;
    if u.len() != cfg.n_vars() {
        return Err(Error::DimensionMismatch(format!("{} != {}", u.len(), cfg.n_vars())));
    }
    check_distinct(cfg, u)?;
    let mut buf = Vec::with_capacity(cfg.n_vars());
    quad.integrate(&homogeneous_centers(cfg, x, u), |s| homogeneous_integrand(cfg, psi, x, u, s, &mut buf))
}

/// One collocation row of the gauge-fixed operator at a chart point: kernel weights and the
/// chart arguments (stride = chart dimension) at every quadrature node.
#[derive(Clone, Debug, Default)]
pub struct KernelRow {
    pub weights: Vec<C64>,
    pub args: Vec<C64>,
}

impl KernelRow {
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }
}

/// Gauge-fixed kernel for a configuration at a fixed x.
#[derive(Clone, Debug)]
pub struct ChartKernel {
    pub(crate) cfg: Configuration,
    pub(crate) x: C64,
    pub(crate) prefactor: C64,
    pub(crate) spec: PlanSpec,
}

impl ChartKernel {
    pub fn new(cfg: &Configuration, x: C64, spec: &PlanSpec, norm: Normalization) -> Result<Self> {
        let prefactor = hecke_prefactor(cfg, x, norm)?;
        Ok(ChartKernel { cfg: cfg.clone(), x, prefactor, spec: *spec })
    }

    pub fn config(&self) -> &Configuration {
        &self.cfg
    }

    pub fn x(&self) -> C64 {
        self.x
    }

    pub fn prefactor(&self) -> C64 {
        self.prefactor
    }

    fn chart_jets(&self, v: &[C64]) -> Result<(Vec<C64>, Vec<Jet>)> {
        let cfg = &self.cfg;
        let dim = cfg.chart_dim();
        if v.len() != dim {
            return Err(Error::DimensionMismatch(format!("{} != {}", v.len(), dim)));
        }
        let mut centers = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), self.x];
        let mut jets = Vec::with_capacity(cfg.clusters().len());
        let mut k = 0;
        for c in cfg.clusters() {
            let d = c.order();
            let j = Jet::new(&v[k..k + d], d)?;
            centers.push(j.coeff(0));
            jets.push(j);
            k += d;
        }
        let mut pts = centers.clone();
        pts.truncate(2);
        for c in &centers[3..] {
            if pts.iter().any(|p| (p - c).norm() < 1e-12) {
                return Err(Error::CoincidentCoordinates);
            }
            pts.push(*c);
        }
        Ok((centers, jets))
    }

    /// Kernel density at s (prefactor included); pushes the chart argument onto `args`.
    fn node(&self, jets: &[Jet], s: C64, args: &mut Vec<C64>) -> Option<C64> {
        let x = self.x;
        let m = self.cfg.m() as i32;
        let lam = s * (s - 1.0) / (s - x);
        let xs = x / s;
        let mut density = (s * (s - 1.0)).norm().powi(m - 2) / (s - x).norm().powi(m);
        let mut phase = C64::new(0.0, 0.0);
        let start = args.len();
        for (c, uj) in self.cfg.clusters().iter().zip(jets) {
            let d = c.order();
            let den = -*uj + s;
            let ok = hecke_argument_jet(c.t, x, s, uj).ok().and_then(|a| {
                let arg = (a + xs) * lam;
                args.extend_from_slice(arg.coeffs());
                density *= den.coeff(0).norm().powi(-2 * d as i32);
                if !c.chi.is_trivial() {
                    phase += c.chi.eval(&den.log().ok()?).ok()?;
                }
                Some(())
            });
            if ok.is_none() {
                args.truncate(start);
                return None;
            }
        }
        if !density.is_finite() {
            args.truncate(start);
            return None;
        }
        Some(self.prefactor * density * phase.exp())
    }

    /// Kernel row at chart point v; weights include the prefactor.
    pub fn row(&self, v: &[C64]) -> Result<KernelRow> {
        let (centers, jets) = self.chart_jets(v)?;
        let plan = QuadraturePlan::build(&centers, &self.spec)?;
        let dim = self.cfg.chart_dim();
        let mut row = KernelRow {
            weights: Vec::with_capacity(plan.len()),
            args: Vec::with_capacity(plan.len() * dim),
        };
        for (&s, &w) in plan.nodes.iter().zip(&plan.weights) {
            if let Some(k) = self.node(&jets, s, &mut row.args) {
                row.weights.push(k * w);
            }
        }
        Ok(row)
    }

    /// Applies the kernel at chart point v to a chart function.
    pub fn apply_at<F: Fn(&[C64]) -> C64 + ?Sized>(&self, f: &F, v: &[C64]) -> Result<C64> {
        let row = self.row(v)?;
        let dim = self.cfg.chart_dim();
        let mut acc = PairwiseAcc::default();
        for (q, w) in row.weights.iter().enumerate() {
            let val = f(&row.args[q * dim..(q + 1) * dim]);
            if val != C64::new(0.0, 0.0) {
                acc.push(*w * val);
            }
        }
        Ok(acc.total())
    }

    /// Same as `apply_at` with an arbitrary quadrature.
    pub fn apply_at_with<F: Fn(&[C64]) -> C64 + ?Sized>(&self, f: &F, v: &[C64], quad: &Quad) -> Result<C64> {
        let (centers, jets) = self.chart_jets(v)?;
        let mut args = Vec::with_capacity(self.cfg.chart_dim());
        quad.integrate(&centers, |s| {
            args.clear();
            match self.node(&jets, s, &mut args) {
                Some(k) => k * f(&args),
                None => C64::new(0.0, 0.0),
            }
        })
    }
}

/// ∫ν(s) d²s/π, the value of H_x on constants when m = 1.
pub fn nu_mass(x: C64, quad: &Quad) -> Result<f64> {
    let c = [C64::new(0.0, 0.0), C64::new(1.0, 0.0), x];
    Ok(quad.integrate(&c, |s| C64::new(crate::group::nu_density(s, x), 0.0))?.re)
}

/// Arithmetic-geometric mean with the principal choice of square roots.
fn agm(mut a: C64, mut b: C64) -> C64 {
    for _ in 0..100 {
        let an = (a + b) * 0.5;
        let mut bn = (a * b).sqrt();
        if (an - bn).norm() > (an + bn).norm() {
            bn = -bn;
        }
        a = an;
        b = bn;
        if (a - b).norm() <= 1e-16 * a.norm() {
            break;
        }
    }
    a
}

/// ∫|x(x-1)| / |s(s-1)(s-x)| d²s/π from the periods of y² = s(s-1)(s-x).
pub fn nu_mass_periods(x: C64) -> f64 {
    let zero = C64::new(0.0, 0.0);
    let one = C64::new(1.0, 0.0);
    // half-periods around the cuts [0,1] and [1,x]
    let w1 = std::f64::consts::PI / agm((x - zero).sqrt(), (x - one).sqrt());
    let w2 = std::f64::consts::PI / agm((zero - one).sqrt(), (zero - x).sqrt());
    let area = 2.0 * (w1.conj() * w2).im.abs();
    (x * (x - 1.0)).norm() * area / std::f64::consts::PI
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::moduli::{gauge_unfix, Profile, TestFunction};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cx(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn prefactor_routes_agree() {
        let cfg = Configuration::wild_minimal(cx(2.0, 0.5), cx(0.7, -0.4)).unwrap();
        for norm in [Normalization::Definition, Normalization::Representation] {
            let x = cx(-0.3, 1.1);
            let a = hecke_prefactor(&cfg, x, norm).unwrap();
            let b = hecke_prefactor_closed_form(&cfg, x, norm).unwrap();
            assert!((a - b).norm() < 1e-12);
        }
        let d = hecke_prefactor(&cfg, cx(-0.3, 1.1), Normalization::Definition).unwrap();
        let want = cx(0.3, 1.1).norm() * cx(1.3, 1.1).norm() * cx(2.3, -0.6).norm();
        assert!((d.norm() - want).abs() < 1e-12);
        assert!(matches!(
            hecke_prefactor(&cfg, cx(2.0, 0.5), Normalization::Definition),
            Err(Error::EvaluationAtMarkedPoint(_))
        ));
    }

    #[test]
    fn nu_mass_matches_periods() {
        for x in [cx(2.0, 0.0), cx(-0.5, 0.8), cx(3.0, -2.0)] {
            let q = nu_mass(x, &Quad::adaptive(1e-11)).unwrap();
            let p = nu_mass_periods(x);
            assert!((q - p).abs() < 1e-8 * p, "{x}: {q} vs {p}");
        }
    }

    #[test]
    fn chart_and_homogeneous_agree() {
        let cfg = Configuration::wild_minimal(cx(2.0, 0.5), cx(0.7, -0.4)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let f = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 0.9, &mut rng);
        let x = cx(-0.6, 0.9);
        let quad = Quad::adaptive(1e-10);
        let k = ChartKernel::new(&cfg, x, &PlanSpec::coarse(), Normalization::Representation).unwrap();
        let v = [cx(0.4, 0.3), cx(-0.2, 0.5)];
        let a = k.apply_at_with(&|w: &[C64]| f.eval_chart(w), &v, &quad).unwrap();
        let coarse = k.apply_at(&|w: &[C64]| f.eval_chart(w), &v).unwrap();
        assert!((a - coarse).norm() < 1e-2 * a.norm(), "{a} vs {coarse}");
        let lam = cx(0.8, -0.9);
        let u = gauge_unfix(&cfg, &v, cx(0.7, 0.2), lam);
        let b = eval_hecke_point(&cfg, &|w: &[C64]| f.eval(w), x, &u, &quad, Normalization::Representation).unwrap();
        let b = b * lam.norm().powi(3);
        assert!((a - b).norm() < 1e-8 * a.norm(), "{a} vs {b}");
    }
}
