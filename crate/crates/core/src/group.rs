//! PGL₂ over jets, the principal-series type representation ρ, and its holomorphic
//! infinitesimal action.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::jet::{Character, Jet};

const ZERO: C64 = C64::new(0.0, 0.0);
const ONE: C64 = C64::new(1.0, 0.0);

/// A 2×2 matrix [[a, b], [c, d]] with entries in ℂ[ε]/(ε^n).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct JetMatrix {
    pub a: Jet,
    pub b: Jet,
    pub c: Jet,
    pub d: Jet,
}

impl JetMatrix {
    pub fn new(a: Jet, b: Jet, c: Jet, d: Jet) -> Result<Self> {
        let n = a.order();
        for e in [&b, &c, &d] {
            if e.order() != n {
                return Err(Error::ModulusMismatch(n, e.order()));
            }
        }
        Ok(JetMatrix { a, b, c, d })
    }

    pub fn from_scalars(m: [[C64; 2]; 2], n: usize) -> Self {
        JetMatrix {
            a: Jet::constant(m[0][0], n),
            b: Jet::constant(m[0][1], n),
            c: Jet::constant(m[1][0], n),
            d: Jet::constant(m[1][1], n),
        }
    }

    pub fn identity(n: usize) -> Self {
        JetMatrix::from_scalars([[ONE, ZERO], [ZERO, ONE]], n)
    }

    pub fn order(&self) -> usize {
        self.a.order()
    }

    pub fn det(&self) -> Jet {
        self.a * self.d - self.b * self.c
    }

    pub fn mul(&self, o: &JetMatrix) -> JetMatrix {
        JetMatrix {
            a: self.a * o.a + self.b * o.c,
            b: self.a * o.b + self.b * o.d,
            c: self.c * o.a + self.d * o.c,
            d: self.c * o.b + self.d * o.d,
        }
    }

    pub fn add(&self, o: &JetMatrix) -> JetMatrix {
        JetMatrix {
            a: self.a + o.a,
            b: self.b + o.b,
            c: self.c + o.c,
            d: self.d + o.d,
        }
    }

    pub fn sub(&self, o: &JetMatrix) -> JetMatrix {
        self.add(&o.scale_jet(&Jet::constant(-ONE, self.order())))
    }

    pub fn scale_jet(&self, k: &Jet) -> JetMatrix {
        JetMatrix {
            a: self.a * *k,
            b: self.b * *k,
            c: self.c * *k,
            d: self.d * *k,
        }
    }

    pub fn scale(&self, k: C64) -> JetMatrix {
        JetMatrix {
            a: self.a * k,
            b: self.b * k,
            c: self.c * k,
            d: self.d * k,
        }
    }

    pub fn inv(&self) -> Result<JetMatrix> {
        let det = self.det();
        if !det.is_unit() {
            return Err(Error::DegenerateGroupElement("determinant is not a unit".into()));
        }
        let di = det.inv()?;
        Ok(JetMatrix {
            a: self.d * di,
            b: -self.b * di,
            c: -self.c * di,
            d: self.a * di,
        })
    }

    pub fn commutator(&self, o: &JetMatrix) -> JetMatrix {
        self.mul(o).sub(&o.mul(self))
    }

    pub fn trace(&self) -> Jet {
        self.a + self.d
    }

    /// Traceless part X - ½ tr(X)·1.
    pub fn traceless(&self) -> JetMatrix {
        let h = self.trace() * C64::new(0.5, 0.0);
        JetMatrix {
            a: self.a - h,
            b: self.b,
            c: self.c,
            d: self.d - h,
        }
    }

    /// Möbius action (az + b)/(cz + d).
    pub fn act(&self, z: &Jet) -> Result<Jet> {
        let den = self.c * *z + self.d;
        if !den.is_unit() {
            return Err(Error::DegenerateGroupElement("point mapped to infinity".into()));
        }
        (self.a * *z + self.b).try_div(&den)
    }

    /// Matrix exponential by scaling and squaring of a Taylor series.
    pub fn exp(&self) -> JetMatrix {
        let n = self.order();
        let norm = [self.a, self.b, self.c, self.d]
            .iter()
            .map(|j| j.max_abs())
            .fold(0.0, f64::max);
        let mut k = 0;
        while norm / 2f64.powi(k) > 0.25 {
            k += 1;
        }
        let x = self.scale(C64::new(1.0 / 2f64.powi(k), 0.0));
        let mut term = JetMatrix::identity(n);
        let mut sum = JetMatrix::identity(n);
        for i in 1..30 {
            term = term.mul(&x).scale(C64::new(1.0 / i as f64, 0.0));
            sum = sum.add(&term);
        }
        for _ in 0..k {
            sum = sum.mul(&sum);
        }
        sum
    }

    /// Max coefficient distance of self/a₀₀ from the identity (PGL₂ comparison).
    pub fn distance_from_scalar(&self) -> f64 {
        let k = if self.a.is_unit() { self.a } else { self.d };
        let ki = match k.inv() {
            Ok(v) => v,
            Err(_) => return f64::INFINITY,
        };
        let n = self.order();
        let m = self.scale_jet(&ki);
        let one = Jet::one(n);
        [m.a - one, m.b, m.c, m.d - one]
            .iter()
            .map(|j| j.max_abs())
            .fold(0.0, f64::max)
    }

    /// Coefficient vector (α, β, γ) of the traceless part, each of length n.
    pub fn sl2_vector(&self) -> Vec<C64> {
        let t = self.traceless();
        let mut v = Vec::with_capacity(3 * self.order());
        v.extend_from_slice(t.a.coeffs());
        v.extend_from_slice(t.b.coeffs());
        v.extend_from_slice(t.c.coeffs());
        v
    }

    pub fn from_sl2_vector(v: &[C64], n: usize) -> Result<Self> {
        if v.len() != 3 * n {
            return Err(Error::DimensionMismatch(format!("{} != 3·{}", v.len(), n)));
        }
        let al = Jet::new(&v[0..n], n)?;
        Ok(JetMatrix {
            a: al,
            b: Jet::new(&v[n..2 * n], n)?,
            c: Jet::new(&v[2 * n..3 * n], n)?,
            d: -al,
        })
    }
}

fn c(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// g_{s,x} = [[-(s-1)x, (t+ε)s(s-1)], [-(s-x), s(s-x)]] at a marked point t.
pub fn anchored_element(s: C64, x: C64, t: C64, n: usize) -> Result<JetMatrix> {
    let tau = Jet::eps_pow(1, n) + t;
    let g = JetMatrix {
        a: Jet::constant(-(s - 1.0) * x, n),
        b: tau * (s * (s - 1.0)),
        c: Jet::constant(-(s - x), n),
        d: Jet::constant(s * (s - x), n),
    };
    check_nondegenerate(&g)?;
    Ok(g)
}

/// Gauge-free form [[0, t - x + ε], [-1, s]].
pub fn gauge_free_element(s: C64, x: C64, t: C64, n: usize) -> Result<JetMatrix> {
    let g = JetMatrix {
        a: Jet::zero(n),
        b: Jet::eps_pow(1, n) + (t - x),
        c: Jet::constant(c(-1.0), n),
        d: Jet::constant(s, n),
    };
    check_nondegenerate(&g)?;
    Ok(g)
}

fn check_nondegenerate(g: &JetMatrix) -> Result<()> {
    let d0 = g.det().coeff(0);
    let scale = [g.a, g.b, g.c, g.d]
        .iter()
        .map(|j| j.coeff(0).norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    if d0.norm() <= 1e-14 * scale * scale {
        Err(Error::DegenerateGroupElement(format!("det₀ = {d0}")))
    } else {
        Ok(())
    }
}

/// The involution σ(s) = x(s-1)/(s-x).
pub fn sigma(s: C64, x: C64) -> C64 {
    x * (s - 1.0) / (s - x)
}

/// Density of ν with respect to d²s/π.
pub fn nu_density(s: C64, x: C64) -> f64 {
    (x * (x - 1.0) / (s * (s - 1.0) * (s - x))).norm()
}

/// ρ(g)ψ(z) = ψ(gz)·|det g₀/(c₀z₀+d₀)²|^n · exp χ(log(cz+d) - ½ log det g).
pub fn rho_apply<F>(g: &JetMatrix, chi: &Character, psi: F, z: &Jet) -> Result<C64>
where
    F: Fn(&Jet) -> C64,
{
    let n = g.order();
    if chi.order() != n || z.order() != n {
        return Err(Error::ModulusMismatch(n, chi.order().max(z.order())));
    }
    let det = g.det();
    let cz = g.c * *z + g.d;
    if !det.is_unit() {
        return Err(Error::DegenerateGroupElement("determinant is not a unit".into()));
    }
    if !cz.is_unit() {
        return Err(Error::DegenerateGroupElement("point mapped to infinity".into()));
    }
    let gz = (g.a * *z + g.b).try_div(&cz)?;
    let modulus = (det.coeff(0) / (cz.coeff(0) * cz.coeff(0))).norm().powi(n as i32);
    let arg = cz.log()? - det.log()? * c(0.5);
    Ok(psi(&gz) * modulus * chi.phase(&arg)?)
}

/// An element [[α, β], [γ, -α]] of sl₂(ℂ[ε]/(ε^n)).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sl2 {
    pub alpha: Jet,
    pub beta: Jet,
    pub gamma: Jet,
}

impl Sl2 {
    pub fn e(p: Jet) -> Sl2 {
        let n = p.order();
        Sl2 { alpha: Jet::zero(n), beta: p, gamma: Jet::zero(n) }
    }

    pub fn f(p: Jet) -> Sl2 {
        let n = p.order();
        Sl2 { alpha: Jet::zero(n), beta: Jet::zero(n), gamma: p }
    }

    /// h ⊗ p = diag(p, -p)
    pub fn h(p: Jet) -> Sl2 {
        let n = p.order();
        Sl2 { alpha: p, beta: Jet::zero(n), gamma: Jet::zero(n) }
    }

    pub fn order(&self) -> usize {
        self.alpha.order()
    }

    pub fn matrix(&self) -> JetMatrix {
        JetMatrix { a: self.alpha, b: self.beta, c: self.gamma, d: -self.alpha }
    }

    pub fn from_matrix(m: &JetMatrix) -> Sl2 {
        let t = m.traceless();
        Sl2 { alpha: t.a, beta: t.b, gamma: t.c }
    }

    pub fn scale(&self, k: C64) -> Sl2 {
        Sl2 { alpha: self.alpha * k, beta: self.beta * k, gamma: self.gamma * k }
    }
}

/// Holomorphic part of dρ(a) as a first-order operator Σ_j V_j ∂_j + λ at z,
/// together with the derivatives of its coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct LocalOperator {
    /// V_j
    pub v: Vec<C64>,
    /// λ
    pub lambda: C64,
    /// dv[j][k] = ∂V_j/∂z_k
    pub dv: Vec<Vec<C64>>,
    /// ∂λ/∂z_k
    pub dlambda: Vec<C64>,
}

pub fn lie_local(a: &Sl2, chi: &Character, z: &Jet) -> Result<LocalOperator> {
    let n = a.order();
    if chi.order() != n || z.order() != n {
        return Err(Error::ModulusMismatch(n, chi.order().max(z.order())));
    }
    let v = a.beta + a.alpha * *z * c(2.0) - a.gamma * *z * *z;
    let w = a.gamma * *z - a.alpha;
    let nf = n as f64;
    let half_i = C64::new(0.0, 0.5);
    let mut lambda = -(a.gamma.coeff(0) * z.coeff(0) - a.alpha.coeff(0)) * nf;
    for k in 0..n {
        lambda += half_i * chi.coeff(k) * w.coeff(k);
    }
    // ∂V/∂z_k = (2α - 2γz)ε^k, ∂W/∂z_k = γ ε^k
    let dvjet = (a.alpha - a.gamma * *z) * c(2.0);
    let mut dv = vec![vec![ZERO; n]; n];
    let mut dlambda = vec![ZERO; n];
    for k in 0..n {
        let col = dvjet * Jet::eps_pow(k, n);
        for j in 0..n {
            dv[j][k] = col.coeff(j);
        }
        let gw = a.gamma * Jet::eps_pow(k, n);
        let mut dl = if k == 0 { -a.gamma.coeff(0) * nf } else { ZERO };
        for j in 0..n {
            dl += half_i * chi.coeff(j) * gw.coeff(j);
        }
        dlambda[k] = dl;
    }
    Ok(LocalOperator { v: v.coeffs().to_vec(), lambda, dv, dlambda })
}

/// Holomorphic derivative of ψ along the complex coordinate z_k, central differences
/// with one Richardson step.
pub fn wirtinger_partial<F>(psi: &F, z: &Jet, k: usize, h: f64) -> C64
where
    F: Fn(&Jet) -> C64,
{
    let n = z.order();
    let dir = |v: C64| Jet::eps_pow(k, n) * v;
    let d_along = |v: C64, h: f64| -> C64 {
        let p = psi(&(*z + dir(v * h)));
        let m = psi(&(*z - dir(v * h)));
        (p - m) / (2.0 * h)
    };
    let rich = |v: C64| (d_along(v, h / 2.0) * 4.0 - d_along(v, h)) / 3.0;
    (rich(ONE) - C64::new(0.0, 1.0) * rich(C64::new(0.0, 1.0))) * 0.5
}

/// dρ(a)ψ(z), holomorphic part, with ψ differentiated numerically.
pub fn lie_action<F>(a: &Sl2, chi: &Character, psi: F, z: &Jet) -> Result<C64>
where
    F: Fn(&Jet) -> C64,
{
    let op = lie_local(a, chi, z)?;
    let mut acc = op.lambda * psi(z);
    for (k, vk) in op.v.iter().enumerate() {
        if vk.norm() == 0.0 {
            continue;
        }
        acc += *vk * wirtinger_partial(&psi, z, k, 1e-3);
    }
    Ok(acc)
}

/// g(s)⁻¹ ∂_s g(s) for the anchored element, projected to sl₂.
pub fn maurer_cartan(s: C64, x: C64, t: C64, n: usize) -> Result<Sl2> {
    let g = anchored_element(s, x, t, n)?;
    let tau = Jet::eps_pow(1, n) + t;
    let dg = JetMatrix {
        a: Jet::constant(-x, n),
        b: tau * (s * 2.0 - 1.0),
        c: Jet::constant(c(-1.0), n),
        d: Jet::constant(s * 2.0 - x, n),
    };
    Ok(Sl2::from_matrix(&g.inv()?.mul(&dg)))
}

pub fn numeric_rank(rows: &[Vec<C64>], rel_tol: f64) -> usize {
    if rows.is_empty() {
        return 0;
    }
    let ncol = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), ncol, |i, j| rows[i][j]);
    let sv = m.singular_values();
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&v| v > rel_tol * smax).count()
}

/// Orthonormal basis (rows) of the span, dropping directions below rel_tol.
fn orthonormal_basis(rows: &[Vec<C64>], rel_tol: f64) -> Vec<Vec<C64>> {
    if rows.is_empty() {
        return vec![];
    }
    let ncol = rows[0].len();
    let m = DMatrix::from_fn(rows.len(), ncol, |i, j| rows[i][j]);
    let svd = m.svd(false, true);
    let vt = svd.v_t.expect("requested");
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let mut out = vec![];
    for (i, s) in svd.singular_values.iter().enumerate() {
        if smax > 0.0 && *s > rel_tol * smax {
            out.push((0..ncol).map(|j| vt[(i, j)]).collect());
        }
    }
    out
}

/// Rank of the plain span and of the Lie algebra generated by {g(s)⁻¹g'(s)} over the samples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SpanRank {
    pub span: usize,
    pub generated: usize,
}

pub fn generation_span_rank(t: C64, x: C64, samples: &[C64], n: usize) -> Result<SpanRank> {
    let rel_tol = 1e-8;
    let mut rows = vec![];
    for &s in samples {
        rows.push(maurer_cartan(s, x, t, n)?.matrix().sl2_vector());
    }
    let span = numeric_rank(&rows, rel_tol);
    let mut basis = orthonormal_basis(&rows, rel_tol);
    loop {
        let mut ext = basis.clone();
        for i in 0..basis.len() {
            for j in i + 1..basis.len() {
                let a = JetMatrix::from_sl2_vector(&basis[i], n)?;
                let b = JetMatrix::from_sl2_vector(&basis[j], n)?;
                ext.push(a.commutator(&b).sl2_vector());
            }
        }
        let next = orthonormal_basis(&ext, rel_tol);
        if next.len() == basis.len() {
            break;
        }
        basis = next;
    }
    Ok(SpanRank { span, generated: basis.len() })
}

/// Rank of the differential of (s₁..s_N) ↦ Π_j (g_{s_j,x,i})_i at the given samples,
/// as a map into Π_i PGL₂(ℂ[ε]/(ε^{n_i})).
pub fn dominance_rank(clusters: &[(C64, usize)], x: C64, samples: &[C64]) -> Result<usize> {
    let mut cols: Vec<Vec<C64>> = vec![vec![]; samples.len()];
    let mid = samples.len() / 2;
    for &(t, n) in clusters {
        let mut gs = Vec::with_capacity(samples.len());
        let mut locals = Vec::with_capacity(samples.len());
        for &s in samples {
            let g = anchored_element(s, x, t, n)?;
            let tau = Jet::eps_pow(1, n) + t;
            let dg = JetMatrix {
                a: Jet::constant(-x, n),
                b: tau * (s * 2.0 - 1.0),
                c: Jet::constant(c(-1.0), n),
                d: Jet::constant(s * 2.0 - x, n),
            };
            locals.push(dg.mul(&g.inv()?));
            gs.push(g);
        }
        // ∂_{s_k}(g_1⋯g_N) right-translated to the identity is Ad(P_k)(g_k' g_k⁻¹), P_k = g_1⋯g_{k-1}.
        // Conjugating every column by P_mid⁻¹ keeps the rank and halves the product lengths.
        for k in 0..samples.len() {
            let q = if k >= mid {
                gs[mid..k].iter().fold(JetMatrix::identity(n), |acc, g| acc.mul(g))
            } else {
                gs[k..mid].iter().fold(JetMatrix::identity(n), |acc, g| acc.mul(g)).inv()?
            };
            let ad = q.mul(&locals[k]).mul(&q.inv()?);
            cols[k].extend(ad.sl2_vector());
        }
    }
    // prefix products grow geometrically; scale each column to unit length
    for col in cols.iter_mut() {
        let norm = col.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        if norm > 0.0 {
            col.iter_mut().for_each(|z| *z /= norm);
        }
    }
    Ok(numeric_rank(&cols, 1e-8))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cx(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn sigma_pairs_to_scalar() {
        let x = cx(0.3, 0.7);
        let t = cx(2.0, -1.0);
        for s in [cx(2.0, 1.0), cx(-0.4, 0.3), cx(5.0, 0.0)] {
            let g = anchored_element(s, x, t, 3).unwrap();
            let h = anchored_element(sigma(s, x), x, t, 3).unwrap();
            assert!(g.mul(&h).distance_from_scalar() < 1e-10);
        }
    }

    #[test]
    fn nu_pullback_example() {
        let x = cx(2.0, 0.0);
        let s = cx(3.0, 0.0);
        let ss = sigma(s, x);
        assert!((ss - cx(4.0, 0.0)).norm() < 1e-15);
        let jac = {
            let h = 1e-6;
            ((sigma(s + h, x) - sigma(s - h, x)) / (2.0 * h)).norm_sqr()
        };
        assert!((jac - 4.0).abs() < 1e-8);
        assert!((nu_density(ss, x) - 1.0 / 12.0).abs() < 1e-15);
        assert!((nu_density(s, x) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn degenerate_elements() {
        assert!(matches!(
            anchored_element(cx(0.0, 0.0), cx(2.0, 0.0), cx(3.0, 0.0), 2),
            Err(Error::DegenerateGroupElement(_))
        ));
        assert!(gauge_free_element(cx(1.0, 0.0), cx(2.0, 0.0), cx(2.0, 0.0), 2).is_err());
    }

    #[test]
    fn exp_of_nilpotent() {
        let e = Sl2::e(Jet::one(2)).matrix().scale(cx(0.7, 0.0));
        let g = e.exp();
        assert!((g.b.coeff(0) - cx(0.7, 0.0)).norm() < 1e-14);
        assert!((g.a.coeff(0) - cx(1.0, 0.0)).norm() < 1e-14);
    }

    #[test]
    fn classical_span_is_full() {
        let samples = [cx(3.0, 0.0), cx(4.0, 0.0), cx(6.0, 0.0), cx(7.0, 0.0)];
        let r = generation_span_rank(cx(2.0, 0.0), cx(5.0, 0.0), &samples, 1).unwrap();
        assert_eq!(r.span, 3);
        assert_eq!(r.generated, 3);
        let same = [cx(3.0, 0.0); 4];
        let r1 = generation_span_rank(cx(2.0, 0.0), cx(5.0, 0.0), &same, 1).unwrap();
        assert_eq!(r1.generated, 1);
    }

    #[test]
    fn lie_local_matches_finite_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 2;
        let chi = Character::new(&[cx(0.0, 0.0), cx(0.4, -0.3)]).unwrap();
        let a = Sl2 {
            alpha: Jet::random(&mut rng, n),
            beta: Jet::random(&mut rng, n),
            gamma: Jet::random(&mut rng, n),
        };
        let z = Jet::new(&[cx(rng.gen(), 0.2), cx(0.1, -0.3)], n).unwrap();
        let psi = |w: &Jet| {
            let a = w.coeff(0);
            let b = w.coeff(1);
            (-(a - 0.3).norm_sqr() - 0.5 * b.norm_sqr()).exp() * (a + b * 0.5)
        };
        let viaexp = {
            let h = 1e-4;
            let fwd = |t: C64| {
                let g = a.matrix().scale(t).exp();
                rho_apply(&g, &chi, psi, &z).unwrap()
            };
            let dre = (fwd(cx(h, 0.0)) - fwd(cx(-h, 0.0))) / (2.0 * h);
            let dim = (fwd(cx(0.0, h)) - fwd(cx(0.0, -h))) / (2.0 * h);
            (dre - cx(0.0, 1.0) * dim) * 0.5
        };
        let direct = lie_action(&a, &chi, psi, &z).unwrap();
        assert!((viaexp - direct).norm() < 1e-6, "{viaexp} vs {direct}");
    }

    #[test]
    fn dominance_rank_counts_cluster_dimensions() {
        let x = cx(-0.6, 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let samples: Vec<C64> =
            (0..16).map(|_| cx(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0))).collect();
        let t = [cx(2.0, 1.0), cx(-1.0, 0.5), cx(0.5, -1.5)];
        assert_eq!(dominance_rank(&[(t[0], 1)], x, &samples).unwrap(), 3);
        assert_eq!(dominance_rank(&[(t[0], 2)], x, &samples).unwrap(), 6);
        assert_eq!(dominance_rank(&[(t[1], 1), (t[2], 1)], x, &samples).unwrap(), 6);
        assert_eq!(dominance_rank(&[(t[0], 2), (t[1], 1), (t[2], 1)], x, &samples).unwrap(), 12);
        assert_eq!(dominance_rank(&[(t[0], 2), (t[1], 1), (t[2], 1)], x, &samples[..9]).unwrap(), 9);
    }
}
