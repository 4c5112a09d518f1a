//! Truncated power series in ℂ[ε]/(ε^d) and the unitary characters on them.

use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

pub const MAX_ORDER: usize = 8;

const ZERO: C64 = C64::new(0.0, 0.0);

/// An element of ℂ[ε]/(ε^d), stored inline.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet {
    c: [C64; MAX_ORDER],
    d: usize,
}

impl fmt::Debug for Jet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.coeffs()).finish()
    }
}

fn check_order(d: usize) -> Result<()> {
    if d == 0 || d > MAX_ORDER {
        Err(Error::InvalidOrder(d))
    } else {
        Ok(())
    }
}

impl Jet {
    pub fn new(coeffs: &[C64], d: usize) -> Result<Self> {
        check_order(d)?;
        let mut c = [ZERO; MAX_ORDER];
        for (k, v) in coeffs.iter().take(d).enumerate() {
            c[k] = *v;
        }
        Ok(Jet { c, d })
    }

    pub fn from_real(coeffs: &[f64], d: usize) -> Result<Self> {
        let v: Vec<C64> = coeffs.iter().map(|&r| C64::new(r, 0.0)).collect();
        Jet::new(&v, d)
    }

    pub fn constant(a: C64, d: usize) -> Self {
        assert!(d >= 1 && d <= MAX_ORDER, "jet order {d} out of range");
        let mut c = [ZERO; MAX_ORDER];
        c[0] = a;
        Jet { c, d }
    }

    pub fn zero(d: usize) -> Self {
        Jet::constant(ZERO, d)
    }

    pub fn one(d: usize) -> Self {
        Jet::constant(C64::new(1.0, 0.0), d)
    }

    /// ε^k (zero if k >= d).
    pub fn eps_pow(k: usize, d: usize) -> Self {
        let mut j = Jet::zero(d);
        if k < d {
            j.c[k] = C64::new(1.0, 0.0);
        }
        j
    }

    pub fn order(&self) -> usize {
        self.d
    }

    pub fn coeffs(&self) -> &[C64] {
        &self.c[..self.d]
    }

    pub fn coeff(&self, k: usize) -> C64 {
        if k < self.d {
            self.c[k]
        } else {
            ZERO
        }
    }

    pub fn set_coeff(&mut self, k: usize, v: C64) {
        assert!(k < self.d);
        self.c[k] = v;
    }

    pub fn re0(&self) -> C64 {
        self.c[0]
    }

    pub fn is_unit(&self) -> bool {
        let a = self.c[0];
        a.re != 0.0 || a.im != 0.0
    }

    pub fn max_abs(&self) -> f64 {
        self.coeffs().iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn scale(&self, a: C64) -> Self {
        let mut r = *self;
        for k in 0..self.d {
            r.c[k] *= a;
        }
        r
    }

    /// Same coefficients, reduced or zero-padded to order d.
    pub fn with_order(&self, d: usize) -> Self {
        let mut r = Jet::zero(d);
        for k in 0..d.min(self.d) {
            r.c[k] = self.c[k];
        }
        r
    }

    fn same(&self, o: &Jet) -> Result<()> {
        if self.d != o.d {
            Err(Error::ModulusMismatch(self.d, o.d))
        } else {
            Ok(())
        }
    }

    pub fn try_add(&self, o: &Jet) -> Result<Jet> {
        self.same(o)?;
        let mut r = *self;
        for k in 0..self.d {
            r.c[k] += o.c[k];
        }
        Ok(r)
    }

    pub fn try_sub(&self, o: &Jet) -> Result<Jet> {
        self.same(o)?;
        let mut r = *self;
        for k in 0..self.d {
            r.c[k] -= o.c[k];
        }
        Ok(r)
    }

    pub fn try_mul(&self, o: &Jet) -> Result<Jet> {
        self.same(o)?;
        let mut r = Jet::zero(self.d);
        for i in 0..self.d {
            if self.c[i] == ZERO {
                continue;
            }
            for j in 0..self.d - i {
                r.c[i + j] += self.c[i] * o.c[j];
            }
        }
        Ok(r)
    }

    pub fn inv(&self) -> Result<Jet> {
        if !self.is_unit() {
            return Err(Error::NonUnitJet);
        }
        let a0inv = self.c[0].inv();
        let mut r = Jet::zero(self.d);
        r.c[0] = a0inv;
        for k in 1..self.d {
            let mut acc = ZERO;
            for j in 1..=k {
                acc += self.c[j] * r.c[k - j];
            }
            r.c[k] = -acc * a0inv;
        }
        Ok(r)
    }

    pub fn try_div(&self, o: &Jet) -> Result<Jet> {
        self.same(o)?;
        self.try_mul(&o.inv()?)
    }

    /// Logarithm with the principal branch on the constant term.
    pub fn log(&self) -> Result<Jet> {
        if !self.is_unit() {
            return Err(Error::NonUnitJet);
        }
        let a0 = self.c[0];
        let mut r = Jet::zero(self.d);
        r.c[0] = a0.ln();
        // k a_0 L_k = k a_k - sum_{j=1}^{k-1} j L_j a_{k-j}
        for k in 1..self.d {
            let mut acc = self.c[k] * k as f64;
            for j in 1..k {
                acc -= r.c[j] * self.c[k - j] * j as f64;
            }
            r.c[k] = acc / (a0 * k as f64);
        }
        Ok(r)
    }

    pub fn exp(&self) -> Jet {
        let mut r = Jet::zero(self.d);
        r.c[0] = self.c[0].exp();
        for k in 1..self.d {
            let mut acc = ZERO;
            for j in 1..=k {
                acc += self.c[j] * r.c[k - j] * j as f64;
            }
            r.c[k] = acc / k as f64;
        }
        r
    }

    /// a^p = exp(p log a), principal branch.
    pub fn powc(&self, p: C64) -> Result<Jet> {
        Ok(self.log()?.scale(p).exp())
    }

    pub fn powi(&self, n: i32) -> Result<Jet> {
        if n < 0 {
            return self.inv()?.powi(-n);
        }
        let mut r = Jet::one(self.d);
        for _ in 0..n {
            r = r * *self;
        }
        Ok(r)
    }

    /// Random jet with coefficients uniform in the box [-1,1]², constant term kept away from 0.
    pub fn random<R: rand::Rng>(rng: &mut R, d: usize) -> Jet {
        let mut c = [ZERO; MAX_ORDER];
        for v in c.iter_mut().take(d) {
            *v = C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        }
        if c[0].norm() < 0.2 {
            c[0] += C64::new(0.5, 0.0);
        }
        Jet { c, d }
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, o: Jet) -> Jet {
        self.try_add(&o).expect("jet order mismatch")
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, o: Jet) -> Jet {
        self.try_sub(&o).expect("jet order mismatch")
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, o: Jet) -> Jet {
        self.try_mul(&o).expect("jet order mismatch")
    }
}

impl Div for Jet {
    type Output = Jet;
    fn div(self, o: Jet) -> Jet {
        self.try_div(&o).expect("jet division failed")
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(C64::new(-1.0, 0.0))
    }
}

impl AddAssign for Jet {
    fn add_assign(&mut self, o: Jet) {
        *self = *self + o;
    }
}

impl SubAssign for Jet {
    fn sub_assign(&mut self, o: Jet) {
        *self = *self - o;
    }
}

impl MulAssign for Jet {
    fn mul_assign(&mut self, o: Jet) {
        *self = *self * o;
    }
}

impl Add<C64> for Jet {
    type Output = Jet;
    fn add(mut self, a: C64) -> Jet {
        self.c[0] += a;
        self
    }
}

impl Sub<C64> for Jet {
    type Output = Jet;
    fn sub(mut self, a: C64) -> Jet {
        self.c[0] -= a;
        self
    }
}

impl Mul<C64> for Jet {
    type Output = Jet;
    fn mul(self, a: C64) -> Jet {
        self.scale(a)
    }
}

/// (t + ε - x) / (s - u), the argument of a Hecke-modified function on a jet.
pub fn hecke_argument_jet(t: C64, x: C64, s: C64, u: &Jet) -> Result<Jet> {
    let d = u.order();
    let num = Jet::eps_pow(1, d) + (t - x);
    let den = -*u + s;
    num.try_div(&den)
}

/// [ε^j] log(s − u) as the trapezoid rule for (1/2πi)∮ log(s − u(z)) z^{−j−1} dz on a circle
/// small enough that u(z) stays in the disc |w − u₀| < |s − u₀|.
pub fn contour_log_coefficient(u: &Jet, s: C64, j: usize, nodes: usize) -> Result<C64> {
    let w0 = s - u.coeff(0);
    if w0.norm() == 0.0 {
        return Err(Error::CoincidentCoordinates);
    }
    if j == 0 || j >= u.order() {
        return Err(Error::InvalidOrder(j));
    }
    let tail: f64 = (1..u.order()).map(|k| u.coeff(k).norm()).sum();
    let r = if tail > 0.0 { (0.5 * w0.norm() / tail).min(1.0) } else { 1.0 };
    let mut acc = ZERO;
    for k in 0..nodes {
        let th = 2.0 * std::f64::consts::PI * k as f64 / nodes as f64;
        let z = C64::from_polar(r, th);
        let mut du = ZERO;
        let mut p = z;
        for i in 1..u.order() {
            du += u.coeff(i) * p;
            p *= z;
        }
        // the constant log(s − u₀) has no ε^j part
        let l = (C64::new(1.0, 0.0) - du / w0).ln();
        acc += l * C64::from_polar(1.0, -(j as f64) * th);
    }
    Ok(acc / (nodes as f64 * r.powi(j as i32)))
}

/// A unitary character χ(L) = i·Re Σ c_j L_j on ℂ[ε]/(ε^d).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Character {
    c: Jet,
}

impl Character {
    /// Im c₀ must be an integer so the character is single valued on logarithms.
    pub fn new(coeffs: &[C64]) -> Result<Self> {
        if coeffs.is_empty() || coeffs.len() > MAX_ORDER {
            return Err(Error::InvalidCharacter(format!(
                "need 1..=8 coefficients, got {}",
                coeffs.len()
            )));
        }
        let c0 = coeffs[0];
        if (c0.im - c0.im.round()).abs() > 1e-9 {
            return Err(Error::InvalidCharacter(format!(
                "Im c0 = {} is not an integer",
                c0.im
            )));
        }
        if coeffs.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::InvalidCharacter("non-finite coefficient".into()));
        }
        Ok(Character {
            c: Jet::new(coeffs, coeffs.len())?,
        })
    }

    pub fn trivial(d: usize) -> Self {
        Character { c: Jet::zero(d) }
    }

    pub fn order(&self) -> usize {
        self.c.order()
    }

    pub fn coeffs(&self) -> &[C64] {
        self.c.coeffs()
    }

    pub fn coeff(&self, k: usize) -> C64 {
        self.c.coeff(k)
    }

    pub fn is_trivial(&self) -> bool {
        self.coeffs().iter().all(|v| v.norm() == 0.0)
    }

    /// Im c₀ is odd: the representation is projective only up to sign.
    pub fn odd_winding(&self) -> bool {
        (self.c.coeff(0).im.round() as i64).rem_euclid(2) == 1
    }

    /// i·Re Σ c_j b_j (purely imaginary).
    pub fn eval(&self, b: &Jet) -> Result<C64> {
        if b.order() != self.order() {
            return Err(Error::ModulusMismatch(self.order(), b.order()));
        }
        let mut acc = ZERO;
        for k in 0..self.order() {
            acc += self.c.coeff(k) * b.coeff(k);
        }
        Ok(C64::new(0.0, acc.re))
    }

    /// exp χ(b), a unit complex number.
    pub fn phase(&self, b: &Jet) -> Result<C64> {
        Ok(self.eval(b)?.exp())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn close(a: &Jet, b: &Jet, tol: f64) -> bool {
        a.order() == b.order() && (*a - *b).max_abs() < tol
    }

    #[test]
    fn product_truncates() {
        let a = Jet::from_real(&[1.0, 1.0, 0.0], 3).unwrap();
        let b = Jet::from_real(&[1.0, -1.0, 1.0], 3).unwrap();
        assert!(close(&(a * b), &Jet::one(3), 1e-15));
    }

    #[test]
    fn inverse_of_two_plus_eps() {
        let a = Jet::from_real(&[2.0, 1.0], 2).unwrap();
        let want = Jet::from_real(&[0.5, -0.25], 2).unwrap();
        assert!(close(&a.inv().unwrap(), &want, 1e-15));
    }

    #[test]
    fn log_first_coefficient() {
        let a = Jet::from_real(&[2.0, -1.0], 2).unwrap();
        let l = a.log().unwrap();
        assert!((l.coeff(1) - c(-0.5, 0.0)).norm() < 1e-15);
        assert!((l.coeff(0) - c(2f64.ln(), 0.0)).norm() < 1e-15);
    }

    #[test]
    fn argument_jet_example() {
        let u = Jet::from_real(&[0.0, 1.0], 2).unwrap();
        let a = hecke_argument_jet(c(1.0, 0.0), c(0.0, 0.0), c(2.0, 0.0), &u).unwrap();
        assert!(close(&a, &Jet::from_real(&[0.5, 0.75], 2).unwrap(), 1e-15));
    }

    #[test]
    fn nonunit_and_mismatch() {
        let z = Jet::from_real(&[0.0, 1.0], 2).unwrap();
        assert_eq!(z.inv(), Err(Error::NonUnitJet));
        assert_eq!(z.log(), Err(Error::NonUnitJet));
        let a = Jet::one(2);
        let b = Jet::one(3);
        assert_eq!(a.try_mul(&b), Err(Error::ModulusMismatch(2, 3)));
        assert_eq!(Jet::new(&[], 9), Err(Error::InvalidOrder(9)));
    }

    #[test]
    fn exp_log_roundtrip_random() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 1..=MAX_ORDER {
            for _ in 0..20 {
                let a = Jet::random(&mut rng, d);
                assert!(close(&a.log().unwrap().exp(), &a, 1e-12));
                let b = Jet::random(&mut rng, d);
                let lhs = (a * b).log().unwrap();
                let rhs = a.log().unwrap() + b.log().unwrap();
                // constant terms may differ by 2πi
                let mut diff = lhs - rhs;
                let k = (diff.coeff(0).im / (2.0 * std::f64::consts::PI)).round();
                diff = diff - c(0.0, 2.0 * std::f64::consts::PI * k);
                assert!(diff.max_abs() < 1e-12 * (1.0 + lhs.max_abs()), "{}", diff.max_abs());
            }
        }
    }

    #[test]
    fn character_requires_integer_winding() {
        assert!(Character::new(&[c(0.0, 0.5)]).is_err());
        let ch = Character::new(&[c(0.3, 1.0), c(0.0, 2.0)]).unwrap();
        assert!(ch.odd_winding());
        let b = Jet::new(&[c(1.0, 2.0), c(-1.0, 0.5)], 2).unwrap();
        let v = ch.eval(&b).unwrap();
        assert_eq!(v.re, 0.0);
        // c0 b0 + c1 b1 = (0.3+i)(1+2i) + 2i(-1+0.5i) = (0.3-2+(-1)) + ...
        assert!((v.im - (0.3 - 2.0 - 1.0)).abs() < 1e-14);
    }

    #[test]
    fn contour_coefficients() {
        let u = Jet::from_real(&[0.0, 1.0], 2).unwrap();
        let v = contour_log_coefficient(&u, c(2.0, 0.0), 1, 256).unwrap();
        assert!((v - c(-0.5, 0.0)).norm() < 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for d in 2..=5 {
            let u = Jet::random(&mut rng, d);
            let s = u.coeff(0) + c(1.5, -0.7);
            let l = (-u + s).log().unwrap();
            for j in 1..d {
                let v = contour_log_coefficient(&u, s, j, 256).unwrap();
                assert!((v - l.coeff(j)).norm() < 1e-8, "d={d} j={j}");
            }
        }
        let k = Jet::constant(c(0.3, 0.1), 3);
        assert!(contour_log_coefficient(&k, c(2.0, 0.0), 2, 256).unwrap().norm() < 1e-15);
        assert!(contour_log_coefficient(&k, c(0.3, 0.1), 1, 256).is_err());
    }
}
