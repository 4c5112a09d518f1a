//! Complex dual and hyper-dual numbers for exact holomorphic derivatives of closed forms.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64 as C64;

pub trait Scalar:
    Copy
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn cst(c: C64) -> Self;
    fn value(&self) -> C64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn scale(self, k: C64) -> Self;
}

impl Scalar for C64 {
    fn cst(c: C64) -> Self {
        c
    }
    fn value(&self) -> C64 {
        *self
    }
    fn exp(self) -> Self {
        C64::exp(self)
    }
    fn ln(self) -> Self {
        C64::ln(self)
    }
    fn scale(self, k: C64) -> Self {
        self * k
    }
}

/// v + d·δ with δ² = 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual {
    pub v: C64,
    pub d: C64,
}

impl Dual {
    pub fn var(v: C64) -> Self {
        Dual { v, d: C64::new(1.0, 0.0) }
    }
    fn chain(self, f: C64, df: C64) -> Self {
        Dual { v: f, d: df * self.d }
    }
}

impl Add for Dual {
    type Output = Dual;
    fn add(self, o: Dual) -> Dual {
        Dual { v: self.v + o.v, d: self.d + o.d }
    }
}
impl Sub for Dual {
    type Output = Dual;
    fn sub(self, o: Dual) -> Dual {
        Dual { v: self.v - o.v, d: self.d - o.d }
    }
}
impl Mul for Dual {
    type Output = Dual;
    fn mul(self, o: Dual) -> Dual {
        Dual { v: self.v * o.v, d: self.d * o.v + self.v * o.d }
    }
}
impl Div for Dual {
    type Output = Dual;
    fn div(self, o: Dual) -> Dual {
        let inv = o.v.inv();
        Dual { v: self.v * inv, d: (self.d - self.v * inv * o.d) * inv }
    }
}
impl Neg for Dual {
    type Output = Dual;
    fn neg(self) -> Dual {
        Dual { v: -self.v, d: -self.d }
    }
}

impl Scalar for Dual {
    fn cst(c: C64) -> Self {
        Dual { v: c, d: C64::new(0.0, 0.0) }
    }
    fn value(&self) -> C64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.v.ln(), self.v.inv())
    }
    fn scale(self, k: C64) -> Self {
        Dual { v: self.v * k, d: self.d * k }
    }
}

/// v + a·δ₁ + b·δ₂ + ab·δ₁δ₂ with δ₁² = δ₂² = 0.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HyperDual {
    pub v: C64,
    pub a: C64,
    pub b: C64,
    pub ab: C64,
}

impl HyperDual {
    pub fn var(v: C64, first: bool, second: bool) -> Self {
        let one = C64::new(1.0, 0.0);
        let z = C64::new(0.0, 0.0);
        HyperDual {
            v,
            a: if first { one } else { z },
            b: if second { one } else { z },
            ab: z,
        }
    }

    /// f(self) from f, f', f'' at the value.
    fn chain(self, f: C64, df: C64, ddf: C64) -> Self {
        HyperDual {
            v: f,
            a: df * self.a,
            b: df * self.b,
            ab: df * self.ab + ddf * self.a * self.b,
        }
    }
}

impl Add for HyperDual {
    type Output = HyperDual;
    fn add(self, o: Self) -> Self {
        HyperDual { v: self.v + o.v, a: self.a + o.a, b: self.b + o.b, ab: self.ab + o.ab }
    }
}
impl Sub for HyperDual {
    type Output = HyperDual;
    fn sub(self, o: Self) -> Self {
        HyperDual { v: self.v - o.v, a: self.a - o.a, b: self.b - o.b, ab: self.ab - o.ab }
    }
}
impl Mul for HyperDual {
    type Output = HyperDual;
    fn mul(self, o: Self) -> Self {
        HyperDual {
            v: self.v * o.v,
            a: self.a * o.v + self.v * o.a,
            b: self.b * o.v + self.v * o.b,
            ab: self.ab * o.v + self.a * o.b + self.b * o.a + self.v * o.ab,
        }
    }
}
impl Div for HyperDual {
    type Output = HyperDual;
    fn div(self, o: Self) -> Self {
        let iv = o.v.inv();
        let inv = o.chain(iv, -iv * iv, 2.0 * iv * iv * iv);
        self * inv
    }
}
impl Neg for HyperDual {
    type Output = HyperDual;
    fn neg(self) -> Self {
        HyperDual { v: -self.v, a: -self.a, b: -self.b, ab: -self.ab }
    }
}

impl Scalar for HyperDual {
    fn cst(c: C64) -> Self {
        let z = C64::new(0.0, 0.0);
        HyperDual { v: c, a: z, b: z, ab: z }
    }
    fn value(&self) -> C64 {
        self.v
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let iv = self.v.inv();
        self.chain(self.v.ln(), iv, -iv * iv)
    }
    fn scale(self, k: C64) -> Self {
        HyperDual { v: self.v * k, a: self.a * k, b: self.b * k, ab: self.ab * k }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn second_derivative_of_exp_over_z() {
        // f(z) = exp(z)/z, f'' = exp(z)(1/z - 2/z² + 2/z³)
        let z0 = C64::new(0.7, -0.4);
        let z = HyperDual::var(z0, true, true);
        let f = z.exp() / z;
        let want = z0.exp() * (1.0 / z0 - 2.0 / (z0 * z0) + 2.0 / (z0 * z0 * z0));
        assert!((f.ab - want).norm() < 1e-13);
        let d = Dual::var(z0);
        let g = d.ln() * d;
        assert!((g.d - (z0.ln() + 1.0)).norm() < 1e-14);
    }
}
