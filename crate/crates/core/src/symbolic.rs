//! A small derivation algebra: polynomials in (t₀ - x), u₁, u₂, … times powers of (s - u₀)⁻¹,
//! with ∂u_i = (i+1) u_{i+1}, ∂t₀ = 1 and ∂s = ∂x = 0.
//!
//! Here u_i stands for the i-th Taylor coefficient of a curve u(t₀), so ∂ is d/dt₀.
//! Used as an independent check of the jet arithmetic.

use std::collections::BTreeMap;

use num_complex::Complex64 as C64;

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct Key {
    /// power of (t₀ - x)
    a: u32,
    /// powers of u_1, u_2, ...
    e: Vec<u32>,
    /// power of (s - u₀)⁻¹
    k: u32,
}

#[derive(Clone, Debug, Default)]
pub struct DerivPoly {
    terms: BTreeMap<Key, f64>,
}

impl DerivPoly {
    fn single(coeff: f64, a: u32, e: Vec<u32>, k: u32) -> Self {
        let mut p = DerivPoly::default();
        p.push(Key { a, e, k }, coeff);
        p
    }

    fn push(&mut self, mut key: Key, coeff: f64) {
        while key.e.last() == Some(&0) {
            key.e.pop();
        }
        *self.terms.entry(key).or_insert(0.0) += coeff;
    }

    /// (t₀ - x)/(s - u₀)
    pub fn argument() -> Self {
        DerivPoly::single(1.0, 1, vec![], 1)
    }

    /// ∂ log(s - u₀) = -u₁/(s - u₀)
    pub fn dlog() -> Self {
        DerivPoly::single(-1.0, 0, vec![1], 1)
    }

    pub fn derive(&self) -> DerivPoly {
        let mut out = DerivPoly::default();
        for (key, &c) in &self.terms {
            if key.a > 0 {
                let mut k2 = key.clone();
                k2.a -= 1;
                out.push(k2, c * key.a as f64);
            }
            for (idx, &p) in key.e.iter().enumerate() {
                if p == 0 {
                    continue;
                }
                // variable u_{idx+1}, derivative (idx+2) u_{idx+2}
                let mut k2 = key.clone();
                k2.e[idx] -= 1;
                if k2.e.len() < idx + 2 {
                    k2.e.resize(idx + 2, 0);
                }
                k2.e[idx + 1] += 1;
                out.push(k2, c * p as f64 * (idx + 2) as f64);
            }
            if key.k > 0 {
                let mut k2 = key.clone();
                k2.k += 1;
                if k2.e.is_empty() {
                    k2.e.push(0);
                }
                k2.e[0] += 1;
                out.push(k2, c * key.k as f64);
            }
        }
        out.terms.retain(|_, v| *v != 0.0);
        out
    }

    pub fn scale(&self, f: f64) -> DerivPoly {
        let mut out = self.clone();
        for v in out.terms.values_mut() {
            *v *= f;
        }
        out
    }

    /// Evaluate with tx = t₀ - x, u = [u₀, u₁, …] and the value of s.
    pub fn eval(&self, tx: C64, s: C64, u: &[C64]) -> C64 {
        let w = (s - u[0]).inv();
        let mut acc = C64::new(0.0, 0.0);
        for (key, &c) in &self.terms {
            let mut t = C64::new(c, 0.0) * tx.powu(key.a) * w.powu(key.k);
            for (idx, &p) in key.e.iter().enumerate() {
                t *= u[idx + 1].powu(p);
            }
            acc += t;
        }
        acc
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }
}

/// (1/j!) ∂^j of the starting expression for j = 0..n.
pub fn taylor_series(start: &DerivPoly, n: usize) -> Vec<DerivPoly> {
    let mut out = Vec::with_capacity(n + 1);
    let mut cur = start.clone();
    let mut fact = 1.0;
    for j in 0..=n {
        if j > 0 {
            cur = cur.derive();
            fact *= j as f64;
        }
        out.push(cur.scale(1.0 / fact));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivative_of_argument() {
        // ∂[(t-x)/(s-u0)] = 1/(s-u0) + (t-x) u1/(s-u0)^2
        let d = DerivPoly::argument().derive();
        assert_eq!(d.len(), 2);
        let v = d.eval(C64::new(2.0, 0.0), C64::new(3.0, 0.0), &[C64::new(1.0, 0.0), C64::new(0.5, 0.0)]);
        assert!((v - C64::new(0.5 + 2.0 * 0.5 / 4.0, 0.0)).norm() < 1e-15);
    }
}
