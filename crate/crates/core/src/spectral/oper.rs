//! Least-squares fit of L = ∂²ₓ + Σ ν_ij (x − t_i)^{-j-1} to eigenvalue curves.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaudin::{equilibrated_lstsq, wirtinger_dxx};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperFit {
    pub points: Vec<C64>,
    /// nu[i][j] multiplies (x − t_i)^{-j-1}
    pub nu: Vec<Vec<C64>>,
    /// ‖A·ν + ∂²β‖/‖∂²β‖
    pub relative_residual: f64,
    pub condition: f64,
}

impl OperFit {
    pub fn potential(&self, x: C64) -> C64 {
        potential(&self.points, &self.nu, x)
    }

    /// Highest j with a coefficient above `tol` (relative to the largest), plus one.
    pub fn pole_orders(&self, tol: f64) -> Vec<usize> {
        let scale = self.nu.iter().flatten().fold(0.0f64, |m, c| m.max(c.norm()));
        self.nu
            .iter()
            .map(|row| row.iter().rposition(|c| c.norm() > tol * scale).map_or(0, |j| j + 1))
            .collect()
    }
}

pub fn potential(points: &[C64], nu: &[Vec<C64>], x: C64) -> C64 {
    let mut v = C64::new(0.0, 0.0);
    for (&t, row) in points.iter().zip(nu) {
        let w = (x - t).inv();
        let mut p = w;
        for c in row {
            v += c * p;
            p *= w;
        }
    }
    v
}

/// Fits ν from samples of β and ∂²ₓβ; `orders[i]` unknowns at t_i (2d_i for a cluster).
/// Needs at least four samples per unknown.
pub fn oper_fit(points: &[C64], orders: &[usize], xs: &[C64], beta: &[C64], d2beta: &[C64]) -> Result<OperFit> {
    if points.len() != orders.len() || xs.len() != beta.len() || xs.len() != d2beta.len() {
        return Err(Error::DimensionMismatch("oper fit inputs".into()));
    }
    let ncol: usize = orders.iter().sum();
    if xs.len() < 4 * ncol {
        return Err(Error::IllConditionedFit(f64::INFINITY));
    }
    let mut a = DMatrix::<C64>::zeros(xs.len(), ncol);
    for (r, (&x, &b)) in xs.iter().zip(beta).enumerate() {
        let mut c = 0;
        for (&t, &k) in points.iter().zip(orders) {
            if (x - t).norm() == 0.0 {
                return Err(Error::EvaluationAtMarkedPoint(format!("sample at {t}")));
            }
            let w = (x - t).inv();
            let mut p = w * b;
            for _ in 0..k {
                a[(r, c)] = p;
                p *= w;
                c += 1;
            }
        }
    }
    let rhs: Vec<C64> = d2beta.iter().map(|d| -d).collect();
    let (sol, relative_residual, condition) = equilibrated_lstsq(a, &rhs)?;
    let mut nu = vec![];
    let mut c = 0;
    for &k in orders {
        nu.push(sol[c..c + k].to_vec());
        c += k;
    }
    Ok(OperFit { points: points.to_vec(), nu, relative_residual, condition })
}

/// β and ∂²ₓβ at each x: 3×3 Wirtinger stencils at h·2^{-l}, combined by `levels` rounds of
/// Richardson extrapolation (error O(h^{2+2·levels})).
pub fn wirtinger_samples<F: Fn(C64) -> Result<C64>>(f: &F, xs: &[C64], h: f64, levels: usize) -> Result<(Vec<C64>, Vec<C64>)> {
    let mut beta = Vec::with_capacity(xs.len());
    let mut d2 = Vec::with_capacity(xs.len());
    for &x in xs {
        beta.push(f(x)?);
        let mut table: Vec<C64> = (0..=levels).map(|l| wirtinger_dxx(f, x, h / (1 << l) as f64)).collect::<Result<_>>()?;
        for l in 1..=levels {
            let p = 4f64.powi(l as i32);
            table = table.windows(2).map(|w| (w[1] * p - w[0]) / (p - 1.0)).collect();
        }
        d2.push(table[0]);
    }
    Ok((beta, d2))
}

/// Stencil nodes needed by `wirtinger_samples`, for batched evaluation.
pub fn stencil_nodes(xs: &[C64], h: f64, levels: usize) -> Vec<C64> {
    let mut out = vec![];
    for &x in xs {
        out.push(x);
        for l in 0..=levels {
            let s = h / (1 << l) as f64;
            for (a, b) in [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, 1.0), (1.0, -1.0), (-1.0, 1.0), (-1.0, -1.0)] {
                out.push(x + C64::new(a * s, b * s));
            }
        }
    }
    out
}

/// Holomorphic solutions of y'' = −V(x)y, integrated by RK4 along straight segments.
#[derive(Clone, Debug)]
pub struct SyntheticOper {
    pub points: Vec<C64>,
    pub nu: Vec<Vec<C64>>,
    pub base: C64,
    pub steps: usize,
}

impl SyntheticOper {
    /// (y₁, y₂) at x with y₁ = 1, y₁' = 0, y₂ = 0, y₂' = 1 at the base point.
    pub fn solutions(&self, x: C64) -> [C64; 2] {
        let dx = x - self.base;
        let n = self.steps.max(1);
        let hs = 1.0 / n as f64;
        let rhs = |tau: f64, s: [C64; 4]| {
            let z = self.base + dx * tau;
            let v = potential(&self.points, &self.nu, z);
            [dx * s[1], -dx * v * s[0], dx * s[3], -dx * v * s[2]]
        };
        let one = C64::new(1.0, 0.0);
        let zero = C64::new(0.0, 0.0);
        let mut s = [one, zero, zero, one];
        let add = |a: [C64; 4], b: [C64; 4], c: f64| [a[0] + b[0] * c, a[1] + b[1] * c, a[2] + b[2] * c, a[3] + b[3] * c];
        for i in 0..n {
            let tau = i as f64 * hs;
            let k1 = rhs(tau, s);
            let k2 = rhs(tau + hs / 2.0, add(s, k1, hs / 2.0));
            let k3 = rhs(tau + hs / 2.0, add(s, k2, hs / 2.0));
            let k4 = rhs(tau + hs, add(s, k3, hs));
            for j in 0..4 {
                s[j] += (k1[j] + k2[j] * 2.0 + k3[j] * 2.0 + k4[j]) * (hs / 6.0);
            }
        }
        [s[0], s[2]]
    }

    /// A real single-valued (on the star around the base) combination |y₁|² − |y₂|², which
    /// satisfies ∂²ₓβ = −Vβ because ∂ₓ sees only the holomorphic factors.
    pub fn beta(&self, x: C64) -> f64 {
        let [a, b] = self.solutions(x);
        a.norm_sqr() - b.norm_sqr()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cx(a: f64, b: f64) -> C64 {
        C64::new(a, b)
    }

    fn disk_samples(c: C64, r: f64, n: usize) -> Vec<C64> {
        // golden-angle spiral
        (0..n)
            .map(|i| {
                let rho = r * ((i as f64 + 0.5) / n as f64).sqrt();
                let th = i as f64 * 2.399963229728653;
                c + C64::from_polar(rho, th)
            })
            .collect()
    }

    #[test]
    fn synthetic_oper_recovered() {
        let points = vec![cx(0.0, 0.0), cx(1.0, 0.0), cx(2.5, 1.5)];
        let nu = vec![vec![cx(0.3, -0.2), cx(0.25, 0.0)], vec![cx(-0.1, 0.4), cx(0.25, 0.0)], vec![cx(0.05, 0.1), cx(0.25, 0.0)]];
        let base = cx(0.9, 1.6);
        let op = SyntheticOper { points: points.clone(), nu: nu.clone(), base, steps: 600 };
        let xs = disk_samples(base, 1.0, 40);
        let f = |x: C64| Ok(cx(op.beta(x), 0.0));
        let (b, d2) = wirtinger_samples(&f, &xs, 0.05, 2).unwrap();
        let fit = oper_fit(&points, &[2, 2, 2], &xs, &b, &d2).unwrap();
        for (row, want) in fit.nu.iter().zip(&nu) {
            for (c, w) in row.iter().zip(want) {
                assert!((c - w).norm() < 1e-6, "{c} vs {w}");
            }
        }
        assert!(fit.relative_residual < 1e-8);
        assert_eq!(fit.pole_orders(1e-6), vec![2, 2, 2]);
    }

    #[test]
    fn zero_beta_gives_zero_map() {
        let points = vec![cx(0.0, 0.0), cx(1.0, 0.0)];
        let xs = disk_samples(cx(0.5, 1.0), 0.5, 16);
        let z = vec![cx(0.0, 0.0); xs.len()];
        let fit = oper_fit(&points, &[2, 2], &xs, &z, &z).unwrap();
        assert!(fit.nu.iter().flatten().all(|c| *c == cx(0.0, 0.0)));
        assert_eq!(fit.relative_residual, 0.0);
    }

    #[test]
    fn too_few_samples_rejected() {
        let xs = disk_samples(cx(0.5, 1.0), 0.5, 7);
        let b = vec![cx(1.0, 0.0); 7];
        let e = oper_fit(&[cx(0.0, 0.0)], &[2], &xs, &b, &b);
        assert!(matches!(e, Err(Error::IllConditionedFit(_))));
    }

    #[test]
    fn stencil_nodes_cover_samples() {
        let xs = [cx(0.3, 0.2)];
        let nodes = stencil_nodes(&xs, 0.1, 1);
        assert_eq!(nodes.len(), 17);
        let f = |x: C64| Ok(x * x * x);
        let (_, d2) = wirtinger_samples(&f, &xs, 0.1, 1).unwrap();
        assert!((d2[0] - xs[0] * 6.0).norm() < 1e-10);
    }
}
