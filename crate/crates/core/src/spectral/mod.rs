//! Joint spectra of the Hecke family: Lanczos eigenpairs, hermitization and commutator
//! diagnostics, eigenvalue curves in x.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::GridOperator;
use crate::quadrature::pairwise_sum;

pub mod asymptotics;
pub mod oper;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

pub trait LinearOperator: Sync {
    fn dim(&self) -> usize;
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>>;
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>>;

    fn apply_many(&self, vs: &[&[C64]]) -> Result<Vec<Vec<C64>>> {
        vs.iter().map(|v| self.apply(v)).collect()
    }
}

impl<T: LinearOperator + ?Sized> LinearOperator for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        (**self).apply(v)
    }
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        (**self).apply_adjoint(v)
    }
    fn apply_many(&self, vs: &[&[C64]]) -> Result<Vec<Vec<C64>>> {
        (**self).apply_many(vs)
    }
}

fn check_len(n: usize, v: &[C64]) -> Result<()> {
    if v.len() != n {
        return Err(Error::DimensionMismatch(format!("vector of length {} for operator of size {n}", v.len())));
    }
    Ok(())
}

impl LinearOperator for DMatrix<C64> {
    fn dim(&self) -> usize {
        self.nrows()
    }
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        check_len(self.ncols(), v)?;
        Ok((self * DVector::from_column_slice(v)).as_slice().to_vec())
    }
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        check_len(self.nrows(), v)?;
        Ok(self.ad_mul(&DVector::from_column_slice(v)).as_slice().to_vec())
    }
}

impl LinearOperator for GridOperator {
    fn dim(&self) -> usize {
        self.len()
    }
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.apply_values(v)
    }
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.adjoint_values(v)
    }
    fn apply_many(&self, vs: &[&[C64]]) -> Result<Vec<Vec<C64>>> {
        self.apply_many_values(vs)
    }
}

/// (A + A*)/2
pub struct Hermitian<A>(pub A);

impl<A: LinearOperator> LinearOperator for Hermitian<A> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        let a = self.0.apply(v)?;
        let b = self.0.apply_adjoint(v)?;
        Ok(a.iter().zip(&b).map(|(x, y)| (x + y) * 0.5).collect())
    }
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.apply(v)
    }
}

/// i(A - A*)/2, Hermitian with the spectral norm of the skew part.
pub struct SkewPart<A>(pub A);

impl<A: LinearOperator> LinearOperator for SkewPart<A> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        let a = self.0.apply(v)?;
        let b = self.0.apply_adjoint(v)?;
        Ok(a.iter().zip(&b).map(|(x, y)| (x - y) * C64::new(0.0, 0.5)).collect())
    }
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.apply(v)
    }
}

/// A - B
pub struct Difference<A, B>(pub A, pub B);

impl<A: LinearOperator, B: LinearOperator> LinearOperator for Difference<A, B> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        let a = self.0.apply(v)?;
        let b = self.1.apply(v)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        let a = self.0.apply_adjoint(v)?;
        let b = self.1.apply_adjoint(v)?;
        Ok(a.iter().zip(&b).map(|(x, y)| x - y).collect())
    }
}

/// A*A
pub struct Gram<A>(pub A);

impl<A: LinearOperator> LinearOperator for Gram<A> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.0.apply_adjoint(&self.0.apply(v)?)
    }
    fn apply_adjoint(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.apply(v)
    }
}

pub fn dot(a: &[C64], b: &[C64]) -> C64 {
    pairwise_sum(a.iter().zip(b).map(|(x, y)| x.conj() * y))
}

pub fn norm(a: &[C64]) -> f64 {
    dot(a, a).re.max(0.0).sqrt()
}

/// Uniform complex entries in the unit square, unit norm.
pub fn random_unit_vector(n: usize, rng: &mut ChaCha8Rng) -> Vec<C64> {
    let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
    let s = norm(&v);
    v.into_iter().map(|x| x / s).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    pub k: usize,
    pub max_steps: usize,
    /// residual tolerance relative to the largest Ritz value
    pub tol: f64,
    pub seed: u64,
    /// recompute ‖Av − βv‖ with k extra applies
    pub true_residuals: bool,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions { k: 10, max_steps: 400, tol: 1e-9, seed: 0, true_residuals: true }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Eigenpair {
    pub value: f64,
    pub vector: Vec<C64>,
    /// ‖Av − βv‖/(‖v‖·max|β|)
    pub residual: f64,
    pub near_zero: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralResult {
    /// sorted by decreasing |β|
    pub pairs: Vec<Eigenpair>,
    pub steps: usize,
    pub converged: bool,
}

impl SpectralResult {
    pub fn values(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.value).collect()
    }

    pub fn vectors(&self) -> Vec<&[C64]> {
        self.pairs.iter().map(|p| p.vector.as_slice()).collect()
    }

    pub fn max_residual(&self) -> f64 {
        self.pairs.iter().map(|p| p.residual).fold(0.0, f64::max)
    }
}

const NEAR_ZERO: f64 = 1e-10;

/// Indices of the k largest |θ|, ties broken by value.
fn top_indices(theta: &[f64], k: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..theta.len()).collect();
    idx.sort_by(|&a, &b| theta[b].abs().total_cmp(&theta[a].abs()).then(theta[b].total_cmp(&theta[a])));
    idx.truncate(k);
    idx
}

fn orthogonalize(w: &mut [C64], basis: &[Vec<C64>]) {
    for _ in 0..2 {
        for q in basis {
            let c = dot(q, w);
            for (x, y) in w.iter_mut().zip(q) {
                *x -= c * y;
            }
        }
    }
}

/// Lanczos with full reorthogonalization. Returns the top-k Ritz pairs even if unconverged.
fn lanczos<A: LinearOperator>(op: &A, opts: &LanczosOptions) -> Result<SpectralResult> {
    let n = op.dim();
    if opts.k == 0 || opts.k > n {
        return Err(Error::DimensionMismatch(format!("k = {} for operator of size {n}", opts.k)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let cap = opts.max_steps.min(n).max(opts.k);
    let mut q: Vec<Vec<C64>> = vec![random_unit_vector(n, &mut rng)];
    let (mut alpha, mut beta) = (Vec::<f64>::new(), Vec::<f64>::new());
    let mut last_top: Option<Vec<f64>> = None;
    let mut scale: f64 = 0.0;
    loop {
        let j = alpha.len();
        let mut w = op.apply(&q[j])?;
        let a = dot(&q[j], &w).re;
        for (x, y) in w.iter_mut().zip(&q[j]) {
            *x -= y * a;
        }
        if j > 0 {
            let b = beta[j - 1];
            for (x, y) in w.iter_mut().zip(&q[j - 1]) {
                *x -= y * b;
            }
        }
        orthogonalize(&mut w, &q);
        alpha.push(a);
        let mut b = norm(&w);
        let steps = j + 1;
        scale = scale.max(a.abs()).max(b);
        let breakdown = b <= 1e-12 * scale.max(1e-300) || b == 0.0;

        let check = steps >= opts.k && (breakdown || steps == cap || steps % 5 == 0);
        if check {
            let t = DMatrix::from_fn(steps, steps, |r, c| {
                if r == c {
                    alpha[r]
                } else if r + 1 == c {
                    beta[r]
                } else if c + 1 == r {
                    beta[c]
                } else {
                    0.0
                }
            });
            let eig = t.symmetric_eigen();
            let theta: Vec<f64> = eig.eigenvalues.iter().copied().collect();
            let top = top_indices(&theta, opts.k);
            let tmax = theta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let bound = |i: usize| if breakdown { 0.0 } else { b * eig.eigenvectors[(steps - 1, i)].abs() };
            let vals: Vec<f64> = top.iter().map(|&i| theta[i]).collect();
            let mut done = steps == n;
            if !breakdown {
                done |= top.len() == opts.k && top.iter().all(|&i| bound(i) <= opts.tol * tmax.max(1e-300));
            } else if let Some(prev) = &last_top {
                // an exhausted Krylov segment that changed nothing among the top k
                done |= prev.len() == vals.len()
                    && prev.iter().zip(&vals).all(|(p, v)| (p - v).abs() <= opts.tol * tmax.max(1e-300));
            }
            if breakdown {
                last_top = Some(vals);
            }
            if done || steps == cap {
                let mut pairs: Vec<Eigenpair> = top
                    .iter()
                    .map(|&i| {
                        let mut y = vec![ZERO; n];
                        for (l, ql) in q.iter().enumerate().take(steps) {
                            let c = eig.eigenvectors[(l, i)];
                            for (x, z) in y.iter_mut().zip(ql) {
                                *x += z * c;
                            }
                        }
                        Eigenpair {
                            value: theta[i],
                            vector: y,
                            residual: bound(i) / tmax.max(1e-300),
                            near_zero: theta[i].abs() <= NEAR_ZERO * tmax || tmax == 0.0,
                        }
                    })
                    .collect();
                if opts.true_residuals {
                    let vs: Vec<&[C64]> = pairs.iter().map(|p| p.vector.as_slice()).collect();
                    let avs = op.apply_many(&vs)?;
                    for (p, av) in pairs.iter_mut().zip(avs) {
                        let r: Vec<C64> = av.iter().zip(&p.vector).map(|(a, v)| a - v * p.value).collect();
                        p.residual = norm(&r) / (norm(&p.vector) * tmax.max(1e-300));
                    }
                }
                return Ok(SpectralResult { pairs, steps, converged: done });
            }
        }
        if breakdown {
            // restart orthogonally to the current basis
            let mut r = random_unit_vector(n, &mut rng);
            orthogonalize(&mut r, &q);
            let rn = norm(&r);
            if rn < 1e-8 {
                return Err(Error::NoConvergence("Krylov space exhausted before the size".into()));
            }
            w = r;
            b = rn;
            beta.push(0.0);
        } else {
            beta.push(b);
        }
        q.push(w.into_iter().map(|x| x / b).collect());
    }
}

/// Top-k eigenpairs (by |β|) of a Hermitian operator; deterministic given the seed.
pub fn topk_eigen<A: LinearOperator>(op: &A, opts: &LanczosOptions) -> Result<SpectralResult> {
    let r = lanczos(op, opts)?;
    if !r.converged {
        return Err(Error::NoConvergence(format!(
            "{} Lanczos steps, max residual {:.2e}",
            r.steps,
            r.max_residual()
        )));
    }
    Ok(r)
}

/// Largest |eigenvalue| of a Hermitian operator from a short Lanczos run (a lower bound).
pub fn largest_magnitude<A: LinearOperator>(op: &A, steps: usize, seed: u64) -> Result<f64> {
    let opts = LanczosOptions { k: 1, max_steps: steps, tol: 1e-10, seed, true_residuals: false };
    Ok(lanczos(op, &opts)?.pairs[0].value.abs())
}

/// Dense Hermitian oracle: the top-k pairs of (A + A*)/2 by |β|.
pub fn dense_eigen(a: &DMatrix<C64>, k: usize) -> Vec<(f64, DVector<C64>)> {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let eig = h.symmetric_eigen();
    let theta: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    top_indices(&theta, k).into_iter().map(|i| (theta[i], eig.eigenvectors.column(i).into_owned())).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Defect {
    /// ‖(A − A*)/2‖₂
    pub skew: f64,
    /// ‖A‖₂
    pub norm: f64,
    /// skew / norm
    pub defect: f64,
}

/// Hermitian part and the spectral-norm defect of a dense matrix.
pub fn hermitize(a: &DMatrix<C64>) -> (DMatrix<C64>, Defect) {
    let h = (a + a.adjoint()) * C64::new(0.5, 0.0);
    let s = (a - a.adjoint()) * C64::new(0.5, 0.0);
    let skew = s.singular_values().max();
    let norm = a.singular_values().max();
    let defect = if norm > 0.0 { skew / norm } else { 0.0 };
    (h, Defect { skew, norm, defect })
}

/// Matrix-free defect; ‖A‖ is estimated by the Hermitian part, which differs by at most ‖skew‖.
pub fn hermitization_defect<A: LinearOperator>(a: &A, steps: usize, seed: u64) -> Result<Defect> {
    let skew = largest_magnitude(&SkewPart(a), steps, seed)?;
    let norm = largest_magnitude(&Hermitian(a), steps, seed.wrapping_add(1))?;
    Ok(Defect { skew, norm, defect: if norm > 0.0 { skew / norm } else { 0.0 } })
}

/// max over v of ‖(AB − BA)v‖ / (‖A‖‖B‖‖v‖).
pub fn commutator_ratio<A: LinearOperator, B: LinearOperator>(
    a: &A,
    b: &B,
    vectors: &[&[C64]],
    norm_a: f64,
    norm_b: f64,
) -> Result<f64> {
    let bv = b.apply_many(vectors)?;
    let av = a.apply_many(vectors)?;
    let abv = a.apply_many(&bv.iter().map(|v| v.as_slice()).collect::<Vec<_>>())?;
    let bav = b.apply_many(&av.iter().map(|v| v.as_slice()).collect::<Vec<_>>())?;
    let mut worst: f64 = 0.0;
    for ((x, y), v) in abv.iter().zip(&bav).zip(vectors) {
        let d: Vec<C64> = x.iter().zip(y).map(|(p, q)| p - q).collect();
        worst = worst.max(norm(&d) / (norm_a * norm_b * norm(v)).max(1e-300));
    }
    Ok(worst)
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JointPair {
    pub beta: f64,
    /// Rayleigh quotient of the second operator
    pub beta2: f64,
    pub vector: Vec<C64>,
    /// ‖Av − βv‖ and ‖Bv − β₂v‖, relative to the largest |β| of each operator
    pub residual: f64,
    pub residual2: f64,
}

/// Diagonalizes the second operator inside clusters of the first (relative gap threshold).
pub fn joint_refine<A: LinearOperator, B: LinearOperator>(
    result: &SpectralResult,
    a: &A,
    b: &B,
    gap: f64,
) -> Result<Vec<JointPair>> {
    let k = result.pairs.len();
    let scale = result.pairs.iter().fold(0.0f64, |m, p| m.max(p.value.abs())).max(1e-300);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&i, &j| result.pairs[j].value.total_cmp(&result.pairs[i].value));
    let mut clusters: Vec<Vec<usize>> = vec![];
    for &i in &order {
        match clusters.last_mut() {
            Some(c) if (result.pairs[*c.last().unwrap()].value - result.pairs[i].value).abs() <= gap * scale => c.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    let vs: Vec<&[C64]> = result.vectors();
    let bv = b.apply_many(&vs)?;
    let mut vectors: Vec<Vec<C64>> = vec![];
    let mut bvectors: Vec<Vec<C64>> = vec![];
    for c in &clusters {
        let m = DMatrix::from_fn(c.len(), c.len(), |r, s| dot(vs[c[r]], &bv[c[s]]));
        let h = (&m + m.adjoint()) * C64::new(0.5, 0.0);
        let eig = h.symmetric_eigen();
        let mut idx: Vec<usize> = (0..c.len()).collect();
        idx.sort_by(|&p, &q| eig.eigenvalues[q].total_cmp(&eig.eigenvalues[p]));
        for e in idx {
            let mut y = vec![ZERO; vs[0].len()];
            let mut by = y.clone();
            for (r, &i) in c.iter().enumerate() {
                let w = eig.eigenvectors[(r, e)];
                for ((yy, byy), (v, bvv)) in y.iter_mut().zip(by.iter_mut()).zip(vs[i].iter().zip(&bv[i])) {
                    *yy += v * w;
                    *byy += bvv * w;
                }
            }
            vectors.push(y);
            bvectors.push(by);
        }
    }
    let av = a.apply_many(&vectors.iter().map(|v| v.as_slice()).collect::<Vec<_>>())?;
    let mut out = vec![];
    for ((v, av), bv) in vectors.into_iter().zip(av).zip(bvectors) {
        let nv = dot(&v, &v).re;
        let beta = dot(&v, &av).re / nv;
        let beta2 = dot(&v, &bv).re / nv;
        let ra: Vec<C64> = av.iter().zip(&v).map(|(x, y)| x - y * beta).collect();
        let rb: Vec<C64> = bv.iter().zip(&v).map(|(x, y)| x - y * beta2).collect();
        out.push(JointPair { beta, beta2, residual: norm(&ra) / nv.sqrt(), residual2: norm(&rb) / nv.sqrt(), vector: v });
    }
    let s2 = out.iter().fold(0.0f64, |m, p| m.max(p.beta2.abs())).max(1e-300);
    for p in &mut out {
        p.residual /= scale;
        p.residual2 /= s2;
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub k: usize,
    pub x: C64,
    /// Rayleigh quotient ⟨v, H_x v⟩/⟨v, v⟩ (imaginary part kept as a diagnostic)
    pub beta: C64,
    /// ‖H_x v − Re β·v‖/‖v‖
    pub residual: f64,
}

/// β_k(x) by Rayleigh quotients of fixed vectors.
pub fn beta_curves<O, F>(vectors: &[&[C64]], xs: &[C64], make: F) -> Result<Vec<CurvePoint>>
where
    O: LinearOperator,
    F: Fn(C64) -> Result<O>,
{
    let mut out = vec![];
    for &x in xs {
        let op = make(x)?;
        let hv = op.apply_many(vectors)?;
        for (k, (v, h)) in vectors.iter().zip(&hv).enumerate() {
            let nv = dot(v, v).re;
            let beta = dot(v, h) / nv;
            let r: Vec<C64> = h.iter().zip(v.iter()).map(|(a, b)| a - b * beta.re).collect();
            out.push(CurvePoint { k, x, beta, residual: norm(&r) / nv.sqrt() });
        }
    }
    Ok(out)
}

/// Greedy maximal-overlap matching: result[i] is the index in `b` matched to `a[i]`.
pub fn match_by_overlap(a: &[&[C64]], b: &[&[C64]]) -> Vec<Option<usize>> {
    let mut cand = vec![];
    for (i, u) in a.iter().enumerate() {
        let nu = norm(u);
        for (j, v) in b.iter().enumerate() {
            cand.push((dot(u, v).norm() / (nu * norm(v)).max(1e-300), i, j));
        }
    }
    cand.sort_by(|p, q| q.0.total_cmp(&p.0).then(p.1.cmp(&q.1)).then(p.2.cmp(&q.2)));
    let mut out = vec![None; a.len()];
    let mut used = vec![false; b.len()];
    for (_, i, j) in cand {
        if out[i].is_none() && !used[j] {
            out[i] = Some(j);
            used[j] = true;
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RealityReport {
    /// max |Im β_k(x)|
    pub max_imag: f64,
    /// max over x of ‖skew part of H_x‖
    pub imag_bound: f64,
    /// max over neighbours and k of |β_k(x') − β_k(x)| / ‖(H_x' − H_x)‖ bound
    pub jump_ratio: f64,
    pub real_ok: bool,
    pub continuous_ok: bool,
}

/// Curves along an ordered x-path. `skew[i]` bounds the skew part of H at the i-th x;
/// `steps[i]` bounds ‖H_{x_{i+1}} − H_{x_i}‖.
pub fn reality_check(curves: &[CurvePoint], xs: &[C64], skew: &[f64], steps: &[f64]) -> RealityReport {
    let at = |k: usize, x: C64| curves.iter().find(|c| c.k == k && c.x == x);
    let kmax = curves.iter().map(|c| c.k + 1).max().unwrap_or(0);
    let mut max_imag: f64 = 0.0;
    let mut real_ok = true;
    for (i, &x) in xs.iter().enumerate() {
        for c in curves.iter().filter(|c| c.x == x) {
            max_imag = max_imag.max(c.beta.im.abs());
            real_ok &= c.beta.im.abs() <= skew[i] * (1.0 + 1e-9) + 1e-14;
        }
    }
    let mut jump_ratio: f64 = 0.0;
    for k in 0..kmax {
        for (i, w) in xs.windows(2).enumerate() {
            if let (Some(a), Some(b)) = (at(k, w[0]), at(k, w[1])) {
                let jump = (b.beta - a.beta).norm();
                jump_ratio = jump_ratio.max(if steps[i] > 0.0 { jump / steps[i] } else if jump > 0.0 { f64::INFINITY } else { 0.0 });
            }
        }
    }
    RealityReport {
        max_imag,
        imag_bound: skew.iter().copied().fold(0.0, f64::max),
        jump_ratio,
        real_ok,
        continuous_ok: jump_ratio <= 1.0 + 1e-9,
    }
}

/// Weyl form of the continuity proxy: sorted top-k eigenvalues at neighbouring x move by at
/// most ‖H_x' − H_x‖. Returns the worst ratio.
pub fn weyl_ratio(sorted_values: &[Vec<f64>], steps: &[f64]) -> f64 {
    let mut worst: f64 = 0.0;
    for (i, w) in sorted_values.windows(2).enumerate() {
        for (a, b) in w[0].iter().zip(&w[1]) {
            let d = (a - b).abs();
            worst = worst.max(if steps[i] > 0.0 { d / steps[i] } else if d > 0.0 { f64::INFINITY } else { 0.0 });
        }
    }
    worst
}

/// Smallest Rayleigh quotient of Σ_x H_x*H_x over the sample vectors, relative to the largest.
pub fn common_kernel_proxy<O: LinearOperator>(ops: &[O], vectors: &[&[C64]]) -> Result<f64> {
    let mut q = vec![0.0; vectors.len()];
    for op in ops {
        for (qi, hv) in q.iter_mut().zip(op.apply_many(vectors)?) {
            *qi += dot(&hv, &hv).re;
        }
    }
    for (qi, v) in q.iter_mut().zip(vectors) {
        *qi /= dot(v, v).re;
    }
    let max = q.iter().copied().fold(0.0, f64::max);
    let min = q.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(if max > 0.0 { min / max } else { 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(d: &[f64]) -> DMatrix<C64> {
        DMatrix::from_fn(d.len(), d.len(), |i, j| if i == j { C64::new(d[i], 0.0) } else { ZERO })
    }

    fn random_hermitian(n: usize, seed: u64) -> DMatrix<C64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        (&a + a.adjoint()) * C64::new(0.5, 0.0)
    }

    #[test]
    fn diagonal_top_k_exact() {
        let d: Vec<f64> = (0..60).map(|i| 1.0 / (1.0 + i as f64) * if i % 3 == 0 { -1.0 } else { 1.0 }).collect();
        let r = topk_eigen(&diag(&d), &LanczosOptions { k: 6, ..Default::default() }).unwrap();
        let want = [-1.0, 0.5, 1.0 / 3.0, -0.25, 0.2, 1.0 / 6.0];
        for (p, w) in r.pairs.iter().zip(want) {
            assert!((p.value - w).abs() < 1e-12, "{} vs {w}", p.value);
            assert!(p.residual < 1e-8);
        }
    }

    #[test]
    fn matches_dense_oracle() {
        let a = random_hermitian(80, 3);
        let r = topk_eigen(&a, &LanczosOptions { k: 8, ..Default::default() }).unwrap();
        let d = dense_eigen(&a, 8);
        for (p, (v, _)) in r.pairs.iter().zip(&d) {
            assert!((p.value - v).abs() < 1e-9);
        }
        // orthonormal vectors
        for i in 0..8 {
            for j in 0..8 {
                let g = dot(&r.pairs[i].vector, &r.pairs[j].vector);
                assert!((g - if i == j { 1.0 } else { 0.0 }).norm() < 1e-8);
            }
        }
    }

    #[test]
    fn rank_deficient_flags_near_zero() {
        let mut d = vec![0.0; 40];
        d[..3].copy_from_slice(&[3.0, 2.0, 1.0]);
        let r = topk_eigen(&diag(&d), &LanczosOptions { k: 5, ..Default::default() }).unwrap();
        assert_eq!(r.pairs.iter().filter(|p| p.near_zero).count(), 2);
        assert!(!r.pairs[2].near_zero);
    }

    #[test]
    fn step_cap_reports_no_convergence() {
        let a = random_hermitian(200, 9);
        let e = topk_eigen(&a, &LanczosOptions { k: 10, max_steps: 12, ..Default::default() });
        assert!(matches!(e, Err(Error::NoConvergence(_))));
    }

    #[test]
    fn hermitize_defects() {
        let a = random_hermitian(20, 1);
        let (h, d) = hermitize(&a);
        assert!((h - &a).norm() < 1e-14 && d.defect < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let b = DMatrix::from_fn(20, 20, |_, _| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
        let (_, d) = hermitize(&b);
        let skew = ((&b - b.adjoint()) * C64::new(0.5, 0.0)).singular_values().max();
        assert!((d.defect - skew / b.singular_values().max()).abs() < 1e-14);
        // matrix-free estimate agrees with the dense value
        let mf = hermitization_defect(&b, 20, 0).unwrap();
        assert!((mf.skew - d.skew).abs() < 1e-8 * d.skew);
    }

    #[test]
    fn joint_refine_splits_degeneracy() {
        // A has a 2-fold eigenvalue; B splits it
        let n = 30;
        let mut da: Vec<f64> = (0..n).map(|i| 1.0 / (i as f64 + 1.0)).collect();
        da[1] = 1.0;
        let u = {
            let h = random_hermitian(n, 5);
            h.symmetric_eigen().eigenvectors
        };
        let a = &u * diag(&da) * u.adjoint();
        let db: Vec<f64> = (0..n).map(|i| (i as f64 * 0.7).sin()).collect();
        let b = &u * diag(&db) * u.adjoint();
        let r = topk_eigen(&a, &LanczosOptions { k: 4, ..Default::default() }).unwrap();
        let j = joint_refine(&r, &a, &b, 1e-5).unwrap();
        let top: Vec<&JointPair> = j.iter().filter(|p| (p.beta - 1.0).abs() < 1e-8).collect();
        assert_eq!(top.len(), 2);
        let mut b2: Vec<f64> = top.iter().map(|p| p.beta2).collect();
        b2.sort_by(f64::total_cmp);
        let mut want = vec![db[0], db[1]];
        want.sort_by(f64::total_cmp);
        assert!((b2[0] - want[0]).abs() < 1e-8 && (b2[1] - want[1]).abs() < 1e-8);
        assert!(j.iter().all(|p| p.residual < 1e-7 && p.residual2 < 1e-7));
    }

    #[test]
    fn simple_spectrum_unchanged_by_refinement() {
        let a = random_hermitian(40, 11);
        let r = topk_eigen(&a, &LanczosOptions { k: 5, ..Default::default() }).unwrap();
        let j = joint_refine(&r, &a, &a, 1e-5).unwrap();
        for q in &r.pairs {
            let p = j.iter().find(|p| (p.beta - q.value).abs() < 1e-10).expect("eigenvalue kept");
            assert!((dot(&p.vector, &q.vector).norm() - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn zero_operator_curves() {
        let z = DMatrix::<C64>::zeros(10, 10);
        let v = vec![C64::new(1.0, 0.0); 10];
        let c = beta_curves(&[&v], &[C64::new(2.0, 0.0), C64::new(3.0, 0.0)], |_| Ok(z.clone())).unwrap();
        assert!(c.iter().all(|p| p.beta == ZERO && p.residual == 0.0));
        let xs = [C64::new(2.0, 0.0), C64::new(3.0, 0.0)];
        let rep = reality_check(&c, &xs, &[0.0, 0.0], &[0.0]);
        assert!(rep.real_ok && rep.continuous_ok);
    }

    #[test]
    fn overlap_matching_recovers_permutation() {
        let e: Vec<Vec<C64>> = (0..4).map(|i| (0..4).map(|j| C64::new(if i == j { 1.0 } else { 0.01 }, 0.0)).collect()).collect();
        let b = [&e[2][..], &e[0][..], &e[3][..], &e[1][..]];
        let a: Vec<&[C64]> = e.iter().map(|v| v.as_slice()).collect();
        assert_eq!(match_by_overlap(&a, &b), vec![Some(1), Some(3), Some(0), Some(2)]);
    }
}
