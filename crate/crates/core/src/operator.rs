//! The gauge-fixed Hecke operator on a grid, matrix-free.
//!
//! Output nodes sharing the constant terms of all cluster coordinates share one quadrature
//! plan, the density and the first argument coordinate; only the higher jet coordinates
//! vary inside such a group. Node data is cached per group.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::hecke::ChartKernel;
use crate::jet::Jet;
use crate::moduli::{Configuration, StateGrid};
use crate::quadrature::{PairwiseAcc, QuadraturePlan};

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

#[derive(Clone, Copy, Debug)]
struct ClusterRec {
    inv_a: C64,
    /// second argument coefficient is alpha + beta·v₁ (d = 2)
    alpha: C64,
    beta: C64,
    /// extra phase is Re(gamma·v₁) (d = 2)
    gamma: C64,
}

#[derive(Clone, Copy, Debug)]
struct NodeRec {
    weight: C64,
    lam: C64,
    st_start: u32,
    st_len: u32,
}

#[derive(Clone, Debug, Default)]
struct Group {
    base: usize,
    nodes: Vec<NodeRec>,
    clusters: Vec<ClusterRec>,
    stencil: Vec<(usize, f64)>,
}

#[derive(Clone, Debug)]
struct Member {
    flat: usize,
    /// higher jet coordinates per cluster, [v_i1, v_i2, …]
    hi: Vec<Vec<C64>>,
}

/// Matrix-free H_x on a fixed grid.
#[derive(Clone, Debug)]
pub struct GridOperator {
    kernel: ChartKernel,
    grid: StateGrid,
    groups: Vec<Group>,
    members: Vec<Member>,
    /// chart coordinate of each cluster's constant term
    pos_coord: Vec<usize>,
    orders: Vec<usize>,
    affine: bool,
    /// the single order-2 cluster when all others are simple: the higher coordinates form one plane
    plane: Option<usize>,
    /// group rank of every flat position offset (plane path)
    rank: Vec<u32>,
}

fn check_grid(cfg: &Configuration, g: &StateGrid) -> Result<()> {
    if g.dim() != cfg.chart_dim() {
        return Err(Error::DimensionMismatch(format!(
            "grid of dimension {} for a chart of dimension {}",
            g.dim(),
            cfg.chart_dim()
        )));
    }
    Ok(())
}

/// All index tuples of `axes` (each with n values), as (flat offset, per-axis indices).
fn enumerate(grid: &StateGrid, axes: &[(usize, usize)]) -> Vec<(usize, Vec<usize>)> {
    let n = grid.nodes_per_axis();
    let total = n.pow(axes.len() as u32);
    (0..total)
        .map(|mut c| {
            let mut flat = 0;
            let mut idx = Vec::with_capacity(axes.len());
            for &(k, part) in axes {
                let i = c % n;
                c /= n;
                flat += i * grid.stride(k, part);
                idx.push(i);
            }
            (flat, idx)
        })
        .collect()
}

impl GridOperator {
    pub fn new(kernel: ChartKernel, grid: &StateGrid) -> Result<Self> {
        let cfg = kernel.cfg.clone();
        check_grid(&cfg, grid)?;
        let mut pos_coord = vec![];
        let mut pos_axes = vec![];
        let mut hi_axes = vec![];
        let mut k = 0;
        let orders: Vec<usize> = cfg.clusters().iter().map(|c| c.order()).collect();
        for &d in &orders {
            pos_coord.push(k);
            pos_axes.extend([(k, 0), (k, 1)]);
            for j in 1..d {
                hi_axes.extend([(k + j, 0), (k + j, 1)]);
            }
            k += d;
        }
        let members = enumerate(grid, &hi_axes)
            .into_iter()
            .map(|(flat, idx)| {
                let mut hi = vec![];
                let mut a = 0;
                for (ci, &d) in orders.iter().enumerate() {
                    let mut h = vec![];
                    for j in 1..d {
                        let c = pos_coord[ci] + j;
                        h.push(C64::new(grid.axis_value(c, idx[a]), grid.axis_value(c, idx[a + 1])));
                        a += 2;
                    }
                    hi.push(h);
                }
                Member { flat, hi }
            })
            .collect();
        let affine = orders.iter().all(|&d| d <= 2);
        let plane = match orders.iter().filter(|&&d| d >= 2).count() {
            1 if affine => orders.iter().position(|&d| d == 2),
            _ => None,
        };
        let mut op = GridOperator {
            kernel,
            grid: grid.with_values(vec![ZERO; grid.len()])?,
            groups: vec![],
            members,
            pos_coord,
            orders,
            affine,
            plane,
            rank: vec![],
        };
        let starts = enumerate(grid, &pos_axes);
        let groups: Vec<Result<Group>> = starts
            .par_iter()
            .map(|(flat, idx)| {
                let pos: Vec<C64> = (0..op.pos_coord.len())
                    .map(|ci| {
                        let c = op.pos_coord[ci];
                        C64::new(grid.axis_value(c, idx[2 * ci]), grid.axis_value(c, idx[2 * ci + 1]))
                    })
                    .collect();
                op.build_group(*flat, &pos)
            })
            .collect();
        op.groups = groups.into_iter().collect::<Result<_>>()?;
        if op.plane.is_some() {
            op.rank = vec![u32::MAX; grid.len()];
            for (r, (flat, _)) in starts.iter().enumerate() {
                op.rank[*flat] = r as u32;
            }
        }
        Ok(op)
    }

    fn build_group(&self, base: usize, pos: &[C64]) -> Result<Group> {
        let cfg = &self.kernel.cfg;
        let x = self.kernel.x;
        let mut centers = vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0), x];
        for p in pos {
            if centers[..2].iter().chain(&centers[3..]).any(|c| (c - p).norm() < 1e-12) {
                // coincident output node: the row is left at zero (measure-zero set)
                return Ok(Group { base, ..Default::default() });
            }
            centers.push(*p);
        }
        let plan = QuadraturePlan::build(&centers, &self.kernel.spec)?;
        let m = cfg.m() as i32;
        let mut g = Group { base, ..Default::default() };
        let mut st = Vec::new();
        let mut coords = Vec::with_capacity(pos.len());
        for (&s, &w) in plan.nodes.iter().zip(&plan.weights) {
            let lam = s * (s - 1.0) / (s - x);
            let xs = x / s;
            let mut density = (s * (s - 1.0)).norm().powi(m - 2) / (s - x).norm().powi(m);
            let mut phase = ZERO;
            coords.clear();
            let mut recs = Vec::with_capacity(pos.len());
            for ((c, &p), &k) in cfg.clusters().iter().zip(pos).zip(&self.pos_coord) {
                let a = s - p;
                let inv_a = a.inv();
                let tx = c.t - x;
                coords.push((k, lam * (tx * inv_a + xs)));
                density *= a.norm().powi(-2 * c.order() as i32);
                phase += c.chi.coeff(0) * a.ln();
                let c1 = if c.order() >= 2 { c.chi.coeff(1) } else { ZERO };
                recs.push(ClusterRec {
                    inv_a,
                    alpha: lam * inv_a,
                    beta: lam * tx * inv_a * inv_a,
                    gamma: -c1 * inv_a,
                });
            }
            if !density.is_finite() || density == 0.0 {
                continue;
            }
            self.grid.partial_stencil(&coords, &mut st);
            if st.is_empty() {
                continue;
            }
            let weight = self.kernel.prefactor * w * density * C64::new(0.0, phase.re).exp();
            g.nodes.push(NodeRec { weight, lam, st_start: g.stencil.len() as u32, st_len: st.len() as u32 });
            g.stencil.extend_from_slice(&st);
            g.clusters.extend(recs);
        }
        Ok(g)
    }

    pub fn kernel(&self) -> &ChartKernel {
        &self.kernel
    }

    pub fn grid(&self) -> &StateGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Number of cached quadrature nodes (all groups).
    pub fn cached_nodes(&self) -> usize {
        self.groups.iter().map(|g| g.nodes.len()).sum()
    }

    /// Higher-coordinate arguments and extra phase for one (node, member).
    fn higher(&self, g: &Group, q: usize, node: &NodeRec, m: &Member, coords: &mut Vec<(usize, C64)>) -> Result<C64> {
        coords.clear();
        let nc = self.orders.len();
        let mut theta = 0.0;
        for ci in 0..nc {
            let d = self.orders[ci];
            if d < 2 {
                continue;
            }
            let rec = &g.clusters[q * nc + ci];
            let k = self.pos_coord[ci];
            if self.affine {
                let v1 = m.hi[ci][0];
                coords.push((k + 1, rec.alpha + rec.beta * v1));
                theta += (rec.gamma * v1).re;
            } else {
                let c = &self.kernel.cfg.clusters()[ci];
                let mut w = Jet::zero(d);
                for j in 1..d {
                    w.set_coeff(j, m.hi[ci][j - 1]);
                }
                let qj = w.scale(rec.inv_a);
                // (1 - q)⁻¹ and log(1 - q) as finite series
                let mut g1 = Jet::one(d);
                let mut pw = Jet::one(d);
                let mut lg = Jet::zero(d);
                for e in 1..d {
                    pw = pw * qj;
                    g1 = g1 + pw;
                    lg = lg - pw.scale(C64::new(1.0 / e as f64, 0.0));
                }
                let tx = Jet::eps_pow(1, d) + (c.t - self.kernel.x);
                let arg = (tx * g1).scale(rec.inv_a * node.lam);
                for j in 1..d {
                    coords.push((k + j, arg.coeff(j)));
                }
                theta += c.chi.eval(&lg)?.im;
            }
        }
        Ok(C64::new(theta.cos(), theta.sin()))
    }

    fn group_rows<V: FnMut(usize, C64, &[(usize, f64)], &[(usize, f64)])>(&self, g: &Group, m: &Member, mut visit: V) -> Result<()> {
        let mut coords = Vec::new();
        let mut hst = Vec::new();
        for (q, node) in g.nodes.iter().enumerate() {
            let ph = self.higher(g, q, node, m, &mut coords)?;
            if coords.is_empty() {
                hst.clear();
                hst.push((0, 1.0));
            } else {
                self.grid.partial_stencil(&coords, &mut hst);
                if hst.is_empty() {
                    continue;
                }
            }
            let pst = &g.stencil[node.st_start as usize..(node.st_start + node.st_len) as usize];
            visit(q, node.weight * ph, pst, &hst);
        }
        Ok(())
    }

    /// Per node of a plane group: weighted phase and bilinear cell of every member landing in
    /// the box. The cell is (index into the zero-padded (n+2)² field, fx, fy).
    fn plane_rows<V: FnMut(usize, C64, usize, f64, f64)>(&self, ci: usize, g: &Group, q: usize, mut visit: V) {
        let n = self.grid.nodes_per_axis();
        let k = self.pos_coord[ci] + 1;
        let (r, h) = (self.grid.radius()[k], self.grid.spacing(k));
        let rec = &g.clusters[q * self.orders.len() + ci];
        if rec.beta == ZERO {
            return;
        }
        let w = g.nodes[q].weight;
        let axis: Vec<f64> = (0..n).map(|i| self.grid.axis_value(k, i)).collect();
        let ph_re: Vec<C64> = axis.iter().map(|&a| C64::new(0.0, rec.gamma.re * a).exp()).collect();
        let ph_im: Vec<C64> = axis.iter().map(|&b| C64::new(0.0, -rec.gamma.im * b).exp()).collect();
        // members whose argument can land in the box: a disk around the preimage of 0
        let c = -rec.alpha / rec.beta;
        let rho = std::f64::consts::SQRT_2 * (r + h) / rec.beta.norm();
        let range = |z: f64| {
            let lo = ((z - rho + r) / h).ceil().max(0.0);
            let hi = ((z + rho + r) / h).floor().min(n as f64 - 1.0);
            lo as usize..(hi + 1.0).max(lo) as usize
        };
        let top = n as f64;
        for j in range(c.im) {
            let wj = w * ph_im[j];
            for i in range(c.re) {
                let arg = rec.alpha + rec.beta * C64::new(axis[i], axis[j]);
                let (pr, pi) = ((arg.re + r) / h, (arg.im + r) / h);
                if !(pr > -1.0 && pr < top && pi > -1.0 && pi < top) {
                    continue;
                }
                let (fr, fi) = (pr.floor(), pi.floor());
                let cell = (fr + 1.0) as usize + (n + 2) * (fi + 1.0) as usize;
                visit(i + n * j, wj * ph_re[i], cell, pr - fr, pi - fi);
            }
        }
    }

    /// Position-major copy: the member plane of each group is contiguous.
    fn to_plane_major(&self, v: &[C64]) -> Vec<C64> {
        let nm = self.members.len();
        let mut t = vec![ZERO; v.len()];
        for (r, g) in self.groups.iter().enumerate() {
            for (mi, m) in self.members.iter().enumerate() {
                t[r * nm + mi] = v[g.base + m.flat];
            }
        }
        t
    }

    fn plane_apply(&self, ci: usize, g: &Group, vs: &[&[C64]]) -> Vec<(usize, Vec<C64>)> {
        const FLUSH: usize = 64;
        let n = self.grid.nodes_per_axis();
        let np = (n + 2) * (n + 2);
        let nm = self.members.len();
        let nv = vs.len();
        let mut accs = vec![PairwiseAcc::default(); nm * nv];
        let mut block = vec![ZERO; nm * nv];
        let mut field = vec![ZERO; np * nv];
        for (q, node) in g.nodes.iter().enumerate() {
            let pst = &g.stencil[node.st_start as usize..(node.st_start + node.st_len) as usize];
            for (vi, v) in vs.iter().enumerate() {
                let f = &mut field[vi * np..(vi + 1) * np];
                f.iter_mut().for_each(|x| *x = ZERO);
                for &(pi, pw) in pst {
                    let src = &v[self.rank[pi] as usize * nm..][..nm];
                    for (j, row) in src.chunks_exact(n).enumerate() {
                        let dst = &mut f[(n + 2) * (j + 1) + 1..][..n];
                        for (d, s) in dst.iter_mut().zip(row) {
                            *d += s * pw;
                        }
                    }
                }
            }
            self.plane_rows(ci, g, q, |mo, w, cell, fx, fy| {
                for vi in 0..nv {
                    let f = &field[vi * np + cell..];
                    let val = (f[0] * (1.0 - fx) + f[1] * fx) * (1.0 - fy) + (f[n + 2] * (1.0 - fx) + f[n + 3] * fx) * fy;
                    block[mo * nv + vi] += w * val;
                }
            });
            if (q + 1) % FLUSH == 0 || q + 1 == g.nodes.len() {
                for (a, b) in accs.iter_mut().zip(block.iter_mut()) {
                    a.push(*b);
                    *b = ZERO;
                }
            }
        }
        self.members
            .iter()
            .enumerate()
            .map(|(mo, m)| (g.base + m.flat, (0..nv).map(|vi| accs[mo * nv + vi].total()).collect()))
            .collect()
    }

    /// Accumulates into a position-major output.
    fn plane_adjoint(&self, ci: usize, g: &Group, y: &[C64], out: &mut [C64]) {
        if self.members.iter().all(|m| y[g.base + m.flat] == ZERO) {
            return;
        }
        let n = self.grid.nodes_per_axis();
        let ys: Vec<C64> = self.members.iter().map(|m| y[g.base + m.flat]).collect();
        let mut field = vec![ZERO; (n + 2) * (n + 2)];
        for (q, node) in g.nodes.iter().enumerate() {
            field.iter_mut().for_each(|f| *f = ZERO);
            self.plane_rows(ci, g, q, |mo, w, cell, fx, fy| {
                let wy = w.conj() * ys[mo];
                field[cell] += wy * ((1.0 - fx) * (1.0 - fy));
                field[cell + 1] += wy * (fx * (1.0 - fy));
                field[cell + n + 2] += wy * ((1.0 - fx) * fy);
                field[cell + n + 3] += wy * (fx * fy);
            });
            let pst = &g.stencil[node.st_start as usize..(node.st_start + node.st_len) as usize];
            let nm = self.members.len();
            for &(pi, pw) in pst {
                let dst = &mut out[self.rank[pi] as usize * nm..][..nm];
                for (j, row) in dst.chunks_exact_mut(n).enumerate() {
                    for (d, s) in row.iter_mut().zip(&field[(n + 2) * (j + 1) + 1..][..n]) {
                        *d += s * pw;
                    }
                }
            }
        }
    }

    /// H_x applied to raw grid values.
    pub fn apply_values(&self, v: &[C64]) -> Result<Vec<C64>> {
        self.apply_many_values(&[v]).map(|mut r| r.remove(0))
    }

    /// H_x applied to several value vectors at once.
    pub fn apply_many_values(&self, vs: &[&[C64]]) -> Result<Vec<Vec<C64>>> {
        let n = self.len();
        if vs.iter().any(|v| v.len() != n) {
            return Err(Error::DimensionMismatch("state size".into()));
        }
        let nv = vs.len();
        let major: Vec<Vec<C64>> = if self.plane.is_some() { vs.iter().map(|v| self.to_plane_major(v)).collect() } else { vec![] };
        let major: Vec<&[C64]> = major.iter().map(|v| v.as_slice()).collect();
        let per_group: Vec<Result<Vec<(usize, Vec<C64>)>>> = self
            .groups
            .par_iter()
            .map(|g| {
                if let Some(ci) = self.plane {
                    return Ok(self.plane_apply(ci, g, &major));
                }
                let mut out = Vec::with_capacity(self.members.len());
                for m in &self.members {
                    let mut accs = vec![PairwiseAcc::default(); nv];
                    self.group_rows(g, m, |_, w, pst, hst| {
                        for (acc, v) in accs.iter_mut().zip(vs) {
                            let mut val = ZERO;
                            for &(pi, pw) in pst {
                                for &(hi, hw) in hst {
                                    val += v[pi + hi] * (pw * hw);
                                }
                            }
                            acc.push(w * val);
                        }
                    })?;
                    out.push((g.base + m.flat, accs.iter().map(|a| a.total()).collect()));
                }
                Ok(out)
            })
            .collect();
        let mut res = vec![vec![ZERO; n]; nv];
        for r in per_group {
            for (i, vals) in r? {
                for (o, v) in res.iter_mut().zip(vals) {
                    o[i] = v;
                }
            }
        }
        Ok(res)
    }

    /// Adjoint of the discrete operator with respect to the grid inner product.
    pub fn adjoint_values(&self, y: &[C64]) -> Result<Vec<C64>> {
        let n = self.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch("state size".into()));
        }
        // fixed chunks, summed in order: independent of the thread count
        let chunk = self.groups.len().div_ceil(16).max(1);
        let partials: Vec<Result<Vec<C64>>> = self
            .groups
            .par_chunks(chunk)
            .map(|gs| {
                let mut out = vec![ZERO; n];
                for g in gs {
                    if let Some(ci) = self.plane {
                        self.plane_adjoint(ci, g, y, &mut out);
                        continue;
                    }
                    for m in &self.members {
                        let yi = y[g.base + m.flat];
                        if yi == ZERO {
                            continue;
                        }
                        self.group_rows(g, m, |_, w, pst, hst| {
                            let wy = w.conj() * yi;
                            for &(pi, pw) in pst {
                                for &(hi, hw) in hst {
                                    out[pi + hi] += wy * (pw * hw);
                                }
                            }
                        })?;
                    }
                }
                Ok(out)
            })
            .collect();
        let mut acc = vec![ZERO; n];
        for p in partials {
            for (a, v) in acc.iter_mut().zip(p?) {
                *a += v;
            }
        }
        if self.plane.is_some() {
            let nm = self.members.len();
            let mut back = vec![ZERO; n];
            for (r, g) in self.groups.iter().enumerate() {
                for (mi, m) in self.members.iter().enumerate() {
                    back[g.base + m.flat] = acc[r * nm + mi];
                }
            }
            acc = back;
        }
        Ok(acc)
    }

    pub fn apply(&self, state: &StateGrid) -> Result<StateGrid> {
        check_grid(&self.kernel.cfg, state)?;
        state.with_values(self.apply_values(state.values())?)
    }

    pub fn apply_adjoint(&self, state: &StateGrid) -> Result<StateGrid> {
        check_grid(&self.kernel.cfg, state)?;
        state.with_values(self.adjoint_values(state.values())?)
    }

    /// Dense collocation matrix (rows: output nodes, columns: input nodes).
    pub fn dense(&self) -> Result<DMatrix<C64>> {
        let n = self.len();
        let rows: Vec<Result<Vec<(usize, Vec<C64>)>>> = self
            .groups
            .par_iter()
            .map(|g| {
                let mut out = vec![];
                for m in &self.members {
                    let mut row = vec![ZERO; n];
                    self.group_rows(g, m, |_, w, pst, hst| {
                        for &(pi, pw) in pst {
                            for &(hi, hw) in hst {
                                row[pi + hi] += w * (pw * hw);
                            }
                        }
                    })?;
                    out.push((g.base + m.flat, row));
                }
                Ok(out)
            })
            .collect();
        let mut a = DMatrix::zeros(n, n);
        for r in rows {
            for (i, row) in r? {
                for (j, v) in row.into_iter().enumerate() {
                    a[(i, j)] = v;
                }
            }
        }
        Ok(a)
    }
}

pub fn apply_hecke_grid(kernel: &ChartKernel, state: &StateGrid) -> Result<StateGrid> {
    GridOperator::new(kernel.clone(), state)?.apply(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hecke::Normalization;
    use crate::moduli::{sample_state, Profile, TestFunction};
    use crate::quadrature::PlanSpec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn cx(a: f64, b: f64) -> C64 {
        C64::new(a, b)
    }

    #[test]
    fn grouped_rows_match_kernel_rows() {
        let cfg = Configuration::wild_minimal(cx(2.0, 0.5), cx(0.7, -0.4)).unwrap();
        let k = ChartKernel::new(&cfg, cx(-0.6, 0.9), &PlanSpec::coarse(), Normalization::Representation).unwrap();
        let grid = StateGrid::zeros(6, &[2.0, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let psi = TestFunction::random(&cfg, Profile::Gaussian, 2, 0.8, 1.0, &mut rng);
        let st = sample_state(&grid, |v| psi.eval_chart(v));
        let op = GridOperator::new(k.clone(), &grid).unwrap();
        let out = op.apply(&st).unwrap();
        for i in [0, 37, 311, 777, 1295] {
            let want = k.apply_at(&|z: &[C64]| st.interpolate(z), &grid.node(i)).unwrap();
            assert!((out.values()[i] - want).norm() < 1e-12 * (1.0 + want.norm()), "{i}");
        }
        // adjoint pairing ⟨Ax, y⟩ = ⟨x, A*y⟩
        let y: Vec<C64> = (0..grid.len()).map(|i| cx((i as f64 * 0.37).sin(), (i as f64 * 0.11).cos())).collect();
        let ay = op.adjoint_values(&y).unwrap();
        let lhs: C64 = out.values().iter().zip(&y).map(|(a, b)| a.conj() * b).sum();
        let rhs: C64 = st.values().iter().zip(&ay).map(|(a, b)| a.conj() * b).sum();
        assert!((lhs - rhs).norm() < 1e-10 * lhs.norm());
        let d = op.dense().unwrap();
        let dv = &d * nalgebra::DVector::from_column_slice(st.values());
        for i in 0..grid.len() {
            assert!((dv[i] - out.values()[i]).norm() < 1e-10 * (1.0 + dv[i].norm()));
        }
    }
}
