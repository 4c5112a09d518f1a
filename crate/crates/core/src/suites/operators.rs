//! Operator-level gates: the scalar case, the classical and wild grids, spectra.

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{guard, timed, Gate, GridSpec, Settings, SuiteReport};
use crate::error::Result;
use crate::hecke::{eval_hecke_point, nu_mass, nu_mass_periods, ChartKernel, Normalization};
use crate::moduli::{
    gauge_fix, gauge_unfix, sample_state, sample_state_prefiltered, transport_factor, Configuration, Profile, StateGrid,
    TestFunction,
};
use crate::operator::GridOperator;
use crate::quadrature::{PlanSpec, Quad};
use crate::spectral::{
    beta_curves, commutator_ratio, dot, hermitization_defect, largest_magnitude, norm, random_unit_vector, reality_check,
    topk_eigen, weyl_ratio, Difference, Gram, Hermitian, LanczosOptions,
};

const NORM: Normalization = Normalization::Representation;

fn cx(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn grid_for(cfg: &Configuration, n: usize, radius: f64) -> Result<StateGrid> {
    StateGrid::zeros(n, &vec![radius; cfg.chart_dim()])
}

pub fn grid_operator(cfg: &Configuration, x: C64, grid: &StateGrid, plan: &PlanSpec) -> Result<GridOperator> {
    GridOperator::new(ChartKernel::new(cfg, x, plan, NORM)?, grid)
}

/// m = 1: the kernel applied to constants, the ν mass by cubature and by periods.
pub fn scalar_mass(s: &Settings) -> SuiteReport {
    timed("mass", 4, 60.0, |rep| {
        let mut rng = ChaCha8Rng::seed_from_u64(s.seed.wrapping_add(4));
        let cfg = Configuration::anchors_only();
        let one = |_: &[C64]| cx(1.0, 0.0);
        let quad = Quad::adaptive(1e-9);
        let (mut e_kernel, mut e_mass) = (0.0f64, 0.0f64);
        let mut rows = vec![];
        guard(rep, 4, "mass.evaluation", |_| {
            while rows.len() < 10 {
                let x = cx(rng.gen_range(-2.5..2.5), rng.gen_range(-2.5..2.5));
                if x.norm() < 0.3 || (x - 1.0).norm() < 0.3 || x.im.abs() < 0.05 {
                    continue;
                }
                let kernel = ChartKernel::new(&cfg, x, &PlanSpec::coarse(), NORM)?.apply_at_with(&one, &[], &quad)?;
                let mass = nu_mass(x, &quad)?;
                let periods = nu_mass_periods(x);
                e_kernel = e_kernel.max((kernel - periods).norm() / periods);
                e_mass = e_mass.max((mass - periods).abs() / periods);
                rows.push(serde_json::json!({"x": [x.re, x.im], "kernel": kernel.re, "mass": mass, "periods": periods}));
            }
            Ok(())
        });
        rep.push(Gate::below(4, "mass.kernel_vs_periods", e_kernel, 1e-4));
        rep.push(Gate::below(4, "mass.cubature_vs_periods", e_mass, 1e-4));
        rep.table("samples", &rows);
    })
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GridRow {
    pub n: usize,
    /// ‖(A − A*)/2‖/‖A‖ at x and x₂
    pub defect: [f64; 2],
    pub norm: [f64; 2],
    /// max over random unit vectors of ‖[A, B]v‖/(‖A‖‖B‖)
    pub commutator: f64,
    /// max over smooth pairs of |⟨φ, Aψ⟩ − ⟨Aφ, ψ⟩|/(‖A‖‖φ‖‖ψ‖)
    pub weak_defect: f64,
    pub seconds: f64,
}

fn smooth_vectors(cfg: &Configuration, grid: &StateGrid, count: usize, spread: f64, seed: u64) -> Vec<Vec<C64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let p = TestFunction::random(cfg, Profile::Gaussian, 2, spread, 1.0, &mut rng);
            sample_state(grid, |v| p.eval_chart(v)).values().to_vec()
        })
        .collect()
}

/// Defects and commutator for one grid size.
pub fn grid_row(cfg: &Configuration, x: C64, x2: C64, spec: &GridSpec, n: usize, seed: u64) -> Result<GridRow> {
    let t = std::time::Instant::now();
    let grid = grid_for(cfg, n, spec.radius)?;
    let a = grid_operator(cfg, x, &grid, &spec.plan)?;
    let b = grid_operator(cfg, x2, &grid, &spec.plan)?;
    let da = hermitization_defect(&a, spec.steps, seed)?;
    let db = hermitization_defect(&b, spec.steps, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(11));
    let vs: Vec<Vec<C64>> = (0..3).map(|_| random_unit_vector(grid.len(), &mut rng)).collect();
    let vr: Vec<&[C64]> = vs.iter().map(|v| v.as_slice()).collect();
    let commutator = commutator_ratio(&a, &b, &vr, da.norm, db.norm)?;
    let sm = smooth_vectors(cfg, &grid, 3, 0.5 * spec.radius.min(3.0), seed.wrapping_add(12));
    let sr: Vec<&[C64]> = sm.iter().map(|v| v.as_slice()).collect();
    let asm = a.apply_many_values(&sr)?;
    let mut weak: f64 = 0.0;
    for i in 0..sm.len() {
        for j in 0..sm.len() {
            let d = (dot(&sm[i], &asm[j]) - dot(&asm[i], &sm[j])).norm();
            weak = weak.max(d / (da.norm * norm(&sm[i]) * norm(&sm[j])));
        }
    }
    Ok(GridRow {
        n,
        defect: [da.defect, db.defect],
        norm: [da.norm, db.norm],
        commutator,
        weak_defect: weak,
        seconds: t.elapsed().as_secs_f64(),
    })
}

fn ladder(spec: &GridSpec) -> Vec<usize> {
    let mut l = spec.ladder.clone();
    if !l.contains(&spec.n) {
        l.push(spec.n);
    }
    l.sort_unstable();
    l.dedup();
    l
}

fn worst_ratio(vals: &[f64]) -> f64 {
    vals.windows(2).map(|w| w[1] / w[0]).fold(0.0, f64::max)
}

fn grid_gates(rep: &mut SuiteReport, criterion: u32, tag: &str, rows: &[GridRow], spec: &GridSpec, tol: f64, halving: bool) {
    let Some(main) = rows.iter().find(|r| r.n == spec.n) else { return };
    let defect = main.defect[0].max(main.defect[1]);
    rep.push(Gate::below(criterion, &format!("{tag}.hermitization_defect"), defect, tol).with_detail(format!("N = {}", spec.n)));
    rep.push(Gate::below(criterion, &format!("{tag}.commutator"), main.commutator, tol).with_detail(format!("N = {}", spec.n)));
    if rows.len() > 1 {
        let d: Vec<f64> = rows.iter().map(|r| r.defect[0].max(r.defect[1])).collect();
        let c: Vec<f64> = rows.iter().map(|r| r.commutator).collect();
        if halving {
            rep.push(
                Gate::below(criterion, &format!("{tag}.defect_halving_ratio"), worst_ratio(&d), 0.5)
                    .with_detail("largest defect(2N)/defect(N) along the ladder"),
            );
        } else {
            rep.push(Gate::below(criterion, &format!("{tag}.defect_refinement_ratio"), worst_ratio(&d), 1.0));
        }
        rep.push(
            Gate::below(criterion, &format!("{tag}.commutator_refinement_ratio"), worst_ratio(&c), 1.0)
                .with_detail("largest commutator(next)/commutator(previous) along the ladder"),
        );
    }
}

/// Classical m = 2 grid: defect and commutator gates with the N ladder.
pub fn classical_grid(s: &Settings) -> SuiteReport {
    timed("classical_grid", 5, 600.0, |rep| {
        let mut rows = vec![];
        guard(rep, 5, "classical_grid.build", |_| {
            let cfg = s.classical.build()?;
            for n in ladder(&s.grid) {
                rows.push(grid_row(&cfg, s.x, s.x2, &s.grid, n, s.seed)?);
            }
            Ok(())
        });
        grid_gates(rep, 5, "classical_grid", &rows, &s.grid, 5e-3, true);
        rep.table("ladder", &rows);
    })
}

/// Grid apply against the homogeneous evaluation of the same interpolated state at random
/// nodes, each lifted by a random translation and scale.
pub fn consistency(cfg: &Configuration, x: C64, spec: &GridSpec, points: usize, seed: u64) -> Result<(f64, f64)> {
    let grid = grid_for(cfg, spec.n, spec.radius)?;
    let op = grid_operator(cfg, x, &grid, &spec.plan)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let psi = TestFunction::random(cfg, Profile::Gaussian, 2, 0.5, 1.0, &mut rng);
    let state = sample_state_prefiltered(&grid, |v| psi.eval_chart(v));
    let out = op.apply(&state)?;
    let hom = |u: &[C64]| match gauge_fix(cfg, u) {
        Ok((v, delta)) => state.interpolate(&v) * transport_factor(cfg, delta),
        Err(_) => cx(0.0, 0.0),
    };
    let quad = Quad::from(PlanSpec::level(2));
    let (mut err, mut scale, mut smooth_err) = (0.0f64, 0.0f64, 0.0f64);
    for _ in 0..points {
        let i = rng.gen_range(0..grid.len());
        let v = grid.node(i);
        let tau = cx(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let lam = C64::from_polar(rng.gen_range(0.5..2.0), rng.gen_range(0.0..std::f64::consts::TAU));
        let u = gauge_unfix(cfg, &v, tau, lam);
        // H_x maps degree −m to degree −m: undo the scale of the representative
        let want = eval_hecke_point(cfg, &hom, x, &u, &quad, NORM)? / transport_factor(cfg, lam);
        let smooth = eval_hecke_point(cfg, &|z: &[C64]| psi.eval(z), x, &u, &quad, NORM)? / transport_factor(cfg, lam);
        err = err.max((out.values()[i] - want).norm());
        smooth_err = smooth_err.max((out.values()[i] - smooth).norm());
        scale = scale.max(want.norm());
    }
    Ok((err / scale.max(1e-300), smooth_err / scale.max(1e-300)))
}

/// Wild minimal configuration on the ℂ² chart.
pub fn wild_grid(s: &Settings) -> SuiteReport {
    timed("wild_grid", 6, 3600.0, |rep| {
        let mut rows = vec![];
        guard(rep, 6, "wild_grid.build", |rep| {
            let cfg = s.wild.build()?;
            let (err, smooth) = consistency(&cfg, s.x, &s.wild_grid, 20, s.seed)?;
            rep.push(
                Gate::below(6, "wild_grid.apply_consistency", err, 2e-3)
                    .with_detail(format!("against the smooth function (interpolation included): {smooth:.2e}")),
            );
            rep.table("consistency", &serde_json::json!({"interpolated_state": err, "smooth_function": smooth}));
            for n in ladder(&s.wild_grid) {
                rows.push(grid_row(&cfg, s.x, s.x2, &s.wild_grid, n, s.seed)?);
            }
            Ok(())
        });
        grid_gates(rep, 6, "wild_grid", &rows, &s.wild_grid, 1e-2, false);
        rep.table("ladder", &rows);
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumRow {
    pub k: usize,
    pub x: C64,
    pub beta: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpectralStudy {
    pub rows: Vec<SpectrumRow>,
    /// Rayleigh curves of the eigenvectors at the first x along the path
    pub curves: Vec<crate::spectral::CurvePoint>,
    pub skew: Vec<f64>,
    pub steps: Vec<f64>,
}

/// Top-k spectra of the Hermitian part along the x-path, curves of the first eigenvectors
/// and the norm bounds used by the reality and continuity gates.
pub fn spectral_study(cfg: &Configuration, s: &Settings) -> Result<SpectralStudy> {
    let grid = grid_for(cfg, s.grid.n, s.grid.radius)?;
    let ops: Vec<GridOperator> = s.x_path.iter().map(|&x| grid_operator(cfg, x, &grid, &s.grid.plan)).collect::<Result<_>>()?;
    let opts = LanczosOptions { k: s.k.min(grid.len()), seed: s.seed, ..Default::default() };
    let mut rows = vec![];
    let mut first = None;
    for (op, &x) in ops.iter().zip(&s.x_path) {
        let r = topk_eigen(&Hermitian(op), &opts)?;
        for (k, p) in r.pairs.iter().enumerate() {
            rows.push(SpectrumRow { k, x, beta: p.value, residual: p.residual });
        }
        if first.is_none() {
            first = Some(r);
        }
    }
    let mut skew = vec![];
    for op in &ops {
        skew.push(hermitization_defect(op, s.grid.steps, s.seed)?.skew);
    }
    let mut steps = vec![];
    for w in ops.windows(2) {
        steps.push(largest_magnitude(&Gram(Difference(&w[1], &w[0])), s.grid.steps, s.seed)?.sqrt());
    }
    let curves = match &first {
        Some(r) => {
            let vs = r.vectors();
            let mut out = vec![];
            for (op, &x) in ops.iter().zip(&s.x_path) {
                out.extend(beta_curves(&vs, &[x], |_| Ok(op))?);
            }
            out
        }
        None => vec![],
    };
    Ok(SpectralStudy { rows, curves, skew, steps })
}

/// |Im β_k| within the skew bound, and continuity of β_k along the path.
pub fn reality(s: &Settings) -> SuiteReport {
    timed("reality", 13, 600.0, |rep| {
        guard(rep, 13, "reality.study", |rep| {
            let cfg = s.classical.build()?;
            let st = spectral_study(&cfg, s)?;
            let r = reality_check(&st.curves, &s.x_path, &st.skew, &st.steps);
            rep.push(
                Gate::holds(13, "reality.imaginary_within_skew", r.real_ok, r.max_imag)
                    .with_detail(format!("max |Im β| {:.3e}, largest skew norm {:.3e}", r.max_imag, r.imag_bound)),
            );
            rep.push(Gate::below(13, "reality.curve_jump_ratio", r.jump_ratio, 1.0 + 1e-6).with_detail("|Δβ_k| / ‖H_x' − H_x‖"));
            let mut sorted: Vec<Vec<f64>> = vec![];
            for &x in &s.x_path {
                let mut v: Vec<f64> = st.rows.iter().filter(|row| row.x == x).map(|row| row.beta).collect();
                v.sort_by(|a, b| b.total_cmp(a));
                sorted.push(v);
            }
            rep.push(
                Gate::below(13, "reality.weyl_ratio", weyl_ratio(&sorted, &st.steps), 1.0 + 1e-6)
                    .with_detail("sorted eigenvalue moves / ‖H_x' − H_x‖"),
            );
            rep.table("skew", &st.skew);
            rep.table("steps", &st.steps);
            rep.table("spectrum", &st.rows);
            Ok(())
        });
    })
}
