//! Property suites: each returns named gates with the measured value, its threshold and the
//! refinement tables behind it. Shared by the acceptance test and the command-line driver.

use std::collections::BTreeMap;
use std::time::Instant;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Character;
use crate::moduli::{Cluster, Configuration};
use crate::quadrature::PlanSpec;

pub mod algebra;
pub mod fits;
pub mod identities;
pub mod limits;
pub mod operators;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// value < threshold
    Below,
    /// value == threshold (ranks, counts)
    Equal,
    /// a structural property; value is the supporting number
    Holds,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub criterion: u32,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub pass: bool,
    pub detail: String,
}

impl Gate {
    pub fn below(criterion: u32, name: &str, value: f64, threshold: f64) -> Gate {
        Gate {
            criterion,
            name: name.into(),
            value,
            threshold,
            relation: Relation::Below,
            pass: value < threshold,
            detail: String::new(),
        }
    }

    pub fn equal(criterion: u32, name: &str, value: usize, expected: usize) -> Gate {
        Gate {
            criterion,
            name: name.into(),
            value: value as f64,
            threshold: expected as f64,
            relation: Relation::Equal,
            pass: value == expected,
            detail: String::new(),
        }
    }

    pub fn holds(criterion: u32, name: &str, ok: bool, value: f64) -> Gate {
        Gate { criterion, name: name.into(), value, threshold: f64::NAN, relation: Relation::Holds, pass: ok, detail: String::new() }
    }

    pub fn with_detail(mut self, detail: impl Into<String>) -> Gate {
        self.detail = detail.into();
        self
    }

    /// A gate for an operation that errored.
    pub fn errored(criterion: u32, name: &str, e: &Error) -> Gate {
        Gate::holds(criterion, name, false, f64::NAN).with_detail(e.to_string())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub gates: Vec<Gate>,
    /// refinement ladders and other supporting data, keyed by name
    pub tables: BTreeMap<String, serde_json::Value>,
    pub seconds: f64,
}

impl SuiteReport {
    fn new(suite: &str) -> Self {
        SuiteReport { suite: suite.into(), ..Default::default() }
    }

    pub fn passed(&self) -> bool {
        self.gates.iter().all(|g| g.pass)
    }

    pub fn push(&mut self, g: Gate) {
        self.gates.push(g);
    }

    pub fn table<T: Serialize>(&mut self, key: &str, value: &T) {
        self.tables.insert(key.into(), serde_json::to_value(value).unwrap_or(serde_json::Value::Null));
    }

    pub fn extend(&mut self, other: SuiteReport) {
        self.gates.extend(other.gates);
        for (k, v) in other.tables {
            self.tables.insert(format!("{}.{k}", other.suite), v);
        }
        self.seconds += other.seconds;
    }

    pub fn criterion(&self, c: u32) -> impl Iterator<Item = &Gate> {
        self.gates.iter().filter(move |g| g.criterion == c)
    }
}

/// Runs `body`, records its wall time and a runtime gate against `budget_s`.
pub(crate) fn timed<F: FnOnce(&mut SuiteReport)>(suite: &str, criterion: u32, budget_s: f64, body: F) -> SuiteReport {
    let t = Instant::now();
    let mut rep = SuiteReport::new(suite);
    body(&mut rep);
    rep.seconds = t.elapsed().as_secs_f64();
    rep.push(Gate::below(criterion, &format!("{suite}.runtime_s"), rep.seconds, budget_s));
    rep
}

/// Pushes the gates built by `f`, or one failed gate carrying the error.
pub(crate) fn guard<F: FnOnce(&mut SuiteReport) -> Result<()>>(rep: &mut SuiteReport, criterion: u32, name: &str, f: F) {
    if let Err(e) = f(rep) {
        rep.push(Gate::errored(criterion, name, &e));
    }
}

/// "[1.00e-2, 5.00e-3]"
pub(crate) fn sci(v: &[f64]) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.2e}")).collect();
    format!("[{}]", parts.join(", "))
}

/// One finite marked point: position and character coefficients c₀..c_{d−1}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClusterSpec {
    pub t: C64,
    pub chi: Vec<C64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ConfigSpec(pub Vec<ClusterSpec>);

impl ConfigSpec {
    pub fn build(&self) -> Result<Configuration> {
        let clusters = self
            .0
            .iter()
            .map(|c| Ok(Cluster { t: c.t, chi: Character::new(&c.chi).map_err(|e| Error::ConfigInvalid(e.to_string()))? }))
            .collect::<Result<Vec<_>>>()?;
        Configuration::new(clusters)
    }

    fn classical() -> Self {
        ConfigSpec(vec![ClusterSpec { t: C64::new(2.0, 1.0), chi: vec![C64::new(0.0, 0.0)] }])
    }

    fn wild() -> Self {
        ConfigSpec(vec![ClusterSpec { t: C64::new(2.0, 0.5), chi: vec![C64::new(0.0, 0.0), C64::new(0.7, -0.4)] }])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// nodes per real axis
    pub n: usize,
    /// half-width of the box on every real axis
    pub radius: f64,
    /// node counts of the refinement ladder
    pub ladder: Vec<usize>,
    pub plan: PlanSpec,
    /// Lanczos steps of the norm and defect estimates
    pub steps: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollisionSpec {
    pub t0: C64,
    /// a₁..a_n, purely imaginary, a_n ≠ 0
    pub a: Vec<C64>,
    /// a second, longer cluster for the three-point ladder
    pub a_long: Vec<C64>,
    pub others: Vec<C64>,
    pub deltas: Vec<f64>,
    pub x: C64,
    pub samples: usize,
    pub tol: f64,
}

/// Everything the suites read. All fields have defaults; complex numbers are [re, im].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Settings {
    pub seed: u64,
    pub classical: ConfigSpec,
    pub wild: ConfigSpec,
    /// main sample point of the spectral parameter
    pub x: C64,
    /// second point for commutators
    pub x2: C64,
    pub grid: GridSpec,
    pub wild_grid: GridSpec,
    /// x-path for spectra and continuity
    pub x_path: Vec<C64>,
    /// eigenpairs per x
    pub k: usize,
    /// relative tolerance of pointwise adaptive quadrature
    pub adaptive_tol: f64,
    pub asymptotic_moduli: Vec<f64>,
    pub asymptotic_direction: C64,
    /// random (point, x) pairs for the identities
    pub identity_points: usize,
    pub identity_h: f64,
    pub oper_center: C64,
    pub oper_radius: f64,
    pub oper_samples: usize,
    pub oper_steps: Vec<f64>,
    pub collision: CollisionSpec,
}

impl Default for Settings {
    fn default() -> Self {
        let cx = C64::new;
        Settings {
            seed: 7,
            classical: ConfigSpec::classical(),
            wild: ConfigSpec::wild(),
            x: cx(-0.6, 0.9),
            x2: cx(1.7, -1.2),
            grid: GridSpec { n: 32, radius: 6.0, ladder: vec![16, 32, 64], plan: PlanSpec::coarse(), steps: 30 },
            wild_grid: GridSpec { n: 20, radius: 3.0, ladder: vec![12, 20], plan: PlanSpec::coarse(), steps: 10 },
            x_path: (0..6).map(|i| cx(-0.6 + 0.08 * i as f64, 0.9 + 0.04 * i as f64)).collect(),
            k: 8,
            adaptive_tol: 1e-10,
            asymptotic_moduli: vec![1e2, 1e3, 1e4],
            asymptotic_direction: cx(0.6, 0.8),
            identity_points: 5,
            identity_h: 1e-2,
            oper_center: cx(0.5, 1.2),
            oper_radius: 0.6,
            oper_samples: 40,
            oper_steps: vec![0.1, 0.05, 0.025],
            collision: CollisionSpec {
                t0: cx(-1.5, 0.5),
                a: vec![cx(0.0, 0.7)],
                a_long: vec![cx(0.0, 0.6), cx(0.0, -0.4)],
                others: vec![],
                deltas: crate::collision::LIMIT_LADDER.to_vec(),
                x: cx(0.6, 1.1),
                samples: 50,
                tol: crate::collision::LIMIT_TOL,
            },
        }
    }
}

impl Settings {
    /// Re-checks the physical invariants and sizes; every failure is ConfigInvalid.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::ConfigInvalid(m));
        self.classical.build()?;
        self.wild.build()?;
        for (name, g) in [("grid", &self.grid), ("wild_grid", &self.wild_grid)] {
            if g.n < 2 || !(g.radius > 0.0) || g.ladder.iter().any(|&n| n < 2) || g.steps == 0 {
                return bad(format!("{name}: need n ≥ 2, radius > 0 and steps > 0"));
            }
            if g.plan.gl == 0 || g.plan.n_theta == 0 {
                return bad(format!("{name}: empty quadrature plan"));
            }
        }
        let marked = |c: &ConfigSpec| -> Result<Vec<C64>> { Ok(c.build()?.points().iter().map(|p| p.t).collect()) };
        let classical = marked(&self.classical)?;
        let wild = marked(&self.wild)?;
        let clear = |name: &str, x: C64, pts: &[C64]| -> Result<()> {
            let near = [C64::new(0.0, 0.0), C64::new(1.0, 0.0)].iter().chain(pts).any(|p| (x - p).norm() < 1e-6);
            if !x.re.is_finite() || !x.im.is_finite() || near {
                return bad(format!("{name} = {x} must be finite and avoid 0, 1 and the marked points"));
            }
            Ok(())
        };
        for (name, x) in [("x", self.x), ("x2", self.x2)] {
            clear(name, x, &classical)?;
            clear(name, x, &wild)?;
        }
        if self.x_path.is_empty() {
            return bad("x_path is empty".into());
        }
        for &x in &self.x_path {
            clear("x_path", x, &classical)?;
        }
        clear("collision.x", self.collision.x, &[])?;
        if self.oper_center.norm() <= self.oper_radius || (self.oper_center - 1.0).norm() <= self.oper_radius {
            return bad("the oper sample disc must avoid 0 and 1".into());
        }
        if self.oper_steps.len() < 2 || self.oper_samples < 8 || self.identity_points == 0 {
            return bad("need at least two oper steps, eight oper samples and one identity point".into());
        }
        if self.grid.ladder.is_empty() || self.wild_grid.ladder.is_empty() {
            return bad("grid ladders must be nonempty".into());
        }
        if self.k == 0 || self.k > 25 {
            return bad("k must be in 1..=25".into());
        }
        if !(self.adaptive_tol > 0.0 && self.adaptive_tol < 1.0) {
            return bad("adaptive_tol must lie in (0, 1)".into());
        }
        if self.asymptotic_moduli.iter().any(|&r| !(r > 1.0)) || self.asymptotic_direction.norm() == 0.0 {
            return bad("asymptotic moduli must exceed 1 and the direction be nonzero".into());
        }
        if !(self.identity_h > 0.0) || self.oper_steps.iter().any(|&h| !(h > 0.0)) || !(self.oper_radius > 0.0) {
            return bad("steps and radii must be positive".into());
        }
        let c = &self.collision;
        for a in [&c.a, &c.a_long] {
            crate::collision::CollisionSchedule::new(c.t0, 0.1, a).map_err(|e| Error::ConfigInvalid(e.to_string()))?;
        }
        if c.deltas.is_empty() || c.deltas.iter().any(|&d| !(d > 0.0)) || c.samples == 0 {
            return bad("collision: need positive deltas and at least one sample".into());
        }
        Ok(())
    }
}

/// Suites selectable by name.
pub const SUITES: [&str; 5] = ["jets", "rep", "hecke", "gaudin", "limits"];

/// Criteria covered by each `verify` suite.
pub fn suite_criteria(name: &str) -> Option<&'static [u32]> {
    match name {
        "jets" => Some(&[1]),
        "rep" => Some(&[2, 3, 7]),
        "hecke" => Some(&[4, 5, 6, 13]),
        "gaudin" => Some(&[9, 10, 11]),
        "limits" => Some(&[8, 12]),
        _ => None,
    }
}

/// Runs one acceptance criterion (1..=13).
pub fn run_criterion(c: u32, s: &Settings) -> Result<SuiteReport> {
    s.validate()?;
    Ok(match c {
        1 => algebra::jets(s),
        2 => algebra::representation(s),
        3 => algebra::involution(s),
        4 => operators::scalar_mass(s),
        5 => operators::classical_grid(s),
        6 => operators::wild_grid(s),
        7 => algebra::ranks(s),
        8 => limits::asymptotics(s),
        9 => identities::first_order(s),
        10 => identities::diffeq(s),
        11 => fits::oper(s),
        12 => limits::collision(s),
        13 => operators::reality(s),
        _ => return Err(Error::ConfigInvalid(format!("no criterion {c}"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn settings_round_trip() {
        let s = Settings::default();
        let j = serde_json::to_string(&s).unwrap();
        let back: Settings = serde_json::from_str(&j).unwrap();
        assert_eq!(s, back);
        assert!(back.validate().is_ok());
        let partial: Settings = serde_json::from_str(r#"{"x": [0.5, 2.0]}"#).unwrap();
        assert_eq!(partial.x, C64::new(0.5, 2.0));
    }

    #[test]
    fn invalid_settings_rejected() {
        let mut s = Settings::default();
        s.classical.0[0].chi = vec![C64::new(0.0, 0.5)];
        assert!(matches!(s.validate(), Err(Error::ConfigInvalid(_))));
        let mut s = Settings::default();
        s.collision.a = vec![C64::new(0.0, 0.0)];
        assert!(matches!(s.validate(), Err(Error::ConfigInvalid(_))));
        assert!(serde_json::from_str::<Settings>(r#"{"bogus": 1}"#).is_err());
        let s: Settings = serde_json::from_str(r#"{"x": [0.0, 0.0]}"#).unwrap();
        assert!(matches!(s.validate(), Err(Error::ConfigInvalid(_))));
        let s: Settings = serde_json::from_str(r#"{"x_path": [[2.0, 1.0]]}"#).unwrap();
        assert!(matches!(s.validate(), Err(Error::ConfigInvalid(_))));
    }

    #[test]
    fn gate_relations() {
        assert!(Gate::below(1, "a", 1e-12, 1e-10).pass);
        assert!(!Gate::below(1, "a", f64::NAN, 1e-10).pass);
        assert!(Gate::equal(7, "r", 6, 6).pass);
    }
}
