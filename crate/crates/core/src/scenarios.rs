//! Built-in problem instances and the JSON experiment configuration.
//!
//! Random systems are drawn from ChaCha8 seeded through
//! `SeedableRng::seed_from_u64`; a uniform sample on `[-1, 1)` is built from
//! the top 53 bits of one `next_u64` call. Matrices are filled row by row,
//! `A` first, then `B`, then `C`, so a seed reproduces the same system on
//! every platform.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::lq::SolverChoice;
use crate::operators::{check_hypotheses, LtiSystem, DEFAULT_RANK_TOL, DEFAULT_T0};

pub const SCENARIOS: [&str; 4] = ["scalar", "random_stable", "heat_1d", "custom"];
pub const PROFILES: [&str; 4] = ["bump", "sine", "constant", "zero"];

/// Default sub-interval of the distributed heat control.
///
/// For some grid sizes the nodal sum of an eigenvector `sin(k pi x_j)` over
/// the interval vanishes exactly, which makes `(A^*, B^*)` unobservable.
/// No interval avoids this for every `n`; this one keeps every mode visible
/// for n = 10, 20, 25, 30, 40, 50, 64 and 100. Other resolutions should be
/// run through `check_hypotheses`.
pub const DEFAULT_HEAT_INTERVAL: (f64, f64) = (0.26, 0.63);

/// Smallest singular value enforced on random observation operators.
const MIN_SINGULAR_C: f64 = 0.1;

/// `A = -1`, `B = 1`, `C = 1` with target `z = 1` and `x0 = 0`.
pub fn scalar_example() -> (LtiSystem, DVector<f64>, DVector<f64>) {
    let one = DMatrix::from_element(1, 1, 1.0);
    let sys = LtiSystem::new(-one.clone(), one.clone(), one).expect("valid scalar system");
    (sys, DVector::from_element(1, 1.0), DVector::zeros(1))
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64) * 2.0 - 1.0
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    let data: Vec<f64> = (0..rows * cols).map(|_| uniform(rng)).collect();
    DMatrix::from_row_slice(rows, cols, &data)
}

/// Random system whose generator has spectral abscissa exactly `-margin`
/// and whose observation operator has singular values at least 0.1.
pub fn random_stable(n: usize, m: usize, seed: u64, margin: f64) -> Result<LtiSystem> {
    if n == 0 || m == 0 {
        return Err(Error::InvalidArgument(format!("need n, m >= 1, got n = {n}, m = {m}")));
    }
    if !(margin > 0.0) || !margin.is_finite() {
        return Err(Error::InvalidArgument(format!("margin must be positive, got {margin}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = random_matrix(&mut rng, n, n);
    let b = random_matrix(&mut rng, n, m);
    let c_raw = random_matrix(&mut rng, n, n);

    let shift = linalg::spectral_abscissa(&raw) + margin;
    let a = raw - DMatrix::identity(n, n) * shift;
    let mut svd = c_raw.svd(true, true);
    svd.singular_values.apply(|s| *s = s.max(MIN_SINGULAR_C));
    let c = svd.recompose().map_err(|e| Error::Numerical(e.to_string()))?;
    LtiSystem::new(a, b, c)
}

/// Control operator of the heat scenario.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HeatControl {
    /// Indicator of the nodes inside `[lo, hi]`.
    Distributed { lo: f64, hi: f64 },
    /// `e_1 / dx`: a point actuator next to the left boundary whose norm
    /// grows under refinement.
    BoundaryFlavored,
}

impl Default for HeatControl {
    fn default() -> Self {
        HeatControl::Distributed {
            lo: DEFAULT_HEAT_INTERVAL.0,
            hi: DEFAULT_HEAT_INTERVAL.1,
        }
    }
}

pub fn profile(name: &str, x: f64) -> Result<f64> {
    match name {
        "bump" => Ok(4.0 * x * (1.0 - x)),
        "sine" => Ok((std::f64::consts::PI * x).sin()),
        "constant" => Ok(1.0),
        "zero" => Ok(0.0),
        other => Err(Error::UnknownProfile(other.into())),
    }
}

/// Samples of a named profile at the interior nodes `j / (n + 1)`.
pub fn profile_samples(name: &str, n: usize) -> Result<DVector<f64>> {
    let dx = 1.0 / (n + 1) as f64;
    let v: Result<Vec<f64>> = (1..=n).map(|j| profile(name, j as f64 * dx)).collect();
    Ok(DVector::from_vec(v?))
}

/// Finite-difference heat equation on `(0, 1)` with Dirichlet ends:
/// `A = (n+1)^2 tridiag(1, -2, 1)`, `C = I`, target sampled from `profile`.
pub fn heat_1d(n: usize, control: HeatControl, target: &str) -> Result<(LtiSystem, DVector<f64>)> {
    if n < 3 {
        return Err(Error::InvalidArgument(format!("heat scenario needs n >= 3, got {n}")));
    }
    let z = profile_samples(target, n)?;
    let inv_dx = (n + 1) as f64;
    let scale = inv_dx * inv_dx;
    let a = DMatrix::from_fn(n, n, |i, j| match i.abs_diff(j) {
        0 => -2.0 * scale,
        1 => scale,
        _ => 0.0,
    });
    let b = match control {
        HeatControl::Distributed { lo, hi } => {
            let col = DVector::from_fn(n, |j, _| {
                let x = (j + 1) as f64 / inv_dx;
                if x >= lo && x <= hi {
                    1.0
                } else {
                    0.0
                }
            });
            if col.iter().all(|v| *v == 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "control interval [{lo}, {hi}] contains no grid node"
                )));
            }
            DMatrix::from_column_slice(n, 1, col.as_slice())
        }
        HeatControl::BoundaryFlavored => {
            let mut b = DMatrix::zeros(n, 1);
            b[(0, 0)] = inv_dx;
            b
        }
    };
    Ok((LtiSystem::new(a, b, DMatrix::identity(n, n))?, z))
}

/// Target given either by a profile name or by explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TargetSpec {
    Profile(String),
    Values(Vec<f64>),
}

/// Terminal cost of the finite-horizon problems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TerminalCost {
    #[default]
    Zero,
    /// The stabilizing ARE solution of the exact system.
    Are,
}

/// Configuration file as written by the user. Every field except
/// `scenario` is optional.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    scenario: String,
    n: Option<usize>,
    m: Option<usize>,
    seed: Option<u64>,
    margin: Option<f64>,
    horizons: Option<Vec<f64>>,
    dt: Option<f64>,
    t0: Option<f64>,
    target: Option<TargetSpec>,
    x0: Option<Vec<f64>>,
    yosida_ks: Option<Vec<f64>>,
    solver: Option<SolverChoice>,
    terminal_cost: Option<TerminalCost>,
    control: Option<HeatControl>,
    a: Option<Vec<Vec<f64>>>,
    b: Option<Vec<Vec<f64>>>,
    c: Option<Vec<Vec<f64>>>,
    rank_tol: Option<f64>,
    output_dir: Option<String>,
}

/// Validated configuration with every default filled in.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub scenario: String,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub margin: f64,
    pub horizons: Vec<f64>,
    pub dt: f64,
    pub t0: f64,
    pub target: TargetSpec,
    pub x0: Option<Vec<f64>>,
    pub yosida_ks: Vec<f64>,
    pub solver: SolverChoice,
    pub terminal_cost: TerminalCost,
    pub control: HeatControl,
    pub a: Option<Vec<Vec<f64>>>,
    pub b: Option<Vec<Vec<f64>>>,
    pub c: Option<Vec<Vec<f64>>>,
    pub rank_tol: f64,
    pub output_dir: Option<String>,
}

/// A concrete instance built from a config.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub sys: LtiSystem,
    pub target: DVector<f64>,
    pub x0: DVector<f64>,
    /// Seeds skipped because the drawn system failed the hypothesis check.
    pub rejected_seeds: Vec<u64>,
}

/// Step divides horizon up to rounding.
pub fn divides(dt: f64, horizon: f64) -> bool {
    let k = (horizon / dt).round();
    k >= 1.0 && (k * dt - horizon).abs() <= 1e-9 * horizon
}

fn matrix_from_rows(rows: &[Vec<f64>], name: &str, errs: &mut Vec<String>) -> Option<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        errs.push(format!("{name} must be a nonempty rectangular array of rows"));
        return None;
    }
    Some(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl ExperimentConfig {
    /// Defaults for a named scenario, as if the config named only it.
    pub fn for_scenario(name: &str) -> Result<Self> {
        resolve(ConfigFile {
            scenario: name.into(),
            ..Default::default()
        })
    }

    /// Parses and validates a JSON document.
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: ConfigFile = serde_json::from_str(text).map_err(|e| Error::ConfigParse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        resolve(raw)
    }

    /// Rechecks the invariants after overrides were applied.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        self.collect_errors(&mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(Error::ConfigInvalid(errs))
        }
    }

    fn collect_errors(&self, errs: &mut Vec<String>) {
        if self.n == 0 {
            errs.push("n must be at least 1".into());
        }
        if self.scenario == "heat_1d" && self.n < 3 {
            errs.push(format!("heat_1d needs n >= 3, got {}", self.n));
        }
        if self.m == 0 {
            errs.push("m must be at least 1".into());
        }
        if !(self.margin > 0.0) {
            errs.push(format!("margin must be positive, got {}", self.margin));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            errs.push(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t0 > 0.0) || !self.t0.is_finite() {
            errs.push(format!("t0 must be positive, got {}", self.t0));
        }
        if !(self.rank_tol > 0.0) {
            errs.push(format!("rank_tol must be positive, got {}", self.rank_tol));
        }
        if self.horizons.is_empty() {
            errs.push("horizons must not be empty".into());
        }
        for &t in &self.horizons {
            if !(t > 0.0) || !t.is_finite() {
                errs.push(format!("horizon {t} must be positive"));
            } else if self.dt > 0.0 && !divides(self.dt, t) {
                errs.push(format!("dt = {} does not divide horizon T = {t}", self.dt));
            }
        }
        if self.yosida_ks.is_empty() {
            errs.push("yosida_ks must not be empty".into());
        }
        if self.yosida_ks.iter().any(|k| !(*k > 0.0)) || self.yosida_ks.windows(2).any(|w| !(w[1] > w[0])) {
            errs.push("yosida_ks must be positive and strictly increasing".into());
        }
        match &self.target {
            TargetSpec::Profile(p) if !PROFILES.contains(&p.as_str()) => errs.push(format!(
                "unknown target profile '{p}', expected one of: {}",
                PROFILES.join(", ")
            )),
            TargetSpec::Values(v) if v.len() != self.n => {
                errs.push(format!("target has {} entries, expected n = {}", v.len(), self.n))
            }
            _ => {}
        }
        if let Some(x0) = &self.x0 {
            if x0.len() != self.n {
                errs.push(format!("x0 has {} entries, expected n = {}", x0.len(), self.n));
            }
        }
        if let HeatControl::Distributed { lo, hi } = self.control {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || !(lo < hi) {
                errs.push(format!("control interval [{lo}, {hi}] must satisfy 0 <= lo < hi <= 1"));
            }
        }
        if self.scenario == "custom" {
            for (name, m) in [("a", &self.a), ("b", &self.b), ("c", &self.c)] {
                match m {
                    None => errs.push(format!("custom scenario requires matrix '{name}'")),
                    Some(rows) => {
                        matrix_from_rows(rows, name, errs);
                    }
                }
            }
        } else if self.a.is_some() || self.b.is_some() || self.c.is_some() {
            errs.push(format!(
                "matrices a, b, c are only accepted by the custom scenario, not '{}'",
                self.scenario
            ));
        }
    }

    /// Builds the system, target and initial state.
    pub fn build(&self) -> Result<Scenario> {
        self.validate()?;
        let mut rejected = Vec::new();
        let sys = match self.scenario.as_str() {
            "scalar" => scalar_example().0,
            "random_stable" => {
                let mut seed = self.seed;
                loop {
                    let sys = random_stable(self.n, self.m, seed, self.margin)?;
                    if check_hypotheses(&sys, self.t0, self.rank_tol)?.satisfied() {
                        break sys;
                    }
                    rejected.push(seed);
                    if rejected.len() >= 100 {
                        return Err(Error::HypothesisViolation(format!(
                            "100 consecutive seeds from {} drew systems failing the hypotheses",
                            self.seed
                        )));
                    }
                    seed = seed.wrapping_add(1);
                }
            }
            "heat_1d" => {
                let name = match &self.target {
                    TargetSpec::Profile(p) => p.as_str(),
                    TargetSpec::Values(_) => "zero",
                };
                heat_1d(self.n, self.control, name)?.0
            }
            "custom" => {
                let mut errs = Vec::new();
                let get = |m: &Option<Vec<Vec<f64>>>, name: &str, errs: &mut Vec<String>| {
                    m.as_ref().and_then(|rows| matrix_from_rows(rows, name, errs))
                };
                let (a, b, c) = (
                    get(&self.a, "a", &mut errs),
                    get(&self.b, "b", &mut errs),
                    get(&self.c, "c", &mut errs),
                );
                match (a, b, c) {
                    (Some(a), Some(b), Some(c)) => LtiSystem::new(a, b, c)?,
                    _ => return Err(Error::ConfigInvalid(errs)),
                }
            }
            other => {
                return Err(Error::UnknownScenario {
                    name: other.into(),
                    valid: SCENARIOS.join(", "),
                })
            }
        };
        let n = sys.n();
        let target = match &self.target {
            TargetSpec::Values(v) => DVector::from_column_slice(v),
            TargetSpec::Profile(p) => profile_samples(p, n)?,
        };
        if target.len() != n {
            return Err(Error::ConfigInvalid(vec![format!(
                "target has {} entries, the system has n = {n}",
                target.len()
            )]));
        }
        let x0 = match &self.x0 {
            Some(v) if v.len() == n => DVector::from_column_slice(v),
            Some(v) => {
                return Err(Error::ConfigInvalid(vec![format!(
                    "x0 has {} entries, the system has n = {n}",
                    v.len()
                )]))
            }
            None => DVector::zeros(n),
        };
        Ok(Scenario {
            name: self.scenario.clone(),
            sys,
            target,
            x0,
            rejected_seeds: rejected,
        })
    }
}

fn resolve(raw: ConfigFile) -> Result<ExperimentConfig> {
    let name = raw.scenario.as_str();
    if !SCENARIOS.contains(&name) {
        return Err(Error::UnknownScenario {
            name: raw.scenario.clone(),
            valid: SCENARIOS.join(", "),
        });
    }
    let heat = name == "heat_1d";
    let custom_n = raw.a.as_ref().map(Vec::len);
    let custom_m = raw.b.as_ref().and_then(|rows| rows.first().map(Vec::len));
    let n = match name {
        "scalar" => 1,
        "custom" => custom_n.unwrap_or(0),
        _ => raw.n.unwrap_or(if heat { 50 } else { 4 }),
    };
    let m = match name {
        "scalar" | "heat_1d" => 1,
        "custom" => custom_m.unwrap_or(0),
        _ => raw.m.unwrap_or(2),
    };
    let mut errs = Vec::new();
    if matches!(name, "scalar" | "heat_1d" | "custom") {
        if let Some(given) = raw.n.filter(|v| *v != n && name != "heat_1d") {
            errs.push(format!("n = {given} conflicts with the {name} scenario dimension {n}"));
        }
        if let Some(given) = raw.m.filter(|v| *v != m) {
            errs.push(format!(
                "m = {given} conflicts with the {name} scenario control dimension {m}"
            ));
        }
    }
    let n = if heat { raw.n.unwrap_or(50) } else { n };
    let cfg = ExperimentConfig {
        scenario: raw.scenario,
        n,
        m,
        seed: raw.seed.unwrap_or(42),
        margin: raw.margin.unwrap_or(0.5),
        horizons: raw.horizons.unwrap_or_else(|| vec![5.0, 10.0, 20.0]),
        dt: raw.dt.unwrap_or(if heat { 1e-2 } else { 1e-3 }),
        t0: raw.t0.unwrap_or(DEFAULT_T0),
        target: raw
            .target
            .unwrap_or_else(|| TargetSpec::Profile(if heat { "bump" } else { "constant" }.into())),
        x0: raw.x0,
        yosida_ks: raw.yosida_ks.unwrap_or_else(|| vec![1.0, 10.0, 100.0, 1000.0]),
        solver: raw.solver.unwrap_or_default(),
        terminal_cost: raw.terminal_cost.unwrap_or_default(),
        control: raw.control.unwrap_or_default(),
        a: raw.a,
        b: raw.b,
        c: raw.c,
        rank_tol: raw.rank_tol.unwrap_or(DEFAULT_RANK_TOL),
        output_dir: raw.output_dir,
    };
    cfg.collect_errors(&mut errs);
    if errs.is_empty() {
        Ok(cfg)
    } else {
        Err(Error::ConfigInvalid(errs))
    }
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_json(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_example_data() {
        let (sys, z, x0) = scalar_example();
        assert_eq!((sys.a()[(0, 0)], sys.b()[(0, 0)], sys.c()[(0, 0)]), (-1.0, 1.0, 1.0));
        assert_eq!((z[0], x0[0]), (1.0, 0.0));
        let r = check_hypotheses(&sys, 1.0, DEFAULT_RANK_TOL).unwrap();
        assert!(r.satisfied() && (r.delta - 1.0).abs() < 1e-14);
    }

    #[test]
    fn random_stable_is_deterministic_and_shifted() {
        let a = random_stable(4, 2, 42, 0.5).unwrap();
        let b = random_stable(4, 2, 42, 0.5).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, random_stable(4, 2, 43, 0.5).unwrap());
        assert!((linalg::spectral_abscissa(a.a()) + 0.5).abs() < 1e-10);
        assert!(linalg::min_singular_value(a.c()) >= 0.1 - 1e-12);
        assert!(check_hypotheses(&a, 1.0, DEFAULT_RANK_TOL).unwrap().satisfied());
    }

    #[test]
    fn uniform_samples_stay_in_range() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10_000 {
            let u = uniform(&mut rng);
            assert!((-1.0..1.0).contains(&u));
        }
    }

    #[test]
    fn heat_stencil() {
        let (sys, z) = heat_1d(3, HeatControl::default(), "bump").unwrap();
        let expect = DMatrix::from_row_slice(3, 3, &[-2.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -2.0]) * 16.0;
        assert_eq!(sys.a(), &expect);
        assert_eq!(sys.c(), &DMatrix::identity(3, 3));
        assert!((z[1] - 1.0).abs() < 1e-15 && (z[0] - 0.75).abs() < 1e-15);
        assert!(matches!(
            heat_1d(3, HeatControl::default(), "tent"),
            Err(Error::UnknownProfile(_))
        ));
    }

    #[test]
    fn boundary_control_norm_grows() {
        let norms: Vec<f64> = [25, 50, 100]
            .iter()
            .map(|&n| heat_1d(n, HeatControl::BoundaryFlavored, "zero").unwrap().0.b().norm())
            .collect();
        assert!(norms[0] < norms[1] && norms[1] < norms[2]);
        assert_eq!(norms[1], 51.0);
    }

    #[test]
    fn heat_scenarios_satisfy_hypotheses() {
        for control in [HeatControl::default(), HeatControl::BoundaryFlavored] {
            let (sys, _) = heat_1d(50, control, "bump").unwrap();
            let r = check_hypotheses(&sys, 1.0, DEFAULT_RANK_TOL).unwrap();
            assert!(r.satisfied(), "{control:?}: {:?}", r.failures());
        }
    }

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(r#"{"scenario": "scalar"}"#).unwrap();
        assert_eq!(cfg.dt, 1e-3);
        assert_eq!(cfg.t0, 1.0);
        assert_eq!(cfg.horizons, vec![5.0, 10.0, 20.0]);
        let s = cfg.build().unwrap();
        assert_eq!((s.target[0], s.x0[0]), (1.0, 0.0));

        let heat = ExperimentConfig::from_json(r#"{"scenario": "heat_1d"}"#).unwrap();
        assert_eq!((heat.dt, heat.n), (1e-2, 50));
    }

    #[test]
    fn config_errors() {
        let e = ExperimentConfig::from_json(r#"{"scenario": "scalar", "dt": 0.3, "horizons": [1.0]}"#).unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("0.3") && msg.contains("T = 1"), "{msg}");

        let e = ExperimentConfig::from_json(r#"{"scenario": "wave"}"#).unwrap_err();
        assert!(matches!(e, Error::UnknownScenario { .. }));
        assert!(e.to_string().contains("scalar, random_stable, heat_1d, custom"));

        let e = ExperimentConfig::from_json("{\"scenario\": \"scalar\",\n \"bogus\": 1}").unwrap_err();
        assert!(matches!(e, Error::ConfigParse { line: 2, .. }), "{e}");

        let e = ExperimentConfig::from_json(r#"{"scenario": "heat_1d", "target": "tent", "t0": -1}"#).unwrap_err();
        match e {
            Error::ConfigInvalid(list) => assert_eq!(list.len(), 2, "{list:?}"),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn custom_scenario() {
        let cfg = ExperimentConfig::from_json(
            r#"{"scenario": "custom", "a": [[0.0]], "b": [[1.0]], "c": [[0.0]], "target": [1.0]}"#,
        )
        .unwrap();
        let s = cfg.build().unwrap();
        assert_eq!(s.sys.n(), 1);
        assert!(ExperimentConfig::from_json(r#"{"scenario": "custom", "a": [[0.0]]}"#).is_err());
    }

    #[test]
    fn identical_configs_build_identical_instances() {
        let text = r#"{"scenario": "random_stable", "n": 5, "m": 2, "seed": 9}"#;
        let a = ExperimentConfig::from_json(text).unwrap().build().unwrap();
        let b = ExperimentConfig::from_json(text).unwrap().build().unwrap();
        assert_eq!(a.sys, b.sys);
    }
}
