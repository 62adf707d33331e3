//! Run configuration: a TOML document parsed into a validated [`RunConfig`].
//!
//! ```toml
//! seed = 7                     # seeds the experiments
//! output_dir = "out"
//!
//! [grid]
//! n = 4096
//! horizon = 1.0
//!
//! [problem]                    # solve mode
//! operator = "composition"     # composition | fractional | volterra | series
//! f = "x"
//! u0 = 1.0
//! exact = "exp(t)"             # optional reference solution
//!
//! [solver]                     # any SolverConfig field
//! tol = 1e-10
//!
//! [[experiment]]               # verify mode
//! name = "chi"
//! kind = "chi_norm_decay"
//! indices = [{ s = 0.25, p = 2, q = "inf" }]
//! ```

use std::path::{Path, PathBuf};

use serde::Deserialize;

use super::expr::{Expr, Scope};
use crate::error::{Error, Result};
use crate::fractional::FractionalOrder;
use crate::grid::{Grid, Signal};
use crate::lab::{ExperimentKind, ExperimentSpec};
use crate::littlewood_paley::{extended_real, BesovIndex};
use crate::rhs::DerivativeKind;
use crate::solver::SolverConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Verify,
    BesovNorm,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Verify => "verify",
            Mode::BesovNorm => "besov-norm",
        }
    }
}

/// Where a Volterra kernel comes from.
#[derive(Debug, Clone)]
pub enum KernelSource {
    /// Expression in `s` and `t`.
    Expression(Expr),
    /// Contents of a `s, t, value` CSV table.
    Table { path: PathBuf, text: String },
}

/// Coefficient signal of a series term.
#[derive(Debug, Clone)]
pub enum PsiSource {
    /// Expression in `t`.
    Expression(Expr),
    Signal(Signal),
}

#[derive(Debug, Clone)]
pub struct TermSpec {
    pub f: Vec<Expr>,
    pub lip: f64,
    pub psi: PsiSource,
    pub sigma: f64,
}

#[derive(Debug, Clone)]
pub enum OperatorSpec {
    Composition { f: Vec<Expr>, lipschitz: Option<f64> },
    Fractional { kind: DerivativeKind, order: FractionalOrder, a: Vec<Expr> },
    Volterra { kernel: KernelSource },
    Series { terms: Vec<TermSpec> },
}

#[derive(Debug, Clone)]
pub struct ProblemConfig {
    pub name: Option<String>,
    pub operator: OperatorSpec,
    pub dim: usize,
    pub u0: Vec<f64>,
    pub trust_radius: f64,
    /// Reference solution, one expression in `t` per component.
    pub exact: Option<Vec<Expr>>,
}

/// A fully validated run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
    pub grid: Grid,
    pub problem: Option<ProblemConfig>,
    pub solver: SolverConfig,
    pub experiments: Vec<ExperimentSpec>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Numbers {
    One(f64),
    Many(Vec<f64>),
}

impl Numbers {
    fn into_vec(self) -> Vec<f64> {
        match self {
            Numbers::One(x) => vec![x],
            Numbers::Many(v) => v,
        }
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Texts {
    One(String),
    Many(Vec<String>),
}

impl Texts {
    fn into_vec(self) -> Vec<String> {
        match self {
            Texts::One(x) => vec![x],
            Texts::Many(v) => v,
        }
    }
}

#[derive(Deserialize)]
struct Extended(#[serde(with = "extended_real")] f64);

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    mode: Option<Mode>,
    #[serde(default)]
    seed: u64,
    output_dir: Option<PathBuf>,
    grid: Option<RawGrid>,
    problem: Option<RawProblem>,
    solver: Option<SolverConfig>,
    #[serde(default)]
    experiment: Vec<RawExperiment>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    n: usize,
    #[serde(default = "one", alias = "T")]
    horizon: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum OperatorKind {
    Composition,
    Fractional,
    Volterra,
    Series,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    operator: OperatorKind,
    name: Option<String>,
    u0: Numbers,
    dim: Option<usize>,
    trust_radius: Option<Extended>,
    exact: Option<Texts>,
    f: Option<Texts>,
    lipschitz: Option<f64>,
    kind: Option<DerivativeKind>,
    beta: Option<Numbers>,
    a: Option<Texts>,
    kernel: Option<String>,
    kernel_file: Option<PathBuf>,
    #[serde(default)]
    term: Vec<RawTerm>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTerm {
    f: Texts,
    lip: f64,
    psi: Option<String>,
    psi_file: Option<PathBuf>,
    #[serde(default)]
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExperiment {
    name: String,
    kind: ExperimentKind,
    indices: Vec<BesovIndex>,
    scales: Option<Vec<f64>>,
    samples: Option<usize>,
    seed: Option<u64>,
    tolerance: Option<RawTolerance>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerance {
    slope_below: Option<f64>,
    slope_above: Option<Extended>,
    min_r2: Option<f64>,
    ratio_bound: Option<f64>,
    growth_min: Option<f64>,
    correlation: Option<f64>,
}

fn config_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

/// Prefixes any error with the key it came from, as a configuration error.
fn at_key(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) => config_err(format!("{key}: {m}")),
        other => config_err(format!("{key}: {other}")),
    }
}

/// Reads and validates a configuration file; relative data paths are taken
/// from the file's directory.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| config_err(format!("{}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    parse_config_in(&text, base).map_err(|e| match e {
        Error::Config(m) => config_err(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Parses a configuration with data paths relative to the working directory.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    parse_config_in(text, Path::new("."))
}

pub fn parse_config_in(text: &str, base: &Path) -> Result<RunConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| config_err(e.to_string().trim_end().to_string()))?;

    let mode = match (raw.mode, raw.problem.is_some(), !raw.experiment.is_empty()) {
        (Some(Mode::BesovNorm), _, _) => {
            return Err(config_err("mode: besov-norm takes its parameters on the command line"))
        }
        (Some(Mode::Solve), false, _) => return Err(config_err("mode = \"solve\" needs a [problem] table")),
        (Some(Mode::Verify), _, false) => {
            return Err(config_err("mode = \"verify\" needs at least one [[experiment]] table"))
        }
        (Some(m), _, _) => m,
        (None, true, false) => Mode::Solve,
        (None, false, true) => Mode::Verify,
        (None, true, true) => {
            return Err(config_err("both [problem] and [[experiment]] present; set mode to choose one"))
        }
        (None, false, false) => return Err(config_err("expected a [problem] table or [[experiment]] tables")),
    };

    let grid = match &raw.grid {
        Some(g) => Grid::new(g.horizon, g.n).map_err(at_key("grid"))?,
        None => Grid::new(1.0, 4096).expect("default grid"),
    };

    let solver = raw.solver.unwrap_or_default();
    solver.validate(&grid).map_err(at_key("solver"))?;

    let problem = match (mode, raw.problem) {
        (Mode::Solve, Some(p)) => Some(problem_config(p, base)?),
        _ => None,
    };

    let mut experiments = Vec::new();
    if mode == Mode::Verify {
        for (i, e) in raw.experiment.into_iter().enumerate() {
            let spec = experiment_spec(e, raw.seed, &grid).map_err(at_key(&format!("experiment[{i}]")))?;
            if experiments.iter().any(|s: &ExperimentSpec| s.name == spec.name) {
                return Err(config_err(format!("experiment[{i}].name: duplicate name \"{}\"", spec.name)));
            }
            experiments.push(spec);
        }
    }

    Ok(RunConfig { mode, seed: raw.seed, output_dir: raw.output_dir, grid, problem, solver, experiments })
}

fn parse_exprs(key: &str, texts: Vec<String>, scope: Scope) -> Result<Vec<Expr>> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| Expr::parse(t, scope).map_err(|e| config_err(format!("{key}[{i}] = \"{t}\": {e}"))))
        .collect()
}

fn problem_config(p: RawProblem, base: &Path) -> Result<ProblemConfig> {
    let u0 = p.u0.into_vec();
    let dim = p.dim.unwrap_or(u0.len());
    if dim == 0 {
        return Err(config_err("problem.dim must be at least 1"));
    }
    if u0.len() != dim {
        return Err(config_err(format!("problem.u0 has {} components but problem.dim = {dim}", u0.len())));
    }
    if u0.iter().any(|x| !x.is_finite()) {
        return Err(config_err("problem.u0 must be finite"));
    }
    let trust_radius = p.trust_radius.map_or(f64::INFINITY, |e| e.0);
    if !(trust_radius > 0.0) {
        return Err(config_err(format!("problem.trust_radius must be positive, got {trust_radius}")));
    }
    let exact = match p.exact {
        Some(t) => {
            let e = parse_exprs("problem.exact", t.into_vec(), Scope::time())?;
            if e.len() != dim {
                return Err(config_err(format!("problem.exact needs {dim} expressions, got {}", e.len())));
            }
            Some(e)
        }
        None => None,
    };

    let kind_name = match p.operator {
        OperatorKind::Composition => "composition",
        OperatorKind::Fractional => "fractional",
        OperatorKind::Volterra => "volterra",
        OperatorKind::Series => "series",
    };
    let allowed: &[&str] = match p.operator {
        OperatorKind::Composition => &["f", "lipschitz"],
        OperatorKind::Fractional => &["kind", "beta", "a"],
        OperatorKind::Volterra => &["kernel", "kernel_file"],
        OperatorKind::Series => &["term"],
    };
    let present = [
        ("f", p.f.is_some()),
        ("lipschitz", p.lipschitz.is_some()),
        ("kind", p.kind.is_some()),
        ("beta", p.beta.is_some()),
        ("a", p.a.is_some()),
        ("kernel", p.kernel.is_some()),
        ("kernel_file", p.kernel_file.is_some()),
        ("term", !p.term.is_empty()),
    ];
    if let Some((key, _)) = present.iter().find(|(k, on)| *on && !allowed.contains(k)) {
        return Err(config_err(format!("problem.{key} is not used by operator = \"{kind_name}\"")));
    }
    let missing = |key: &str| config_err(format!("problem.{key} is required for operator = \"{kind_name}\""));

    let operator = match p.operator {
        OperatorKind::Composition => {
            let f = parse_exprs("problem.f", p.f.ok_or_else(|| missing("f"))?.into_vec(), Scope::state(dim))?;
            if f.len() != dim {
                return Err(config_err(format!("problem.f needs {dim} expressions, got {}", f.len())));
            }
            if let Some(l) = p.lipschitz {
                if !(l >= 0.0 && l.is_finite()) {
                    return Err(config_err(format!("problem.lipschitz must be finite and non-negative, got {l}")));
                }
            }
            OperatorSpec::Composition { f, lipschitz: p.lipschitz }
        }
        OperatorKind::Fractional => {
            let kind = p.kind.ok_or_else(|| missing("kind"))?;
            let betas = p.beta.ok_or_else(|| missing("beta"))?.into_vec();
            if betas.len() != 1 && betas.len() != dim {
                return Err(config_err(format!("problem.beta needs 1 or {dim} values, got {}", betas.len())));
            }
            if let Some(b) = betas.iter().find(|b| !(**b > 0.0 && **b < 1.0)) {
                return Err(config_err(format!("problem.beta must satisfy 0 < beta < 1, got {b}")));
            }
            if kind == DerivativeKind::RiemannLiouville {
                if let Some(b) = betas.iter().find(|b| **b >= 0.5) {
                    return Err(config_err(format!(
                        "problem.beta must satisfy 0 < beta < 1/2 when kind = \"riemann_liouville\", got {b}"
                    )));
                }
            }
            let order = FractionalOrder::per_component(betas).map_err(at_key("problem.beta"))?;
            let a = match p.a {
                Some(t) => parse_exprs("problem.a", t.into_vec(), Scope::state(dim))?,
                None => identity_exprs(dim),
            };
            if a.len() != dim * dim {
                return Err(config_err(format!(
                    "problem.a needs {} expressions (a row-major {dim}x{dim} matrix), got {}",
                    dim * dim,
                    a.len()
                )));
            }
            OperatorSpec::Fractional { kind, order, a }
        }
        OperatorKind::Volterra => {
            let kernel = match (p.kernel, p.kernel_file) {
                (Some(k), None) => KernelSource::Expression(
                    Expr::parse(&k, Scope::kernel()).map_err(|e| config_err(format!("problem.kernel = \"{k}\": {e}")))?,
                ),
                (None, Some(f)) => {
                    let path = base.join(&f);
                    let text = std::fs::read_to_string(&path)
                        .map_err(|e| config_err(format!("problem.kernel_file {}: {e}", path.display())))?;
                    KernelSource::Table { path, text }
                }
                (Some(_), Some(_)) => {
                    return Err(config_err("problem.kernel and problem.kernel_file are mutually exclusive"))
                }
                (None, None) => return Err(missing("kernel")),
            };
            OperatorSpec::Volterra { kernel }
        }
        OperatorKind::Series => {
            let mut terms = Vec::with_capacity(p.term.len());
            for (i, t) in p.term.into_iter().enumerate() {
                let key = format!("problem.term[{i}]");
                let f = parse_exprs(&format!("{key}.f"), t.f.into_vec(), Scope::state(dim))?;
                if f.len() != dim {
                    return Err(config_err(format!("{key}.f needs {dim} expressions, got {}", f.len())));
                }
                if !(t.lip >= 0.0 && t.lip.is_finite()) {
                    return Err(config_err(format!("{key}.lip must be finite and non-negative, got {}", t.lip)));
                }
                let psi = match (t.psi, t.psi_file) {
                    (Some(e), None) => PsiSource::Expression(
                        Expr::parse(&e, Scope::time()).map_err(|err| config_err(format!("{key}.psi = \"{e}\": {err}")))?,
                    ),
                    (None, Some(f)) => {
                        let path = base.join(&f);
                        PsiSource::Signal(Signal::read_csv_file(&path).map_err(at_key(&format!("{key}.psi_file")))?)
                    }
                    (Some(_), Some(_)) => {
                        return Err(config_err(format!("{key}.psi and {key}.psi_file are mutually exclusive")))
                    }
                    (None, None) => return Err(config_err(format!("{key}.psi is required"))),
                };
                terms.push(TermSpec { f, lip: t.lip, psi, sigma: t.sigma });
            }
            OperatorSpec::Series { terms }
        }
    };

    Ok(ProblemConfig { name: p.name, operator, dim, u0, trust_radius, exact })
}

fn identity_exprs(dim: usize) -> Vec<Expr> {
    (0..dim * dim)
        .map(|k| {
            let text = if k / dim == k % dim { "1" } else { "0" };
            Expr::parse(text, Scope::state(dim)).expect("literal")
        })
        .collect()
}

fn valid_name(name: &str) -> bool {
    !name.is_empty()
        && !name.starts_with('.')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn experiment_spec(e: RawExperiment, seed: u64, grid: &Grid) -> Result<ExperimentSpec> {
    if !valid_name(&e.name) {
        return Err(config_err(format!(
            "name \"{}\" must be non-empty and use only letters, digits, '_', '-' and '.'",
            e.name
        )));
    }
    let mut spec = ExperimentSpec::for_kind(e.kind, &e.indices)
        .map_err(at_key("indices"))?
        .named(&e.name)
        .with_seed(e.seed.unwrap_or(seed))
        .with_grid(grid.len(), grid.horizon());
    if let Some(s) = e.scales {
        spec.scales = s;
    }
    if let Some(n) = e.samples {
        spec.samples = n;
    }
    if let Some(t) = e.tolerance {
        let tol = &mut spec.tolerance;
        tol.slope_below = t.slope_below.unwrap_or(tol.slope_below);
        tol.slope_above = t.slope_above.map_or(tol.slope_above, |x| x.0);
        tol.min_r2 = t.min_r2.unwrap_or(tol.min_r2);
        tol.ratio_bound = t.ratio_bound.unwrap_or(tol.ratio_bound);
        tol.growth_min = t.growth_min.unwrap_or(tol.growth_min);
        tol.correlation = t.correlation.unwrap_or(tol.correlation);
    }
    spec.validate().map_err(|e| match e {
        Error::Config(m) => config_err(m.split_once(": ").map_or(m.clone(), |(_, rest)| rest.to_string())),
        other => config_err(other.to_string()),
    })?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(text: &str) -> String {
        match parse_config(text) {
            Err(Error::Config(m)) => m,
            other => panic!("expected a config error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_solve_config() {
        let cfg = parse_config(
            "[grid]\nn = 4096\nhorizon = 1\n[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Solve);
        assert_eq!(cfg.grid.len(), 4096);
        let p = cfg.problem.unwrap();
        assert_eq!(p.u0, vec![1.0]);
        assert!(matches!(p.operator, OperatorSpec::Composition { .. }));
    }

    #[test]
    fn gap_violation_names_both_keys() {
        let m = err("[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\n[solver.indices]\nalpha = 0.5\neta = 0.5\n");
        assert!(m.contains("indices.eta") && m.contains("indices.alpha"), "{m}");
    }

    #[test]
    fn riemann_liouville_order_limit() {
        let m = err("[problem]\noperator = \"fractional\"\nkind = \"riemann_liouville\"\nbeta = 0.6\nu0 = 1\n");
        assert!(m.contains("problem.beta") && m.contains("1/2"), "{m}");
    }

    #[test]
    fn unknown_and_misplaced_keys() {
        assert!(err("[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\ncolour = 3\n").contains("colour"));
        assert!(err("[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\nbeta = 0.3\n").contains("problem.beta"));
        assert!(err("[problem]\noperator = \"composition\"\nf = \"x\"\nu0 = 1\n[solver]\ntoll = 1\n").contains("toll"));
    }

    #[test]
    fn expression_errors_name_the_key() {
        let m = err("[problem]\noperator = \"composition\"\nf = \"x +\"\nu0 = 1\n");
        assert!(m.contains("problem.f[0]") && m.contains("position 3"), "{m}");
    }

    #[test]
    fn experiment_entries() {
        let cfg = parse_config(
            "seed = 3\n[grid]\nn = 256\n[[experiment]]\nname = \"c\"\nkind = \"chi_norm_decay\"\n\
             indices = [{ s = 0.25, p = 2, q = \"inf\" }]\n",
        )
        .unwrap();
        assert_eq!(cfg.mode, Mode::Verify);
        let e = &cfg.experiments[0];
        assert_eq!((e.seed, e.n, e.indices[0].q), (3, 256, f64::INFINITY));
        assert!(err("[[experiment]]\nname = \"../x\"\nkind = \"poincare\"\nindices = [{ s = 0.7, p = 2, q = 2 }]\n")
            .contains("name"));
    }
}
