//! Batch front end: `solve`, `verify` and `besov-norm`.
//!
//! Every input is parsed and validated before anything is computed, and
//! nothing is written until all results are in memory. Files land in the
//! output directory only, each written to a temporary name and renamed.
//!
//! Exit codes: 0 success, 1 failed experiment / unconverged solve / runtime
//! error, 2 configuration error.

pub mod config;
pub mod expr;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::Serialize;

pub use config::{load_config, parse_config, Mode, ProblemConfig, RunConfig};
pub use expr::{expression_eval, Env, Expr, Scope};

use crate::error::{Error, Result};
use crate::grid::{Grid, Signal};
use crate::lab::{self, ExperimentKind, Outcome};
use crate::littlewood_paley::{canonical_extension, decompose, extended_real, BesovIndex};
use crate::rhs::{
    composition_operator, fractional_product_operator, series_operator, volterra_operator, Gap, Kernel, Operator,
    PointwiseFn, RhsOperator, SeriesTerm,
};
use crate::solver::{self, SolveStatus, SolverConfig, WindowRecord};
use config::{KernelSource, OperatorSpec, PsiSource};

/// Environment variable overriding the output directory.
pub const OUT_DIR_ENV: &str = "PICARD_OUT_DIR";
pub const DEFAULT_OUT_DIR: &str = "picard-out";

#[derive(Debug, Parser)]
#[command(name = "besov-picard", version, about = "Picard solver and Besov-space diagnostics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve the Cauchy problem described by a config file.
    Solve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the inequality experiments listed in a config file.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
    /// Print Besov norms of a sampled signal over its whole interval.
    BesovNorm {
        /// CSV with a `t, x0, ...` header.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, allow_hyphen_values = true)]
        s: f64,
        /// Number or `inf`.
        #[arg(long, value_parser = parse_extended)]
        p: f64,
        /// Number or `inf`.
        #[arg(long, value_parser = parse_extended)]
        q: f64,
    },
}

fn parse_extended(s: &str) -> std::result::Result<f64, String> {
    extended_real::parse(s).ok_or_else(|| format!("expected a number or \"inf\", got \"{s}\""))
}

/// What a run produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub success: bool,
    pub files: Vec<PathBuf>,
    /// Human-readable lines for the terminal.
    pub lines: Vec<String>,
}

/// Runs a parsed command line and returns the process exit code.
pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Solve { config } => with_config(&config, Mode::Solve),
        Command::Verify { config } => with_config(&config, Mode::Verify),
        Command::BesovNorm { input, s, p, q } => besov_norm_table(&input, &BesovIndex { s, p, q }).map(|table| {
            RunSummary { success: true, files: vec![], lines: vec![table.trim_end().to_string()] }
        }),
    };
    match result {
        Ok(summary) => {
            let mut stdout = std::io::stdout().lock();
            for line in &summary.lines {
                // a closed pipe is not a failure of the run
                if writeln!(stdout, "{line}").is_err() {
                    break;
                }
            }
            if summary.success {
                0
            } else {
                1
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) => 2,
        _ => 1,
    }
}

fn with_config(path: &Path, mode: Mode) -> Result<RunSummary> {
    let cfg = load_config(path)?;
    let out = output_dir(&cfg);
    run_config(&cfg, mode, &out)
}

/// `$PICARD_OUT_DIR`, else the config's `output_dir`, else `picard-out`.
pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(dir) if !dir.is_empty() => PathBuf::from(dir),
        _ => cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR)),
    }
}

pub fn run_config(cfg: &RunConfig, mode: Mode, out: &Path) -> Result<RunSummary> {
    if cfg.mode != mode {
        return Err(Error::Config(format!(
            "the config describes a {} run, not {}",
            cfg.mode.as_str(),
            mode.as_str()
        )));
    }
    match mode {
        Mode::Solve => run_solve(cfg, out),
        Mode::Verify => run_verify(cfg, out),
        Mode::BesovNorm => Err(Error::Config("besov-norm takes its parameters on the command line".into())),
    }
}

/// Loads `config` and solves its problem, writing into `out`.
pub fn solve(config: &Path, out: &Path) -> Result<RunSummary> {
    run_config(&load_config(config)?, Mode::Solve, out)
}

/// Loads `config` and runs its experiments, writing into `out`.
pub fn verify(config: &Path, out: &Path) -> Result<RunSummary> {
    run_config(&load_config(config)?, Mode::Verify, out)
}

fn as_config(context: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::Config(m) => Error::Config(format!("{context}: {m}")),
        other => Error::Config(format!("{context}: {other}")),
    }
}

fn state_fn(exprs: Vec<Expr>) -> PointwiseFn {
    Arc::new(move |x: &[f64], out: &mut [f64]| {
        let env = Env { x, s: 0.0, t: 0.0 };
        for (o, e) in out.iter_mut().zip(&exprs) {
            *o = e.eval(&env);
        }
    })
}

/// Builds the right-hand side of a solve problem.
pub fn build_operator(problem: &ProblemConfig, grid: &Grid, solver: &SolverConfig) -> Result<Operator> {
    let dim = problem.dim;
    let idx = &solver.indices;
    let gap = Gap::new(idx.alpha, idx.eta)?;
    let op = match &problem.operator {
        OperatorSpec::Composition { f, lipschitz } => {
            composition_operator(dim, state_fn(f.clone()), lipschitz.unwrap_or(0.0)).with_gap(gap)
        }
        OperatorSpec::Fractional { kind, order, a } => {
            fractional_product_operator(dim, state_fn(a.clone()), order.clone(), *kind)?.with_gap(gap)
        }
        OperatorSpec::Volterra { kernel } => {
            let kernel = match kernel {
                KernelSource::Expression(e) => {
                    let e = e.clone();
                    Kernel::smooth(move |s, t| e.eval(&Env { x: &[], s, t }))
                }
                KernelSource::Table { path, text } => Kernel::from_csv(text.as_bytes(), grid)
                    .map_err(as_config(&format!("problem.kernel_file {}", path.display())))?,
            };
            volterra_operator(grid, dim, kernel)?.with_gap(gap)
        }
        OperatorSpec::Series { terms } => {
            let mut built = Vec::with_capacity(terms.len());
            for (i, t) in terms.iter().enumerate() {
                let psi = match &t.psi {
                    PsiSource::Expression(e) => Signal::scalar_fn(*grid, |t| e.eval(&Env { x: &[], s: 0.0, t }))?,
                    PsiSource::Signal(s) => {
                        if s.grid() != grid {
                            return Err(Error::Config(format!(
                                "problem.term[{i}].psi_file: sampled on {} nodes over [0, {}], expected {} nodes over [0, {}]",
                                s.len(),
                                s.grid().horizon(),
                                grid.len(),
                                grid.horizon()
                            )));
                        }
                        s.clone()
                    }
                };
                built.push(SeriesTerm { f: state_fn(t.f.clone()), lip: t.lip, psi, sigma: t.sigma });
            }
            series_operator(grid, dim, built, idx.p, idx.q, gap)?
        }
    };
    let op = match &problem.operator {
        OperatorSpec::Composition { lipschitz: None, .. } => op.with_lipschitz_bound(None),
        _ => op,
    };
    let op = op.with_trust_radius(problem.trust_radius).with_base_point(problem.u0.clone());
    Ok(match &problem.name {
        Some(n) => op.with_name(n),
        None => op,
    })
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    operator: &'a str,
    dim: usize,
    horizon: f64,
    n: usize,
    status: SolveStatus,
    converged: bool,
    reached: f64,
    lipschitz_bound: Option<f64>,
    summability_bound: Option<f64>,
    max_error_vs_exact: Option<f64>,
    solver: &'a SolverConfig,
    windows: &'a [WindowRecord],
    warnings: &'a [String],
    solution_csv: &'a str,
}

const SOLUTION_CSV: &str = "solution.csv";
const REPORT_JSON: &str = "report.json";

fn run_solve(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let problem = cfg.problem.as_ref().ok_or_else(|| Error::Config("no [problem] table".into()))?;
    let grid = cfg.grid;
    let op = build_operator(problem, &grid, &cfg.solver).map_err(as_config("problem"))?;
    let report = solver::solve(&op, &problem.u0, &grid, &cfg.solver)?;

    let converged =
        report.status == SolveStatus::Converged && report.reached >= grid.horizon() - 1e-9 * grid.spacing();
    let max_error = problem.exact.as_ref().map(|exact| {
        let mut worst = 0.0f64;
        for k in 0..grid.len() {
            let t = grid.time(k);
            if t > report.reached + 1e-9 * grid.spacing() {
                break;
            }
            let env = Env { x: &[], s: 0.0, t };
            let d2: f64 =
                report.solution.value(k).iter().zip(exact).map(|(u, e)| (u - e.eval(&env)).powi(2)).sum();
            worst = worst.max(d2.sqrt());
        }
        worst
    });
    let meta = op.meta();
    let payload = SolveOutput {
        operator: &meta.name,
        dim: meta.dim,
        horizon: grid.horizon(),
        n: grid.len(),
        status: report.status,
        converged,
        reached: report.reached,
        lipschitz_bound: meta.lipschitz_bound,
        summability_bound: op.summability_bound(),
        max_error_vs_exact: max_error,
        solver: &cfg.solver,
        windows: &report.windows,
        warnings: &report.warnings,
        solution_csv: SOLUTION_CSV,
    };
    let json = serde_json::to_string_pretty(&payload).map_err(|e| Error::Io(e.to_string()))? + "\n";
    let files = write_all(
        out,
        &[(SOLUTION_CSV.to_string(), report.solution.to_csv_string()), (REPORT_JSON.to_string(), json)],
    )?;

    let mut lines = vec![format!(
        "{}: {:?}, reached t = {} of {} in {} window(s)",
        meta.name,
        report.status,
        report.reached,
        grid.horizon(),
        report.windows.len()
    )];
    if let Some(e) = max_error {
        lines.push(format!("max error vs exact solution: {e:.3e}"));
    }
    lines.extend(report.warnings.iter().map(|w| format!("warning: {w}")));
    lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(RunSummary { success: converged, files, lines })
}

#[derive(Serialize)]
struct SummaryEntry<'a> {
    name: &'a str,
    kind: ExperimentKind,
    outcome: Option<Outcome>,
    pass: bool,
    error: Option<String>,
}

fn run_verify(cfg: &RunConfig, out: &Path) -> Result<RunSummary> {
    let results = lab::run_all(&cfg.experiments);
    // an index outside the proved range is a configuration problem
    for (spec, r) in cfg.experiments.iter().zip(&results) {
        if let Err(e @ (Error::UnsupportedIndex { .. } | Error::Config(_))) = r {
            return Err(Error::Config(format!("experiment \"{}\": {e}", spec.name)));
        }
    }

    let mut payload = Vec::new();
    let mut summary = Vec::new();
    let mut lines = Vec::new();
    for (spec, r) in cfg.experiments.iter().zip(&results) {
        match r {
            Ok(rep) => {
                payload.push((format!("{}.json", spec.name), rep.to_json() + "\n"));
                payload.push((format!("{}.csv", spec.name), rep.to_csv()));
                payload.push((format!("{}.txt", spec.name), rep.to_text()));
                lines.push(format!("[{}] {}: {}", verdict(rep.outcome), spec.name, rep.note));
                summary.push(SummaryEntry {
                    name: &spec.name,
                    kind: spec.kind,
                    outcome: Some(rep.outcome),
                    pass: rep.pass,
                    error: None,
                });
            }
            Err(e) => {
                lines.push(format!("[ERROR] {}: {e}", spec.name));
                summary.push(SummaryEntry {
                    name: &spec.name,
                    kind: spec.kind,
                    outcome: None,
                    pass: false,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    let success = summary.iter().all(|s| s.pass);
    let json = serde_json::to_string_pretty(&summary).map_err(|e| Error::Io(e.to_string()))? + "\n";
    payload.push(("summary.json".to_string(), json));
    let files = write_all(out, &payload)?;
    lines.extend(files.iter().map(|f| format!("wrote {}", f.display())));
    Ok(RunSummary { success, files, lines })
}

fn verdict(o: Outcome) -> &'static str {
    match o {
        Outcome::Pass => "PASS",
        Outcome::Fail => "FAIL",
        Outcome::Inconclusive => "INCONCLUSIVE",
    }
}

/// Table of the `B^s_{p,q}(]0, T[)` norm of every component of a CSV signal
/// together with the `L^p` norms of its dyadic blocks.
pub fn besov_norm_table(input: &Path, idx: &BesovIndex) -> Result<String> {
    idx.validate().map_err(as_config("index"))?;
    let u = Signal::read_csv_file(input).map_err(|e| match e {
        Error::Parse { pos, msg } => Error::Parse { pos, msg: format!("{}: {msg}", input.display()) },
        Error::Io(m) => Error::Io(format!("{}: {m}", input.display())),
        other => other,
    })?;
    let t = u.grid().horizon();
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# {} ({} nodes on [0, {t}], dim {}), s = {}, p = {}, q = {}",
        input.display(),
        u.len(),
        u.dim(),
        idx.s,
        idx.p,
        idx.q
    );
    let ext = canonical_extension(&u, t, idx)?;
    let analysis = decompose(&ext);
    let _ = writeln!(out, "{:<12}{:>24}", "quantity", "value");
    let _ = writeln!(out, "{:<12}{:>24.12e}", "norm", analysis.besov_norm(idx));
    for j in 0..u.dim() {
        let comp = Signal::new(*u.grid(), 1, u.component(j))?;
        let _ = writeln!(out, "{:<12}{:>24.12e}", format!("norm[x{j}]"), crate::littlewood_paley::besov_norm_interval(&comp, t, idx)?);
    }
    for (j, b) in analysis.block_norms(idx.p) {
        let _ = writeln!(out, "{:<12}{:>24.12e}", format!("block {j}"), b);
    }
    Ok(out)
}

/// Writes every `(file name, contents)` pair into `dir` through a temporary
/// file and a rename.
fn write_all(dir: &Path, files: &[(String, String)]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::with_capacity(files.len());
    for (name, contents) in files {
        let target = dir.join(name);
        let tmp = dir.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, contents).map_err(|e| Error::Io(format!("{}: {e}", tmp.display())))?;
        std::fs::rename(&tmp, &target).map_err(|e| Error::Io(format!("{}: {e}", target.display())))?;
        written.push(target);
    }
    Ok(written)
}
