//! Windowed Picard iteration for `u(t) = u0 + int_0^t H(u)`.
//!
//! Each window `[t_a, t_b]` is chosen by measuring the contraction factor
//! of the Picard map on random probe pairs, then iterated to a sup-norm
//! fixed point. The next window restarts from `u(t_b)`, which is sound
//! because the operator is causal.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Grid, Signal};
use crate::random::stream;
use crate::rhs::{Gap, OperatorMeta, RhsOperator};

/// Quadrature used to integrate the right-hand side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegralRule {
    /// Cumulative trapezoid, for continuous right-hand sides.
    Trapezoid,
    /// Pairing with `1_{]t_a, t_k[}`, for distributional right-hand sides.
    Pairing,
}

impl IntegralRule {
    pub fn for_operator(meta: &OperatorMeta) -> Self {
        if meta.rough_output {
            IntegralRule::Pairing
        } else {
            IntegralRule::Trapezoid
        }
    }
}

/// Starting iterate on every window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum InitialIterate {
    /// The constant `u(t_a)`.
    Constant,
    /// `u(t_a)` plus a random perturbation of sup norm `amplitude` that
    /// vanishes at `t_a`.
    Perturbed { seed: u64, amplitude: f64 },
}

/// Integrability / fine index and regularity gap of the solution space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverIndices {
    #[serde(with = "crate::littlewood_paley::extended_real")]
    pub p: f64,
    #[serde(with = "crate::littlewood_paley::extended_real")]
    pub q: f64,
    pub alpha: f64,
    pub eta: f64,
}

impl Default for SolverIndices {
    fn default() -> Self {
        let g = Gap::default();
        SolverIndices { p: 2.0, q: 2.0, alpha: g.alpha, eta: g.eta }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub tol: f64,
    pub max_iter: usize,
    pub target_contraction: f64,
    pub window_shrink: f64,
    /// Smallest admissible window; `None` means four grid steps.
    pub min_window: Option<f64>,
    #[serde(with = "crate::littlewood_paley::extended_real")]
    pub ball_radius: f64,
    pub indices: SolverIndices,
    pub probe_pairs: usize,
    /// Sup norm of the probe perturbations (capped by the ball radius).
    pub probe_amplitude: f64,
    pub seed: u64,
    pub initial: InitialIterate,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            tol: 1e-10,
            max_iter: 200,
            target_contraction: 0.5,
            window_shrink: 0.5,
            min_window: None,
            ball_radius: f64::INFINITY,
            indices: SolverIndices::default(),
            probe_pairs: 20,
            probe_amplitude: 0.25,
            seed: 0,
            initial: InitialIterate::Constant,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self, grid: &Grid) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.tol > 0.0) {
            return bad(format!("tol must be positive, got {}", self.tol));
        }
        if self.max_iter == 0 {
            return bad("max_iter must be at least 1".into());
        }
        if !(self.target_contraction > 0.0 && self.target_contraction < 1.0) {
            return bad(format!("target_contraction must lie in (0, 1), got {}", self.target_contraction));
        }
        if !(self.window_shrink > 0.0 && self.window_shrink < 1.0) {
            return bad(format!("window_shrink must lie in (0, 1), got {}", self.window_shrink));
        }
        if let Some(m) = self.min_window {
            if !(m >= 4.0 * grid.spacing() * (1.0 - 1e-12)) {
                return bad(format!("min_window must be at least 4h = {}, got {m}", 4.0 * grid.spacing()));
            }
        }
        if !(self.ball_radius > 0.0) {
            return bad(format!("ball_radius must be positive, got {}", self.ball_radius));
        }
        let i = &self.indices;
        if !(i.p >= 1.0 && i.q >= 1.0) {
            return bad(format!("indices.p and indices.q must be at least 1, got p={}, q={}", i.p, i.q));
        }
        if Gap::new(i.alpha, i.eta).is_err() {
            return bad(format!(
                "indices.eta must satisfy indices.alpha < eta < 1 with alpha > 0, got alpha={}, eta={}",
                i.alpha, i.eta
            ));
        }
        if self.probe_pairs == 0 {
            return bad("probe_pairs must be at least 1".into());
        }
        if !(self.probe_amplitude > 0.0) {
            return bad(format!("probe_amplitude must be positive, got {}", self.probe_amplitude));
        }
        Ok(())
    }

    fn min_window_nodes(&self, grid: &Grid) -> usize {
        let m = self.min_window.unwrap_or(4.0 * grid.spacing());
        ((m / grid.spacing()) - 1e-9).ceil().max(4.0) as usize
    }

    fn amplitude(&self) -> f64 {
        self.probe_amplitude.min(self.ball_radius)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    WindowUnderflow,
    MaxIter,
    OperatorError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub t_start: f64,
    pub t_end: f64,
    pub iterations: usize,
    pub contraction: f64,
    pub residual: f64,
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Solution on `[0, reached]`; later nodes repeat the last value.
    pub solution: Signal,
    pub reached: f64,
    pub windows: Vec<WindowRecord>,
    pub status: SolveStatus,
    pub warnings: Vec<String>,
}

/// `u0 + int_0^{t_k} phi` at every node.
pub fn integral_step(phi: &Signal, u0: &[f64], rule: IntegralRule) -> Result<Signal> {
    if u0.len() != phi.dim() {
        return Err(Error::Shape(format!("initial value has {} components, phi has {}", u0.len(), phi.dim())));
    }
    let mut out = vec![0.0; phi.values().len()];
    integrate_into(phi.values(), phi.dim(), phi.grid().spacing(), u0, 0, phi.len() - 1, rule, &mut out);
    phi.with_values(out)
}

/// Writes `u0 + int_{t_a}^{t_k} phi` into `out` for `k = a..=b`.
#[allow(clippy::too_many_arguments)]
fn integrate_into(phi: &[f64], d: usize, h: f64, u0: &[f64], a: usize, b: usize, rule: IntegralRule, out: &mut [f64]) {
    out[a * d..(a + 1) * d].copy_from_slice(u0);
    let mut acc = vec![0.0; d];
    for k in a + 1..=b {
        for i in 0..d {
            acc[i] += match rule {
                IntegralRule::Trapezoid => 0.5 * h * (phi[(k - 1) * d + i] + phi[k * d + i]),
                IntegralRule::Pairing => h * phi[(k - 1) * d + i],
            };
            out[k * d + i] = u0[i] + acc[i];
        }
    }
}

/// `S(u) = u0 + int_0^t H(u)` on the whole grid.
pub fn picard_map(op: &dyn RhsOperator, u: &Signal, u0: &[f64]) -> Result<Signal> {
    let phi = op.apply(u)?;
    integral_step(&phi, u0, IntegralRule::for_operator(op.meta()))
}

/// `sup |u - S(u)|`.
pub fn residual(op: &dyn RhsOperator, u: &Signal, u0: &[f64]) -> Result<f64> {
    u.sup_distance(&picard_map(op, u, u0)?)
}

/// Fixed-history Picard map on window nodes `a..=b`.
struct WindowMap<'a> {
    op: &'a dyn RhsOperator,
    rule: IntegralRule,
    history: &'a Signal,
    a: usize,
    b: usize,
}

impl WindowMap<'_> {
    fn dim(&self) -> usize {
        self.history.dim()
    }

    fn start_value(&self) -> &[f64] {
        self.history.value(self.a)
    }

    /// History before `a`, `w` on `a..=b`, then the constant `w(b)`.
    fn assemble(&self, w: &[f64]) -> Result<Signal> {
        let d = self.dim();
        let mut vals = self.history.values().to_vec();
        vals[self.a * d..(self.b + 1) * d].copy_from_slice(w);
        let last = w[w.len() - d..].to_vec();
        for k in self.b + 1..self.history.len() {
            vals[k * d..(k + 1) * d].copy_from_slice(&last);
        }
        self.history.with_values(vals)
    }

    fn apply(&self, w: &[f64]) -> Result<Vec<f64>> {
        let d = self.dim();
        let full = self.assemble(w)?;
        let phi = self.op.apply_until(&full, self.b)?;
        let mut out = vec![0.0; self.history.values().len()];
        let h = self.history.grid().spacing();
        integrate_into(phi.values(), d, h, self.start_value(), self.a, self.b, self.rule, &mut out);
        Ok(out[self.a * d..(self.b + 1) * d].to_vec())
    }

    /// A random perturbation of sup norm `amp` on the window that vanishes
    /// at its start: a saturating ramp plus a short sine series.
    fn probe(&self, amp: f64, rng: &mut impl Rng) -> Vec<f64> {
        let d = self.dim();
        let len = (self.b - self.a) as f64;
        let knee = rng.gen_range(0.05..0.5);
        let coeffs: Vec<(f64, [f64; 4])> = (0..d)
            .map(|_| (rng.gen_range(-1.0..1.0), [(); 4].map(|_| rng.gen_range(-0.5..0.5))))
            .collect();
        let mut w = vec![0.0; (self.b - self.a + 1) * d];
        for k in 0..=self.b - self.a {
            let x = k as f64 / len;
            let ramp = (x / knee).min(1.0);
            for (i, (c, s)) in coeffs.iter().enumerate() {
                let series: f64 = s
                    .iter()
                    .enumerate()
                    .map(|(m, a)| a * (std::f64::consts::PI * (m + 1) as f64 * x).sin())
                    .sum();
                w[k * d + i] = c * ramp + series;
            }
        }
        let sup = w.chunks(d).map(norm).fold(0.0, f64::max);
        if sup > 0.0 {
            w.iter_mut().for_each(|x| *x *= amp / sup);
        }
        w
    }

    fn constant(&self) -> Vec<f64> {
        self.start_value().repeat(self.b - self.a + 1)
    }

    fn shift(&self, delta: &[f64]) -> Vec<f64> {
        self.constant().iter().zip(delta).map(|(x, y)| x + y).collect()
    }
}

fn norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn sup_distance(a: &[f64], b: &[f64], d: usize) -> f64 {
    a.chunks(d).zip(b.chunks(d)).map(|(x, y)| {
        x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt()
    }).fold(0.0, f64::max)
}

/// Largest observed `||S(u) - S(v)||_sup / ||u - v||_sup` over the probe
/// pairs on window nodes `a..=b`, with `history` fixing the solution on
/// nodes `0..=a`.
pub fn measure_contraction(
    op: &dyn RhsOperator,
    history: &Signal,
    a: usize,
    b: usize,
    cfg: &SolverConfig,
) -> Result<f64> {
    let map = WindowMap { op, rule: IntegralRule::for_operator(op.meta()), history, a, b };
    let mut rng = stream(cfg.seed ^ ((a as u64) << 32 | b as u64), "contraction_probes");
    let d = map.dim();
    let amp = cfg.amplitude();
    let mut worst = 0.0f64;
    for _ in 0..cfg.probe_pairs {
        let u = map.shift(&map.probe(amp, &mut rng));
        let v = map.shift(&map.probe(amp, &mut rng));
        let den = sup_distance(&u, &v, d);
        if den == 0.0 {
            continue;
        }
        let num = sup_distance(&map.apply(&u)?, &map.apply(&v)?, d);
        worst = worst.max(num / den);
    }
    Ok(worst)
}

/// Outcome of the window search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowChoice {
    pub end: usize,
    pub contraction: f64,
}

/// Shrinks the window starting at node `a` until the measured contraction
/// drops to the target.
pub fn select_window(op: &dyn RhsOperator, history: &Signal, a: usize, cfg: &SolverConfig) -> Result<WindowChoice> {
    let grid = history.grid();
    let last = grid.len() - 1;
    let min_nodes = cfg.min_window_nodes(grid).min(last - a);
    let mut len = last - a;
    loop {
        let c = measure_contraction(op, history, a, a + len, cfg)?;
        if c <= cfg.target_contraction * (1.0 + 1e-9) {
            return Ok(WindowChoice { end: a + len, contraction: c });
        }
        let next = ((len as f64) * cfg.window_shrink).floor() as usize;
        if len <= min_nodes || next < min_nodes {
            return Err(Error::Domain(format!(
                "no contracting window at t = {} (last contraction {c:.3} on length {})",
                grid.time(a),
                len as f64 * grid.spacing()
            )));
        }
        len = next;
    }
}

/// Windowed Picard solve on `grid` from `u0`.
pub fn solve(op: &dyn RhsOperator, u0: &[f64], grid: &Grid, cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate(grid)?;
    let meta = op.meta();
    if !meta.causal {
        return Err(Error::Domain("the solver needs a causal operator".into()));
    }
    if u0.len() != meta.dim {
        return Err(Error::Shape(format!("u0 has {} components, operator expects {}", u0.len(), meta.dim)));
    }
    let d = meta.dim;
    let rule = IntegralRule::for_operator(meta);
    let mut solution = Signal::constant(*grid, u0);
    let mut windows = Vec::new();
    let mut warnings = Vec::new();
    let mut a = 0;
    let last = grid.len() - 1;
    let mut status = SolveStatus::Converged;
    while a < last {
        let choice = match select_window(op, &solution, a, cfg) {
            Ok(c) => c,
            Err(Error::Domain(msg)) => {
                warnings.push(msg);
                status = SolveStatus::WindowUnderflow;
                break;
            }
            Err(e) => {
                warnings.push(e.to_string());
                status = SolveStatus::OperatorError;
                break;
            }
        };
        let b = choice.end;
        let map = WindowMap { op, rule, history: &solution, a, b };
        let mut w = match cfg.initial {
            InitialIterate::Constant => map.constant(),
            InitialIterate::Perturbed { seed, amplitude } => {
                let mut rng = stream(seed ^ a as u64, "initial_iterate");
                map.shift(&map.probe(amplitude.min(cfg.ball_radius), &mut rng))
            }
        };
        let center = map.start_value().to_vec();
        let mut iterations = 0;
        let mut res = f64::INFINITY;
        let mut clipped = false;
        let mut failure = None;
        while iterations < cfg.max_iter {
            let next = match map.apply(&w) {
                Ok(x) => x,
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            };
            iterations += 1;
            res = sup_distance(&w, &next, d);
            if res <= cfg.tol {
                break;
            }
            w = next;
            clipped |= clip_to_ball(&mut w, &center, cfg.ball_radius);
        }
        if clipped {
            warnings.push(format!("iterates left the ball of radius {} on window starting at t = {}", cfg.ball_radius, grid.time(a)));
        }
        if let Some(e) = failure {
            warnings.push(e.to_string());
            status = SolveStatus::OperatorError;
            break;
        }
        let vals = map.assemble(&w)?.into_values();
        solution = solution.with_values(vals)?;
        windows.push(WindowRecord {
            t_start: grid.time(a),
            t_end: grid.time(b),
            iterations,
            contraction: choice.contraction,
            residual: res,
        });
        if res > cfg.tol {
            status = SolveStatus::MaxIter;
            a = b;
            break;
        }
        a = b;
    }
    Ok(SolveReport { solution, reached: grid.time(a), windows, status, warnings })
}

/// Radial projection onto the sup-norm ball; returns whether it clipped.
fn clip_to_ball(w: &mut [f64], center: &[f64], radius: f64) -> bool {
    if radius.is_infinite() {
        return false;
    }
    let d = center.len();
    let dist = w
        .chunks(d)
        .map(|x| norm(&x.iter().zip(center).map(|(a, b)| a - b).collect::<Vec<_>>()))
        .fold(0.0, f64::max);
    if dist <= radius {
        return false;
    }
    let s = radius / dist;
    for x in w.chunks_mut(d) {
        for (v, c) in x.iter_mut().zip(center) {
            *v = c + (*v - c) * s;
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rhs::{composition_operator, volterra_operator, Kernel, PointwiseFn};
    use std::sync::Arc;

    fn grid(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    fn linear(lambda: f64) -> crate::rhs::Operator {
        let f: PointwiseFn = Arc::new(move |x: &[f64], o: &mut [f64]| o[0] = lambda * x[0]);
        composition_operator(1, f, lambda.abs())
    }

    #[test]
    fn integral_step_examples() {
        let g = grid(4096);
        let zero = integral_step(&Signal::zeros(g, 1), &[2.0], IntegralRule::Trapezoid).unwrap();
        assert!(zero.values().iter().all(|x| *x == 2.0));
        let one = integral_step(&Signal::constant(g, &[1.0]), &[0.0], IntegralRule::Trapezoid).unwrap();
        for k in 0..g.len() {
            assert!((one.value(k)[0] - g.time(k)).abs() < 1e-10);
        }
        let cos = Signal::scalar_fn(g, f64::cos).unwrap();
        let s = integral_step(&cos, &[0.0], IntegralRule::Trapezoid).unwrap();
        for k in 0..g.len() {
            assert!((s.value(k)[0] - g.time(k).sin()).abs() < 1e-6);
        }
        let r = integral_step(&Signal::constant(g, &[1.0]), &[0.0], IntegralRule::Pairing).unwrap();
        assert!((r.value(g.len() - 1)[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_operator_keeps_initial_value() {
        let g = grid(256);
        let op = linear(0.0);
        let rep = solve(&op, &[1.5], &g, &SolverConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert_eq!(rep.windows.len(), 1);
        assert!(rep.solution.values().iter().all(|x| *x == 1.5));
    }

    #[test]
    fn exponential_growth() {
        let g = grid(4096);
        let rep = solve(&linear(1.0), &[1.0], &g, &SolverConfig::default()).unwrap();
        assert_eq!(rep.status, SolveStatus::Converged);
        assert_eq!(rep.solution.value(0)[0], 1.0);
        let err = (0..g.len()).map(|k| (rep.solution.value(k)[0] - g.time(k).exp()).abs()).fold(0.0, f64::max);
        assert!(err <= 1e-3, "{err}");
        let mut t = 0.0;
        for w in &rep.windows {
            assert_eq!(w.t_start, t);
            assert!(w.residual <= 1e-10);
            t = w.t_end;
        }
        assert_eq!(t, 1.0);
    }

    #[test]
    fn windows_shrink_with_rate() {
        let g = grid(1024);
        let mut prev = f64::INFINITY;
        for lambda in [4.0, 8.0, 16.0, 32.0] {
            let hist = Signal::constant(g, &[1.0]);
            let c = select_window(&linear(lambda), &hist, 0, &SolverConfig::default()).unwrap();
            let t0 = g.time(c.end);
            assert!(t0 < prev);
            prev = t0;
        }
    }

    #[test]
    fn mild_volterra_accepts_full_horizon() {
        let g = grid(512);
        let op = volterra_operator(&g, 1, Kernel::smooth(|_, _| 1.0)).unwrap();
        let hist = Signal::constant(g, &[1.0]);
        let c = select_window(&op, &hist, 0, &SolverConfig::default()).unwrap();
        assert_eq!(c.end, g.len() - 1);
    }

    #[test]
    fn residual_examples() {
        let g = grid(1024);
        let op = linear(0.0);
        assert_eq!(residual(&op, &Signal::constant(g, &[3.0]), &[3.0]).unwrap(), 0.0);
        let rep = solve(&linear(1.0), &[1.0], &g, &SolverConfig::default()).unwrap();
        let single = residual(&linear(1.0), &rep.solution, &[1.0]).unwrap();
        assert!(single < 1e-9, "{single}");
    }

    #[test]
    fn underflow_is_reported() {
        let g = grid(256);
        let cfg = SolverConfig { min_window: Some(0.25), ..SolverConfig::default() };
        let rep = solve(&linear(50.0), &[1.0], &g, &cfg).unwrap();
        assert_eq!(rep.status, SolveStatus::WindowUnderflow);
        assert!(rep.windows.is_empty());
    }

    #[test]
    fn config_validation() {
        let g = grid(64);
        let base = SolverConfig::default();
        assert!(base.validate(&g).is_ok());
        let c = SolverConfig { min_window: Some(g.spacing()), ..base.clone() };
        assert!(matches!(c.validate(&g), Err(Error::Config(_))));
        let c = SolverConfig { indices: SolverIndices { alpha: 0.5, eta: 0.4, ..SolverIndices::default() }, ..base };
        assert!(matches!(c.validate(&g), Err(Error::Config(_))));
    }

    #[test]
    fn clipping_projects_radially() {
        let mut w = vec![0.0, 2.0, 4.0];
        assert!(clip_to_ball(&mut w, &[0.0], 1.0));
        assert_eq!(w, vec![0.0, 0.5, 1.0]);
    }
}
