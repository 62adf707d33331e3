//! Numerical experiments probing the functional inequalities behind the
//! solver: decay of characteristic-function norms, interval shrinking,
//! dilation scaling, the uniform Poincare inequality, equicontinuity of
//! interval multipliers and continuity of products.
//!
//! Exponents are checked through log-log slopes; thresholds live in the
//! [`Tolerance`] of each [`ExperimentSpec`].

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::Rng;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{zero_extend, ExtendedSignal, Grid, Signal, Window};
use crate::littlewood_paley::{
    besov_norm_interval, besov_norm_line, check_product_indices, extended_real, j_max_for, multiply,
    BesovIndex,
};
use crate::random::{band_limited, band_limited_from_zero, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    /// `indices = [(1/m - eps, m, q)]`, `scales` are fractions of `T`.
    ChiNormDecay,
    /// `indices = [sigma, s]`, `scales` are fractions of `T`.
    IntervalShrink,
    /// `indices = [(s, p, q)]`, `scales` are dilation factors.
    ScalingLaw,
    /// `indices = [(s, p, q)]`, `scales` are interval lengths as fractions of `T`.
    Poincare,
    /// `indices = [(s, p, q)]`, `scales` are fractions of `T`.
    MultiplierEquicontinuity,
    /// `indices = [sigma, s]`; `scales` unused.
    ProductContinuity,
}

/// Pass/fail thresholds of an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerance {
    /// Allowed shortfall of the fitted slope below the predicted exponent.
    pub slope_below: f64,
    /// Allowed excess of the fitted slope above the predicted exponent.
    #[serde(with = "extended_real")]
    pub slope_above: f64,
    /// Fits with a lower coefficient of determination are inconclusive.
    pub min_r2: f64,
    /// Largest admissible spread (max / min or max / reference).
    pub ratio_bound: f64,
    /// Smallest growth a control run must show.
    pub growth_min: f64,
    /// Largest admissible |correlation| between log-ratio and log-size.
    pub correlation: f64,
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance {
            slope_below: 0.1,
            slope_above: 0.15,
            min_r2: 0.95,
            ratio_bound: 2.0,
            growth_min: 4.0,
            correlation: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub kind: ExperimentKind,
    pub indices: Vec<BesovIndex>,
    #[serde(default)]
    pub scales: Vec<f64>,
    pub samples: usize,
    pub seed: u64,
    /// Grid size and horizon of the sampled signals.
    pub n: usize,
    pub horizon: f64,
    #[serde(default)]
    pub tolerance: Tolerance,
}

fn dyadic(count: usize, first: f64) -> Vec<f64> {
    (0..count).map(|k| first * 0.5f64.powi(k as i32)).collect()
}

impl ExperimentSpec {
    fn base(name: &str, kind: ExperimentKind, indices: Vec<BesovIndex>, scales: Vec<f64>) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            kind,
            indices,
            scales,
            samples: 20,
            seed: 0,
            n: 4096,
            horizon: 1.0,
            tolerance: Tolerance::default(),
        }
    }

    /// Norm of `1_{]0,t[}` in `B^{1/m - eps}_{m,inf}` over `t = T 2^{-k}`.
    pub fn chi_norm_decay(m: f64, eps: f64) -> Self {
        let idx = BesovIndex { s: 1.0 / m - eps, p: m, q: f64::INFINITY };
        // the power law is asymptotic; for t comparable to the window the
        // low-frequency block saturates
        Self::base("chi_norm_decay", ExperimentKind::ChiNormDecay, vec![idx], dyadic(7, 0.25))
    }

    pub fn interval_shrink(sigma: f64, s: f64, p: f64, q: f64) -> Self {
        let mut spec = Self::base(
            "interval_shrink",
            ExperimentKind::IntervalShrink,
            vec![BesovIndex { s: sigma, p, q }, BesovIndex { s, p, q }],
            dyadic(6, 1.0),
        );
        spec.tolerance.slope_below = 0.15;
        spec.tolerance.slope_above = f64::INFINITY;
        spec
    }

    /// Dilations `lambda in {16, ..., 1}` for `s > 0`, `{1, ..., 1/16}` for `s < 0`.
    pub fn scaling_law(s: f64, p: f64) -> Self {
        let scales = if s < 0.0 { dyadic(5, 1.0) } else { dyadic(5, 16.0) };
        let mut spec =
            Self::base("scaling_law", ExperimentKind::ScalingLaw, vec![BesovIndex { s, p, q: p }], scales);
        spec.tolerance.slope_below = 0.15;
        spec
    }

    pub fn poincare(s: f64, p: f64, q: f64) -> Self {
        let mut spec =
            Self::base("poincare", ExperimentKind::Poincare, vec![BesovIndex { s, p, q }], dyadic(7, 1.0));
        spec.tolerance.ratio_bound = 2.5;
        spec
    }

    pub fn multiplier_equicontinuity(s: f64, p: f64, q: f64) -> Self {
        Self::base(
            "multiplier_equicontinuity",
            ExperimentKind::MultiplierEquicontinuity,
            vec![BesovIndex { s, p, q }],
            dyadic(6, 1.0),
        )
    }

    pub fn product_continuity(sigma: f64, s: f64, p: f64, q: f64) -> Self {
        Self::base(
            "product_continuity",
            ExperimentKind::ProductContinuity,
            vec![BesovIndex { s: sigma, p, q }, BesovIndex { s, p, q }],
            vec![],
        )
    }

    /// Default experiment of `kind` for the given indices, laid out as in
    /// [`ExperimentKind`].
    pub fn for_kind(kind: ExperimentKind, indices: &[BesovIndex]) -> Result<Self> {
        let want = match kind {
            ExperimentKind::IntervalShrink | ExperimentKind::ProductContinuity => 2,
            _ => 1,
        };
        if indices.len() != want {
            return Err(Error::Config(format!("{kind:?} expects {want} indices, got {}", indices.len())));
        }
        let a = indices[0];
        let mut spec = match kind {
            ExperimentKind::ChiNormDecay => Self::chi_norm_decay(a.p, 1.0 / a.p - a.s),
            ExperimentKind::IntervalShrink => Self::interval_shrink(a.s, indices[1].s, a.p, a.q),
            ExperimentKind::ScalingLaw => Self::scaling_law(a.s, a.p),
            ExperimentKind::Poincare => Self::poincare(a.s, a.p, a.q),
            ExperimentKind::MultiplierEquicontinuity => Self::multiplier_equicontinuity(a.s, a.p, a.q),
            ExperimentKind::ProductContinuity => Self::product_continuity(a.s, indices[1].s, a.p, a.q),
        };
        spec.indices = indices.to_vec();
        Ok(spec)
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = name.to_string();
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, samples: usize) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_grid(mut self, n: usize, horizon: f64) -> Self {
        self.n = n;
        self.horizon = horizon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("experiment {}: {m}", self.name)));
        if self.samples < 10 {
            return bad(format!("samples must be at least 10, got {}", self.samples));
        }
        let want = match self.kind {
            ExperimentKind::IntervalShrink | ExperimentKind::ProductContinuity => 2,
            _ => 1,
        };
        if self.indices.len() != want {
            return bad(format!("expected {want} indices, got {}", self.indices.len()));
        }
        for idx in &self.indices {
            idx.validate()?;
        }
        if self.kind != ExperimentKind::ProductContinuity {
            if self.scales.len() < 3 {
                return bad("at least three scales are required".into());
            }
            if self.scales.windows(2).any(|w| (w[1] / w[0] - 0.5).abs() > 1e-12) {
                return bad("scales must form a geometric sequence with ratio 1/2".into());
            }
            if self.scales.iter().any(|x| !(*x > 0.0)) {
                return bad("scales must be positive".into());
            }
        }
        let uses_fractions = !matches!(self.kind, ExperimentKind::ScalingLaw | ExperimentKind::ProductContinuity);
        if uses_fractions && self.scales.iter().any(|x| *x > 1.0) {
            return bad("interval scales are fractions of the horizon and must not exceed 1".into());
        }
        Grid::new(self.horizon, self.n)?;
        Ok(())
    }
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    pub r2: f64,
}

/// Log-log least squares; `None` for fewer than two usable points.
pub fn fit_loglog(xs: &[f64], ys: &[f64]) -> Option<Fit> {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(x, y)| **x > 0.0 && **y > 0.0)
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    let n = pts.len() as f64;
    if pts.len() < 2 {
        return None;
    }
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = pts.iter().map(|p| (p.1 - intercept - slope * p.0).powi(2)).sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
    let slope_stderr = if pts.len() > 2 { (ss_res / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Some(Fit { slope, intercept, slope_stderr, r2 })
}

fn correlation(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Pass,
    Fail,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub kind: ExperimentKind,
    /// Column names of `points`; the first column is the scale.
    pub columns: Vec<String>,
    pub points: Vec<Vec<f64>>,
    pub fit: Option<Fit>,
    pub expected_slope: Option<f64>,
    /// Experiment-specific summary (spread, growth or correlation).
    pub statistic: Option<f64>,
    pub outcome: Outcome,
    pub pass: bool,
    pub note: String,
}

impl ExperimentReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.points {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:?}")).collect();
            out += &cells.join(",");
            out.push('\n');
        }
        out
    }

    /// Aligned human-readable table with the verdict underneath.
    pub fn to_text(&self) -> String {
        let width = 16;
        let mut out = format!("{} ({:?})\n", self.name, self.kind);
        for c in &self.columns {
            let _ = write!(out, "{c:>width$}");
        }
        out.push('\n');
        for row in &self.points {
            for x in row {
                let _ = write!(out, "{:>width$}", format!("{x:.6e}"));
            }
            out.push('\n');
        }
        if let Some(f) = &self.fit {
            let _ = writeln!(out, "slope {:.4} +/- {:.4}  (R^2 {:.4})", f.slope, f.slope_stderr, f.r2);
        }
        if let Some(e) = self.expected_slope {
            let _ = writeln!(out, "expected slope {e:.4}");
        }
        if let Some(s) = self.statistic {
            let _ = writeln!(out, "statistic {s:.4}");
        }
        let _ = writeln!(out, "outcome {:?}: {}", self.outcome, self.note);
        out
    }
}

/// Runs one experiment.
pub fn run(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    match spec.kind {
        ExperimentKind::ChiNormDecay => chi_norm_decay(spec),
        ExperimentKind::IntervalShrink => interval_shrink(spec),
        ExperimentKind::ScalingLaw => scaling_law(spec),
        ExperimentKind::Poincare => poincare(spec),
        ExperimentKind::MultiplierEquicontinuity => multiplier_equicontinuity(spec),
        ExperimentKind::ProductContinuity => product_continuity(spec),
    }
}

/// Runs independent experiments on separate threads; results keep the
/// input order.
pub fn run_all(specs: &[ExperimentSpec]) -> Vec<Result<ExperimentReport>> {
    std::thread::scope(|scope| {
        let handles: Vec<_> = specs.iter().map(|s| scope.spawn(move || run(s))).collect();
        handles.into_iter().map(|h| h.join().expect("experiment thread panicked")).collect()
    })
}

fn grid_of(spec: &ExperimentSpec) -> Result<Grid> {
    Grid::new(spec.horizon, spec.n)
}

/// Verdict for a slope that should lie in `[e - below, e + above]`.
fn slope_verdict(fit: Option<Fit>, expected: f64, tol: &Tolerance) -> (Outcome, String) {
    match fit {
        None => (Outcome::Inconclusive, "not enough positive points to fit".into()),
        Some(f) => {
            let lo = expected - tol.slope_below;
            let hi = expected + tol.slope_above;
            let inside = f.slope >= lo && f.slope <= hi;
            let range = format!("slope {:.4} vs admissible [{lo:.4}, {hi:.4}]", f.slope);
            if f.r2 < tol.min_r2 {
                (Outcome::Inconclusive, format!("{range}; R^2 {:.4} below {}", f.r2, tol.min_r2))
            } else if inside {
                (Outcome::Pass, range)
            } else {
                (Outcome::Fail, range)
            }
        }
    }
}

fn report(
    spec: &ExperimentSpec,
    columns: &[&str],
    points: Vec<Vec<f64>>,
    fit: Option<Fit>,
    expected_slope: Option<f64>,
    statistic: Option<f64>,
    verdict: (Outcome, String),
) -> ExperimentReport {
    ExperimentReport {
        name: spec.name.clone(),
        kind: spec.kind,
        columns: columns.iter().map(|c| c.to_string()).collect(),
        points,
        fit,
        expected_slope,
        statistic,
        pass: verdict.0 == Outcome::Pass,
        outcome: verdict.0,
        note: verdict.1,
    }
}

fn chi_norm_decay(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let idx = spec.indices[0];
    let eps = idx.inv_p() - idx.s;
    if eps < 0.0 || !idx.is_multiplier_range() {
        return Err(idx.unsupported("need s = 1/m - eps with eps >= 0 inside the multiplier range"));
    }
    let grid = grid_of(spec)?;
    let one = Signal::constant(grid, &[1.0]);
    let mut points = Vec::new();
    for &frac in &spec.scales {
        let t = grid.snap(frac);
        let norm = besov_norm_line(&zero_extend(&one, t)?, &idx)?;
        points.push(vec![t, norm]);
    }
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let fit = fit_loglog(&xs, &ys);
    let verdict = slope_verdict(fit, eps, &spec.tolerance);
    Ok(report(spec, &["t", "norm"], points, fit, Some(eps), None, verdict))
}

fn random_modes(rng: &mut impl Rng) -> usize {
    rng.gen_range(1..=8)
}

fn interval_shrink(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (sigma, s) = (spec.indices[0], spec.indices[1]);
    if !(s.is_multiplier_range() && sigma.is_multiplier_range() && s.s <= sigma.s) || s.p != sigma.p || s.q != sigma.q {
        return Err(s.unsupported("need -1/p' < s <= sigma < 1/p with a common (p, q)"));
    }
    let grid = grid_of(spec)?;
    let mut rng = stream(spec.seed, &spec.name);
    let family: Vec<Signal> = (0..spec.samples)
        .map(|_| {
            let m = random_modes(&mut rng);
            let offset = rng.gen_range(-1.0..1.0);
            band_limited(grid, 1, m, 1.0, &mut rng).add(&Signal::constant(grid, &[offset])).expect("same grid")
        })
        .collect();
    let mut points = Vec::new();
    for &frac in &spec.scales {
        let t = grid.snap(frac);
        let mut ratios = Vec::with_capacity(family.len());
        for u in &family {
            let num = besov_norm_interval(u, t, &s)?;
            let den = besov_norm_interval(u, t, &sigma)?;
            if den > 0.0 {
                ratios.push(num / den);
            }
        }
        let max = ratios.iter().copied().fold(0.0, f64::max);
        points.push(vec![t, max, median(&ratios)]);
    }
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let fit = fit_loglog(&xs, &ys);
    let expected = sigma.s - s.s;
    let verdict = slope_verdict(fit, expected, &spec.tolerance);
    Ok(report(spec, &["t", "max_ratio", "median_ratio"], points, fit, Some(expected), None, verdict))
}

/// Gaussian-modulated carrier centred at `tau = 0`, dilated by `lambda`.
fn wave_packet(window: Window, lambda: f64, width: f64, carrier: f64) -> ExtendedSignal {
    let length = window.length();
    ExtendedSignal::from_fn(window, 1, |tau, out| {
        let x = lambda * tau / length;
        out[0] = (-0.5 * (x / width).powi(2)).exp() * (2.0 * PI * carrier * x).cos();
    })
}

fn scaling_law(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let idx = spec.indices[0];
    let up = spec.scales.iter().all(|l| *l >= 1.0);
    let down = spec.scales.iter().all(|l| *l <= 1.0);
    if !(up && idx.s > 0.0 || down && idx.s < 0.0) {
        return Err(idx.unsupported("dilations need s > 0 with lambda >= 1, or s < 0 with lambda <= 1"));
    }
    let window = grid_of(spec)?.window();
    let len = window.len as f64;
    // envelope width (fraction of the window) and carrier (cycles per
    // window) at lambda = 1, chosen so the extreme dilation stays resolved
    // and well separated from zero frequency
    let (width, carrier) = if up { (1.0 / 64.0, len / 128.0) } else { (1.0 / 256.0, len / 16.0) };
    let mut points = Vec::new();
    for &lambda in &spec.scales {
        let u = wave_packet(window, lambda, width, carrier);
        points.push(vec![lambda, besov_norm_line(&u, &idx)?]);
    }
    let xs: Vec<f64> = points.iter().map(|p| p[0]).collect();
    let ys: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let fit = fit_loglog(&xs, &ys);
    let expected = idx.s - idx.inv_p();
    let verdict = slope_verdict(fit, expected, &spec.tolerance);
    Ok(report(spec, &["lambda", "norm"], points, fit, Some(expected), None, verdict))
}

fn poincare(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let idx = spec.indices[0];
    if !(idx.inv_p() < idx.s && idx.s < 1.0) {
        return Err(idx.unsupported("the uniform Poincare inequality is checked for 1/p < s < 1"));
    }
    let lower = idx.with_s(idx.s - 1.0);
    let grid = grid_of(spec)?;
    let mut rng = stream(spec.seed, &spec.name);
    let family: Vec<(Signal, Signal)> = (0..spec.samples)
        .map(|_| {
            let m = random_modes(&mut rng);
            let u = band_limited_from_zero(grid, 1, m, 1.0, &mut rng);
            let du = u.discrete_derivative().expect("grid has enough nodes");
            (u, du)
        })
        .collect();
    let mut points = Vec::new();
    let mut reference = None;
    let mut worst = 0.0f64;
    for &lambda in &spec.scales {
        let t = grid.snap(lambda);
        let mut ratios = Vec::new();
        for (u, du) in &family {
            let num = besov_norm_interval(u, t, &idx)?;
            let den = besov_norm_interval(du, t, &lower)?;
            if num > 0.0 && den > 0.0 {
                ratios.push(num / den);
            }
        }
        if ratios.is_empty() {
            continue;
        }
        let med = median(&ratios);
        let max = ratios.iter().copied().fold(0.0, f64::max);
        if reference.is_none() {
            reference = Some(med);
        }
        worst = worst.max(max);
        points.push(vec![lambda, t, med, max]);
    }
    let tol = &spec.tolerance;
    let verdict = match reference {
        None => (Outcome::Inconclusive, "every sample was degenerate".to_string()),
        Some(r) => {
            let spread = worst / r;
            let msg = format!("max ratio / reference median = {spread:.4} (bound {})", tol.ratio_bound);
            (if spread <= tol.ratio_bound { Outcome::Pass } else { Outcome::Fail }, msg)
        }
    };
    let statistic = reference.map(|r| worst / r);
    Ok(report(spec, &["lambda", "t", "median_ratio", "max_ratio"], points, None, None, statistic, verdict))
}

/// Random line signal with spectrum below `2^{j_max - 2}`, optionally
/// concentrated near `[0, t]`.
fn random_line_signal(window: Window, t: Option<f64>, rng: &mut impl Rng) -> ExtendedSignal {
    let len = window.len;
    let top = 1usize << (j_max_for(len) - 2);
    let nmax = rng.gen_range(1..=top);
    let decay = rng.gen_range(0.0..2.0);
    let mut spectrum = vec![Complex64::new(0.0, 0.0); len];
    for k in 0..=nmax {
        let a = rng.gen_range(-1.0..1.0) / (1.0 + k as f64).powf(decay);
        let z = Complex64::from_polar(a, rng.gen_range(0.0..2.0 * PI));
        if k == 0 {
            spectrum[0] = Complex64::new(z.re, 0.0);
        } else {
            spectrum[k] += 0.5 * z;
            spectrum[len - k] += 0.5 * z.conj();
        }
    }
    FftPlanner::new().plan_fft_inverse(len).process(&mut spectrum);
    let mut vals: Vec<f64> = spectrum.iter().map(|z| z.re).collect();
    if let Some(t) = t {
        // smooth bump equal to one on [-t/2, 3t/2], vanishing beyond [-t, 2t]
        for (i, v) in vals.iter_mut().enumerate() {
            let d = (window.time(i) - 0.5 * t).abs();
            *v *= if d <= t { 1.0 } else { 1.0 - crate::special::smooth_step((d - t) / (0.5 * t)) };
        }
    }
    ExtendedSignal::new(window, 1, vals).expect("window layout")
}

fn multiplier_equicontinuity(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let idx = spec.indices[0];
    let control = !idx.is_multiplier_range();
    let grid = grid_of(spec)?;
    let window = grid.window();
    let mut rng = stream(spec.seed, &spec.name);
    let mut points = Vec::new();
    for &frac in &spec.scales {
        let t = grid.snap(frac);
        let cut = window.origin + grid.index_of(t)?;
        let mut best = 0.0f64;
        for i in 0..spec.samples {
            let localized = if i % 2 == 0 { Some(t) } else { None };
            let phi = random_line_signal(window, localized, &mut rng);
            let mut cutoff = phi.clone();
            for (k, v) in cutoff.values_mut().iter_mut().enumerate() {
                if k < window.origin || k >= cut {
                    *v = 0.0;
                }
            }
            let den = besov_norm_line(&phi, &idx)?;
            if den > 0.0 {
                best = best.max(besov_norm_line(&cutoff, &idx)? / den);
            }
        }
        points.push(vec![t, best]);
    }
    let est: Vec<f64> = points.iter().map(|p| p[1]).collect();
    let tol = &spec.tolerance;
    let (stat, verdict) = if control {
        let growth = est[est.len() - 1] / est[0];
        let ok = growth >= tol.growth_min;
        let msg = format!(
            "control outside the multiplier range: growth {growth:.4} from largest to smallest t (need >= {})",
            tol.growth_min
        );
        (growth, (if ok { Outcome::Pass } else { Outcome::Fail }, msg))
    } else {
        let max = est.iter().copied().fold(0.0, f64::max);
        let min = est.iter().copied().fold(f64::INFINITY, f64::min);
        let spread = max / min;
        let msg = format!("spread {spread:.4} across t (bound {})", tol.ratio_bound);
        (spread, (if spread <= tol.ratio_bound { Outcome::Pass } else { Outcome::Fail }, msg))
    };
    Ok(report(spec, &["t", "norm_estimate"], points, None, None, Some(stat), verdict))
}

fn product_continuity(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    let (sigma, s) = (spec.indices[0], spec.indices[1]);
    check_product_indices(&sigma, &s)?;
    let grid = grid_of(spec)?;
    let horizon = grid.horizon();
    let mut rng = stream(spec.seed, &spec.name);
    let mut points = Vec::new();
    for i in 0..spec.samples {
        let psi_modes = rng.gen_range(1..=64);
        let psi_scale = 10f64.powf(rng.gen_range(-1.0..1.0));
        let u_modes = random_modes(&mut rng);
        let u_scale = 10f64.powf(rng.gen_range(-1.0..1.0));
        let psi = band_limited(grid, 1, psi_modes, psi_scale, &mut rng);
        let u = band_limited(grid, 1, u_modes, u_scale, &mut rng);
        let prod = multiply(&psi, &u, &sigma, &s)?;
        let np = interval_or_line(&psi, horizon, &sigma)?;
        let nu = interval_or_line(&u, horizon, &s)?;
        let nprod = interval_or_line(&prod, horizon, &sigma)?;
        if np > 0.0 && nu > 0.0 {
            points.push(vec![i as f64, np * nu, nprod / (np * nu)]);
        }
    }
    let size: Vec<f64> = points.iter().map(|p| p[1].ln()).collect();
    let ratio: Vec<f64> = points.iter().map(|p| p[2].ln()).collect();
    let corr = correlation(&size, &ratio);
    let max = points.iter().map(|p| p[2]).fold(0.0, f64::max);
    let tol = &spec.tolerance;
    let msg = format!("correlation {corr:.4} (bound {}), largest ratio {max:.4}", tol.correlation);
    let verdict = (if corr.abs() <= tol.correlation { Outcome::Pass } else { Outcome::Fail }, msg);
    Ok(report(spec, &["sample", "factor_norms", "ratio"], points, None, None, Some(corr), verdict))
}

/// Interval norm when the index admits one, otherwise the norm of the
/// `Q`-extension.
fn interval_or_line(u: &Signal, t: f64, idx: &BesovIndex) -> Result<f64> {
    match besov_norm_interval(u, t, idx) {
        Err(Error::UnsupportedIndex { .. }) => besov_norm_line(&crate::grid::q_extend(u, t)?, idx),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_recovers_power_law() {
        let xs: Vec<f64> = (0..6).map(|k| 0.5f64.powi(k)).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powf(0.7)).collect();
        let f = fit_loglog(&xs, &ys).unwrap();
        assert!((f.slope - 0.7).abs() < 1e-12);
        assert!((f.intercept - 3f64.ln()).abs() < 1e-12);
        assert!((f.r2 - 1.0).abs() < 1e-12);
        assert!(fit_loglog(&[1.0], &[1.0]).is_none());
    }

    #[test]
    fn validation_rejects_bad_specs() {
        let ok = ExperimentSpec::chi_norm_decay(2.0, 0.25).with_grid(256, 1.0);
        assert!(ok.validate().is_ok());
        assert!(ok.clone().with_samples(5).validate().is_err());
        let mut s = ok.clone();
        s.scales = vec![1.0, 0.4, 0.2];
        assert!(s.validate().is_err());
        let mut s = ok;
        s.indices.push(s.indices[0]);
        assert!(s.validate().is_err());
    }

    #[test]
    fn zero_eps_gives_flat_norms() {
        let spec = ExperimentSpec::chi_norm_decay(2.0, 0.0).with_grid(1024, 1.0);
        let spec = ExperimentSpec { indices: vec![BesovIndex { s: 0.4999, p: 2.0, q: f64::INFINITY }], ..spec };
        let r = run(&spec).unwrap();
        assert!(r.fit.unwrap().slope.abs() < 0.1, "{:?}", r.fit);
    }

    #[test]
    fn equal_indices_give_unit_ratio() {
        let mut spec = ExperimentSpec::interval_shrink(0.2, 0.2, 2.0, 2.0).with_grid(256, 1.0).with_samples(10);
        spec.scales = dyadic(3, 1.0);
        let r = run(&spec).unwrap();
        assert!(r.points.iter().all(|p| (p[1] - 1.0).abs() < 1e-12));
    }

    #[test]
    fn reports_are_reproducible_and_render() {
        let spec = ExperimentSpec::poincare(0.6, 2.0, 2.0).with_grid(256, 1.0).with_samples(10).with_seed(9);
        let a = run(&spec).unwrap();
        let b = run(&spec).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        assert!(a.to_csv().starts_with("lambda,t,median_ratio,max_ratio\n"));
        assert!(a.to_text().contains("outcome"));
    }

    #[test]
    fn dilation_slope_vanishes_at_critical_smoothness() {
        let spec = ExperimentSpec::scaling_law(0.5, 2.0).with_grid(1024, 1.0);
        let r = run(&spec).unwrap();
        assert!(r.fit.unwrap().slope.abs() < 0.15, "{:?}", r.fit);
    }

    #[test]
    fn constant_factor_products_have_no_trend() {
        let spec = ExperimentSpec::product_continuity(-0.2, 0.8, 2.0, 2.0).with_grid(256, 1.0);
        let r = run(&spec).unwrap();
        assert!(r.statistic.unwrap().abs() <= 1.0);
    }
}
