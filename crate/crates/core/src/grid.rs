//! Uniform-grid signals on `[0, T]` and their extensions to a periodized line.
//!
//! A [`Signal`] samples a function `[0, T] -> R^d` at `n` equispaced nodes
//! `t_k = k h`, `h = T / (n - 1)`. Line-level analysis happens on an
//! [`ExtendedSignal`], which lives on a window of `4 * next_pow2(n)` nodes
//! with the same spacing, identified with a circle. The image of `[0, T]`
//! starts at `origin = len / 4`, so the window covers roughly `[-T, 3T)`.

use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::special::smooth_step;

/// Relative slack used when snapping a time onto the grid.
const ALIGN_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    horizon: f64,
    n: usize,
    h: f64,
}

impl Grid {
    /// A dyadic grid: `n` must be a power of two with `n >= 16`.
    pub fn new(horizon: f64, n: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(Error::Grid(format!("horizon must be positive, got {horizon}")));
        }
        if n < 16 || !n.is_power_of_two() {
            return Err(Error::Grid(format!(
                "node count must be a power of two >= 16, got {n}"
            )));
        }
        Ok(Grid { horizon, n, h: horizon / (n - 1) as f64 })
    }

    /// A grid of `n` nodes with spacing `h` starting at 0. Used for
    /// restrictions and solver windows; not required to be dyadic.
    pub fn with_spacing(h: f64, n: usize) -> Result<Self> {
        if !(h.is_finite() && h > 0.0) || n == 0 {
            return Err(Error::Grid(format!("invalid sub-grid (h={h}, n={n})")));
        }
        Ok(Grid { horizon: (n.max(1) - 1) as f64 * h, n, h })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn spacing(&self) -> f64 {
        self.h
    }

    pub fn is_dyadic(&self) -> bool {
        self.n >= 16 && self.n.is_power_of_two()
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.h
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |k| self.time(k))
    }

    /// Index `k` with `t = k h`, or an alignment error.
    pub fn index_of(&self, t: f64) -> Result<usize> {
        if !t.is_finite() || t < -ALIGN_EPS * self.h {
            return Err(Error::Domain(format!("time {t} is negative or not finite")));
        }
        let x = t / self.h;
        let k = x.round();
        if (x - k).abs() > ALIGN_EPS * x.abs().max(1.0) {
            return Err(Error::Alignment { t, h: self.h });
        }
        Ok(k as usize)
    }

    /// Index of a cut point `t` in `(0, T]`.
    pub fn cut_index(&self, t: f64) -> Result<usize> {
        if !(t > 0.0) || t > self.horizon * (1.0 + ALIGN_EPS) {
            return Err(Error::Domain(format!(
                "cut time {t} outside (0, {}]",
                self.horizon
            )));
        }
        let k = self.index_of(t)?;
        if k == 0 || k >= self.n {
            return Err(Error::Domain(format!("cut time {t} outside the grid")));
        }
        Ok(k)
    }

    /// Node time closest to `frac * T`, never below the first step.
    pub fn snap(&self, frac: f64) -> f64 {
        let k = (frac * (self.n - 1) as f64).round().max(1.0) as usize;
        self.time(k.min(self.n - 1))
    }

    /// Periodization window used by the extensions of signals on this grid.
    pub fn window(&self) -> Window {
        let len = 4 * self.n.next_power_of_two();
        Window { h: self.h, len, origin: len / 4 }
    }
}

/// Layout of the periodization window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Window {
    pub h: f64,
    pub len: usize,
    pub origin: usize,
}

impl Window {
    pub fn time(&self, i: usize) -> f64 {
        (i as f64 - self.origin as f64) * self.h
    }

    /// Total length of the window in time units.
    pub fn length(&self) -> f64 {
        self.len as f64 * self.h
    }

    /// Cutoff equal to 1 on `[-c/2, 3c/2]` and vanishing outside `(-c, 2c)`,
    /// with `c = origin * h`.
    pub fn theta(&self, tau: f64) -> f64 {
        let c = self.origin as f64 * self.h;
        if tau <= -c || tau >= 2.0 * c {
            0.0
        } else if tau < -0.5 * c {
            smooth_step((tau + c) / (0.5 * c))
        } else if tau > 1.5 * c {
            smooth_step((2.0 * c - tau) / (0.5 * c))
        } else {
            1.0
        }
    }
}

/// How the `dim` numbers stored per node are interpreted.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ValueShape {
    Vector,
    /// Row-major `rows x cols` matrix.
    Matrix { rows: usize, cols: usize },
}

/// A function `[0, T] -> R^d` sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Signal {
    grid: Grid,
    dim: usize,
    shape: ValueShape,
    values: Vec<f64>,
}

impl Signal {
    /// Node-major values (`values[k * dim + j]`).
    pub fn new(grid: Grid, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape("dimension must be positive".into()));
        }
        if values.len() != grid.len() * dim {
            return Err(Error::Shape(format!(
                "expected {} values ({} nodes x {dim}), got {}",
                grid.len() * dim,
                grid.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Evaluation { node: i / dim });
        }
        Ok(Signal { grid, dim, shape: ValueShape::Vector, values })
    }

    /// Matrix-valued signal with `rows x cols` entries per node.
    pub fn new_matrix(grid: Grid, rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        let mut s = Signal::new(grid, rows * cols, values)?;
        s.shape = ValueShape::Matrix { rows, cols };
        Ok(s)
    }

    pub fn from_fn(grid: Grid, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Result<Self> {
        let mut values = vec![0.0; grid.len() * dim];
        for (k, chunk) in values.chunks_mut(dim).enumerate() {
            f(grid.time(k), chunk);
        }
        Signal::new(grid, dim, values)
    }

    pub fn scalar_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Signal::from_fn(grid, 1, |t, out| out[0] = f(t))
    }

    pub fn constant(grid: Grid, value: &[f64]) -> Self {
        let dim = value.len();
        let mut values = Vec::with_capacity(grid.len() * dim);
        for _ in 0..grid.len() {
            values.extend_from_slice(value);
        }
        Signal { grid, dim, shape: ValueShape::Vector, values }
    }

    pub fn zeros(grid: Grid, dim: usize) -> Self {
        Signal { grid, dim, shape: ValueShape::Vector, values: vec![0.0; grid.len() * dim] }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> ValueShape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn value(&self, k: usize) -> &[f64] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn value_mut(&mut self, k: usize) -> &mut [f64] {
        let d = self.dim;
        &mut self.values[k * d..(k + 1) * d]
    }

    pub fn component(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.dim).copied().collect()
    }

    /// Same grid and shape, new values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        let mut s = Signal::new(self.grid, self.dim, values)?;
        s.shape = self.shape;
        Ok(s)
    }

    fn check_same(&self, other: &Signal) -> Result<()> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(Error::Shape(format!(
                "signals differ in grid or dimension ({} x {} vs {} x {})",
                self.len(),
                self.dim,
                other.len(),
                other.dim
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &Signal) -> Result<Signal> {
        self.check_same(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect();
        self.with_values(v)
    }

    pub fn sub(&self, other: &Signal) -> Result<Signal> {
        self.check_same(other)?;
        let v = self.values.iter().zip(&other.values).map(|(a, b)| a - b).collect();
        self.with_values(v)
    }

    pub fn scale(&self, c: f64) -> Signal {
        let mut s = self.clone();
        s.values.iter_mut().for_each(|v| *v *= c);
        s
    }

    /// Euclidean norm of the value at each node.
    pub fn pointwise_norms(&self) -> Vec<f64> {
        self.values
            .chunks(self.dim)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.pointwise_norms().into_iter().fold(0.0, f64::max)
    }

    /// `max_k |self(t_k) - other(t_k)|`.
    pub fn sup_distance(&self, other: &Signal) -> Result<f64> {
        Ok(self.sub(other)?.sup_norm())
    }

    /// Rectangle-rule `L^p` norm (`p = inf` gives the max norm).
    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_nodes(&self.values, self.dim, self.grid.spacing(), p)
    }

    /// Centered differences in the interior, second-order one-sided at the ends.
    pub fn discrete_derivative(&self) -> Result<Signal> {
        let n = self.len();
        if n < 3 {
            return Err(Error::Grid("derivative needs at least 3 nodes".into()));
        }
        let d = self.dim;
        let h = self.grid.spacing();
        let mut out = vec![0.0; n * d];
        for j in 0..d {
            let x = |k: usize| self.values[k * d + j];
            out[j] = (-3.0 * x(0) + 4.0 * x(1) - x(2)) / (2.0 * h);
            for k in 1..n - 1 {
                out[k * d + j] = (x(k + 1) - x(k - 1)) / (2.0 * h);
            }
            out[(n - 1) * d + j] = (3.0 * x(n - 1) - 4.0 * x(n - 2) + x(n - 3)) / (2.0 * h);
        }
        self.with_values(out)
    }

    /// Writes `t, x0, x1, ...` rows with shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((0..self.dim).map(|j| format!("x{j}"))).collect();
        writeln!(w, "{}", header.join(", "))?;
        for k in 0..self.len() {
            let mut row = vec![format!("{:?}", self.grid.time(k))];
            row.extend(self.value(k).iter().map(|v| format!("{v:?}")));
            writeln!(w, "{}", row.join(", "))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }

    /// Reads the CSV layout produced by [`Signal::write_csv`]. The time
    /// column must be uniform and start at 0.
    pub fn read_csv<R: BufRead>(r: R) -> Result<Signal> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| Error::Parse { pos: 0, msg: "empty CSV".into() })??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(Error::Parse { pos: 1, msg: "header must be `t, x0, ...`".into() });
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut values = Vec::new();
        for (i, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != dim + 1 {
                return Err(Error::Parse {
                    pos: i + 2,
                    msg: format!("expected {} columns, found {}", dim + 1, fields.len()),
                });
            }
            let parse = |s: &str| {
                s.parse::<f64>()
                    .map_err(|e| Error::Parse { pos: i + 2, msg: format!("`{s}`: {e}") })
            };
            times.push(parse(fields[0])?);
            for f in &fields[1..] {
                values.push(parse(f)?);
            }
        }
        if times.len() < 2 {
            return Err(Error::Parse { pos: 0, msg: "need at least two rows".into() });
        }
        let n = times.len();
        let horizon = times[n - 1];
        let h = horizon / (n - 1) as f64;
        for (k, t) in times.iter().enumerate() {
            if (t - k as f64 * h).abs() > 1e-9 * horizon.abs().max(1.0) {
                return Err(Error::Parse { pos: k + 2, msg: "time column is not uniform from 0".into() });
            }
        }
        let grid = if n >= 16 && n.is_power_of_two() {
            Grid::new(horizon, n)?
        } else {
            Grid::with_spacing(h, n)?
        };
        Signal::new(grid, dim, values)
    }

    pub fn read_csv_file(path: &Path) -> Result<Signal> {
        let f = std::fs::File::open(path)?;
        Signal::read_csv(std::io::BufReader::new(f))
    }
}

pub(crate) fn lp_norm_nodes(values: &[f64], dim: usize, h: f64, p: f64) -> f64 {
    let norms = values.chunks(dim).map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt());
    if p.is_infinite() {
        norms.fold(0.0, f64::max)
    } else if p == 2.0 {
        (h * norms.map(|x| x * x).sum::<f64>()).sqrt()
    } else {
        (h * norms.map(|x| x.powf(p)).sum::<f64>()).powf(1.0 / p)
    }
}

/// A signal on the periodization window of some source grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSignal {
    window: Window,
    dim: usize,
    shape: ValueShape,
    values: Vec<f64>,
}

impl ExtendedSignal {
    pub fn zeros(window: Window, dim: usize) -> Self {
        ExtendedSignal { window, dim, shape: ValueShape::Vector, values: vec![0.0; window.len * dim] }
    }

    pub fn new(window: Window, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 || values.len() != window.len * dim {
            return Err(Error::Shape(format!(
                "window of {} nodes x {dim} needs {} values, got {}",
                window.len,
                window.len * dim,
                values.len()
            )));
        }
        Ok(ExtendedSignal { window, dim, shape: ValueShape::Vector, values })
    }

    /// Samples `f(tau)` on every window node.
    pub fn from_fn(window: Window, dim: usize, mut f: impl FnMut(f64, &mut [f64])) -> Self {
        let mut values = vec![0.0; window.len * dim];
        for (i, chunk) in values.chunks_mut(dim).enumerate() {
            f(window.time(i), chunk);
        }
        ExtendedSignal { window, dim, shape: ValueShape::Vector, values }
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn shape(&self) -> ValueShape {
        self.shape
    }

    pub(crate) fn set_shape(&mut self, shape: ValueShape) {
        self.shape = shape;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn component(&self, j: usize) -> Vec<f64> {
        self.values.iter().skip(j).step_by(self.dim).copied().collect()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        lp_norm_nodes(&self.values, self.dim, self.window.h, p)
    }

    /// Samples on `[a, b)` re-indexed to start at 0.
    pub fn restrict(&self, a: f64, b: f64) -> Result<Signal> {
        restrict(self, a, b)
    }
}

fn extension_shape(u: &Signal, t: f64) -> Result<(Window, usize)> {
    let k = u.grid().cut_index(t)?;
    Ok((u.grid().window(), k))
}

/// Zero extension `P_{0,t}`: equal to `u` on `[0, t)` and zero elsewhere.
pub fn zero_extend(u: &Signal, t: f64) -> Result<ExtendedSignal> {
    let (window, cut) = extension_shape(u, t)?;
    let d = u.dim();
    let mut out = ExtendedSignal::zeros(window, d);
    let start = window.origin * d;
    out.values[start..start + cut * d].copy_from_slice(&u.values()[..cut * d]);
    out.shape = u.shape();
    Ok(out)
}

/// The extension `Q_t(u)(tau) = theta(tau) (<P_{0,t}(u'), chi_{]0,tau[}> + u(0))`.
///
/// The bracket telescopes to `u(min(tau, t)) - u(0)` for `tau >= 0` and to 0
/// for `tau < 0`, so the result is `theta * u(0)` left of the origin,
/// `u` on `[0, t)` and `theta * u(t)` from `t` on. `theta` is exactly 1 on
/// `[0, T]`, which makes the restriction to `[0, t)` reproduce `u` bitwise.
pub fn q_extend(u: &Signal, t: f64) -> Result<ExtendedSignal> {
    let (window, cut) = extension_shape(u, t)?;
    let d = u.dim();
    let mut out = ExtendedSignal::zeros(window, d);
    let first = u.value(0);
    let last = u.value(cut);
    for i in 0..window.len {
        let dst = &mut out.values[i * d..(i + 1) * d];
        if i < window.origin {
            let th = window.theta(window.time(i));
            dst.iter_mut().zip(first).for_each(|(o, v)| *o = th * v);
        } else if i < window.origin + cut {
            dst.copy_from_slice(u.value(i - window.origin));
        } else {
            let th = window.theta(window.time(i));
            dst.iter_mut().zip(last).for_each(|(o, v)| *o = th * v);
        }
    }
    out.shape = u.shape();
    Ok(out)
}

/// Samples of a line signal on `[a, b)`, `0 <= a < b`.
pub fn restrict(u: &ExtendedSignal, a: f64, b: f64) -> Result<Signal> {
    let w = u.window;
    let probe = Grid::with_spacing(w.h, 1)?;
    if !(a >= 0.0 && b > a) {
        return Err(Error::Domain(format!("restriction bounds [{a}, {b}) are not ordered in [0, T]")));
    }
    let ka = probe.index_of(a)?;
    let kb = probe.index_of(b)?;
    if w.origin + kb > w.len || kb <= ka {
        return Err(Error::Domain(format!("restriction bounds [{a}, {b}) leave the window")));
    }
    let d = u.dim;
    let vals = u.values[(w.origin + ka) * d..(w.origin + kb) * d].to_vec();
    let grid = Grid::with_spacing(w.h, kb - ka)?;
    let mut s = Signal::new(grid, d, vals)?;
    s.shape = u.shape;
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> Grid {
        Grid::new(1.0, 64).unwrap()
    }

    #[test]
    fn grid_invariants() {
        let g = grid();
        assert_eq!(g.time(0), 0.0);
        assert!((g.time(63) - 1.0).abs() < 1e-15);
        assert!(Grid::new(1.0, 48).is_err());
        assert!(Grid::new(1.0, 8).is_err());
        assert!(Grid::new(-1.0, 64).is_err());
        let w = g.window();
        assert_eq!(w.len, 256);
        assert!(w.length() >= 3.0 * g.horizon());
    }

    #[test]
    fn zero_extension_of_zero_is_zero() {
        let u = Signal::zeros(grid(), 2);
        let e = zero_extend(&u, grid().time(16)).unwrap();
        assert!(e.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn unit_signal_extends_to_step() {
        let g = grid();
        let u = Signal::constant(g, &[1.0]);
        let t = g.time(32);
        let e = zero_extend(&u, t).unwrap();
        let w = e.window();
        for i in 0..w.len {
            let inside = i >= w.origin && i < w.origin + 32;
            assert_eq!(e.value(i)[0], if inside { 1.0 } else { 0.0 });
        }
        let tail = restrict(&e, t, g.horizon()).unwrap();
        assert!(tail.values().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn alignment_and_domain_errors() {
        let g = grid();
        let u = Signal::constant(g, &[1.0]);
        assert!(matches!(zero_extend(&u, 0.5 * g.spacing()), Err(Error::Alignment { .. })));
        assert!(matches!(zero_extend(&u, 0.0), Err(Error::Domain(_))));
        assert!(matches!(zero_extend(&u, 2.0), Err(Error::Domain(_))));
        assert!(matches!(q_extend(&u, -1.0), Err(Error::Domain(_))));
        let e = zero_extend(&u, 1.0).unwrap();
        assert!(restrict(&e, 0.5, 0.25).is_err());
        assert!(restrict(&e, 0.3 * g.spacing(), 0.5).is_err());
    }

    #[test]
    fn q_extension_of_constant_is_theta_times_constant() {
        let g = grid();
        let u = Signal::constant(g, &[2.5]);
        let e = q_extend(&u, g.time(20)).unwrap();
        let w = *e.window();
        for i in 0..w.len {
            let expect = 2.5 * w.theta(w.time(i));
            assert!((e.value(i)[0] - expect).abs() < 1e-15);
        }
    }

    #[test]
    fn q_extension_of_ramp_saturates_after_cut() {
        let g = grid();
        let u = Signal::scalar_fn(g, |t| t).unwrap();
        let e = q_extend(&u, g.horizon()).unwrap();
        let w = *e.window();
        // cumulative-sum oracle for the bracket <P_{0,T}(u'), chi_{]0,tau[}>
        let du: Vec<f64> = (0..g.len() - 1).map(|k| u.value(k + 1)[0] - u.value(k)[0]).collect();
        for i in 0..w.len {
            let tau = w.time(i);
            let steps = if i < w.origin { 0 } else { (i - w.origin).min(g.len() - 1) };
            let bracket: f64 = du[..steps].iter().sum();
            let expect = w.theta(tau) * (bracket + u.value(0)[0]);
            assert!((e.value(i)[0] - expect).abs() < 1e-12, "node {i}");
        }
    }

    #[test]
    fn theta_profile() {
        let w = grid().window();
        let c = w.origin as f64 * w.h;
        assert_eq!(w.theta(0.0), 1.0);
        assert_eq!(w.theta(c), 1.0);
        assert_eq!(w.theta(-c), 0.0);
        assert_eq!(w.theta(2.0 * c), 0.0);
        assert!(w.theta(-0.75 * c) > 0.0 && w.theta(-0.75 * c) < 1.0);
    }

    #[test]
    fn csv_round_trip() {
        let g = grid();
        let u = Signal::from_fn(g, 2, |t, o| {
            o[0] = (3.0 * t).sin();
            o[1] = 1.0 / 3.0 + t;
        })
        .unwrap();
        let text = u.to_csv_string();
        assert!(text.starts_with("t, x0, x1\n"));
        let back = Signal::read_csv(text.as_bytes()).unwrap();
        assert_eq!(back, u);
    }

    #[test]
    fn derivative_of_quadratic_is_exact() {
        let g = grid();
        let u = Signal::scalar_fn(g, |t| t * t).unwrap();
        let du = u.discrete_derivative().unwrap();
        for k in 0..g.len() {
            assert!((du.value(k)[0] - 2.0 * g.time(k)).abs() < 1e-10);
        }
    }
}
