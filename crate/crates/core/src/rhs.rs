//! Right-hand-side operators `H_T` and the shipped families: pointwise
//! composition, matrix-weighted fractional derivatives, Volterra integrals
//! and finite series `sum_j f_j(u) psi_j`.

use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fractional::{caputo_until, riemann_liouville_until, FractionalOrder};
use crate::grid::{q_extend, Grid, Signal};
use crate::littlewood_paley::{
    besov_norm_interval, canonical_extension, check_product_indices, decompose, BesovIndex,
    ProductLayout,
};
use crate::random::{band_limited, stream};

/// A map `R^d -> R^m` evaluated node by node; writes into the output slice.
pub type PointwiseFn = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;

/// Regularity gap: inputs in `B^{1/p + alpha}`, outputs in `B^{-1/p' + eta}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Gap {
    pub alpha: f64,
    pub eta: f64,
}

impl Gap {
    pub fn new(alpha: f64, eta: f64) -> Result<Self> {
        if !(0.0 < alpha && alpha < eta && eta < 1.0) {
            return Err(Error::Domain(format!("need 0 < alpha < eta < 1, got alpha={alpha}, eta={eta}")));
        }
        Ok(Gap { alpha, eta })
    }

    /// Index of the input class `B^{1/p + alpha}_{p,q}`.
    pub fn input_index(&self, p: f64, q: f64) -> BesovIndex {
        BesovIndex { s: 1.0 / p + self.alpha, p, q }
    }

    /// Index of the output class `B^{-1/p' + eta}_{p,q}`.
    pub fn output_index(&self, p: f64, q: f64) -> BesovIndex {
        BesovIndex { s: 1.0 / p - 1.0 + self.eta, p, q }
    }
}

impl Default for Gap {
    fn default() -> Self {
        Gap { alpha: 0.25, eta: 0.75 }
    }
}

/// Descriptive data attached to every operator.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OperatorMeta {
    pub name: String,
    pub dim: usize,
    /// Declared constant of the Lipschitz estimate, `None` when unknown.
    pub lipschitz_bound: Option<f64>,
    pub gap: Gap,
    pub causal: bool,
    pub base_point: Vec<f64>,
    /// Radius of the ball around `base_point` where the operator is
    /// trusted; may be infinite.
    pub trust_radius: f64,
    /// Whether outputs are distributions rather than continuous functions;
    /// selects the integration rule of the solver.
    pub rough_output: bool,
}

/// The contract every right-hand side satisfies.
pub trait RhsOperator: Send + Sync {
    fn meta(&self) -> &OperatorMeta;

    /// Output on nodes `0..=last`; later nodes are zero.
    fn apply_until(&self, u: &Signal, last: usize) -> Result<Signal>;

    fn apply(&self, u: &Signal) -> Result<Signal> {
        self.apply_until(u, u.len() - 1)
    }
}

/// Caputo or Riemann-Liouville derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeKind {
    Caputo,
    RiemannLiouville,
}

/// Kernel of a Volterra operator.
pub enum Kernel {
    /// Pointwise kernel `kappa(s, t)` sampled on the triangle `s <= t`.
    Smooth(Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
    /// Node table `kappa(t_j, t_k)`, `j <= k`, row `k` holding `k + 1` values.
    Table(Vec<Vec<f64>>),
    /// Rough kernel: for each node `k`, a band-limited representative of
    /// the distribution `kappa(., t_k)` sampled on the grid.
    Rough(Arc<dyn Fn(usize) -> Signal + Send + Sync>),
}

impl fmt::Debug for Kernel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kernel::Smooth(_) => write!(f, "Kernel::Smooth"),
            Kernel::Table(t) => write!(f, "Kernel::Table({} rows)", t.len()),
            Kernel::Rough(_) => write!(f, "Kernel::Rough"),
        }
    }
}

impl Kernel {
    pub fn smooth(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        Kernel::Smooth(Arc::new(f))
    }

    pub fn rough(f: impl Fn(usize) -> Signal + Send + Sync + 'static) -> Self {
        Kernel::Rough(Arc::new(f))
    }

    /// Reads a triangle table with header `s,t,value`; every pair of nodes
    /// `s <= t` of `grid` must be present.
    pub fn from_csv<R: BufRead>(reader: R, grid: &Grid) -> Result<Self> {
        let n = grid.len();
        let mut rows: Vec<Vec<f64>> = (0..n).map(|k| vec![f64::NAN; k + 1]).collect();
        for (line_no, line) in reader.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || line_no == 0 && line.starts_with(|c: char| c.is_alphabetic()) {
                continue;
            }
            let f: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Parse { pos: line_no + 1, msg: e.to_string() })?;
            if f.len() != 3 {
                return Err(Error::Parse { pos: line_no + 1, msg: "expected s,t,value".into() });
            }
            let (j, k) = (grid.index_of(f[0])?, grid.index_of(f[1])?);
            if j > k {
                return Err(Error::Kernel { s: f[0], t: f[1] });
            }
            rows[k][j] = f[2];
        }
        for (k, row) in rows.iter().enumerate() {
            if let Some(j) = row.iter().position(|x| !x.is_finite()) {
                return Err(Error::Kernel { s: grid.time(j), t: grid.time(k) });
            }
        }
        Ok(Kernel::Table(rows))
    }
}

/// One term `f(u) psi` of a series operator.
#[derive(Clone)]
pub struct SeriesTerm {
    pub f: PointwiseFn,
    /// Lipschitz constant of `f`.
    pub lip: f64,
    pub psi: Signal,
    /// Smoothness class `sigma` of `psi` (in `B^sigma_{p,q}`).
    pub sigma: f64,
}

enum Family {
    Composition { f: PointwiseFn },
    FractionalProduct { a: PointwiseFn, order: FractionalOrder, kind: DerivativeKind },
    /// Row `k` holds the quadrature coefficients of `u_0..=u_k`.
    Volterra { h: f64, rows: Vec<Vec<f64>> },
    Series { terms: Vec<(SeriesTerm, ProductLayout)>, summability: f64 },
}

/// A shipped right-hand side.
pub struct Operator {
    meta: OperatorMeta,
    family: Family,
}

impl fmt::Debug for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Operator").field("meta", &self.meta).finish_non_exhaustive()
    }
}

fn base_meta(name: &str, dim: usize, lipschitz_bound: Option<f64>, rough_output: bool) -> OperatorMeta {
    OperatorMeta {
        name: name.to_string(),
        dim,
        lipschitz_bound,
        gap: Gap::default(),
        causal: true,
        base_point: vec![0.0; dim],
        trust_radius: f64::INFINITY,
        rough_output,
    }
}

/// Constant relating `L^2` norms to the interval norms of the gap indices
/// at `p = q = 2`: `||g||_out <= 2^{1/2 - eta} ||g||_2` and
/// `||w||_in >= 2^{-1 - alpha} ||w||_2`.
fn l2_slack(gap: &Gap) -> f64 {
    2f64.powf(1.5 + gap.alpha - gap.eta)
}

/// `H(u) = f(u)` node by node.
pub fn composition_operator(dim: usize, f: PointwiseFn, lip_f: f64) -> Operator {
    let gap = Gap::default();
    let mut meta = base_meta("composition", dim, Some(lip_f * l2_slack(&gap)), false);
    meta.gap = gap;
    Operator { meta, family: Family::Composition { f } }
}

/// `H(u) = A(u) D^beta u` with `A` returning row-major `d x d` matrices.
pub fn fractional_product_operator(
    dim: usize,
    a: PointwiseFn,
    order: FractionalOrder,
    kind: DerivativeKind,
) -> Result<Operator> {
    if order.betas().len() != 1 && order.betas().len() != dim {
        return Err(Error::Shape(format!("{} orders for dimension {dim}", order.betas().len())));
    }
    if kind == DerivativeKind::RiemannLiouville {
        order.check_riemann_liouville()?;
    }
    let name = match kind {
        DerivativeKind::Caputo => "fractional_caputo",
        DerivativeKind::RiemannLiouville => "fractional_riemann_liouville",
    };
    Ok(Operator { meta: base_meta(name, dim, None, true), family: Family::FractionalProduct { a, order, kind } })
}

/// `H(u)(t) = int_0^t kappa(s, t) u(s) ds` on the nodes of `grid`.
///
/// Smooth kernels use the trapezoid rule. Rough kernels use the
/// near-diagonal pairing of the representative with `u 1_{]0, t_k[}`; for
/// this filter bank the pairing coincides with the discrete inner product,
/// so row `k` is `h kappa_k(t_i)`, `i < k`.
pub fn volterra_operator(grid: &Grid, dim: usize, kernel: Kernel) -> Result<Operator> {
    let n = grid.len();
    let h = grid.spacing();
    let mut rows = Vec::with_capacity(n);
    let mut sup = 0.0f64;
    let rough = matches!(kernel, Kernel::Rough(_));
    for k in 0..n {
        let tk = grid.time(k);
        let raw: Vec<f64> = match &kernel {
            Kernel::Smooth(f) => (0..=k).map(|j| f(grid.time(j), tk)).collect(),
            Kernel::Table(t) => t
                .get(k)
                .filter(|r| r.len() == k + 1)
                .cloned()
                .ok_or(Error::Kernel { s: 0.0, t: tk })?,
            Kernel::Rough(f) => {
                let rep = f(k);
                if rep.len() != n || rep.dim() != 1 {
                    return Err(Error::Kernel { s: 0.0, t: tk });
                }
                (0..=k).map(|i| if i < k { rep.value(i)[0] } else { 0.0 }).collect()
            }
        };
        if let Some(j) = raw.iter().position(|x| !x.is_finite()) {
            return Err(Error::Kernel { s: grid.time(j), t: tk });
        }
        sup = raw.iter().fold(sup, |m, x| m.max(x.abs()));
        let row = raw
            .iter()
            .enumerate()
            .map(|(j, x)| {
                let w = if rough || (j > 0 && j < k) { 1.0 } else if k == 0 { 0.0 } else { 0.5 };
                h * w * x
            })
            .collect();
        rows.push(row);
    }
    let gap = Gap::default();
    let bound = if rough { None } else { Some(sup * grid.horizon() * l2_slack(&gap)) };
    let name = if rough { "volterra_rough" } else { "volterra" };
    Ok(Operator { meta: base_meta(name, dim, bound, rough), family: Family::Volterra { h, rows } })
}

/// `H(u) = sum_j f_j(u) psi_j` for a finite list of terms. Every `psi_j`
/// must multiply the input class `B^{1/p + alpha}_{p,q}` continuously.
pub fn series_operator(grid: &Grid, dim: usize, terms: Vec<SeriesTerm>, p: f64, q: f64, gap: Gap) -> Result<Operator> {
    let input = gap.input_index(p, q);
    let mut built = Vec::with_capacity(terms.len());
    let mut summability = 0.0;
    let mut rough = false;
    let zero = vec![0.0; dim];
    for term in terms {
        if term.psi.grid() != grid {
            return Err(Error::Shape("series coefficient lives on another grid".into()));
        }
        let sigma_idx = BesovIndex::new(term.sigma, p, q)?;
        check_product_indices(&sigma_idx, &input)?;
        let layout = ProductLayout::new(term.psi.dim(), term.psi.shape(), dim)?;
        if layout.out_dim() != dim {
            return Err(Error::Shape(format!("term maps into dimension {}, expected {dim}", layout.out_dim())));
        }
        let psi_norm = match besov_norm_interval(&term.psi, grid.horizon(), &sigma_idx) {
            Ok(x) => x,
            Err(_) => decompose(&q_extend(&term.psi, grid.horizon())?).besov_norm(&sigma_idx),
        };
        let mut f0 = vec![0.0; dim];
        (term.f)(&zero, &mut f0);
        let f0_norm = f0.iter().map(|x| x * x).sum::<f64>().sqrt();
        summability += psi_norm * (term.lip + f0_norm);
        rough |= term.sigma < 1.0 / p;
        built.push((term, layout));
    }
    let mut meta = base_meta("series", dim, None, rough);
    meta.gap = gap;
    Ok(Operator { meta, family: Family::Series { terms: built, summability } })
}

impl Operator {
    pub fn with_gap(mut self, gap: Gap) -> Self {
        if let Some(b) = self.meta.lipschitz_bound.as_mut() {
            *b *= l2_slack(&gap) / l2_slack(&self.meta.gap);
        }
        self.meta.gap = gap;
        self
    }

    pub fn with_trust_radius(mut self, radius: f64) -> Self {
        self.meta.trust_radius = radius;
        self
    }

    pub fn with_base_point(mut self, u0: Vec<f64>) -> Self {
        self.meta.base_point = u0;
        self
    }

    /// Replaces the declared constant of the Lipschitz estimate.
    pub fn with_lipschitz_bound(mut self, bound: Option<f64>) -> Self {
        self.meta.lipschitz_bound = bound;
        self
    }

    pub fn with_name(mut self, name: &str) -> Self {
        self.meta.name = name.to_string();
        self
    }

    /// `sum_j ||psi_j|| (lip_j + |f_j(0)|)` for series operators.
    pub fn summability_bound(&self) -> Option<f64> {
        match &self.family {
            Family::Series { summability, .. } => Some(*summability),
            _ => None,
        }
    }
}

fn check_input(u: &Signal, dim: usize) -> Result<()> {
    if u.dim() != dim {
        return Err(Error::Shape(format!("operator expects dimension {dim}, got {}", u.dim())));
    }
    Ok(())
}

fn check_finite(vals: &[f64], dim: usize) -> Result<()> {
    match vals.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Evaluation { node: i / dim }),
        None => Ok(()),
    }
}

impl RhsOperator for Operator {
    fn meta(&self) -> &OperatorMeta {
        &self.meta
    }

    fn apply_until(&self, u: &Signal, last: usize) -> Result<Signal> {
        let d = self.meta.dim;
        check_input(u, d)?;
        let last = last.min(u.len() - 1);
        let mut out = vec![0.0; u.len() * d];
        match &self.family {
            Family::Composition { f } => {
                for k in 0..=last {
                    f(u.value(k), &mut out[k * d..(k + 1) * d]);
                }
            }
            Family::FractionalProduct { a, order, kind } => {
                let deriv = match kind {
                    DerivativeKind::Caputo => caputo_until(u, order, Some(last))?,
                    DerivativeKind::RiemannLiouville => riemann_liouville_until(u, order, Some(last))?.signal,
                };
                let layout = ProductLayout::MatVec { rows: d, cols: d };
                let mut m = vec![0.0; d * d];
                for k in 0..=last {
                    a(u.value(k), &mut m);
                    layout.accumulate(&m, deriv.value(k), &mut out[k * d..(k + 1) * d]);
                }
            }
            Family::Volterra { h, rows } => {
                if u.grid().spacing() != *h || u.len() > rows.len() {
                    return Err(Error::Shape("input grid differs from the kernel grid".into()));
                }
                let vals = u.values();
                for k in 0..=last {
                    let o = &mut out[k * d..(k + 1) * d];
                    for (j, c) in rows[k].iter().enumerate() {
                        for i in 0..d {
                            o[i] += c * vals[j * d + i];
                        }
                    }
                }
            }
            Family::Series { terms, .. } => {
                let mut fu = vec![0.0; d];
                for (term, layout) in terms {
                    if term.psi.len() < u.len() || term.psi.grid().spacing() != u.grid().spacing() {
                        return Err(Error::Shape("input grid differs from the coefficient grid".into()));
                    }
                    for k in 0..=last {
                        fu.iter_mut().for_each(|x| *x = 0.0);
                        (term.f)(u.value(k), &mut fu);
                        layout.accumulate(term.psi.value(k), &fu, &mut out[k * d..(k + 1) * d]);
                    }
                }
            }
        }
        check_finite(&out, d)?;
        u.with_values(out)
    }
}

/// Empirical constant of the Lipschitz estimate over random pairs around
/// the base point, with interval norms at `p = q = 2`.
pub fn probe_lipschitz(op: &dyn RhsOperator, grid: &Grid, samples: usize, radius: f64, seed: u64) -> Result<f64> {
    probe_lipschitz_with(op, grid, samples, radius, seed, 2.0, 2.0)
}

/// [`probe_lipschitz`] for general `(p, q)`.
pub fn probe_lipschitz_with(
    op: &dyn RhsOperator,
    grid: &Grid,
    samples: usize,
    radius: f64,
    seed: u64,
    p: f64,
    q: f64,
) -> Result<f64> {
    if samples < 2 {
        return Err(Error::Domain("need at least two samples".into()));
    }
    let meta = op.meta();
    let radius = if radius.is_finite() { radius } else { 1.0 };
    let out_idx = meta.gap.output_index(p, q);
    let in_idx = meta.gap.input_index(p, q);
    let t = grid.horizon();
    let base = Signal::constant(*grid, &meta.base_point);
    let mut rng = stream(seed, "probe_lipschitz");
    let mut best = 0.0f64;
    for _ in 0..samples {
        let modes = rng.gen_range(1..=8);
        let ru = rng.gen_range(0.0..radius);
        let rv = rng.gen_range(0.0..radius);
        let u = base.add(&band_limited(*grid, meta.dim, modes, ru, &mut rng))?;
        let v = base.add(&band_limited(*grid, meta.dim, modes, rv, &mut rng))?;
        let num_sig = op.apply(&u)?.sub(&op.apply(&v)?)?;
        let num = canonical_norm(&num_sig, t, &out_idx)?;
        let den = canonical_norm(&u.sub(&v)?, t, &in_idx)?;
        if den > 0.0 {
            best = best.max(num / den);
        }
    }
    Ok(best)
}

fn canonical_norm(u: &Signal, t: f64, idx: &BesovIndex) -> Result<f64> {
    Ok(decompose(&canonical_extension(u, t, idx)?).besov_norm(idx))
}

/// Replaces `u` by random values on nodes `cut..` and reports whether the
/// outputs on nodes `..cut` stay bitwise identical.
pub fn causality_holds(op: &dyn RhsOperator, u: &Signal, cut: usize, seed: u64) -> Result<bool> {
    let mut rng = stream(seed, "causality");
    let mut v = u.clone();
    let d = u.dim();
    for x in &mut v.values_mut()[cut * d..] {
        *x += rng.gen_range(-1.0..1.0);
    }
    let a = op.apply(u)?;
    let b = op.apply(&v)?;
    Ok(a.values()[..cut * d] == b.values()[..cut * d])
}
