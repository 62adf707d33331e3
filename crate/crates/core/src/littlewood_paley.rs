//! Discrete Littlewood-Paley analysis on the periodization window.
//!
//! Frequencies are measured in cycles per window (`nu = |k|` for DFT bin
//! `k`). The low-pass profile `chi` equals 1 for `nu <= 1.10` and 0 for
//! `nu >= 1.20` (a `C^inf` transition), and the blocks are
//!
//! ```text
//! Delta_{-1} = chi(D),  Delta_j = chi(D / 2^{j+1}) - chi(D / 2^j)  (0 <= j < J),
//! Delta_J    = 1 - chi(D / 2^J)
//! ```
//!
//! so that `sum_j Delta_j = 1` exactly and block `j` is supported in
//! `[1.10 * 2^j, 2.40 * 2^j]`, inside the classical annulus
//! `[3/4 * 2^j, 8/3 * 2^j]`. The transition is kept narrow so that block
//! energies nearly add up to the `L^2` energy; only neighbouring blocks
//! overlap, which makes the near-diagonal pairing reproduce the discrete
//! `L^2` inner product.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::grid::{q_extend, zero_extend, ExtendedSignal, Signal, ValueShape, Window};
use crate::special::smooth_step;

const CHI_FLAT: f64 = 1.10;
const CHI_ZERO: f64 = 1.20;

/// Smoothness / integrability / fine index `(s, p, q)`; `p` and `q` may be
/// `f64::INFINITY`.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesovIndex {
    pub s: f64,
    #[serde(with = "extended_real")]
    pub p: f64,
    #[serde(with = "extended_real")]
    pub q: f64,
}

impl BesovIndex {
    pub fn new(s: f64, p: f64, q: f64) -> Result<Self> {
        let idx = BesovIndex { s, p, q };
        idx.validate()?;
        Ok(idx)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x >= 1.0 && !x.is_nan();
        if !self.s.is_finite() || !ok(self.p) || !ok(self.q) {
            return Err(self.unsupported("need s finite and p, q in [1, inf]"));
        }
        Ok(())
    }

    /// `1/p`, zero for `p = inf`.
    pub fn inv_p(&self) -> f64 {
        1.0 / self.p
    }

    /// `1/p'` where `1/p + 1/p' = 1`.
    pub fn inv_p_conj(&self) -> f64 {
        1.0 - self.inv_p()
    }

    /// `-1/p' < s < 1/p`: characteristic functions of intervals multiply
    /// `B^s_{p,q}` boundedly.
    pub fn is_multiplier_range(&self) -> bool {
        -self.inv_p_conj() < self.s && self.s < self.inv_p()
    }

    /// `1/p < s < 1 + 1/p`.
    pub fn is_supercritical(&self) -> bool {
        self.inv_p() < self.s && self.s < 1.0 + self.inv_p()
    }

    pub fn with_s(&self, s: f64) -> Self {
        BesovIndex { s, ..*self }
    }

    pub(crate) fn unsupported(&self, reason: &str) -> Error {
        Error::UnsupportedIndex { s: self.s, p: self.p, q: self.q, reason: reason.to_string() }
    }
}

/// Serializes `f64::INFINITY` as the string `"inf"` and accepts either a
/// number or `"inf"`.
pub mod extended_real {
    use serde::{de, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        if x.is_infinite() && *x > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*x)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Num(x) => Ok(x),
            Raw::Text(t) => parse(&t).ok_or_else(|| de::Error::custom(format!("expected a number or \"inf\", got \"{t}\""))),
        }
    }

    pub fn parse(t: &str) -> Option<f64> {
        match t.trim().to_ascii_lowercase().as_str() {
            "inf" | "infinity" | "+inf" => Some(f64::INFINITY),
            other => other.parse::<f64>().ok().filter(|x| x.is_finite()),
        }
    }
}

/// Littlewood-Paley blocks `Delta_j u`, `j = -1 ..= j_max`.
#[derive(Debug, Clone)]
pub struct DyadicAnalysis {
    window: Window,
    dim: usize,
    shape: ValueShape,
    j_max: i32,
    blocks: Vec<Vec<f64>>,
}

impl DyadicAnalysis {
    pub fn j_max(&self) -> i32 {
        self.j_max
    }

    pub fn window(&self) -> &Window {
        &self.window
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Node-major values of `Delta_j u`.
    pub fn block(&self, j: i32) -> &[f64] {
        &self.blocks[(j + 1) as usize]
    }

    pub fn block_signal(&self, j: i32) -> ExtendedSignal {
        let mut e = ExtendedSignal::new(self.window, self.dim, self.block(j).to_vec())
            .expect("block layout matches window");
        e.set_shape(self.shape);
        e
    }

    /// `S_j u = sum_{k <= j-1} Delta_k u` (zero for `j <= -1`).
    pub fn partial_sum(&self, j: i32) -> Vec<f64> {
        let mut acc = vec![0.0; self.window.len * self.dim];
        for k in -1..j.min(self.j_max + 1) {
            acc.iter_mut().zip(self.block(k)).for_each(|(a, b)| *a += b);
        }
        acc
    }

    /// `sum_j Delta_j u`.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.partial_sum(self.j_max + 1)
    }

    /// `||Delta_j u||_{L^p}` for every block, rectangle rule.
    pub fn block_norms(&self, p: f64) -> Vec<(i32, f64)> {
        (-1..=self.j_max)
            .map(|j| (j, crate::grid::lp_norm_nodes(self.block(j), self.dim, self.window.h, p)))
            .collect()
    }

    /// `|| (2^{js} ||Delta_j u||_{L^p})_j ||_{l^q}`.
    pub fn besov_norm(&self, idx: &BesovIndex) -> f64 {
        let weighted = self
            .block_norms(idx.p)
            .into_iter()
            .map(|(j, x)| 2f64.powf(j as f64 * idx.s) * x);
        lq_sum(weighted, idx.q)
    }
}

fn lq_sum(xs: impl Iterator<Item = f64>, q: f64) -> f64 {
    if q.is_infinite() {
        xs.fold(0.0, f64::max)
    } else {
        xs.map(|x| x.powf(q)).sum::<f64>().powf(1.0 / q)
    }
}

/// Finest block index for a window of `len` nodes.
pub fn j_max_for(len: usize) -> i32 {
    (len / 2).trailing_zeros() as i32 - 1
}

/// Frequency multipliers of the blocks, one row per `j = -1 ..= j_max`.
pub(crate) fn filter_bank(len: usize) -> Vec<Vec<f64>> {
    let j_max = j_max_for(len);
    let chi = |nu: f64| 1.0 - smooth_step((nu - CHI_FLAT) / (CHI_ZERO - CHI_FLAT));
    let nu = |k: usize| k.min(len - k) as f64;
    // scaled[j][k] = chi(nu_k / 2^j), j = 0..=j_max
    let scaled: Vec<Vec<f64>> = (0..=j_max)
        .map(|j| {
            let s = 2f64.powi(j);
            (0..len).map(|k| chi(nu(k) / s)).collect()
        })
        .collect();
    let mut bank = Vec::with_capacity(j_max as usize + 2);
    bank.push(scaled[0].clone());
    for j in 0..j_max as usize {
        bank.push(scaled[j + 1].iter().zip(&scaled[j]).map(|(a, b)| a - b).collect());
    }
    bank.push(scaled[j_max as usize].iter().map(|c| 1.0 - c).collect());
    bank
}

struct Fourier {
    len: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl Fourier {
    fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fourier { len, fwd: planner.plan_fft_forward(len), inv: planner.plan_fft_inverse(len) }
    }

    /// Spectrum of each component of a node-major array.
    fn spectra(&self, values: &[f64], dim: usize) -> Vec<Vec<Complex64>> {
        (0..dim)
            .map(|j| {
                let mut buf: Vec<Complex64> = values
                    .iter()
                    .skip(j)
                    .step_by(dim)
                    .map(|&x| Complex64::new(x, 0.0))
                    .collect();
                self.fwd.process(&mut buf);
                buf
            })
            .collect()
    }

    /// Applies a real multiplier to per-component spectra and returns
    /// node-major values.
    fn synthesize(&self, spectra: &[Vec<Complex64>], mult: &[f64]) -> Vec<f64> {
        let dim = spectra.len();
        let mut out = vec![0.0; self.len * dim];
        let scale = 1.0 / self.len as f64;
        for (j, spec) in spectra.iter().enumerate() {
            if mult.iter().all(|m| *m == 0.0) {
                continue;
            }
            let mut buf: Vec<Complex64> = spec.iter().zip(mult).map(|(z, m)| z * *m).collect();
            self.inv.process(&mut buf);
            for (i, z) in buf.iter().enumerate() {
                out[i * dim + j] = z.re * scale;
            }
        }
        out
    }
}

/// Splits a line signal into its dyadic blocks.
pub fn decompose(u: &ExtendedSignal) -> DyadicAnalysis {
    let window = *u.window();
    let fourier = Fourier::new(window.len);
    let spectra = fourier.spectra(u.values(), u.dim());
    let blocks = filter_bank(window.len).iter().map(|m| fourier.synthesize(&spectra, m)).collect();
    DyadicAnalysis { window, dim: u.dim(), shape: u.shape(), j_max: j_max_for(window.len), blocks }
}

pub fn besov_norm_line(u: &ExtendedSignal, idx: &BesovIndex) -> Result<f64> {
    idx.validate()?;
    Ok(decompose(u).besov_norm(idx))
}

/// The canonical extension used as a stand-in for the quotient norm on
/// `]0, t[`: zero extension in the multiplier range, `Q_t` in the
/// supercritical range.
pub fn canonical_extension(u: &Signal, t: f64, idx: &BesovIndex) -> Result<ExtendedSignal> {
    idx.validate()?;
    if idx.is_multiplier_range() {
        zero_extend(u, t)
    } else if idx.is_supercritical() {
        q_extend(u, t)
    } else {
        Err(idx.unsupported("interval norms need -1/p' < s < 1/p or 1/p < s < 1 + 1/p"))
    }
}

/// Interval norm `||u||_{B^s_{p,q}(]0, t[)}` through the canonical extension.
pub fn besov_norm_interval(u: &Signal, t: f64, idx: &BesovIndex) -> Result<f64> {
    let ext = canonical_extension(u, t, idx)?;
    Ok(decompose(&ext).besov_norm(idx))
}

/// How two value layouts multiply node by node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum ProductLayout {
    Componentwise(usize),
    ScalarLeft(usize),
    ScalarRight(usize),
    MatVec { rows: usize, cols: usize },
}

impl ProductLayout {
    pub(crate) fn new(a_dim: usize, a_shape: ValueShape, b_dim: usize) -> Result<Self> {
        match a_shape {
            ValueShape::Matrix { rows, cols } if cols == b_dim => {
                Ok(ProductLayout::MatVec { rows, cols })
            }
            ValueShape::Matrix { rows, cols } => Err(Error::Shape(format!(
                "{rows}x{cols} matrix cannot multiply a {b_dim}-vector"
            ))),
            ValueShape::Vector if a_dim == b_dim => Ok(ProductLayout::Componentwise(a_dim)),
            ValueShape::Vector if a_dim == 1 => Ok(ProductLayout::ScalarLeft(b_dim)),
            ValueShape::Vector if b_dim == 1 => Ok(ProductLayout::ScalarRight(a_dim)),
            ValueShape::Vector => {
                Err(Error::Shape(format!("cannot multiply dimensions {a_dim} and {b_dim}")))
            }
        }
    }

    pub(crate) fn out_dim(&self) -> usize {
        match *self {
            ProductLayout::Componentwise(d)
            | ProductLayout::ScalarLeft(d)
            | ProductLayout::ScalarRight(d) => d,
            ProductLayout::MatVec { rows, .. } => rows,
        }
    }

    fn in_dims(&self) -> (usize, usize) {
        match *self {
            ProductLayout::Componentwise(d) => (d, d),
            ProductLayout::ScalarLeft(d) => (1, d),
            ProductLayout::ScalarRight(d) => (d, 1),
            ProductLayout::MatVec { rows, cols } => (rows * cols, cols),
        }
    }

    /// Adds `a * b` for one node into `out`.
    #[inline]
    pub(crate) fn accumulate(&self, a: &[f64], b: &[f64], out: &mut [f64]) {
        match *self {
            ProductLayout::Componentwise(d) => {
                for i in 0..d {
                    out[i] += a[i] * b[i];
                }
            }
            ProductLayout::ScalarLeft(d) => {
                for i in 0..d {
                    out[i] += a[0] * b[i];
                }
            }
            ProductLayout::ScalarRight(d) => {
                for i in 0..d {
                    out[i] += a[i] * b[0];
                }
            }
            ProductLayout::MatVec { rows, cols } => {
                for r in 0..rows {
                    let row = &a[r * cols..(r + 1) * cols];
                    out[r] += row.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
                }
            }
        }
    }

    /// Node-wise product of two node-major arrays with `nodes` entries.
    pub(crate) fn multiply_into(&self, a: &[f64], b: &[f64], nodes: usize, out: &mut [f64]) {
        let (da, db) = self.in_dims();
        let d = self.out_dim();
        for k in 0..nodes {
            self.accumulate(&a[k * da..(k + 1) * da], &b[k * db..(k + 1) * db], &mut out[k * d..(k + 1) * d]);
        }
    }
}

fn check_same_window(a: &ExtendedSignal, b: &ExtendedSignal) -> Result<()> {
    if a.window() != b.window() {
        return Err(Error::Shape("operands live on different windows".into()));
    }
    Ok(())
}

/// The three Bony terms of `a * b`.
#[derive(Debug, Clone)]
pub struct BonyTerms {
    /// `Pi(a, b) = sum_j S_{j-1} a . Delta_j b`
    pub low_high: ExtendedSignal,
    /// `Pi(b, a)` with the product still taken as `a . b`.
    pub high_low: ExtendedSignal,
    /// `R(a, b) = sum_{|j-k| <= 1} Delta_j a . Delta_k b`
    pub remainder: ExtendedSignal,
}

impl BonyTerms {
    pub fn sum(&self) -> ExtendedSignal {
        let mut out = self.low_high.clone();
        for (o, (x, y)) in out
            .values_mut()
            .iter_mut()
            .zip(self.high_low.values().iter().zip(self.remainder.values()))
        {
            *o += x + y;
        }
        out
    }
}

/// Computes all three Bony terms from the block decompositions of `a` and `b`.
pub fn bony_terms(a: &ExtendedSignal, b: &ExtendedSignal) -> Result<BonyTerms> {
    check_same_window(a, b)?;
    let layout = ProductLayout::new(a.dim(), a.shape(), b.dim())?;
    let da = decompose(a);
    let db = decompose(b);
    let window = *a.window();
    let nodes = window.len;
    let d = layout.out_dim();
    let mut low_high = vec![0.0; nodes * d];
    let mut high_low = vec![0.0; nodes * d];
    let mut rem = vec![0.0; nodes * d];
    let j_max = da.j_max();
    // running S_{j-1} for both operands
    let mut sa = vec![0.0; nodes * a.dim()];
    let mut sb = vec![0.0; nodes * b.dim()];
    for j in -1..=j_max {
        if j >= 1 {
            sa.iter_mut().zip(da.block(j - 2)).for_each(|(s, x)| *s += x);
            sb.iter_mut().zip(db.block(j - 2)).for_each(|(s, x)| *s += x);
        }
        layout.multiply_into(&sa, db.block(j), nodes, &mut low_high);
        layout.multiply_into(da.block(j), &sb, nodes, &mut high_low);
        for k in (j - 1).max(-1)..=(j + 1).min(j_max) {
            layout.multiply_into(da.block(j), db.block(k), nodes, &mut rem);
        }
    }
    let wrap = |v: Vec<f64>| ExtendedSignal::new(window, d, v).expect("layout");
    Ok(BonyTerms { low_high: wrap(low_high), high_low: wrap(high_low), remainder: wrap(rem) })
}

/// `Pi(a, b) = sum_{j >= -1} S_{j-1} a . Delta_j b`.
pub fn paraproduct(a: &ExtendedSignal, b: &ExtendedSignal) -> Result<ExtendedSignal> {
    Ok(bony_terms(a, b)?.low_high)
}

/// `R(a, b) = sum_{|j-k| <= 1} Delta_j a . Delta_k b`.
pub fn remainder(a: &ExtendedSignal, b: &ExtendedSignal) -> Result<ExtendedSignal> {
    Ok(bony_terms(a, b)?.remainder)
}

/// Checks the index hypotheses under which `psi * u` is continuous:
/// either `-1/p' < sigma <= 1/p`, `1/p < s <= 1/p + 1`, `sigma + s > 0`
/// (same `p`, `q`), or the Holder regime `p = q = inf`, `s > 1/2`,
/// `sigma > -1/2`.
pub fn check_product_indices(idx_a: &BesovIndex, idx_b: &BesovIndex) -> Result<()> {
    idx_a.validate()?;
    idx_b.validate()?;
    let holder = [idx_a.p, idx_a.q, idx_b.p, idx_b.q].iter().all(|x| x.is_infinite())
        && idx_b.s > 0.5
        && idx_a.s > -0.5;
    if holder {
        return Ok(());
    }
    if idx_a.p != idx_b.p || idx_a.q != idx_b.q {
        return Err(idx_b.unsupported("both factors must share p and q"));
    }
    let (sigma, s) = (idx_a.s, idx_b.s);
    if !(-idx_a.inv_p_conj() < sigma && sigma <= idx_a.inv_p()) {
        return Err(idx_a.unsupported("rough factor needs -1/p' < sigma <= 1/p"));
    }
    if !(idx_b.inv_p() < s && s <= idx_b.inv_p() + 1.0) {
        return Err(idx_b.unsupported("regular factor needs 1/p < s <= 1/p + 1"));
    }
    if sigma + s <= 0.0 {
        return Err(idx_b.unsupported("need sigma + s > 0"));
    }
    Ok(())
}

/// Extension of a full-horizon signal that also keeps the node at `T`.
fn full_extension(u: &Signal) -> Result<ExtendedSignal> {
    q_extend(u, u.grid().horizon())
}

/// Samples of a line signal on the closed image of `[0, T]`.
fn restrict_closed(e: &ExtendedSignal, like: &Signal, dim: usize) -> Result<Signal> {
    let w = e.window();
    let n = like.len();
    let vals = e.values()[w.origin * dim..(w.origin + n) * dim].to_vec();
    Signal::new(*like.grid(), dim, vals)
}

/// Product `a * b` on `[0, T]` computed as the sum of the three Bony terms
/// of (continuous) extensions of both factors, restricted back.
pub fn multiply(a: &Signal, b: &Signal, idx_a: &BesovIndex, idx_b: &BesovIndex) -> Result<Signal> {
    check_product_indices(idx_a, idx_b)?;
    if a.grid() != b.grid() {
        return Err(Error::Shape("factors live on different grids".into()));
    }
    let ea = full_extension(a)?;
    let eb = full_extension(b)?;
    let terms = bony_terms(&ea, &eb)?;
    let sum = terms.sum();
    restrict_closed(&sum, a, sum.dim())
}

/// Multiplier of the near-diagonal correlation
/// `sum_k Delta_k (Delta_{k-1} + Delta_k + Delta_{k+1})`.
fn pairing_multiplier(len: usize) -> Vec<f64> {
    let bank = filter_bank(len);
    let nb = bank.len();
    (0..len)
        .map(|i| {
            (0..nb)
                .map(|k| {
                    let near: f64 = (k.saturating_sub(1)..=(k + 1).min(nb - 1)).map(|m| bank[m][i]).sum();
                    bank[k][i] * near
                })
                .sum()
        })
        .collect()
}

/// Applies the self-adjoint operator `sum_{|k-k'| <= 1} Delta_{k'} Delta_k`,
/// so that `<u, v>_R = int A(u) v`.
pub fn pairing_adjoint(u: &ExtendedSignal) -> ExtendedSignal {
    let window = *u.window();
    let fourier = Fourier::new(window.len);
    let spectra = fourier.spectra(u.values(), u.dim());
    let vals = fourier.synthesize(&spectra, &pairing_multiplier(window.len));
    let mut e = ExtendedSignal::new(window, u.dim(), vals).expect("layout");
    e.set_shape(u.shape());
    e
}

/// The pairing `<u, v>_{]0,t[} = sum_{|k'-k| <= 1} int Delta_k(P_0 u) Delta_{k'}(P_0 v)`.
pub fn pairing(u: &Signal, v: &Signal, idx: &BesovIndex, t: f64) -> Result<Vec<f64>> {
    idx.validate()?;
    if !idx.is_multiplier_range() {
        return Err(idx.unsupported("pairing needs -1/p' < s < 1/p"));
    }
    let eu = zero_extend(u, t)?;
    let ev = zero_extend(v, t)?;
    line_pairing(&eu, &ev)
}

/// `<u, v>_R` for two line signals on the same window.
pub fn line_pairing(eu: &ExtendedSignal, ev: &ExtendedSignal) -> Result<Vec<f64>> {
    check_same_window(eu, ev)?;
    let layout = ProductLayout::new(eu.dim(), eu.shape(), ev.dim())?;
    let du = decompose(eu);
    let dv = decompose(ev);
    let w = *eu.window();
    let j_max = du.j_max();
    let mut acc = vec![0.0; layout.out_dim()];
    let mut prod = vec![0.0; w.len * layout.out_dim()];
    for k in -1..=j_max {
        let mut near = vec![0.0; w.len * ev.dim()];
        for m in (k - 1).max(-1)..=(k + 1).min(j_max) {
            near.iter_mut().zip(dv.block(m)).for_each(|(a, b)| *a += b);
        }
        layout.multiply_into(du.block(k), &near, w.len, &mut prod);
    }
    for chunk in prod.chunks(layout.out_dim()) {
        acc.iter_mut().zip(chunk).for_each(|(a, b)| *a += b);
    }
    acc.iter_mut().for_each(|a| *a *= w.h);
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use std::f64::consts::PI;

    fn grid(n: usize) -> Grid {
        Grid::new(1.0, n).unwrap()
    }

    #[test]
    fn filter_bank_is_a_partition_of_unity() {
        for len in [64, 256, 1024] {
            let bank = filter_bank(len);
            assert_eq!(bank.len() as i32, j_max_for(len) + 2);
            for i in 0..len {
                let s: f64 = bank.iter().map(|b| b[i]).sum();
                assert!((s - 1.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn blocks_only_overlap_with_neighbours() {
        let bank = filter_bank(1024);
        for j in 0..bank.len() {
            for k in j + 2..bank.len() {
                assert!(bank[j].iter().zip(&bank[k]).all(|(a, b)| a * b == 0.0));
            }
        }
        let m = pairing_multiplier(1024);
        assert!(m.iter().all(|x| (x - 1.0).abs() < 1e-14));
    }

    #[test]
    fn block_support_sits_in_annulus() {
        let len = 4096;
        let bank = filter_bank(len);
        for (jj, b) in bank.iter().enumerate().skip(1).take(bank.len() - 2) {
            let j = jj as i32 - 1;
            for (i, w) in b.iter().enumerate() {
                let nu = i.min(len - i) as f64;
                if *w != 0.0 {
                    assert!(nu >= 0.75 * 2f64.powi(j) && nu <= 8.0 / 3.0 * 2f64.powi(j));
                }
            }
        }
    }

    #[test]
    fn zero_signal_has_zero_blocks_and_norm() {
        let u = Signal::zeros(grid(64), 1);
        let e = zero_extend(&u, 1.0).unwrap();
        let a = decompose(&e);
        assert!((-1..=a.j_max()).all(|j| a.block(j).iter().all(|x| *x == 0.0)));
        let idx = BesovIndex::new(0.3, 2.0, 2.0).unwrap();
        assert_eq!(besov_norm_line(&e, &idx).unwrap(), 0.0);
    }

    #[test]
    fn reconstruction_is_exact() {
        let g = grid(256);
        let u = Signal::from_fn(g, 2, |t, o| {
            o[0] = (7.0 * t).sin() + t * t;
            o[1] = if t < 0.3 { 1.0 } else { -2.0 };
        })
        .unwrap();
        let e = zero_extend(&u, g.time(200)).unwrap();
        let a = decompose(&e);
        let r = a.reconstruct();
        let scale = e.values().iter().fold(0.0f64, |m, x| m.max(x.abs()));
        for (x, y) in r.iter().zip(e.values()) {
            assert!((x - y).abs() <= 1e-10 * scale);
        }
    }

    #[test]
    fn constants_live_in_low_block() {
        let w = grid(256).window();
        let e = ExtendedSignal::from_fn(w, 1, |_, o| o[0] = 3.0);
        let a = decompose(&e);
        let low = crate::grid::lp_norm_nodes(a.block(-1), 1, w.h, 2.0);
        for j in 0..=a.j_max() {
            let x = crate::grid::lp_norm_nodes(a.block(j), 1, w.h, 2.0);
            assert!(x <= 1e-12 * low, "block {j}: {x}");
        }
    }

    #[test]
    fn single_block_norm_is_weighted_block_norm() {
        let w = grid(256).window();
        let j0 = 4;
        let nu = 1.5 * 2f64.powi(j0);
        let e = ExtendedSignal::from_fn(w, 1, |tau, o| {
            o[0] = (2.0 * PI * nu * tau / w.length()).cos()
        });
        let a = decompose(&e);
        let idx = BesovIndex::new(0.7, 2.0, 2.0).unwrap();
        let bj = crate::grid::lp_norm_nodes(a.block(j0), 1, w.h, 2.0);
        let norm = a.besov_norm(&idx);
        assert!((norm - 2f64.powf(0.7 * j0 as f64) * bj).abs() < 1e-9 * norm);
    }

    #[test]
    fn supported_index_ranges() {
        let i = BesovIndex::new(0.0, 2.0, 2.0).unwrap();
        assert!(i.is_multiplier_range() && !i.is_supercritical());
        let i = BesovIndex::new(0.75, 2.0, 2.0).unwrap();
        assert!(!i.is_multiplier_range() && i.is_supercritical());
        let i = BesovIndex::new(-0.5, f64::INFINITY, 1.0).unwrap();
        assert!(i.is_multiplier_range());
        assert!(BesovIndex::new(0.0, 0.5, 2.0).is_err());
        let u = Signal::constant(grid(64), &[1.0]);
        let bad = BesovIndex::new(0.5, 2.0, 2.0).unwrap();
        assert!(matches!(besov_norm_interval(&u, 1.0, &bad), Err(Error::UnsupportedIndex { .. })));
    }

    #[test]
    fn unit_step_norm_matches_l2() {
        let g = grid(4096);
        let u = Signal::constant(g, &[1.0]);
        let idx = BesovIndex::new(0.0, 2.0, 2.0).unwrap();
        let norm = besov_norm_interval(&u, g.horizon(), &idx).unwrap();
        let expect = g.horizon().sqrt();
        assert!((norm - expect).abs() <= 0.02 * expect, "{norm} vs {expect}");
    }

    #[test]
    fn remainder_vanishes_for_separated_blocks() {
        let w = grid(256).window();
        let wave = |nu: f64| {
            ExtendedSignal::from_fn(w, 1, move |tau, o| o[0] = (2.0 * PI * nu * tau / w.length()).sin())
        };
        let a = wave(1.5 * 4.0);
        let b = wave(1.5 * 32.0);
        let r = remainder(&a, &b).unwrap();
        assert!(r.values().iter().all(|x| x.abs() < 1e-12));
    }

    #[test]
    fn shape_errors() {
        let g = grid(64);
        let a = zero_extend(&Signal::zeros(g, 2), 1.0).unwrap();
        let b = zero_extend(&Signal::zeros(g, 3), 1.0).unwrap();
        assert!(matches!(paraproduct(&a, &b), Err(Error::Shape(_))));
    }

    #[test]
    fn matrix_vector_products() {
        let g = grid(64);
        let m = Signal::new_matrix(g, 2, 2, (0..64).flat_map(|_| [1.0, 2.0, 0.0, 1.0]).collect()).unwrap();
        let v = Signal::constant(g, &[1.0, 1.0]);
        let sig = BesovIndex::new(0.0, 2.0, 2.0).unwrap();
        let s = BesovIndex::new(0.8, 2.0, 2.0).unwrap();
        let p = multiply(&m, &v, &sig, &s).unwrap();
        assert_eq!(p.dim(), 2);
        for k in 0..64 {
            assert!((p.value(k)[0] - 3.0).abs() < 1e-12);
            assert!((p.value(k)[1] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn product_index_checks() {
        let ok_a = BesovIndex::new(-0.2, 2.0, 2.0).unwrap();
        let ok_b = BesovIndex::new(0.8, 2.0, 2.0).unwrap();
        assert!(check_product_indices(&ok_a, &ok_b).is_ok());
        let neg = BesovIndex::new(-0.45, 2.0, 2.0).unwrap();
        let low = BesovIndex::new(0.4, 2.0, 2.0).unwrap();
        assert!(check_product_indices(&neg, &BesovIndex::new(0.6, 2.0, 2.0).unwrap()).is_ok());
        assert!(check_product_indices(&ok_a, &low).is_err());
        let neg2 = BesovIndex::new(-0.49, 2.0, 2.0).unwrap();
        assert!(check_product_indices(&neg2, &BesovIndex::new(0.45, 2.0, 2.0).unwrap()).is_err());
        let inf = f64::INFINITY;
        let ha = BesovIndex::new(0.3, inf, inf).unwrap();
        let hb = BesovIndex::new(0.8, inf, inf).unwrap();
        assert!(check_product_indices(&ha, &hb).is_ok());
    }

    #[test]
    fn pairing_of_units_is_length() {
        let g = grid(1024);
        let one = Signal::constant(g, &[1.0]);
        let idx = BesovIndex::new(0.0, 2.0, 2.0).unwrap();
        let t = g.time(512);
        let p = pairing(&one, &one, &idx, t).unwrap();
        assert!((p[0] - t).abs() <= 0.01 * t);
        let z = Signal::zeros(g, 1);
        assert_eq!(pairing(&z, &one, &idx, t).unwrap()[0], 0.0);
        let bad = BesovIndex::new(0.7, 2.0, 2.0).unwrap();
        assert!(pairing(&one, &one, &bad, t).is_err());
    }
}
