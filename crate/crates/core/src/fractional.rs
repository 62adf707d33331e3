//! Abel integrals `J^{1-beta}` and the Caputo / Riemann-Liouville
//! derivatives built on them.
//!
//! All operators are causal node by node: output at node `k` only reads
//! input at nodes `0..=k`.

use crate::error::{Error, Result};
use crate::grid::Signal;
use crate::special::gamma;

/// Fractional orders, either one `beta` for every component or one per
/// component.
#[derive(Debug, Clone, PartialEq)]
pub struct FractionalOrder {
    betas: Vec<f64>,
}

impl FractionalOrder {
    pub fn uniform(beta: f64) -> Result<Self> {
        Self::per_component(vec![beta])
    }

    pub fn per_component(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(Error::Domain("at least one order is required".into()));
        }
        for &b in &betas {
            check_beta(b)?;
        }
        Ok(FractionalOrder { betas })
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn beta_star(&self) -> f64 {
        self.betas.iter().copied().fold(f64::MIN, f64::max)
    }

    /// Order used for component `j`.
    pub fn beta(&self, j: usize) -> f64 {
        if self.betas.len() == 1 {
            self.betas[0]
        } else {
            self.betas[j]
        }
    }

    /// Checks the extra restriction `beta_j < 1/2` of Riemann-Liouville
    /// right-hand sides.
    pub fn check_riemann_liouville(&self) -> Result<()> {
        if self.beta_star() >= 0.5 {
            return Err(Error::Domain(format!(
                "Riemann-Liouville right-hand sides need every order below 1/2, got {}",
                self.beta_star()
            )));
        }
        Ok(())
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if self.betas.len() != 1 && self.betas.len() != dim {
            return Err(Error::Shape(format!(
                "{} orders for a {dim}-component signal",
                self.betas.len()
            )));
        }
        Ok(())
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.0 && beta < 1.0) {
        return Err(Error::Domain(format!("order {beta} outside (0, 1)")));
    }
    Ok(())
}

/// `b^e - a^e` for `0 <= a < b` without catastrophic cancellation.
fn pow_diff(a: f64, b: f64, e: f64) -> f64 {
    if a == 0.0 {
        b.powf(e)
    } else {
        a.powf(e) * (e * (b / a).ln()).exp_m1()
    }
}

/// Product-trapezoid weights on unit spacing: `(A_m, B_m)` for `m = 1..=n`,
/// where cell `m` covers distances `[m-1, m]` from the evaluation node and
/// `A_m`, `B_m` multiply the far and near endpoint values.
fn cell_weights(n: usize, beta: f64) -> Vec<(f64, f64)> {
    let e0 = 1.0 - beta;
    let e1 = 2.0 - beta;
    let mut w = Vec::with_capacity(n + 1);
    w.push((0.0, 0.0));
    for m in 1..=n {
        let (a, b) = ((m - 1) as f64, m as f64);
        let i0 = pow_diff(a, b, e0) / e0;
        let i1 = pow_diff(a, b, e1) / e1;
        w.push((i1 - a * i0, b * i0 - i1));
    }
    w
}

/// `J_k` for one component, `k = 0..=last`.
fn abel_component(u: &[f64], h: f64, beta: f64, last: usize) -> Vec<f64> {
    let w = cell_weights(last + 1, beta);
    let scale = h.powf(1.0 - beta);
    // coefficient of u_{k-l}: A_l + B_{l+1}, with the u_0 correction below
    let c: Vec<f64> = (0..=last).map(|l| w[l].0 + w[l + 1].1).collect();
    let mut out = vec![0.0; u.len()];
    for k in 1..=last {
        let mut acc = 0.0;
        for i in 0..=k {
            acc += c[k - i] * u[i];
        }
        acc -= w[k + 1].1 * u[0];
        out[k] = scale * acc;
    }
    out
}

/// Causal backward derivative of node values `f_0..=f_last`.
fn backward_derivative(f: &[f64], h: f64, last: usize) -> Vec<f64> {
    let mut d = vec![0.0; f.len()];
    for k in 1..=last {
        d[k] = match k {
            1 => (f[1] - f[0]) / h,
            2 => (3.0 * f[2] - 4.0 * f[1] + f[0]) / (2.0 * h),
            _ => (11.0 * f[k] - 18.0 * f[k - 1] + 9.0 * f[k - 2] - 2.0 * f[k - 3]) / (6.0 * h),
        };
    }
    d
}

fn componentwise(
    u: &Signal,
    mut f: impl FnMut(&[f64], usize) -> Result<Vec<f64>>,
) -> Result<Signal> {
    let dim = u.dim();
    let mut vals = vec![0.0; u.len() * dim];
    for j in 0..dim {
        let col = f(&u.component(j), j)?;
        for (k, x) in col.into_iter().enumerate() {
            vals[k * dim + j] = x;
        }
    }
    u.with_values(vals)
}

fn last_node(u: &Signal, last: Option<usize>) -> usize {
    last.unwrap_or(u.len() - 1).min(u.len() - 1)
}

/// `(J^{1-beta} u)(t) = int_0^t (t - s)^{-beta} u(s) ds`, integrating the
/// kernel exactly against the piecewise-linear interpolant of `u`.
pub fn abel_integral(u: &Signal, beta: f64) -> Result<Signal> {
    check_beta(beta)?;
    let h = u.grid().spacing();
    let last = u.len() - 1;
    componentwise(u, |col, _| Ok(abel_component(col, h, beta, last)))
}

/// Caputo derivative `(J^{1-beta}(u - u(0)))' / Gamma(1 - beta)`.
pub fn caputo(u: &Signal, order: &FractionalOrder) -> Result<Signal> {
    caputo_until(u, order, None)
}

/// [`caputo`] evaluated on nodes `0..=last` only; later nodes are zero.
pub fn caputo_until(u: &Signal, order: &FractionalOrder, last: Option<usize>) -> Result<Signal> {
    order.check_dim(u.dim())?;
    let h = u.grid().spacing();
    let last = last_node(u, last);
    componentwise(u, |col, j| {
        let beta = order.beta(j);
        let shifted: Vec<f64> = col.iter().map(|x| x - col[0]).collect();
        let ji = abel_component(&shifted, h, beta, last);
        let g = gamma(1.0 - beta);
        Ok(backward_derivative(&ji, h, last).into_iter().map(|x| x / g).collect())
    })
}

/// Riemann-Liouville derivative together with its singularity flag.
#[derive(Debug, Clone)]
pub struct RlDerivative {
    pub signal: Signal,
    /// `true` when `u(0) != 0`, in which case the node at `t = 0` holds the
    /// one-sided value `u(0) h^{-beta} / Gamma(1 - beta)`.
    pub singular_at_origin: bool,
}

/// Riemann-Liouville derivative `(J^{1-beta} u)' / Gamma(1 - beta)`.
pub fn riemann_liouville(u: &Signal, order: &FractionalOrder) -> Result<RlDerivative> {
    riemann_liouville_until(u, order, None)
}

/// [`riemann_liouville`] on nodes `0..=last` only.
pub fn riemann_liouville_until(
    u: &Signal,
    order: &FractionalOrder,
    last: Option<usize>,
) -> Result<RlDerivative> {
    let mut signal = caputo_until(u, order, last)?;
    let h = u.grid().spacing();
    let last = last_node(u, last);
    let dim = u.dim();
    let mut singular = false;
    // J^{1-beta} u = J^{1-beta}(u - u(0)) + u(0) t^{1-beta} / (1-beta), and
    // the second term is differentiated in closed form
    for j in 0..dim {
        let beta = order.beta(j);
        let head = u.value(0)[j] / gamma(1.0 - beta);
        singular |= head != 0.0;
        let vals = signal.values_mut();
        vals[j] = head * h.powf(-beta);
        for k in 1..=last {
            vals[k * dim + j] += head * (k as f64 * h).powf(-beta);
        }
    }
    Ok(RlDerivative { signal, singular_at_origin: singular })
}

/// `max |u(t) - u(t')| / |t - t'|^exponent` over pairs at dyadic node gaps
/// plus the extreme pair.
pub fn holder_seminorm(u: &Signal, exponent: f64) -> f64 {
    let n = u.len();
    if n < 2 {
        return 0.0;
    }
    let g = u.grid();
    let diff = |i: usize, k: usize| {
        let d: f64 = u.value(i).iter().zip(u.value(k)).map(|(a, b)| (a - b) * (a - b)).sum();
        d.sqrt() / (g.time(k) - g.time(i)).powf(exponent)
    };
    let mut best = diff(0, n - 1);
    let mut gap = 1;
    while gap < n {
        for i in 0..n - gap {
            best = best.max(diff(i, i + gap));
        }
        gap *= 2;
    }
    best
}
