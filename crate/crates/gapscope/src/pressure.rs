//! Topological pressure, Bowen dimension, entropy, the u(β) family, Legendre
//! transforms and constrained (large-deviation) word sums.
//!
//! Three estimators of Pr(g) are available:
//!
//! * closed form `log ρ(A_{ij} e^{g_{ij}})` when g is constant on every branch,
//! * the word sum `(1/n) log((1/N) Σ_{w_{0,n}} e^{g_{w_{0,n}}(x_w)})` at canonical
//!   coding points,
//! * the periodic sum `(1/n) log Σ_{closed, period n} e^{g_w(x_w^*)}`, which
//!   converges exponentially in n and is the primary estimator otherwise.

use crate::error::{Error, Result};
use crate::ifs_core::{cycle_orbits, IfsModel, Observable};
use crate::par;
use nalgebra::DMatrix;
use serde::Serialize;
use std::sync::OnceLock;

/// Refinement order of canonical coding points.
pub const CODING_ORDER: usize = 40;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    WordSum,
    PeriodicSum,
    ClosedForm,
}

#[derive(Debug, Clone, Serialize)]
pub struct Estimator {
    pub value: f64,
    pub n_used: usize,
    /// |estimate(n) − estimate(n−1)|
    pub convergence_gap: f64,
    /// Aitken Δ² extrapolation of the last three estimates.
    pub accelerated: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PressureEstimate {
    pub value: f64,
    pub n_used: usize,
    pub convergence_gap: f64,
    pub method: Method,
    pub word_sum: Estimator,
    pub periodic: Estimator,
    pub closed_form: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct LegendreData {
    pub t_grid: Vec<f64>,
    pub beta_of_t: Vec<f64>,
    pub v_of_t: Vec<f64>,
    pub omega_of_t: Vec<f64>,
    pub u_samples: Vec<(f64, f64)>,
    pub t0: f64,
    pub f_min: f64,
    pub f_max: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct UValue {
    pub u: f64,
    /// Central differences, step 1e-4.
    pub u_prime: f64,
    pub u_second: f64,
    /// Weighted average and n·variance at finite n.
    pub u_prime_avg: f64,
    pub u_second_var: f64,
    pub n_used: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConstrainedSum {
    pub direct: f64,
    pub predicted: f64,
    pub gap: f64,
}

/// Largest period whose closed-word count stays below about 2·10⁶, capped at 16.
pub fn default_period(model: &IfsModel) -> usize {
    let n = model.n_symbols().max(2) as f64;
    ((2e6f64).ln() / n.ln()).floor().clamp(2.0, 16.0) as usize
}

fn lse(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Log of the Perron root of a nonnegative matrix given entrywise logs
/// (−∞ for zero entries).
pub fn log_perron_root(logs: &[Vec<f64>]) -> f64 {
    let n = logs.len();
    let m = logs.iter().flatten().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return f64::NEG_INFINITY;
    }
    let mat = DMatrix::from_fn(n, n, |i, j| (logs[i][j] - m).exp());
    if n == 1 {
        return m + mat[(0, 0)].ln();
    }
    // rank-one fast path: rows proportional (full shift with target-only weights)
    let rank_one = (1..n).all(|i| (0..n).all(|j| (mat[(i, j)] - mat[(0, j)]).abs() <= 1e-15 * mat[(0, j)].abs()));
    if rank_one {
        return m + (0..n).map(|j| mat[(j, j)]).sum::<f64>().ln();
    }
    let rho = mat.complex_eigenvalues().iter().map(|z| z.norm()).fold(0.0, f64::max);
    m + rho.ln()
}

struct PeriodTable {
    n: usize,
    // (log multiplicity, Birkhoff sums of the basis)
    orbits: Vec<(f64, Vec<f64>)>,
}

/// Pressure of linear combinations Σ c_k·basis_k, with cached periodic data.
pub struct Thermo<'a> {
    model: &'a IfsModel,
    basis: Vec<Observable>,
    closed: Option<Vec<Vec<f64>>>,
    n: usize,
    tables: OnceLock<Result<Vec<PeriodTable>>>,
}

impl<'a> Thermo<'a> {
    pub fn new(model: &'a IfsModel, basis: Vec<Observable>) -> Thermo<'a> {
        Thermo::with_period(model, basis, default_period(model))
    }

    pub fn with_period(model: &'a IfsModel, basis: Vec<Observable>, n: usize) -> Thermo<'a> {
        let closed = if basis.iter().all(|o| o.is_branch_constant(&model.branches)) {
            Some(
                model
                    .branches
                    .iter()
                    .map(|b| {
                        let x = model.intervals[b.source].mid();
                        let y = b.eval(x);
                        basis.iter().map(|o| o.value(b, x, y)).collect()
                    })
                    .collect(),
            )
        } else {
            None
        };
        Thermo { model, basis, closed, n: n.max(2), tables: OnceLock::new() }
    }

    pub fn model(&self) -> &IfsModel {
        self.model
    }

    pub fn period(&self) -> usize {
        self.n
    }

    pub fn is_closed_form(&self) -> bool {
        self.closed.is_some()
    }

    pub fn method(&self) -> Method {
        if self.is_closed_form() {
            Method::ClosedForm
        } else {
            Method::PeriodicSum
        }
    }

    fn tables(&self) -> Result<&Vec<PeriodTable>> {
        self.tables
            .get_or_init(|| {
                let refs: Vec<&Observable> = self.basis.iter().collect();
                let mut out = Vec::new();
                for n in [self.n - 1, self.n] {
                    let orbits = cycle_orbits(self.model, n, &refs)?
                        .into_iter()
                        .map(|o| ((o.multiplicity as f64).ln(), o.sums))
                        .collect();
                    out.push(PeriodTable { n, orbits });
                }
                Ok(out)
            })
            .as_ref()
            .map_err(|e| e.clone())
    }

    fn closed_value(&self, c: &[f64]) -> Option<f64> {
        let vals = self.closed.as_ref()?;
        let n = self.model.n_symbols();
        let mut logs = vec![vec![f64::NEG_INFINITY; n]; n];
        for (b, v) in self.model.branches.iter().zip(vals) {
            logs[b.source][b.target] = v.iter().zip(c).map(|(a, k)| a * k).sum();
        }
        Some(log_perron_root(&logs))
    }

    fn periodic_value(t: &PeriodTable, c: &[f64]) -> f64 {
        lse(t.orbits.iter().map(|(lm, s)| lm + s.iter().zip(c).map(|(a, k)| a * k).sum::<f64>())) / t.n as f64
    }

    /// Periodic-sum estimate at period n and n−1.
    pub fn periodic_pair(&self, c: &[f64]) -> Result<(f64, f64)> {
        let t = self.tables()?;
        Ok((Self::periodic_value(&t[1], c), Self::periodic_value(&t[0], c)))
    }

    /// Primary estimate of Pr(Σ c_k basis_k).
    pub fn pressure(&self, c: &[f64]) -> Result<f64> {
        if let Some(v) = self.closed_value(c) {
            return Ok(v);
        }
        Ok(self.periodic_pair(c)?.0)
    }

    /// |P(n) − P(n−1)| of the primary estimator (0 for closed forms).
    pub fn gap(&self, c: &[f64]) -> Result<f64> {
        if self.closed.is_some() {
            return Ok(0.0);
        }
        let (a, b) = self.periodic_pair(c)?;
        Ok((a - b).abs())
    }

    /// (mean, n·variance) of the per-step averages of Σ d_k basis_k under the
    /// periodic Gibbs weights of c: the finite-n first and second derivatives.
    pub fn moments(&self, c: &[f64], d: &[f64]) -> Result<(f64, f64)> {
        let t = &self.tables()?[1];
        let n = t.n as f64;
        let logw: Vec<f64> = t.orbits.iter().map(|(lm, s)| lm + s.iter().zip(c).map(|(a, k)| a * k).sum::<f64>()).collect();
        let m = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let (mut z, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for ((_, s), lw) in t.orbits.iter().zip(&logw) {
            let w = (lw - m).exp();
            let f: f64 = s.iter().zip(d).map(|(a, k)| a * k).sum::<f64>() / n;
            z += w;
            s1 += w * f;
            s2 += w * f * f;
        }
        let mean = s1 / z;
        Ok((mean, n * (s2 / z - mean * mean)))
    }

    /// Directional derivative d/ds Pr(c + s·d) at s = 0 by central differences.
    pub fn slope(&self, c: &[f64], d: &[f64], h: f64) -> Result<f64> {
        let p: Vec<f64> = c.iter().zip(d).map(|(a, b)| a + h * b).collect();
        let q: Vec<f64> = c.iter().zip(d).map(|(a, b)| a - h * b).collect();
        Ok((self.pressure(&p)? - self.pressure(&q)?) / (2.0 * h))
    }

    /// Exact derivative of the primary estimator along d: Perron-weighted average for
    /// closed forms (via a fine central difference), Gibbs mean otherwise.
    pub fn derivative(&self, c: &[f64], d: &[f64]) -> Result<f64> {
        if self.closed.is_some() {
            self.slope(c, d, 1e-5)
        } else {
            Ok(self.moments(c, d)?.0)
        }
    }
}

fn aitken(a: f64, b: f64, c: f64) -> f64 {
    let d1 = b - a;
    let d2 = c - b;
    let den = d2 - d1;
    if den.abs() < 1e-300 || !den.is_finite() {
        c
    } else {
        c - d2 * d2 / den
    }
}

/// log Z_k for k = 0…n, Z_k = (1/N) Σ_{w_{0,k}} e^{g_{w_{0,k}}(x_w)} at canonical points.
pub fn word_sum_levels(model: &IfsModel, g: &Observable, n: usize) -> Vec<f64> {
    let ns = model.n_symbols();
    let starts: Vec<(usize, f64)> = (0..ns).map(|a| (a, model.canonical_point(a, CODING_ORDER))).collect();
    // split the tree into subtrees rooted at depth ≤ 1 for parallelism
    let mut roots: Vec<(usize, f64, f64, usize)> = Vec::new();
    for &(a, x) in &starts {
        if n == 0 {
            roots.push((a, x, 0.0, 0));
            continue;
        }
        for j in model.successors(a) {
            let b = model.branch(a, j);
            let y = b.eval(x);
            roots.push((j, y, g.value(b, x, y), 1));
        }
    }
    let parts: Vec<Vec<(f64, f64)>> = par::map(&roots, |&(a, x, s, depth)| {
        let mut acc = vec![(f64::NEG_INFINITY, 0.0); n + 1];
        dfs(model, g, a, x, s, depth, n, &mut acc);
        acc
    });
    let mut levels = vec![(f64::NEG_INFINITY, 0.0); n + 1];
    for p in parts {
        for (l, (m, s)) in levels.iter_mut().zip(p) {
            merge(l, m, s);
        }
    }
    let mut out: Vec<f64> = levels.iter().map(|(m, s)| m + s.ln() - (ns as f64).ln()).collect();
    // level 0: every start counted once
    out[0] = 0.0;
    // levels reached only through roots at depth 1 miss nothing (depth-0 sums are 0)
    out
}

fn merge(acc: &mut (f64, f64), m: f64, s: f64) {
    if s == 0.0 || !m.is_finite() {
        return;
    }
    if m > acc.0 {
        acc.1 = acc.1 * (acc.0 - m).exp() + s;
        acc.0 = m;
    } else {
        acc.1 += s * (m - acc.0).exp();
    }
}

#[allow(clippy::too_many_arguments)]
fn dfs(model: &IfsModel, g: &Observable, a: usize, x: f64, s: f64, depth: usize, n: usize, acc: &mut [(f64, f64)]) {
    merge(&mut acc[depth], s, 1.0);
    if depth == n {
        return;
    }
    for j in model.successors(a) {
        let b = model.branch(a, j);
        let y = b.eval(x);
        dfs(model, g, j, y, s + g.value(b, x, y), depth + 1, n, acc);
    }
}

/// Pr(g) at n = n_max with every estimator reported.
pub fn pressure(model: &IfsModel, g: &Observable, n_max: usize) -> Result<PressureEstimate> {
    let n = n_max.max(3);
    let levels = word_sum_levels(model, g, n);
    let est = |k: usize| levels[k] / k as f64;
    let word_sum = Estimator {
        value: est(n),
        n_used: n,
        convergence_gap: (est(n) - est(n - 1)).abs(),
        accelerated: aitken(est(n - 2), est(n - 1), est(n)),
    };
    let th = Thermo::with_period(model, vec![g.clone()], n);
    let (pn, pn1) = th.periodic_pair(&[1.0])?;
    let pn2 = Thermo::with_period(model, vec![g.clone()], n - 1).periodic_pair(&[1.0])?.1;
    let periodic = Estimator { value: pn, n_used: n, convergence_gap: (pn - pn1).abs(), accelerated: aitken(pn2, pn1, pn) };
    let closed_form = th.closed_value(&[1.0]);
    let (value, gap, method) = match closed_form {
        Some(v) => (v, 0.0, Method::ClosedForm),
        None => (periodic.value, periodic.convergence_gap, Method::PeriodicSum),
    };
    Ok(PressureEstimate { value, n_used: n, convergence_gap: gap, method, word_sum, periodic, closed_form })
}

/// P(β) = Pr(−βJ).
pub fn pressure_beta(model: &IfsModel, beta: f64) -> Result<f64> {
    Thermo::new(model, vec![Observable::jacobian(1.0)]).pressure(&[-beta])
}

/// h_top = P(0).
pub fn topological_entropy(model: &IfsModel) -> Result<f64> {
    pressure_beta(model, 0.0)
}

/// Bracketed root of a decreasing f on [lo, hi] to |f| < tol (bisection + secant).
pub(crate) fn solve_decreasing<F: FnMut(f64) -> Result<f64>>(mut f: F, mut lo: f64, mut hi: f64, tol: f64) -> Result<f64> {
    let (mut flo, mut fhi) = (f(lo)?, f(hi)?);
    if flo.abs() < tol {
        return Ok(lo);
    }
    if fhi.abs() < tol {
        return Ok(hi);
    }
    if !(flo > 0.0 && fhi < 0.0) {
        return Err(Error::NoBracket(format!("f({lo})={flo}, f({hi})={fhi}")));
    }
    let mut x = 0.5 * (lo + hi);
    for it in 0..300 {
        // secant step, safeguarded by the bracket; bisect every third step
        let sec = lo - flo * (hi - lo) / (fhi - flo);
        x = if it % 3 == 2 || !(sec > lo && sec < hi) { 0.5 * (lo + hi) } else { sec };
        let fx = f(x)?;
        if fx.abs() < tol || hi - lo < 1e-15 {
            return Ok(x);
        }
        if fx > 0.0 {
            lo = x;
            flo = fx;
        } else {
            hi = x;
            fhi = fx;
        }
    }
    Ok(x)
}

/// Bowen dimension: the root δ of P(δ) = 0, to |P(δ)| < 1e-10.
pub fn hausdorff_dimension(model: &IfsModel) -> Result<f64> {
    let th = Thermo::new(model, vec![Observable::jacobian(1.0)]);
    let p0 = th.pressure(&[0.0])?;
    if p0.abs() < 1e-12 {
        return Ok(0.0);
    }
    if p0 < 0.0 {
        return Err(Error::NoBracket(format!("P(0) = {p0} <= 0")));
    }
    let mut hi = 1.0;
    while th.pressure(&[-hi])? >= 0.0 {
        hi *= 2.0;
        if hi > 64.0 {
            return Err(Error::NoBracket("P(beta) >= 0 up to beta = 64".into()));
        }
    }
    solve_decreasing(|b| th.pressure(&[-b]), 0.0, hi, 1e-10)
}

/// Min and max of per-step periodic averages of f over periods ≤ n_max.
pub fn ergodic_range(model: &IfsModel, f: &Observable, n_max: usize) -> Result<(f64, f64)> {
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 1..=n_max.max(1) {
        for o in cycle_orbits(model, n, &[f])? {
            let a = o.sums[0] / n as f64;
            lo = lo.min(a);
            hi = hi.max(a);
        }
    }
    Ok((lo, hi))
}

fn range_period(model: &IfsModel) -> usize {
    model.n_symbols().max(8).min(default_period(model))
}

/// u(β) = Pr(g + βf) with first and second derivatives by both routes.
pub fn u_function(model: &IfsModel, f: &Observable, g: &Observable, beta: f64) -> Result<UValue> {
    let th = Thermo::new(model, vec![g.clone(), f.clone()]);
    u_with(&th, beta)
}

fn u_with(th: &Thermo, beta: f64) -> Result<UValue> {
    let c = [1.0, beta];
    let d = [0.0, 1.0];
    let h = 1e-4;
    let u = th.pressure(&c)?;
    let up = th.pressure(&[1.0, beta + h])?;
    let um = th.pressure(&[1.0, beta - h])?;
    let (mean, var) = th.moments(&c, &d)?;
    Ok(UValue {
        u,
        u_prime: (up - um) / (2.0 * h),
        u_second: (up - 2.0 * u + um) / (h * h),
        u_prime_avg: mean,
        u_second_var: var,
        n_used: th.period(),
        gap: th.gap(&c)?,
    })
}

/// β(t) solving u'(β) = t by monotone bisection.
fn beta_of(th: &Thermo, t: f64) -> Result<f64> {
    let d = [0.0, 1.0];
    let du = |b: f64| th.derivative(&[1.0, b], &d);
    let (mut lo, mut hi) = (-1.0, 1.0);
    let mut k = 0;
    while du(lo)? > t {
        lo *= 2.0;
        k += 1;
        if k > 40 {
            return Err(Error::OutOfRange(format!("t = {t} below the range of u'")));
        }
    }
    k = 0;
    while du(hi)? < t {
        hi *= 2.0;
        k += 1;
        if k > 40 {
            return Err(Error::OutOfRange(format!("t = {t} above the range of u'")));
        }
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if du(mid)? < t {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-13 * (1.0 + lo.abs()) {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Legendre transform v(t) = β(t)t − u(β(t)) on a grid inside (f_min, f_max).
pub fn legendre(model: &IfsModel, f: &Observable, g: &Observable, t_grid: &[f64]) -> Result<LegendreData> {
    let (f_min, f_max) = ergodic_range(model, f, range_period(model))?;
    if f_max - f_min < 1e-10 {
        return Err(Error::DegenerateRange(f_max - f_min));
    }
    let th = Thermo::new(model, vec![g.clone(), f.clone()]);
    let pr_g = th.pressure(&[1.0, 0.0])?;
    let t0 = th.derivative(&[1.0, 0.0], &[0.0, 1.0])?;
    let betas: Vec<Result<f64>> = par::map(t_grid, |&t| beta_of(&th, t));
    let mut beta_of_t = Vec::with_capacity(t_grid.len());
    let mut v_of_t = Vec::with_capacity(t_grid.len());
    let mut omega_of_t = Vec::with_capacity(t_grid.len());
    let mut u_samples = Vec::with_capacity(t_grid.len());
    for (&t, b) in t_grid.iter().zip(betas) {
        let b = b?;
        let u = th.pressure(&[1.0, b])?;
        let v = b * t - u;
        beta_of_t.push(b);
        v_of_t.push(v);
        omega_of_t.push(-pr_g - v);
        u_samples.push((b, u));
    }
    Ok(LegendreData { t_grid: t_grid.to_vec(), beta_of_t, v_of_t, omega_of_t, u_samples, t0, f_min, f_max })
}

/// v(t) at a single point.
pub fn legendre_v(th: &Thermo, t: f64) -> Result<f64> {
    let b = beta_of(th, t)?;
    Ok(b * t - th.pressure(&[1.0, b])?)
}

/// Enumeration guard for brute-force word sums.
pub const MAX_ENUMERATION: f64 = 1e7;

/// Direct (1/n) log of the constrained word sum vs sup over 𝓘 of −v.
pub fn constrained_pressure(
    model: &IfsModel,
    f: &Observable,
    g: &Observable,
    interval: (f64, f64),
    n: usize,
) -> Result<ConstrainedSum> {
    let (ta, tb) = interval;
    let ns = model.n_symbols() as f64;
    let count = ns.powi(n as i32 + 1);
    if count > MAX_ENUMERATION {
        return Err(Error::EnumerationTooLarge(count));
    }
    if !(ta < tb) {
        return Err(Error::OutOfRange(format!("empty interval [{ta}, {tb}]")));
    }
    let nf = n as f64;
    let starts: Vec<usize> = (0..model.n_symbols()).collect();
    let parts: Vec<(f64, f64)> = par::map(&starts, |&a| {
        let mut acc = (f64::NEG_INFINITY, 0.0);
        let x = model.canonical_point(a, CODING_ORDER);
        constrained_dfs(model, f, g, a, x, 0.0, 0.0, 0, n, (ta * nf, tb * nf), &mut acc);
        acc
    });
    let mut tot = (f64::NEG_INFINITY, 0.0);
    for (m, s) in parts {
        merge(&mut tot, m, s);
    }
    let direct = (tot.0 + tot.1.ln() - ns.ln()) / nf;
    let th = Thermo::new(model, vec![g.clone(), f.clone()]);
    let t0 = th.derivative(&[1.0, 0.0], &[0.0, 1.0])?;
    let predicted = if t0 <= ta {
        -legendre_v(&th, ta)?
    } else if t0 >= tb {
        -legendre_v(&th, tb)?
    } else {
        th.pressure(&[1.0, 0.0])?
    };
    Ok(ConstrainedSum { direct, predicted, gap: (direct - predicted).abs() })
}

#[allow(clippy::too_many_arguments)]
fn constrained_dfs(
    model: &IfsModel,
    f: &Observable,
    g: &Observable,
    a: usize,
    x: f64,
    sf: f64,
    sg: f64,
    depth: usize,
    n: usize,
    window: (f64, f64),
    acc: &mut (f64, f64),
) {
    if depth == n {
        let slack = 1e-12 * (1.0 + window.1.abs());
        if sf >= window.0 - slack && sf <= window.1 + slack {
            merge(acc, sg, 1.0);
        }
        return;
    }
    for j in model.successors(a) {
        let b = model.branch(a, j);
        let y = b.eval(x);
        constrained_dfs(model, f, g, j, y, sf + f.value(b, x, y), sg + g.value(b, x, y), depth + 1, n, window, acc);
    }
}
