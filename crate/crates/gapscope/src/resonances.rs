//! Ruelle–Pollicott resonances of L_ℏ.
//!
//! Two routes: zeros of the Fredholm determinant d(z) = exp(−Σ t_n z^n / n)
//! built from periodic-orbit flat traces, and eigenvalues of a Chebyshev
//! collocation matrix for the pull-back operator
//! (Mu)_i(y) = Σ_{i⇝j} W_{i,j}(y) u_j(φ_{i,j}(y)).
//!
//! The weight is W = e^{A(φy) + iτ(φy)/ℏ}. With the default amplitude
//! A = V − J the pull-back is the complex conjugate of the L² adjoint of
//! L_ℏ u = e^{V+iτ/ℏ} u∘φ^{-1}, so both share the spectrum of L_ℏ. The literal
//! amplitude A = V drops the Jacobian factor.

use crate::error::{Error, Result};
use crate::ifs_core::{cycle_orbits, IfsModel, Observable};
use crate::par;
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Relative coefficient tail defining the trust radius.
pub const TRUST_TAIL: f64 = 1e-10;
/// Modulus change between orders p and p + REFINE_STEP beyond which a
/// matrix eigenvalue is treated as discretization noise.
pub const NOISE_TOL: f64 = 1e-6;
pub const REFINE_STEP: usize = 8;
/// Zeta roots with |z| above this fraction of the trust radius are flagged.
const TRUST_MARGIN: f64 = 0.9;
const NOISE_GUARD: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Amplitude {
    /// A = V − J
    #[default]
    Adjoint,
    /// A = V
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Zeta,
    Matrix,
}

impl Method {
    pub fn label(&self) -> &'static str {
        match self {
            Method::Zeta => "zeta",
            Method::Matrix => "matrix",
        }
    }
}

/// L_ℏ for a model: amplitude A, phase τ and ℏ (∞ allowed, meaning no phase).
#[derive(Debug, Clone)]
pub struct Operator<'a> {
    pub model: &'a IfsModel,
    pub hbar: f64,
    pub amplitude: Observable,
    pub phase: Observable,
}

impl<'a> Operator<'a> {
    pub fn new(model: &'a IfsModel, hbar: f64) -> Operator<'a> {
        Operator::with_mode(model, hbar, Amplitude::Adjoint)
    }

    pub fn with_mode(model: &'a IfsModel, hbar: f64, mode: Amplitude) -> Operator<'a> {
        let amplitude = match mode {
            Amplitude::Adjoint => model.potential.sub(&Observable::jacobian(1.0)),
            Amplitude::Literal => model.potential.clone(),
        };
        Operator { model, hbar, amplitude, phase: model.tau.clone() }
    }

    pub fn at_hbar(&self, hbar: f64) -> Operator<'a> {
        Operator { hbar, ..self.clone() }
    }

    fn inv_hbar(&self) -> f64 {
        if self.hbar.is_infinite() {
            0.0
        } else {
            1.0 / self.hbar
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DeterminantSeries {
    pub hbar: f64,
    pub traces: Vec<Complex64>,
    /// a_0 … a_N of d(z).
    pub coefficients: Vec<Complex64>,
    /// Last index whose coefficient stands above its rounding floor.
    pub effective_order: usize,
    pub trust_radius: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Resonance {
    pub re: f64,
    pub im: f64,
    pub modulus: f64,
    pub trusted: bool,
}

impl Resonance {
    fn new(l: Complex64, trusted: bool) -> Resonance {
        Resonance { re: l.re, im: l.im, modulus: l.norm(), trusted }
    }

    pub fn value(&self) -> Complex64 {
        Complex64::new(self.re, self.im)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ResonanceSet {
    pub hbar: f64,
    pub method: Method,
    /// Sorted by decreasing modulus, then increasing argument.
    pub eigenvalues: Vec<Resonance>,
    /// Determinant truncation order or collocation nodes per interval.
    pub order: usize,
    pub trust_radius: Option<f64>,
    pub spectral_radius: f64,
}

impl ResonanceSet {
    fn build(hbar: f64, method: Method, mut eig: Vec<Resonance>, order: usize, trust_radius: Option<f64>) -> ResonanceSet {
        sort_resonances(&mut eig);
        let spectral_radius = eig.first().map_or(0.0, |r| r.modulus);
        ResonanceSet { hbar, method, eigenvalues: eig, order, trust_radius, spectral_radius }
    }

    pub fn values(&self) -> Vec<Complex64> {
        self.eigenvalues.iter().map(|r| r.value()).collect()
    }

    pub fn log_spectral_radius(&self) -> f64 {
        self.spectral_radius.ln()
    }
}

fn sort_resonances(eig: &mut [Resonance]) {
    let scale = eig.iter().map(|r| r.modulus).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let key = |r: &Resonance| ((r.modulus / scale * 1e10).round() as i64, r.im.atan2(r.re));
    eig.sort_by(|a, b| {
        let (ka, kb) = (key(a), key(b));
        kb.0.cmp(&ka.0).then(ka.1.total_cmp(&kb.1))
    });
}

/// Periodic-orbit data shared by every ℏ: one row per rotation class.
#[derive(Debug, Clone)]
pub struct TraceTable {
    /// (multiplicity, amplitude sum, phase sum, signed derivative) per period.
    pub periods: Vec<Vec<(f64, f64, f64, f64)>>,
}

impl TraceTable {
    pub fn new(model: &IfsModel, amplitude: &Observable, phase: &Observable, n_max: usize) -> Result<TraceTable> {
        let mut periods = Vec::with_capacity(n_max);
        for n in 1..=n_max {
            let orbits = cycle_orbits(model, n, &[amplitude, phase])?;
            periods.push(
                orbits.iter().map(|o| (o.multiplicity as f64, o.sums[0], o.sums[1], o.derivative)).collect(),
            );
        }
        Ok(TraceTable { periods })
    }

    pub fn of(op: &Operator, n_max: usize) -> Result<TraceTable> {
        TraceTable::new(op.model, &op.amplitude, &op.phase, n_max)
    }

    pub fn traces(&self, hbar: f64) -> Vec<Complex64> {
        let k = if hbar.is_infinite() { 0.0 } else { 1.0 / hbar };
        par::map(&self.periods, |rows| {
            rows.iter()
                .map(|&(m, a, t, d)| m * Complex64::new(a, k * t).exp() / (1.0 - d))
                .fold(Complex64::new(0.0, 0.0), |s, x| s + x)
        })
    }

    /// Σ |term| per period, independent of ℏ.
    pub fn trace_abs(&self) -> Vec<f64> {
        self.periods.iter().map(|rows| rows.iter().map(|&(m, a, _, d)| m * a.exp() / (1.0 - d).abs()).sum()).collect()
    }

    pub fn series(&self, hbar: f64) -> DeterminantSeries {
        series_with_bounds(hbar, self.traces(hbar), &self.trace_abs())
    }
}

/// t_n = Σ_{closed words of period n} e^{A_w + iτ_w/ℏ} / (1 − φ'_cycle(x_w)).
pub fn flat_traces(op: &Operator, n_max: usize) -> Result<Vec<Complex64>> {
    Ok(TraceTable::of(op, n_max)?.traces(op.hbar))
}

/// Newton-identity coefficients a_k = −(1/k) Σ_{m≤k} t_m a_{k−m}.
pub fn determinant_coefficients(traces: &[Complex64]) -> Vec<Complex64> {
    let n = traces.len();
    let mut a = vec![Complex64::new(0.0, 0.0); n + 1];
    a[0] = Complex64::new(1.0, 0.0);
    for k in 1..=n {
        let mut s = Complex64::new(0.0, 0.0);
        for m in 1..=k {
            s += traces[m - 1] * a[k - m];
        }
        a[k] = -s / k as f64;
    }
    a
}

/// First-order rounding error of each a_k: the recursion's own products
/// plus the propagated errors of earlier coefficients and of the traces,
/// whose absolute error is ε times the sum of the moduli of their terms.
pub fn coefficient_errors(traces: &[Complex64], a: &[Complex64], trace_abs: &[f64]) -> Vec<f64> {
    let n = traces.len();
    let mut e = vec![0.0; n + 1];
    for k in 1..=n {
        let mut s = 0.0;
        for m in 1..=k {
            let t = traces[m - 1].norm();
            s += (f64::EPSILON * (t + trace_abs[m - 1])) * a[k - m].norm() + t * e[k - m];
        }
        e[k] = s / k as f64;
    }
    e
}

/// Largest k such that a_1 … a_k all stand NOISE_GUARD times above their
/// rounding error.
pub fn effective_order(a: &[Complex64], errors: &[f64]) -> usize {
    let noisy = |k: usize| a[k].norm() <= NOISE_GUARD * errors[k];
    (1..a.len()).find(|&k| noisy(k)).map_or(a.len() - 1, |k| k - 1)
}

/// Largest ρ with |a_N|ρ^N < TRUST_TAIL·max_k |a_k|ρ^k; ∞ when a_N = 0.
pub fn trust_radius(a: &[Complex64]) -> f64 {
    let n = a.len() - 1;
    let an = a[n].norm();
    if n == 0 || an == 0.0 {
        return f64::INFINITY;
    }
    let mut best = f64::NEG_INFINITY;
    for (k, c) in a.iter().enumerate().take(n) {
        let ak = c.norm();
        if ak > 0.0 {
            best = best.max((ak.ln() - an.ln() + TRUST_TAIL.ln()) / (n - k) as f64);
        }
    }
    best.exp()
}

pub fn determinant_series(op: &Operator, order: usize) -> Result<DeterminantSeries> {
    Ok(TraceTable::of(op, order)?.series(op.hbar))
}

/// Series from bare traces; their rounding error is taken as ε·|t_n|.
pub fn series_from_traces(hbar: f64, traces: Vec<Complex64>) -> DeterminantSeries {
    let abs: Vec<f64> = traces.iter().map(|t| t.norm()).collect();
    series_with_bounds(hbar, traces, &abs)
}

fn series_with_bounds(hbar: f64, traces: Vec<Complex64>, trace_abs: &[f64]) -> DeterminantSeries {
    let coefficients = determinant_coefficients(&traces);
    let effective_order = effective_order(&coefficients, &coefficient_errors(&traces, &coefficients, trace_abs));
    let trust_radius = trust_radius(&coefficients[..=effective_order]);
    DeterminantSeries { hbar, traces, coefficients, effective_order, trust_radius }
}

fn horner(a: &[Complex64], z: Complex64) -> (Complex64, Complex64) {
    let (mut p, mut dp) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for c in a.iter().rev() {
        dp = dp * z + p;
        p = p * z + c;
    }
    (p, dp)
}

/// Zeros of Σ a_k z^k with |z| < radius: eigenvalues of the companion matrix
/// of the rescaled polynomial s ↦ Σ a_k ρ^k s^k followed by Newton polishing
/// on the unscaled series.
pub fn polynomial_roots(a: &[Complex64], radius: f64) -> Result<Vec<Complex64>> {
    let rho = if radius.is_finite() { radius } else { 1.0 };
    let c: Vec<Complex64> = a.iter().enumerate().map(|(k, x)| x * rho.powi(k as i32)).collect();
    let cmax = c.iter().map(|x| x.norm()).fold(0.0, f64::max);
    let Some(deg) = (1..c.len()).rev().find(|&k| c[k].norm() > 1e-15 * cmax) else {
        return Ok(Vec::new());
    };
    let mut comp = DMatrix::<Complex64>::zeros(deg, deg);
    for k in 0..deg {
        comp[(0, k)] = -c[deg - 1 - k] / c[deg];
    }
    for k in 1..deg {
        comp[(k, k - 1)] = Complex64::new(1.0, 0.0);
    }
    let s = comp
        .eigenvalues()
        .ok_or_else(|| Error::NoConvergence("companion eigenvalues".into()))?;
    let mut roots = Vec::new();
    for sk in s.iter() {
        if radius.is_finite() && sk.norm() >= 1.0 {
            continue;
        }
        let mut z = sk * rho;
        for _ in 0..50 {
            let (p, dp) = horner(a, z);
            if dp.norm() == 0.0 {
                break;
            }
            let step = p / dp;
            z -= step;
            if step.norm() <= 1e-16 * z.norm() {
                break;
            }
        }
        if z.norm() > 0.0 && (!radius.is_finite() || z.norm() < radius) {
            roots.push(z);
        }
    }
    Ok(roots)
}

/// Eigenvalues λ = 1/z over the zeros of the order-N determinant inside the
/// trust radius.
pub fn resonances_zeta(op: &Operator, order: usize) -> Result<ResonanceSet> {
    let series = determinant_series(op, order)?;
    resonances_from_series(&series, order)
}

pub fn resonances_from_series(series: &DeterminantSeries, order: usize) -> Result<ResonanceSet> {
    let rho = series.trust_radius;
    let roots = polynomial_roots(&series.coefficients[..=series.effective_order], rho)?;
    let eig = roots
        .into_iter()
        .map(|z| Resonance::new(1.0 / z, !rho.is_finite() || z.norm() < TRUST_MARGIN * rho))
        .collect();
    Ok(ResonanceSet::build(series.hbar, Method::Zeta, eig, order, Some(rho)))
}

/// Chebyshev points of the first kind on [lo, hi] with barycentric weights.
fn chebyshev(lo: f64, hi: f64, p: usize) -> (Vec<f64>, Vec<f64>) {
    let (m, h) = (0.5 * (lo + hi), 0.5 * (hi - lo));
    let mut x = Vec::with_capacity(p);
    let mut w = Vec::with_capacity(p);
    for k in 0..p {
        let t = (2 * k + 1) as f64 * PI / (2 * p) as f64;
        x.push(m + h * t.cos());
        w.push(if k % 2 == 0 { t.sin() } else { -t.sin() });
    }
    (x, w)
}

/// Lagrange basis values ℓ_b(x) for the nodes.
fn lagrange_row(nodes: &[f64], weights: &[f64], x: f64) -> Vec<f64> {
    if let Some(b) = nodes.iter().position(|&n| n == x) {
        let mut r = vec![0.0; nodes.len()];
        r[b] = 1.0;
        return r;
    }
    let terms: Vec<f64> = nodes.iter().zip(weights).map(|(n, w)| w / (x - n)).collect();
    let s: f64 = terms.iter().sum();
    terms.into_iter().map(|t| t / s).collect()
}

/// Matrix of the pull-back operator on p Chebyshev nodes per interval;
/// row/column (i, a) ↦ i·p + a.
pub fn collocation_matrix(op: &Operator, p: usize) -> Result<DMatrix<Complex64>> {
    if p < 4 {
        return Err(Error::OutOfRange(format!("collocation order {p} < 4")));
    }
    let m = op.model;
    let n = m.n_symbols();
    let grids: Vec<(Vec<f64>, Vec<f64>)> = m.intervals.iter().map(|iv| chebyshev(iv.lo, iv.hi, p)).collect();
    let k = op.inv_hbar();
    let rows: Vec<Vec<(usize, Complex64)>> = par::map_range(n * p, |r| {
        let (i, a) = (r / p, r % p);
        let y = grids[i].0[a];
        let mut out = Vec::new();
        for j in m.successors(i) {
            let b = m.branch(i, j);
            let x = b.eval(y);
            let w = Complex64::new(op.amplitude.value(b, y, x), k * op.phase.value(b, y, x)).exp();
            for (c, l) in lagrange_row(&grids[j].0, &grids[j].1, x).into_iter().enumerate() {
                out.push((j * p + c, w * l));
            }
        }
        out
    });
    let mut mat = DMatrix::<Complex64>::zeros(n * p, n * p);
    for (r, row) in rows.into_iter().enumerate() {
        for (c, v) in row {
            mat[(r, c)] += v;
        }
    }
    Ok(mat)
}

fn eigenvalues(mat: DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    mat.eigenvalues()
        .map(|v| v.iter().copied().collect())
        .ok_or_else(|| Error::NoConvergence("collocation eigenvalues".into()))
}

/// Matrix eigenvalues at order p that survive refinement to p + 8: each is
/// matched to its nearest neighbour at the finer order, its modulus must
/// move by at most NOISE_TOL·r, and everything at or below the largest
/// rejected modulus is discarded as the noise floor.
pub fn resonances_matrix(op: &Operator, p: usize) -> Result<ResonanceSet> {
    let coarse = eigenvalues(collocation_matrix(op, p)?)?;
    let fine = eigenvalues(collocation_matrix(op, p + REFINE_STEP)?)?;
    let r = coarse.iter().map(|z| z.norm()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let mut floor = 0.0f64;
    let mut kept = Vec::new();
    for z in &coarse {
        let near = fine
            .iter()
            .min_by(|a, b| (*a - z).norm().total_cmp(&(*b - z).norm()))
            .copied()
            .unwrap_or(*z);
        let dmod = (near.norm() - z.norm()).abs();
        if dmod > NOISE_TOL * r {
            floor = floor.max(z.norm());
        } else {
            kept.push((*z, (near - z).norm() <= 1e-2 * NOISE_TOL * r));
        }
    }
    let eig = kept
        .into_iter()
        .filter(|(z, _)| z.norm() > floor)
        .map(|(z, t)| Resonance::new(z, t))
        .collect();
    Ok(ResonanceSet::build(op.hbar, Method::Matrix, eig, p, None))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepResult {
    pub inverse_hbar: Vec<f64>,
    pub log_rs: Vec<f64>,
    pub n_eigs: Vec<usize>,
    pub method: Vec<Method>,
    pub order: usize,
}

impl SweepResult {
    pub fn rows(&self) -> impl Iterator<Item = (f64, f64, usize, Method)> + '_ {
        (0..self.inverse_hbar.len()).map(|k| (self.inverse_hbar[k], self.log_rs[k], self.n_eigs[k], self.method[k]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZetaCheck {
    /// Every k-th grid point is recomputed with the zeta method.
    pub every: usize,
    pub order: usize,
}

/// log r_s(L_ℏ) over a grid of 1/ℏ with the matrix method; optional zeta rows
/// on a subsample follow their matrix row.
pub fn sweep(
    model: &IfsModel,
    mode: Amplitude,
    inverse_hbar: &[f64],
    p: usize,
    check: Option<ZetaCheck>,
) -> Result<SweepResult> {
    if inverse_hbar.iter().any(|k| !(*k > 0.0)) {
        return Err(Error::OutOfRange("1/hbar grid must be positive".into()));
    }
    let base = Operator::with_mode(model, f64::INFINITY, mode);
    let matrix: Vec<Result<ResonanceSet>> = par::map(inverse_hbar, |k| resonances_matrix(&base.at_hbar(1.0 / k), p));
    let table = match check {
        Some(c) if c.every > 0 => Some(TraceTable::of(&base, c.order)?),
        _ => None,
    };
    let mut out = SweepResult { inverse_hbar: vec![], log_rs: vec![], n_eigs: vec![], method: vec![], order: p };
    for (idx, (k, res)) in inverse_hbar.iter().zip(matrix).enumerate() {
        let s = res?;
        out.inverse_hbar.push(*k);
        out.log_rs.push(s.log_spectral_radius());
        out.n_eigs.push(s.eigenvalues.len());
        out.method.push(Method::Matrix);
        if let (Some(t), Some(c)) = (&table, check) {
            if idx % c.every == 0 {
                let z = resonances_from_series(&t.series(1.0 / k), c.order)?;
                out.inverse_hbar.push(*k);
                out.log_rs.push(z.log_spectral_radius());
                out.n_eigs.push(z.eigenvalues.len());
                out.method.push(Method::Zeta);
            }
        }
    }
    Ok(out)
}

/// ‖(z − M)^{-1}‖₂ = 1/σ_min(z − M) at collocation order p.
pub fn resolvent_norm(op: &Operator, z: Complex64, p: usize) -> Result<f64> {
    let m = collocation_matrix(op, p)?;
    let n = m.nrows();
    let a = DMatrix::<Complex64>::identity(n, n) * z - m;
    let sv = a.svd(false, false).singular_values;
    let smax = sv.iter().copied().fold(0.0, f64::max);
    let smin = sv.iter().copied().fold(f64::INFINITY, f64::min);
    if !(smin > 1e-12 * smax.max(z.norm())) {
        return Err(Error::SingularPoint(format!("{z}")));
    }
    Ok(1.0 / smin)
}
