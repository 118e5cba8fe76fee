//! Spectral-gap bounds γ_Gibbs, γ_sc, γ_conj, γ_up, the γ(J_c) family and the
//! phase diagram of the two-branch linear family.
//!
//! All pressures are of combinations cJ·J + cV·V with V the model potential.

use crate::error::{Error, Result};
use crate::ifs_core::{cycle_orbits, j_extremes, make_linear_from, IfsModel, Observable};
use crate::par;
use crate::pressure::{self, solve_decreasing, Thermo, CODING_ORDER, MAX_ENUMERATION};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Bound {
    Gibbs,
    #[serde(rename = "sc")]
    Sc,
    #[serde(rename = "up")]
    Up,
}

impl Bound {
    pub fn label(&self) -> &'static str {
        match self {
            Bound::Gibbs => "Gibbs",
            Bound::Sc => "sc",
            Bound::Up => "up",
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GapReport {
    pub delta: f64,
    pub h_top: f64,
    pub j_min: f64,
    pub j_max: f64,
    pub gamma_gibbs: f64,
    pub gamma_sc: f64,
    pub gamma_conj: f64,
    pub gamma_up: f64,
    pub beta0: f64,
    pub j_avg: f64,
    pub up_case_applicable: bool,
    pub best_bound: Bound,
    pub tie: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct GammaCurve {
    pub jc_grid: Vec<f64>,
    pub gamma_of_jc: Vec<f64>,
    pub j1_star: f64,
    pub j2_star: f64,
    /// (J̄, v₁(J̄)) on [J_min, J_max]
    pub v1: Vec<(f64, f64)>,
    /// (J̄, v₂(J̄)) at J_c = ⟨J⟩
    pub v2: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseCell {
    pub delta: f64,
    pub omega: f64,
    pub feasible: bool,
    pub label: Option<Bound>,
    pub tie: bool,
    pub gamma_gibbs: f64,
    pub gamma_sc: f64,
    pub gamma_up: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseDiagram {
    pub a: f64,
    pub cells: Vec<PhaseCell>,
}

/// Tie tolerance of [`classify`].
pub const TIE_TOL: f64 = 1e-9;

/// Pressures of combinations of J and V for one model, cached.
pub struct Bounds<'a> {
    th: Thermo<'a>,
}

impl<'a> Bounds<'a> {
    pub fn new(model: &'a IfsModel) -> Bounds<'a> {
        Bounds { th: Thermo::new(model, vec![Observable::jacobian(1.0), model.potential.clone()]) }
    }

    /// Pr(cj·J + cv·V)
    pub fn pr(&self, cj: f64, cv: f64) -> Result<f64> {
        self.th.pressure(&[cj, cv])
    }

    pub fn gamma_gibbs(&self) -> Result<f64> {
        self.pr(-1.0, 1.0)
    }

    pub fn gamma_conj(&self) -> Result<f64> {
        Ok(0.5 * self.pr(-2.0, 2.0)?)
    }

    /// Root of Pr(2(V−J) + βJ) = 2Pr(V−J).
    pub fn beta0(&self) -> Result<f64> {
        let target = 2.0 * self.gamma_gibbs()?;
        let f = |b: f64| -> Result<f64> { Ok(target - self.pr(-2.0 + b, 2.0)?) };
        let f0 = f(0.0)?;
        if f0.abs() < 1e-12 {
            return Ok(0.0);
        }
        let mut hi = 1.0;
        while f(hi)? > 0.0 {
            hi *= 2.0;
            if hi > 50.0 {
                return Err(Error::NoRoot("beta0 bracket expansion reached 50".into()));
            }
        }
        if f0 < 0.0 {
            return Err(Error::NoRoot(format!("Pr(2(V-J)) exceeds 2Pr(V-J) by {}", -f0)));
        }
        solve_decreasing(f, 0.0, hi, 1e-12).map_err(|e| Error::NoRoot(e.to_string()))
    }

    /// ⟨J⟩ = (2Pr(V−J) − Pr(2(V−J)))/β₀
    pub fn j_average(&self) -> Result<f64> {
        let b = self.beta0()?;
        if b == 0.0 {
            return Err(Error::NoRoot("beta0 = 0".into()));
        }
        Ok((2.0 * self.gamma_gibbs()? - self.pr(-2.0, 2.0)?) / b)
    }

    /// (u(β), u'(β)) for u(β) = Pr(2(V−J) + βJ).
    pub fn u(&self, beta: f64) -> Result<(f64, f64)> {
        let c = [-2.0 + beta, 2.0];
        Ok((self.th.pressure(&c)?, self.th.derivative(&c, &[1.0, 0.0])?))
    }

    // (u'(β), u''(β))
    fn u_slopes(&self, beta: f64) -> Result<(f64, f64)> {
        let c = [-2.0 + beta, 2.0];
        if self.th.is_closed_form() {
            let h = 1e-4;
            let (p, m) = (self.th.derivative(&[c[0] + h, 2.0], &[1.0, 0.0])?, self.th.derivative(&[c[0] - h, 2.0], &[1.0, 0.0])?);
            Ok((self.th.derivative(&c, &[1.0, 0.0])?, (p - m) / (2.0 * h)))
        } else {
            self.th.moments(&c, &[1.0, 0.0])
        }
    }

    /// β(J̄) solving u'(β) = J̄, by bracketed Newton.
    pub fn beta_of(&self, jbar: f64) -> Result<f64> {
        let (mut lo, mut hi) = (-1.0, 1.0);
        let mut k = 0;
        while self.u_slopes(lo)?.0 > jbar {
            lo *= 2.0;
            k += 1;
            if k > 40 {
                return Err(Error::OutOfRange(format!("{jbar} below range of u'")));
            }
        }
        k = 0;
        while self.u_slopes(hi)?.0 < jbar {
            hi *= 2.0;
            k += 1;
            if k > 40 {
                return Err(Error::OutOfRange(format!("{jbar} above range of u'")));
            }
        }
        let mut x = 0.5 * (lo + hi);
        for _ in 0..200 {
            let (d1, d2) = self.u_slopes(x)?;
            let r = d1 - jbar;
            if r < 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let mut next = if d2 > 0.0 { x - r / d2 } else { f64::NAN };
            if !(next > lo && next < hi) {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() < 1e-13 * (1.0 + x.abs()) || hi - lo < 1e-13 {
                return Ok(next);
            }
            x = next;
        }
        Ok(x)
    }

    /// v₁(J̄) = β(J̄)J̄ − u(β(J̄))
    pub fn v1(&self, jbar: f64) -> Result<f64> {
        let b = self.beta_of(jbar)?;
        Ok(b * jbar - self.u(b)?.0)
    }

    /// v₂(J̄) = (J_c/J̄)(v₁(J̄) + 2Pr(V−J)) − 2Pr(V−J)
    pub fn v2(&self, jbar: f64, jc: f64) -> Result<f64> {
        let g = self.gamma_gibbs()?;
        Ok(jc / jbar * (self.v1(jbar)? + 2.0 * g) - 2.0 * g)
    }
}

pub fn gamma_gibbs(model: &IfsModel) -> Result<f64> {
    Bounds::new(model).gamma_gibbs()
}

pub fn gamma_conj(model: &IfsModel) -> Result<f64> {
    Bounds::new(model).gamma_conj()
}

pub fn beta0_solve(model: &IfsModel) -> Result<f64> {
    Bounds::new(model).beta0()
}

pub fn j_average(model: &IfsModel) -> Result<f64> {
    Bounds::new(model).j_average()
}

/// Max over periodic orbits of period ≤ n_max of the average of V − J/2.
pub fn gamma_sc(model: &IfsModel, n_max: usize) -> Result<f64> {
    let d = model.potential.sub(&Observable::jacobian(0.5));
    let mut best = f64::NEG_INFINITY;
    for n in 1..=n_max.max(1) {
        for o in cycle_orbits(model, n, &[&d])? {
            best = best.max(o.sums[0] / n as f64);
        }
    }
    Ok(best)
}

/// Slack on the β₀ ≥ ½ test, matching the accuracy of the β₀ root.
pub const BETA_TOL: f64 = 1e-10;

fn up_case(beta0: f64, j_avg: f64, j_min: f64) -> bool {
    beta0 >= 0.5 - BETA_TOL && j_avg < 2.0 * j_min
}

/// γ_up with the case that fired.
pub fn gamma_up(model: &IfsModel) -> Result<(f64, Bound)> {
    let b = Bounds::new(model);
    let (j_min, _) = j_extremes(model, extreme_period(model))?;
    let gg = b.gamma_gibbs()?;
    let beta0 = b.beta0()?;
    if beta0 == 0.0 {
        return Ok((gg, Bound::Gibbs));
    }
    let ja = b.j_average()?;
    if up_case(beta0, ja, j_min) {
        Ok((b.gamma_conj()? + ja / 4.0, Bound::Up))
    } else {
        Ok((gg, Bound::Gibbs))
    }
}

/// Periods used for J extremes and γ_sc: enough for every simple cycle.
pub fn extreme_period(model: &IfsModel) -> usize {
    model.n_symbols().max(8).min(pressure::default_period(model))
}

/// Lowest of (Gibbs, sc, up) with lexicographic tie-breaking at [`TIE_TOL`].
pub fn best_of(gibbs: f64, sc: f64, up: f64) -> (Bound, bool) {
    let vals = [(Bound::Gibbs, gibbs), (Bound::Sc, sc), (Bound::Up, up)];
    let min = gibbs.min(sc).min(up);
    let winners: Vec<Bound> = vals.iter().filter(|(_, v)| *v <= min + TIE_TOL).map(|(b, _)| *b).collect();
    (winners[0], winners.len() > 1)
}

pub fn gap_report(model: &IfsModel) -> Result<GapReport> {
    let b = Bounds::new(model);
    let np = extreme_period(model);
    let (j_min, j_max) = j_extremes(model, np)?;
    let delta = pressure::hausdorff_dimension(model)?;
    let h_top = pressure::topological_entropy(model)?;
    let gamma_gibbs = b.gamma_gibbs()?;
    let gamma_conj = b.gamma_conj()?;
    let gamma_sc = gamma_sc(model, np)?;
    let beta0 = b.beta0()?;
    let j_avg = if beta0 > 0.0 { b.j_average()? } else { f64::NAN };
    let applicable = beta0 > 0.0 && up_case(beta0, j_avg, j_min);
    let gamma_up = if applicable { gamma_conj + j_avg / 4.0 } else { gamma_gibbs };
    let (best_bound, tie) = best_of(gamma_gibbs, gamma_sc, gamma_up);
    Ok(GapReport {
        delta,
        h_top,
        j_min,
        j_max,
        gamma_gibbs,
        gamma_sc,
        gamma_conj,
        gamma_up,
        beta0,
        j_avg,
        up_case_applicable: applicable,
        best_bound,
        tie,
    })
}

/// Closed-form γ(J_c) for 0 < J_c < 2J_min.
pub fn gamma_jc(model: &IfsModel, jc: f64) -> Result<f64> {
    JcForm::new(&Bounds::new(model), model)?.eval(jc)
}

// the four scalars the closed form needs
struct JcForm {
    j_min: f64,
    j_avg: f64,
    beta0: f64,
    gibbs: f64,
    conj: f64,
}

impl JcForm {
    fn new(b: &Bounds, model: &IfsModel) -> Result<JcForm> {
        let (j_min, _) = j_extremes(model, extreme_period(model))?;
        Ok(JcForm { j_min, j_avg: b.j_average()?, beta0: b.beta0()?, gibbs: b.gamma_gibbs()?, conj: b.gamma_conj()? })
    }

    fn eval(&self, jc: f64) -> Result<f64> {
        if !(jc > 0.0 && jc < 2.0 * self.j_min) {
            return Err(Error::OutOfRange(format!("J_c = {jc} outside (0, 2 J_min = {})", 2.0 * self.j_min)));
        }
        if jc >= self.j_avg {
            Ok(jc / 4.0 + self.conj)
        } else {
            Ok(jc / 4.0 - 0.5 * jc * self.beta0 + self.gibbs)
        }
    }
}

/// γ(J_c) on `steps` evenly spaced points of [jc_min, jc_max], with the
/// breakpoint ⟨J⟩ inserted when it falls inside.
pub fn gamma_curve(model: &IfsModel, jc_min: f64, jc_max: f64, steps: usize) -> Result<GammaCurve> {
    let b = Bounds::new(model);
    let form = JcForm::new(&b, model)?;
    let (j_min, j_max) = j_extremes(model, extreme_period(model))?;
    let steps = steps.max(2);
    let mut jc_grid: Vec<f64> =
        (0..steps).map(|k| jc_min + (jc_max - jc_min) * k as f64 / (steps - 1) as f64).collect();
    if form.j_avg > jc_min && form.j_avg < jc_max {
        let at = jc_grid.partition_point(|&x| x < form.j_avg);
        jc_grid.insert(at, form.j_avg);
    }
    let gamma_of_jc = jc_grid.iter().map(|&jc| form.eval(jc)).collect::<Result<Vec<_>>>()?;
    let j1_star = b.u(0.0)?.1;
    let j2_star = b.u(form.beta0)?.1;
    let mut v1 = Vec::new();
    let mut v2 = Vec::new();
    if j_max - j_min > 1e-10 {
        for k in 1..50 {
            let jb = j_min + (j_max - j_min) * k as f64 / 50.0;
            v1.push((jb, b.v1(jb)?));
            v2.push((jb, b.v2(jb, form.j_avg)?));
        }
    }
    Ok(GammaCurve { jc_grid, gamma_of_jc, j1_star, j2_star, v1, v2 })
}

/// Brute-force finite-n evaluation of the N*-split triple sum defining γ(J_c).
pub fn gamma_jc_direct(model: &IfsModel, jc: f64, n: usize) -> Result<f64> {
    let ns = model.n_symbols();
    let count = (ns as f64).powi(n as i32 + 1);
    if count > MAX_ENUMERATION {
        return Err(Error::EnumerationTooLarge(count));
    }
    if !(jc > 0.0) {
        return Err(Error::OutOfRange(format!("J_c = {jc} must be positive")));
    }
    let g = model.potential.sub(&Observable::jacobian(1.0));
    let threshold = n as f64 * jc;
    let starts: Vec<usize> = (0..ns).collect();
    let parts: Vec<(f64, f64)> = par::map(&starts, |&a| {
        let x = model.canonical_point(a, CODING_ORDER);
        let mut acc = (f64::NEG_INFINITY, 0.0);
        let mut ctx = Direct { model, g: &g, threshold, n };
        ctx.node(a, x, 0.0, 0.0, 0, &mut acc);
        acc
    });
    let mut tot = (f64::NEG_INFINITY, 0.0);
    for (m, s) in parts {
        lse_merge(&mut tot, m, s);
    }
    let log_sum = tot.0 + tot.1.ln();
    Ok(jc / 4.0 + log_sum / (2.0 * n as f64))
}

fn lse_merge(acc: &mut (f64, f64), m: f64, s: f64) {
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

struct Direct<'a> {
    model: &'a IfsModel,
    g: &'a Observable,
    threshold: f64,
    n: usize,
}

impl Direct<'_> {
    /// log Σ over words of length m from (a, x) of e^{g_w}.
    fn tail(&self, a: usize, x: f64, m: usize) -> f64 {
        if m == 0 {
            return 0.0;
        }
        let mut acc = (f64::NEG_INFINITY, 0.0);
        for j in self.model.successors(a) {
            let b = self.model.branch(a, j);
            let y = b.eval(x);
            lse_merge(&mut acc, self.g.value(b, x, y) + self.tail(j, y, m - 1), 1.0);
        }
        acc.0 + acc.1.ln()
    }

    // node at depth k with J_{w_{0,k}} = jsum < threshold and s = g_{w_{0,k}}
    fn node(&mut self, a: usize, x: f64, s: f64, jsum: f64, k: usize, acc: &mut (f64, f64)) {
        if k == self.n {
            lse_merge(acc, 2.0 * s, 1.0);
            return;
        }
        let mut inner: Option<f64> = None;
        for j in self.model.successors(a) {
            let b = self.model.branch(a, j);
            let y = b.eval(x);
            let gj = self.g.value(b, x, y);
            let jn = jsum + b.jacobian(x);
            if jn < self.threshold {
                self.node(j, y, s + gj, jn, k + 1, acc);
            } else {
                // N* = k: e^{2 g_{0,k}} · e^{g_{k,n}} summed over continuations through j,
                // times the free sum over w'_{k,n}
                let inn = *inner.get_or_insert_with(|| self.tail(a, x, self.n - k));
                let child = gj + self.tail(j, y, self.n - k - 1);
                lse_merge(acc, 2.0 * s + child + inn, 1.0);
            }
        }
    }
}

/// Phase diagram of the two-branch linear family with V = (1−a)J.
pub fn classify(a: f64, delta_grid: &[f64], omega_grid: &[f64]) -> PhaseDiagram {
    let pts: Vec<(f64, f64)> =
        omega_grid.iter().flat_map(|&w| delta_grid.iter().map(move |&d| (d, w))).collect();
    let cells = par::map(&pts, |&(delta, omega)| classify_cell(a, delta, omega));
    PhaseDiagram { a, cells }
}

pub fn classify_cell(a: f64, delta: f64, omega: f64) -> PhaseCell {
    let infeasible = PhaseCell {
        delta,
        omega,
        feasible: false,
        label: None,
        tie: false,
        gamma_gibbs: f64::NAN,
        gamma_sc: f64::NAN,
        gamma_up: f64::NAN,
    };
    let Ok(m) = make_linear_from(delta, omega) else {
        return infeasible;
    };
    let m = m.with_potential(Observable::jacobian(1.0 - a));
    let eval = || -> Result<(f64, f64, f64)> {
        let gg = gamma_gibbs(&m)?;
        let sc = gamma_sc(&m, 2)?;
        let up = gamma_up(&m)?.0;
        Ok((gg, sc, up))
    };
    match eval() {
        Ok((gg, sc, up)) => {
            let (label, tie) = best_of(gg, sc, up);
            PhaseCell { delta, omega, feasible: true, label: Some(label), tie, gamma_gibbs: gg, gamma_sc: sc, gamma_up: up }
        }
        Err(_) => infeasible,
    }
}
