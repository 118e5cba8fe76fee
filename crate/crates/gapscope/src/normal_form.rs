//! Global normal form along bi-infinite words and the dilation expansion.
//!
//! A word w is stored as a finite past (w_{-m},…,w_0), a finite future
//! (w_0,…,w_n) and its coding point x_w. Orbit points are x_{L^k w} = φ_{w_{0,k}}(x_w).

use crate::error::{Error, Result};
use crate::ifs_core::{Branch, IfsModel, Observable};
use crate::par;
use num_complex::Complex64;
use serde::Serialize;
use std::f64::consts::PI;

/// Length of the canonical past used when none is given.
pub const PAST_ORDER: usize = 60;
/// Initial half-width of 𝒥 relative to |I_{w_0}|.
pub const J_FRACTION: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BiWord {
    pub past: Vec<usize>,
    pub future: Vec<usize>,
    pub x_w: f64,
}

impl BiWord {
    /// Past ends with w_0 and the future starts with it.
    pub fn new(model: &IfsModel, past: Vec<usize>, future: Vec<usize>) -> Result<BiWord> {
        if past.is_empty() || future.is_empty() || past.last() != future.first() {
            return Err(Error::InadmissibleWord(past.iter().chain(future.iter()).copied().collect()));
        }
        model.check_word(&past)?;
        model.check_word(&future)?;
        let x_w = model.nested_interval(&past).0;
        Ok(BiWord { past, future, x_w })
    }

    /// Canonical past of letters[0], letters continued canonically to `total` letters.
    pub fn canonical(model: &IfsModel, letters: &[usize], total: usize) -> Result<BiWord> {
        if letters.is_empty() {
            return Err(Error::InadmissibleWord(vec![]));
        }
        model.check_word(letters)?;
        let past = model.canonical_past(letters[0], PAST_ORDER);
        let future = crate::phase_space::canonical_future(model, letters, total.max(letters.len()));
        BiWord::new(model, past, future)
    }

    /// The periodic word …c c c… with w_0 = c_0.
    pub fn periodic(model: &IfsModel, cycle: &[usize], total: usize) -> Result<BiWord> {
        let p = cycle.len();
        if p == 0 || !model.allowed(cycle[p - 1], cycle[0]) {
            return Err(Error::InadmissibleWord(cycle.to_vec()));
        }
        let m = PAST_ORDER - PAST_ORDER % p;
        let past: Vec<usize> = (0..=m).map(|j| cycle[j % p]).collect();
        let future: Vec<usize> = (0..total.max(1)).map(|k| cycle[k % p]).collect();
        BiWord::new(model, past, future)
    }

    pub fn w0(&self) -> usize {
        self.future[0]
    }

    /// L(w): one step along the future.
    pub fn shift(&self, model: &IfsModel) -> Result<BiWord> {
        if self.future.len() < 2 {
            return Err(Error::OutOfRange("future too short to shift".into()));
        }
        let mut past = self.past.clone();
        past.push(self.future[1]);
        let x_w = model.branch(self.future[0], self.future[1]).eval(self.x_w);
        Ok(BiWord { past, future: self.future[1..].to_vec(), x_w })
    }

    pub fn shift_by(&self, model: &IfsModel, k: usize) -> Result<BiWord> {
        let mut w = self.clone();
        for _ in 0..k {
            w = w.shift(model)?;
        }
        Ok(w)
    }

    fn need(&self, n: usize) -> Result<()> {
        if self.future.len() < n + 1 {
            return Err(Error::OutOfRange(format!(
                "word future of {} letters is shorter than order {n} + 1",
                self.future.len()
            )));
        }
        Ok(())
    }

    fn br<'m>(&self, model: &'m IfsModel, k: usize) -> &'m Branch {
        model.branch(self.future[k], self.future[k + 1])
    }

    /// x_{L^k w} for k = 0..=n and the signed derivative (φ_{w_{0,n}})'(x_w).
    pub fn orbit(&self, model: &IfsModel, n: usize) -> Result<(Vec<f64>, f64)> {
        self.need(n)?;
        let mut xs = Vec::with_capacity(n + 1);
        let mut x = self.x_w;
        let mut d = 1.0;
        xs.push(x);
        for k in 0..n {
            let b = self.br(model, k);
            d *= b.deriv(x);
            x = b.eval(x);
            xs.push(x);
        }
        Ok((xs, d))
    }
}

fn max_slope(model: &IfsModel, obs: &Observable) -> f64 {
    const GRID: usize = 257;
    let mut m = 0.0f64;
    for b in &model.branches {
        let iv = model.intervals[b.source];
        for k in 0..GRID {
            let x = iv.lo + iv.width() * k as f64 / (GRID - 1) as f64;
            m = m.max(obs.deriv(b, x, b.eval(x)).abs());
        }
    }
    m
}

/// (Υ⁽⁰⁾, Υ⁽¹⁾) with Υ_w = Υ⁽⁰⁾ + iℏΥ⁽¹⁾, summed over `order` terms.
pub fn upsilon_parts(model: &IfsModel, word: &BiWord, y: f64, order: usize) -> Result<(f64, f64)> {
    word.need(order)?;
    let w0 = word.w0();
    if !model.intervals[w0].contains_approx(y) {
        return Err(Error::PointOutsideInterval(y, w0 + 1));
    }
    let (mut y, mut x) = (y, word.x_w);
    let (mut u0, mut u1) = (0.0, 0.0);
    for k in 0..order {
        let b = word.br(model, k);
        let (yn, xn) = (b.eval(y), b.eval(x));
        u0 -= model.tau.value(b, y, yn) - model.tau.value(b, x, xn);
        u1 += model.potential.value(b, y, yn) - model.potential.value(b, x, xn);
        y = yn;
        x = xn;
    }
    Ok((u0, u1))
}

/// Υ_w(y) = −Σ_{k<order} (𝒱(φ_{w_{0,k+1}} y) − 𝒱(x_{L^{k+1}w})) with 𝒱 = τ − iℏV.
pub fn upsilon(model: &IfsModel, hbar: f64, word: &BiWord, y: f64, order: usize) -> Result<Complex64> {
    let (u0, u1) = upsilon_parts(model, word, y, order)?;
    Ok(Complex64::new(u0, hbar * u1))
}

/// (Lip τ + ℏ Lip V)·|I_{w_0}|·θ^{order+1}/(1−θ)
pub fn upsilon_tail(model: &IfsModel, hbar: f64, word: &BiWord, order: usize) -> f64 {
    let th = model.theta;
    let lip = max_slope(model, &model.tau) + hbar.abs() * max_slope(model, &model.potential);
    lip * model.intervals[word.w0()].width() * th.powi(order as i32 + 1) / (1.0 - th)
}

/// sup over ys of |Υ_w − Υ_{w'}|; both words must start with the same letter.
pub fn upsilon_distance(
    model: &IfsModel,
    hbar: f64,
    w: &BiWord,
    w_prime: &BiWord,
    ys: &[f64],
    order: usize,
) -> Result<f64> {
    let mut m = 0.0f64;
    for &y in ys {
        let d = upsilon(model, hbar, w, y, order)? - upsilon(model, hbar, w_prime, y, order)?;
        m = m.max(d.norm());
    }
    Ok(m)
}

/// sup over ys ⊂ I_{w_0} of |Υ_{L(w)}(φ_{w_0w_1}y) − Υ_w(y) − 𝒱(φ_{w_0w_1}y) + 𝒱(x_{L(w)})|.
pub fn homological_residual(model: &IfsModel, hbar: f64, word: &BiWord, ys: &[f64], order: usize) -> Result<f64> {
    word.need(order + 1)?;
    let lw = word.shift(model)?;
    let b = word.br(model, 0);
    let cal_v = |x: f64, y: f64| Complex64::new(model.tau.value(b, x, y), -hbar * model.potential.value(b, x, y));
    let mut m = 0.0f64;
    for &y in ys {
        let fy = b.eval(y);
        let lhs = upsilon(model, hbar, &lw, fy, order)? - upsilon(model, hbar, word, y, order)?;
        let rhs = cal_v(y, fy) - cal_v(word.x_w, lw.x_w);
        m = m.max((lhs - rhs).norm());
    }
    Ok(m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Scatter {
    pub value: f64,
    /// |H^{(n)} − H^{(n−1)}|
    pub cauchy_gap: f64,
}

fn outside(k: usize, word: &BiWord, x: f64) -> Error {
    Error::OutsideDomain(format!("scattering iterate {x} at step {k} leaves I_{}", word.future[k] + 1))
}

// f_{w_{0,n}}^{-1}(D z), with D the signed derivative of φ_{w_{0,n}} at x_w
fn scatter_n(model: &IfsModel, word: &BiWord, xs: &[f64], d: f64, z: f64, n: usize) -> Result<f64> {
    let mut s = d * z;
    for k in (0..n).rev() {
        let b = word.br(model, k);
        let dom = model.intervals[b.source];
        s = b
            .map
            .inverse_increment(xs[k], s, dom)
            .ok_or_else(|| outside(k, word, f64::NAN))?;
        if !dom.contains_approx(xs[k] + s) {
            return Err(outside(k, word, xs[k] + s));
        }
    }
    Ok(s)
}

/// n-th scattering approximation H_w^{(n)}(z) and its Cauchy gap.
///
/// The dilation uses the signed derivative (φ_{w_{0,n}})'(x_w), which equals
/// e^{−J_{w_{0,n}}(x_w)} up to the orientation sign, so that H'_w(0) = 1 always.
pub fn h_scatter(model: &IfsModel, word: &BiWord, z: f64, n: usize) -> Result<Scatter> {
    let (xs, d) = word.orbit(model, n)?;
    let value = scatter_n(model, word, &xs, d, z, n)?;
    let cauchy_gap = if n == 0 {
        0.0
    } else {
        let d1 = d / word.br(model, n - 1).deriv(xs[n - 1]);
        (value - scatter_n(model, word, &xs, d1, z, n - 1)?).abs()
    };
    Ok(Scatter { value, cauchy_gap })
}

/// (H_w^{(n)})^{-1}(v) = f_{w_{0,n}}(v)/D by forward composition.
pub fn h_inverse(model: &IfsModel, word: &BiWord, v: f64, n: usize) -> Result<f64> {
    let (xs, d) = word.orbit(model, n)?;
    let w0 = word.w0();
    if !model.intervals[w0].contains_approx(xs[0] + v) {
        return Err(outside(0, word, xs[0] + v));
    }
    let mut s = v;
    for k in 0..n {
        s = word.br(model, k).map.increment(xs[k], s);
    }
    Ok(s / d)
}

/// Half-width of 𝒥: 0.4|I_{w_0}|, halved until H^{(n)} is defined at both ends.
pub fn admissible_radius(model: &IfsModel, word: &BiWord, n: usize) -> Result<f64> {
    let (xs, d) = word.orbit(model, n)?;
    let mut r = J_FRACTION * model.intervals[word.w0()].width();
    for _ in 0..60 {
        if scatter_n(model, word, &xs, d, r, n).is_ok() && scatter_n(model, word, &xs, d, -r, n).is_ok() {
            return Ok(r);
        }
        r *= 0.5;
    }
    Err(Error::OutsideDomain("no admissible neighbourhood of 0".into()))
}

/// sup over zs of |H_{L(w)}(φ'_{w_0w_1}(x_w) z) − f_{w_0w_1}(H_w(z))|, both at order n.
pub fn conjugation_residual(model: &IfsModel, word: &BiWord, zs: &[f64], n: usize) -> Result<f64> {
    word.need(n + 1)?;
    let lw = word.shift(model)?;
    let b = word.br(model, 0);
    let d1 = b.deriv(word.x_w);
    let mut m = 0.0f64;
    for &z in zs {
        let lhs = h_scatter(model, &lw, d1 * z, n)?.value;
        let rhs = b.map.increment(word.x_w, h_scatter(model, word, z, n)?.value);
        m = m.max((lhs - rhs).abs());
    }
    Ok(m)
}

/// Fixed test functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TestFunction {
    /// exp(−u²/2), u = (x − center)/width, set to 0 once below 1e-17.
    Gaussian { center: f64, width: f64 },
    /// u·exp(−u²/2), same truncation.
    GaussianDerivative { center: f64, width: f64 },
    /// exp(−1/(1 − u²)) for |u| < 1, u = (x − center)/radius, else 0.
    Bump { center: f64, radius: f64 },
}

impl TestFunction {
    pub fn eval(&self, x: f64) -> f64 {
        match *self {
            TestFunction::Gaussian { center, width } => {
                let u = (x - center) / width;
                if u * u > 78.3 { 0.0 } else { (-0.5 * u * u).exp() }
            }
            TestFunction::GaussianDerivative { center, width } => {
                let u = (x - center) / width;
                if u * u > 86.0 { 0.0 } else { u * (-0.5 * u * u).exp() }
            }
            TestFunction::Bump { center, radius } => {
                let u = (x - center) / radius;
                if u.abs() >= 1.0 { 0.0 } else { (-1.0 / (1.0 - u * u)).exp() }
            }
        }
    }
}

// log of e^{i𝒱/ℏ} = e^{iτ/ℏ + V} along branch b from x to y
fn phase_log(model: &IfsModel, hbar: f64, b: &Branch, x: f64, y: f64) -> Complex64 {
    Complex64::new(model.potential.value(b, x, y), model.tau.value(b, x, y) / hbar)
}

// log of e^{iΥ/ℏ}
fn upsilon_log(model: &IfsModel, word: &BiWord, y: f64, order: usize) -> Result<(f64, f64)> {
    let (u0, u1) = upsilon_parts(model, word, y, order)?;
    Ok((-u1, u0))
}

/// Pointwise defect of L_{w_{0,s}} = e^{i𝒱_{w_{0,s}}(x_w)/ℏ} 𝒯_{L^s w} D 𝒯_w^{-1} applied to a test function.
///
/// The evaluation points are x = φ_{w_{0,s}}(x_w + H_w(z)) for z in zs ⊂ 𝒥. The left side pulls x
/// back through the branch inverses; the right side goes through Υ, H and the dilation.
pub fn transfer_conjugation_defect(
    model: &IfsModel,
    hbar: f64,
    word: &BiWord,
    steps: usize,
    test: &TestFunction,
    zs: &[f64],
    order: usize,
) -> Result<f64> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::OutOfRange(format!("hbar = {hbar} must be positive and finite")));
    }
    if steps == 0 {
        return Err(Error::OutOfRange("at least one step".into()));
    }
    word.need(order + steps)?;
    let lsw = word.shift_by(model, steps)?;
    let (xs, ds) = word.orbit(model, steps)?;
    let mut cal_vs = Complex64::new(0.0, 0.0);
    for k in 0..steps {
        cal_vs += phase_log(model, hbar, word.br(model, k), xs[k], xs[k + 1]);
    }
    let mut m = 0.0f64;
    for &z in zs {
        let mut x = xs[0] + h_scatter(model, word, z, order)?.value;
        for k in 0..steps {
            x = word.br(model, k).eval(x);
        }
        // left side
        let mut y = x;
        let mut lhs_log = Complex64::new(0.0, 0.0);
        for k in (0..steps).rev() {
            let b = word.br(model, k);
            let dom = model.intervals[b.source];
            let yp = b.map.inverse(y, dom).ok_or_else(|| outside(k, word, y))?;
            lhs_log += phase_log(model, hbar, b, yp, y);
            y = yp;
        }
        let lhs = lhs_log.exp() * test.eval(y);
        // right side
        let (a1, p1) = upsilon_log(model, &lsw, x, order)?;
        let zp = h_inverse(model, &lsw, x - lsw.x_w, order)? / ds;
        let yr = xs[0] + h_scatter(model, word, zp, order)?.value;
        let (a2, p2) = upsilon_log(model, word, yr, order)?;
        let rhs_log = cal_vs + Complex64::new(a1 - a2, (p1 - p2) / hbar);
        let rhs = rhs_log.exp() * test.eval(yr);
        m = m.max((lhs - rhs).norm());
    }
    Ok(m)
}

/// Single-step transfer conjugation defect.
pub fn transfer_conjugation_check(
    model: &IfsModel,
    hbar: f64,
    word: &BiWord,
    test: &TestFunction,
    zs: &[f64],
    order: usize,
) -> Result<f64> {
    transfer_conjugation_defect(model, hbar, word, 1, test, zs, order)
}

/// Uniform grid of `n` points on [−r, r].
pub fn symmetric_grid(r: f64, n: usize) -> Vec<f64> {
    if n < 2 {
        return vec![0.0];
    }
    (0..n).map(|k| -r + 2.0 * r * k as f64 / (n - 1) as f64).collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct NormalFormData {
    pub past: Vec<usize>,
    pub future: Vec<usize>,
    pub x_w: f64,
    pub hbar: f64,
    pub order: usize,
    pub upsilon_tail: f64,
    /// (y, Re Υ_w(y), Im Υ_w(y), ζ_{w+}(y), dΥ⁽⁰⁾/dy by central difference)
    pub upsilon: Vec<(f64, f64, f64, f64, f64)>,
    pub j_radius: f64,
    /// (z, H_w(z), Cauchy gap)
    pub h_map: Vec<(f64, f64, f64)>,
    pub upsilon_at_x_w: f64,
    pub h_at_0: f64,
    pub h_prime_at_0: f64,
    pub conjugation_residual: f64,
}

/// dΥ⁽⁰⁾/dy by central difference with step 1e-5·|I_{w_0}|, one-sided at the ends.
pub fn d_upsilon0(model: &IfsModel, word: &BiWord, y: f64, order: usize) -> Result<f64> {
    let iv = model.intervals[word.w0()];
    let h = 1e-5 * iv.width();
    let (a, b) = ((y - h).max(iv.lo), (y + h).min(iv.hi));
    Ok((upsilon_parts(model, word, b, order)?.0 - upsilon_parts(model, word, a, order)?.0) / (b - a))
}

/// H'_w(0) by central difference.
pub fn h_prime_at_zero(model: &IfsModel, word: &BiWord, n: usize) -> Result<f64> {
    let h = 1e-5 * model.intervals[word.w0()].width();
    Ok((h_scatter(model, word, h, n)?.value - h_scatter(model, word, -h, n)?.value) / (2.0 * h))
}

/// Samples Υ_w on I_{w_0} and H_w on 𝒥 with the anchors.
pub fn normal_form_data(model: &IfsModel, hbar: f64, word: &BiWord, order: usize, samples: usize) -> Result<NormalFormData> {
    word.need(order + 1)?;
    let iv = model.intervals[word.w0()];
    let leaf = crate::phase_space::zeta_leaf(model, &crate::ifs_core::Word::open(word.future.clone()), order)?;
    let n = samples.max(2);
    let mut ups = Vec::with_capacity(n);
    for k in 0..n {
        let y = iv.lo + iv.width() * k as f64 / (n - 1) as f64;
        let u = upsilon(model, hbar, word, y, order)?;
        ups.push((y, u.re, u.im, leaf.value(y)?, d_upsilon0(model, word, y, order)?));
    }
    let r = admissible_radius(model, word, order)?;
    let zs = symmetric_grid(r, n);
    let h_map = zs
        .iter()
        .map(|&z| h_scatter(model, word, z, order).map(|s| (z, s.value, s.cauchy_gap)))
        .collect::<Result<Vec<_>>>()?;
    let lw_r = admissible_radius(model, &word.shift(model)?, order)?;
    let d1 = word.br(model, 0).deriv(word.x_w).abs();
    let zc: Vec<f64> = zs.iter().copied().filter(|z| z.abs() * d1 <= lw_r).collect();
    Ok(NormalFormData {
        past: word.past.clone(),
        future: word.future.clone(),
        x_w: word.x_w,
        hbar,
        order,
        upsilon_tail: upsilon_tail(model, hbar, word, order),
        upsilon: ups,
        j_radius: r,
        h_map,
        upsilon_at_x_w: upsilon(model, hbar, word, word.x_w, order)?.norm(),
        h_at_0: h_scatter(model, word, 0.0, order)?.value,
        h_prime_at_0: h_prime_at_zero(model, word, order)?,
        conjugation_residual: conjugation_residual(model, word, &zc, order)?,
    })
}

/// χ₀ = 1 on [−e^{−λ₀}y₀, e^{−λ₀}y₀], 0 outside [−y₀, y₀], smooth step in between.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSpec {
    pub y0: f64,
    pub lambda0: f64,
}

impl Default for ChiSpec {
    fn default() -> ChiSpec {
        ChiSpec { y0: 1.0, lambda0: 1.0 }
    }
}

impl ChiSpec {
    pub fn eval(&self, x: f64) -> f64 {
        let a = (-self.lambda0).exp() * self.y0;
        let r = x.abs();
        if r <= a {
            1.0
        } else if r >= self.y0 {
            0.0
        } else {
            let t = (self.y0 - r) / (self.y0 - a);
            let p = (-1.0 / t).exp();
            let q = (-1.0 / (1.0 - t)).exp();
            p / (p + q)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DilationResidual {
    /// ‖⟨ξ⟩^{−m} 𝓕_ℏψ‖_{L²}
    pub value: f64,
    /// ξ-window [−window, window]
    pub window: f64,
    /// final trapezoid step in u, ξ = sinh u
    pub step: f64,
}

const X_NODES: usize = 2048;
const TAIL_FRACTION: f64 = 1e-6;
const REL_TOL: f64 = 1e-9;
const MAX_HALVINGS: usize = 12;

// e^{−iu} − Σ_{k≤d} (−iu)^k/k!, or e^{−iu} itself when d is None
fn exp_remainder(u: f64, d: Option<usize>) -> Complex64 {
    let Some(d) = d else { return Complex64::from_polar(1.0, -u) };
    if u.abs() < 1.0 {
        let mut term = Complex64::new(1.0, 0.0);
        for k in 1..=d {
            term *= Complex64::new(0.0, -u) / k as f64;
        }
        let mut s = Complex64::new(0.0, 0.0);
        for k in d + 1..d + 40 {
            term *= Complex64::new(0.0, -u) / k as f64;
            s += term;
            if term.norm() < 1e-18 * s.norm() {
                break;
            }
        }
        s
    } else {
        let mut s = Complex64::from_polar(1.0, -u);
        let mut term = Complex64::new(1.0, 0.0);
        for k in 0..=d {
            if k > 0 {
                term *= Complex64::new(0.0, -u) / k as f64;
            }
            s -= term;
        }
        s
    }
}

struct Profile {
    xs: Vec<f64>,
    gs: Vec<f64>,
    h: f64,
    moments: Vec<f64>,
    s_cut: f64,
    d: Option<usize>,
}

impl Profile {
    fn new(chi: &ChiSpec, test: &TestFunction, d: Option<usize>) -> Result<Profile> {
        let h = 2.0 * chi.y0 / (X_NODES - 1) as f64;
        let xs: Vec<f64> = (0..X_NODES).map(|j| -chi.y0 + h * j as f64).collect();
        let gs: Vec<f64> = xs.iter().map(|&x| chi.eval(x) * test.eval(x)).collect();
        let kmax = d.map_or(0, |d| d + 1);
        let moments = (0..kmax)
            .map(|k| h * xs.iter().zip(&gs).map(|(x, g)| x.powi(k as i32) * g).sum::<f64>())
            .collect();
        let mut p = Profile { xs, gs, h, moments, s_cut: f64::INFINITY, d };
        let l1: f64 = h * p.gs.iter().map(|g| g.abs()).sum::<f64>();
        if l1 == 0.0 {
            return Err(Error::OutOfRange("test function vanishes on the support of chi0".into()));
        }
        let nyquist = 0.5 * PI / h;
        let mut s = 1.0 / chi.y0;
        loop {
            if s > nyquist {
                return Err(Error::QuadratureNotConverged(format!(
                    "Fourier transform of chi0 * test not below 1e-15 before s = {nyquist}"
                )));
            }
            if [1.0, 1.37, 1.71].iter().all(|f| p.fourier(f * s).norm() < 1e-15 * l1) {
                p.s_cut = s;
                break;
            }
            s *= 2.0;
        }
        Ok(p)
    }

    // ∫ e^{−ixs} g(x) dx
    fn fourier(&self, s: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for (x, g) in self.xs.iter().zip(&self.gs) {
            if *g != 0.0 {
                acc += Complex64::from_polar(*g, -x * s);
            }
        }
        acc * self.h
    }

    fn taylor(&self, s: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut pw = Complex64::new(1.0, 0.0);
        let mut fact = 1.0;
        for (k, mk) in self.moments.iter().enumerate() {
            if k > 0 {
                pw *= Complex64::new(0.0, -s);
                fact *= k as f64;
            }
            acc += pw * (mk / fact);
        }
        acc
    }

    // ∫ (e^{−ixs} − Σ_{k≤d}(−ixs)^k/k!) g(x) dx
    fn remainder(&self, s: f64) -> Complex64 {
        let y0 = self.xs[self.xs.len() - 1];
        if s.abs() * y0 < 1.0 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (x, g) in self.xs.iter().zip(&self.gs) {
                if *g != 0.0 {
                    acc += exp_remainder(x * s, self.d) * *g;
                }
            }
            acc * self.h
        } else if s.abs() <= self.s_cut {
            self.fourier(s) - self.taylor(s)
        } else {
            -self.taylor(s)
        }
    }
}

fn check_dilation_args(hbar: f64, lambda: f64, d: Option<usize>, m: f64, chi: &ChiSpec) -> Result<()> {
    if !(hbar > 0.0 && hbar.is_finite()) {
        return Err(Error::OutOfRange(format!("hbar = {hbar} must be positive")));
    }
    if !(chi.y0 > 0.0 && chi.lambda0 > 0.0) {
        return Err(Error::OutOfRange("chi0 needs y0 > 0 and lambda0 > 0".into()));
    }
    if !(lambda >= chi.lambda0) {
        return Err(Error::OutOfRange(format!("lambda = {lambda} below lambda0 = {}", chi.lambda0)));
    }
    let dd = d.map_or(-1.0, |d| d as f64);
    if !(m > dd + 1.5) {
        return Err(Error::OutOfRange(format!("need m > d + 3/2, got m = {m}, d = {dd}")));
    }
    Ok(())
}

fn sobolev_norm(hbar: f64, lambda: f64, m: f64, p: &Profile) -> Result<DilationResidual> {
    let el = (-lambda).exp();
    let pref = el / (2.0 * PI * hbar).sqrt();
    let dd = p.d.map_or(-1.0, |d| d as f64);
    let rate = 2.0 * m - 1.0 - 2.0 * dd.max(0.0);
    let g = |u: f64| {
        let xi = u.sinh();
        let f = pref * p.remainder(el * xi / hbar);
        u.cosh().powf(1.0 - 2.0 * m) * f.norm_sqr()
    };
    // window: past s_cut, then until the asymptotic tail is negligible
    let u_cut = (4.0 * p.s_cut * hbar / el).asinh();
    let mut big_u = u_cut.max(4.0).ceil();
    let coarse = |big_u: f64| {
        let n = (big_u / 0.05).ceil() as usize;
        let h = big_u / n as f64;
        let vals = par::map_range(2 * n + 1, |j| g(-big_u + h * j as f64));
        h * (vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[2 * n]))
    };
    let mut total = coarse(big_u);
    for _ in 0..200 {
        let tail = (g(big_u) + g(-big_u)) / rate;
        if tail <= TAIL_FRACTION * total {
            break;
        }
        big_u += 1.0;
        total = coarse(big_u);
    }
    let mut n = (big_u / 0.1).ceil() as usize;
    let mut h = big_u / n as f64;
    let mut vals = par::map_range(2 * n + 1, |j| g(-big_u + h * j as f64));
    let mut sum = vals.iter().sum::<f64>() - 0.5 * (vals[0] + vals[2 * n]);
    let mut est = h * sum;
    for _ in 0..MAX_HALVINGS {
        let hn = 0.5 * h;
        vals = par::map_range(2 * n, |j| g(-big_u + hn * (2 * j + 1) as f64));
        sum += vals.iter().sum::<f64>();
        n *= 2;
        h = hn;
        let next = h * sum;
        if (next - est).abs() <= REL_TOL * next.abs() {
            return Ok(DilationResidual { value: next.sqrt(), window: big_u.sinh(), step: h });
        }
        est = next;
    }
    Err(Error::QuadratureNotConverged(format!("xi integral after {MAX_HALVINGS} halvings, step {h}")))
}

/// ‖(D̂_λχ̂₀ − Σ_{k≤d} e^{−(k+1)λ}Π_k) test‖ in H_ℏ^{−m}.
pub fn dilation_expansion_residual(
    hbar: f64,
    lambda: f64,
    d: usize,
    m: f64,
    chi: &ChiSpec,
    test: &TestFunction,
) -> Result<DilationResidual> {
    check_dilation_args(hbar, lambda, Some(d), m, chi)?;
    sobolev_norm(hbar, lambda, m, &Profile::new(chi, test, Some(d))?)
}

/// ‖D̂_λχ̂₀ test‖ in H_ℏ^{−m}.
pub fn dilation_norm(hbar: f64, lambda: f64, m: f64, chi: &ChiSpec, test: &TestFunction) -> Result<DilationResidual> {
    check_dilation_args(hbar, lambda, None, m, chi)?;
    sobolev_norm(hbar, lambda, m, &Profile::new(chi, test, None)?)
}

#[derive(Debug, Clone, Serialize)]
pub struct DilationCheckReport {
    pub hbar: f64,
    pub lambda_grid: Vec<f64>,
    pub d: usize,
    pub m: f64,
    pub residual_norms: Vec<f64>,
    /// least-squares slope of log residual against λ
    pub fitted_slope: f64,
    pub predicted_slope: f64,
}

pub fn dilation_check(
    hbar: f64,
    lambdas: &[f64],
    d: usize,
    m: f64,
    chi: &ChiSpec,
    test: &TestFunction,
) -> Result<DilationCheckReport> {
    if lambdas.len() < 2 {
        return Err(Error::OutOfRange("need at least two lambda values".into()));
    }
    for &l in lambdas {
        check_dilation_args(hbar, l, Some(d), m, chi)?;
    }
    let prof = Profile::new(chi, test, Some(d))?;
    let residual_norms = lambdas
        .iter()
        .map(|&l| sobolev_norm(hbar, l, m, &prof).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    let logs: Vec<f64> = residual_norms.iter().map(|r| r.ln()).collect();
    Ok(DilationCheckReport {
        hbar,
        lambda_grid: lambdas.to_vec(),
        d,
        m,
        fitted_slope: ls_slope(lambdas, &logs),
        predicted_slope: -(d as f64 + 2.0),
        residual_norms,
    })
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}
