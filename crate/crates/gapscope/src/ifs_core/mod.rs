//! Iterated function schemes: intervals, contracting branches, admissible
//! words, orbit composition, Birkhoff sums and the pointwise transfer operator.
//!
//! Symbols are 0-based throughout the library; the CLI speaks 1-based.

mod branch;
pub mod expr;
mod observable;
mod periodic;
mod words;

pub use branch::BranchMap;
pub use observable::Observable;
pub use periodic::{cycle_orbits, necklaces, CycleOrbit};
pub use words::{enumerate_words, for_each_open_word, Word, WordIter, WordKind};

use crate::error::{Error, Result};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl Interval {
    pub fn new(lo: f64, hi: f64) -> Interval {
        Interval { lo, hi }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.lo && x <= self.hi
    }

    /// Contains x up to a relative slack of 1e-12 of the width.
    pub fn contains_approx(&self, x: f64) -> bool {
        let s = 1e-12 * self.width().max(1e-300);
        x >= self.lo - s && x <= self.hi + s
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub source: usize,
    pub target: usize,
    pub map: BranchMap,
    /// σ = sign of φ' on the source interval.
    pub sign: f64,
}

impl Branch {
    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        self.map.eval(x)
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        self.map.deriv(x)
    }

    /// J_{i,j}(x) = −log|φ'_{i,j}(x)|
    #[inline]
    pub fn jacobian(&self, x: f64) -> f64 {
        -self.map.deriv(x).abs().ln()
    }
}

/// The full dynamical datum: intervals, branches, adjacency, roof τ and potential V.
#[derive(Debug, Clone)]
pub struct IfsModel {
    pub label: String,
    pub intervals: Vec<Interval>,
    pub adjacency: Vec<Vec<bool>>,
    pub branches: Vec<Branch>,
    index: Vec<Vec<Option<usize>>>,
    pub theta: f64,
    pub tau: Observable,
    pub potential: Observable,
}

#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub theta: f64,
    pub transitivity_power: usize,
    pub min_image_gap: f64,
    pub n_branches: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct OrbitData {
    pub word: Vec<usize>,
    pub x_values: Vec<f64>,
    pub derivative: f64,
    pub sign: f64,
    pub birkhoff_j: f64,
    pub birkhoff_v: f64,
    pub birkhoff_tau: f64,
    /// Σ 𝒱 with 𝒱 = τ − iℏV, when ℏ was given.
    pub birkhoff_cal_v: Option<(f64, f64)>,
}

const SAMPLE_GRID: usize = 257;

impl IfsModel {
    pub fn new(intervals: Vec<Interval>, adjacency: Vec<Vec<bool>>, branches: Vec<Branch>) -> Result<IfsModel> {
        let n = intervals.len();
        if n == 0 {
            return Err(Error::InvalidModel("no intervals".into()));
        }
        if adjacency.len() != n || adjacency.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidModel("adjacency must be N x N".into()));
        }
        for (k, iv) in intervals.iter().enumerate() {
            if !(iv.lo < iv.hi) || !iv.lo.is_finite() || !iv.hi.is_finite() {
                return Err(Error::IntervalsOverlap(k, k));
            }
        }
        let mut index = vec![vec![None; n]; n];
        let mut branches = branches;
        for (k, b) in branches.iter_mut().enumerate() {
            if b.source >= n || b.target >= n {
                return Err(Error::InvalidModel(format!("branch {k} has symbol out of range")));
            }
            if !adjacency[b.source][b.target] {
                return Err(Error::InvalidModel(format!(
                    "branch ({},{}) not allowed by adjacency",
                    b.source + 1,
                    b.target + 1
                )));
            }
            if index[b.source][b.target].is_some() {
                return Err(Error::InvalidModel(format!("duplicate branch ({},{})", b.source + 1, b.target + 1)));
            }
            index[b.source][b.target] = Some(k);
            let d = b.map.deriv(intervals[b.source].mid());
            b.sign = if d < 0.0 { -1.0 } else { 1.0 };
        }
        for i in 0..n {
            for j in 0..n {
                if adjacency[i][j] && index[i][j].is_none() {
                    return Err(Error::InvalidModel(format!("missing branch ({},{})", i + 1, j + 1)));
                }
            }
        }
        let mut m = IfsModel {
            label: "custom".into(),
            intervals,
            adjacency,
            branches,
            index,
            theta: 0.0,
            tau: Observable::zero(),
            potential: Observable::zero(),
        };
        m.theta = m.sampled_theta(SAMPLE_GRID);
        Ok(m)
    }

    pub fn n_symbols(&self) -> usize {
        self.intervals.len()
    }

    pub fn with_tau(mut self, tau: Observable) -> IfsModel {
        self.tau = tau;
        self
    }

    pub fn with_potential(mut self, v: Observable) -> IfsModel {
        self.potential = v;
        self
    }

    pub fn with_label(mut self, label: &str) -> IfsModel {
        self.label = label.to_string();
        self
    }

    #[inline]
    pub fn allowed(&self, i: usize, j: usize) -> bool {
        self.adjacency[i][j]
    }

    #[inline]
    pub fn branch_index(&self, i: usize, j: usize) -> Option<usize> {
        self.index[i][j]
    }

    #[inline]
    pub fn branch(&self, i: usize, j: usize) -> &Branch {
        &self.branches[self.index[i][j].expect("inadmissible transition")]
    }

    pub fn successors(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_symbols()).filter(move |&j| self.adjacency[i][j])
    }

    /// Image interval φ_{i,j}(I_i).
    pub fn image(&self, i: usize, j: usize) -> Interval {
        let b = self.branch(i, j);
        let iv = self.intervals[i];
        let (p, q) = (b.eval(iv.lo), b.eval(iv.hi));
        Interval::new(p.min(q), p.max(q))
    }

    /// J = −log|φ'| is constant on every branch.
    pub fn jacobian_branch_constant(&self) -> bool {
        self.branches.iter().all(|b| b.map.is_affine())
    }

    pub fn check_word(&self, letters: &[usize]) -> Result<()> {
        if letters.is_empty() || letters.iter().any(|&l| l >= self.n_symbols()) {
            return Err(Error::InadmissibleWord(letters.to_vec()));
        }
        if letters.windows(2).any(|w| !self.allowed(w[0], w[1])) {
            return Err(Error::InadmissibleWord(letters.to_vec()));
        }
        Ok(())
    }

    fn sampled_theta(&self, grid: usize) -> f64 {
        self.branches
            .iter()
            .map(|b| max_abs_deriv(b, self.intervals[b.source], grid))
            .fold(0.0, f64::max)
    }

    /// Lexicographically canonical past of a letter: stay on a self-loop if possible,
    /// else step to the smallest predecessor. Returns (w_{-order},…,w_{-1}, w_0).
    pub fn canonical_past(&self, w0: usize, order: usize) -> Vec<usize> {
        let mut rev = vec![w0];
        let mut cur = w0;
        for _ in 0..order {
            let prev = if self.allowed(cur, cur) {
                cur
            } else {
                (0..self.n_symbols()).find(|&i| self.allowed(i, cur)).unwrap_or(cur)
            };
            rev.push(prev);
            cur = prev;
        }
        rev.reverse();
        rev
    }

    /// Midpoint and width of the nested interval I_{w_{-n,0}} for a past (w_{-n},…,w_0).
    pub fn nested_interval(&self, past: &[usize]) -> (f64, f64) {
        let first = past[0];
        let mut lo = self.intervals[first].lo;
        let mut hi = self.intervals[first].hi;
        for k in 1..past.len() {
            let b = self.branch(past[k - 1], past[k]);
            let (p, q) = (b.eval(lo), b.eval(hi));
            lo = p.min(q);
            hi = p.max(q);
        }
        (0.5 * (lo + hi), hi - lo)
    }

    /// Coding point x_w of the canonical past of w_0 refined to the given order.
    pub fn canonical_point(&self, w0: usize, order: usize) -> f64 {
        self.nested_interval(&self.canonical_past(w0, order)).0
    }
}

fn max_abs_deriv(b: &Branch, iv: Interval, grid: usize) -> f64 {
    (0..grid)
        .map(|k| {
            let x = iv.lo + iv.width() * k as f64 / (grid - 1) as f64;
            b.deriv(x).abs()
        })
        .fold(0.0, f64::max)
}

/// Linear model with full adjacency: φ_{i,j}(x) = a_j + (b_j − a_j)x.
pub fn make_linear(intervals: &[Interval]) -> Result<IfsModel> {
    for (k, iv) in intervals.iter().enumerate() {
        if !(iv.lo < iv.hi) || iv.lo < 0.0 || iv.hi > 1.0 {
            return Err(Error::IntervalsOverlap(k, k));
        }
        if k > 0 && !(intervals[k - 1].hi < iv.lo) {
            return Err(Error::IntervalsOverlap(k - 1, k));
        }
    }
    linear_unchecked(intervals)
}

/// [`make_linear`] without the ordering/disjointness gate; validation is left
/// to [`validate_model`].
pub fn linear_unchecked(intervals: &[Interval]) -> Result<IfsModel> {
    let n = intervals.len();
    let mut branches = Vec::with_capacity(n * n);
    for i in 0..n {
        for (j, t) in intervals.iter().enumerate() {
            branches.push(Branch {
                source: i,
                target: j,
                map: BranchMap::Affine { slope: t.hi - t.lo, offset: t.lo },
                sign: 1.0,
            });
        }
    }
    Ok(IfsModel::new(intervals.to_vec(), vec![vec![true; n]; n], branches)?.with_label("linear"))
}

/// Left end, minimal gap and right margin of the [`make_linear_from`] layout.
pub const LINEAR_LAYOUT_START: f64 = 0.05;
pub const LINEAR_LAYOUT_MIN_GAP: f64 = 0.02;
pub const LINEAR_LAYOUT_END: f64 = 0.95;

/// Two-branch linear model with prescribed dimension δ and ω = e^{J₁−J₂}.
///
/// J₁ = log(1+ω^δ)/δ, J₂ = J₁ − log ω. I₁ = [0.05, 0.05+ℓ₁], then a gap
/// g = max(0.02, (0.9 − ℓ₁ − ℓ₂)/2), then I₂ of length ℓ₂, where ℓ = e^{−J}.
/// Feasible iff 0.05 + ℓ₁ + 0.02 + ℓ₂ ≤ 0.95.
pub fn make_linear_from(delta: f64, omega: f64) -> Result<IfsModel> {
    if !(delta > 0.0 && delta < 1.0) || !(omega > 0.0 && omega <= 1.0) {
        return Err(Error::InfeasibleParameters(format!("delta={delta}, omega={omega} out of range")));
    }
    let j1 = (1.0 + omega.powf(delta)).ln() / delta;
    let j2 = j1 - omega.ln();
    let (l1, l2) = ((-j1).exp(), (-j2).exp());
    let span = LINEAR_LAYOUT_END - LINEAR_LAYOUT_START;
    if l1 + l2 + LINEAR_LAYOUT_MIN_GAP > span {
        return Err(Error::InfeasibleParameters(format!(
            "lengths {l1:.6} + {l2:.6} do not fit disjointly in [0.05, 0.95]"
        )));
    }
    let gap = LINEAR_LAYOUT_MIN_GAP.max((span - l1 - l2) / 2.0);
    let a1 = LINEAR_LAYOUT_START;
    let a2 = a1 + l1 + gap;
    let m = make_linear(&[Interval::new(a1, a1 + l1), Interval::new(a2, a2 + l2)])?;
    Ok(m.with_label("from-delta-omega"))
}

/// Truncated Gauss scheme φ_{i,j}(x) = 1/(x+j) on I_i = [1/(1+i), b_i].
pub fn make_gauss(n: usize) -> Result<IfsModel> {
    if n < 2 {
        return Err(Error::InvalidModel("Gauss scheme needs N >= 2".into()));
    }
    let nf = n as f64;
    let intervals: Vec<Interval> = (1..=n)
        .map(|i| {
            let i = i as f64;
            let lo = 1.0 / (1.0 + i);
            let hi = 0.5 * (1.0 / (i + 1.0 / (nf + 1.0)) + 1.0 / i);
            Interval::new(lo, hi)
        })
        .collect();
    let mut branches = Vec::new();
    for i in 0..n {
        for j in 0..n {
            branches.push(Branch {
                source: i,
                target: j,
                map: BranchMap::Mobius { a: 0.0, b: 1.0, c: 1.0, d: (j + 1) as f64 },
                sign: -1.0,
            });
        }
    }
    Ok(IfsModel::new(intervals, vec![vec![true; n]; n], branches)?.with_label("gauss"))
}

/// Checks contraction, image inclusion, image disjointness and transitivity, in that order.
pub fn validate_model(model: &IfsModel, grid_density: usize) -> Result<Diagnostics> {
    let grid = grid_density.max(3);
    let mut theta: f64 = 0.0;
    for b in &model.branches {
        let t = max_abs_deriv(b, model.intervals[b.source], grid);
        if !(t < 1.0) || t == 0.0 {
            return Err(Error::NotContracting(b.source + 1, b.target + 1, t));
        }
        theta = theta.max(t);
    }
    for b in &model.branches {
        let iv = model.intervals[b.source];
        let tgt = model.intervals[b.target];
        for k in 0..grid {
            let x = iv.lo + iv.width() * k as f64 / (grid - 1) as f64;
            let y = b.eval(x);
            if !(y > tgt.lo && y < tgt.hi) {
                return Err(Error::ImageEscapesInterval(b.source + 1, b.target + 1));
            }
        }
        // monotone branches: the image must be the endpoint hull
        let d0 = b.deriv(iv.lo);
        if (0..grid).any(|k| {
            let x = iv.lo + iv.width() * k as f64 / (grid - 1) as f64;
            b.deriv(x).signum() != d0.signum()
        }) {
            return Err(Error::NotContracting(b.source + 1, b.target + 1, 0.0));
        }
    }
    let mut min_gap = f64::INFINITY;
    let imgs: Vec<(usize, usize, Interval)> =
        model.branches.iter().map(|b| (b.source, b.target, model.image(b.source, b.target))).collect();
    for (p, &(i1, j1, a)) in imgs.iter().enumerate() {
        for &(i2, j2, b) in imgs.iter().skip(p + 1) {
            let gap = if a.hi < b.lo {
                b.lo - a.hi
            } else if b.hi < a.lo {
                a.lo - b.hi
            } else {
                return Err(Error::ImagesOverlap(i1 + 1, j1 + 1, i2 + 1, j2 + 1));
            };
            min_gap = min_gap.min(gap);
        }
    }
    let n = model.n_symbols();
    for p in 0..n {
        for q in (p + 1)..n {
            let (a, b) = (model.intervals[p], model.intervals[q]);
            if !(a.hi < b.lo || b.hi < a.lo) {
                return Err(Error::IntervalsOverlap(p + 1, q + 1));
            }
        }
    }
    let t = transitivity_power(&model.adjacency).ok_or(Error::NotTransitive)?;
    Ok(Diagnostics { theta, transitivity_power: t, min_image_gap: min_gap, n_branches: model.branches.len() })
}

/// Smallest T with A^T entrywise positive, searched up to Wielandt's bound.
pub fn transitivity_power(a: &[Vec<bool>]) -> Option<usize> {
    let n = a.len();
    let bound = n * n - 2 * n + 2;
    let mut p = a.to_vec();
    for t in 1..=bound.max(1) {
        if p.iter().all(|r| r.iter().all(|&v| v)) {
            return Some(t);
        }
        let mut q = vec![vec![false; n]; n];
        for i in 0..n {
            for k in 0..n {
                if p[i][k] {
                    for j in 0..n {
                        q[i][j] |= a[k][j];
                    }
                }
            }
        }
        p = q;
    }
    None
}

/// Orbit of x ∈ I_{w_0} under φ_{w_{0,k}}, with chain-rule derivative and Birkhoff
/// sums over the images k = 1…n.
pub fn compose_orbit(model: &IfsModel, word: &Word, x: f64, hbar: Option<f64>) -> Result<OrbitData> {
    let l = &word.letters;
    model.check_word(l)?;
    if !model.intervals[l[0]].contains_approx(x) {
        return Err(Error::PointOutsideInterval(x, l[0] + 1));
    }
    let mut xs = Vec::with_capacity(l.len());
    xs.push(x);
    let (mut der, mut sj, mut sv, mut st) = (1.0, 0.0, 0.0, 0.0);
    let mut cur = x;
    for w in l.windows(2) {
        let b = model.branch(w[0], w[1]);
        let y = b.eval(cur);
        der *= b.deriv(cur);
        sj += b.jacobian(cur);
        sv += model.potential.value(b, cur, y);
        st += model.tau.value(b, cur, y);
        xs.push(y);
        cur = y;
    }
    Ok(OrbitData {
        word: l.clone(),
        x_values: xs,
        derivative: der,
        sign: der.signum(),
        birkhoff_j: sj,
        birkhoff_v: sv,
        birkhoff_tau: st,
        birkhoff_cal_v: hbar.map(|h| (st, -h * sv)),
    })
}

/// Fixed point of the cyclic composition of a closed word, and its residual.
pub fn periodic_fixed_point(model: &IfsModel, word: &Word) -> Result<(f64, f64)> {
    let l = &word.letters;
    model.check_word(l)?;
    if !model.allowed(*l.last().unwrap(), l[0]) {
        return Err(Error::InadmissibleWord(l.clone()));
    }
    let cycle = |x: f64| {
        let mut c = x;
        for k in 0..l.len() {
            c = model.branch(l[k], l[(k + 1) % l.len()]).eval(c);
        }
        c
    };
    let mut x = model.intervals[l[0]].mid();
    for _ in 0..10_000 {
        let nx = cycle(x);
        if (nx - x).abs() < 1e-14 {
            let xs = nx;
            return Ok((xs, (cycle(xs) - xs).abs()));
        }
        x = nx;
    }
    Err(Error::NoConvergence(format!("fixed point of {:?}", l)))
}

/// (J_min, J_max) over periodic-orbit averages of J for periods ≤ n_max.
pub fn j_extremes(model: &IfsModel, n_max: usize) -> Result<(f64, f64)> {
    let jac = Observable::jacobian(1.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for n in 1..=n_max.max(1) {
        for o in cycle_orbits(model, n, &[&jac])? {
            let avg = o.sums[0] / n as f64;
            lo = lo.min(avg);
            hi = hi.max(avg);
        }
    }
    Ok((lo, hi))
}

/// (L_ℏ u)(x) = e^{iτ(x)/ℏ + V(x)} u_i(φ_{i,j}^{-1}(x)) for the unique branch whose
/// image contains x, else 0.
pub fn apply_transfer<U>(model: &IfsModel, hbar: f64, u: U, x: f64) -> Complex64
where
    U: Fn(usize, f64) -> Complex64,
{
    for b in &model.branches {
        let img = model.image(b.source, b.target);
        if img.contains(x) {
            let Some(pre) = b.map.inverse(x, model.intervals[b.source]) else {
                continue;
            };
            let tau = model.tau.value(b, pre, x);
            let v = model.potential.value(b, pre, x);
            return Complex64::new(v, tau / hbar).exp() * u(b.source, pre);
        }
    }
    Complex64::new(0.0, 0.0)
}
