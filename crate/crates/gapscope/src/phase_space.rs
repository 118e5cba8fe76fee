//! Lifted dynamics on T*I: the canonical map, stable leaves ζ_{w+}, coding of
//! the trapped set, minimal captivity and orbit separation.

use crate::error::{Error, Result};
use crate::ifs_core::{IfsModel, Word};
use crate::par;
use crate::pressure::CODING_ORDER;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PhasePoint {
    pub x: f64,
    pub xi: f64,
}

impl PhasePoint {
    pub fn new(x: f64, xi: f64) -> PhasePoint {
        PhasePoint { x, xi }
    }
}

/// (x, ξ) ↦ (φ_{i,j}(x), ξ/φ'_{i,j}(x) + τ'(x')).
pub fn canonical_map(model: &IfsModel, i: usize, j: usize, p: PhasePoint) -> Result<PhasePoint> {
    if i >= model.n_symbols() || j >= model.n_symbols() || !model.allowed(i, j) {
        return Err(Error::InadmissibleWord(vec![i, j]));
    }
    if !model.intervals[i].contains_approx(p.x) {
        return Err(Error::PointOutsideInterval(p.x, i + 1));
    }
    let b = model.branch(i, j);
    let x = b.eval(p.x);
    Ok(PhasePoint { x, xi: p.xi / b.deriv(p.x) + model.tau.deriv(b, p.x, x) })
}

/// Sampled max |τ'| over all branch images.
pub fn max_tau_slope(model: &IfsModel) -> f64 {
    const GRID: usize = 257;
    let mut m = 0.0f64;
    for b in &model.branches {
        let iv = model.intervals[b.source];
        for k in 0..GRID {
            let x = iv.lo + iv.width() * k as f64 / (GRID - 1) as f64;
            m = m.max(model.tau.deriv(b, x, b.eval(x)).abs());
        }
    }
    m
}

/// R = κ·max|τ'|/(e^{J_min} − κ), beyond which every branch expands |ξ| by more than κ.
pub fn escape_radius(model: &IfsModel, kappa: f64) -> Result<f64> {
    let ej = 1.0 / model.theta;
    if !(kappa > 1.0 && kappa < ej) {
        return Err(Error::OutOfRange(format!("kappa = {kappa} outside (1, e^J_min = {ej})")));
    }
    Ok(kappa * max_tau_slope(model) / (ej - kappa))
}

/// Truncated stable leaf ξ = ζ_{w+}(x) over I_{w_0}.
#[derive(Debug, Clone)]
pub struct StableLeaf<'a> {
    model: &'a IfsModel,
    pub word_plus: Word,
    pub order: usize,
    /// max|τ'|·θ^order/(1−θ)
    pub tail_bound: f64,
}

impl StableLeaf<'_> {
    pub fn value(&self, x: f64) -> Result<f64> {
        let w0 = self.word_plus.letters[0];
        if !self.model.intervals[w0].contains_approx(x) {
            return Err(Error::PointOutsideInterval(x, w0 + 1));
        }
        Ok(zeta_sum(self.model, &self.word_plus.letters[..=self.order], x))
    }

    /// ζ at several points of I_{w_0}.
    pub fn values(&self, xs: &[f64]) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.value(x)).collect()
    }
}

// −Σ_{k≥1} (φ_{w_{0,k}})'(x) τ'(φ_{w_{0,k}}(x)) over the letters given
fn zeta_sum(model: &IfsModel, letters: &[usize], x: f64) -> f64 {
    let mut d = 1.0;
    let mut y = x;
    let mut s = 0.0;
    for k in 1..letters.len() {
        let b = model.branch(letters[k - 1], letters[k]);
        let yn = b.eval(y);
        d *= b.deriv(y);
        s -= d * model.tau.deriv(b, y, yn);
        y = yn;
    }
    s
}

/// Stable leaf of w₊ truncated after `order` steps; needs order + 1 letters.
pub fn zeta_leaf<'a>(model: &'a IfsModel, word_plus: &Word, order: usize) -> Result<StableLeaf<'a>> {
    model.check_word(&word_plus.letters)?;
    if word_plus.letters.len() < order + 1 {
        return Err(Error::OutOfRange(format!(
            "word of {} letters is shorter than order {order} + 1",
            word_plus.letters.len()
        )));
    }
    let th = model.theta;
    Ok(StableLeaf {
        model,
        word_plus: word_plus.clone(),
        order,
        tail_bound: max_tau_slope(model) * th.powi(order as i32) / (1.0 - th),
    })
}

/// Canonical continuation of a word: stay on a self-loop if possible, else the smallest successor.
pub fn canonical_future(model: &IfsModel, letters: &[usize], total: usize) -> Vec<usize> {
    let mut out = letters.to_vec();
    while out.len() < total {
        let cur = *out.last().expect("non-empty word");
        let next = if model.allowed(cur, cur) { cur } else { model.successors(cur).next().unwrap_or(cur) };
        out.push(next);
    }
    out
}

/// Midpoint and width of I_{w_{-n,0}} for w₋ = (w_{-n},…,w_0).
pub fn code_point(model: &IfsModel, word_minus: &Word) -> Result<(f64, f64)> {
    model.check_word(&word_minus.letters)?;
    Ok(model.nested_interval(&word_minus.letters))
}

/// Level-`a` cylinders I_{w_{-a,0}} inside I_i, as (lo, hi).
pub fn cylinders(model: &IfsModel, i: usize, a: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    let mut past = vec![i];
    collect_pasts(model, &mut past, a, &mut out);
    out.sort_by(|p, q| p.0.total_cmp(&q.0));
    out
}

fn collect_pasts(model: &IfsModel, rev: &mut Vec<usize>, a: usize, out: &mut Vec<(f64, f64)>) {
    if rev.len() == a + 1 {
        let past: Vec<usize> = rev.iter().rev().cloned().collect();
        let (m, w) = model.nested_interval(&past);
        out.push((m - 0.5 * w, m + 0.5 * w));
        return;
    }
    let cur = *rev.last().expect("non-empty");
    for p in 0..model.n_symbols() {
        if model.allowed(p, cur) {
            rev.push(p);
            collect_pasts(model, rev, a, out);
            rev.pop();
        }
    }
}

/// About `per_interval` sample points spread evenly over the level-`a` cylinders of I_i.
pub fn trapped_grid(model: &IfsModel, i: usize, a: usize, per_interval: usize) -> Vec<f64> {
    let cyl = cylinders(model, i, a);
    let each = per_interval.div_ceil(cyl.len()).max(1);
    let mut xs = Vec::with_capacity(each * cyl.len());
    for (lo, hi) in cyl {
        for k in 0..each {
            xs.push(if each == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * k as f64 / (each - 1) as f64 });
        }
    }
    xs
}

/// Default K_a level.
pub const KA_LEVEL: usize = 2;

#[derive(Debug, Clone, Serialize)]
pub struct CaptivitySample {
    pub x: f64,
    pub xi: f64,
    pub word_plus: Vec<usize>,
    pub branch: usize,
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct CaptivityReport {
    pub passed: bool,
    pub epsilon: f64,
    pub min_branch_gap: f64,
    pub n_word: usize,
    pub n_samples: usize,
    pub tail_bound: f64,
    pub witnesses: Vec<CaptivitySample>,
}

const MAX_WITNESSES: usize = 20;

// sorted leaf values ζ_v(y) over all v of n_word steps starting at letter k
fn leaf_set(model: &IfsModel, k: usize, y: f64, n_word: usize) -> Vec<f64> {
    let mut out = Vec::new();
    leaf_dfs(model, k, y, 1.0, 0.0, n_word, &mut out);
    out.sort_by(f64::total_cmp);
    out
}

fn leaf_dfs(model: &IfsModel, a: usize, y: f64, d: f64, s: f64, left: usize, out: &mut Vec<f64>) {
    if left == 0 {
        out.push(s);
        return;
    }
    for j in model.successors(a) {
        let b = model.branch(a, j);
        let yn = b.eval(y);
        let dn = d * b.deriv(y);
        leaf_dfs(model, j, yn, dn, s - dn * model.tau.deriv(b, y, yn), left - 1, out);
    }
}

fn nearest(sorted: &[f64], v: f64) -> f64 {
    let k = sorted.partition_point(|&s| s < v);
    let mut d = f64::INFINITY;
    if k < sorted.len() {
        d = d.min((sorted[k] - v).abs());
    }
    if k > 0 {
        d = d.min((v - sorted[k - 1]).abs());
    }
    d
}

/// Sampled minimal-captivity test: for trapped points (x, ζ_{w+}(x)) with x in
/// K_a and every branch k other than the leaf's own w_1, the ξ-distance from the
/// image to the nearest leaf over the image point. Passes iff the minimum exceeds 2ε.
pub fn captivity_check(model: &IfsModel, epsilon: f64, n_word: usize, n_x_samples: usize) -> Result<CaptivityReport> {
    if !(epsilon > 0.0) {
        return Err(Error::OutOfRange(format!("epsilon = {epsilon} must be positive")));
    }
    let n_word = n_word.max(1);
    let mut points = Vec::new();
    for i in 0..model.n_symbols() {
        for x in trapped_grid(model, i, KA_LEVEL, n_x_samples.max(1)) {
            points.push((i, x));
        }
    }
    let per_point: Vec<(f64, usize, Vec<CaptivitySample>)> = par::map(&points, |&(i, x)| {
        // leaves through x, with their first letter after w_0
        let mut leaves = Vec::new();
        for j in model.successors(i) {
            let b = model.branch(i, j);
            let y = b.eval(x);
            let d = b.deriv(x);
            let t = model.tau.deriv(b, x, y);
            let mut sub = Vec::new();
            leaf_words(model, j, y, n_word - 1, &mut vec![i, j], &mut sub);
            for (word, z) in sub {
                leaves.push((word, -d * t + d * z));
            }
        }
        let images: Vec<(usize, f64, f64, Vec<f64>)> = model
            .successors(i)
            .map(|k| {
                let b = model.branch(i, k);
                let y = b.eval(x);
                (k, 1.0 / b.deriv(x), model.tau.deriv(b, x, y), leaf_set(model, k, y, n_word))
            })
            .collect();
        let mut min = f64::INFINITY;
        let mut wit = Vec::new();
        for (word, xi) in &leaves {
            for (k, inv, t, set) in &images {
                if *k == word[1] {
                    continue;
                }
                let g = nearest(set, xi * inv + t);
                min = min.min(g);
                if g <= 2.0 * epsilon && wit.len() < MAX_WITNESSES {
                    wit.push(CaptivitySample { x, xi: *xi, word_plus: word.clone(), branch: *k, gap: g });
                }
            }
        }
        (min, leaves.len(), wit)
    });
    let mut min = f64::INFINITY;
    let mut n_samples = 0;
    let mut witnesses = Vec::new();
    for (m, n, w) in per_point {
        min = min.min(m);
        n_samples += n;
        for s in w {
            if witnesses.len() < MAX_WITNESSES {
                witnesses.push(s);
            }
        }
    }
    let th = model.theta;
    Ok(CaptivityReport {
        passed: min > 2.0 * epsilon,
        epsilon,
        min_branch_gap: min,
        n_word,
        n_samples,
        tail_bound: max_tau_slope(model) * th.powi(n_word as i32) / (1.0 - th),
        witnesses,
    })
}

// leaves ζ_v(y) with their words, v of `left` steps from letter a
fn leaf_words(model: &IfsModel, a: usize, y: f64, left: usize, word: &mut Vec<usize>, out: &mut Vec<(Vec<usize>, f64)>) {
    if left == 0 {
        out.push((word.clone(), 0.0));
        return;
    }
    for j in model.successors(a) {
        let b = model.branch(a, j);
        let yn = b.eval(y);
        let d = b.deriv(y);
        let t = model.tau.deriv(b, y, yn);
        word.push(j);
        let start = out.len();
        leaf_words(model, j, yn, left - 1, word, out);
        for e in &mut out[start..] {
            e.1 = -d * t + d * e.1;
        }
        word.pop();
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Separation {
    pub n1: usize,
    pub n2: usize,
    pub dx: f64,
    /// None when the words start in different intervals (n₁ = 0).
    pub dzeta: Option<f64>,
    pub ratio_x: f64,
    pub ratio_zeta: Option<f64>,
}

/// Grid points per interval used for dzeta.
pub const SEPARATION_GRID: usize = 64;

/// Order of the leaves used for dzeta.
pub const SEPARATION_ORDER: usize = 40;

fn first_difference(w: &[usize], v: &[usize], n: usize) -> Result<(usize, usize)> {
    let n1 = (0..=n).find(|&k| w[k] != v[k]).ok_or(Error::IdenticalWords)?;
    let n2 = (0..=n).find(|&k| w[n - k] != v[n - k]).expect("words differ");
    Ok((n1, n2))
}

// −log|(φ_{letters})'(x)|
fn birkhoff_j(model: &IfsModel, letters: &[usize], mut x: f64) -> f64 {
    let mut j = 0.0;
    for k in 1..letters.len() {
        let b = model.branch(letters[k - 1], letters[k]);
        j += b.jacobian(x);
        x = b.eval(x);
    }
    j
}

// x_{L^m(w)} for the canonical past of w_0 followed by w_{1..m}
fn coded_after(model: &IfsModel, w: &[usize], m: usize) -> f64 {
    let mut past = model.canonical_past(w[0], CODING_ORDER);
    past.extend_from_slice(&w[1..=m]);
    model.nested_interval(&past).0
}

/// Orbit-separation distances of two words w_{0,n} ≠ w'_{0,n}. Letters beyond
/// the given ones follow the canonical continuation.
pub fn separation_distances(model: &IfsModel, w: &Word, w_prime: &Word, n: usize) -> Result<Separation> {
    model.check_word(&w.letters)?;
    model.check_word(&w_prime.letters)?;
    let total = (n + 1).max(SEPARATION_ORDER + 1);
    let a = canonical_future(model, &w.letters, total);
    let b = canonical_future(model, &w_prime.letters, total);
    let (n1, n2) = first_difference(&a, &b, n)?;
    let xa = coded_after(model, &a, n);
    let xb = coded_after(model, &b, n);
    let dx = (xa - xb).abs();
    let start = n + 1 - n2;
    let jx = if n2 == 0 { 0.0 } else { birkhoff_j(model, &a[start..=n], coded_after(model, &a, start)) };
    let ratio_x = dx * jx.exp();
    let (dzeta, ratio_zeta) = if n1 == 0 {
        (None, None)
    } else {
        let grid = trapped_grid(model, a[0], KA_LEVEL, SEPARATION_GRID);
        let (la, lb) = (&a[..=SEPARATION_ORDER.max(n)], &b[..=SEPARATION_ORDER.max(n)]);
        let mut best = (f64::INFINITY, 0.0);
        for &x in &grid {
            let d = (zeta_sum(model, la, x) - zeta_sum(model, lb, x)).abs();
            if d < best.0 {
                best = (d, x);
            }
        }
        let j = birkhoff_j(model, &a[..n1], best.1);
        (Some(best.0), Some(best.0 * j.exp()))
    };
    Ok(Separation { n1, n2, dx, dzeta, ratio_x, ratio_zeta })
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationSurvey {
    pub n: usize,
    pub pairs: usize,
    pub min_ratio_x: f64,
    pub min_ratio_zeta: f64,
}

/// Minimum separation ratios over all ordered pairs of distinct admissible words
/// of length n, with leaves and coded points shared between pairs.
pub fn separation_survey(model: &IfsModel, n: usize) -> Result<SeparationSurvey> {
    let words: Vec<Vec<usize>> = crate::ifs_core::enumerate_words(model, n, crate::ifs_core::WordKind::Open)
        .map(|w| w.letters)
        .collect();
    let order = SEPARATION_ORDER.max(n);
    let ext: Vec<Vec<usize>> = words.iter().map(|w| canonical_future(model, w, order + 1)).collect();
    // coded points x_{L^m(w)} for m ≤ n and leaves on the grid of I_{w_0}
    let coded: Vec<Vec<f64>> = par::map(&ext, |a| (0..=n).map(|m| coded_after(model, a, m)).collect());
    let grids: Vec<Vec<f64>> =
        (0..model.n_symbols()).map(|i| trapped_grid(model, i, KA_LEVEL, SEPARATION_GRID)).collect();
    let leaves: Vec<Vec<f64>> = par::map(&ext, |a| grids[a[0]].iter().map(|&x| zeta_sum(model, a, x)).collect());
    let idx: Vec<usize> = (0..words.len()).collect();
    let parts: Vec<(f64, f64, usize)> = par::map(&idx, |&p| {
        let (mut rx, mut rz, mut cnt) = (f64::INFINITY, f64::INFINITY, 0);
        for q in 0..words.len() {
            if q == p {
                continue;
            }
            let (a, b) = (&ext[p], &ext[q]);
            let Ok((n1, n2)) = first_difference(a, b, n) else { continue };
            cnt += 1;
            let dx = (coded[p][n] - coded[q][n]).abs();
            let start = n + 1 - n2;
            let jx = if n2 == 0 { 0.0 } else { birkhoff_j(model, &a[start..=n], coded[p][start]) };
            rx = rx.min(dx * jx.exp());
            if n1 > 0 {
                let g = &grids[a[0]];
                let mut best = (f64::INFINITY, 0.0);
                for (k, &x) in g.iter().enumerate() {
                    let d = (leaves[p][k] - leaves[q][k]).abs();
                    if d < best.0 {
                        best = (d, x);
                    }
                }
                rz = rz.min(best.0 * birkhoff_j(model, &a[..n1], best.1).exp());
            }
        }
        (rx, rz, cnt)
    });
    let mut s = SeparationSurvey { n, pairs: 0, min_ratio_x: f64::INFINITY, min_ratio_zeta: f64::INFINITY };
    for (rx, rz, c) in parts {
        s.min_ratio_x = s.min_ratio_x.min(rx);
        s.min_ratio_zeta = s.min_ratio_zeta.min(rz);
        s.pairs += c;
    }
    Ok(s)
}
