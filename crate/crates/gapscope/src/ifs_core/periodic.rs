use super::{IfsModel, Observable};
use crate::error::{Error, Result};
use crate::par;

/// One rotation class of closed words of period n.
#[derive(Debug, Clone)]
pub struct CycleOrbit {
    /// Lexicographically least rotation.
    pub letters: Vec<usize>,
    /// Number of distinct rotations (closed words) in the class.
    pub multiplicity: usize,
    pub x_star: f64,
    /// Signed derivative of the cyclic composition at x_star.
    pub derivative: f64,
    /// Birkhoff sums of the requested observables over one period.
    pub sums: Vec<f64>,
}

/// Cyclically admissible necklaces of length n with their primitive periods
/// (Fredricksen–Kessler–Maiorana generation).
pub fn necklaces(model: &IfsModel, n: usize) -> Vec<(Vec<usize>, usize)> {
    let k = model.n_symbols();
    let mut out = Vec::new();
    if n == 0 {
        return out;
    }
    let mut a = vec![0usize; n + 1];
    fn gen(t: usize, p: usize, n: usize, k: usize, a: &mut Vec<usize>, m: &IfsModel, out: &mut Vec<(Vec<usize>, usize)>) {
        if t > n {
            if n % p == 0 {
                let w = &a[1..=n];
                if w.windows(2).all(|x| m.allowed(x[0], x[1])) && m.allowed(w[n - 1], w[0]) {
                    out.push((w.to_vec(), p));
                }
            }
            return;
        }
        // prune prefixes whose last transition is already inadmissible
        a[t] = a[t - p];
        if t == 1 || m.allowed(a[t - 1], a[t]) {
            gen(t + 1, p, n, k, a, m, out);
        }
        for j in (a[t - p] + 1)..k {
            a[t] = j;
            if t == 1 || m.allowed(a[t - 1], j) {
                gen(t + 1, t, n, k, a, m, out);
            }
        }
    }
    gen(1, 1, n, k, &mut a, model, &mut out);
    out
}

/// Maximum number of closed words handled by a single enumeration.
pub const MAX_CLOSED_WORDS: f64 = 1e9;

/// All periodic orbits of period n, one entry per rotation class, with the
/// Birkhoff sums of `observables` at the periodic point.
pub fn cycle_orbits(model: &IfsModel, n: usize, observables: &[&Observable]) -> Result<Vec<CycleOrbit>> {
    let total = (model.n_symbols() as f64).powi(n as i32);
    if total > MAX_CLOSED_WORDS {
        return Err(Error::EnumerationTooLarge(total));
    }
    let classes = necklaces(model, n);
    let res: Vec<Result<CycleOrbit>> = par::map(&classes, |(w, p)| orbit_of(model, w, *p, observables));
    res.into_iter().collect()
}

fn orbit_of(model: &IfsModel, w: &[usize], mult: usize, observables: &[&Observable]) -> Result<CycleOrbit> {
    let n = w.len();
    let branches: Vec<&super::Branch> = (0..n).map(|k| model.branch(w[k], w[(k + 1) % n])).collect();
    let cycle = |x: f64| branches.iter().fold(x, |c, b| b.eval(c));
    let mut x = model.intervals[w[0]].mid();
    let mut converged = false;
    for _ in 0..10_000 {
        let nx = cycle(x);
        let d = (nx - x).abs();
        x = nx;
        if d < 1e-14 {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence(format!("periodic point of {:?}", w)));
    }
    // one more contraction step lands within θ^n·1e-14 of the fixed point
    x = cycle(x);
    let mut sums = vec![0.0; observables.len()];
    let mut der = 1.0;
    let mut cur = x;
    for b in &branches {
        let y = b.eval(cur);
        der *= b.deriv(cur);
        for (s, o) in sums.iter_mut().zip(observables) {
            *s += o.value(b, cur, y);
        }
        cur = y;
    }
    Ok(CycleOrbit { letters: w.to_vec(), multiplicity: mult, x_star: x, derivative: der, sums })
}
