use super::expr::Expr;
use super::Interval;

/// Closed-form contracting branch x ↦ φ(x).
#[derive(Debug, Clone, PartialEq)]
pub enum BranchMap {
    /// φ(x) = slope·x + offset
    Affine { slope: f64, offset: f64 },
    /// φ(x) = (a·x + b)/(c·x + d)
    Mobius { a: f64, b: f64, c: f64, d: f64 },
    /// User expression with symbolic first and second derivatives.
    Expr { f: Expr, df: Expr, d2f: Expr },
}

impl BranchMap {
    pub fn expression(src: &str) -> crate::Result<BranchMap> {
        let f = Expr::parse(src)?;
        let df = f.derivative();
        let d2f = df.derivative();
        Ok(BranchMap::Expr { f, df, d2f })
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        match self {
            BranchMap::Affine { slope, offset } => slope * x + offset,
            BranchMap::Mobius { a, b, c, d } => (a * x + b) / (c * x + d),
            BranchMap::Expr { f, .. } => f.eval(x),
        }
    }

    #[inline]
    pub fn deriv(&self, x: f64) -> f64 {
        match self {
            BranchMap::Affine { slope, .. } => *slope,
            BranchMap::Mobius { a, b, c, d } => {
                let q = c * x + d;
                (a * d - b * c) / (q * q)
            }
            BranchMap::Expr { df, .. } => df.eval(x),
        }
    }

    #[inline]
    pub fn deriv2(&self, x: f64) -> f64 {
        match self {
            BranchMap::Affine { .. } => 0.0,
            BranchMap::Mobius { a, b, c, d } => {
                let q = c * x + d;
                -2.0 * c * (a * d - b * c) / (q * q * q)
            }
            BranchMap::Expr { d2f, .. } => d2f.eval(x),
        }
    }

    pub fn is_affine(&self) -> bool {
        matches!(self, BranchMap::Affine { .. })
    }

    /// φ(x + h) − φ(x), free of cancellation for the closed forms.
    #[inline]
    pub fn increment(&self, x: f64, h: f64) -> f64 {
        match self {
            BranchMap::Affine { slope, .. } => slope * h,
            BranchMap::Mobius { a, b, c, d } => {
                let q = c * x + d;
                (a * d - b * c) * h / (q * (q + c * h))
            }
            BranchMap::Expr { f, .. } => f.eval(x + h) - f.eval(x),
        }
    }

    /// The h solving φ(x + h) − φ(x) = s, searched in [lo − x, hi − x].
    pub fn inverse_increment(&self, x: f64, s: f64, domain: Interval) -> Option<f64> {
        match self {
            BranchMap::Affine { slope, .. } => Some(s / slope),
            BranchMap::Mobius { a, b, c, d } => {
                let q = c * x + d;
                let den = (a * d - b * c) - s * c * q;
                if den == 0.0 {
                    None
                } else {
                    Some(s * q * q / den)
                }
            }
            BranchMap::Expr { .. } => {
                let lo = domain.lo - x;
                let hi = domain.hi - x;
                monotone_solve(|h| self.increment(x, h) - s, |h| self.deriv(x + h), lo, hi, 0.0)
            }
        }
    }

    /// φ^{-1}(y) on the given source interval.
    pub fn inverse(&self, y: f64, domain: Interval) -> Option<f64> {
        match self {
            BranchMap::Affine { slope, offset } => Some((y - offset) / slope),
            BranchMap::Mobius { a, b, c, d } => {
                let den = a - c * y;
                if den == 0.0 {
                    None
                } else {
                    Some((d * y - b) / den)
                }
            }
            BranchMap::Expr { .. } => monotone_solve(
                |x| self.eval(x) - y,
                |x| self.deriv(x),
                domain.lo,
                domain.hi,
                domain.mid(),
            ),
        }
    }
}

/// Safeguarded Newton for a strictly monotone g on [lo, hi]; None if no sign change.
pub(crate) fn monotone_solve<G, D>(g: G, dg: D, lo: f64, hi: f64, start: f64) -> Option<f64>
where
    G: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let (ga, gb) = (g(a), g(b));
    if ga == 0.0 {
        return Some(a);
    }
    if gb == 0.0 {
        return Some(b);
    }
    if ga.signum() == gb.signum() {
        return None;
    }
    let increasing = gb > ga;
    let mut x = if start > a && start < b { start } else { 0.5 * (a + b) };
    for _ in 0..200 {
        let gx = g(x);
        if gx == 0.0 {
            return Some(x);
        }
        if (gx > 0.0) == increasing {
            b = x;
        } else {
            a = x;
        }
        let d = dg(x);
        let mut next = if d != 0.0 { x - gx / d } else { f64::NAN };
        if !(next > a && next < b) {
            next = 0.5 * (a + b);
        }
        if (next - x).abs() <= 1e-16 * (1.0 + x.abs()) || (b - a) <= 1e-16 * (1.0 + a.abs()) {
            return Some(next);
        }
        x = next;
    }
    Some(x)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mobius_increment_is_stable() {
        let m = BranchMap::Mobius { a: 0.0, b: 1.0, c: 1.0, d: 2.0 };
        let x = 0.3;
        let h = 1e-9;
        // difference of reciprocals written without subtraction of nearby values
        let exact = -h / ((x + 2.0) * (x + h + 2.0));
        assert!(((m.increment(x, h) - exact) / exact).abs() < 1e-15);
        let back = m.inverse_increment(x, m.increment(x, 0.01), Interval::new(0.0, 1.0)).unwrap();
        assert!((back - 0.01).abs() < 1e-15);
    }

    #[test]
    fn expression_branch_inverse() {
        let e = BranchMap::expression("1/(x+2)").unwrap();
        let dom = Interval::new(0.1, 0.9);
        let y = e.eval(0.37);
        assert!((e.inverse(y, dom).unwrap() - 0.37).abs() < 1e-14);
        let h = e.inverse_increment(0.37, e.increment(0.37, 0.05), dom).unwrap();
        assert!((h - 0.05).abs() < 1e-12);
        assert!((e.deriv2(0.37) - 2.0 / 2.37f64.powi(3)).abs() < 1e-13);
    }
}
