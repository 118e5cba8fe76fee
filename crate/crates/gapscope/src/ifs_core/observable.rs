use super::expr::Expr;
use super::Branch;

/// A real function on the branch images ∪φ_{i,j}(I_i).
///
/// Value at y = φ_{i,j}(x):
/// `jacobian·J_{i,j}(x) + constant + slopes[j]·y + Σ c·e(y)`,
/// with J_{i,j}(x) = −log|φ'_{i,j}(x)|.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Observable {
    pub jacobian: f64,
    pub constant: f64,
    pub slopes: Vec<f64>,
    pub exprs: Vec<(f64, Expr, Expr)>,
}

impl Observable {
    pub fn zero() -> Observable {
        Observable::default()
    }

    pub fn constant(c: f64) -> Observable {
        Observable { constant: c, ..Default::default() }
    }

    /// c·J
    pub fn jacobian(c: f64) -> Observable {
        Observable { jacobian: c, ..Default::default() }
    }

    /// y ↦ slopes[j]·y on I_j
    pub fn slopes(slopes: Vec<f64>) -> Observable {
        Observable { slopes, ..Default::default() }
    }

    pub fn expression(src: &str) -> crate::Result<Observable> {
        let e = Expr::parse(src)?;
        let d = e.derivative();
        Ok(Observable { exprs: vec![(1.0, e, d)], ..Default::default() })
    }

    pub fn scale(&self, k: f64) -> Observable {
        Observable {
            jacobian: k * self.jacobian,
            constant: k * self.constant,
            slopes: self.slopes.iter().map(|s| k * s).collect(),
            exprs: self.exprs.iter().map(|(c, e, d)| (k * c, e.clone(), d.clone())).collect(),
        }
    }

    pub fn add(&self, other: &Observable) -> Observable {
        let n = self.slopes.len().max(other.slopes.len());
        let slopes = if n == 0 {
            Vec::new()
        } else {
            (0..n)
                .map(|j| self.slopes.get(j).copied().unwrap_or(0.0) + other.slopes.get(j).copied().unwrap_or(0.0))
                .collect()
        };
        let mut exprs = self.exprs.clone();
        exprs.extend(other.exprs.iter().cloned());
        Observable {
            jacobian: self.jacobian + other.jacobian,
            constant: self.constant + other.constant,
            slopes,
            exprs,
        }
    }

    pub fn sub(&self, other: &Observable) -> Observable {
        self.add(&other.scale(-1.0))
    }

    pub fn is_zero(&self) -> bool {
        self.jacobian == 0.0
            && self.constant == 0.0
            && self.slopes.iter().all(|s| *s == 0.0)
            && self.exprs.iter().all(|(c, _, _)| *c == 0.0)
    }

    /// Constant on each branch image given the branch set.
    pub fn is_branch_constant(&self, branches: &[Branch]) -> bool {
        self.slopes.iter().all(|s| *s == 0.0)
            && self.exprs.iter().all(|(c, e, _)| *c == 0.0 || e.is_constant())
            && (self.jacobian == 0.0 || branches.iter().all(|b| b.map.is_affine()))
    }

    /// Value at y = φ_b(x).
    #[inline]
    pub fn value(&self, b: &Branch, x: f64, y: f64) -> f64 {
        let mut v = self.constant;
        if self.jacobian != 0.0 {
            v -= self.jacobian * b.map.deriv(x).abs().ln();
        }
        if let Some(s) = self.slopes.get(b.target) {
            v += s * y;
        }
        for (c, e, _) in &self.exprs {
            v += c * e.eval(y);
        }
        v
    }

    /// d/dy of the value at y = φ_b(x).
    #[inline]
    pub fn deriv(&self, b: &Branch, x: f64, y: f64) -> f64 {
        let mut v = 0.0;
        if self.jacobian != 0.0 {
            let d1 = b.map.deriv(x);
            v -= self.jacobian * b.map.deriv2(x) / (d1 * d1);
        }
        if let Some(s) = self.slopes.get(b.target) {
            v += s;
        }
        for (c, _, d) in &self.exprs {
            v += c * d.eval(y);
        }
        v
    }
}
