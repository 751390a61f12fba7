use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::geometry::BoxWindow;
use crate::quadrature::ColumnSplit;
use crate::symcalc::Vector;

/// Scalar test function with a closed-form gradient.
#[derive(Debug, Clone)]
pub enum TestFunction {
    Expr { value: Expr, gradient: Vec<Expr> },
    /// `(1 - |x - c|^2 / R^2)_+^k`, of class `C^{k-1}`.
    Bump { center: Vector, radius: f64, power: i32 },
}

impl TestFunction {
    pub fn expr(dim: usize, value: &str, gradient: &[&str]) -> Result<Self> {
        if gradient.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, found: gradient.len() });
        }
        Ok(TestFunction::Expr {
            value: Expr::parse(value, dim)?,
            gradient: gradient.iter().map(|g| Expr::parse(g, dim)).collect::<std::result::Result<_, _>>()?,
        })
    }

    pub fn bump(center: Vector, radius: f64, power: i32) -> Result<Self> {
        if !(radius > 0.0) || power < 2 {
            return Err(Error::InvalidArgument(format!("bump needs radius > 0 and power >= 2, got {radius}, {power}")));
        }
        Ok(TestFunction::Bump { center, radius, power })
    }

    pub fn dim(&self) -> usize {
        match self {
            TestFunction::Expr { gradient, .. } => gradient.len(),
            TestFunction::Bump { center, .. } => center.dim(),
        }
    }

    pub fn value(&self, x: &Vector) -> f64 {
        match self {
            TestFunction::Expr { value, .. } => value.eval(x.as_slice()),
            TestFunction::Bump { center, radius, power } => {
                let q = 1.0 - (*x - *center).norm_sq() / (radius * radius);
                if q > 0.0 {
                    q.powi(*power)
                } else {
                    0.0
                }
            }
        }
    }

    pub fn gradient(&self, x: &Vector) -> Vector {
        match self {
            TestFunction::Expr { gradient, .. } => {
                let mut g = Vector::zeros(gradient.len());
                for (k, e) in gradient.iter().enumerate() {
                    g[k] = e.eval(x.as_slice());
                }
                g
            }
            TestFunction::Bump { center, radius, power } => {
                let d = *x - *center;
                let r2 = radius * radius;
                let q = 1.0 - d.norm_sq() / r2;
                if q > 0.0 {
                    d * (-2.0 * *power as f64 * q.powi(power - 1) / r2)
                } else {
                    Vector::zeros(x.dim())
                }
            }
        }
    }

    /// Closed ball containing the support, if bounded.
    pub fn support(&self) -> Option<(Vector, f64)> {
        match self {
            TestFunction::Expr { .. } => None,
            TestFunction::Bump { center, radius, .. } => Some((*center, *radius)),
        }
    }

    /// Sampled `(sup |phi|, sup |grad phi|)` over `window`.
    pub fn sup_norms(&self, window: &BoxWindow) -> (f64, f64) {
        let per_axis = if window.dim() == 2 { 65 } else { 21 };
        let mut pts = window.grid(per_axis);
        if let Some((c, r)) = self.support() {
            // the bump peaks at its center and its slope on an inner sphere
            pts.push(c);
            if let TestFunction::Bump { power, .. } = self {
                let s = r / (2.0 * *power as f64 - 1.0).sqrt();
                for k in 0..c.dim() {
                    pts.push(c + Vector::unit(c.dim(), k) * s);
                }
            }
            pts.retain(|p| window.contains(p));
        }
        pts.iter().fold((0.0f64, 0.0f64), |(a, b), p| (a.max(self.value(p).abs()), b.max(self.gradient(p).norm())))
    }

    /// `sup |phi| + sup |grad phi|` over `window`.
    pub fn c1_norm(&self, window: &BoxWindow) -> f64 {
        let (a, b) = self.sup_norms(window);
        a + b
    }
}

impl ColumnSplit for TestFunction {
    fn breaks(&self, origin: &Vector, dir: &Vector, s0: f64, s1: f64, out: &mut Vec<f64>) {
        if let TestFunction::Bump { center, radius, .. } = self {
            // |o + s d - c|^2 = R^2
            let d2 = dir.norm_sq();
            let oc = *origin - *center;
            let b = oc.dot(dir) / d2;
            let disc = b * b - (oc.norm_sq() - radius * radius) / d2;
            if disc > 0.0 {
                for s in [-b - disc.sqrt(), -b + disc.sqrt()] {
                    if s > s0 && s < s1 {
                        out.push(s);
                    }
                }
            }
        }
    }
}
