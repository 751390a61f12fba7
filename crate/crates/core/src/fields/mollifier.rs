use std::sync::OnceLock;

use crate::error::Result;
use crate::geometry::Frame;
use crate::quadrature::{composite_rule, tensor_nodes, Column};
use crate::symcalc::{check_space_dim, Vector};

/// Default base cells per axis of the ball quadrature.
pub const BALL_CELLS: usize = 4;
/// Default Gauss order of the ball quadrature.
pub const BALL_ORDER: usize = 8;

/// Radial bump `rho(x) = c exp(-1 / (1 - |x|^2))` on the unit ball, with
/// `c` fixed so that `rho` has unit mass.
#[derive(Debug, Clone, Copy)]
pub struct Mollifier {
    dim: usize,
    scale: f64,
}

impl Mollifier {
    pub fn new(dim: usize) -> Result<Self> {
        check_space_dim(dim)?;
        // |S^{n-1}| * int_0^1 r^{n-1} exp(-1/(1-r^2)) dr
        let sphere = if dim == 2 { 2.0 * std::f64::consts::PI } else { 4.0 * std::f64::consts::PI };
        let radial: f64 = composite_rule(0.0, 1.0, 128, &[], 20)
            .iter()
            .map(|&(r, w)| w * r.powi(dim as i32 - 1) * profile(r * r))
            .sum();
        Ok(Self { dim, scale: 1.0 / (sphere * radial) })
    }

    pub fn cached(dim: usize) -> Result<&'static Mollifier> {
        static CACHE: [OnceLock<Mollifier>; 2] = [OnceLock::new(), OnceLock::new()];
        check_space_dim(dim)?;
        let cell = &CACHE[dim - 2];
        if let Some(m) = cell.get() {
            return Ok(m);
        }
        let m = Self::new(dim)?;
        Ok(cell.get_or_init(|| m))
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Normalising constant `c`.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// `rho_r(z) = r^{-n} rho(z / r)`.
    pub fn density(&self, z: &Vector, r: f64) -> f64 {
        self.scale * profile(z.norm_sq() / (r * r)) / r.powi(self.dim as i32)
    }
}

/// `exp(-1 / (1 - s2))` for `s2 < 1`, else zero.
pub fn profile(s2: f64) -> f64 {
    if s2 < 1.0 {
        (-1.0 / (1.0 - s2)).exp()
    } else {
        0.0
    }
}

/// Columns filling the ball `B_r(center)`, parallel to the last axis of
/// `frame` (only its rotation is used).
pub fn ball_columns(center: &Vector, r: f64, frame: &Frame, cells: usize, order: usize) -> Vec<Column> {
    let n = center.dim();
    let rule = composite_rule(-r, r, cells, &[], order);
    let rules = vec![rule; n - 1];
    let dir = frame.normal_axis();
    tensor_nodes(&rules)
        .into_iter()
        .filter_map(|(w, wt)| {
            let h2 = r * r - w.norm_sq();
            (h2 > 0.0).then(|| {
                let half = h2.sqrt();
                Column {
                    origin: *center + frame.dir_to_global(&w.extend(0.0)),
                    dir,
                    s0: -half,
                    s1: half,
                    weight: wt,
                    breaks: Vec::new(),
                }
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_columns;

    #[test]
    fn unit_mass() {
        for dim in [2, 3] {
            let m = Mollifier::cached(dim).unwrap();
            let center = Vector::zeros(dim);
            let r = 0.3;
            let cols = ball_columns(&center, r, &Frame::identity(dim), 16, 12);
            let mass = integrate_columns(&cols, 16, 12, &[], &|p| Ok(m.density(&(p.x - center), r)), 0.0).unwrap();
            assert!((mass - 1.0).abs() < 1e-10, "dim {dim}: {mass}");
        }
    }

    #[test]
    fn marginal_first_absolute_moment() {
        // E|Y| for the 2D kernel's one-dimensional marginal
        let m = Mollifier::cached(2).unwrap();
        let cols = ball_columns(&Vector::zeros(2), 1.0, &Frame::identity(2), 8, 12);
        let v = integrate_columns(&cols, 8, 12, &[], &|p| Ok(p.x[1].abs() * m.density(&p.x, 1.0)), 0.0).unwrap();
        assert!((v - 0.30096).abs() < 1e-4, "{v}");
    }
}
