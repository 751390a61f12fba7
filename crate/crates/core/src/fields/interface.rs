use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{graph_gradient, BoxWindow, Frame, GraphFunction};
use crate::quadrature::{surface_nodes, true_intervals, ColumnSplit, SurfaceNode};
use crate::symcalc::Vector;

/// Offsets closer than this to the interface are refused by side classification.
pub const ON_INTERFACE_TOL: f64 = 1e-12;

/// The two sides of an oriented interface; `Plus` is where `nu_Gamma` points.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Side {
    Plus,
    Minus,
}

impl Side {
    pub fn sign(self) -> f64 {
        match self {
            Side::Plus => 1.0,
            Side::Minus => -1.0,
        }
    }

    pub fn opposite(self) -> Side {
        match self {
            Side::Plus => Side::Minus,
            Side::Minus => Side::Plus,
        }
    }
}

/// A C¹ graph patch `{x_n = g(x')} , x' in window`, with orientation
/// `nu = sign (-grad g, 1) / sqrt(1 + |grad g|^2)`.
#[derive(Clone)]
pub struct InterfacePiece {
    graph: Arc<dyn GraphFunction>,
    window: BoxWindow,
    orientation: f64,
}

impl fmt::Debug for InterfacePiece {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("InterfacePiece")
            .field("graph", &self.graph)
            .field("window", &self.window)
            .field("orientation", &self.orientation)
            .finish()
    }
}

impl InterfacePiece {
    /// The graph must carry a closed-form gradient.
    pub fn new(graph: Arc<dyn GraphFunction>, window: BoxWindow, plus_above: bool) -> Result<Self> {
        if graph.param_dim() != window.dim() {
            return Err(Error::DimensionMismatch { expected: window.dim(), found: graph.param_dim() });
        }
        if graph.gradient(&window.center()).is_none() {
            return Err(Error::InvalidArgument("interface pieces need a closed-form gradient".into()));
        }
        Ok(Self { graph, window, orientation: if plus_above { 1.0 } else { -1.0 } })
    }

    pub fn graph(&self) -> &dyn GraphFunction {
        self.graph.as_ref()
    }

    pub fn window(&self) -> &BoxWindow {
        &self.window
    }

    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    fn flipped(&self) -> Self {
        Self { orientation: -self.orientation, ..self.clone() }
    }
}

/// Finitely many disjoint C¹ graph pieces over a common frame; the pieces
/// carry the jump set, while side classification uses the graph of the
/// piece nearest in the parameter plane, extended beyond its window.
#[derive(Clone, Debug)]
pub struct Interface {
    frame: Frame,
    pieces: Vec<InterfacePiece>,
}

impl Interface {
    pub fn new(frame: Frame, pieces: Vec<InterfacePiece>) -> Result<Self> {
        if pieces.is_empty() {
            return Err(Error::InvalidArgument("interface needs at least one piece".into()));
        }
        for p in &pieces {
            if p.window.dim() + 1 != frame.dim() {
                return Err(Error::DimensionMismatch { expected: frame.dim() - 1, found: p.window.dim() });
            }
        }
        for i in 0..pieces.len() {
            for j in i + 1..pieces.len() {
                let (a, b) = (&pieces[i].window, &pieces[j].window);
                let overlap = (0..a.dim()).all(|k| a.lo()[k] < b.hi()[k] && b.lo()[k] < a.hi()[k]);
                if overlap {
                    return Err(Error::InvalidArgument(format!("interface pieces {i} and {j} overlap")));
                }
            }
        }
        Ok(Self { frame, pieces })
    }

    /// A single flat or curved piece `x_n = g(x')` in the global frame.
    pub fn single(dim: usize, graph: Arc<dyn GraphFunction>, window: BoxWindow, plus_above: bool) -> Result<Self> {
        Self::new(Frame::identity(dim), vec![InterfacePiece::new(graph, window, plus_above)?])
    }

    pub fn dim(&self) -> usize {
        self.frame.dim()
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn pieces(&self) -> &[InterfacePiece] {
        &self.pieces
    }

    /// The same set with `nu_Gamma` reversed on every piece.
    pub fn flipped(&self) -> Self {
        Self { frame: self.frame, pieces: self.pieces.iter().map(InterfacePiece::flipped).collect() }
    }

    fn piece_for(&self, p: &Vector) -> &InterfacePiece {
        let dist = |w: &BoxWindow| {
            (0..w.dim()).map(|k| (w.lo()[k] - p[k]).max(p[k] - w.hi()[k]).max(0.0)).fold(0.0, f64::max)
        };
        self.pieces
            .iter()
            .min_by(|a, b| dist(&a.window).total_cmp(&dist(&b.window)))
            .expect("non-empty")
    }

    /// Oriented offset `sign (x_n - g(x'))` in the interface frame.
    pub fn signed_offset(&self, x: &Vector) -> f64 {
        let z = self.frame.to_local(x);
        let p = z.head();
        let piece = self.piece_for(&p);
        piece.orientation * (z.last() - piece.graph.value(&p))
    }

    /// `x_n - g(x')`, independent of the orientation.
    fn raw_offset(&self, x: &Vector) -> f64 {
        let z = self.frame.to_local(x);
        let p = z.head();
        z.last() - self.piece_for(&p).graph.value(&p)
    }

    /// Side for almost-everywhere purposes: points on the graph count as
    /// lying above it, whatever the orientation.
    pub fn side_ae(&self, x: &Vector) -> Side {
        let z = self.frame.to_local(x);
        let p = z.head();
        let piece = self.piece_for(&p);
        let above = z.last() - piece.graph.value(&p) >= 0.0;
        if above == (piece.orientation > 0.0) {
            Side::Plus
        } else {
            Side::Minus
        }
    }

    pub fn side(&self, x: &Vector) -> Result<Side> {
        let offset = self.signed_offset(x);
        if offset.abs() <= ON_INTERFACE_TOL {
            return Err(Error::OnInterface { offset });
        }
        Ok(if offset > 0.0 { Side::Plus } else { Side::Minus })
    }

    /// Oriented unit normal at the point of `piece` above parameter `p`.
    pub fn normal(&self, piece: usize, p: &Vector) -> Vector {
        let pc = &self.pieces[piece];
        let g = graph_gradient(pc.graph.as_ref(), p);
        let w = (1.0 + g.norm_sq()).sqrt();
        self.frame.dir_to_global(&((-g).extend(1.0) * (pc.orientation / w)))
    }

    pub fn point(&self, piece: usize, p: &Vector) -> Vector {
        self.frame.to_global(&p.extend(self.pieces[piece].graph.value(p)))
    }

    /// Locates `x` on the jump set: `(piece, parameter)` when `x` lies on a
    /// piece within `tol`.
    pub fn locate(&self, x: &Vector, tol: f64) -> Option<(usize, Vector)> {
        let z = self.frame.to_local(x);
        let p = z.head();
        self.pieces.iter().enumerate().find_map(|(i, pc)| {
            (pc.window.contains(&p) && (z.last() - pc.graph.value(&p)).abs() <= tol).then_some((i, p))
        })
    }

    /// Quadrature nodes on the pieces, restricted to `{inside}` (in two
    /// dimensions the restriction is resolved exactly by bisection; in three
    /// it is applied as an indicator). Normals carry the orientation. In two
    /// dimensions cells are graded towards the ends of the chord cut out by
    /// `support`, a ball outside of which the integrand vanishes.
    pub fn nodes(
        &self,
        cells: usize,
        order: usize,
        inside: &(dyn Fn(&Vector) -> bool + Sync),
        support: Option<(Vector, f64)>,
    ) -> Vec<(usize, SurfaceNode)> {
        let mut out = Vec::new();
        for (i, pc) in self.pieces.iter().enumerate() {
            let mut breaks = vec![Vec::new(); self.dim() - 1];
            let windows: Vec<BoxWindow> = if self.dim() == 2 {
                let (lo, hi) = (pc.window.lo()[0], pc.window.hi()[0]);
                let at = |s: f64| self.point(i, &Vector::from_slice(&[s]));
                if let Some((c, r)) = support {
                    let in_ball = |s: f64| (at(s) - c).norm() < r;
                    for (a, b) in true_intervals(&in_ball, lo, hi, 256) {
                        breaks[0].extend(graded_breaks(a, b));
                    }
                }
                true_intervals(&|s: f64| inside(&at(s)), lo, hi, 256)
                    .into_iter()
                    .filter(|(a, b)| b > a)
                    .filter_map(|(a, b)| BoxWindow::from_bounds(&[(a, b)]).ok())
                    .collect()
            } else {
                vec![pc.window]
            };
            for w in windows {
                for mut node in surface_nodes(&self.frame, pc.graph.as_ref(), &w, cells, order, &breaks) {
                    if self.dim() == 3 && !inside(&node.point) {
                        continue;
                    }
                    node.normal = node.normal * pc.orientation;
                    out.push((i, node));
                }
            }
        }
        out
    }

    /// Quadrature nodes of the pieces within the ball `B_r(center)`.
    pub fn ball_nodes(&self, center: &Vector, r: f64, cells: usize, order: usize) -> Vec<(usize, SurfaceNode)> {
        let c = self.frame.to_local(center).head();
        let mut out = Vec::new();
        for (i, pc) in self.pieces.iter().enumerate() {
            let mut bounds = Vec::with_capacity(c.dim());
            let mut empty = false;
            for k in 0..c.dim() {
                let lo = (c[k] - r).max(pc.window.lo()[k]);
                let hi = (c[k] + r).min(pc.window.hi()[k]);
                if !(hi > lo) {
                    empty = true;
                }
                bounds.push((lo, hi));
            }
            if empty {
                continue;
            }
            let w = BoxWindow::from_bounds(&bounds).expect("non-empty bounds");
            let mut breaks = vec![Vec::new(); c.dim()];
            if c.dim() == 1 {
                // endpoints of the chord where the graph leaves the ball
                let pred = |s: f64| (self.point(i, &Vector::from_slice(&[s])) - *center).norm() < r;
                for (a, b) in true_intervals(&pred, bounds[0].0, bounds[0].1, 32) {
                    breaks[0].push(a);
                    breaks[0].push(b);
                }
            }
            for mut node in surface_nodes(&self.frame, pc.graph.as_ref(), &w, cells, order, &breaks) {
                node.normal = node.normal * pc.orientation;
                out.push((i, node));
            }
        }
        out
    }
}

/// Endpoints of `[a, b]` and points graded geometrically towards both.
pub(crate) fn graded_breaks(a: f64, b: f64) -> Vec<f64> {
    let mut out = vec![a, b];
    let half = 0.5 * (b - a);
    for j in 1..=10 {
        let d = half * 0.5f64.powi(j);
        out.extend([a + d, b - d]);
    }
    out
}

impl ColumnSplit for Interface {
    fn breaks(&self, origin: &Vector, dir: &Vector, s0: f64, s1: f64, out: &mut Vec<f64>) {
        let o = self.frame.to_local(origin);
        let d = self.frame.dir_to_local(dir);
        let n = self.dim();
        if (d.last().abs() - 1.0).abs() < 1e-14 {
            // column along the graph direction: x' is fixed, one crossing
            let p = o.head();
            let s = (self.piece_for(&p).graph.value(&p) - o.last()) / d.last();
            if s > s0 && s < s1 {
                out.push(s);
            }
            return;
        }
        const SAMPLES: usize = 48;
        let offset = |s: f64| self.raw_offset(&(*origin + *dir * s));
        let mut prev_s = s0;
        let mut prev = offset(s0);
        for k in 1..=SAMPLES {
            let s = s0 + (s1 - s0) * k as f64 / SAMPLES as f64;
            let cur = offset(s);
            if (prev > 0.0) != (cur > 0.0) {
                let (mut a, mut b, fa) = (prev_s, s, prev > 0.0);
                for _ in 0..200 {
                    let m = 0.5 * (a + b);
                    if m <= a || m >= b {
                        break;
                    }
                    if (offset(m) > 0.0) == fa {
                        a = m;
                    } else {
                        b = m;
                    }
                }
                out.push(0.5 * (a + b));
            }
            prev_s = s;
            prev = cur;
        }
        let _ = n;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ExprGraph;
    use crate::quadrature::composite_rule;

    fn sine_interface() -> Interface {
        let g = ExprGraph::parse("0.5 + 0.2*sin(x1)", Some(&["0.2*cos(x1)".to_string()]), 1).unwrap();
        Interface::single(2, Arc::new(g), BoxWindow::from_bounds(&[(-0.5, 1.5)]).unwrap(), true).unwrap()
    }

    #[test]
    fn classification_and_orientation() {
        let i = sine_interface();
        assert_eq!(i.side(&Vector::from_slice(&[0.3, 0.9])).unwrap(), Side::Plus);
        assert_eq!(i.side(&Vector::from_slice(&[0.3, 0.1])).unwrap(), Side::Minus);
        let on = Vector::from_slice(&[0.0, 0.5]);
        assert!(matches!(i.side(&on), Err(Error::OnInterface { .. })));
        let f = i.flipped();
        assert_eq!(f.side(&Vector::from_slice(&[0.3, 0.9])).unwrap(), Side::Minus);
        let n = i.normal(0, &Vector::from_slice(&[0.0]));
        let nf = f.normal(0, &Vector::from_slice(&[0.0]));
        assert!((n + nf).norm() == 0.0 && n[1] > 0.0);
    }

    #[test]
    fn column_crossings() {
        let i = sine_interface();
        let mut out = Vec::new();
        let origin = Vector::from_slice(&[0.4, 0.0]);
        i.breaks(&origin, &Vector::from_slice(&[0.0, 1.0]), 0.0, 1.0, &mut out);
        assert_eq!(out.len(), 1);
        assert!((out[0] - (0.5 + 0.2 * 0.4f64.sin())).abs() < 1e-15);
        out.clear();
        let dir = Vector::from_slice(&[0.6, 0.8]);
        i.breaks(&Vector::from_slice(&[0.0, 0.0]), &dir, 0.0, 1.2, &mut out);
        assert_eq!(out.len(), 1);
        let x = dir * out[0];
        assert!(i.signed_offset(&x).abs() < 1e-14);
    }

    #[test]
    fn nodes_restricted_to_region() {
        let i = sine_interface();
        let inside = |x: &Vector| x[0] > 0.0 && x[0] < 1.0;
        let nodes = i.nodes(16, 4, &inside, None);
        let len: f64 = nodes.iter().map(|(_, n)| n.weight).sum();
        // arc length of 0.5 + 0.2 sin over [0, 1]
        let exact: f64 = composite_rule(0.0, 1.0, 64, &[], 8)
            .iter()
            .map(|(x, w)| w * (1.0 + 0.04 * x.cos().powi(2)).sqrt())
            .sum();
        assert!((len - exact).abs() < 1e-12, "{len} vs {exact}");
    }

    #[test]
    fn overlapping_pieces_rejected() {
        let g: Arc<dyn GraphFunction> = Arc::new(ExprGraph::constant(0.0, 1));
        let a = InterfacePiece::new(Arc::clone(&g), BoxWindow::from_bounds(&[(0.0, 0.6)]).unwrap(), true).unwrap();
        let b = InterfacePiece::new(g, BoxWindow::from_bounds(&[(0.5, 1.0)]).unwrap(), true).unwrap();
        assert!(Interface::new(Frame::identity(2), vec![a, b]).is_err());
    }
}
