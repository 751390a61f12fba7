//! Sub-graph box domains `{x' in B, b < x_n < T(x')}` and their boundary atlas.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::geometry::{
    BoxWindow, ExprGraph, Frame, GraphFunction, ImplicitGraph, LipschitzGraphChart, Membership,
};
use crate::symcalc::{check_space_dim, Vector};

/// One chart of the boundary atlas with the tile of parameters it is
/// responsible for. Tiles of different patches partition the covered
/// boundary; inner windows overlap.
#[derive(Clone, Debug)]
pub struct BoundaryPatch {
    pub name: String,
    pub chart: LipschitzGraphChart,
    pub tile: BoxWindow,
}

impl BoundaryPatch {
    pub fn new(name: impl Into<String>, chart: LipschitzGraphChart, tile: BoxWindow) -> Result<Self> {
        let inner = chart.inner().head();
        if tile.dim() != inner.dim() || !(inner.contains(&tile.lo()) && inner.contains(&tile.hi())) {
            return Err(Error::InvalidArgument("patch tile must lie in the chart's inner window".into()));
        }
        Ok(Self { name: name.into(), chart, tile })
    }
}

#[derive(Clone)]
pub struct Domain {
    base: BoxWindow,
    bottom: f64,
    top: Arc<dyn GraphFunction>,
    top_lipschitz: f64,
    patches: Vec<BoundaryPatch>,
    full_cover: bool,
}

impl fmt::Debug for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Domain")
            .field("base", &self.base)
            .field("bottom", &self.bottom)
            .field("top", &self.top)
            .field("patches", &self.patches.iter().map(|p| p.name.as_str()).collect::<Vec<_>>())
            .finish()
    }
}

impl Domain {
    /// The unit square or cube `(0,1)^n`.
    pub fn unit_box(dim: usize) -> Result<Self> {
        check_space_dim(dim)?;
        let base = BoxWindow::from_bounds(&vec![(0.0, 1.0); dim - 1])?;
        Self::subgraph_box(base, 0.0, Arc::new(ExprGraph::constant(1.0, dim - 1)), 0.0)
    }

    /// `{x' in base, bottom < x_n < top(x')}` with an automatically generated
    /// atlas: one chart per face, plus one chart per corner in two dimensions.
    pub fn subgraph_box(
        base: BoxWindow,
        bottom: f64,
        top: Arc<dyn GraphFunction>,
        top_lipschitz: f64,
    ) -> Result<Self> {
        let n = base.dim() + 1;
        check_space_dim(n)?;
        if top.param_dim() != n - 1 {
            return Err(Error::DimensionMismatch { expected: n - 1, found: top.param_dim() });
        }
        let mut domain = Self { base, bottom, top, top_lipschitz, patches: Vec::new(), full_cover: n == 2 };
        let (min_top, _) = domain.top_range(&base);
        if !(min_top > bottom) {
            return Err(Error::InvalidArgument(format!("top graph dips to {min_top}, below the bottom {bottom}")));
        }
        domain.patches = domain.auto_patches()?;
        Ok(domain)
    }

    /// Replaces the generated atlas by explicit patches.
    pub fn with_patches(mut self, patches: Vec<BoundaryPatch>, full_cover: bool) -> Result<Self> {
        for p in &patches {
            if p.chart.dim() != self.dim() {
                return Err(Error::DimensionMismatch { expected: self.dim(), found: p.chart.dim() });
            }
        }
        self.patches = patches;
        self.full_cover = full_cover;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.base.dim() + 1
    }

    pub fn base(&self) -> &BoxWindow {
        &self.base
    }

    pub fn bottom(&self) -> f64 {
        self.bottom
    }

    pub fn top(&self) -> &dyn GraphFunction {
        self.top.as_ref()
    }

    pub fn top_lipschitz(&self) -> f64 {
        self.top_lipschitz
    }

    pub fn patches(&self) -> &[BoundaryPatch] {
        &self.patches
    }

    /// Whether the patch tiles cover the whole boundary.
    pub fn fully_covered(&self) -> bool {
        self.full_cover
    }

    pub fn contains(&self, x: &Vector) -> bool {
        let p = x.head();
        self.base.contains_open(&p) && x.last() > self.bottom && x.last() < self.top.value(&p)
    }

    /// Sampled `(min, max)` of the top graph over a parameter box.
    pub fn top_range(&self, window: &BoxWindow) -> (f64, f64) {
        let per_axis = if window.dim() == 1 { 1025 } else { 65 };
        window.grid(per_axis).iter().map(|p| self.top.value(p)).fold(
            (f64::INFINITY, f64::NEG_INFINITY),
            |(lo, hi), v| (lo.min(v), hi.max(v)),
        )
    }

    pub fn bounding_box(&self) -> BoxWindow {
        let (_, max_top) = self.top_range(&self.base);
        self.base.extend(self.bottom, max_top)
    }

    /// Boundary points on a sampling grid that no patch tile covers.
    pub fn uncovered_boundary_samples(&self, per_axis: usize) -> Vec<Vector> {
        if self.full_cover {
            return Vec::new();
        }
        self.boundary_samples(per_axis)
            .into_iter()
            .filter(|x| {
                !self.patches.iter().any(|patch| {
                    let local = patch.chart.frame().to_local(x);
                    patch.tile.contains(&local.head())
                        && (local.last() - patch.chart.graph().value(&local.head())).abs() < 1e-9
                })
            })
            .collect()
    }

    /// Points spread over every face of the boundary.
    pub fn boundary_samples(&self, per_axis: usize) -> Vec<Vector> {
        let n = self.dim();
        let mut out = Vec::new();
        for p in self.base.grid(per_axis) {
            out.push(p.extend(self.bottom));
            out.push(p.extend(self.top.value(&p)));
        }
        for k in 0..n - 1 {
            for end in [self.base.lo()[k], self.base.hi()[k]] {
                let mut face_lo = self.base.lo();
                let mut face_hi = self.base.hi();
                face_lo[k] = end;
                face_hi[k] = end;
                for i in 0..per_axis {
                    for j in 0..if n == 3 { per_axis } else { 1 } {
                        let mut p = face_lo;
                        let other = if n == 3 { Some(1 - k) } else { None };
                        if let Some(o) = other {
                            p[o] = face_lo[o] + (face_hi[o] - face_lo[o]) * j as f64 / (per_axis - 1) as f64;
                        }
                        let top = self.top.value(&p);
                        let h = self.bottom + (top - self.bottom) * i as f64 / (per_axis - 1) as f64;
                        out.push(p.extend(h));
                    }
                }
            }
        }
        out
    }

    fn margin(&self) -> f64 {
        let (min_top, _) = self.top_range(&self.base);
        let width = (0..self.base.dim()).map(|k| self.base.width(k)).fold(f64::INFINITY, f64::min);
        0.25 * width.min(min_top - self.bottom)
    }

    fn auto_patches(&self) -> Result<Vec<BoundaryPatch>> {
        let n = self.dim();
        let m = self.margin();
        let (min_top, max_top) = self.top_range(&self.base);
        let depth = 0.5 * (min_top - self.bottom);
        let dh = n - 1;
        let mut patches = Vec::new();

        let flat: Arc<dyn GraphFunction> = Arc::new(ExprGraph::constant(0.0, dh));
        let shrink = |w: &BoxWindow, by: f64| -> Result<BoxWindow> {
            let lo: Vec<(f64, f64)> = (0..w.dim()).map(|k| (w.lo()[k] + by, w.hi()[k] - by)).collect();
            BoxWindow::from_bounds(&lo)
        };
        let rel_base = BoxWindow::new(Vector::zeros(dh), self.base.hi() - self.base.lo())?;

        // bottom face: x_n(local) = -(x_v - b)
        {
            let mut axes: Vec<Vector> = (0..dh).map(|k| Vector::unit(n, k)).collect();
            axes.push(-Vector::unit(n, n - 1));
            let frame = Frame::new(self.base.lo().extend(self.bottom), &axes)?;
            let chart = LipschitzGraphChart::new(
                frame,
                Arc::clone(&flat),
                0.0,
                shrink(&rel_base, m / 2.0)?.extend(-0.75 * depth, m / 2.0),
                shrink(&rel_base, m / 4.0)?.extend(-depth, m),
            )?;
            patches.push(BoundaryPatch::new("bottom", chart, shrink(&rel_base, m)?)?);
        }

        // top face
        {
            let chart = LipschitzGraphChart::new(
                Frame::identity(n),
                Arc::clone(&self.top),
                self.top_lipschitz,
                shrink(&self.base, m / 2.0)?.extend(min_top - 0.75 * depth, max_top + m / 2.0),
                shrink(&self.base, m / 4.0)?.extend(min_top - depth, max_top + m),
            )?;
            patches.push(BoundaryPatch::new("top", chart, shrink(&self.base, m)?)?);
        }

        // vertical faces x_k = end, outward normal ±e_k
        let side_depth = m / (2.0 * (1.0 + self.top_lipschitz));
        for k in 0..dh {
            for (end, sign, label) in [(self.base.lo()[k], -1.0, "lo"), (self.base.hi()[k], 1.0, "hi")] {
                let others: Vec<usize> = (0..dh).filter(|&j| j != k).collect();
                let mut axes: Vec<Vector> = others.iter().map(|&j| Vector::unit(n, j)).collect();
                axes.push(Vector::unit(n, n - 1));
                axes.push(Vector::unit(n, k) * sign);
                let mut origin = self.base.lo().extend(self.bottom);
                origin[k] = end;
                let frame = Frame::new(origin, &axes)?;

                // lowest top height on the face edge and on the band the outer window reaches into
                let edge_min = |xk: f64| {
                    let mut lo = f64::INFINITY;
                    for i in 0..=64 {
                        let mut p = self.base.lo();
                        p[k] = xk;
                        if let Some(&o) = others.first() {
                            p[o] = self.base.lo()[o] + self.base.width(o) * i as f64 / 64.0;
                        }
                        lo = lo.min(self.top.value(&p));
                    }
                    lo
                };
                let face_top = edge_min(end) - self.bottom;
                let band_top = (0..=32)
                    .map(|i| edge_min(end - sign * side_depth * i as f64 / 32.0))
                    .fold(f64::INFINITY, f64::min)
                    - self.bottom;

                let tangential = |by: f64, top: f64| -> Result<Vec<(f64, f64)>> {
                    let mut b: Vec<(f64, f64)> =
                        others.iter().map(|&j| (by, self.base.width(j) - by)).collect();
                    b.push((by, top));
                    Ok(b)
                };
                let inner = BoxWindow::from_bounds(&tangential(m / 2.0, face_top - 0.75 * m)?)?
                    .extend(-0.75 * side_depth, m / 2.0);
                let outer =
                    BoxWindow::from_bounds(&tangential(m / 4.0, band_top)?)?.extend(-side_depth, m);
                let tile = BoxWindow::from_bounds(&tangential(m, face_top - m)?)?;
                let axis_name = ["x1", "x2"][k];
                let chart = LipschitzGraphChart::new(frame, Arc::clone(&flat), 0.0, inner, outer)?;
                patches.push(BoundaryPatch::new(format!("side-{axis_name}-{label}"), chart, tile)?);
            }
        }

        if n == 2 {
            patches.extend(self.corner_patches(m)?);
        }
        Ok(patches)
    }

    fn corner_patches(&self, m: f64) -> Result<Vec<BoundaryPatch>> {
        let (x0, x1) = (self.base.lo()[0], self.base.hi()[0]);
        let b = self.bottom;
        let t = |x: f64| self.top.value(&Vector::from_slice(&[x]));
        let h = 1e-7 * (1.0 + x1.abs().max(x0.abs()));
        let top_normal = |x: f64, forward: bool| {
            let slope = if forward { (t(x + h) - t(x)) / h } else { (t(x) - t(x - h)) / h };
            Vector::from_slice(&[-slope, 1.0]).normalized()
        };
        let v = |a: f64, c: f64| Vector::from_slice(&[a, c]);
        let corners = [
            ("corner-bottom-lo", v(x0, b), v(0.0, -1.0), v(-1.0, 0.0), v(x0 + m, b), v(x0, b + m)),
            ("corner-bottom-hi", v(x1, b), v(0.0, -1.0), v(1.0, 0.0), v(x1 - m, b), v(x1, b + m)),
            ("corner-top-lo", v(x0, t(x0)), top_normal(x0, true)?, v(-1.0, 0.0), v(x0 + m, t(x0 + m)), v(x0, t(x0) - m)),
            ("corner-top-hi", v(x1, t(x1)), top_normal(x1, false)?, v(1.0, 0.0), v(x1 - m, t(x1 - m)), v(x1, t(x1) - m)),
        ];

        let mut out = Vec::new();
        for (name, c, na, nb, pa, pb) in corners {
            let en = (na + nb).normalized()?;
            let e1 = v(en[1], -en[0]);
            let frame = Frame::new(c, &[e1, en])?;
            let sa = (pa - c).dot(&e1);
            let sb = (pb - c).dot(&e1);
            let (lo, hi) = (sa.min(sb), sa.max(sb));
            let half = 0.5 * (hi - lo);
            let domain = self.clone_shape();
            let inside: Membership = Arc::new(move |x: &Vector| domain.contains(x));
            let graph = Arc::new(ImplicitGraph::new(frame, inside, 2.0 * m, vec![vec![0.0]]));

            let (olo, ohi) = (lo - 0.5 * half, hi + 0.5 * half);
            let samples: Vec<f64> = (0..=256).map(|i| olo + (ohi - olo) * i as f64 / 256.0).collect();
            let values: Vec<f64> = samples.iter().map(|&s| graph.value(&Vector::from_slice(&[s]))).collect();
            if values.iter().any(|a| !a.is_finite()) {
                return Err(Error::InvalidArgument(format!("{name}: corner graph is not resolvable")));
            }
            let slope = samples
                .windows(2)
                .zip(values.windows(2))
                .map(|(s, a)| ((a[1] - a[0]) / (s[1] - s[0])).abs())
                .fold(0.0, f64::max);
            let lipschitz = 1.05 * slope + 1e-3;
            let amin = values.iter().cloned().fold(f64::INFINITY, f64::min);
            let amax = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let inner = BoxWindow::from_bounds(&[(lo - 0.25 * half, hi + 0.25 * half), (amin - 0.5 * half, amax + 0.25 * half)])?;
            let outer = BoxWindow::from_bounds(&[(olo, ohi), (amin - half, amax + 0.5 * half)])?;
            let chart = LipschitzGraphChart::new(frame, graph, lipschitz, inner, outer)?;
            out.push(BoundaryPatch::new(name, chart, BoxWindow::from_bounds(&[(lo, hi)])?)?);
        }
        Ok(out)
    }

    fn clone_shape(&self) -> Domain {
        Domain {
            base: self.base,
            bottom: self.bottom,
            top: Arc::clone(&self.top),
            top_lipschitz: self.top_lipschitz,
            patches: Vec::new(),
            full_cover: self.full_cover,
        }
    }
}
