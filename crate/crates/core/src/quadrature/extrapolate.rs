use crate::error::{Error, Result};
use crate::quadrature::QuadValue;

const FIT_WINDOW: usize = 4;
const MIN_RATE: f64 = 0.2;
const P_MIN: f64 = 0.02;
const P_MAX: f64 = 12.0;

/// Extrapolated limit of a sampled sequence `v(h_j)` as `h -> 0`.
#[derive(Debug, Clone)]
pub struct LimitEstimate<V> {
    pub value: V,
    /// Fitted exponent `p` of `v = v_inf + C h^p`; the smallest over the
    /// components that still move, `INFINITY` for a constant sequence and
    /// `NaN` for an oscillatory one.
    pub rate: f64,
    /// `|v_last - v_inf|`.
    pub residual: f64,
    pub converged: bool,
    pub oscillatory: bool,
    /// The samples `(h_j, v_j)` in the order given.
    pub samples: Vec<(f64, V)>,
}

struct ComponentFit {
    value: f64,
    rate: f64,
    oscillatory: bool,
}

/// Fits `v_j = v_inf + C h_j^p` by least squares on the last four samples.
///
/// Converged iff `|v_last - v_inf| <= tol`, the fitted `p > 0.2`, and no
/// component oscillates.
pub fn limit_extrapolate<V: QuadValue>(samples: &[(f64, V)], tol: f64) -> Result<LimitEstimate<V>> {
    if samples.len() < 3 {
        return Err(Error::TooFewSamples { needed: 3, found: samples.len() });
    }
    if samples.windows(2).any(|w| !(w[1].0 < w[0].0) || !(w[1].0 > 0.0)) {
        return Err(Error::InvalidArgument("h must be positive and strictly decreasing".into()));
    }
    for (h, v) in samples {
        if !v.is_finite() {
            return Err(Error::NonFinite(vec![*h]));
        }
    }
    let tail = &samples[samples.len().saturating_sub(FIT_WINDOW)..];
    let last = tail[tail.len() - 1].1;
    let mut value = last;
    let mut rate = f64::INFINITY;
    let mut oscillatory = false;
    let scale = tail.iter().map(|(_, v)| v.magnitude()).fold(0.0, f64::max);
    for c in 0..last.n_components() {
        let hs: Vec<f64> = tail.iter().map(|s| s.0).collect();
        let vs: Vec<f64> = tail.iter().map(|s| s.1.component(c)).collect();
        let fit = fit_component(&hs, &vs, scale);
        value.set_component(c, fit.value);
        oscillatory |= fit.oscillatory;
        rate = rate.min(fit.rate);
    }
    if oscillatory {
        rate = f64::NAN;
    }
    let residual = last.distance(&value);
    let converged = !oscillatory && residual <= tol && rate > MIN_RATE;
    Ok(LimitEstimate { value, rate, residual, converged, oscillatory, samples: samples.to_vec() })
}

fn fit_component(hs: &[f64], vs: &[f64], scale: f64) -> ComponentFit {
    let m = vs.len();
    let last = vs[m - 1];
    let noise = 1e-12 * (1.0 + scale);
    let diffs: Vec<f64> = vs.windows(2).map(|w| w[0] - w[1]).collect();
    let significant: Vec<f64> = diffs.iter().copied().filter(|d| d.abs() > noise).collect();
    if significant.is_empty() {
        return ComponentFit { value: last, rate: f64::INFINITY, oscillatory: false };
    }
    if significant.windows(2).any(|w| w[0].signum() != w[1].signum()) {
        return ComponentFit { value: last, rate: f64::NAN, oscillatory: true };
    }
    if significant.len() < diffs.len() {
        // settled to roundoff after an early move: the tail is the limit
        if diffs.last().is_some_and(|d| d.abs() <= noise) {
            return ComponentFit { value: last, rate: f64::INFINITY, oscillatory: false };
        }
    }

    // initial exponent from the geometric mean of increment ratios
    let mut ratio_logs = Vec::new();
    for k in 0..diffs.len() - 1 {
        let (d0, d1) = (diffs[k], diffs[k + 1]);
        let hr = (hs[k] / hs[k + 1]).ln();
        if d0 * d1 > 0.0 && hr > 0.0 {
            ratio_logs.push((d0 / d1).ln() / hr);
        }
    }
    let p0 = if ratio_logs.is_empty() {
        1.0
    } else {
        (ratio_logs.iter().sum::<f64>() / ratio_logs.len() as f64).clamp(P_MIN, P_MAX)
    };

    let sse = |p: f64| linear_fit(hs, vs, p).2;
    // coarse log-spaced scan, then golden-section refinement around the best
    let grid: Vec<f64> = (0..=240).map(|k| P_MIN * (P_MAX / P_MIN).powf(k as f64 / 240.0)).collect();
    let mut best = (p0, sse(p0));
    let mut best_idx = None;
    for (k, &p) in grid.iter().enumerate() {
        let e = sse(p);
        if e < best.1 {
            best = (p, e);
            best_idx = Some(k);
        }
    }
    if let Some(k) = best_idx {
        let lo = grid[k.saturating_sub(1)];
        let hi = grid[(k + 1).min(grid.len() - 1)];
        let p = golden_min(&sse, lo, hi);
        if sse(p) < best.1 {
            best = (p, sse(p));
        }
    } else {
        let p = golden_min(&sse, (p0 * 0.8).max(P_MIN), (p0 * 1.25).min(P_MAX));
        if sse(p) < best.1 {
            best = (p, sse(p));
        }
    }
    let (v_inf, _, _) = linear_fit(hs, vs, best.0);
    ComponentFit { value: v_inf, rate: best.0, oscillatory: false }
}

/// Least squares for `v = a + c h^p`; returns `(a, c, sse)`.
fn linear_fit(hs: &[f64], vs: &[f64], p: f64) -> (f64, f64, f64) {
    let m = hs.len() as f64;
    let xs: Vec<f64> = hs.iter().map(|h| h.powf(p)).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = vs.iter().sum();
    let mx = sx / m;
    let my = sy / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(vs).map(|(x, y)| (x - mx) * (y - my)).sum();
    let c = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let a = my - c * mx;
    let sse = xs.iter().zip(vs).map(|(x, y)| (y - a - c * x).powi(2)).sum();
    (a, c, sse)
}

fn golden_min(f: &dyn Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if (b - a).abs() < 1e-12 * (1.0 + a.abs()) {
            break;
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symcalc::Vector;

    fn seq(f: impl Fn(f64) -> f64, n: usize) -> Vec<(f64, f64)> {
        (0..n).map(|j| (0.1 * 0.5f64.powi(j as i32), f(0.1 * 0.5f64.powi(j as i32)))).collect()
    }

    #[test]
    fn exact_linear_model() {
        let e = limit_extrapolate(&seq(|h| 2.0 + 3.0 * h, 4), 1.0).unwrap();
        assert!((e.value - 2.0).abs() < 1e-10, "{e:?}");
        assert!((e.rate - 1.0).abs() < 1e-4);
        assert!(e.converged);
    }

    #[test]
    fn constant_sequence_converges() {
        let e = limit_extrapolate(&seq(|_| 1.25, 5), 1e-12).unwrap();
        assert_eq!(e.value, 1.25);
        assert!(e.converged && e.rate.is_infinite() && e.residual == 0.0);
    }

    #[test]
    fn square_root_rate() {
        let e = limit_extrapolate(&seq(|h| 1.0 + h.sqrt(), 4), 1.0).unwrap();
        assert!((e.value - 1.0).abs() < 1e-8, "{e:?}");
        assert!((e.rate - 0.5).abs() < 0.05);
    }

    #[test]
    fn residual_controls_convergence() {
        let s = seq(|h| 2.0 + 3.0 * h, 4);
        let e = limit_extrapolate(&s, 1e-3).unwrap();
        assert!(!e.converged && (e.residual - 3.0 * 0.0125).abs() < 1e-9);
    }

    #[test]
    fn oscillation_is_reported() {
        let s: Vec<(f64, f64)> =
            seq(|h| h, 4).into_iter().enumerate().map(|(j, (h, _))| (h, 1.0 + if j % 2 == 0 { h } else { -h })).collect();
        let e = limit_extrapolate(&s, 1.0).unwrap();
        assert!(e.oscillatory && !e.converged && e.rate.is_nan());
    }

    #[test]
    fn too_few_samples() {
        assert_eq!(
            limit_extrapolate(&seq(|h| h, 2), 1.0).unwrap_err(),
            Error::TooFewSamples { needed: 3, found: 2 }
        );
    }

    #[test]
    fn vector_components_fit_independently() {
        let s: Vec<(f64, Vector)> = seq(|h| h, 6)
            .into_iter()
            .map(|(h, _)| (h, Vector::from_slice(&[1.0 + h * h, -2.0])))
            .collect();
        let e = limit_extrapolate(&s, 1e-2).unwrap();
        assert!((e.value[0] - 1.0).abs() < 1e-10 && e.value[1] == -2.0);
        assert!((e.rate - 2.0).abs() < 1e-3);
    }
}
