//! Acceptance gate: prints one `[PASS]`/`[FAIL] criterion N` line per
//! criterion and exits non-zero if any fails.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use bdtrace::fields::zoo::*;
use bdtrace::fields::BDTestField;
use bdtrace::geometry::{
    cone_aperture, cone_beta, in_cone, BoxWindow, Domain, Frame, GraphFunction, LipschitzGraphChart,
    PiecewiseLinearGraph, ReparametrizedGraph,
};
use bdtrace::quadrature::QuadratureSpec;
use bdtrace::symcalc::{sym_outer, Vector};
use bdtrace::trace::{trace_field, DirectionalTracer, TraceOptions};
use bdtrace::verify::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<(bool, String), String>;

fn criterion(n: usize, title: &str, budget: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let took = start.elapsed();
    let in_budget = budget.is_none_or(|b| took < b);
    let (pass, detail) = match outcome {
        Ok((ok, detail)) => (ok && in_budget, detail),
        Err(e) => (false, format!("error: {e}")),
    };
    let budget = budget.map_or(String::new(), |b| format!(" of {:.0} s", b.as_secs_f64()));
    println!("[{}] criterion {n}: {title} ({detail}; {:.2} s{budget})", if pass { "PASS" } else { "FAIL" }, took.as_secs_f64());
    pass
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn domains() -> Result<Vec<(&'static str, Domain)>, String> {
    Ok(vec![("square", unit_square().map_err(err)?), ("sine", sine_domain().map_err(err)?)])
}

/// Smooth and jump fields adapted to each domain.
fn fields(domain: &str) -> Result<(Vec<(&'static str, BDTestField)>, Vec<(&'static str, BDTestField)>), String> {
    let level = if domain == "square" { 0.5 } else { -0.4 };
    let smooth = vec![("rigid", rigid().map_err(err)?), ("affine", affine().map_err(err)?), ("trig", trig().map_err(err)?)];
    let jumps = vec![
        ("constant-jump", constant_jump(level).map_err(err)?),
        ("affine-jump", affine_jump(flat_interface(level).map_err(err)?).map_err(err)?),
    ];
    Ok((smooth, jumps))
}

fn top_height(domain: &str) -> f64 {
    if domain == "square" {
        1.0
    } else {
        0.2 * 1.5f64.sin()
    }
}

fn c1_symmetric_product() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut violations = 0;
    let mut worst = f64::INFINITY;
    for k in 0..10_000 {
        let n = 2 + k % 2;
        let a = Vector::new(&(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).map_err(err)?;
        let b = Vector::new(&(0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>()).map_err(err)?;
        let lhs = sym_outer(&a, &b).map_err(err)?.frobenius();
        let rhs = a.norm() * b.norm() / 2f64.sqrt();
        if lhs < rhs - 1e-12 {
            violations += 1;
        }
        if rhs > 0.0 {
            worst = worst.min(lhs / rhs);
        }
    }
    Ok((violations == 0, format!("10000 pairs, {violations} violations, min ratio {worst:.6}")))
}

const LIPSCHITZ: [f64; 4] = [0.25, 0.5, 1.0, 2.0];
const SAMPLES: usize = 1000;

/// Piecewise-linear graph on `[-2, 2]` with Lipschitz constant exactly `l`.
fn random_graph(l: f64, rng: &mut ChaCha8Rng) -> Result<PiecewiseLinearGraph, String> {
    let k = rng.gen_range(4..12);
    let xs: Vec<f64> = (0..=k).map(|i| -2.0 + 4.0 * i as f64 / k as f64).collect();
    let forced = rng.gen_range(0..k);
    let mut ys = vec![0.0];
    for i in 0..k {
        let s = rng.gen_range(-1.0..1.0);
        let slope = if i == forced { l.copysign(s) } else { s * l };
        ys.push(ys[i] + slope * (xs[i + 1] - xs[i]));
    }
    PiecewiseLinearGraph::new(xs, ys).map_err(err)
}

fn chart_for(graph: PiecewiseLinearGraph, l: f64) -> Result<LipschitzGraphChart, String> {
    let top = (0..=200).map(|i| graph.value(&Vector::from_slice(&[-1.0 + i as f64 / 100.0])).abs()).fold(0.0, f64::max);
    LipschitzGraphChart::new(
        Frame::identity(2),
        Arc::new(graph),
        l,
        BoxWindow::from_bounds(&[(-0.5, 0.5), (-top - 1.0, top + 1.0)]).map_err(err)?,
        BoxWindow::from_bounds(&[(-1.0, 1.0), (-top - 2.0, top + 2.0)]).map_err(err)?,
    )
    .map_err(err)
}

/// Unit vector at angle `theta` from `e_2`.
fn at_angle(theta: f64) -> Vector {
    Vector::from_slice(&[theta.sin(), theta.cos()])
}

fn c2_cone_geometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut separation, mut inclusion, mut lipschitz) = (0usize, 0usize, 0usize);
    let mut graphs = 0;
    for &l in &LIPSCHITZ {
        for _ in 0..2 {
            let g = random_graph(l, &mut rng)?;
            graphs += 1;
            let half = cone_aperture(l).map_err(err)?.acos();
            for _ in 0..SAMPLES {
                // (x + C) ∩ Σ = {x}
                let s = rng.gen_range(-0.5..0.5);
                let x = Vector::from_slice(&[s, g.value(&Vector::from_slice(&[s]))]);
                let theta = loop {
                    let t = rng.gen_range(-1.0..1.0) * half;
                    if t.abs() < half {
                        break t;
                    }
                };
                let sign = if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let t = rng.gen_range(1e-3..1.0) * if rng.gen_bool(0.5) { 1.0 } else { -1.0 };
                let z = x + at_angle(theta) * (sign * t);
                if (z[1] - g.value(&Vector::from_slice(&[z[0]]))).abs() <= 1e-12 {
                    separation += 1;
                }

                // C_xi ⊂ C for admissible xi
                let max_angle = 2.0 * (0.5 * (2.0 - 2.0 * cone_aperture(l).map_err(err)?).sqrt()).asin();
                let xi = at_angle(0.999 * rng.gen_range(-1.0..1.0) * max_angle);
                let beta = cone_beta(&xi, l).map_err(err)?;
                let base = xi[1].atan2(xi[0]);
                let phi = 0.999 * rng.gen_range(-1.0..1.0) * beta.acos();
                let zeta = Vector::from_slice(&[(base + phi).cos(), (base + phi).sin()]) * (sign * rng.gen_range(0.1..10.0));
                if !(zeta.dot(&xi).abs() > beta * zeta.norm() && in_cone(&zeta, l).map_err(err)?) {
                    inclusion += 1;
                }
            }

            // Lip(a_xi) <= beta / sqrt(1 - beta^2)
            let chart = chart_for(g, l)?;
            let max_angle = 2.0 * (0.5 * chart.eta0()).asin();
            let mut valid = 0;
            let mut attempts = 0;
            while valid < SAMPLES && attempts < 20 * SAMPLES {
                attempts += 1;
                let xi = at_angle(0.999 * rng.gen_range(-1.0..1.0) * max_angle);
                let rg = ReparametrizedGraph::new(chart.clone(), xi).map_err(err)?;
                let (p, q): (f64, f64) = (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3));
                if (p - q).abs() < 1e-6 {
                    continue;
                }
                if let (Ok(a), Ok(b)) = (rg.try_value(&Vector::from_slice(&[p])), rg.try_value(&Vector::from_slice(&[q]))) {
                    valid += 1;
                    if (a - b).abs() / (p - q).abs() > rg.lipschitz() + 1e-9 {
                        lipschitz += 1;
                    }
                }
            }
            if valid < SAMPLES {
                return Err(format!("only {valid} evaluable reparametrization samples for L = {l}"));
            }
        }
    }
    let total = separation + inclusion + lipschitz;
    Ok((
        total == 0,
        format!(
            "{graphs} graphs x {SAMPLES} samples per property; violations: separation {separation}, beta-cone {inclusion}, Lipschitz {lipschitz}"
        ),
    ))
}

fn c3_restriction() -> Outcome {
    let opts = TraceOptions::default();
    let mut worst: f64 = 0.0;
    let mut nodes = 0;
    for (_, d) in domains()? {
        for u in [affine().map_err(err)?, trig().map_err(err)?] {
            let t = trace_field(&u, &d, 16, 6, &opts).map_err(err)?;
            if t.partial {
                return Ok((false, "some trace did not converge".into()));
            }
            for (n, g) in t.nodes.iter().zip(&t.values) {
                worst = worst.max((*g - u.eval(&n.point).map_err(err)?).norm());
            }
            nodes += t.nodes.len();
        }
    }
    Ok((worst <= 1e-4, format!("{nodes} nodes, max error {worst:.2e} <= 1e-4")))
}

fn phis(domain: &str) -> Result<Vec<bdtrace::fields::TestFunction>, String> {
    let b = if domain == "square" { bump(0.6, 0.9, 0.4) } else { bump(0.5, 0.0, 0.4) };
    Ok(vec![polynomial_phi().map_err(err)?, trig_phi().map_err(err)?, b.map_err(err)?])
}

fn c4_ibp() -> Outcome {
    let spec = QuadratureSpec::new(6, 16, 1).map_err(err)?;
    let opts = TraceOptions::default();
    let (mut worst_smooth, mut worst_jump): (f64, f64) = (0.0, 0.0);
    let mut failures = Vec::new();
    let mut runs = 0;
    for (dname, d) in domains()? {
        let (smooth, jumps) = fields(dname)?;
        for (tol, group) in [(1e-6, smooth), (1e-4, jumps)] {
            for (fname, u) in group {
                for (k, phi) in phis(dname)?.iter().enumerate() {
                    let reports = ibp_check(&u, &d, phi, &spec, &opts, tol).map_err(err)?;
                    runs += 1;
                    let r = reports[0].residual;
                    if tol < 1e-5 {
                        worst_smooth = worst_smooth.max(r);
                    } else {
                        worst_jump = worst_jump.max(r);
                    }
                    for rep in reports.iter().filter(|r| !r.pass) {
                        failures.push(format!("{dname}/{fname}/phi{k}/{} = {:.2e}", rep.check, rep.residual));
                    }
                }
            }
        }
    }
    Ok((
        failures.is_empty(),
        format!(
            "{runs} runs; max relative residual smooth {worst_smooth:.2e} <= 1e-6, jump {worst_jump:.2e} <= 1e-4; no growth under refinement{}",
            if failures.is_empty() { String::new() } else { format!("; failing: {}", failures.join(", ")) }
        ),
    ))
}

fn c5_directional() -> Outcome {
    let spec = QuadratureSpec::new(6, 16, 1).map_err(err)?;
    let opts = TraceOptions::default();
    let (mut worst, mut gap): (f64, f64) = (0.0, 0.0);
    let mut ok = true;
    for (dname, d) in domains()? {
        let level = if dname == "square" { 0.9 } else { -0.4 };
        let us = [trig().map_err(err)?, affine_jump(flat_interface(level).map_err(err)?).map_err(err)?];
        let phi = bump(0.5, top_height(dname), 0.2).map_err(err)?;
        let top = d.patches().iter().find(|p| p.name == "top").ok_or("no top patch")?;
        let xi1 = top.chart.frame().dir_to_global(&top.chart.xi_i(0, top.chart.default_delta()));
        for u in &us {
            for xi in [Vector::unit(2, 1), xi1] {
                let r = directional_ibp_residual(u, &d, &phi, &xi, &spec, &opts).map_err(err)?;
                let reports = r.report(LIMIT_TOL, &opts);
                ok &= reports.iter().all(|c| c.pass);
                worst = worst.max(reports[0].residual);
                gap = gap.max(r.max_node_gap);
            }
        }
    }
    Ok((ok, format!("max relative residual {worst:.2e} <= 1e-4, max |g_xi - gamma.xi| {gap:.2e} <= 2e-4")))
}

fn c6_collar() -> Outcome {
    let spec = QuadratureSpec::new(6, 8, 1).map_err(err)?;
    let opts = TraceOptions::default();
    let mut evaluations = 0;
    let mut violations = 0;
    let mut worst_ratio: f64 = 0.0;
    for (dname, d) in domains()? {
        let (smooth, jumps) = fields(dname)?;
        for (_, u) in smooth.iter().chain(&jumps) {
            for (k, patch) in d.patches().iter().enumerate() {
                let chart = &patch.chart;
                for xi in [Vector::unit(2, 1), chart.xi_i(0, chart.default_delta())] {
                    let eps0 = DirectionalTracer::new(chart, &xi).map_err(err)?.eps0();
                    for f in [0.5, 0.25, 0.125] {
                        let c = collar_estimate(u, &d, k, &xi, f * eps0, &spec, &opts).map_err(err)?;
                        evaluations += 1;
                        if c.violation() > 1e-9 {
                            violations += 1;
                        }
                        if c.rhs() > 1e-12 {
                            worst_ratio = worst_ratio.max(c.lhs / c.rhs());
                        }
                    }
                }
            }
        }
    }
    Ok((violations == 0, format!("{evaluations} evaluations, {violations} violations, max lhs/rhs {worst_ratio:.3}")))
}

fn c7_strict() -> Outcome {
    let spec = QuadratureSpec::new(4, 16, 1).map_err(err)?;
    let opts = TraceOptions::default();
    let d = unit_square().map_err(err)?;
    let pad = BoxWindow::from_bounds(&[(-0.25, 1.25), (-0.25, 1.25)]).map_err(err)?;
    let radii = [0.08, 0.04, 0.02, 0.01];
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, u) in [
        ("affine", affine().map_err(err)?),
        ("jump", affine_jump(flat_interface(0.5).map_err(err)?).map_err(err)?),
    ] {
        let u = u.with_domain(pad).map_err(err)?;
        let s = strict_convergence_experiment(&u, &d, &radii, &spec, &opts).map_err(err)?;
        let reports = s.report(1e-3);
        ok &= reports.iter().all(|r| r.pass);
        let last: Vec<String> =
            reports.iter().filter(|r| !r.check.ends_with("-decrease")).map(|r| format!("{:.1e}", r.residual)).collect();
        detail.push(format!("{name} [{}]", last.join(", ")));
    }
    Ok((ok, format!("relative deficits at r = 0.01 (l1, variation, trace): {}; all decreasing", detail.join(", "))))
}

fn c8_jump() -> Outcome {
    let spec = QuadratureSpec::new(6, 16, 1).map_err(err)?;
    let half = HalfBallOptions::default();
    let square = unit_square().map_err(err)?;
    let cases = [
        ("flat-constant", &square, constant_jump(0.5).map_err(err)?, bump(0.5, 0.5, 0.3).map_err(err)?),
        ("flat-affine", &square, affine_jump(flat_interface(0.5).map_err(err)?).map_err(err)?, bump(0.45, 0.55, 0.3).map_err(err)?),
    ];
    let centered = centered_square().map_err(err)?;
    let curved = ("curved", &centered, affine_jump(sine_interface().map_err(err)?).map_err(err)?, bump(0.5, 0.1, 0.35).map_err(err)?);
    let mut ok = true;
    let mut detail = Vec::new();
    for (name, d, u, phi) in cases.into_iter().chain([curved]) {
        let r = jump_reconstruction_check(&u, d, &phi, &spec, &half).map_err(err)?;
        let reports = r.report(1e-4);
        ok &= reports.iter().all(|c| c.pass) && r.flip_swaps == Some(true);
        detail.push(format!("{name} {:.1e}", reports[0].residual));
    }
    Ok((ok, format!("relative |A - B|: {}; orientation flip swaps u+- exactly", detail.join(", "))))
}

fn c9_averaged() -> Outcome {
    let opts = TraceOptions::default();
    let mut worst: f64 = 0.0;
    for (dname, d) in domains()? {
        let level = if dname == "square" { 0.5 } else { -0.4 };
        for u in [trig().map_err(err)?, affine_jump(flat_interface(level).map_err(err)?).map_err(err)?] {
            let r = averaged_trace_agreement(&u, &d, 10, 9, &opts).map_err(err)?;
            if r.rows.len() != 10 {
                return Err(format!("only {} nodes sampled", r.rows.len()));
            }
            worst = worst.max(r.max_gap());
        }
    }
    Ok((worst <= 2e-4, format!("10 nodes per domain and field, max gap {worst:.2e} <= 2e-4")))
}

fn c10_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let scenarios = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    let run = |k: usize, jobs: &str, timing: bool| -> Result<String, String> {
        let out = dir.path().join(format!("run{k}"));
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_bdtrace"));
        cmd.arg("--config").arg(&scenarios).args(["--filter", "unit-square-*", "--jobs", jobs]).arg("--out").arg(&out);
        if !timing {
            cmd.arg("--no-timing");
        }
        let status = cmd.env_remove("BDTRACE_SEED").output().map_err(err)?.status;
        if status.code() != Some(0) {
            return Err(format!("bdtrace exited with {status}"));
        }
        fs::read_to_string(out.join("report.csv")).map_err(err)
    };
    let csvs = [run(0, "1", false)?, run(1, "1", false)?, run(2, "4", false)?, run(3, "4", false)?];
    let identical = csvs.windows(2).all(|w| w[0] == w[1]);
    let strip = |s: &str| -> Vec<String> { s.lines().map(|l| l.rsplit_once(',').map_or(l, |p| p.0).to_string()).collect() };
    let timed = [run(4, "1", true)?, run(5, "4", true)?];
    let modulo_time = strip(&timed[0]) == strip(&timed[1]) && strip(&timed[0]) == strip(&csvs[0]);
    let rows = csvs[0].lines().count() - 1;
    Ok((
        identical && modulo_time,
        format!("{rows} rows; byte-identical across 2 runs x --jobs 1/4 with --no-timing: {identical}; identical modulo wall time with timing: {modulo_time}"),
    ))
}

fn main() {
    let results = [
        criterion(1, "symmetric-product lower bound", Some(Duration::from_secs(1)), c1_symmetric_product),
        criterion(2, "cone separation, beta-cone inclusion, reparametrized Lipschitz bound", Some(Duration::from_secs(10)), c2_cone_geometry),
        criterion(3, "trace equals restriction for continuous fields", Some(Duration::from_secs(30)), c3_restriction),
        criterion(4, "full integration-by-parts residual", Some(Duration::from_secs(120)), c4_ibp),
        criterion(5, "directional integration by parts and linearity consistency", Some(Duration::from_secs(60)), c5_directional),
        criterion(6, "collar estimate", None, c6_collar),
        criterion(7, "strict-convergence continuity of the trace", Some(Duration::from_secs(120)), c7_strict),
        criterion(8, "jump representation from one-sided limits", None, c8_jump),
        criterion(9, "averaged and assembled traces agree", None, c9_averaged),
        criterion(10, "CLI determinism", None, c10_determinism),
    ];
    let failed = results.iter().filter(|p| !**p).count();
    println!("acceptance: {} of {} criteria pass", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
