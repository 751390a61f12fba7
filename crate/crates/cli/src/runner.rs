use std::time::Instant;

use bdtrace::trace::{trace_field, DirectionalTracer, TraceOptions};
use bdtrace::verify::{
    averaged_trace_agreement, chart_overlap_consistency, collar_estimate, directional_ibp_residual, ibp_check,
    jump_reconstruction_check, strict_convergence_experiment, trace_norm_bound, CheckReport, HalfBallOptions,
};
use bdtrace::{Error, Result};
use rayon::prelude::*;

use crate::scenario::{Check, CheckKind, Scenario};

/// One report row.
#[derive(Debug, Clone)]
pub struct Row {
    pub scenario: String,
    pub report: CheckReport,
    pub wall_ms: u128,
}

#[derive(Debug, Clone, Copy)]
pub struct RunOptions {
    pub tol_scale: f64,
    pub jobs: usize,
}

fn evaluate(sc: &Scenario, check: &Check, tol: f64, opts: &TraceOptions) -> Result<Vec<CheckReport>> {
    let (u, d, spec) = (&sc.field, &sc.domain, &sc.spec);
    match &check.kind {
        CheckKind::Restriction => {
            if !u.is_continuous() {
                return Err(Error::InvalidArgument("trace restriction needs a continuous field".into()));
            }
            let t = trace_field(u, d, spec.cells_per_axis, spec.order, opts)?;
            if t.partial {
                return Err(Error::NotConverged { what: "trace at some boundary node".into(), residual: f64::NAN, tol: opts.tol });
            }
            let mut gap: f64 = 0.0;
            for (n, g) in t.nodes.iter().zip(&t.values) {
                gap = gap.max((*g - u.eval(&n.point)?).norm());
            }
            Ok(vec![CheckReport::new("restriction", gap, tol).with_meta("nodes", t.nodes.len())])
        }
        CheckKind::Ibp { phi } => ibp_check(u, d, phi, spec, opts, tol),
        CheckKind::DirectionalIbp { phi, xi } => Ok(directional_ibp_residual(u, d, phi, xi, spec, opts)?.report(tol, opts)),
        CheckKind::TraceNorm => {
            let mut r = trace_norm_bound(u, d, spec, opts)?.report();
            r.tolerance = tol;
            r.pass = r.residual <= tol;
            Ok(vec![r])
        }
        CheckKind::Strict { radii } => Ok(strict_convergence_experiment(u, d, radii, spec, opts)?.report(tol)),
        CheckKind::Jump { phi, rho0, count } => {
            let half = HalfBallOptions { rho0: *rho0, count: *count, tol: opts.tol };
            Ok(jump_reconstruction_check(u, d, phi, spec, &half)?.report(tol))
        }
        CheckKind::Collar { patch, directions, fractions } => {
            let chart = &d.patches()[*patch].chart;
            let mut worst: f64 = 0.0;
            let mut pairs = 0;
            for xi in directions {
                let eps0 = DirectionalTracer::new(chart, xi)?.eps0();
                for f in fractions {
                    worst = worst.max(collar_estimate(u, d, *patch, xi, f * eps0, spec, opts)?.violation());
                    pairs += 1;
                }
            }
            Ok(vec![CheckReport::new("collar", worst, tol).with_meta("evaluations", pairs)])
        }
        CheckKind::AveragedTrace { points } => Ok(vec![averaged_trace_agreement(u, d, *points, sc.seed, opts)?.report(tol)]),
        CheckKind::Overlap => Ok(vec![chart_overlap_consistency(u, d, spec, opts)?.report(tol)]),
    }
}

fn run_check(sc: &Scenario, check: &Check, options: &RunOptions) -> Vec<Row> {
    let tol = check.tol * options.tol_scale;
    let opts = TraceOptions { tol: sc.limit_tol * options.tol_scale, ..TraceOptions::default() };
    let start = Instant::now();
    let reports = evaluate(sc, check, tol, &opts).unwrap_or_else(|e| vec![CheckReport::failed(check.kind.name(), tol, &e)]);
    let wall_ms = start.elapsed().as_millis();
    reports
        .into_iter()
        .map(|mut report| {
            if let Some(label) = &check.label {
                report.check = format!("{label}:{}", report.check);
            }
            Row { scenario: sc.name.clone(), report, wall_ms }
        })
        .collect()
}

/// Runs every check of every scenario on a pool of `options.jobs` workers.
/// Rows come back sorted by scenario and check name.
pub fn run(scenarios: &[Scenario], options: &RunOptions) -> std::result::Result<Vec<Row>, rayon::ThreadPoolBuildError> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(options.jobs.max(1)).build()?;
    let jobs: Vec<(&Scenario, &Check)> = scenarios.iter().flat_map(|s| s.checks.iter().map(move |c| (s, c))).collect();
    let mut rows: Vec<Row> =
        pool.install(|| jobs.par_iter().map(|(s, c)| run_check(s, c, options)).collect::<Vec<_>>()).into_iter().flatten().collect();
    rows.sort_by(|a, b| (&a.scenario, &a.report.check).cmp(&(&b.scenario, &b.report.check)));
    Ok(rows)
}
