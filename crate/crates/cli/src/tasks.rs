//! Task execution: one scenario task in, one report entry out.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use indexmap::IndexMap;
use rayon::prelude::*;
use serde_json::{json, Map, Number, Value};

use nqs_core::curvature::{
    charge_transport, holonomy_fit_with, make_sensitivity_triple, partial_swap_channel, partial_swap_loop,
    qutrit_cartan, qutrit_loop, rotation_channel, HolonomyReport, TransportMap,
};
use nqs_core::nlayer::{chain_laplacian_error, convergence_order, global_action, solve_self_consistent, ChargeField};
use nqs_core::operator::trace_norm;
use nqs_core::qlayer::{
    analyze_context, kernel_dimension, primitive_stationary_state, sensitivity_report_with, spectral_gap_with,
};
use nqs_core::slayer::{
    covariance_metric, divergence_gradient, fisher_from_divergence, hessian_metric, operator_charges,
    quadratic_cost, CartanSet, GibbsFamily, MetricMatrix,
};
use nqs_core::sweep::contraction_check;
use nqs_core::{CMatrix, Execution, RMatrix};

use crate::report::{Report, Status, TaskError, TaskResult};
use crate::scenario::{Context, CovarianceState, LoopSpec, MetricMethod, Scenario, Task, TaskSpec};

type Outcome = std::result::Result<(Value, BTreeMap<String, bool>), TaskError>;

impl From<nqs_core::Error> for TaskError {
    fn from(e: nqs_core::Error) -> Self {
        TaskError {
            code: e.code().to_string(),
            message: e.to_string(),
        }
    }
}

/// Non-finite values become `null`; JSON has no representation for them.
pub fn num(x: f64) -> Value {
    Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn nums(xs: &[f64]) -> Value {
    Value::Array(xs.iter().map(|x| num(*x)).collect())
}

/// Rows of `[re, im]` pairs.
pub fn cmatrix(m: &CMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| json!([num(m[(i, j)].re), num(m[(i, j)].im)])).collect()))
            .collect(),
    )
}

pub fn rmatrix(m: &RMatrix) -> Value {
    Value::Array(
        (0..m.nrows())
            .map(|i| Value::Array((0..m.ncols()).map(|j| num(m[(i, j)])).collect()))
            .collect(),
    )
}

fn field(f: &ChargeField) -> Value {
    Value::Object(f.iter().map(|(k, v)| (k.clone(), nums(v))).collect::<Map<_, _>>())
}

fn metric_value(g: &MetricMatrix) -> Value {
    json!({ "metric": rmatrix(g.entries()), "eigenvalues": nums(&g.eigenvalues()) })
}

fn holonomy_value(r: &HolonomyReport) -> Value {
    json!({
        "loop_edges": r.loop_edges.iter().map(|(s, t)| json!([s, t])).collect::<Vec<_>>(),
        "deviation_matrix": rmatrix(&r.deviation_matrix),
        "theta_sweep": r.theta_sweep.iter().map(|(t, n)| json!([num(*t), num(*n)])).collect::<Vec<_>>(),
        "fitted_exponent": r.fitted_exponent.map(num).unwrap_or(Value::Null),
        "fitted_k": rmatrix(&r.fitted_k),
        "theta_min": num(r.theta_min),
    })
}

fn missing(what: &str, id: &str) -> TaskError {
    TaskError {
        code: "internal".into(),
        message: format!("context `{id}` lost its {what} after validation"),
    }
}

fn context<'a>(sc: &'a Scenario, id: &str) -> Result<&'a Context, TaskError> {
    sc.context(id).ok_or_else(|| missing("entry", id))
}

/// Hessian of the context's cost with each graph neighbour pinned at its
/// preferred charges and coupled with weight `λ`, so a quadratic functional gives
/// `K + λ·deg`.
fn intrinsic_metric(sc: &Scenario, ctx: &Context, at: &[f64], step: f64) -> Result<(MetricMatrix, usize, f64), TaskError> {
    let f = ctx.functional.as_ref().ok_or_else(|| missing("functional", &ctx.id))?;
    let (neighbours, coupling): (Vec<Vec<f64>>, f64) = match &sc.graph {
        Some(spec) if spec.graph().rank_of(&ctx.id).is_some() => (
            spec.graph()
                .neighbors(&ctx.id)
                .iter()
                .map(|(n, _)| spec.potential(n).map(|p| p.preferred()).unwrap_or_default())
                .collect(),
            spec.coupling(),
        ),
        _ => (Vec::new(), 0.0),
    };
    let refs: Vec<(&[f64], f64)> = neighbours.iter().map(|q| (q.as_slice(), coupling)).collect();
    let cost = |q: &[f64]| quadratic_cost(q, f, &refs).unwrap_or(f64::NAN);
    Ok((hessian_metric(&cost, at, step)?, neighbours.len(), coupling))
}

fn transport_builder(cartan: &CartanSet, edges: &[(String, String, CMatrix, f64)], theta: f64) -> nqs_core::Result<Vec<TransportMap>> {
    edges
        .iter()
        .map(|(s, t, x, scale)| charge_transport(s.as_str(), t.as_str(), &rotation_channel(x, scale * theta)?, cartan))
        .collect()
}

fn execute(sc: &Scenario, task: &Task) -> Outcome {
    let tol = &sc.options.tolerances;
    let mut bounds = BTreeMap::new();
    let outputs = match &task.spec {
        TaskSpec::AnalyzeContext { context: id, t0 } => {
            let l = context(sc, id)?.generator.as_ref().ok_or_else(|| missing("generator", id))?;
            let r = analyze_context(l, *t0, tol)?;
            json!({
                "stationary": cmatrix(r.stationary.matrix()),
                "stationary_eigenvalues": nums(&r.stationary.eigenvalues()),
                "gap": num(r.gap),
                "doeblin_epsilon": num(r.doeblin_epsilon),
                "doeblin_time": num(r.doeblin_time),
                "doeblin_rate": r.doeblin_rate.map(num).unwrap_or(Value::Null),
                "primitive": r.primitive,
                "kernel_dim": kernel_dimension(l, tol)?,
                "certified_sensitivity_factor": num(r.certified_sensitivity_factor),
                "stationary_residual": num(r.stationary_residual),
                "spectrum": r.spectrum.iter().map(|z| json!([num(z.re), num(z.im)])).collect::<Vec<_>>(),
            })
        }
        TaskSpec::Sensitivity { context: id, perturbation, t0 } => {
            let l = context(sc, id)?.generator.as_ref().ok_or_else(|| missing("generator", id))?;
            let r = sensitivity_report_with(l, perturbation, *t0, tol)?;
            bounds.insert("nominal".into(), r.nominal_satisfied);
            bounds.insert("certified".into(), r.certified_satisfied);
            json!({
                "lhs": num(r.lhs),
                "drive_norm": num(r.drive_norm),
                "gap": num(r.gap),
                "epsilon": num(r.epsilon),
                "t0": num(r.t0),
                "rhs_nominal": num(r.rhs_nominal),
                "rhs_certified": num(r.rhs_certified),
                "drho": cmatrix(&r.drho),
            })
        }
        TaskSpec::Metric { context: id, method, at, state, step } => {
            let ctx = context(sc, id)?;
            let cartan = || ctx.cartan.as_ref().ok_or_else(|| missing("Cartan set", id));
            match method {
                MetricMethod::Hessian => {
                    let (g, degree, coupling) = intrinsic_metric(sc, ctx, at, *step)?;
                    let mut v = metric_value(&g);
                    v["degree"] = json!(degree);
                    v["coupling"] = num(coupling);
                    v["at"] = nums(at);
                    v
                }
                MetricMethod::Covariance => {
                    let cartan = cartan()?;
                    let rho = match state {
                        CovarianceState::Gibbs => GibbsFamily::new(cartan).state(at)?,
                        CovarianceState::Stationary => {
                            let l = ctx.generator.as_ref().ok_or_else(|| missing("generator", id))?;
                            primitive_stationary_state(l, tol)?
                        }
                    };
                    let mut v = metric_value(&covariance_metric(&rho, cartan)?);
                    v["state"] = json!(match state {
                        CovarianceState::Gibbs => "gibbs",
                        CovarianceState::Stationary => "stationary",
                    });
                    v
                }
                MetricMethod::Fisher => {
                    let family = GibbsFamily::new(cartan()?);
                    let fam = |x: &[f64]| family.state(x);
                    let g = fisher_from_divergence(&fam, at, *step)?;
                    let grad = divergence_gradient(&fam, at, *step)?;
                    let mut v = metric_value(&g);
                    v["divergence_gradient"] = nums(&grad);
                    v["at"] = nums(at);
                    v
                }
            }
        }
        TaskSpec::SolveGraph { initial, tol: solve_tol, max_iter } => {
            let spec = sc.graph.as_ref().ok_or_else(|| missing("graph", "-"))?;
            let s = solve_self_consistent(spec, initial.as_ref(), *solve_tol, *max_iter)?;
            bounds.insert("residual_within_tolerance".into(), s.residual_norm <= *solve_tol);
            json!({
                "q_star": field(&s.q_star),
                "residual": field(&s.residual),
                "residual_norm": num(s.residual_norm),
                "iterations": s.iterations,
                "min_hessian_eigenvalue": num(s.min_hessian_eigenvalue),
                "action": num(global_action(spec, &s.q_star)?),
            })
        }
        TaskSpec::Holonomy { rank, loop_spec, thetas } => {
            let r = match loop_spec {
                LoopSpec::QutritRotation => holonomy_fit_with(*rank, &qutrit_loop, thetas, Execution::default())?,
                LoopSpec::PartialSwap => holonomy_fit_with(*rank, &partial_swap_loop, thetas, Execution::default())?,
                LoopSpec::Custom { cartan, edges } => {
                    let builder = |theta: f64| transport_builder(cartan, edges, theta);
                    holonomy_fit_with(*rank, &builder, thetas, Execution::default())?
                }
            };
            holonomy_value(&r)
        }
        TaskSpec::Transport { source, target, channel } => {
            let cartan = context(sc, source)?.cartan.as_ref().ok_or_else(|| missing("Cartan set", source))?;
            let t = charge_transport(source.as_str(), target.as_str(), channel, cartan)?;
            json!({ "source": t.source, "target": t.target, "matrix": rmatrix(&t.matrix) })
        }
        TaskSpec::ChainDemo { sizes, weight } => {
            use std::f64::consts::PI;
            let f = |x: f64| (PI * x).sin();
            let d2f = |x: f64| -PI * PI * (PI * x).sin();
            let errors = sizes
                .iter()
                .map(|&n| chain_laplacian_error(n, *weight, &f, &d2f))
                .collect::<nqs_core::Result<Vec<_>>>()?;
            let orders: Vec<f64> = sizes
                .windows(2)
                .zip(errors.windows(2))
                .map(|(n, e)| convergence_order(n[0], e[0], n[1], e[1]))
                .collect();
            json!({
                "function": "sin(pi x)",
                "sizes": sizes,
                "errors": nums(&errors),
                "orders": nums(&orders),
            })
        }
        TaskSpec::QutritDemo { thetas } => {
            let cartan = qutrit_cartan()?;
            let family = GibbsFamily::new(&cartan);
            let fam = |x: &[f64]| family.state(x);
            let origin = [0.0, 0.0];
            let fisher = fisher_from_divergence(&fam, &origin, sc.options.divergence_step)?;
            let covariance = covariance_metric(&family.state(&origin)?, &cartan)?;
            let holonomy = holonomy_fit_with(2, &qutrit_loop, thetas, Execution::default())?;
            let swap = charge_transport("C1", "C2", &partial_swap_channel(3, 0, 1, 1.0)?, &cartan)?;
            json!({
                "fisher": metric_value(&fisher),
                "covariance": metric_value(&covariance),
                "fisher_covariance_gap": num((fisher.entries() - covariance.entries()).amax()),
                "holonomy": holonomy_value(&holonomy),
                "full_swap_transport": rmatrix(&swap.matrix),
            })
        }
        TaskSpec::ResponseChain { context: id, response, dn } => {
            let ctx = context(sc, id)?;
            let l = ctx.generator.as_ref().ok_or_else(|| missing("generator", id))?;
            let cartan = ctx.cartan.as_ref().ok_or_else(|| missing("Cartan set", id))?;
            let f = ctx.functional.as_ref().ok_or_else(|| missing("functional", id))?;
            let triple = make_sensitivity_triple(l, response, dn)?;
            let dq = operator_charges(&triple.drho, cartan)?;
            let (g, _, _) = intrinsic_metric(sc, ctx, f.preferred(), sc.options.hessian_step)?;
            let r = dq.len();
            let mut second_variation = 0.0;
            for i in 0..r {
                for j in 0..r {
                    second_variation += 0.5 * dq[i] * g.entries()[(i, j)] * dq[j];
                }
            }
            let rho = primitive_stationary_state(l, tol)?;
            let drive_norm = trace_norm(&triple.dl.apply(rho.matrix()))?;
            let gap = spectral_gap_with(l, tol)?;
            let lipschitz = cartan.lipschitz_constant();
            let metric_norm = g.eigenvalues().last().copied().unwrap_or(0.0);
            let schematic = 0.5 * metric_norm * r as f64 * (lipschitz * drive_norm / gap).powi(2);
            json!({
                "dn": nums(dn),
                "drho_trace_norm": num(trace_norm(&triple.drho)?),
                "poisson_residual": num(triple.poisson_residual),
                "dq": nums(&dq),
                "metric": rmatrix(g.entries()),
                "second_variation": num(second_variation),
                "lipschitz": num(lipschitz),
                "gap": num(gap),
                "drive_norm": num(drive_norm),
                "schematic_scale": num(schematic),
                "schematic_ratio": if schematic > 0.0 { num(second_variation / schematic) } else { Value::Null },
            })
        }
        TaskSpec::DoeblinCheck { dim, seed, states, steps } => {
            let c = contraction_check(*dim, *seed, *states, *steps)?;
            bounds.insert("contraction".into(), c.violations == 0);
            json!({
                "dim": c.dim,
                "seed": c.seed,
                "t0": num(c.t0),
                "epsilon": num(c.epsilon),
                "checks": c.checks,
                "violations": c.violations,
                "worst_excess": num(c.worst_excess),
            })
        }
    };
    Ok((outputs, bounds))
}

fn panic_message(payload: Box<dyn std::any::Any + Send>) -> String {
    payload
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| payload.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into())
}

pub fn run_task(sc: &Scenario, task: &Task, timings: bool) -> TaskResult {
    let start = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| execute(sc, task))).unwrap_or_else(|p| {
        Err(TaskError {
            code: "internal".into(),
            message: panic_message(p),
        })
    });
    let wall_time_ms = timings.then(|| start.elapsed().as_secs_f64() * 1e3);
    match outcome {
        Ok((outputs, bounds)) => TaskResult {
            kind: task.kind.clone(),
            status: Status::Ok,
            inputs: task.inputs.clone(),
            outputs: Some(outputs),
            bounds,
            error: None,
            wall_time_ms,
        },
        Err(error) => TaskResult {
            kind: task.kind.clone(),
            status: Status::Error,
            inputs: task.inputs.clone(),
            outputs: None,
            bounds: BTreeMap::new(),
            error: Some(error),
            wall_time_ms,
        },
    }
}

/// Runs every task on a pool of `jobs` threads. Tasks are independent, and
/// results come back in declared order whatever the pool size.
pub fn run_scenario(sc: &Scenario, jobs: usize, timings: bool) -> Report {
    let run_all = || -> Vec<TaskResult> { sc.tasks.par_iter().map(|t| run_task(sc, t, timings)).collect() };
    let results = match rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build() {
        Ok(pool) => pool.install(run_all),
        Err(_) => sc.tasks.iter().map(|t| run_task(sc, t, timings)).collect(),
    };
    let results: IndexMap<String, TaskResult> = sc.tasks.iter().map(|t| t.id.clone()).zip(results).collect();
    Report::new(sc.version.clone(), sc.name.clone(), results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenario::load_scenario;

    #[test]
    fn non_finite_numbers_become_null() {
        assert_eq!(num(f64::INFINITY), Value::Null);
        assert_eq!(num(f64::NAN), Value::Null);
        assert_eq!(num(0.5), json!(0.5));
    }

    #[test]
    fn non_primitive_task_fails_alone() {
        // pure dephasing keeps every diagonal state fixed
        let text = r#"{
            "version": "nqs-geom/1",
            "contexts": [
                {"id": "deph", "dim": 2, "generator": {"form": "lindblad", "matrices": [[[0, 0], [0, 0]], [[1, 0], [0, -1]]]}},
                {"id": "reset", "dim": 2, "generator": {"form": "reset", "rate": 1}}
            ],
            "tasks": [
                {"id": "bad", "kind": "analyze-context", "context": "deph"},
                {"id": "good", "kind": "analyze-context", "context": "reset"}
            ]
        }"#;
        let report = run_scenario(&load_scenario(text).unwrap(), 2, false);
        let bad = &report.results["bad"];
        assert_eq!(bad.status, Status::Error);
        assert_eq!(bad.error.as_ref().unwrap().code, "non-primitive");
        assert_eq!(report.results["good"].status, Status::Ok);
        let gap = report.results["good"].outputs.as_ref().unwrap()["gap"].as_f64().unwrap();
        assert!((gap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_metric_counts_neighbours() {
        let text = r#"{
            "version": "nqs-geom/1",
            "contexts": [
                {"id": "a", "dim": 1, "functional": {"kind": "quadratic", "stiffness": [[2]], "preferred": [0]}},
                {"id": "b", "dim": 1, "functional": {"kind": "quadratic", "stiffness": [[1]], "preferred": [1]}},
                {"id": "c", "dim": 1, "functional": {"kind": "quadratic", "stiffness": [[1]], "preferred": [0]}}
            ],
            "graph": {"vertices": ["a", "b", "c"], "edges": [{"a": "a", "b": "b", "weight": 0.1}, {"a": "a", "b": "c", "weight": 0.1}], "coupling": 0.5},
            "tasks": [{"id": "m", "kind": "metric", "context": "a", "method": "hessian"}]
        }"#;
        let report = run_scenario(&load_scenario(text).unwrap(), 1, false);
        let g = report.results["m"].outputs.as_ref().unwrap()["metric"][0][0].as_f64().unwrap();
        assert!((g - 3.0).abs() < 1e-6, "{g}");
    }

    #[test]
    fn wall_time_only_on_request() {
        let text = r#"{"version": "nqs-geom/1", "tasks": [{"id": "c", "kind": "chain-demo", "sizes": [10, 20]}]}"#;
        let sc = load_scenario(text).unwrap();
        assert!(run_scenario(&sc, 1, false).results["c"].wall_time_ms.is_none());
        assert!(run_scenario(&sc, 1, true).results["c"].wall_time_ms.is_some());
    }
}
