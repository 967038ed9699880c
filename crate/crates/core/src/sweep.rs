//! Seeded batch checks over families of random generators.
//!
//! Each case is independent, so batches fan out through [`crate::exec`]; results
//! are returned in case order and are identical in both execution modes.

use crate::error::Result;
use crate::exec::{map_slice, Execution};
use crate::models::{random_gkls, random_primitive_generator};
use crate::operator::{random_density, trace_norm, DensityOperator, Superoperator};
use crate::qlayer::{
    build_superoperator, doeblin_epsilon, sensitivity_report, solve_poisson, spectral_gap,
    stationary_state,
};

/// Contraction of one generator's discrete-time chain against the Doeblin rate.
#[derive(Debug, Clone, PartialEq)]
pub struct ContractionCheck {
    pub dim: usize,
    pub seed: u64,
    pub t0: f64,
    pub epsilon: f64,
    pub checks: usize,
    pub violations: usize,
    /// Largest `‖Φⁿρ − ρ°‖₁ − (1−ε)ⁿ‖ρ − ρ°‖₁` seen.
    pub worst_excess: f64,
}

/// Slack added to every contraction comparison.
pub const CONTRACTION_SLACK: f64 = 1e-9;

/// `‖Φ_{n t0}ρ − ρ°‖₁ ≤ (1−ε)ⁿ‖ρ − ρ°‖₁` for `n = 1..=steps` on `states` seeded
/// states, with `t0 = 1/g`.
pub fn contraction_check(dim: usize, seed: u64, states: usize, steps: usize) -> Result<ContractionCheck> {
    let l = random_primitive_generator(dim, seed)?;
    let rho_inf = stationary_state(&l)?;
    let t0 = 1.0 / spectral_gap(&l)?;
    let epsilon = doeblin_epsilon(&l, t0)?;
    let phi = l.exp(t0)?;
    let mut violations = 0;
    let mut worst_excess = f64::NEG_INFINITY;
    for k in 0..states {
        let rho = random_density(dim, seed.wrapping_mul(100_003).wrapping_add(k as u64))?;
        let initial = trace_norm(&(rho.matrix() - rho_inf.matrix()))?;
        let mut current = rho.matrix().clone();
        for n in 1..=steps {
            current = phi.apply(&current);
            let distance = trace_norm(&(&current - rho_inf.matrix()))?;
            let bound = (1.0 - epsilon).powi(n as i32) * initial;
            let excess = distance - bound;
            worst_excess = worst_excess.max(excess);
            if excess > CONTRACTION_SLACK {
                violations += 1;
            }
        }
    }
    Ok(ContractionCheck {
        dim,
        seed,
        t0,
        epsilon,
        checks: states * steps,
        violations,
        worst_excess,
    })
}

pub fn contraction_sweep(
    cases: &[(usize, u64)],
    states: usize,
    steps: usize,
    exec: Execution,
) -> Result<Vec<ContractionCheck>> {
    map_slice(cases, exec, |&(d, seed)| contraction_check(d, seed, states, steps))
        .into_iter()
        .collect()
}

/// Random primitive generator with a random trace-annihilating perturbation.
pub fn perturbation_case(dim: usize, seed: u64) -> Result<(Superoperator, Superoperator)> {
    let l = random_primitive_generator(dim, seed)?;
    let dl = build_superoperator(&random_gkls(dim, seed ^ 0x5e_ed0f_d1ff)?)?;
    Ok((l, dl))
}

/// Finite-difference remainder `‖ρ°(L + s·dL) − ρ° − s·δρ°‖₁` at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct PoissonSlope {
    pub dim: usize,
    pub seed: u64,
    pub remainders: Vec<(f64, f64)>,
    /// Least-squares slope of `log remainder` against `log s`.
    pub order: f64,
}

pub fn poisson_slope(dim: usize, seed: u64, steps: &[f64]) -> Result<PoissonSlope> {
    let (l, dl) = perturbation_case(dim, seed)?;
    let rho = stationary_state(&l)?;
    let drho = solve_poisson(&l, &dl)?;
    let mut remainders = Vec::with_capacity(steps.len());
    for &s in steps {
        let shifted = stationary_state(&l.add_scaled(&dl, s)?)?;
        let r = shifted.matrix() - rho.matrix() - &drho * num_complex::Complex64::new(s, 0.0);
        remainders.push((s, trace_norm(&r)?));
    }
    let order = log_log_slope(&remainders);
    Ok(PoissonSlope {
        dim,
        seed,
        remainders,
        order,
    })
}

pub fn poisson_slope_sweep(
    cases: &[(usize, u64)],
    steps: &[f64],
    exec: Execution,
) -> Result<Vec<PoissonSlope>> {
    map_slice(cases, exec, |&(d, seed)| poisson_slope(d, seed, steps))
        .into_iter()
        .collect()
}

/// Least-squares slope through `(ln x, ln y)`.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let pts: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Outcome of the certified `t0/ε` sensitivity bound on one random case.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundCheck {
    pub dim: usize,
    pub seed: u64,
    pub lhs: f64,
    pub rhs_certified: f64,
    pub certified_satisfied: bool,
    pub nominal_satisfied: bool,
}

pub fn sensitivity_bound_sweep(cases: &[(usize, u64)], exec: Execution) -> Result<Vec<BoundCheck>> {
    map_slice(cases, exec, |&(dim, seed)| {
        let (l, dl) = perturbation_case(dim, seed)?;
        let r = sensitivity_report(&l, &dl, None)?;
        Ok(BoundCheck {
            dim,
            seed,
            lhs: r.lhs,
            rhs_certified: r.rhs_certified,
            certified_satisfied: r.certified_satisfied,
            nominal_satisfied: r.nominal_satisfied,
        })
    })
    .into_iter()
    .collect()
}

/// `(d, seed)` pairs cycling through dimensions `2..=max_dim`.
pub fn seeded_cases(count: usize, max_dim: usize, base_seed: u64) -> Vec<(usize, u64)> {
    (0..count)
        .map(|i| (2 + i % (max_dim - 1), base_seed + i as u64))
        .collect()
}

/// Random states used as initial conditions for a generator.
pub fn seeded_states(dim: usize, seed: u64, count: usize) -> Result<Vec<DensityOperator>> {
    (0..count)
        .map(|k| random_density(dim, seed.wrapping_mul(100_003).wrapping_add(k as u64)))
        .collect()
}
