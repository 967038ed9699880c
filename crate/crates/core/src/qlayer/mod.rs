//! Stationary states, primitivity, mixing rates and stationary-state sensitivity
//! of GKLS generators.
//!
//! Everything here works in the Schrödinger picture: a generator's matrix acts on
//! vectorized states. The Heisenberg picture is the conjugate transpose.
//!
//! Generators annihilate the trace, so they map every operator into the traceless
//! subspace `B₀`. Restricting to `B₀` (with the orthonormal basis from
//! [`traceless_basis`]) gives a `(d²−1)`-dimensional matrix whose spectrum is the
//! generator's spectrum with the stationary zero removed. Spectral gaps, the
//! stationary state and Poisson solves are all computed on that restriction.

mod generator;

pub use generator::{build_superoperator, kraus_channel, unitary_channel, GklsGenerator};

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::linalg::{self, CMatrix};
use crate::operator::{trace_norm, DensityOperator, Superoperator, Tolerances};

/// Orthonormal basis of traceless `d×d` matrices, as `d²×(d²−1)` columns of vectorized operators.
pub fn traceless_basis(d: usize) -> CMatrix {
    let n = d * d;
    let mut q = CMatrix::zeros(n, n.saturating_sub(1));
    let mut col = 0;
    for j in 0..d {
        for i in 0..d {
            if i != j {
                q[(i + j * d, col)] = linalg::ONE;
                col += 1;
            }
        }
    }
    for k in 1..d {
        let norm = ((k * (k + 1)) as f64).sqrt();
        for i in 0..k {
            q[(i + i * d, col)] = Complex64::new(1.0 / norm, 0.0);
        }
        q[(k + k * d, col)] = Complex64::new(-(k as f64) / norm, 0.0);
        col += 1;
    }
    q
}

/// Generator restricted to the traceless subspace.
fn restricted(l: &Superoperator) -> (CMatrix, CMatrix) {
    let q = traceless_basis(l.dim());
    let a = q.adjoint() * l.matrix() * &q;
    (q, a)
}

fn check_trace_annihilating(l: &Superoperator, tol: f64) -> Result<()> {
    let defect = l.trace_defect(0.0);
    if defect > tol * 1.0_f64.max(l.norm()) {
        return Err(Error::InvalidGenerator(format!(
            "generator does not annihilate the trace (defect {defect:e})"
        )));
    }
    Ok(())
}

/// Eigenvalues of the generator matrix, sorted by decreasing real part.
pub fn generator_spectrum(l: &Superoperator) -> Result<Vec<Complex64>> {
    let mut ev = linalg::eigenvalues(l.matrix())?;
    ev.sort_by(|a, b| b.re.total_cmp(&a.re).then(b.im.total_cmp(&a.im)));
    Ok(ev)
}

/// Number of generator eigenvalues with `|λ| < kernel · ‖L‖`.
pub fn kernel_dimension(l: &Superoperator, tol: &Tolerances) -> Result<usize> {
    let scale = l.norm();
    if scale == 0.0 {
        return Ok(l.dim() * l.dim());
    }
    let ev = linalg::eigenvalues(l.matrix())?;
    Ok(ev.iter().filter(|z| z.norm() < tol.kernel * scale).count())
}

/// Unique trace-one element of the generator's kernel.
pub fn stationary_state(l: &Superoperator) -> Result<DensityOperator> {
    stationary_state_with(l, &Tolerances::default())
}

pub fn stationary_state_with(l: &Superoperator, tol: &Tolerances) -> Result<DensityOperator> {
    check_trace_annihilating(l, tol.equality)?;
    let kernel_dim = kernel_dimension(l, tol)?;
    if kernel_dim != 1 {
        return Err(Error::NonPrimitive {
            kernel_dim,
            min_eigenvalue: None,
        });
    }
    let d = l.dim();
    // ρ° = I/d + Q y with (Q† L Q) y = −Q† L (I/d)
    let (q, a) = restricted(l);
    let center = linalg::vectorize(&linalg::identity(d)) * Complex64::new(1.0 / d as f64, 0.0);
    let rhs = -(q.adjoint() * (l.matrix() * &center));
    let y = linalg::solve(&a, &rhs).ok_or(Error::NonPrimitive {
        kernel_dim: 2,
        min_eigenvalue: None,
    })?;
    let x = center + &q * y;
    let rho = linalg::devectorize(&x, d);
    DensityOperator::normalized(&rho, tol.equality).map_err(|e| match e {
        Error::NotPositive(m) => Error::InvalidGenerator(format!(
            "kernel element is not positive (minimum eigenvalue {m:e})"
        )),
        other => other,
    })
}

/// Primitivity diagnostics; degenerate cases are reported, never raised.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimitivityReport {
    pub primitive: bool,
    pub stationary_kernel_dim: usize,
    /// Minimum eigenvalue of the stationary state, when it is unique.
    pub min_eig_of_stationary: Option<f64>,
}

pub fn primitivity_report(l: &Superoperator) -> PrimitivityReport {
    primitivity_report_with(l, &Tolerances::default())
}

pub fn primitivity_report_with(l: &Superoperator, tol: &Tolerances) -> PrimitivityReport {
    let kernel_dim = kernel_dimension(l, tol).unwrap_or(0);
    if kernel_dim != 1 {
        return PrimitivityReport {
            primitive: false,
            stationary_kernel_dim: kernel_dim,
            min_eig_of_stationary: None,
        };
    }
    match stationary_state_with(l, tol) {
        Ok(rho) => {
            let min = rho.min_eigenvalue();
            PrimitivityReport {
                primitive: min > tol.faithfulness,
                stationary_kernel_dim: 1,
                min_eig_of_stationary: Some(min),
            }
        }
        Err(_) => PrimitivityReport {
            primitive: false,
            stationary_kernel_dim: 1,
            min_eig_of_stationary: None,
        },
    }
}

/// Stationary state of a primitive generator, or the non-primitive error.
pub fn primitive_stationary_state(l: &Superoperator, tol: &Tolerances) -> Result<DensityOperator> {
    let rho = stationary_state_with(l, tol)?;
    let min = rho.min_eigenvalue();
    if min <= tol.faithfulness {
        return Err(Error::NonPrimitive {
            kernel_dim: 1,
            min_eigenvalue: Some(min),
        });
    }
    Ok(rho)
}

/// `g = −max Re λ` over the spectrum of the generator on traceless operators.
pub fn spectral_gap(l: &Superoperator) -> Result<f64> {
    spectral_gap_with(l, &Tolerances::default())
}

pub fn spectral_gap_with(l: &Superoperator, tol: &Tolerances) -> Result<f64> {
    primitive_stationary_state(l, tol)?;
    let (_, a) = restricted(l);
    let ev = linalg::eigenvalues(&a)?;
    let slowest = ev.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let gap = -slowest;
    if !(gap > 0.0) {
        return Err(Error::NonPrimitive {
            kernel_dim: 1,
            min_eigenvalue: None,
        });
    }
    Ok(gap)
}

/// Certified Doeblin constant at time `t0` from the Choi condition
/// `J(e^{t0 L}) ⪰ ε I ⊗ ρ°`, clamped to `[0, 1]`.
pub fn doeblin_epsilon(l: &Superoperator, t0: f64) -> Result<f64> {
    doeblin_epsilon_with(l, t0, &Tolerances::default())
}

pub fn doeblin_epsilon_with(l: &Superoperator, t0: f64, tol: &Tolerances) -> Result<f64> {
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(Error::Domain(format!("t0 must be positive, got {t0}")));
    }
    let rho = primitive_stationary_state(l, tol)?;
    let d = l.dim();
    let choi = l.exp(t0)?.choi();
    let inv_sqrt = linalg::hermitian_apply(rho.matrix(), |x| 1.0 / x.sqrt());
    let w = linalg::kron(&linalg::identity(d), &inv_sqrt);
    let conj = &w * choi * &w;
    let min = linalg::hermitian_eigenvalues(&conj)[0];
    Ok(min.clamp(0.0, 1.0))
}

/// Contraction rate `−ln(1−ε)/t0` certified at multiples of `t0`.
pub fn doeblin_gap(epsilon: f64, t0: f64) -> Result<f64> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::Domain(format!("epsilon must lie in (0, 1), got {epsilon}")));
    }
    if !(t0.is_finite() && t0 > 0.0) {
        return Err(Error::Domain(format!("t0 must be positive, got {t0}")));
    }
    Ok(-(1.0 - epsilon).ln() / t0)
}

/// `e^{tL}` applied to `rho`.
pub fn evolve_state(l: &Superoperator, rho: &DensityOperator, t: f64) -> Result<DensityOperator> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::Domain(format!("time must be non-negative, got {t}")));
    }
    if rho.dim() != l.dim() {
        return Err(Error::Dimension {
            expected: l.dim(),
            found: rho.dim(),
        });
    }
    let out = l.exp(t)?.apply(rho.matrix());
    DensityOperator::with_tolerance(linalg::hermitize(&out), 1e-9)
}

fn check_perturbation(l: &Superoperator, dl: &Superoperator, tol: &Tolerances) -> Result<()> {
    if dl.dim() != l.dim() {
        return Err(Error::Dimension {
            expected: l.dim(),
            found: dl.dim(),
        });
    }
    let defect = dl.trace_defect(0.0);
    if defect > tol.equality * 1.0_f64.max(dl.norm()) {
        return Err(Error::InvalidPerturbation(defect));
    }
    Ok(())
}

/// Traceless solution `δρ` of `L(δρ) = −δL(ρ°)`.
pub fn solve_poisson(l: &Superoperator, dl: &Superoperator) -> Result<CMatrix> {
    solve_poisson_with(l, dl, &Tolerances::default())
}

pub fn solve_poisson_with(
    l: &Superoperator,
    dl: &Superoperator,
    tol: &Tolerances,
) -> Result<CMatrix> {
    check_perturbation(l, dl, tol)?;
    let rho = primitive_stationary_state(l, tol)?;
    poisson_from_stationary(l, dl, &rho)
}

fn poisson_from_stationary(
    l: &Superoperator,
    dl: &Superoperator,
    rho: &DensityOperator,
) -> Result<CMatrix> {
    let d = l.dim();
    let (q, a) = restricted(l);
    let drive = dl.matrix() * linalg::vectorize(rho.matrix());
    let rhs = -(q.adjoint() * drive);
    let y = linalg::solve(&a, &rhs)
        .ok_or_else(|| Error::Numerical("restricted generator is singular".into()))?;
    Ok(linalg::hermitize(&linalg::devectorize(&(q * y), d)))
}

/// Stationary-state response against the nominal `1/g` and certified `t0/ε` bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    /// `‖δρ°‖₁`.
    pub lhs: f64,
    /// `‖δL(ρ°)‖₁`.
    pub drive_norm: f64,
    pub gap: f64,
    pub epsilon: f64,
    pub t0: f64,
    /// `(1/g) ‖δL(ρ°)‖₁`.
    pub rhs_nominal: f64,
    /// `(t0/ε) ‖δL(ρ°)‖₁`; infinite when `ε = 0`.
    pub rhs_certified: f64,
    pub nominal_satisfied: bool,
    pub certified_satisfied: bool,
    pub drho: CMatrix,
}

/// `t0` defaults to `1/g`.
pub fn sensitivity_report(
    l: &Superoperator,
    dl: &Superoperator,
    t0: Option<f64>,
) -> Result<SensitivityReport> {
    sensitivity_report_with(l, dl, t0, &Tolerances::default())
}

pub fn sensitivity_report_with(
    l: &Superoperator,
    dl: &Superoperator,
    t0: Option<f64>,
    tol: &Tolerances,
) -> Result<SensitivityReport> {
    check_perturbation(l, dl, tol)?;
    let rho = primitive_stationary_state(l, tol)?;
    let drho = poisson_from_stationary(l, dl, &rho)?;
    let gap = spectral_gap_with(l, tol)?;
    let t0 = t0.unwrap_or(1.0 / gap);
    let epsilon = doeblin_epsilon_with(l, t0, tol)?;
    let lhs = trace_norm(&drho)?;
    let drive_norm = trace_norm(&dl.apply(rho.matrix()))?;
    let rhs_nominal = drive_norm / gap;
    let rhs_certified = if epsilon > 0.0 {
        t0 / epsilon * drive_norm
    } else {
        f64::INFINITY
    };
    let holds = |rhs: f64| lhs <= rhs * (1.0 + 1e-9) + 1e-14;
    Ok(SensitivityReport {
        lhs,
        drive_norm,
        gap,
        epsilon,
        t0,
        rhs_nominal,
        rhs_certified,
        nominal_satisfied: holds(rhs_nominal),
        certified_satisfied: holds(rhs_certified),
        drho,
    })
}

/// Everything the Q-layer knows about one context.
#[derive(Debug, Clone, PartialEq)]
pub struct QContextReport {
    pub stationary: DensityOperator,
    pub gap: f64,
    pub doeblin_epsilon: f64,
    pub doeblin_time: f64,
    pub doeblin_rate: Option<f64>,
    pub primitive: bool,
    /// `t0/ε`, infinite when `ε = 0`.
    pub certified_sensitivity_factor: f64,
    pub stationary_residual: f64,
    pub spectrum: Vec<Complex64>,
}

/// Full analysis of a primitive generator; `t0` defaults to `1/g`.
pub fn analyze_context(l: &Superoperator, t0: Option<f64>, tol: &Tolerances) -> Result<QContextReport> {
    let stationary = primitive_stationary_state(l, tol)?;
    let gap = spectral_gap_with(l, tol)?;
    let doeblin_time = t0.unwrap_or(1.0 / gap);
    let eps = doeblin_epsilon_with(l, doeblin_time, tol)?;
    let stationary_residual = trace_norm(&l.apply(stationary.matrix()))?;
    Ok(QContextReport {
        stationary,
        gap,
        doeblin_epsilon: eps,
        doeblin_time,
        doeblin_rate: doeblin_gap(eps, doeblin_time).ok(),
        primitive: true,
        certified_sensitivity_factor: if eps > 0.0 {
            doeblin_time / eps
        } else {
            f64::INFINITY
        },
        stationary_residual,
        spectrum: generator_spectrum(l)?,
    })
}
