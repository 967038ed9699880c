//! Sensitivity triples, charge-space transport along edges and loop holonomy.
//!
//! Transport along an edge is the Heisenberg action of the edge channel,
//! compressed onto the span of the Cartan generators and expressed in that
//! (Gram-normalized) basis, so it maps charge vectors to charge vectors. A loop
//! whose channels leave the span picks up a non-trivial holonomy.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::operator::linalg::{self, CMatrix};
use crate::operator::{trace_norm, RMatrix, Superoperator, SuperoperatorKind, Tolerances};
use crate::qlayer::{solve_poisson_with, stationary_state_with, unitary_channel};
use crate::slayer::CartanSet;

/// Linear response of a context's generator to openness coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseMap {
    context: String,
    directions: Vec<(String, Superoperator)>,
}

impl ResponseMap {
    pub fn new(context: impl Into<String>, directions: Vec<(String, Superoperator)>) -> Result<Self> {
        let d = directions.first().map(|(_, dl)| dl.dim());
        for (label, dl) in &directions {
            if Some(dl.dim()) != d {
                return Err(Error::Dimension {
                    expected: d.unwrap_or(0),
                    found: dl.dim(),
                });
            }
            let defect = dl.trace_defect(0.0);
            if defect > Tolerances::default().equality * 1.0_f64.max(dl.norm()) {
                return Err(Error::InvalidGenerator(format!(
                    "direction `{label}` does not annihilate the trace (defect {defect:e})"
                )));
            }
        }
        Ok(Self {
            context: context.into(),
            directions,
        })
    }

    pub fn context(&self) -> &str {
        &self.context
    }

    pub fn directions(&self) -> &[(String, Superoperator)] {
        &self.directions
    }

    /// `Σᵢ dNᵢ · dLᵢ`.
    pub fn apply(&self, dim: usize, dn: &[f64]) -> Result<Superoperator> {
        if dn.len() != self.directions.len() {
            return Err(Error::Dimension {
                expected: self.directions.len(),
                found: dn.len(),
            });
        }
        if dn.iter().any(|x| !x.is_finite()) {
            return Err(Error::Domain("openness coefficients must be finite".into()));
        }
        let mut out = Superoperator::zero(dim, SuperoperatorKind::Plain);
        for ((_, dl), c) in self.directions.iter().zip(dn) {
            out = out.add_scaled(dl, *c)?;
        }
        Ok(out)
    }
}

/// `(dN, dL, δρ°)` with `L(δρ°) = −dL(ρ°)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityTriple {
    pub dn: Vec<f64>,
    pub dl: Superoperator,
    pub drho: CMatrix,
    /// `‖L(δρ°) + dL(ρ°)‖₁`.
    pub poisson_residual: f64,
}

pub fn make_sensitivity_triple(
    l: &Superoperator,
    xi: &ResponseMap,
    dn: &[f64],
) -> Result<SensitivityTriple> {
    let tol = Tolerances::default();
    let dl = xi.apply(l.dim(), dn)?;
    let drho = solve_poisson_with(l, &dl, &tol)?;
    let rho = stationary_state_with(l, &tol)?;
    let poisson_residual = trace_norm(&(l.apply(&drho) + dl.apply(rho.matrix())))?;
    Ok(SensitivityTriple {
        dn: dn.to_vec(),
        dl,
        drho,
        poisson_residual,
    })
}

/// Linear map on charge vectors attached to a directed edge.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportMap {
    pub source: String,
    pub target: String,
    pub matrix: RMatrix,
}

impl TransportMap {
    pub fn new(source: impl Into<String>, target: impl Into<String>, matrix: RMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(Error::NotSquare {
                rows: matrix.nrows(),
                cols: matrix.ncols(),
            });
        }
        if matrix.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("transport matrix has non-finite entries".into()));
        }
        Ok(Self {
            source: source.into(),
            target: target.into(),
            matrix,
        })
    }

    pub fn rank(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn apply(&self, q: &[f64]) -> Vec<f64> {
        (&self.matrix * nalgebra::DVector::from_column_slice(q))
            .iter()
            .copied()
            .collect()
    }
}

/// Gram matrix `⟨Hₐ, H_b⟩_HS`.
fn gram(cartan: &CartanSet) -> RMatrix {
    let m = cartan.matrices();
    RMatrix::from_fn(m.len(), m.len(), |a, b| linalg::hs_inner(&m[a], &m[b]).re)
}

/// Compression of the channel's Heisenberg action onto the Cartan span.
///
/// Row `a` of the result gives the transported charge `q'ₐ` in terms of the
/// incoming charges. The identity channel yields exactly the identity.
pub fn charge_transport(
    source: &str,
    target: &str,
    channel: &Superoperator,
    cartan: &CartanSet,
) -> Result<TransportMap> {
    if channel.dim() != cartan.dim() {
        return Err(Error::Dimension {
            expected: cartan.dim(),
            found: channel.dim(),
        });
    }
    if channel.kind() != SuperoperatorKind::Channel {
        return Err(Error::InvalidChannel(
            "edge transport needs a channel, not a generator or plain map".into(),
        ));
    }
    let r = cartan.rank();
    let g = gram(cartan);
    let eig = linalg::symmetric_eigenvalues(&g);
    if !(eig[0] > 1e-12 * eig[r - 1].max(1.0)) {
        return Err(Error::DegenerateCartan);
    }
    let n = channel.dim() * channel.dim();
    if channel.matrix() == &linalg::identity(n) {
        return TransportMap::new(source, target, RMatrix::identity(r, r));
    }
    let heisenberg = channel.adjoint();
    let m = cartan.matrices();
    let images: Vec<CMatrix> = m.iter().map(|h| heisenberg.apply(h)).collect();
    let b = RMatrix::from_fn(r, r, |a, bb| linalg::hs_inner(&m[a], &images[bb]).re);
    let coeffs = g.lu().solve(&b).ok_or(Error::DegenerateCartan)?;
    TransportMap::new(source, target, coeffs.transpose())
}

/// `Γ_{k−1} ⋯ Γ_0 − 1` on charge space at the base context.
pub fn loop_holonomy(rank: usize, transports: &[TransportMap]) -> Result<RMatrix> {
    let mut product = RMatrix::identity(rank, rank);
    for (i, t) in transports.iter().enumerate() {
        if t.rank() != rank {
            return Err(Error::Dimension {
                expected: rank,
                found: t.rank(),
            });
        }
        if i > 0 && transports[i - 1].target != t.source {
            return Err(Error::Loop(format!(
                "edge {i} starts at `{}` but the previous edge ends at `{}`",
                t.source,
                transports[i - 1].target
            )));
        }
        product = &t.matrix * product;
    }
    if let (Some(first), Some(last)) = (transports.first(), transports.last()) {
        if first.source != last.target {
            return Err(Error::Loop(format!(
                "path from `{}` to `{}` does not close",
                first.source, last.target
            )));
        }
    }
    Ok(product - RMatrix::identity(rank, rank))
}

#[derive(Debug, Clone, PartialEq)]
pub struct HolonomyReport {
    /// Directed edges of the loop (at the smallest positive θ).
    pub loop_edges: Vec<(String, String)>,
    /// Holonomy at the smallest positive θ.
    pub deviation_matrix: RMatrix,
    /// `(θ, ‖𝓡‖_F)` in input order, including any θ = 0 sanity points.
    pub theta_sweep: Vec<(f64, f64)>,
    /// Least-squares slope of `log ‖𝓡‖` against `log θ`; `None` for a flat loop.
    pub fitted_exponent: Option<f64>,
    /// `𝓡(θ_min) / θ_min²`.
    pub fitted_k: RMatrix,
    pub theta_min: f64,
}

/// Deviations below this are treated as flat.
pub const FLAT_THRESHOLD: f64 = 1e-14;

pub fn holonomy_fit<F>(rank: usize, builder: &F, thetas: &[f64]) -> Result<HolonomyReport>
where
    F: Fn(f64) -> Result<Vec<TransportMap>> + Sync,
{
    holonomy_fit_with(rank, builder, thetas, Execution::default())
}

/// Evaluates the loop at every θ (θ = 0 entries are sanity points excluded from
/// the fit) and fits the power law on the positive ones.
pub fn holonomy_fit_with<F>(
    rank: usize,
    builder: &F,
    thetas: &[f64],
    exec: Execution,
) -> Result<HolonomyReport>
where
    F: Fn(f64) -> Result<Vec<TransportMap>> + Sync,
{
    if let Some(bad) = thetas.iter().find(|t| !(t.is_finite() && **t >= 0.0 && **t < 0.5)) {
        return Err(Error::Domain(format!("θ must lie in [0, 0.5), got {bad}")));
    }
    let positive = thetas.iter().filter(|t| **t > 0.0).count();
    if positive < 3 {
        return Err(Error::Domain(format!(
            "holonomy fit needs at least 3 positive θ values, got {positive}"
        )));
    }
    let evaluated = map_slice(thetas, exec, |&theta| {
        let loop_ = builder(theta)?;
        let dev = loop_holonomy(rank, &loop_)?;
        Ok::<_, Error>((loop_, dev))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let theta_sweep: Vec<(f64, f64)> = thetas
        .iter()
        .zip(&evaluated)
        .map(|(t, (_, dev))| (*t, dev.norm()))
        .collect();
    let (min_idx, theta_min) = thetas
        .iter()
        .copied()
        .enumerate()
        .filter(|(_, t)| *t > 0.0)
        .fold((0, f64::INFINITY), |acc, (i, t)| if t < acc.1 { (i, t) } else { acc });
    let (loop_, deviation_matrix) = evaluated[min_idx].clone();
    let points: Vec<(f64, f64)> = theta_sweep
        .iter()
        .filter(|(t, n)| *t > 0.0 && *n >= FLAT_THRESHOLD)
        .map(|(t, n)| (t.ln(), n.ln()))
        .collect();
    let fitted_exponent = if points.len() >= 2 {
        let m = points.len() as f64;
        let mx = points.iter().map(|p| p.0).sum::<f64>() / m;
        let my = points.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        Some(sxy / sxx)
    } else {
        None
    };
    Ok(HolonomyReport {
        loop_edges: loop_
            .iter()
            .map(|t| (t.source.clone(), t.target.clone()))
            .collect(),
        fitted_k: &deviation_matrix / (theta_min * theta_min),
        deviation_matrix,
        theta_sweep,
        fitted_exponent,
        theta_min,
    })
}

/// Conjugation channel `ρ ↦ exp(iθX) ρ exp(−iθX)` for Hermitian `X`.
pub fn rotation_channel(generator: &CMatrix, theta: f64) -> Result<Superoperator> {
    let u = linalg::matrix_exponential(&(generator * Complex64::new(0.0, 1.0)), theta)?;
    unitary_channel(&u)
}

/// `(1 − θ) · id + θ · Ad_U` with `U` exchanging basis states `a`, `b`.
pub fn partial_swap_channel(d: usize, a: usize, b: usize, theta: f64) -> Result<Superoperator> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::Domain(format!("partial swap needs θ ∈ [0, 1], got {theta}")));
    }
    let swap = unitary_channel(&crate::models::swap_unitary(d, a, b))?;
    let mixed = Superoperator::identity(d).scaled(1.0 - theta).add_scaled(&swap, theta)?;
    Superoperator::new(d, mixed.matrix().clone(), SuperoperatorKind::Channel)
}

/// Cartan set `(λ₃, λ₈)` of the qutrit.
pub fn qutrit_cartan() -> Result<CartanSet> {
    use crate::models::gell_mann;
    CartanSet::new(
        vec!["lambda3".into(), "lambda8".into()],
        vec![
            crate::operator::HermitianOperator::new(gell_mann(3))?,
            crate::operator::HermitianOperator::new(gell_mann(8))?,
        ],
    )
}

/// Two-edge qutrit loop `C1 → C2 → C1`: conjugation by `exp(iθλ₁)`, then by `exp(−iθλ₁)`.
pub fn qutrit_loop(theta: f64) -> Result<Vec<TransportMap>> {
    let cartan = qutrit_cartan()?;
    let l1 = crate::models::gell_mann(1);
    let forward = rotation_channel(&l1, theta)?;
    let backward = rotation_channel(&l1, -theta)?;
    Ok(vec![
        charge_transport("C1", "C2", &forward, &cartan)?,
        charge_transport("C2", "C1", &backward, &cartan)?,
    ])
}

/// Round trip through the convex partial swap and back.
pub fn partial_swap_loop(theta: f64) -> Result<Vec<TransportMap>> {
    let cartan = qutrit_cartan()?;
    let channel = partial_swap_channel(3, 0, 1, theta)?;
    Ok(vec![
        charge_transport("C1", "C2", &channel, &cartan)?,
        charge_transport("C2", "C1", &channel, &cartan)?,
    ])
}
