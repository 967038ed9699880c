//! Charges, self-preservation costs and the intrinsic metrics they induce.

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::numdiff;
use crate::operator::linalg::{self, CMatrix};
use crate::operator::{relative_entropy_with, DensityOperator, HermitianOperator, RMatrix, Tolerances};

pub const DEFAULT_HESSIAN_STEP: f64 = 1e-4;
/// Divergence Hessians are second differences of an `O(h²)` quantity; a
/// larger step keeps roundoff well below the Richardson truncation error.
pub const DEFAULT_DIVERGENCE_STEP: f64 = 1e-3;

/// Labeled family of mutually commuting Hermitian generators.
#[derive(Debug, Clone, PartialEq)]
pub struct CartanSet {
    labels: Vec<String>,
    generators: Vec<HermitianOperator>,
}

impl CartanSet {
    pub fn new(labels: Vec<String>, generators: Vec<HermitianOperator>) -> Result<Self> {
        Self::with_tolerance(labels, generators, Tolerances::default().equality)
    }

    pub fn with_tolerance(
        labels: Vec<String>,
        generators: Vec<HermitianOperator>,
        tol: f64,
    ) -> Result<Self> {
        if labels.len() != generators.len() {
            return Err(Error::Dimension {
                expected: generators.len(),
                found: labels.len(),
            });
        }
        let d = generators.first().map(|g| g.dim()).ok_or(Error::ZeroDimension)?;
        for g in &generators {
            if g.dim() != d {
                return Err(Error::Dimension {
                    expected: d,
                    found: g.dim(),
                });
            }
        }
        for (a, ga) in generators.iter().enumerate() {
            for gb in &generators[a + 1..] {
                let c = crate::operator::trace_norm(&linalg::commutator(ga.matrix(), gb.matrix()))?;
                if c > tol {
                    return Err(Error::NonCommuting(c));
                }
            }
        }
        Ok(Self { labels, generators })
    }

    /// Unlabeled convenience constructor; labels are `H1, H2, …`.
    pub fn from_matrices(matrices: Vec<CMatrix>) -> Result<Self> {
        let labels = (1..=matrices.len()).map(|i| format!("H{i}")).collect();
        let gens = matrices
            .into_iter()
            .map(HermitianOperator::new)
            .collect::<Result<Vec<_>>>()?;
        Self::new(labels, gens)
    }

    pub fn dim(&self) -> usize {
        self.generators[0].dim()
    }

    pub fn rank(&self) -> usize {
        self.generators.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn generators(&self) -> &[HermitianOperator] {
        &self.generators
    }

    pub fn matrices(&self) -> Vec<CMatrix> {
        self.generators.iter().map(|g| g.matrix().clone()).collect()
    }

    /// `max_a ‖H_a‖_∞`.
    pub fn lipschitz_constant(&self) -> f64 {
        self.generators
            .iter()
            .map(HermitianOperator::sup_norm)
            .fold(0.0, f64::max)
    }
}

/// Charge coordinates of a state at one context.
#[derive(Debug, Clone, PartialEq)]
pub struct ChargeVector {
    pub context: String,
    pub values: Vec<f64>,
}

impl ChargeVector {
    pub fn new(context: impl Into<String>, values: Vec<f64>) -> Self {
        Self {
            context: context.into(),
            values,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// `q_a = Tr(ρ H_a)`.
pub fn charges(rho: &DensityOperator, cartan: &CartanSet) -> Result<Vec<f64>> {
    if rho.dim() != cartan.dim() {
        return Err(Error::Dimension {
            expected: cartan.dim(),
            found: rho.dim(),
        });
    }
    Ok(cartan
        .generators
        .iter()
        .map(|h| rho.expectation(h.matrix()).re)
        .collect())
}

/// Charges of an arbitrary (e.g. traceless) operator.
pub fn operator_charges(x: &CMatrix, cartan: &CartanSet) -> Result<Vec<f64>> {
    if x.nrows() != cartan.dim() || x.ncols() != cartan.dim() {
        return Err(Error::Dimension {
            expected: cartan.dim(),
            found: x.nrows(),
        });
    }
    Ok(cartan
        .generators
        .iter()
        .map(|h| (x * h.matrix()).trace().re)
        .collect())
}

/// `½ (q − q̄)ᵀ K (q − q̄)` with a symmetric positive-definite stiffness.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticFunctional {
    stiffness: RMatrix,
    preferred: Vec<f64>,
}

impl QuadraticFunctional {
    pub fn new(stiffness: RMatrix, preferred: Vec<f64>) -> Result<Self> {
        let r = preferred.len();
        if stiffness.nrows() != r || stiffness.ncols() != r {
            return Err(Error::Dimension {
                expected: r,
                found: stiffness.nrows(),
            });
        }
        if stiffness.iter().chain(preferred.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Evaluation("stiffness or preferred charges not finite".into()));
        }
        let asym = (&stiffness - stiffness.transpose()).amax();
        if asym > 1e-10 {
            return Err(Error::Domain(format!("stiffness is not symmetric (defect {asym:e})")));
        }
        if r > 0 {
            let min = linalg::symmetric_eigenvalues(&stiffness)[0];
            if !(min > 0.0) {
                return Err(Error::Domain(format!(
                    "stiffness must be positive definite (minimum eigenvalue {min:e})"
                )));
            }
        }
        Ok(Self {
            stiffness,
            preferred,
        })
    }

    /// Scalar functional `½ k (q − q̄)²`.
    pub fn scalar(k: f64, preferred: f64) -> Result<Self> {
        Self::new(RMatrix::from_element(1, 1, k), vec![preferred])
    }

    pub fn rank(&self) -> usize {
        self.preferred.len()
    }

    pub fn stiffness(&self) -> &RMatrix {
        &self.stiffness
    }

    pub fn preferred(&self) -> &[f64] {
        &self.preferred
    }

    /// Internal term only.
    pub fn internal(&self, q: &[f64]) -> f64 {
        let dq: Vec<f64> = q.iter().zip(&self.preferred).map(|(a, b)| a - b).collect();
        let mut s = 0.0;
        for i in 0..dq.len() {
            for j in 0..dq.len() {
                s += dq[i] * self.stiffness[(i, j)] * dq[j];
            }
        }
        0.5 * s
    }

    /// `K (q − q̄)`.
    pub fn internal_gradient(&self, q: &[f64]) -> Vec<f64> {
        let r = self.rank();
        (0..r)
            .map(|i| {
                (0..r)
                    .map(|j| self.stiffness[(i, j)] * (q[j] - self.preferred[j]))
                    .sum()
            })
            .collect()
    }
}

/// Supported divergences for information-geometric functionals.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Divergence {
    RelativeEntropy,
}

impl Divergence {
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "relative_entropy" | "relative-entropy" | "kl" => Ok(Divergence::RelativeEntropy),
            other => Err(Error::UnsupportedDivergence(other.to_string())),
        }
    }
}

/// Quadratic cost plus neighbour mismatch `½ Σ w ‖q − q'‖²`.
pub fn quadratic_cost(
    q: &[f64],
    functional: &QuadraticFunctional,
    neighbors: &[(&[f64], f64)],
) -> Result<f64> {
    let r = functional.rank();
    if q.len() != r {
        return Err(Error::Dimension {
            expected: r,
            found: q.len(),
        });
    }
    let mut cost = functional.internal(q);
    for (qn, w) in neighbors {
        if qn.len() != r {
            return Err(Error::Dimension {
                expected: r,
                found: qn.len(),
            });
        }
        if !(*w >= 0.0) {
            return Err(Error::Domain(format!("neighbour weight must be non-negative, got {w}")));
        }
        let dist2: f64 = q.iter().zip(qn.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
        cost += 0.5 * w * dist2;
    }
    Ok(cost)
}

/// Symmetric real matrix produced by the metric constructions below.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricMatrix(pub RMatrix);

impl MetricMatrix {
    pub fn entries(&self) -> &RMatrix {
        &self.0
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::symmetric_eigenvalues(&self.0)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.0.nrows())
            .map(|i| self.0.row(i).iter().cloned().collect())
            .collect()
    }
}

fn symmetrize(m: RMatrix) -> MetricMatrix {
    MetricMatrix((&m + m.transpose()) * 0.5)
}

/// Central-difference Hessian of `cost` at `q_star`.
pub fn hessian_metric<F>(cost: &F, q_star: &[f64], h: f64) -> Result<MetricMatrix>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let wrapped = |x: &[f64]| Ok(cost(x));
    Ok(symmetrize(numdiff::hessian(&wrapped, q_star, h, Execution::default())?))
}

/// Symmetrized covariance `½ Tr(ρ{Hᵢ, Hⱼ}) − qᵢ qⱼ`.
pub fn covariance_metric(rho: &DensityOperator, cartan: &CartanSet) -> Result<MetricMatrix> {
    let q = charges(rho, cartan)?;
    let r = cartan.rank();
    let mut m = RMatrix::zeros(r, r);
    for i in 0..r {
        for j in i..r {
            let anti = linalg::anticommutator(
                cartan.generators[i].matrix(),
                cartan.generators[j].matrix(),
            );
            let v = 0.5 * rho.expectation(&anti).re - q[i] * q[j];
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(MetricMatrix(m))
}

fn divergence_objective<'a, F>(
    family: &'a F,
    anchor: &'a DensityOperator,
    faithfulness: f64,
) -> impl Fn(&[f64]) -> Result<f64> + Sync + 'a
where
    F: Fn(&[f64]) -> Result<DensityOperator> + Sync,
{
    move |theta: &[f64]| {
        let rho = family(theta)?;
        let min = rho.min_eigenvalue();
        if min <= faithfulness {
            return Err(Error::NotFaithful(min));
        }
        relative_entropy_with(&rho, anchor, faithfulness)
    }
}

/// Hessian of `θ ↦ D(ρ(θ) ‖ ρ(θ*))` at `θ*`.
pub fn fisher_from_divergence<F>(family: &F, theta_star: &[f64], h: f64) -> Result<MetricMatrix>
where
    F: Fn(&[f64]) -> Result<DensityOperator> + Sync,
{
    let faith = Tolerances::default().faithfulness;
    let anchor = family(theta_star)?;
    if anchor.min_eigenvalue() <= faith {
        return Err(Error::NotFaithful(anchor.min_eigenvalue()));
    }
    let objective = divergence_objective(family, &anchor, faith);
    Ok(symmetrize(numdiff::hessian(&objective, theta_star, h, Execution::default())?))
}

/// Gradient of the divergence functional at `θ*` (zero up to discretization).
pub fn divergence_gradient<F>(family: &F, theta_star: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<DensityOperator> + Sync,
{
    let faith = Tolerances::default().faithfulness;
    let anchor = family(theta_star)?;
    let objective = divergence_objective(family, &anchor, faith);
    numdiff::gradient(&objective, theta_star, h, Execution::default())
}

/// `gᵢⱼ = Σₓ p(x) ∂ᵢ ln p(x) ∂ⱼ ln p(x)` with central-difference score functions.
pub fn classical_fisher<F>(p_family: &F, theta_star: &[f64], h: f64) -> Result<MetricMatrix>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    let checked_log = |theta: &[f64]| -> Result<Vec<f64>> {
        let p = p_family(theta)?;
        let total: f64 = p.iter().sum();
        if !((total - 1.0).abs() <= 1e-10) {
            return Err(Error::Domain(format!("probabilities sum to {total}")));
        }
        p.iter()
            .enumerate()
            .map(|(index, &value)| {
                if value > 0.0 {
                    Ok(value.ln())
                } else {
                    Err(Error::Support { index, value })
                }
            })
            .collect()
    };
    let p = p_family(theta_star)?;
    checked_log(theta_star)?;
    let scores = numdiff::jacobian(&checked_log, theta_star, h, Execution::default())?;
    let k = theta_star.len();
    let mut g = RMatrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let v: f64 = p
                .iter()
                .enumerate()
                .map(|(x, px)| px * scores[i][x] * scores[j][x])
                .sum();
            g[(i, j)] = v;
            g[(j, i)] = v;
        }
    }
    Ok(MetricMatrix(g))
}

/// `½ Σ (Δq/Δτ)ᵀ g (Δq/Δτ) Δτ` over a path sampled uniformly on `τ ∈ [0, 1]`.
pub fn path_cost(path: &[Vec<f64>], metric: &MetricMatrix) -> Result<f64> {
    if path.len() < 2 {
        return Err(Error::Domain(format!("path needs at least 2 points, got {}", path.len())));
    }
    let r = metric.0.nrows();
    if let Some(bad) = path.iter().find(|p| p.len() != r) {
        return Err(Error::Dimension {
            expected: r,
            found: bad.len(),
        });
    }
    let dtau = 1.0 / (path.len() - 1) as f64;
    let mut total = 0.0;
    for w in path.windows(2) {
        let v: Vec<f64> = w[1].iter().zip(&w[0]).map(|(b, a)| (b - a) / dtau).collect();
        let mut quad = 0.0;
        for i in 0..r {
            for j in 0..r {
                quad += v[i] * metric.0[(i, j)] * v[j];
            }
        }
        total += 0.5 * quad * dtau;
    }
    Ok(total)
}

/// Gibbs family `h ↦ exp(−Σ hₐ Hₐ)/Z` built on a Cartan set (β absorbed into `h`).
#[derive(Debug, Clone)]
pub struct GibbsFamily {
    generators: Vec<CMatrix>,
}

impl GibbsFamily {
    pub fn new(cartan: &CartanSet) -> Self {
        Self {
            generators: cartan.matrices(),
        }
    }

    pub fn state(&self, fields: &[f64]) -> Result<DensityOperator> {
        if fields.len() != self.generators.len() {
            return Err(Error::Dimension {
                expected: self.generators.len(),
                found: fields.len(),
            });
        }
        crate::models::gibbs_state(fields, &self.generators)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::gell_mann;
    use approx::assert_abs_diff_eq;

    fn qutrit_cartan() -> CartanSet {
        CartanSet::new(
            vec!["q3".into(), "q8".into()],
            vec![
                HermitianOperator::new(gell_mann(3)).unwrap(),
                HermitianOperator::new(gell_mann(8)).unwrap(),
            ],
        )
        .unwrap()
    }

    #[test]
    fn non_commuting_cartan_rejected() {
        let err = CartanSet::from_matrices(vec![gell_mann(1), gell_mann(3)]);
        assert!(matches!(err, Err(Error::NonCommuting(_))));
    }

    #[test]
    fn charges_of_maximally_mixed_vanish() {
        let q = charges(&DensityOperator::maximally_mixed(3).unwrap(), &qutrit_cartan()).unwrap();
        assert!(q.iter().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn charges_of_basis_state() {
        let rho = DensityOperator::from_probabilities(&[1.0, 0.0, 0.0]).unwrap();
        let q = charges(&rho, &qutrit_cartan()).unwrap();
        assert_abs_diff_eq!(q[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 1.0 / 3f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn charges_dimension_mismatch() {
        let rho = DensityOperator::maximally_mixed(2).unwrap();
        assert!(matches!(charges(&rho, &qutrit_cartan()), Err(Error::Dimension { .. })));
    }

    #[test]
    fn quadratic_cost_examples() {
        let f = QuadraticFunctional::scalar(1.0, 0.0).unwrap();
        assert_eq!(quadratic_cost(&[0.0], &f, &[]).unwrap(), 0.0);
        let neighbor = [0.0];
        assert_abs_diff_eq!(
            quadratic_cost(&[2.0], &f, &[(&neighbor, 1.0)]).unwrap(),
            4.0,
            epsilon = 1e-15
        );
        assert!(quadratic_cost(&[1.0, 2.0], &f, &[]).is_err());
    }

    #[test]
    fn stiffness_must_be_positive_definite() {
        let k = RMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(matches!(QuadraticFunctional::new(k, vec![0.0, 0.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn hessian_recovers_diagonal_stiffness() {
        let f = QuadraticFunctional::new(RMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![2.0, 3.0])), vec![0.1, -0.4])
            .unwrap();
        let g = hessian_metric(&|q: &[f64]| f.internal(q), &[0.3, 0.2], DEFAULT_HESSIAN_STEP).unwrap();
        assert_abs_diff_eq!(g.0[(0, 0)], 2.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.0[(1, 1)], 3.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.0[(0, 1)], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn hessian_of_chain_functional_with_two_neighbors() {
        let f = QuadraticFunctional::scalar(1.0, 0.3).unwrap();
        let (left, right) = ([0.1], [0.7]);
        let cost = |q: &[f64]| quadratic_cost(q, &f, &[(&left, 0.5), (&right, 0.5)]).unwrap();
        let g = hessian_metric(&cost, &[0.3], DEFAULT_HESSIAN_STEP).unwrap();
        assert_abs_diff_eq!(g.0[(0, 0)], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn hessian_reports_non_finite_cost() {
        let err = hessian_metric(&|q: &[f64]| q[0].ln(), &[0.0], 1e-4);
        assert!(matches!(err, Err(Error::Evaluation(_))));
    }

    #[test]
    fn covariance_at_maximally_mixed_qutrit() {
        let g = covariance_metric(&DensityOperator::maximally_mixed(3).unwrap(), &qutrit_cartan()).unwrap();
        assert_abs_diff_eq!(g.0[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.0[(1, 1)], 2.0 / 3.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g.0[(0, 1)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn covariance_of_sharp_state_is_zero() {
        let rho = DensityOperator::from_probabilities(&[1.0, 0.0, 0.0]).unwrap();
        let g = covariance_metric(&rho, &qutrit_cartan()).unwrap();
        assert_abs_diff_eq!(g.0[(0, 0)], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn gibbs_fisher_matches_covariance() {
        let cartan = qutrit_cartan();
        let family = GibbsFamily::new(&cartan);
        let g = fisher_from_divergence(&|h: &[f64]| family.state(h), &[0.0, 0.0], DEFAULT_DIVERGENCE_STEP).unwrap();
        assert_abs_diff_eq!(g.0[(0, 0)], 2.0 / 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(g.0[(1, 1)], 2.0 / 3.0, epsilon = 1e-4);
        assert_abs_diff_eq!(g.0[(0, 1)], 0.0, epsilon = 1e-4);
        let grad = divergence_gradient(&|h: &[f64]| family.state(h), &[0.0, 0.0], DEFAULT_DIVERGENCE_STEP).unwrap();
        assert!(grad.iter().all(|x| x.abs() <= 1e-6));
    }

    #[test]
    fn divergence_rejects_pure_stencil_states() {
        let family = |t: &[f64]| DensityOperator::from_probabilities(&[1.0 - t[0].abs(), t[0].abs()]);
        assert!(matches!(
            fisher_from_divergence(&family, &[0.0], 1e-3),
            Err(Error::NotFaithful(_))
        ));
    }

    #[test]
    fn unsupported_divergence_name() {
        assert!(matches!(
            Divergence::from_name("bures"),
            Err(Error::UnsupportedDivergence(_))
        ));
        assert_eq!(Divergence::from_name("relative_entropy").unwrap(), Divergence::RelativeEntropy);
    }

    #[test]
    fn bernoulli_fisher_at_half() {
        let fam = |t: &[f64]| Ok(vec![t[0], 1.0 - t[0]]);
        let g = classical_fisher(&fam, &[0.5], 1e-3).unwrap();
        assert_abs_diff_eq!(g.0[(0, 0)], 4.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_family_has_zero_fisher() {
        let fam = |_: &[f64]| Ok(vec![0.25; 4]);
        let g = classical_fisher(&fam, &[0.1, 0.2], 1e-3).unwrap();
        assert_eq!(g.0.amax(), 0.0);
    }

    #[test]
    fn product_family_is_block_diagonal() {
        let fam = |t: &[f64]| {
            let (a, b) = (t[0], t[1]);
            Ok(vec![a * b, a * (1.0 - b), (1.0 - a) * b, (1.0 - a) * (1.0 - b)])
        };
        let g = classical_fisher(&fam, &[0.3, 0.6], 1e-3).unwrap();
        assert_abs_diff_eq!(g.0[(0, 0)], 1.0 / (0.3 * 0.7), epsilon = 1e-6);
        assert_abs_diff_eq!(g.0[(1, 1)], 1.0 / (0.6 * 0.4), epsilon = 1e-6);
        assert_abs_diff_eq!(g.0[(0, 1)], 0.0, epsilon = 1e-8);
    }

    #[test]
    fn classical_fisher_support_error() {
        let fam = |t: &[f64]| Ok(vec![t[0], 1.0 - t[0]]);
        assert!(matches!(
            classical_fisher(&fam, &[0.0], 1e-3),
            Err(Error::Support { .. })
        ));
    }

    #[test]
    fn path_cost_examples() {
        let g = MetricMatrix(RMatrix::identity(1, 1));
        let constant = vec![vec![0.4]; 5];
        assert_eq!(path_cost(&constant, &g).unwrap(), 0.0);
        for m in [2usize, 3, 17] {
            let line: Vec<Vec<f64>> = (0..m).map(|i| vec![3.0 * i as f64 / (m - 1) as f64]).collect();
            assert_abs_diff_eq!(path_cost(&line, &g).unwrap(), 4.5, epsilon = 1e-12);
        }
        assert!(matches!(path_cost(&[vec![0.0]], &g), Err(Error::Domain(_))));
    }
}
