use crate::error::{Error, Result};
use crate::operator::{linalg, DensityOperator, Tolerances};

/// Quantum relative entropy `Tr ρ (ln ρ − ln σ)` in nats.
pub fn relative_entropy(rho: &DensityOperator, sigma: &DensityOperator) -> Result<f64> {
    relative_entropy_with(rho, sigma, Tolerances::default().faithfulness)
}

/// As [`relative_entropy`], with an explicit faithfulness threshold for `sigma`.
pub fn relative_entropy_with(
    rho: &DensityOperator,
    sigma: &DensityOperator,
    faithfulness: f64,
) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension {
            expected: rho.dim(),
            found: sigma.dim(),
        });
    }
    let (sigma_vals, sigma_vecs) = linalg::hermitian_eigen(sigma.matrix());
    if sigma_vals[0] <= faithfulness {
        return Err(Error::NotFaithful(sigma_vals[0]));
    }
    let (rho_vals, rho_vecs) = linalg::hermitian_eigen(rho.matrix());

    // 0·ln 0 = 0 for vanishing (or roundoff-negative) eigenvalues of ρ.
    let neg_entropy: f64 = rho_vals
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum();

    // Tr ρ ln σ = Σᵢⱼ pᵢ |⟨rᵢ|sⱼ⟩|² ln sⱼ
    let overlap = rho_vecs.adjoint() * &sigma_vecs;
    let mut cross = 0.0;
    for (i, &p) in rho_vals.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        for (j, &s) in sigma_vals.iter().enumerate() {
            cross += p * overlap[(i, j)].norm_sqr() * s.ln();
        }
    }
    Ok(neg_entropy - cross)
}
