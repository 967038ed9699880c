use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::operator::{CMatrix, DensityOperator};

const REGULARIZATION: f64 = 1e-6;

/// Complex Gaussian matrix with `E|gᵢⱼ|² = 1`.
pub fn random_complex_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    CMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(s * re, s * im)
    })
}

/// `(G + G†)/2` for a complex Gaussian `G`.
pub fn random_hermitian<R: Rng + ?Sized>(d: usize, rng: &mut R) -> CMatrix {
    let g = random_complex_matrix(d, d, rng);
    (&g + g.adjoint()).scale(0.5)
}

/// Full-rank state `(G G† + δ I) / Tr(…)`, deterministic in `(dim, seed)`.
pub fn random_density(dim: usize, seed: u64) -> Result<DensityOperator> {
    if dim == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_complex_matrix(dim, dim, &mut rng);
    let m = &g * g.adjoint() + CMatrix::identity(dim, dim) * Complex64::new(REGULARIZATION, 0.0);
    let tr = m.trace().re;
    DensityOperator::new(m * Complex64::new(1.0 / tr, 0.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let a = random_density(2, 42).unwrap();
        let b = random_density(2, 42).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn full_rank_and_normalized() {
        let rho = random_density(3, 7).unwrap();
        assert!(rho.eigenvalues().iter().all(|&x| x >= 1e-7));
        assert!((rho.matrix().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeds_differ() {
        let a = random_density(4, 1).unwrap();
        let b = random_density(4, 2).unwrap();
        assert!(a.trace_distance(&b).unwrap() > 0.0);
    }

    #[test]
    fn zero_dimension_is_rejected() {
        assert_eq!(random_density(0, 1), Err(Error::ZeroDimension));
    }
}
