use nqs_core::operator::linalg::{self, CMatrix};
use nqs_core::operator::{
    matrix_exponential, random_complex_matrix, random_density, relative_entropy, trace_norm,
    DensityOperator,
};
use nqs_core::qlayer::{build_superoperator, kraus_channel};
use nqs_core::models::random_gkls;
use num_complex::Complex64;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rmat(d: usize, seed: u64) -> CMatrix {
    random_complex_matrix(d, d, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// `Σ √λ(A†A)`: singular values from the Hermitian eigenproblem instead of an SVD.
fn trace_norm_oracle(a: &CMatrix) -> f64 {
    let gram = a.adjoint() * a;
    linalg::hermitian_eigenvalues(&gram)
        .into_iter()
        .map(|x| x.max(0.0).sqrt())
        .sum()
}

/// Truncated Taylor series with scaling and squaring, computed independently of the Padé code.
fn expm_taylor(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as u32 } else { 0 };
    let scaled = a / Complex64::new(2f64.powi(squarings as i32), 0.0);
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
    }
    sum
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_norm_is_a_norm(d in 1usize..=5, seed in any::<u64>(), c_re in -3.0..3.0f64, c_im in -3.0..3.0f64) {
        let a = rmat(d, seed);
        let b = rmat(d, seed.wrapping_add(1));
        let na = trace_norm(&a).unwrap();
        let nb = trace_norm(&b).unwrap();
        prop_assert!(trace_norm(&(&a + &b)).unwrap() <= na + nb + 1e-10);
        let c = Complex64::new(c_re, c_im);
        let scaled = trace_norm(&(&a * c)).unwrap();
        prop_assert!((scaled - c.norm() * na).abs() <= 1e-10 * (1.0 + na * c.norm()));
        prop_assert!(na >= 0.0);
    }

    #[test]
    fn trace_norm_matches_singular_value_oracle(d in 1usize..=5, seed in any::<u64>()) {
        let a = rmat(d, seed);
        let ours = trace_norm(&a).unwrap();
        prop_assert!((ours - trace_norm_oracle(&a)).abs() <= 1e-9 * (1.0 + ours));
    }

    #[test]
    fn expm_matches_taylor_oracle(d in 1usize..=4, seed in any::<u64>(), t in 0.0..3.0f64) {
        let a = rmat(d, seed);
        let ours = matrix_exponential(&a, t).unwrap();
        let oracle = expm_taylor(&(&a * Complex64::new(t, 0.0)));
        prop_assert!((&ours - &oracle).norm() <= 1e-10 * (1.0 + oracle.norm()));
    }

    #[test]
    fn expm_semigroup(d in 1usize..=4, seed in any::<u64>(), s in 0.0..2.0f64, t in 0.0..2.0f64) {
        let a = rmat(d, seed);
        let lhs = matrix_exponential(&a, s + t).unwrap();
        let rhs = matrix_exponential(&a, s).unwrap() * matrix_exponential(&a, t).unwrap();
        prop_assert!((&lhs - &rhs).norm() <= 1e-10 * (1.0 + lhs.norm()));
    }

    #[test]
    fn gkls_flow_preserves_states(d in 2usize..=4, seed in any::<u64>(), t in 0.0..5.0f64) {
        let l = build_superoperator(&random_gkls(d, seed).unwrap()).unwrap();
        let rho = random_density(d, seed ^ 0xff).unwrap();
        let out = l.exp(t).unwrap().apply(rho.matrix());
        prop_assert!((linalg::trace(&out).re - 1.0).abs() <= 1e-9);
        prop_assert!(linalg::hermiticity_defect(&out) <= 1e-9);
        let min = linalg::hermitian_eigenvalues(&linalg::hermitize(&out))[0];
        prop_assert!(min >= -1e-9);
    }

    #[test]
    fn vectorization_round_trip(d in 1usize..=6, seed in any::<u64>()) {
        let a = rmat(d, seed);
        prop_assert_eq!(linalg::devectorize(&linalg::vectorize(&a), d), a);
    }

    #[test]
    fn vectorization_convention(d in 1usize..=4, seed in any::<u64>()) {
        // vec(A X B) = (Bᵀ ⊗ A) vec(X)
        let (a, x, b) = (rmat(d, seed), rmat(d, seed ^ 1), rmat(d, seed ^ 2));
        let lhs = linalg::vectorize(&(&a * &x * &b));
        let rhs = linalg::kron(&b.transpose(), &a) * linalg::vectorize(&x);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * (1.0 + a.norm() * x.norm() * b.norm()));
    }

    #[test]
    fn kraus_channels_have_psd_choi(d in 2usize..=3, seed in any::<u64>()) {
        // Kraus set from an isometry: stack two random blocks and orthonormalize
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_complex_matrix(2 * d, d, &mut rng);
        let q = g.qr().q();
        let k1 = q.rows(0, d).into_owned();
        let k2 = q.rows(d, d).into_owned();
        let ch = kraus_channel(d, &[k1, k2]).unwrap();
        let choi = ch.choi();
        prop_assert!(linalg::hermitian_eigenvalues(&linalg::hermitize(&choi))[0] >= -1e-10);
        prop_assert!(ch.trace_defect(1.0) <= 1e-10);
    }
}

#[test]
fn relative_entropy_is_nonnegative_on_seeded_pairs() {
    let mut worst = f64::INFINITY;
    for k in 0..200u64 {
        let d = 2 + (k % 3) as usize;
        let rho = random_density(d, 2 * k).unwrap();
        let sigma = random_density(d, 2 * k + 1).unwrap();
        worst = worst.min(relative_entropy(&rho, &sigma).unwrap());
    }
    assert!(worst >= -1e-12, "min divergence {worst}");
}

#[test]
fn relative_entropy_classical_oracle() {
    // diagonal states reduce to the Kullback–Leibler divergence
    let p: [f64; 3] = [0.2, 0.5, 0.3];
    let q: [f64; 3] = [0.4, 0.4, 0.2];
    let kl: f64 = p.iter().zip(&q).map(|(a, b)| a * (a / b).ln()).sum();
    let ours = relative_entropy(
        &DensityOperator::from_probabilities(&p).unwrap(),
        &DensityOperator::from_probabilities(&q).unwrap(),
    )
    .unwrap();
    assert!((ours - kl).abs() < 1e-14);
}
