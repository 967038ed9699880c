//! Standard operators and generator families used by demos, tests and sweeps.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::operator::linalg::{self, CMatrix};
use crate::operator::{
    random_complex_matrix, random_hermitian, DensityOperator, HermitianOperator, Superoperator,
    Tolerances,
};
use crate::qlayer::{build_superoperator, primitivity_report_with, GklsGenerator};

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

pub fn pauli_x() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn pauli_y() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn pauli_z() -> CMatrix {
    CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

/// Gell-Mann matrix `λₖ`, `k ∈ 1..=8`.
pub fn gell_mann(k: usize) -> CMatrix {
    let mut m = CMatrix::zeros(3, 3);
    let s3 = 1.0 / 3f64.sqrt();
    match k {
        1 => {
            m[(0, 1)] = c(1., 0.);
            m[(1, 0)] = c(1., 0.);
        }
        2 => {
            m[(0, 1)] = c(0., -1.);
            m[(1, 0)] = c(0., 1.);
        }
        3 => {
            m[(0, 0)] = c(1., 0.);
            m[(1, 1)] = c(-1., 0.);
        }
        4 => {
            m[(0, 2)] = c(1., 0.);
            m[(2, 0)] = c(1., 0.);
        }
        5 => {
            m[(0, 2)] = c(0., -1.);
            m[(2, 0)] = c(0., 1.);
        }
        6 => {
            m[(1, 2)] = c(1., 0.);
            m[(2, 1)] = c(1., 0.);
        }
        7 => {
            m[(1, 2)] = c(0., -1.);
            m[(2, 1)] = c(0., 1.);
        }
        8 => {
            m[(0, 0)] = c(s3, 0.);
            m[(1, 1)] = c(s3, 0.);
            m[(2, 2)] = c(-2.0 * s3, 0.);
        }
        _ => panic!("Gell-Mann index must be in 1..=8, got {k}"),
    }
    m
}

/// Permutation matrix exchanging basis states `a` and `b`.
pub fn swap_unitary(d: usize, a: usize, b: usize) -> CMatrix {
    let mut m = linalg::identity(d);
    m[(a, a)] = c(0., 0.);
    m[(b, b)] = c(0., 0.);
    m[(a, b)] = c(1., 0.);
    m[(b, a)] = c(1., 0.);
    m
}

/// `ρ ↦ κ (σ Tr ρ − ρ)`.
pub fn reset_generator(rate: f64, target: &DensityOperator) -> Result<Superoperator> {
    build_superoperator(&GklsGenerator::Reset {
        rate,
        target: target.clone(),
    })
}

/// Relaxation towards `I/d` at the given rate.
pub fn depolarizing(d: usize, rate: f64) -> Result<Superoperator> {
    reset_generator(rate, &DensityOperator::maximally_mixed(d)?)
}

/// Qubit decay `|1⟩ → |0⟩` with jump `√γ |0⟩⟨1|`.
pub fn amplitude_damping(gamma: f64) -> Result<Superoperator> {
    let mut jump = CMatrix::zeros(2, 2);
    jump[(0, 1)] = c(gamma.sqrt(), 0.);
    build_superoperator(&GklsGenerator::HamiltonianLindblad {
        hamiltonian: HermitianOperator::new(CMatrix::zeros(2, 2))?,
        jumps: vec![jump],
    })
}

/// Thermal qubit decay: jumps `√(γ(1−p)) |0⟩⟨1|` and `√(γp) |1⟩⟨0|`.
/// Stationary state `diag(1−p, p)`; populations relax at `γ`, coherences at `γ/2`.
pub fn generalized_amplitude_damping(gamma: f64, p: f64) -> Result<Superoperator> {
    let mut down = CMatrix::zeros(2, 2);
    down[(0, 1)] = c((gamma * (1.0 - p)).sqrt(), 0.);
    let mut up = CMatrix::zeros(2, 2);
    up[(1, 0)] = c((gamma * p).sqrt(), 0.);
    build_superoperator(&GklsGenerator::HamiltonianLindblad {
        hamiltonian: HermitianOperator::new(CMatrix::zeros(2, 2))?,
        jumps: vec![down, up],
    })
}

/// Pure dephasing with jump `√γ σz`.
pub fn dephasing(gamma: f64) -> Result<Superoperator> {
    build_superoperator(&GklsGenerator::HamiltonianLindblad {
        hamiltonian: HermitianOperator::new(CMatrix::zeros(2, 2))?,
        jumps: vec![pauli_z() * c(gamma.sqrt(), 0.)],
    })
}

/// Random Hamiltonian plus two random jumps; deterministic in `(d, seed)`.
pub fn random_gkls(d: usize, seed: u64) -> Result<GklsGenerator> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = random_hermitian(d, &mut rng);
    let scale = c(1.0 / (d as f64).sqrt(), 0.);
    let jumps = (0..2)
        .map(|_| random_complex_matrix(d, d, &mut rng) * scale)
        .collect();
    Ok(GklsGenerator::HamiltonianLindblad {
        hamiltonian: HermitianOperator::new(h)?,
        jumps,
    })
}

/// A primitive random generator; redraws (deterministically) in the rare non-primitive case.
pub fn random_primitive_generator(d: usize, seed: u64) -> Result<Superoperator> {
    let tol = Tolerances::default();
    let mut attempt = 0u64;
    loop {
        let l = build_superoperator(&random_gkls(d, seed.wrapping_mul(7919).wrapping_add(attempt))?)?;
        if primitivity_report_with(&l, &tol).primitive {
            return Ok(l);
        }
        attempt += 1;
    }
}

/// Gibbs state `exp(−Σₐ hₐ Hₐ) / Z`.
pub fn gibbs_state(fields: &[f64], generators: &[CMatrix]) -> Result<DensityOperator> {
    let d = generators.first().map(|g| g.nrows()).unwrap_or(1);
    let mut h = CMatrix::zeros(d, d);
    for (x, g) in fields.iter().zip(generators) {
        h += g * c(*x, 0.);
    }
    // shift by the smallest eigenvalue so the exponent is non-positive
    let shift = linalg::hermitian_eigenvalues(&h)[0];
    let unnormalized = linalg::hermitian_apply(&h, |x| (-(x - shift)).exp());
    DensityOperator::normalized(&unnormalized, 1e-12)
}
