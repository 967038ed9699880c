use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::operator::linalg::{self, kron, CMatrix};
use crate::operator::{DensityOperator, HermitianOperator, Superoperator, SuperoperatorKind};

/// A GKLS generator in one of the supported closed forms.
#[derive(Debug, Clone, PartialEq)]
pub enum GklsGenerator {
    /// `L(ρ) = −i[H, ρ] + Σₖ (Lₖ ρ Lₖ† − ½{Lₖ†Lₖ, ρ})`.
    HamiltonianLindblad {
        hamiltonian: HermitianOperator,
        jumps: Vec<CMatrix>,
    },
    /// `L(ρ) = κ (σ Tr ρ − ρ)`.
    Reset { rate: f64, target: DensityOperator },
    /// `L = κ (Φ − id)` for a channel `Φ`.
    ChannelMinusId { rate: f64, channel: Superoperator },
}

impl GklsGenerator {
    pub fn dim(&self) -> usize {
        match self {
            GklsGenerator::HamiltonianLindblad { hamiltonian, .. } => hamiltonian.dim(),
            GklsGenerator::Reset { target, .. } => target.dim(),
            GklsGenerator::ChannelMinusId { channel, .. } => channel.dim(),
        }
    }
}

/// Schrödinger-picture matrix of the generator, acting on vectorized states.
pub fn build_superoperator(gen: &GklsGenerator) -> Result<Superoperator> {
    let d = gen.dim();
    let id = linalg::identity(d);
    let matrix = match gen {
        GklsGenerator::HamiltonianLindblad { hamiltonian, jumps } => {
            let h = hamiltonian.matrix();
            let mut m = (kron(&id, h) - kron(&h.transpose(), &id)) * Complex64::new(0.0, -1.0);
            for (k, l) in jumps.iter().enumerate() {
                if l.nrows() != d || l.ncols() != d {
                    return Err(Error::Dimension {
                        expected: d,
                        found: if l.nrows() != d { l.nrows() } else { l.ncols() },
                    });
                }
                linalg::check_finite(l).map_err(|_| {
                    Error::InvalidGenerator(format!("jump operator {k} has non-finite entries"))
                })?;
                let ldl = l.adjoint() * l;
                let half = Complex64::new(0.5, 0.0);
                m += kron(&l.map(|z| z.conj()), l);
                m -= (kron(&id, &ldl) + kron(&ldl.transpose(), &id)) * half;
            }
            m
        }
        GklsGenerator::Reset { rate, target } => {
            check_rate(*rate)?;
            let sigma = linalg::vectorize(target.matrix());
            let tr = linalg::vectorize(&id).adjoint();
            (sigma * tr - linalg::identity(d * d)) * Complex64::new(*rate, 0.0)
        }
        GklsGenerator::ChannelMinusId { rate, channel } => {
            check_rate(*rate)?;
            if channel.kind() != SuperoperatorKind::Channel {
                return Err(Error::InvalidChannel(
                    "channel_minus_id needs a map flagged as a channel".into(),
                ));
            }
            (channel.matrix() - linalg::identity(d * d)) * Complex64::new(*rate, 0.0)
        }
    };
    Superoperator::new(d, matrix, SuperoperatorKind::Generator)
}

fn check_rate(rate: f64) -> Result<()> {
    if rate.is_finite() && rate > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("rate must be positive, got {rate}")))
    }
}

/// Channel `ρ ↦ Σₖ Kₖ ρ Kₖ†`, validated as trace-preserving.
pub fn kraus_channel(dim: usize, kraus: &[CMatrix]) -> Result<Superoperator> {
    let mut m = CMatrix::zeros(dim * dim, dim * dim);
    for k in kraus {
        if k.nrows() != dim || k.ncols() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: k.nrows(),
            });
        }
        m += kron(&k.map(|z| z.conj()), k);
    }
    Superoperator::new(dim, m, SuperoperatorKind::Channel)
}

/// `ρ ↦ U ρ U†`.
pub fn unitary_channel(u: &CMatrix) -> Result<Superoperator> {
    let d = linalg::check_square(u)?;
    let defect = (u.adjoint() * u - linalg::identity(d)).norm();
    if defect > 1e-10 {
        return Err(Error::InvalidChannel(format!("matrix is not unitary (defect {defect:e})")));
    }
    kraus_channel(d, std::slice::from_ref(u))
}
