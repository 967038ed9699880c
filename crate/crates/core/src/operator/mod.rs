//! States, observables and superoperators on a `d`-dimensional matrix algebra.

mod entropy;
pub mod linalg;
mod random;

pub use entropy::{relative_entropy, relative_entropy_with};
pub use linalg::{matrix_exponential, trace_norm, CMatrix, RMatrix};
pub use random::{random_complex_matrix, random_density, random_hermitian};

use num_complex::Complex64;

use crate::error::{Error, Result};
use linalg::{check_finite, check_square, hermiticity_defect, hermitize};

/// Numerical thresholds shared by the engine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    /// Hermiticity / trace tolerance when constructing operators.
    pub construction: f64,
    /// Tolerance for equality and invariant checks on computed results.
    pub equality: f64,
    /// A state is faithful when its minimum eigenvalue exceeds this.
    pub faithfulness: f64,
    /// Eigenvalues with modulus below `kernel · ‖L‖` count as zero.
    pub kernel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            construction: 1e-12,
            equality: 1e-10,
            faithfulness: 1e-10,
            kernel: 1e-9,
        }
    }
}

/// A self-adjoint `d×d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianOperator {
    matrix: CMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, Tolerances::default().construction)
    }

    /// Validates within `tol` and stores the exact Hermitian part.
    pub fn with_tolerance(matrix: CMatrix, tol: f64) -> Result<Self> {
        let d = check_square(&matrix)?;
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        check_finite(&matrix)?;
        let defect = hermiticity_defect(&matrix);
        if defect > tol {
            return Err(Error::NotHermitian(defect));
        }
        Ok(Self {
            matrix: hermitize(&matrix),
        })
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Result<Self> {
        let d = diag.len();
        let mut m = CMatrix::zeros(d, d);
        for (i, &x) in diag.iter().enumerate() {
            m[(i, i)] = Complex64::new(x, 0.0);
        }
        Self::new(m)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    /// Spectral norm, i.e. the largest absolute eigenvalue.
    pub fn sup_norm(&self) -> f64 {
        self.eigenvalues().iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

/// A positive semidefinite, unit-trace operator.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOperator {
    matrix: CMatrix,
}

impl DensityOperator {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        Self::with_tolerance(matrix, Tolerances::default().construction)
    }

    pub fn with_tolerance(matrix: CMatrix, tol: f64) -> Result<Self> {
        let h = HermitianOperator::with_tolerance(matrix, tol)?;
        let tr = linalg::trace(h.matrix()).re;
        if (tr - 1.0).abs() > tol {
            return Err(Error::InvalidTrace(tr));
        }
        let min = h.eigenvalues()[0];
        if min < -tol {
            return Err(Error::NotPositive(min));
        }
        Ok(Self { matrix: h.matrix })
    }

    /// `I/d`.
    pub fn maximally_mixed(d: usize) -> Result<Self> {
        if d == 0 {
            return Err(Error::ZeroDimension);
        }
        Ok(Self {
            matrix: linalg::identity(d) * Complex64::new(1.0 / d as f64, 0.0),
        })
    }

    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        let h = HermitianOperator::from_real_diagonal(p)?;
        Self::new(h.into_matrix())
    }

    /// Hermitizes, renormalizes the trace and validates positivity within `tol`.
    pub fn normalized(matrix: &CMatrix, tol: f64) -> Result<Self> {
        check_square(matrix)?;
        let h = hermitize(matrix);
        let tr = linalg::trace(&h).re;
        if !(tr.abs() > f64::MIN_POSITIVE) || !tr.is_finite() {
            return Err(Error::InvalidTrace(tr));
        }
        Self::with_tolerance(h * Complex64::new(1.0 / tr, 0.0), tol)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        linalg::hermitian_eigenvalues(&self.matrix)
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }

    pub fn is_faithful(&self, threshold: f64) -> bool {
        self.min_eigenvalue() > threshold
    }

    /// Expectation value `Tr(ρ A)`.
    pub fn expectation(&self, a: &CMatrix) -> Complex64 {
        (&self.matrix * a).trace()
    }

    /// `½‖ρ − σ‖₁`.
    pub fn trace_distance(&self, other: &DensityOperator) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                found: other.dim(),
            });
        }
        Ok(0.5 * trace_norm(&(&self.matrix - &other.matrix))?)
    }
}

/// What a superoperator is declared to be; physical kinds are validated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SuperoperatorKind {
    /// Generator of a trace-preserving semigroup: output trace is 0.
    Generator,
    /// Trace-preserving map.
    Channel,
    /// No physical constraints checked.
    Plain,
}

/// A linear map on `d×d` matrices as a `d²×d²` matrix on column-stacked vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Superoperator {
    dim: usize,
    matrix: CMatrix,
    kind: SuperoperatorKind,
}

impl Superoperator {
    pub fn new(dim: usize, matrix: CMatrix, kind: SuperoperatorKind) -> Result<Self> {
        Self::with_tolerance(dim, matrix, kind, Tolerances::default().equality)
    }

    pub fn with_tolerance(
        dim: usize,
        matrix: CMatrix,
        kind: SuperoperatorKind,
        tol: f64,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::ZeroDimension);
        }
        let n = check_square(&matrix)?;
        if n != dim * dim {
            return Err(Error::Dimension {
                expected: dim * dim,
                found: n,
            });
        }
        check_finite(&matrix)?;
        let s = Self { dim, matrix, kind };
        if kind != SuperoperatorKind::Plain {
            let scale = 1.0_f64.max(s.matrix.norm());
            let herm = s.hermiticity_defect();
            if herm > tol * scale {
                let msg = format!("map does not preserve hermiticity (defect {herm:e})");
                return Err(match kind {
                    SuperoperatorKind::Generator => Error::InvalidGenerator(msg),
                    _ => Error::InvalidChannel(msg),
                });
            }
            let target = if kind == SuperoperatorKind::Channel { 1.0 } else { 0.0 };
            let tr = s.trace_defect(target);
            if tr > tol * scale {
                return Err(match kind {
                    SuperoperatorKind::Generator => Error::InvalidGenerator(format!(
                        "output trace is not zero (defect {tr:e})"
                    )),
                    _ => Error::InvalidChannel(format!("map is not trace-preserving (defect {tr:e})")),
                });
            }
        }
        Ok(s)
    }

    /// Builds the matrix of `X ↦ f(X)` from its action on matrix units.
    pub fn from_map(
        dim: usize,
        kind: SuperoperatorKind,
        f: impl Fn(&CMatrix) -> CMatrix,
    ) -> Result<Self> {
        let n = dim * dim;
        let mut m = CMatrix::zeros(n, n);
        for col in 0..n {
            let mut unit = CMatrix::zeros(dim, dim);
            unit[(col % dim, col / dim)] = linalg::ONE;
            let out = f(&unit);
            m.set_column(col, &linalg::vectorize(&out).column(0));
        }
        Self::new(dim, m, kind)
    }

    pub fn zero(dim: usize, kind: SuperoperatorKind) -> Self {
        Self {
            dim,
            matrix: CMatrix::zeros(dim * dim, dim * dim),
            kind,
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            matrix: linalg::identity(dim * dim),
            kind: SuperoperatorKind::Channel,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn kind(&self) -> SuperoperatorKind {
        self.kind
    }

    pub fn apply(&self, x: &CMatrix) -> CMatrix {
        let v = &self.matrix * linalg::vectorize(x);
        linalg::devectorize(&v, self.dim)
    }

    /// Adjoint with respect to the Hilbert–Schmidt inner product (Heisenberg picture).
    pub fn adjoint(&self) -> Superoperator {
        Self {
            dim: self.dim,
            matrix: self.matrix.adjoint(),
            kind: SuperoperatorKind::Plain,
        }
    }

    pub fn scaled(&self, c: f64) -> Superoperator {
        Self {
            dim: self.dim,
            matrix: &self.matrix * Complex64::new(c, 0.0),
            kind: self.kind,
        }
    }

    /// `self + c · other`; the result keeps `self`'s kind when both kinds agree.
    pub fn add_scaled(&self, other: &Superoperator, c: f64) -> Result<Superoperator> {
        if self.dim != other.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: other.dim,
            });
        }
        let kind = if self.kind == other.kind {
            self.kind
        } else {
            SuperoperatorKind::Plain
        };
        Ok(Self {
            dim: self.dim,
            matrix: &self.matrix + &other.matrix * Complex64::new(c, 0.0),
            kind,
        })
    }

    pub fn compose(&self, first: &Superoperator) -> Result<Superoperator> {
        if self.dim != first.dim {
            return Err(Error::Dimension {
                expected: self.dim,
                found: first.dim,
            });
        }
        Ok(Self {
            dim: self.dim,
            matrix: &self.matrix * &first.matrix,
            kind: if self.kind == first.kind {
                self.kind
            } else {
                SuperoperatorKind::Plain
            },
        })
    }

    /// `exp(t · self)`; a generator yields a channel.
    pub fn exp(&self, t: f64) -> Result<Superoperator> {
        let kind = match self.kind {
            SuperoperatorKind::Generator => SuperoperatorKind::Channel,
            _ => SuperoperatorKind::Plain,
        };
        Ok(Self {
            dim: self.dim,
            matrix: matrix_exponential(&self.matrix, t)?,
            kind,
        })
    }

    /// Frobenius norm of the matrix representation.
    pub fn norm(&self) -> f64 {
        self.matrix.norm()
    }

    /// Largest `‖vec(Tr) · M − target · vec(Tr)‖` entry.
    pub fn trace_defect(&self, target: f64) -> f64 {
        let d = self.dim;
        (0..d * d)
            .map(|col| {
                let tr: Complex64 = (0..d).map(|i| self.matrix[(i + i * d, col)]).sum();
                let expected = if col % d == col / d { target } else { 0.0 };
                (tr - Complex64::new(expected, 0.0)).norm()
            })
            .fold(0.0, f64::max)
    }

    /// Largest hermiticity defect of the image of a Hermitian basis.
    pub fn hermiticity_defect(&self) -> f64 {
        let d = self.dim;
        let mut worst = 0.0_f64;
        for i in 0..d {
            for j in i..d {
                let mut a = CMatrix::zeros(d, d);
                a[(i, j)] = linalg::ONE;
                a[(j, i)] = linalg::ONE;
                worst = worst.max(hermiticity_defect(&self.apply(&a)));
                if i != j {
                    let mut b = CMatrix::zeros(d, d);
                    b[(i, j)] = linalg::I;
                    b[(j, i)] = -linalg::I;
                    worst = worst.max(hermiticity_defect(&self.apply(&b)));
                }
            }
        }
        worst
    }

    /// Choi matrix `Σᵢⱼ |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`, input factor first.
    pub fn choi(&self) -> CMatrix {
        let d = self.dim;
        let mut j = CMatrix::zeros(d * d, d * d);
        for a in 0..d {
            for b in 0..d {
                let out = linalg::column_operator(&self.matrix, a + b * d, d);
                for r in 0..d {
                    for c in 0..d {
                        j[(a * d + r, b * d + c)] = out[(r, c)];
                    }
                }
            }
        }
        j
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hermitian_rejects_asymmetric() {
        let mut m = CMatrix::zeros(2, 2);
        m[(0, 1)] = Complex64::new(1.0, 0.0);
        assert!(matches!(HermitianOperator::new(m), Err(Error::NotHermitian(_))));
    }

    #[test]
    fn density_validation() {
        assert!(matches!(
            DensityOperator::from_probabilities(&[0.6, 0.6]),
            Err(Error::InvalidTrace(_))
        ));
        assert!(matches!(
            DensityOperator::from_probabilities(&[1.5, -0.5]),
            Err(Error::NotPositive(_))
        ));
        let rho = DensityOperator::from_probabilities(&[0.25, 0.75]).unwrap();
        assert!((rho.min_eigenvalue() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn superoperator_rejects_wrong_size() {
        let err = Superoperator::new(2, CMatrix::zeros(3, 3), SuperoperatorKind::Plain);
        assert!(matches!(err, Err(Error::Dimension { expected: 4, found: 3 })));
    }

    #[test]
    fn identity_channel_choi_is_omega() {
        let choi = Superoperator::identity(2).choi();
        // |Ω⟩⟨Ω| with |Ω⟩ = |00⟩ + |11⟩
        assert_eq!(choi[(0, 0)].re, 1.0);
        assert_eq!(choi[(0, 3)].re, 1.0);
        assert_eq!(choi[(3, 3)].re, 1.0);
        assert_eq!(choi[(1, 1)].re, 0.0);
    }

    #[test]
    fn channel_flag_checks_trace_preservation() {
        let m = linalg::identity(4) * Complex64::new(0.5, 0.0);
        assert!(matches!(
            Superoperator::new(2, m, SuperoperatorKind::Channel),
            Err(Error::InvalidChannel(_))
        ));
    }
}
