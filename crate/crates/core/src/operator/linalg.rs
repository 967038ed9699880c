//! Dense complex linear algebra used throughout the crate.
//!
//! Vectorization is column-stacking: `vec(A)` lists the columns of `A` one after
//! another, so the map `X ↦ A X B` has matrix `Bᵀ ⊗ A`. Every superoperator matrix
//! in this crate depends on that convention.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type RMatrix = DMatrix<f64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

pub fn check_square(a: &CMatrix) -> Result<usize> {
    if a.nrows() != a.ncols() {
        return Err(Error::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    Ok(a.nrows())
}

pub fn check_finite(a: &CMatrix) -> Result<()> {
    if a.iter().all(|z| z.re.is_finite() && z.im.is_finite()) {
        Ok(())
    } else {
        Err(Error::Evaluation("matrix has non-finite entries".into()))
    }
}

pub fn identity(d: usize) -> CMatrix {
    CMatrix::identity(d, d)
}

pub fn from_real(a: &RMatrix) -> CMatrix {
    a.map(|x| Complex64::new(x, 0.0))
}

/// Column-stacked vectorization.
pub fn vectorize(a: &CMatrix) -> CMatrix {
    CMatrix::from_column_slice(a.len(), 1, a.as_slice())
}

/// Inverse of [`vectorize`] for a `d²`-long column.
pub fn devectorize(v: &CMatrix, d: usize) -> CMatrix {
    assert_eq!(v.len(), d * d, "vector length must be d²");
    CMatrix::from_column_slice(d, d, v.as_slice())
}

/// Column `col` of `m` read as a vectorized `d×d` operator.
pub fn column_operator(m: &CMatrix, col: usize, d: usize) -> CMatrix {
    CMatrix::from_iterator(d, d, m.column(col).iter().copied())
}

pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a.kronecker(b)
}

pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

pub fn trace(a: &CMatrix) -> Complex64 {
    a.diagonal().iter().sum()
}

/// Hilbert–Schmidt inner product `Tr(A† B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

/// Largest entrywise modulus of `A − A†`.
pub fn hermiticity_defect(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

pub fn hermitize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()).scale(0.5)
}

/// Sum of singular values.
pub fn trace_norm(a: &CMatrix) -> Result<f64> {
    check_square(a)?;
    check_finite(a)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(singular_values(a)?.iter().sum())
}

/// Largest singular value.
pub fn operator_norm(a: &CMatrix) -> Result<f64> {
    check_square(a)?;
    check_finite(a)?;
    if a.is_empty() {
        return Ok(0.0);
    }
    Ok(singular_values(a)?.iter().cloned().fold(0.0, f64::max))
}

/// Iteration cap for the iterative decompositions; a finite input that still fails
/// to converge is reported instead of looping.
const MAX_SWEEPS: usize = 10_000;

fn singular_values(a: &CMatrix) -> Result<Vec<f64>> {
    a.clone()
        .try_svd(false, false, f64::EPSILON, MAX_SWEEPS)
        .map(|svd| svd.singular_values.iter().cloned().collect())
        .ok_or_else(|| Error::Numerical("singular value decomposition did not converge".into()))
}

fn norm_one(a: &CMatrix) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
/// Non-finite input (or a failed decomposition) yields NaN eigenvalues.
pub fn hermitian_eigen(a: &CMatrix) -> (Vec<f64>, CMatrix) {
    let n = a.nrows();
    let failed = || (vec![f64::NAN; n], identity(n));
    if check_finite(a).is_err() {
        return failed();
    }
    let Some(eig) = hermitize(a).try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS) else {
        return failed();
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Eigenvalues of a real symmetric matrix, ascending; NaN when the input is not
/// finite or the iteration fails.
pub fn symmetric_eigenvalues(a: &RMatrix) -> Vec<f64> {
    let n = a.nrows();
    if a.iter().any(|x| !x.is_finite()) {
        return vec![f64::NAN; n];
    }
    match a.clone().try_symmetric_eigen(f64::EPSILON, MAX_SWEEPS) {
        Some(eig) => {
            let mut ev: Vec<f64> = eig.eigenvalues.iter().cloned().collect();
            ev.sort_by(f64::total_cmp);
            ev
        }
        None => vec![f64::NAN; n],
    }
}

pub fn hermitian_eigenvalues(a: &CMatrix) -> Vec<f64> {
    hermitian_eigen(a).0
}

/// `U f(Λ) U†` for Hermitian `A = U Λ U†`.
pub fn hermitian_apply(a: &CMatrix, f: impl Fn(f64) -> f64) -> CMatrix {
    let (values, u) = hermitian_eigen(a);
    let n = values.len();
    let mut scaled = u.clone();
    for (c, &v) in values.iter().enumerate() {
        let fv = Complex64::new(f(v), 0.0);
        for r in 0..n {
            scaled[(r, c)] *= fv;
        }
    }
    scaled * u.adjoint()
}

/// Eigenvalues of a general complex matrix from its Schur form.
pub fn eigenvalues(a: &CMatrix) -> Result<Vec<Complex64>> {
    check_square(a)?;
    check_finite(a)?;
    if a.is_empty() {
        return Ok(Vec::new());
    }
    let (_, t) = a
        .clone()
        .try_schur(f64::EPSILON, MAX_SWEEPS)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?
        .unpack();
    Ok(t.diagonal().iter().cloned().collect())
}

pub fn solve(a: &CMatrix, b: &CMatrix) -> Option<CMatrix> {
    a.clone().lu().solve(b)
}

const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
#[allow(clippy::excessive_precision)]
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;

fn real(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

fn pade_low(a: &CMatrix, b: &[f64]) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let a2 = a * a;
    let mut u = identity(n) * real(b[1]);
    let mut v = identity(n) * real(b[0]);
    let mut power = identity(n);
    let mut k = 2;
    while k < b.len() {
        power = &power * &a2;
        v += &power * real(b[k]);
        u += &power * real(b[k + 1]);
        k += 2;
    }
    (a * u, v)
}

fn pade13(a: &CMatrix) -> (CMatrix, CMatrix) {
    let n = a.nrows();
    let b = &PADE13;
    let id = identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let inner_u = &a6 * real(b[13]) + &a4 * real(b[11]) + &a2 * real(b[9]);
    let u = a
        * (&a6 * inner_u
            + &a6 * real(b[7])
            + &a4 * real(b[5])
            + &a2 * real(b[3])
            + &id * real(b[1]));
    let inner_v = &a6 * real(b[12]) + &a4 * real(b[10]) + &a2 * real(b[8]);
    let v = &a6 * inner_v + &a6 * real(b[6]) + &a4 * real(b[4]) + &a2 * real(b[2]) + &id * real(b[0]);
    (u, v)
}

/// `exp(tA)` by scaling and squaring with diagonal Padé approximants.
pub fn matrix_exponential(a: &CMatrix, t: f64) -> Result<CMatrix> {
    let n = check_square(a)?;
    if !t.is_finite() {
        return Err(Error::Domain(format!("time must be finite, got {t}")));
    }
    let at = a * real(t);
    check_finite(&at)?;
    if n == 0 {
        return Ok(at);
    }
    let norm = norm_one(&at);
    for &(m, theta) in &THETA {
        if norm <= theta {
            let coeffs: &[f64] = match m {
                3 => &PADE3,
                5 => &PADE5,
                7 => &PADE7,
                _ => &PADE9,
            };
            let (u, v) = pade_low(&at, coeffs);
            return pade_quotient(&u, &v);
        }
    }
    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let scaled = &at * real(2f64.powi(-s));
    let (u, v) = pade13(&scaled);
    let mut r = pade_quotient(&u, &v)?;
    for _ in 0..s {
        r = &r * &r;
    }
    Ok(r)
}

fn pade_quotient(u: &CMatrix, v: &CMatrix) -> Result<CMatrix> {
    solve(&(v - u), &(v + u))
        .ok_or_else(|| Error::Numerical("singular Padé denominator".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn vectorization_is_column_stacking() {
        let a = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(2., 0.), c(3., 0.), c(4., 0.)]);
        let v = vectorize(&a);
        let stacked: Vec<f64> = v.iter().map(|z| z.re).collect();
        assert_eq!(stacked, vec![1.0, 3.0, 2.0, 4.0]);
        assert_eq!(devectorize(&v, 2), a);
    }

    #[test]
    fn kron_matches_sandwich_convention() {
        let a = CMatrix::from_fn(2, 2, |i, j| c(i as f64 + 1.0, j as f64));
        let b = CMatrix::from_fn(2, 2, |i, j| c(j as f64 - i as f64, 0.5));
        let x = CMatrix::from_fn(2, 2, |i, j| c((i * 2 + j) as f64, -(i as f64)));
        let lhs = vectorize(&(&a * &x * &b));
        let rhs = kron(&b.transpose(), &a) * vectorize(&x);
        assert_abs_diff_eq!((lhs - rhs).norm(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn trace_norm_simple_cases() {
        assert_abs_diff_eq!(trace_norm(&identity(2)).unwrap(), 2.0, epsilon = 1e-14);
        let z = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(1., 0.), c(-1., 0.)]));
        assert_abs_diff_eq!(trace_norm(&z).unwrap(), 2.0, epsilon = 1e-14);
        assert_eq!(trace_norm(&CMatrix::zeros(3, 3)).unwrap(), 0.0);
    }

    #[test]
    fn trace_norm_rejects_rectangular() {
        assert!(matches!(
            trace_norm(&CMatrix::zeros(2, 3)),
            Err(Error::NotSquare { rows: 2, cols: 3 })
        ));
    }

    #[test]
    fn exponential_of_zero_is_identity() {
        let e = matrix_exponential(&CMatrix::zeros(3, 3), 7.0).unwrap();
        assert_eq!(e, identity(3));
    }

    #[test]
    fn exponential_of_diagonal() {
        let a = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(-1., 0.), c(-2., 0.)]));
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert_abs_diff_eq!(e[(0, 0)].re, (-1f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(1, 1)].re, (-2f64).exp(), epsilon = 1e-14);
        assert_abs_diff_eq!(e[(0, 1)].norm(), 0.0, epsilon = 1e-16);
    }

    #[test]
    fn exponential_of_large_nilpotent_uses_squaring() {
        // exp of [[0, x], [0, 0]] is [[1, x], [0, 1]] for any x
        let mut a = CMatrix::zeros(2, 2);
        a[(0, 1)] = c(50.0, 0.0);
        let e = matrix_exponential(&a, 1.0).unwrap();
        assert_abs_diff_eq!(e[(0, 1)].re, 50.0, epsilon = 1e-9);
        assert_abs_diff_eq!(e[(0, 0)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn exponential_rejects_non_finite_time() {
        assert!(matrix_exponential(&identity(2), f64::NAN).is_err());
    }

    #[test]
    fn hermitian_apply_recovers_square() {
        let h = CMatrix::from_row_slice(2, 2, &[c(2., 0.), c(0., 1.), c(0., -1.), c(1., 0.)]);
        let sq = hermitian_apply(&h, |x| x * x);
        assert_abs_diff_eq!((sq - &h * &h).norm(), 0.0, epsilon = 1e-12);
    }
}
