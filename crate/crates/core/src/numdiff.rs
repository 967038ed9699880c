//! Central finite differences with one Richardson refinement.
//!
//! Stencil points are evaluated through [`crate::exec`] and combined in a fixed
//! order, so results do not depend on the execution mode.

use crate::error::{Error, Result};
use crate::exec::{map_slice, Execution};
use crate::operator::RMatrix;

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("finite-difference step must be positive, got {h}")))
    }
}

fn shifted(x: &[f64], moves: &[(usize, f64)]) -> Vec<f64> {
    let mut y = x.to_vec();
    for &(i, dx) in moves {
        y[i] += dx;
    }
    y
}

fn evaluate<F>(f: &F, points: &[Vec<f64>], exec: Execution) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let values = map_slice(points, exec, |p| f(p));
    values
        .into_iter()
        .map(|v| {
            let v = v?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation(format!("function returned {v}")))
            }
        })
        .collect()
}

fn hessian_at_step<F>(f: &F, x: &[f64], h: f64, exec: Execution) -> Result<RMatrix>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let n = x.len();
    let mut points = vec![x.to_vec()];
    for i in 0..n {
        points.push(shifted(x, &[(i, h)]));
        points.push(shifted(x, &[(i, -h)]));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            points.push(shifted(x, &[(i, h), (j, h)]));
            points.push(shifted(x, &[(i, h), (j, -h)]));
            points.push(shifted(x, &[(i, -h), (j, h)]));
            points.push(shifted(x, &[(i, -h), (j, -h)]));
        }
    }
    let v = evaluate(f, &points, exec)?;
    let center = v[0];
    let mut hess = RMatrix::zeros(n, n);
    for i in 0..n {
        hess[(i, i)] = (v[1 + 2 * i] - 2.0 * center + v[2 + 2 * i]) / (h * h);
    }
    let mut k = 1 + 2 * n;
    for i in 0..n {
        for j in (i + 1)..n {
            let val = (v[k] - v[k + 1] - v[k + 2] + v[k + 3]) / (4.0 * h * h);
            hess[(i, j)] = val;
            hess[(j, i)] = val;
            k += 4;
        }
    }
    Ok(hess)
}

/// Symmetric Hessian of `f` at `x`, Richardson-extrapolated from steps `h` and `h/2`.
pub fn hessian<F>(f: &F, x: &[f64], h: f64, exec: Execution) -> Result<RMatrix>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_step(h)?;
    let coarse = hessian_at_step(f, x, h, exec)?;
    let fine = hessian_at_step(f, x, 0.5 * h, exec)?;
    Ok((fine * 4.0 - coarse) / 3.0)
}

fn gradient_at_step<F>(f: &F, x: &[f64], h: f64, exec: Execution) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    let points: Vec<Vec<f64>> = (0..x.len())
        .flat_map(|i| [shifted(x, &[(i, h)]), shifted(x, &[(i, -h)])])
        .collect();
    let v = evaluate(f, &points, exec)?;
    Ok((0..x.len())
        .map(|i| (v[2 * i] - v[2 * i + 1]) / (2.0 * h))
        .collect())
}

/// Gradient of `f` at `x`, Richardson-extrapolated from steps `h` and `h/2`.
pub fn gradient<F>(f: &F, x: &[f64], h: f64, exec: Execution) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<f64> + Sync,
{
    check_step(h)?;
    let coarse = gradient_at_step(f, x, h, exec)?;
    let fine = gradient_at_step(f, x, 0.5 * h, exec)?;
    Ok(coarse
        .iter()
        .zip(&fine)
        .map(|(c, f)| (4.0 * f - c) / 3.0)
        .collect())
}

/// Jacobian `∂vₖ/∂xᵢ` of a vector-valued map, stored as `jac[i][k]`.
pub fn jacobian<F>(f: &F, x: &[f64], h: f64, exec: Execution) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>> + Sync,
{
    check_step(h)?;
    let mut points = Vec::with_capacity(4 * x.len());
    for i in 0..x.len() {
        points.push(shifted(x, &[(i, h)]));
        points.push(shifted(x, &[(i, -h)]));
        points.push(shifted(x, &[(i, 0.5 * h)]));
        points.push(shifted(x, &[(i, -0.5 * h)]));
    }
    let values = map_slice(&points, exec, |p| f(p))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut jac = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let [a, b, c, d] = [&values[4 * i], &values[4 * i + 1], &values[4 * i + 2], &values[4 * i + 3]];
        let row: Vec<f64> = (0..a.len())
            .map(|k| {
                let coarse = (a[k] - b[k]) / (2.0 * h);
                let fine = (c[k] - d[k]) / h;
                (4.0 * fine - coarse) / 3.0
            })
            .collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::Evaluation("non-finite derivative".into()));
        }
        jac.push(row);
    }
    Ok(jac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn hessian_of_cubic() {
        let f = |x: &[f64]| Ok(x[0].powi(3) + 2.0 * x[0] * x[1] + x[1].powi(2));
        let h = hessian(&f, &[1.0, -2.0], 1e-3, Execution::Sequential).unwrap();
        assert_abs_diff_eq!(h[(0, 0)], 6.0, epsilon = 1e-7);
        assert_abs_diff_eq!(h[(0, 1)], 2.0, epsilon = 1e-7);
        assert_abs_diff_eq!(h[(1, 1)], 2.0, epsilon = 1e-7);
    }

    #[test]
    fn gradient_of_exp() {
        let f = |x: &[f64]| Ok(x[0].exp());
        let g = gradient(&f, &[0.3], 1e-2, Execution::Parallel).unwrap();
        assert_abs_diff_eq!(g[0], 0.3f64.exp(), epsilon = 1e-9);
    }

    #[test]
    fn non_finite_is_reported() {
        let f = |x: &[f64]| Ok(1.0 / x[0]);
        let err = hessian(&f, &[0.0], 1e-4, Execution::Sequential);
        assert!(matches!(err, Err(Error::Evaluation(_))));
    }

    #[test]
    fn bad_step() {
        let f = |_: &[f64]| Ok(0.0);
        assert!(matches!(gradient(&f, &[0.0], 0.0, Execution::Sequential), Err(Error::Domain(_))));
    }
}
