//! Small dense routines: Cholesky factorisation and ridge least squares.
//! Matrices are row-major `n × n` slices.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Pivots below this fraction of the largest diagonal entry count as zero.
const PIVOT_TOLERANCE: f64 = 1e-13;

/// In-place lower Cholesky factor of a symmetric positive-definite matrix.
/// The strict upper triangle is zeroed.
pub fn cholesky(a: &mut [f64], n: usize) -> Result<()> {
    debug_assert_eq!(a.len(), n * n);
    let scale = (0..n).map(|i| a[i * n + i].abs()).fold(0.0, f64::max);
    let floor = PIVOT_TOLERANCE * scale.max(f64::MIN_POSITIVE);
    for j in 0..n {
        let mut d = a[j * n + j];
        for k in 0..j {
            d -= a[j * n + k] * a[j * n + k];
        }
        if !(d > floor) {
            return Err(Error::NotPositiveDefinite);
        }
        let d = libm::sqrt(d);
        a[j * n + j] = d;
        for i in j + 1..n {
            let mut s = a[i * n + j];
            for k in 0..j {
                s -= a[i * n + k] * a[j * n + k];
            }
            a[i * n + j] = s / d;
        }
        for i in 0..j {
            a[i * n + j] = 0.0;
        }
    }
    Ok(())
}

/// Solves `L Lᵀ x = b` given the factor from [`cholesky`]; `b` becomes `x`.
pub fn cholesky_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut s = b[i];
        for k in i + 1..n {
            s -= l[k * n + i] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

/// Solves `L z = b` (forward substitution only).
pub fn forward_solve(l: &[f64], n: usize, b: &mut [f64]) {
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * n + k] * b[k];
        }
        b[i] = s / l[i * n + i];
    }
}

pub fn log_det_from_cholesky(l: &[f64], n: usize) -> f64 {
    2.0 * (0..n).map(|i| libm::log(l[i * n + i])).sum::<f64>()
}

/// Ridge-regularised least squares from a design given column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    pub coefficients: Vec<f64>,
    /// Ridge actually used; differs from the request after a fallback.
    pub ridge: f64,
}

/// Fallback escalations tried before giving up.
const FALLBACK_ATTEMPTS: usize = 40;

/// Minimises `‖y − Σ_j β_j x_j‖² + ridge·‖β‖²`. If the normal equations are
/// singular and `ridge` is zero, retries with `fallback_ridge`, growing it
/// tenfold while the system still does not factor.
pub fn ridge_least_squares(columns: &[Vec<f64>], y: &[f64], ridge: f64, fallback_ridge: f64) -> Result<LeastSquares> {
    let p = columns.len();
    let mut gram = vec![0.0; p * p];
    let mut rhs = vec![0.0; p];
    for i in 0..p {
        rhs[i] = dot(&columns[i], y);
        for j in 0..=i {
            let v = dot(&columns[i], &columns[j]);
            gram[i * p + j] = v;
            gram[j * p + i] = v;
        }
    }
    let attempt = |lambda: f64| -> Result<Vec<f64>> {
        let mut a = gram.clone();
        for i in 0..p {
            a[i * p + i] += lambda;
        }
        cholesky(&mut a, p)?;
        let mut b = rhs.clone();
        cholesky_solve(&a, p, &mut b);
        Ok(b)
    };
    let err = match attempt(ridge) {
        Ok(coefficients) => return Ok(LeastSquares { coefficients, ridge }),
        Err(e) if ridge != 0.0 || fallback_ridge <= 0.0 => return Err(e),
        Err(e) => e,
    };
    let mut lambda = fallback_ridge;
    for _ in 0..FALLBACK_ATTEMPTS {
        if let Ok(coefficients) = attempt(lambda) {
            return Ok(LeastSquares { coefficients, ridge: lambda });
        }
        lambda *= 10.0;
    }
    Err(err)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn factor_and_solve() {
        let mut a = vec![4.0, 2.0, 0.6, 2.0, 5.0, 1.0, 0.6, 1.0, 3.0];
        let orig = a.clone();
        cholesky(&mut a, 3).unwrap();
        let mut x = vec![1.0, 2.0, 3.0];
        cholesky_solve(&a, 3, &mut x);
        for i in 0..3 {
            let ax: f64 = (0..3).map(|j| orig[i * 3 + j] * x[j]).sum();
            assert_abs_diff_eq!(ax, [1.0, 2.0, 3.0][i], epsilon = 1e-12);
        }
        // det = 4·(5·3 − 1) − 2·(2·3 − 0.6) + 0.6·(2 − 3)
        let det: f64 = 4.0 * 14.0 - 2.0 * 5.4 + 0.6 * -1.0;
        assert_abs_diff_eq!(log_det_from_cholesky(&a, 3), det.ln(), epsilon = 1e-12);
    }

    #[test]
    fn singular_matrix_is_detected() {
        let mut a = vec![1.0, 1.0, 1.0, 1.0];
        assert_eq!(cholesky(&mut a, 2), Err(Error::NotPositiveDefinite));
    }

    #[test]
    fn duplicate_columns_fall_back_to_ridge() {
        let x = vec![1.0, 2.0, 3.0];
        let y = vec![2.0, 4.0, 6.0];
        let ls = ridge_least_squares(&[x.clone(), x], &y, 0.0, 1e-6).unwrap();
        assert_eq!(ls.ridge, 1e-6);
        assert_abs_diff_eq!(ls.coefficients[0], ls.coefficients[1], epsilon = 1e-9);
        assert_abs_diff_eq!(ls.coefficients[0] + ls.coefficients[1], 2.0, epsilon = 1e-6);
    }

    #[test]
    fn large_collinear_columns_still_solve() {
        let x: Vec<f64> = (1..=20).map(|i| 1e8 * i as f64).collect();
        let y: Vec<f64> = (1..=20).map(|i| i as f64).collect();
        let ls = ridge_least_squares(&[x.clone(), x.clone(), x], &y, 0.0, 1e-6).unwrap();
        assert!(ls.ridge > 1e-6);
        let total: f64 = ls.coefficients.iter().sum();
        assert_abs_diff_eq!(total, 1e-8, epsilon = 1e-12);
    }
}
