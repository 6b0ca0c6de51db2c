//! Ridge-regularized symmetric solves shared by the sampler and baselines.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LinalgError {
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("ridge parameter must be non-negative, got {0}")]
    NegativeRidge(f64),
    #[error("A + lambda*I is not positive definite{}", context_suffix(.context))]
    NotPositiveDefinite { context: Option<&'static str> },
}

fn context_suffix(context: &Option<&'static str>) -> String {
    match context {
        Some(c) => format!(" (in {c})"),
        None => String::new(),
    }
}

/// Cholesky factor of `A + lambda*I`, the building block of every
/// regularized solve in the sampler.
pub fn ridge_cholesky(
    a: &DMatrix<f64>,
    lambda: f64,
    context: Option<&'static str>,
) -> Result<Cholesky<f64, Dyn>, LinalgError> {
    if a.nrows() != a.ncols() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if lambda < 0.0 {
        return Err(LinalgError::NegativeRidge(lambda));
    }
    let mut m = a.clone();
    for i in 0..m.nrows() {
        m[(i, i)] += lambda;
    }
    Cholesky::new(m).ok_or(LinalgError::NotPositiveDefinite { context })
}

/// Solves `(A + lambda*I) X = B` for symmetric `A` via Cholesky, never
/// forming an explicit inverse.
pub fn ridge_solve(
    a: &DMatrix<f64>,
    lambda: f64,
    b: &DMatrix<f64>,
) -> Result<DMatrix<f64>, LinalgError> {
    let chol = ridge_cholesky(a, lambda, None)?;
    Ok(chol.solve(b))
}

/// Vector right-hand-side variant of [`ridge_solve`].
pub fn ridge_solve_vec(
    a: &DMatrix<f64>,
    lambda: f64,
    b: &DVector<f64>,
) -> Result<DVector<f64>, LinalgError> {
    let chol = ridge_cholesky(a, lambda, None)?;
    Ok(chol.solve(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn identity_passthrough() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::identity(2, 2);
        let x = ridge_solve(&a, 0.0, &b).unwrap();
        assert_abs_diff_eq!(x, DMatrix::identity(2, 2), epsilon = 1e-14);
    }

    #[test]
    fn diagonal_arithmetic() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 3.0]));
        let b = DMatrix::from_column_slice(2, 1, &[1.0, 1.0]);
        let x = ridge_solve(&a, 1.0, &b).unwrap();
        assert_abs_diff_eq!(x[(0, 0)], 1.0 / 3.0, epsilon = 1e-14);
        assert_abs_diff_eq!(x[(1, 0)], 1.0 / 4.0, epsilon = 1e-14);
    }

    #[test]
    fn random_spd_matches_explicit_inverse() {
        // deterministic pseudo-random SPD 6x6: M = B^T B + I
        let b = DMatrix::from_fn(6, 6, |r, c| ((r * 7 + c * 13 + 3) % 11) as f64 / 11.0 - 0.4);
        let a = b.transpose() * &b + DMatrix::identity(6, 6);
        let rhs = DMatrix::from_fn(6, 2, |r, c| ((r + 2 * c) % 5) as f64 - 2.0);
        let lambda = 0.37;
        let x = ridge_solve(&a, lambda, &rhs).unwrap();

        let mut reg = a.clone();
        for i in 0..6 {
            reg[(i, i)] += lambda;
        }
        let oracle = reg.try_inverse().unwrap() * &rhs;
        assert_abs_diff_eq!(x, oracle, epsilon = 1e-10);
    }

    #[test]
    fn indefinite_matrix_is_rejected() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -5.0]));
        let b = DMatrix::identity(2, 2);
        let err = ridge_solve(&a, 0.5, &b).unwrap_err();
        assert!(matches!(err, LinalgError::NotPositiveDefinite { .. }));
    }

    #[test]
    fn negative_ridge_is_rejected() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::identity(2, 2);
        assert!(matches!(
            ridge_solve(&a, -1.0, &b),
            Err(LinalgError::NegativeRidge(_))
        ));
    }
}
