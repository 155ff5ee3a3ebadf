//! Dense linear algebra used by the estimators and the DoP analysis.
//!
//! Singular values follow the variational definition
//! `sigma_min(A) = min_{|x|=1} |Ax|`, so a matrix with fewer rows than columns
//! has `sigma_min = 0`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, TdoaError};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Relative rank tolerance used by the least-squares solvers.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SingularValues {
    pub min: f64,
    pub max: f64,
}

impl SingularValues {
    /// `sigma_max / sigma_min`; infinite when `sigma_min` is zero.
    pub fn cond(&self) -> f64 {
        if self.min > 0.0 {
            self.max / self.min
        } else {
            f64::INFINITY
        }
    }

    /// Whether `sigma_min < tol * sigma_max` (or the matrix is zero).
    pub fn is_rank_deficient(&self, tol: f64) -> bool {
        self.max == 0.0 || self.min < tol * self.max
    }
}

pub fn singular_values(m: &Matrix) -> SingularValues {
    if m.nrows() == 0 || m.ncols() == 0 {
        return SingularValues { min: 0.0, max: 0.0 };
    }
    let sv = m.clone().singular_values();
    let max = sv.max();
    let min = if m.nrows() < m.ncols() { 0.0 } else { sv.min() };
    SingularValues { min, max }
}

pub fn min_singular_value(m: &Matrix) -> f64 {
    singular_values(m).min
}

pub fn max_singular_value(m: &Matrix) -> f64 {
    singular_values(m).max
}

/// Minimises `|m x - f|` through the singular value decomposition of `m`.
///
/// Fails with [`TdoaError::SingularSystem`] when `m` does not have full column
/// rank, i.e. `sigma_min < RANK_TOLERANCE * sigma_max`.
pub fn least_squares_solve(m: &Matrix, f: &Vector) -> Result<Vector> {
    least_squares_with_diagnostics(m, f).map(|(x, _)| x)
}

/// [`least_squares_solve`] that also returns the extreme singular values of
/// `m`.
pub fn least_squares_with_diagnostics(m: &Matrix, f: &Vector) -> Result<(Vector, SingularValues)> {
    if m.nrows() != f.len() {
        return Err(TdoaError::invalid(format!(
            "matrix has {} rows but right-hand side has {} entries",
            m.nrows(),
            f.len()
        )));
    }
    if m.ncols() == 0 {
        return Err(TdoaError::invalid("matrix has no columns"));
    }
    if m.nrows() < m.ncols() {
        return Err(TdoaError::SingularSystem { sigma_min: 0.0 });
    }
    let svd = m.clone().svd(true, true);
    let sv = SingularValues {
        min: svd.singular_values.min(),
        max: svd.singular_values.max(),
    };
    if !sv.min.is_finite() || sv.is_rank_deficient(RANK_TOLERANCE) {
        return Err(TdoaError::SingularSystem { sigma_min: sv.min });
    }
    let x = svd
        .solve(f, 0.0)
        .map_err(|e| TdoaError::invalid(format!("least squares failed: {e}")))?;
    Ok((x, sv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_and_diagonal() {
        let sv = singular_values(&Matrix::identity(2, 2));
        assert!((sv.min - 1.0).abs() < 1e-15 && (sv.max - 1.0).abs() < 1e-15);

        let d = Matrix::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 0.5]);
        assert!((min_singular_value(&d) - 0.5).abs() < 1e-15);
        assert!((max_singular_value(&d) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn consistent_overdetermined_system() {
        let m = Matrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 1.0, 1.0, 1.0]);
        let f = Vector::from_vec(vec![1.0, 1.0, 2.0]);
        let x = least_squares_solve(&m, &f).unwrap();
        // substitution check
        assert!((&m * &x - &f).norm() < 1e-12);
        assert!((x[0] - 1.0).abs() < 1e-12 && (x[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn agrees_with_normal_equations() {
        let m = Matrix::from_row_slice(4, 2, &[1.0, 2.0, -1.0, 0.5, 3.0, -2.0, 0.2, 1.1]);
        let f = Vector::from_vec(vec![0.3, -1.0, 2.0, 0.7]);
        let x = least_squares_solve(&m, &f).unwrap();
        let mtm = m.transpose() * &m;
        let normal = mtm.try_inverse().unwrap() * m.transpose() * &f;
        assert!((x - normal).norm() < 1e-8);
    }

    #[test]
    fn rank_deficient_reports_sigma_min() {
        let m = Matrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, -1.0, -2.0]);
        let f = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        match least_squares_solve(&m, &f) {
            Err(TdoaError::SingularSystem { sigma_min }) => assert!(sigma_min < 1e-12),
            other => panic!("expected singular system, got {other:?}"),
        }
        assert!(matches!(
            least_squares_solve(&Matrix::zeros(3, 2), &Vector::zeros(3)),
            Err(TdoaError::SingularSystem { .. })
        ));
    }

    #[test]
    fn wide_matrix_has_zero_sigma_min() {
        let m = Matrix::from_row_slice(1, 2, &[1.0, -1.0]);
        assert_eq!(min_singular_value(&m), 0.0);
        assert!((max_singular_value(&m) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn dimension_mismatch() {
        assert!(matches!(
            least_squares_solve(&Matrix::identity(2, 2), &Vector::zeros(3)),
            Err(TdoaError::InvalidArgument(_))
        ));
    }
}
