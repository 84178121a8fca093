//! Small dense symmetric/SPD helpers shared by the model and geometry code.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Relative symmetry tolerance for SPD inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;
/// Eigenvalues at or below this floor reject the matrix instead of clamping.
pub const EIGENVALUE_FLOOR: f64 = 1e-12;

/// Checks symmetry (relative 1e-12) and positive definiteness; rejects
/// instead of clamping when the smallest eigenvalue hits the floor.
pub fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::geometry("matrix is not square"));
    }
    let scale = m.amax().max(1.0);
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > SYMMETRY_TOL * scale {
                return Err(Error::geometry(format!(
                    "matrix not symmetric at ({i},{j}): {} vs {}",
                    m[(i, j)],
                    m[(j, i)]
                )));
            }
        }
    }
    let eigs = sym_eigenvalues(m);
    let min = eigs.iter().copied().fold(f64::INFINITY, f64::min);
    if !(min > EIGENVALUE_FLOOR) {
        return Err(Error::geometry(format!(
            "matrix not positive definite: min eigenvalue {min:.3e}"
        )));
    }
    Ok(())
}

pub fn sym_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().iter().copied().collect()
}

/// Eigendecomposition of a symmetric matrix: (eigenvalues, eigenvectors).
pub fn sym_eigen(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let sym = (m + m.transpose()) * 0.5;
    let se = sym.symmetric_eigen();
    (se.eigenvalues, se.eigenvectors)
}

/// f applied to the spectrum: U f(D) Uᵀ.
pub fn spd_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let (vals, vecs) = sym_eigen(m);
    let d = DMatrix::from_diagonal(&vals.map(f));
    &vecs * d * vecs.transpose()
}

pub fn spd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    spd_map(m, f64::sqrt)
}

pub fn spd_inv_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    spd_map(m, |x| 1.0 / x.sqrt())
}

/// Log-eigenvalues of X^{-1/2} Y X^{-1/2}; the affine-invariant distance is
/// their Euclidean norm.
pub fn whitened_log_eigs(x: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DVector<f64>> {
    check_spd(x)?;
    check_spd(y)?;
    let xi = spd_inv_sqrt(x);
    let w = &xi * y * &xi;
    let (vals, _) = sym_eigen(&w);
    if vals.iter().any(|&v| v <= 0.0) {
        return Err(Error::geometry("congruence produced a non-positive eigenvalue"));
    }
    Ok(vals.map(f64::ln))
}

/// Affine-invariant distance of Λ to the identity, ‖log eig Λ‖₂.
pub fn rao_fisher_to_identity(lambda: &DMatrix<f64>) -> Result<f64> {
    check_spd(lambda)?;
    let norm2: f64 = sym_eigenvalues(lambda).iter().map(|v| v.ln().powi(2)).sum();
    Ok(norm2.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rejects_asymmetric_and_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.2, 1.0]);
        assert!(check_spd(&m).is_err());
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        assert!(check_spd(&m).is_err());
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]);
        let s = spd_sqrt(&m);
        let back = &s * &s;
        assert_relative_eq!(back[(0, 1)], 0.3, max_relative = 1e-12);
        assert_relative_eq!(back[(0, 0)], 2.0, max_relative = 1e-12);
    }

    #[test]
    fn identity_distance_is_log_scalar_in_1d() {
        let m = DMatrix::from_element(1, 1, std::f64::consts::E.powi(2));
        assert_relative_eq!(rao_fisher_to_identity(&m).unwrap(), 2.0, max_relative = 1e-12);
    }
}
