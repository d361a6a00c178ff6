//! Small dense linear-algebra helpers shared by the analysis code.

use nalgebra::DMatrix;

/// `a ⊗ I_m`.
pub fn kron_identity(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    a.kronecker(&DMatrix::identity(m, m))
}

/// Largest eigenvalue modulus of a general square matrix.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// Largest absolute entry.
pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc, (x, y)| acc.max((x - y).abs()))
}

/// Smallest eigenvalue of the symmetric part.
pub fn min_symmetric_eigenvalue(a: &DMatrix<f64>) -> f64 {
    let sym = (a + a.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Copies the `(bi, bj)` block of size `m × m`.
pub fn block(a: &DMatrix<f64>, bi: usize, bj: usize, m: usize) -> DMatrix<f64> {
    a.view((bi * m, bj * m), (m, m)).into_owned()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_radius_of_rotation_and_diagonal() {
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&rot) - 0.5).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.3, -0.9, 0.1]));
        assert!((spectral_radius(&d) - 0.9).abs() < 1e-12);
    }

    #[test]
    fn kron_identity_blocks() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        let k = kron_identity(&a, 3);
        assert_eq!(k.shape(), (6, 6));
        assert_eq!(block(&k, 1, 0, 3), DMatrix::identity(3, 3) * 3.0);
    }
}
