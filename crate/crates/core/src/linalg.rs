//! Small dense helpers on top of faer.

use faer::{Mat, MatRef, Side};

use crate::error::{Error, Result};

/// Relative threshold under which an eigenvalue is treated as an exact zero.
pub const ZERO_EIGEN_RTOL: f64 = 1e-8;

/// Symmetric eigendecomposition with ascending eigenvalues.
#[derive(Clone, Debug)]
pub struct SymEigen {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

/// Eigendecomposition of the symmetric matrix `m` (lower triangle is read).
/// Each eigenvector is flipped so that its first non-negligible component is
/// positive.
pub fn sym_eigen(m: MatRef<'_, f64>) -> Result<SymEigen> {
    let n = m.nrows();
    if n == 0 {
        return Ok(SymEigen {
            values: Vec::new(),
            vectors: Mat::zeros(0, 0),
        });
    }
    let evd = m
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Eigen(format!("{e:?}")))?;
    let values: Vec<f64> = evd.S().column_vector().iter().copied().collect();
    let mut vectors = evd.U().to_owned();
    for j in 0..n {
        let col_max = (0..n).fold(0.0_f64, |acc, i| acc.max(vectors[(i, j)].abs()));
        let first = (0..n).find(|&i| vectors[(i, j)].abs() > 1e-10 * col_max);
        if let Some(i) = first {
            if vectors[(i, j)] < 0.0 {
                for r in 0..n {
                    vectors[(r, j)] = -vectors[(r, j)];
                }
            }
        }
    }
    Ok(SymEigen { values, vectors })
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_max_eigenvalue(m: MatRef<'_, f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.self_adjoint_eigenvalues(Side::Lower)
        .ok()
        .and_then(|v| v.last().copied())
        .unwrap_or(f64::NAN)
}

/// Operator 2-norm (largest singular value).
pub fn spectral_norm(m: MatRef<'_, f64>) -> f64 {
    if m.nrows() == 0 || m.ncols() == 0 {
        return 0.0;
    }
    let gram = if m.nrows() >= m.ncols() {
        m.transpose() * m
    } else {
        m * m.transpose()
    };
    sym_max_eigenvalue(gram.as_ref()).max(0.0).sqrt()
}

/// `U f(Λ) U^T` for a symmetric eigendecomposition.
pub fn spectral_function(eig: &SymEigen, f: impl Fn(f64) -> f64) -> Mat<f64> {
    let n = eig.values.len();
    let scaled = Mat::from_fn(n, n, |i, j| eig.vectors[(i, j)] * f(eig.values[j]));
    &scaled * eig.vectors.transpose()
}

/// Symmetric pseudo-inverse square root, zeroing eigenvalues below
/// `ZERO_EIGEN_RTOL` times the largest one.
pub fn sym_pinv_sqrt(m: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let eig = sym_eigen(m)?;
    let top = eig.values.iter().fold(0.0_f64, |a, &v| a.max(v.abs()));
    let cutoff = ZERO_EIGEN_RTOL * top;
    Ok(spectral_function(&eig, |v| if v > cutoff { 1.0 / v.sqrt() } else { 0.0 }))
}

pub fn symmetrize(m: &mut Mat<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spectral_norm_of_diagonal() {
        let m = Mat::from_fn(3, 3, |i, j| if i == j { [1.0, -4.0, 2.0][i] } else { 0.0 });
        assert!((spectral_norm(m.as_ref()) - 4.0).abs() < 1e-12);
    }

    #[test]
    fn spectral_norm_of_wide_matrix() {
        let m = Mat::from_fn(1, 2, |_, j| [3.0, 4.0][j]);
        assert!((spectral_norm(m.as_ref()) - 5.0).abs() < 1e-12);
    }

    #[test]
    fn eigenvectors_have_positive_leading_component() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { -1.0 });
        let eig = sym_eigen(m.as_ref()).unwrap();
        for j in 0..2 {
            assert!(eig.vectors[(0, j)] > 0.0);
        }
        assert!((eig.values[0] - 1.0).abs() < 1e-12);
        assert!((eig.values[1] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pinv_sqrt_drops_null_space() {
        let m = Mat::from_fn(2, 2, |i, j| if i == j { [0.0, 4.0][i] } else { 0.0 });
        let p = sym_pinv_sqrt(m.as_ref()).unwrap();
        assert!(p[(0, 0)].abs() < 1e-15);
        assert!((p[(1, 1)] - 0.5).abs() < 1e-15);
    }
}
