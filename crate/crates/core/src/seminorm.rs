//! L-seminorm machinery: `||x||_L`, `||M||_L = ||L^{1/2} M L^{-1/2}||`,
//! spectral subspaces and subspace-preservation checks.
//!
//! Everything here uses a full dense eigendecomposition of `L`, which keeps
//! results deterministic and exact up to rounding for graphs of a few
//! thousand nodes.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};
use crate::linalg::{self, spectral_function, spectral_norm, SymEigen, ZERO_EIGEN_RTOL};
use crate::sparse::{LinearOperator, SparseSym};

/// A p.s.d. matrix `L` together with its cached spectral data.
#[derive(Clone, Debug)]
pub struct SemiNormContext {
    laplacian: SparseSym,
    eigenvalues: Vec<f64>,
    eigenvectors: Mat<f64>,
    kernel_dim: usize,
    sqrt_l: Mat<f64>,
    pinv_sqrt_l: Mat<f64>,
    lambda_min: f64,
    lambda_max: f64,
}

/// Orthonormal basis of a spectral subspace together with its eigenvalues.
#[derive(Clone, Debug)]
pub struct SpectralBasis {
    pub vectors: Mat<f64>,
    pub eigenvalues: Vec<f64>,
}

impl SpectralBasis {
    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn ambient_dim(&self) -> usize {
        self.vectors.nrows()
    }

    /// Orthogonal projection `V V^T x`.
    pub fn project(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        let coeffs = self.vectors.transpose() * x;
        &self.vectors * &coeffs
    }
}

impl SemiNormContext {
    pub fn new(laplacian: SparseSym) -> Result<Self> {
        let SymEigen {
            values: mut eigenvalues,
            vectors: eigenvectors,
        } = linalg::sym_eigen(laplacian.to_dense().as_ref())?;
        let n = eigenvalues.len();
        let top = eigenvalues.last().copied().unwrap_or(0.0).max(0.0);
        let cutoff = ZERO_EIGEN_RTOL * top;
        if let Some(&low) = eigenvalues.first() {
            if low < -cutoff {
                return Err(Error::NotPsd {
                    eigenvalue: low,
                    lambda_max: top,
                });
            }
        }
        let mut kernel_dim = 0;
        for v in eigenvalues.iter_mut() {
            if *v <= cutoff {
                *v = 0.0;
                kernel_dim += 1;
            }
        }
        let eig = SymEigen {
            values: eigenvalues,
            vectors: eigenvectors,
        };
        let sqrt_l = spectral_function(&eig, f64::sqrt);
        let pinv_sqrt_l = spectral_function(&eig, |v| if v > 0.0 { 1.0 / v.sqrt() } else { 0.0 });
        let (lambda_min, lambda_max) = if kernel_dim < n {
            (eig.values[kernel_dim], eig.values[n - 1])
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            laplacian,
            eigenvalues: eig.values,
            eigenvectors: eig.vectors,
            kernel_dim,
            sqrt_l,
            pinv_sqrt_l,
            lambda_min,
            lambda_max,
        })
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn laplacian(&self) -> &SparseSym {
        &self.laplacian
    }

    /// Ascending eigenvalues, with values under the zero threshold set to 0.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> MatRef<'_, f64> {
        self.eigenvectors.as_ref()
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_dim
    }

    pub fn kernel_basis(&self) -> MatRef<'_, f64> {
        self.eigenvectors.as_ref().subcols(0, self.kernel_dim)
    }

    pub fn sqrt_l(&self) -> MatRef<'_, f64> {
        self.sqrt_l.as_ref()
    }

    pub fn pinv_sqrt_l(&self) -> MatRef<'_, f64> {
        self.pinv_sqrt_l.as_ref()
    }

    /// Smallest non-zero eigenvalue.
    pub fn lambda_min(&self) -> f64 {
        self.lambda_min
    }

    pub fn lambda_max(&self) -> f64 {
        self.lambda_max
    }

    /// `sqrt(lambda_max / lambda_min)`, the generic finiteness bound.
    pub fn condition_sqrt(&self) -> f64 {
        (self.lambda_max / self.lambda_min).sqrt()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "signal length",
                expected: self.dim(),
                found: len,
            });
        }
        Ok(())
    }

    /// `sqrt(x^T L x)`, clamping tiny negative quadratic forms to zero.
    pub fn seminorm(&self, x: &[f64]) -> Result<f64> {
        self.check_len(x.len())?;
        let lx = self.laplacian.mul_vec(x);
        let q: f64 = x.iter().zip(&lx).map(|(a, b)| a * b).sum();
        Ok(q.max(0.0).sqrt())
    }

    /// Seminorm of one column of a dense matrix.
    pub fn column_seminorm(&self, x: MatRef<'_, f64>, col: usize) -> Result<f64> {
        let v: Vec<f64> = x.col(col).iter().copied().collect();
        self.seminorm(&v)
    }

    /// `sum_i ||X_{:,i}||_L`.
    pub fn columns_seminorm(&self, x: MatRef<'_, f64>) -> Result<f64> {
        self.check_len(x.nrows())?;
        (0..x.ncols()).map(|j| self.column_seminorm(x, j)).sum()
    }

    /// `||L^{1/2} M L^{-1/2}||` (largest singular value).
    pub fn operator_seminorm<M: LinearOperator + ?Sized>(&self, m: &M) -> Result<f64> {
        let (r, c) = m.shape();
        if r != self.dim() || c != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "operator size",
                expected: self.dim(),
                found: if r != self.dim() { r } else { c },
            });
        }
        let right = m.apply(self.pinv_sqrt_l.as_ref());
        let conj = &self.sqrt_l * &right;
        Ok(spectral_norm(conj.as_ref()))
    }

    /// Eigenvectors for the `k` smallest eigenvalues (kernel included).
    pub fn spectral_subspace(&self, k: usize) -> Result<SpectralBasis> {
        self.eigen_range(0, k)
    }

    /// Eigenvectors for the `k` smallest non-zero eigenvalues.
    pub fn nonkernel_subspace(&self, k: usize) -> Result<SpectralBasis> {
        self.eigen_range(self.kernel_dim, k)
    }

    /// The `k` lowest eigenvectors with kernel directions dropped: on the
    /// kernel the seminorm vanishes, so they never change a supremum over
    /// unit-seminorm signals of a kernel-preserving projection.
    pub fn preserved_subspace(&self, k: usize) -> Result<SpectralBasis> {
        self.eigen_range(self.kernel_dim, k.saturating_sub(self.kernel_dim))
    }

    fn eigen_range(&self, start: usize, k: usize) -> Result<SpectralBasis> {
        if start + k > self.dim() {
            return Err(Error::InvalidConfig(format!(
                "requested {k} eigenvectors from index {start} but dimension is {}",
                self.dim()
            )));
        }
        Ok(SpectralBasis {
            vectors: self.eigenvectors.as_ref().subcols(start, k).to_owned(),
            eigenvalues: self.eigenvalues[start..start + k].to_vec(),
        })
    }
}

/// `||(I - B B^T) M B||` for an orthonormal basis `B`: zero exactly when
/// `M` maps span(B) into itself.
pub fn check_preserving<M: LinearOperator + ?Sized>(m: &M, basis: MatRef<'_, f64>) -> f64 {
    if basis.ncols() == 0 {
        return 0.0;
    }
    let mb = m.apply(basis);
    let coeffs = basis.transpose() * &mb;
    let leak = &mb - basis * &coeffs;
    spectral_norm(leak.as_ref())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{Graph, LaplacianKind};

    fn diag(values: &[f64]) -> SparseSym {
        let t: Vec<_> = values.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseSym::from_triplets(values.len(), &t).unwrap()
    }

    #[test]
    fn identity_context() {
        let ctx = SemiNormContext::new(diag(&[1.0, 1.0, 1.0])).unwrap();
        assert_eq!(ctx.kernel_dim(), 0);
        assert!((ctx.lambda_min() - 1.0).abs() < 1e-14);
        assert!((ctx.lambda_max() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn diagonal_with_kernel() {
        let ctx = SemiNormContext::new(diag(&[0.0, 2.0])).unwrap();
        assert_eq!(ctx.kernel_dim(), 1);
        let k = ctx.kernel_basis();
        assert!((k[(0, 0)].abs() - 1.0).abs() < 1e-14 && k[(1, 0)].abs() < 1e-14);
        let s = ctx.sqrt_l();
        assert!(s[(0, 0)].abs() < 1e-14 && (s[(1, 1)] - 2f64.sqrt()).abs() < 1e-14);
        let p = ctx.pinv_sqrt_l();
        assert!(p[(0, 0)].abs() < 1e-14 && (p[(1, 1)] - 1.0 / 2f64.sqrt()).abs() < 1e-14);
        assert!((ctx.seminorm(&[0.0, 1.0]).unwrap() - 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn rejects_indefinite() {
        let l = SparseSym::from_triplets(2, &[(0, 0, -1.0), (1, 1, 1.0)]).unwrap();
        assert!(matches!(SemiNormContext::new(l), Err(Error::NotPsd { .. })));
    }

    #[test]
    fn constant_vector_has_zero_seminorm() {
        let g = Graph::from_edges(4, &[(0, 1), (1, 2), (2, 3)]).unwrap();
        let ctx = SemiNormContext::new(g.laplacian(LaplacianKind::Combinatorial).unwrap()).unwrap();
        assert_eq!(ctx.kernel_dim(), 1);
        assert!(ctx.seminorm(&[3.0; 4]).unwrap() < 1e-7);
        let v1 = ctx.spectral_subspace(1).unwrap();
        for i in 0..4 {
            assert!((v1.vectors[(i, 0)] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn operator_seminorm_scaling_and_identity() {
        let ctx = SemiNormContext::new(diag(&[1.0, 3.0])).unwrap();
        let two = Mat::from_fn(2, 2, |i, j| if i == j { 2.0 } else { 0.0 });
        assert!((ctx.operator_seminorm(&two).unwrap() - 2.0).abs() < 1e-12);
        // with a kernel L^{1/2} L^{-1/2} is a projector, still of norm 1
        let ctx0 = SemiNormContext::new(diag(&[0.0, 3.0])).unwrap();
        let id = Mat::<f64>::identity(2, 2);
        assert!((ctx0.operator_seminorm(&id).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn columns_seminorm_homogeneity() {
        let ctx = SemiNormContext::new(diag(&[1.0, 2.0, 0.5])).unwrap();
        let x = [0.3, -1.0, 2.0];
        let one = Mat::from_fn(3, 1, |i, _| x[i]);
        let two = Mat::from_fn(3, 2, |i, j| x[i] * (j + 1) as f64);
        let s = ctx.seminorm(&x).unwrap();
        assert!((ctx.columns_seminorm(one.as_ref()).unwrap() - s).abs() < 1e-14);
        assert!((ctx.columns_seminorm(two.as_ref()).unwrap() - 3.0 * s).abs() < 1e-13);
        assert_eq!(ctx.columns_seminorm(Mat::<f64>::zeros(3, 2).as_ref()).unwrap(), 0.0);
    }

    #[test]
    fn seminorm_dimension_mismatch() {
        let ctx = SemiNormContext::new(diag(&[1.0, 2.0])).unwrap();
        assert!(matches!(ctx.seminorm(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn identity_preserves_everything() {
        let ctx = SemiNormContext::new(diag(&[1.0, 2.0, 3.0])).unwrap();
        let b = ctx.spectral_subspace(2).unwrap();
        assert_eq!(check_preserving(&Mat::<f64>::identity(3, 3), b.vectors.as_ref()), 0.0);
    }
}
