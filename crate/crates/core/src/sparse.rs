//! Compressed sparse row matrices and the symmetric wrapper used for
//! adjacency matrices and Laplacians.

use faer::{Mat, MatRef};

use crate::error::{Error, Result};

/// General sparse matrix in CSR layout with sorted column indices per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Csr {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl Csr {
    /// Builds a matrix from `(row, col, value)` triplets. Duplicate
    /// coordinates are summed; entries that sum to exactly zero are dropped.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nrows];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            rows[i].push((j, v));
        }
        let mut indptr = Vec::with_capacity(nrows + 1);
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        indptr.push(0);
        for mut row in rows {
            // stable sort keeps summation order equal to insertion order
            row.sort_by_key(|&(j, _)| j);
            let mut iter = row.into_iter().peekable();
            while let Some((j, mut v)) = iter.next() {
                while let Some(&(j2, v2)) = iter.peek() {
                    if j2 != j {
                        break;
                    }
                    v += v2;
                    iter.next();
                }
                if v != 0.0 {
                    indices.push(j);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_diagonal(&vec![1.0; n])
    }

    pub fn from_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        let triplets: Vec<_> = diag.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        Self::from_triplets(n, n, &triplets)
    }

    pub fn from_dense(m: MatRef<'_, f64>) -> Self {
        let mut triplets = Vec::new();
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let v = m[(i, j)];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), &triplets)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let range = self.indptr[i]..self.indptr[i + 1];
        (&self.indices[range.clone()], &self.values[range])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.iter().collect()
    }

    pub fn transpose(&self) -> Self {
        let triplets: Vec<_> = self.iter().map(|(i, j, v)| (j, i, v)).collect();
        Self::from_triplets(self.ncols, self.nrows, &triplets)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows.min(self.ncols)).map(|i| self.get(i, i)).collect()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.nrows).map(|i| self.row(i).1.iter().sum()).collect()
    }

    /// Largest |a_ij - a_ji| over all stored entries.
    pub fn asymmetry(&self) -> f64 {
        if self.nrows != self.ncols {
            return f64::INFINITY;
        }
        self.iter()
            .map(|(i, j, v)| (v - self.get(j, i)).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn without_diagonal(&self) -> Self {
        let triplets: Vec<_> = self.iter().filter(|&(i, j, _)| i != j).collect();
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// `alpha * self + beta * other`.
    pub fn add_scaled(&self, alpha: f64, other: &Csr, beta: f64) -> Self {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let triplets: Vec<_> = self
            .iter()
            .map(|(i, j, v)| (i, j, alpha * v))
            .chain(other.iter().map(|(i, j, v)| (i, j, beta * v)))
            .collect();
        Self::from_triplets(self.nrows, self.ncols, &triplets)
    }

    /// `diag(left) * self * diag(right)`.
    pub fn scale(&self, left: &[f64], right: &[f64]) -> Self {
        let mut out = self.clone();
        for i in 0..self.nrows {
            for p in self.indptr[i]..self.indptr[i + 1] {
                out.values[p] *= left[i] * right[self.indices[p]];
            }
        }
        out
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.ncols, "mul_vec dimension mismatch");
        (0..self.nrows)
            .map(|i| {
                let (cols, vals) = self.row(i);
                cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum()
            })
            .collect()
    }

    pub fn mul_dense(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        assert_eq!(x.nrows(), self.ncols, "mul_dense dimension mismatch");
        let mut out = Mat::<f64>::zeros(self.nrows, x.ncols());
        for c in 0..x.ncols() {
            for i in 0..self.nrows {
                let (cols, vals) = self.row(i);
                let mut acc = 0.0;
                for (&j, &v) in cols.iter().zip(vals) {
                    acc += v * x[(j, c)];
                }
                out[(i, c)] = acc;
            }
        }
        out
    }

    /// Sparse-sparse product.
    pub fn matmul(&self, other: &Csr) -> Self {
        assert_eq!(self.ncols, other.nrows, "matmul dimension mismatch");
        let mut triplets = Vec::new();
        let mut acc = vec![0.0; other.ncols];
        let mut touched = vec![false; other.ncols];
        let mut cols_seen = Vec::new();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&k, &a) in cols.iter().zip(vals) {
                let (cols2, vals2) = other.row(k);
                for (&j, &b) in cols2.iter().zip(vals2) {
                    if !touched[j] {
                        touched[j] = true;
                        cols_seen.push(j);
                    }
                    acc[j] += a * b;
                }
            }
            cols_seen.sort_unstable();
            for &j in &cols_seen {
                triplets.push((i, j, acc[j]));
                acc[j] = 0.0;
                touched[j] = false;
            }
            cols_seen.clear();
        }
        Self::from_triplets(self.nrows, other.ncols, &triplets)
    }

    pub fn to_dense(&self) -> Mat<f64> {
        let mut m = Mat::<f64>::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] = v;
        }
        m
    }

    /// Principal submatrix restricted to `keep` (in the given order).
    pub fn principal_submatrix(&self, keep: &[usize]) -> Self {
        let mut map = vec![usize::MAX; self.ncols];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let mut triplets = Vec::new();
        for (new_i, &old_i) in keep.iter().enumerate() {
            let (cols, vals) = self.row(old_i);
            for (&j, &v) in cols.iter().zip(vals) {
                if map[j] != usize::MAX {
                    triplets.push((new_i, map[j], v));
                }
            }
        }
        Self::from_triplets(keep.len(), keep.len(), &triplets)
    }
}

/// Square symmetric sparse matrix with finite entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSym(Csr);

impl SparseSym {
    /// Validates symmetry up to `1e-12 * max|a_ij|` and stores the exact
    /// symmetrization `(M + M^T) / 2`.
    pub fn new(m: Csr) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::DimensionMismatch {
                what: "square matrix",
                expected: m.nrows(),
                found: m.ncols(),
            });
        }
        if let Some((i, j, _)) = m.iter().find(|(_, _, v)| !v.is_finite()) {
            return Err(Error::NonFinite(i, j));
        }
        let asym = m.asymmetry();
        if asym > 1e-12 * m.max_abs().max(f64::MIN_POSITIVE) {
            return Err(Error::NotSymmetric(asym));
        }
        if asym == 0.0 {
            return Ok(Self(m));
        }
        let t = m.transpose();
        Ok(Self(m.add_scaled(0.5, &t, 0.5)))
    }

    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        Self::new(Csr::from_triplets(n, n, triplets))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_csr(&self) -> &Csr {
        &self.0
    }

    pub fn into_csr(self) -> Csr {
        self.0
    }
}

impl std::ops::Deref for SparseSym {
    type Target = Csr;

    fn deref(&self) -> &Csr {
        &self.0
    }
}

/// Anything that can be applied to a dense block of column vectors.
pub trait LinearOperator {
    fn shape(&self) -> (usize, usize);
    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64>;
    fn to_dense(&self) -> Mat<f64>;
}

impl LinearOperator for Csr {
    fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self.mul_dense(x)
    }

    fn to_dense(&self) -> Mat<f64> {
        Csr::to_dense(self)
    }
}

impl LinearOperator for SparseSym {
    fn shape(&self) -> (usize, usize) {
        (self.dim(), self.dim())
    }

    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self.0.mul_dense(x)
    }

    fn to_dense(&self) -> Mat<f64> {
        self.0.to_dense()
    }
}

impl LinearOperator for Mat<f64> {
    fn shape(&self) -> (usize, usize) {
        (self.nrows(), self.ncols())
    }

    fn apply(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self * x
    }

    fn to_dense(&self) -> Mat<f64> {
        self.clone()
    }
}

pub(crate) fn col_vec(x: &[f64]) -> Mat<f64> {
    Mat::from_fn(x.len(), 1, |i, _| x[i])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_zeros_dropped() {
        let m = Csr::from_triplets(2, 2, &[(0, 1, 1.0), (0, 1, 2.0), (1, 0, 1.0), (1, 0, -1.0)]);
        assert_eq!(m.get(0, 1), 3.0);
        assert_eq!(m.nnz(), 1);
    }

    #[test]
    fn matmul_matches_dense() {
        let a = Csr::from_triplets(2, 3, &[(0, 0, 1.0), (0, 2, 2.0), (1, 1, 3.0)]);
        let b = Csr::from_triplets(3, 2, &[(0, 1, 4.0), (1, 0, 5.0), (2, 0, 6.0), (2, 1, 1.0)]);
        let sparse = a.matmul(&b).to_dense();
        let dense = a.to_dense() * b.to_dense();
        assert!((&sparse - &dense).norm_max() == 0.0);
    }

    #[test]
    fn sparse_sym_rejects_asymmetric() {
        let m = Csr::from_triplets(2, 2, &[(0, 1, 1.0)]);
        assert!(matches!(SparseSym::new(m), Err(Error::NotSymmetric(_))));
    }

    #[test]
    fn principal_submatrix_reindexes() {
        let m = Csr::from_triplets(3, 3, &[(0, 2, 1.0), (2, 0, 1.0), (1, 1, 5.0)]);
        let s = m.principal_submatrix(&[2, 0]);
        assert_eq!(s.get(0, 1), 1.0);
        assert_eq!(s.get(1, 0), 1.0);
        assert_eq!(s.nnz(), 2);
    }
}
