//! Coarsening matrices `Q`, lifting `Q^+`, projector `Π = Q^+ Q`, coarsened
//! adjacency/Laplacian and the restricted spectral approximation constant.

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{build_laplacian, LaplacianKind};
use crate::linalg::{self, sym_max_eigenvalue, ZERO_EIGEN_RTOL};
use crate::seminorm::{SemiNormContext, SpectralBasis};
use crate::sparse::{Csr, SparseSym};

/// A well-mapped, surjective coarsening of `N` nodes into `n` super-nodes.
///
/// Node `i` is mapped to super-node `assignment[i]` with weight
/// `weights[i] = Q[assignment[i], i] > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coarsening {
    assignment: Vec<usize>,
    weights: Vec<f64>,
    cluster_sizes: Vec<usize>,
    uniform: bool,
    q: Csr,
    q_plus: Csr,
}

/// Serialized form: enough to rebuild `Q` exactly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoarseningDoc {
    pub n: usize,
    #[serde(rename = "N")]
    pub num_nodes: usize,
    pub assignment: Vec<usize>,
    pub weights: Vec<f64>,
    pub uniform: bool,
}

impl Coarsening {
    /// Builds `Q` from a node-to-super-node assignment. `weights = None`
    /// gives the uniform coarsening `Q_ki = 1/n_k`.
    pub fn from_partition(assignment: Vec<usize>, weights: Option<Vec<f64>>) -> Result<Self> {
        let big_n = assignment.len();
        let n = assignment.iter().max().map_or(0, |m| m + 1);
        let mut cluster_sizes = vec![0usize; n];
        for &k in &assignment {
            cluster_sizes[k] += 1;
        }
        if let Some(k) = cluster_sizes.iter().position(|&s| s == 0) {
            return Err(Error::NotSurjective(k));
        }
        let uniform_weight = |i: usize| 1.0 / cluster_sizes[assignment[i]] as f64;
        let (weights, uniform) = match weights {
            None => ((0..big_n).map(uniform_weight).collect(), true),
            Some(w) => {
                if w.len() != big_n {
                    return Err(Error::DimensionMismatch {
                        what: "coarsening weights",
                        expected: big_n,
                        found: w.len(),
                    });
                }
                if let Some(i) = w.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
                    return Err(Error::InvalidWeight { node: i, weight: w[i] });
                }
                let uniform = (0..big_n).all(|i| (w[i] - uniform_weight(i)).abs() <= 1e-12 * uniform_weight(i));
                if uniform {
                    ((0..big_n).map(uniform_weight).collect(), true)
                } else {
                    (w, false)
                }
            }
        };

        let q = Csr::from_triplets(
            n,
            big_n,
            &(0..big_n).map(|i| (assignment[i], i, weights[i])).collect::<Vec<_>>(),
        );
        let q_plus = if uniform {
            Csr::from_triplets(big_n, n, &(0..big_n).map(|i| (i, assignment[i], 1.0)).collect::<Vec<_>>())
        } else {
            // Q^+ = Q^T (Q Q^T)^{-1}, and Q Q^T = diag(sum of squared weights)
            let mut sq = vec![0.0; n];
            for i in 0..big_n {
                sq[assignment[i]] += weights[i] * weights[i];
            }
            Csr::from_triplets(
                big_n,
                n,
                &(0..big_n)
                    .map(|i| (i, assignment[i], weights[i] / sq[assignment[i]]))
                    .collect::<Vec<_>>(),
            )
        };
        Ok(Self {
            assignment,
            weights,
            cluster_sizes,
            uniform,
            q,
            q_plus,
        })
    }

    pub fn uniform(assignment: Vec<usize>) -> Result<Self> {
        Self::from_partition(assignment, None)
    }

    pub fn identity(n: usize) -> Self {
        Self::uniform((0..n).collect()).expect("identity partition is surjective")
    }

    pub fn from_doc(doc: &CoarseningDoc) -> Result<Self> {
        if doc.assignment.len() != doc.num_nodes {
            return Err(Error::DimensionMismatch {
                what: "assignment",
                expected: doc.num_nodes,
                found: doc.assignment.len(),
            });
        }
        let c = Self::from_partition(doc.assignment.clone(), Some(doc.weights.clone()))?;
        if c.num_super() != doc.n {
            return Err(Error::DimensionMismatch {
                what: "super-node count",
                expected: doc.n,
                found: c.num_super(),
            });
        }
        Ok(c)
    }

    pub fn to_doc(&self) -> CoarseningDoc {
        CoarseningDoc {
            n: self.num_super(),
            num_nodes: self.num_nodes(),
            assignment: self.assignment.clone(),
            weights: self.weights.clone(),
            uniform: self.uniform,
        }
    }

    /// Number of super-nodes `n`.
    pub fn num_super(&self) -> usize {
        self.cluster_sizes.len()
    }

    /// Number of original nodes `N`.
    pub fn num_nodes(&self) -> usize {
        self.assignment.len()
    }

    /// `r = 1 - n/N`
    pub fn ratio(&self) -> f64 {
        1.0 - self.num_super() as f64 / self.num_nodes() as f64
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn cluster_sizes(&self) -> &[usize] {
        &self.cluster_sizes
    }

    pub fn is_uniform(&self) -> bool {
        self.uniform
    }

    pub fn q(&self) -> &Csr {
        &self.q
    }

    pub fn q_plus(&self) -> &Csr {
        &self.q_plus
    }

    /// `Π = Q^+ Q`, block diagonal over clusters.
    pub fn pi(&self) -> Csr {
        self.q_plus.matmul(&self.q)
    }

    pub fn clusters(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_super()];
        for (i, &k) in self.assignment.iter().enumerate() {
            out[k].push(i);
        }
        out
    }

    fn check(&self, what: &'static str, expected: usize, found: usize) -> Result<()> {
        if expected != found {
            return Err(Error::DimensionMismatch { what, expected, found });
        }
        Ok(())
    }

    /// `x_c = Q x`
    pub fn coarsen_signal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check("fine signal", self.num_nodes(), x.len())?;
        Ok(self.q.mul_vec(x))
    }

    /// `x~ = Q^+ x_c`
    pub fn lift_signal(&self, xc: &[f64]) -> Result<Vec<f64>> {
        self.check("coarse signal", self.num_super(), xc.len())?;
        Ok(self.q_plus.mul_vec(xc))
    }

    /// `Π x`
    pub fn project_signal(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.lift_signal(&self.coarsen_signal(x)?)
    }

    pub fn coarsen_mat(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self.q.mul_dense(x)
    }

    pub fn lift_mat(&self, xc: MatRef<'_, f64>) -> Mat<f64> {
        self.q_plus.mul_dense(xc)
    }

    pub fn project_mat(&self, x: MatRef<'_, f64>) -> Mat<f64> {
        self.lift_mat(self.coarsen_mat(x).as_ref())
    }

    /// Composition: `other` applied after `self` (`Q = Q_other Q_self`).
    /// Weights multiply along the chain.
    pub fn then(&self, other: &Coarsening) -> Result<Coarsening> {
        self.check("chained coarsening", self.num_super(), other.num_nodes())?;
        let assignment: Vec<usize> = self.assignment.iter().map(|&k| other.assignment[k]).collect();
        let weights: Vec<f64> = (0..self.num_nodes())
            .map(|i| self.weights[i] * other.weights[self.assignment[i]])
            .collect();
        Coarsening::from_partition(assignment, Some(weights))
    }

    /// Same partition with uniform weights.
    pub fn to_uniform(&self) -> Coarsening {
        Coarsening::uniform(self.assignment.clone()).expect("partition already validated")
    }
}

/// `A_c = (Q^+)^T A Q^+` (diagonal kept: it carries intra-cluster weight).
pub fn coarsen_adjacency(c: &Coarsening, adjacency: &SparseSym) -> Result<SparseSym> {
    if adjacency.dim() != c.num_nodes() {
        return Err(Error::DimensionMismatch {
            what: "adjacency",
            expected: c.num_nodes(),
            found: adjacency.dim(),
        });
    }
    let lift: Vec<f64> = (0..c.num_nodes()).map(|i| c.q_plus.get(i, c.assignment[i])).collect();
    let triplets: Vec<_> = adjacency
        .iter()
        .map(|(i, j, v)| (c.assignment[i], c.assignment[j], lift[i] * v * lift[j]))
        .collect();
    SparseSym::from_triplets(c.num_super(), &triplets)
}

/// Max-abs residual `||(D(A_c) - A_c) - (Q^+)^T L Q^+||_inf` for uniform
/// coarsenings and the combinatorial Laplacian.
pub fn coarse_laplacian_check(c: &Coarsening, adjacency: &SparseSym, kind: LaplacianKind) -> Result<f64> {
    if !c.is_uniform() {
        return Err(Error::Unsupported(
            "the coarse Laplacian identity only holds for uniform coarsenings".into(),
        ));
    }
    if kind != LaplacianKind::Combinatorial {
        return Err(Error::Unsupported(format!(
            "the coarse Laplacian identity only holds for the combinatorial Laplacian, got {kind}"
        )));
    }
    let a_c = coarsen_adjacency(c, adjacency)?;
    let l_c = build_laplacian(&a_c, LaplacianKind::Combinatorial)?;
    let l = build_laplacian(adjacency, LaplacianKind::Combinatorial)?;
    let projected = c.q_plus.transpose().matmul(l.as_csr()).matmul(&c.q_plus);
    Ok(l_c.add_scaled(1.0, &projected, -1.0).max_abs())
}

/// Restricted spectral approximation constant and the generic bound.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RsaReport {
    pub epsilon: f64,
    #[serde(rename = "K")]
    pub subspace_dim: usize,
    pub finite_bound: f64,
}

/// `sup_{x in R, ||x||_L = 1} ||x - Πx||_L`, computed as the square root of
/// the top generalized eigenvalue of `(W^T L W, V^T L V)` with `W = (I-Π)V`.
pub fn rsa_constant(c: &Coarsening, basis: &SpectralBasis, ctx: &SemiNormContext) -> Result<RsaReport> {
    if basis.ambient_dim() != c.num_nodes() || ctx.dim() != c.num_nodes() {
        return Err(Error::DimensionMismatch {
            what: "basis rows",
            expected: c.num_nodes(),
            found: basis.ambient_dim(),
        });
    }
    let v = basis.vectors.as_ref();
    let l = ctx.laplacian().as_csr();
    let w = v - c.project_mat(v);
    let mut gram = v.transpose() * l.mul_dense(v);
    let mut num = w.transpose() * l.mul_dense(w.as_ref());
    linalg::symmetrize(&mut gram);
    linalg::symmetrize(&mut num);

    let eig = linalg::sym_eigen(gram.as_ref())?;
    let top = eig.values.last().copied().unwrap_or(0.0);
    let low = eig.values.first().copied().unwrap_or(0.0);
    if basis.dim() > 0 && !(low > ZERO_EIGEN_RTOL * top.max(ctx.lambda_max())) {
        return Err(Error::SingularGram(low));
    }
    let inv_sqrt = linalg::spectral_function(&eig, |x| 1.0 / x.sqrt());
    let mut whitened = &inv_sqrt * &num * &inv_sqrt;
    linalg::symmetrize(&mut whitened);
    let lambda = sym_max_eigenvalue(whitened.as_ref());
    Ok(RsaReport {
        epsilon: lambda.max(0.0).sqrt(),
        subspace_dim: basis.dim(),
        finite_bound: ctx.condition_sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::toy;

    #[test]
    fn six_node_matrices() {
        let c = toy::six_node_coarsening();
        let q = c.q().to_dense();
        assert_eq!(q[(0, 0)], 0.5);
        assert_eq!(q[(0, 1)], 0.5);
        assert_eq!(q[(1, 2)], 1.0 / 3.0);
        assert_eq!(q[(2, 5)], 1.0);
        let qp = c.q_plus().to_dense();
        for i in 0..6 {
            for k in 0..3 {
                let expected = if c.assignment()[i] == k { 1.0 } else { 0.0 };
                assert_eq!(qp[(i, k)], expected);
            }
        }
    }

    #[test]
    fn identity_partition() {
        let c = Coarsening::identity(4);
        assert_eq!(c.q().to_dense(), Mat::<f64>::identity(4, 4));
        assert_eq!(c.q_plus().to_dense(), Mat::<f64>::identity(4, 4));
        assert_eq!(c.pi().to_dense(), Mat::<f64>::identity(4, 4));
    }

    #[test]
    fn non_uniform_pair() {
        let c = Coarsening::from_partition(vec![0, 0], Some(vec![0.3, 0.7])).unwrap();
        assert!(!c.is_uniform());
        let s = 0.3f64 * 0.3 + 0.7 * 0.7;
        assert!((c.q_plus().get(0, 0) - 0.3 / s).abs() < 1e-15);
        assert!((c.q_plus().get(1, 0) - 0.7 / s).abs() < 1e-15);
        let pi = c.pi().to_dense();
        // rank one: the 2x2 determinant vanishes
        assert!((pi[(0, 0)] * pi[(1, 1)] - pi[(0, 1)] * pi[(1, 0)]).abs() < 1e-15);
        let qqp = c.q().matmul(c.q_plus()).to_dense();
        assert!((qqp[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn empty_supernode_is_rejected() {
        assert!(matches!(Coarsening::uniform(vec![0, 2, 2]), Err(Error::NotSurjective(1))));
        assert!(matches!(
            Coarsening::from_partition(vec![0, 0], Some(vec![1.0, 0.0])),
            Err(Error::InvalidWeight { node: 1, .. })
        ));
    }

    #[test]
    fn explicit_uniform_weights_are_detected() {
        let c = Coarsening::from_partition(vec![0, 0, 1], Some(vec![0.5, 0.5, 1.0])).unwrap();
        assert!(c.is_uniform());
    }

    #[test]
    fn signals_on_six_node_example() {
        let c = toy::six_node_coarsening();
        let xc = c.coarsen_signal(&[1.0, 3.0, 0.0, 0.0, 0.0, 5.0]).unwrap();
        assert_eq!(xc, vec![2.0, 0.0, 5.0]);
        assert_eq!(c.lift_signal(&xc).unwrap(), vec![2.0, 2.0, 0.0, 0.0, 0.0, 5.0]);
        assert_eq!(c.project_signal(&[1.0, -1.0, 0.0, 0.0, 0.0, 0.0]).unwrap(), vec![0.0; 6]);
        let ones = c.project_signal(&[1.0; 6]).unwrap();
        for v in ones {
            assert!((v - 1.0).abs() < 1e-15);
        }
        assert!(c.coarsen_signal(&[1.0; 5]).is_err());
    }

    #[test]
    fn coarsened_adjacency_counts_cross_edges() {
        let g = Graph::from_edges(4, &[(0, 2)]).unwrap();
        let c = Coarsening::uniform(vec![0, 0, 1, 1]).unwrap();
        let a_c = coarsen_adjacency(&c, g.adjacency()).unwrap();
        assert_eq!(a_c.get(0, 1), 1.0);
        let id = coarsen_adjacency(&Coarsening::identity(4), g.adjacency()).unwrap();
        assert_eq!(&id, g.adjacency());
    }

    #[test]
    fn laplacian_check_rejects_unsupported_inputs() {
        let g = toy::six_node_graph();
        let c = Coarsening::from_partition(vec![0, 0, 1, 1, 1, 2], Some(vec![0.3, 0.7, 1.0, 1.0, 1.0, 1.0])).unwrap();
        assert!(coarse_laplacian_check(&c, g.adjacency(), LaplacianKind::Combinatorial).is_err());
        let u = toy::six_node_coarsening();
        assert!(coarse_laplacian_check(&u, g.adjacency(), LaplacianKind::NormalizedSym).is_err());
        assert_eq!(
            coarse_laplacian_check(&Coarsening::identity(6), g.adjacency(), LaplacianKind::Combinatorial).unwrap(),
            0.0
        );
    }

    #[test]
    fn rsa_identity_is_zero_and_singular_gram_errors() {
        let g = toy::six_node_graph();
        let ctx = SemiNormContext::new(g.laplacian(LaplacianKind::Combinatorial).unwrap()).unwrap();
        let basis = ctx.nonkernel_subspace(2).unwrap();
        let rep = rsa_constant(&Coarsening::identity(6), &basis, &ctx).unwrap();
        assert!(rep.epsilon < 1e-7);
        let with_kernel = ctx.spectral_subspace(2).unwrap();
        assert!(matches!(
            rsa_constant(&toy::six_node_coarsening(), &with_kernel, &ctx),
            Err(Error::SingularGram(_))
        ));
    }

    #[test]
    fn rsa_one_dimensional_is_a_ratio() {
        let g = toy::six_node_graph();
        let ctx = SemiNormContext::new(g.laplacian(LaplacianKind::Combinatorial).unwrap()).unwrap();
        let basis = ctx.nonkernel_subspace(1).unwrap();
        let c = toy::six_node_coarsening();
        let v: Vec<f64> = basis.vectors.col(0).iter().copied().collect();
        let pv = c.project_signal(&v).unwrap();
        let r: Vec<f64> = v.iter().zip(&pv).map(|(a, b)| a - b).collect();
        let expected = ctx.seminorm(&r).unwrap() / ctx.seminorm(&v).unwrap();
        let rep = rsa_constant(&c, &basis, &ctx).unwrap();
        assert!((rep.epsilon - expected).abs() < 1e-10 * expected.max(1.0));
    }

    #[test]
    fn doc_round_trip() {
        let c = Coarsening::from_partition(vec![1, 0, 1], Some(vec![0.25, 1.0, 0.75])).unwrap();
        let json = serde_json::to_string(&c.to_doc()).unwrap();
        assert!(json.contains("\"N\":3"));
        let back = Coarsening::from_doc(&serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(back, c);
    }

    #[test]
    fn chaining_multiplies_weights() {
        let first = Coarsening::uniform(vec![0, 0, 1, 2]).unwrap();
        let second = Coarsening::uniform(vec![0, 0, 1]).unwrap();
        let both = first.then(&second).unwrap();
        assert_eq!(both.assignment(), &[0, 0, 0, 1]);
        assert_eq!(both.weights(), &[0.25, 0.25, 0.5, 1.0]);
        assert!(!both.is_uniform());
        assert!(both.to_uniform().is_uniform());
    }
}
