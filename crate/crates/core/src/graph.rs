//! Graph container plus Laplacian and propagation-matrix construction.

use std::fmt;
use std::str::FromStr;

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::{Csr, SparseSym};

/// Train/validation/test node masks.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        for (what, m) in [("train mask", &self.train), ("val mask", &self.val), ("test mask", &self.test)] {
            if m.len() != n {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: n,
                    found: m.len(),
                });
            }
        }
        for i in 0..n {
            let hits = self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8;
            if hits > 1 {
                return Err(Error::InvalidConfig(format!("node {i} belongs to more than one split")));
            }
        }
        Ok(())
    }

    pub(crate) fn select(&self, keep: &[usize]) -> Self {
        let pick = |m: &[bool]| keep.iter().map(|&i| m[i]).collect();
        Self {
            train: pick(&self.train),
            val: pick(&self.val),
            test: pick(&self.test),
        }
    }
}

/// Undirected weighted graph with optional node data.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    adjacency: SparseSym,
    pub features: Option<Mat<f64>>,
    pub labels: Option<Vec<usize>>,
    pub masks: Option<SplitMasks>,
}

impl Graph {
    pub fn new(adjacency: SparseSym) -> Result<Self> {
        for (i, j, v) in adjacency.iter() {
            if i == j {
                return Err(Error::SelfLoop(i));
            }
            if v < 0.0 {
                return Err(Error::NegativeWeight(i, j));
            }
        }
        Ok(Self {
            adjacency,
            features: None,
            labels: None,
            masks: None,
        })
    }

    /// Unit-weight graph from an undirected edge list.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let triplets: Vec<_> = edges
            .iter()
            .flat_map(|&(i, j)| [(i, j, 1.0), (j, i, 1.0)])
            .collect();
        Self::new(SparseSym::from_triplets(n, &triplets)?)
    }

    pub fn with_features(mut self, features: Mat<f64>) -> Result<Self> {
        if features.nrows() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "feature rows",
                expected: self.num_nodes(),
                found: features.nrows(),
            });
        }
        self.features = Some(features);
        Ok(self)
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.num_nodes() {
            return Err(Error::DimensionMismatch {
                what: "labels",
                expected: self.num_nodes(),
                found: labels.len(),
            });
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn with_masks(mut self, masks: SplitMasks) -> Result<Self> {
        masks.validate(self.num_nodes())?;
        self.masks = Some(masks);
        Ok(self)
    }

    pub fn adjacency(&self) -> &SparseSym {
        &self.adjacency
    }

    pub fn num_nodes(&self) -> usize {
        self.adjacency.dim()
    }

    /// Number of undirected edges (each stored pair counted once).
    pub fn num_edges(&self) -> usize {
        self.adjacency.iter().filter(|&(i, j, _)| i < j).count()
    }

    /// Undirected edges `(i, j, w)` with `i < j`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize, f64)> {
        self.adjacency.iter().filter(|&(i, j, _)| i < j).collect()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| l.iter().max().map_or(0, |m| m + 1))
    }

    /// Connected component index of each node; components are numbered in
    /// order of their smallest node id.
    pub fn connected_components(&self) -> (usize, Vec<usize>) {
        connected_components(&self.adjacency)
    }

    /// Induced subgraph on `keep` (new node `k` is old node `keep[k]`).
    pub fn induced_subgraph(&self, keep: &[usize]) -> Self {
        let adjacency = SparseSym::new(self.adjacency.principal_submatrix(keep))
            .expect("principal submatrix of a symmetric matrix is symmetric");
        Self {
            adjacency,
            features: self
                .features
                .as_ref()
                .map(|f| Mat::from_fn(keep.len(), f.ncols(), |i, j| f[(keep[i], j)])),
            labels: self.labels.as_ref().map(|l| keep.iter().map(|&i| l[i]).collect()),
            masks: self.masks.as_ref().map(|m| m.select(keep)),
        }
    }

    pub fn laplacian(&self, kind: LaplacianKind) -> Result<SparseSym> {
        build_laplacian(&self.adjacency, kind)
    }

    pub fn propagation(&self, kind: PropagationKind) -> Result<Csr> {
        build_propagation(&self.adjacency, kind)
    }
}

pub(crate) fn connected_components(adjacency: &Csr) -> (usize, Vec<usize>) {
    let n = adjacency.nrows();
    let mut comp = vec![usize::MAX; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        comp[start] = count;
        stack.push(start);
        while let Some(u) = stack.pop() {
            for &v in adjacency.row(u).0 {
                if comp[v] == usize::MAX {
                    comp[v] = count;
                    stack.push(v);
                }
            }
        }
        count += 1;
    }
    (count, comp)
}

/// Which p.s.d. "Laplacian" defines the seminorm.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LaplacianKind {
    /// `D - A`
    Combinatorial,
    /// `I - D^{-1/2} A D^{-1/2}`
    NormalizedSym,
    /// `(1 + delta) I - S` with `S` the GCN-normalized propagation matrix.
    ShiftedPropagation { delta: f64 },
}

impl LaplacianKind {
    pub const DEFAULT_DELTA: f64 = 0.001;

    pub fn shifted() -> Self {
        Self::ShiftedPropagation {
            delta: Self::DEFAULT_DELTA,
        }
    }
}

impl fmt::Display for LaplacianKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Combinatorial => write!(f, "comb"),
            Self::NormalizedSym => write!(f, "norm"),
            Self::ShiftedPropagation { delta } => write!(f, "shifted:{delta}"),
        }
    }
}

impl FromStr for LaplacianKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "comb" | "combinatorial" => Ok(Self::Combinatorial),
            "norm" | "normalized" => Ok(Self::NormalizedSym),
            "shifted" => Ok(Self::shifted()),
            _ => {
                let delta = s
                    .strip_prefix("shifted:")
                    .and_then(|d| d.parse::<f64>().ok())
                    .ok_or_else(|| Error::InvalidConfig(format!("unknown laplacian `{s}`")))?;
                if !(delta > 0.0) {
                    return Err(Error::InvalidConfig(format!("shift delta must be positive, got {delta}")));
                }
                Ok(Self::ShiftedPropagation { delta })
            }
        }
    }
}

/// Message-passing propagation matrix.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagationKind {
    /// `A`
    Adjacency,
    /// `D^{-1} A`, row-stochastic and generally asymmetric.
    MeanAgg,
    /// `D(Â)^{-1/2} Â D(Â)^{-1/2}` with `Â = A + I`.
    GcnNorm,
}

impl fmt::Display for PropagationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Adjacency => "adj",
            Self::MeanAgg => "mean",
            Self::GcnNorm => "gcn",
        })
    }
}

impl FromStr for PropagationKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adj" | "adjacency" => Ok(Self::Adjacency),
            "mean" => Ok(Self::MeanAgg),
            "gcn" => Ok(Self::GcnNorm),
            _ => Err(Error::InvalidConfig(format!("unknown propagation `{s}`"))),
        }
    }
}

fn inv_sqrt_degrees(adjacency: &Csr) -> Result<Vec<f64>> {
    adjacency
        .row_sums()
        .into_iter()
        .enumerate()
        .map(|(i, d)| if d > 0.0 { Ok(1.0 / d.sqrt()) } else { Err(Error::ZeroDegree(i)) })
        .collect()
}

pub fn build_propagation(adjacency: &SparseSym, kind: PropagationKind) -> Result<Csr> {
    let a = adjacency.as_csr();
    match kind {
        PropagationKind::Adjacency => Ok(a.clone()),
        PropagationKind::MeanAgg => {
            let inv: Vec<f64> = a
                .row_sums()
                .into_iter()
                .enumerate()
                .map(|(i, d)| if d > 0.0 { Ok(1.0 / d) } else { Err(Error::ZeroDegree(i)) })
                .collect::<Result<_>>()?;
            Ok(a.scale(&inv, &vec![1.0; a.ncols()]))
        }
        PropagationKind::GcnNorm => {
            let a_hat = a.add_scaled(1.0, &Csr::identity(a.nrows()), 1.0);
            let d = inv_sqrt_degrees(&a_hat)?;
            Ok(a_hat.scale(&d, &d))
        }
    }
}

pub fn build_laplacian(adjacency: &SparseSym, kind: LaplacianKind) -> Result<SparseSym> {
    let a = adjacency.as_csr();
    let n = a.nrows();
    let l = match kind {
        LaplacianKind::Combinatorial => Csr::from_diagonal(&a.row_sums()).add_scaled(1.0, a, -1.0),
        LaplacianKind::NormalizedSym => {
            let d = inv_sqrt_degrees(a)?;
            Csr::identity(n).add_scaled(1.0, &a.scale(&d, &d), -1.0)
        }
        LaplacianKind::ShiftedPropagation { delta } => {
            if !(delta > 0.0) {
                return Err(Error::InvalidConfig(format!("shift delta must be positive, got {delta}")));
            }
            let s = build_propagation(adjacency, PropagationKind::GcnNorm)?;
            Csr::identity(n).add_scaled(1.0 + delta, &s, -1.0)
        }
    };
    SparseSym::new(l)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path2() -> Graph {
        Graph::from_edges(2, &[(0, 1)]).unwrap()
    }

    #[test]
    fn combinatorial_on_path() {
        let l = path2().laplacian(LaplacianKind::Combinatorial).unwrap().to_dense();
        assert_eq!(l[(0, 0)], 1.0);
        assert_eq!(l[(0, 1)], -1.0);
        assert_eq!(l[(1, 0)], -1.0);
        assert_eq!(l[(1, 1)], 1.0);
    }

    #[test]
    fn combinatorial_of_edgeless_graph_is_zero() {
        let g = Graph::from_edges(3, &[]).unwrap();
        assert_eq!(g.laplacian(LaplacianKind::Combinatorial).unwrap().nnz(), 0);
    }

    #[test]
    fn normalized_rejects_isolated_node() {
        let g = Graph::from_edges(3, &[(0, 1)]).unwrap();
        assert!(matches!(g.laplacian(LaplacianKind::NormalizedSym), Err(Error::ZeroDegree(2))));
    }

    #[test]
    fn propagation_examples() {
        let single = Graph::from_edges(1, &[]).unwrap();
        let s = single.propagation(PropagationKind::GcnNorm).unwrap();
        assert_eq!(s.get(0, 0), 1.0);

        let mean = path2().propagation(PropagationKind::MeanAgg).unwrap().to_dense();
        assert_eq!(mean[(0, 1)], 1.0);
        assert_eq!(mean[(1, 0)], 1.0);
        assert_eq!(mean[(0, 0)], 0.0);

        let gcn = path2().propagation(PropagationKind::GcnNorm).unwrap().to_dense();
        for i in 0..2 {
            for j in 0..2 {
                assert!((gcn[(i, j)] - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn mean_agg_rejects_isolated_node() {
        let g = Graph::from_edges(2, &[]).unwrap();
        assert!(matches!(g.propagation(PropagationKind::MeanAgg), Err(Error::ZeroDegree(0))));
    }

    #[test]
    fn laplacian_kind_parsing() {
        assert_eq!("comb".parse::<LaplacianKind>().unwrap(), LaplacianKind::Combinatorial);
        assert_eq!(
            "shifted:0.01".parse::<LaplacianKind>().unwrap(),
            LaplacianKind::ShiftedPropagation { delta: 0.01 }
        );
        assert!("shifted:-1".parse::<LaplacianKind>().is_err());
        assert!("shifted:0".parse::<LaplacianKind>().is_err());
    }

    #[test]
    fn rejects_self_loops_and_negative_weights() {
        let loops = SparseSym::from_triplets(2, &[(0, 0, 1.0)]).unwrap();
        assert!(matches!(Graph::new(loops), Err(Error::SelfLoop(0))));
        let neg = SparseSym::from_triplets(2, &[(0, 1, -1.0), (1, 0, -1.0)]).unwrap();
        assert!(matches!(Graph::new(neg), Err(Error::NegativeWeight(0, 1))));
    }

    #[test]
    fn components_ordered_by_smallest_id() {
        let g = Graph::from_edges(5, &[(3, 4), (0, 2)]).unwrap();
        let (count, comp) = g.connected_components();
        assert_eq!(count, 3);
        assert_eq!(comp, vec![0, 1, 0, 2, 2]);
    }

    #[test]
    fn overlapping_masks_rejected() {
        let masks = SplitMasks {
            train: vec![true, false],
            val: vec![true, false],
            test: vec![false, true],
        };
        assert!(path2().with_masks(masks).is_err());
    }
}
