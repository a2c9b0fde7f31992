//! Greedy edge-contraction coarsening driven by a local-variation cost,
//! generalized to any Laplacian `L = f_L(A)`.
//!
//! Each sweep scores every current edge, keeps the cheapest non-overlapping
//! ones (at most `n_e` merges per sweep), contracts them with a uniform
//! sweep coarsening, and rebuilds `A`, `L` and the cost basis on the smaller
//! graph. The accumulated coarsening is optionally made uniform at the end,
//! and the oriented coarse operator `Q S Q^+` is returned with it.

use std::cmp::Ordering;

use faer::Mat;
use log::debug;
use serde::{Deserialize, Serialize};

use crate::coarsening::{coarsen_adjacency, Coarsening};
use crate::error::{Error, Result};
use crate::graph::{build_laplacian, connected_components, Graph, LaplacianKind};
use crate::linalg::{self, sym_pinv_sqrt};
use crate::seminorm::{SemiNormContext, SpectralBasis};
use crate::sparse::{Csr, SparseSym};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoukasConfig {
    /// Target coarsening ratio `r = 1 - n/N`.
    pub ratio: f64,
    /// Maximum number of merges per sweep (`None` = unbounded).
    pub max_merges_per_sweep: Option<usize>,
    pub force_uniform: bool,
    /// Dimension `K` of the preserved subspace.
    pub subspace_dim: usize,
}

impl LoukasConfig {
    /// `K = ceil(N/10)`, `n_e = ceil(0.05 N)`, uniform output.
    pub fn with_defaults(num_nodes: usize, ratio: f64) -> Self {
        Self {
            ratio,
            max_merges_per_sweep: Some(default_max_merges(num_nodes)),
            force_uniform: true,
            subspace_dim: default_subspace_dim(num_nodes),
        }
    }

    /// `int(N - N r)`, at least 1.
    pub fn target_size(&self, num_nodes: usize) -> Result<usize> {
        if !(0.0..1.0).contains(&self.ratio) {
            return Err(Error::InvalidConfig(format!("ratio must lie in [0, 1), got {}", self.ratio)));
        }
        if self.max_merges_per_sweep == Some(0) {
            return Err(Error::InvalidConfig("n_e must be positive".into()));
        }
        let n = num_nodes as f64;
        // the small offset keeps e.g. 1000 - 1000*0.3 from truncating to 699
        let target = (n - n * self.ratio + 1e-9).floor() as usize;
        if target == 0 {
            return Err(Error::InvalidConfig(format!(
                "ratio {} leaves no super-node for {num_nodes} nodes",
                self.ratio
            )));
        }
        Ok(target)
    }
}

pub fn default_subspace_dim(num_nodes: usize) -> usize {
    num_nodes.div_ceil(10).max(1)
}

pub fn default_max_merges(num_nodes: usize) -> usize {
    ((0.05 * num_nodes as f64).ceil() as usize).max(1)
}

#[derive(Clone, Debug)]
pub struct LoukasOutput {
    pub coarsening: Coarsening,
    /// `Q S Q^+`
    pub s_mp: Csr,
    /// Set when some component ran out of edges before reaching its target.
    pub exhausted: bool,
    pub sweeps: usize,
}

/// Contraction cost of edge `(i, j)` given the current Laplacian and the
/// normalized cost basis `M = B (B^T L B)^{-1/2}`.
///
/// With `P_C` the averaging projector over `{i, j}`, `(I - P_C) M_C = u d^T`
/// for `u = (1, -1)/√2` and `d = (m_i - m_j)/√2`, so the `L_C`-norm reduces
/// to `sqrt(u^T L_C u) * ||d||` with `L_C` the principal 2x2 block of `L`.
fn edge_cost(l: &Csr, m: &Mat<f64>, i: usize, j: usize) -> f64 {
    let local = 0.5 * (l.get(i, i) + l.get(j, j) - 2.0 * l.get(i, j));
    let diff: f64 = (0..m.ncols()).map(|c| (m[(i, c)] - m[(j, c)]).powi(2)).sum::<f64>() * 0.5;
    (local.max(0.0) * diff).sqrt()
}

/// Costs within `1e-12` of the sweep's natural scale compare equal, so
/// rounding noise cannot override the `(min id, max id)` tie-break.
fn cost_key(cost: f64, scale: f64) -> i64 {
    if scale > 0.0 {
        (cost / scale * 1e12).round() as i64
    } else {
        0
    }
}

struct ComponentRun {
    coarsening: Coarsening,
    exhausted: bool,
    sweeps: usize,
}

fn coarsen_component(
    adjacency: &SparseSym,
    kind: LaplacianKind,
    b0: Mat<f64>,
    target: usize,
    max_merges: Option<usize>,
) -> Result<ComponentRun> {
    let big_n = adjacency.dim();
    let mut adj = adjacency.clone();
    let mut b = b0;
    let mut total = Coarsening::identity(big_n);
    let mut exhausted = false;
    let mut sweeps = 0;

    while adj.dim() > target {
        let n = adj.dim();
        let edges: Vec<(usize, usize)> = adj.iter().filter(|&(i, j, _)| i < j).map(|(i, j, _)| (i, j)).collect();
        if edges.is_empty() {
            exhausted = true;
            break;
        }
        let l = build_laplacian(&adj, kind)?;
        let lb = l.mul_dense(b.as_ref());
        let mut gram = b.transpose() * &lb;
        linalg::symmetrize(&mut gram);
        let m = &b * sym_pinv_sqrt(gram.as_ref())?;

        let local_max = l.diagonal().iter().fold(0.0_f64, |a, &d| a.max(d.abs())) * 2.0;
        let row_max = (0..n)
            .map(|i| (0..m.ncols()).map(|c| m[(i, c)].powi(2)).sum::<f64>())
            .fold(0.0_f64, f64::max);
        let scale = (local_max * row_max).sqrt();

        let mut scored: Vec<(i64, usize, usize)> = edges
            .iter()
            .map(|&(i, j)| (cost_key(edge_cost(&l, &m, i, j), scale), i, j))
            .collect();
        scored.sort();

        let budget = (n - target).min(max_merges.unwrap_or(usize::MAX));
        let mut partner = vec![usize::MAX; n];
        let mut merged = 0;
        for &(_, i, j) in &scored {
            if merged == budget {
                break;
            }
            if partner[i] != usize::MAX || partner[j] != usize::MAX {
                continue;
            }
            partner[i] = j;
            partner[j] = i;
            merged += 1;
        }

        let mut assign = vec![usize::MAX; n];
        let mut next = 0;
        for u in 0..n {
            let p = partner[u];
            if p != usize::MAX && p < u {
                assign[u] = assign[p];
            } else {
                assign[u] = next;
                next += 1;
            }
        }
        let sweep = Coarsening::uniform(assign)?;
        b = sweep.q().mul_dense(b.as_ref());
        adj = SparseSym::new(coarsen_adjacency(&sweep, &adj)?.without_diagonal())?;
        total = total.then(&sweep)?;
        sweeps += 1;
        debug!("sweep {sweeps}: merged {merged} pairs, {} super-nodes left", adj.dim());
    }

    Ok(ComponentRun {
        coarsening: total,
        exhausted,
        sweeps,
    })
}

/// Splits the global target over components in proportion to their sizes
/// (largest remainder), keeping every component between 1 and its size.
fn split_target(sizes: &[usize], target: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let shares: Vec<f64> = sizes.iter().map(|&s| s as f64 * target as f64 / total as f64).collect();
    let mut out: Vec<usize> = shares
        .iter()
        .zip(sizes)
        .map(|(&f, &s)| (f.floor() as usize).clamp(1, s))
        .collect();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let mut assigned: usize = out.iter().sum();
    while assigned < target {
        let Some(&c) = order.iter().find(|&&c| out[c] < sizes[c]) else {
            break;
        };
        out[c] += 1;
        assigned += 1;
        order.retain(|&o| o != c);
        order.push(c);
    }
    out
}

/// Greedy coarsening of `g` preserving the subspace spanned by `basis`.
///
/// `ctx` must be the seminorm context of `kind` on `g`; `s` is the
/// propagation matrix used to form the returned `Q S Q^+`. Disconnected
/// graphs are coarsened one component at a time with budgets proportional
/// to component size, so no super-node ever spans two components.
pub fn loukas_coarsen(
    g: &Graph,
    kind: LaplacianKind,
    ctx: &SemiNormContext,
    basis: &SpectralBasis,
    cfg: &LoukasConfig,
    s: &Csr,
) -> Result<LoukasOutput> {
    let big_n = g.num_nodes();
    if ctx.dim() != big_n || basis.ambient_dim() != big_n || s.nrows() != big_n || s.ncols() != big_n {
        return Err(Error::DimensionMismatch {
            what: "loukas inputs",
            expected: big_n,
            found: if ctx.dim() != big_n { ctx.dim() } else { basis.ambient_dim() },
        });
    }
    let target = cfg.target_size(big_n)?;

    // B_0 = V V^T L^{-1/2}; only B B^T matters for the costs, so use the thin
    // factor V (V^T L^+ V)^{1/2}.
    let v = basis.vectors.as_ref();
    let t = ctx.pinv_sqrt_l() * v;
    let mut inner = t.transpose() * &t;
    linalg::symmetrize(&mut inner);
    let inner_sqrt = linalg::spectral_function(&linalg::sym_eigen(inner.as_ref())?, |x| x.max(0.0).sqrt());
    let b0 = v * &inner_sqrt;

    let (num_comp, comp) = connected_components(g.adjacency());
    let (coarsening, exhausted, sweeps) = if num_comp == 1 {
        let run = coarsen_component(g.adjacency(), kind, b0, target, cfg.max_merges_per_sweep)?;
        (run.coarsening, run.exhausted, run.sweeps)
    } else {
        let mut members = vec![Vec::new(); num_comp];
        for (i, &c) in comp.iter().enumerate() {
            members[c].push(i);
        }
        let mut assignment = vec![usize::MAX; big_n];
        let mut weights = vec![1.0; big_n];
        let mut next = 0;
        let mut exhausted = false;
        let mut sweeps = 0;
        let targets = split_target(&members.iter().map(Vec::len).collect::<Vec<_>>(), target);
        for (nodes, &local_target) in members.iter().zip(&targets) {
            let size = nodes.len();
            let local_merges = cfg
                .max_merges_per_sweep
                .map(|m| ((m as f64 * size as f64 / big_n as f64).ceil() as usize).max(1));
            let sub_adj = SparseSym::new(g.adjacency().principal_submatrix(nodes))?;
            let sub_b0 = Mat::from_fn(size, b0.ncols(), |r, c| b0[(nodes[r], c)]);
            let run = coarsen_component(&sub_adj, kind, sub_b0, local_target, local_merges)?;
            exhausted |= run.exhausted;
            sweeps = sweeps.max(run.sweeps);
            for (r, &i) in nodes.iter().enumerate() {
                assignment[i] = next + run.coarsening.assignment()[r];
                weights[i] = run.coarsening.weights()[r];
            }
            next += run.coarsening.num_super();
        }
        // renumber super-nodes by their smallest member
        let mut remap = vec![usize::MAX; next];
        let mut counter = 0;
        for a in assignment.iter_mut() {
            if remap[*a] == usize::MAX {
                remap[*a] = counter;
                counter += 1;
            }
            *a = remap[*a];
        }
        (Coarsening::from_partition(assignment, Some(weights))?, exhausted, sweeps)
    };

    // components cannot merge with each other, so many small ones may leave
    // more super-nodes than requested
    let exhausted = exhausted || coarsening.num_super() > target;
    let coarsening = if cfg.force_uniform {
        coarsening.to_uniform()
    } else {
        coarsening
    };
    if exhausted {
        log::warn!(
            "coarsening stopped at {} super-nodes before reaching the target {target}: no edges left",
            coarsening.num_super()
        );
    }
    let s_mp = coarsening.q().matmul(s).matmul(coarsening.q_plus());
    Ok(LoukasOutput {
        coarsening,
        s_mp,
        exhausted,
        sweeps,
    })
}

/// Orders `(cost, i, j)` triples the same way the greedy selection does;
/// exposed for tests.
pub fn compare_candidates(a: (f64, usize, usize), b: (f64, usize, usize)) -> Ordering {
    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::PropagationKind;

    fn setup(g: &Graph, kind: LaplacianKind, k: usize) -> (SemiNormContext, SpectralBasis, Csr) {
        let ctx = SemiNormContext::new(g.laplacian(kind).unwrap()).unwrap();
        let basis = ctx.spectral_subspace(k).unwrap();
        let s = g.propagation(PropagationKind::GcnNorm).unwrap();
        (ctx, basis, s)
    }

    #[test]
    fn zero_ratio_is_identity() {
        let g = crate::toy::six_node_graph();
        let (ctx, basis, s) = setup(&g, LaplacianKind::shifted(), 2);
        let cfg = LoukasConfig {
            ratio: 0.0,
            ..LoukasConfig::with_defaults(6, 0.0)
        };
        let out = loukas_coarsen(&g, LaplacianKind::shifted(), &ctx, &basis, &cfg, &s).unwrap();
        assert_eq!(out.coarsening, Coarsening::identity(6));
        assert_eq!(out.s_mp, s);
        assert_eq!(out.sweeps, 0);
    }

    #[test]
    fn triangle_merges_lowest_edge_on_tie() {
        let g = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        for kind in [LaplacianKind::shifted(), LaplacianKind::Combinatorial] {
            let (ctx, basis, s) = setup(&g, kind, 1);
            let cfg = LoukasConfig {
                ratio: 1.0 / 3.0,
                max_merges_per_sweep: None,
                force_uniform: true,
                subspace_dim: 1,
            };
            let out = loukas_coarsen(&g, kind, &ctx, &basis, &cfg, &s).unwrap();
            assert_eq!(out.coarsening.assignment(), &[0, 0, 1]);
            assert_eq!(out.sweeps, 1);
        }
    }

    #[test]
    fn target_size_validation() {
        let mut cfg = LoukasConfig::with_defaults(10, 0.3);
        assert_eq!(cfg.target_size(1000).unwrap(), 700);
        cfg.ratio = 1.0;
        assert!(cfg.target_size(10).is_err());
        cfg.ratio = 0.95;
        assert!(cfg.target_size(10).is_err());
    }

    #[test]
    fn edgeless_graph_is_flagged_exhausted() {
        let g = Graph::from_edges(4, &[(0, 1)]).unwrap();
        let (ctx, basis, s) = setup(&g, LaplacianKind::shifted(), 2);
        let cfg = LoukasConfig {
            ratio: 0.5,
            max_merges_per_sweep: None,
            force_uniform: true,
            subspace_dim: 2,
        };
        let out = loukas_coarsen(&g, LaplacianKind::shifted(), &ctx, &basis, &cfg, &s).unwrap();
        assert!(out.exhausted);
        // the only edge got contracted, isolated nodes stay alone
        assert_eq!(out.coarsening.assignment(), &[0, 0, 1, 2]);
    }

    #[test]
    fn merges_never_cross_components() {
        let g = Graph::from_edges(6, &[(0, 1), (1, 2), (3, 4), (4, 5)]).unwrap();
        let (ctx, basis, s) = setup(&g, LaplacianKind::shifted(), 2);
        let cfg = LoukasConfig {
            ratio: 0.5,
            max_merges_per_sweep: None,
            force_uniform: true,
            subspace_dim: 2,
        };
        let out = loukas_coarsen(&g, LaplacianKind::shifted(), &ctx, &basis, &cfg, &s).unwrap();
        let a = out.coarsening.assignment();
        for i in 0..3 {
            for j in 3..6 {
                assert_ne!(a[i], a[j]);
            }
        }
        assert_eq!(out.coarsening.num_super(), 3);
        assert!(!out.exhausted);
    }

    #[test]
    fn target_split_is_proportional() {
        assert_eq!(split_target(&[6, 3, 1], 5), vec![3, 1, 1]);
        assert_eq!(split_target(&[2, 1, 1], 2), vec![1, 1, 1]);
        assert_eq!(split_target(&[4, 4], 6), vec![3, 3]);
    }

    #[test]
    fn candidate_ordering() {
        assert_eq!(compare_candidates((1.0, 0, 2), (1.0, 0, 1)), Ordering::Greater);
        assert_eq!(compare_candidates((0.5, 3, 4), (1.0, 0, 1)), Ordering::Less);
    }
}
