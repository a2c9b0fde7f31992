//! Coarse propagation operators, message-passing error and bound
//! certificates.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::coarsening::{coarsen_adjacency, rsa_constant, Coarsening};
use crate::error::{Error, Result};
use crate::graph::{build_propagation, PropagationKind};
use crate::seminorm::{check_preserving, SemiNormContext, SpectralBasis};
use crate::sparse::{col_vec, Csr, SparseSym};

/// Leakage below this (relative to the operator's largest entry, floored
/// at 1) counts as an exactly preserved subspace.
pub const PRESERVING_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoarseOperatorKind {
    /// `Q S Q^+`
    Mp,
    /// `f_S(A_c)`
    Naive,
    /// `D'^{-1/2} (A_c + diag(n_k)) D'^{-1/2}`
    Diag,
    /// `Q S Q^T`
    Diff,
    /// `(Q^+)^T S Q^+`
    Sym,
}

impl CoarseOperatorKind {
    pub const ALL: [CoarseOperatorKind; 5] = [Self::Mp, Self::Naive, Self::Diag, Self::Diff, Self::Sym];

    /// Kinds whose construction only makes sense for a symmetric `S`.
    pub fn requires_symmetric(self) -> bool {
        matches!(self, Self::Diff | Self::Sym)
    }
}

impl fmt::Display for CoarseOperatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mp => "mp",
            Self::Naive => "naive",
            Self::Diag => "diag",
            Self::Diff => "diff",
            Self::Sym => "sym",
        })
    }
}

impl FromStr for CoarseOperatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mp" => Ok(Self::Mp),
            "naive" => Ok(Self::Naive),
            "diag" => Ok(Self::Diag),
            "diff" => Ok(Self::Diff),
            "sym" => Ok(Self::Sym),
            other => Err(Error::InvalidConfig(format!(
                "unknown coarse operator '{other}' (expected mp, naive, diag, diff or sym)"
            ))),
        }
    }
}

fn is_symmetric(s: &Csr) -> bool {
    s.asymmetry() <= 1e-12 * s.max_abs().max(1.0)
}

/// Builds the `n x n` coarse propagation matrix of the given kind.
///
/// `prop` is the rule that produced `s` from `adjacency`; it is reused by
/// the `Naive` kind on the coarsened adjacency.
pub fn coarse_operator(
    s: &Csr,
    prop: PropagationKind,
    adjacency: &SparseSym,
    c: &Coarsening,
    kind: CoarseOperatorKind,
) -> Result<Csr> {
    let big_n = c.num_nodes();
    if s.nrows() != big_n || s.ncols() != big_n {
        return Err(Error::DimensionMismatch {
            what: "propagation matrix",
            expected: big_n,
            found: s.nrows(),
        });
    }
    if kind.requires_symmetric() && !is_symmetric(s) {
        return Err(Error::Unsupported(format!(
            "the {kind} operator needs a symmetric propagation matrix (asymmetry {:.3e})",
            s.asymmetry()
        )));
    }
    Ok(match kind {
        CoarseOperatorKind::Mp => c.q().matmul(s).matmul(c.q_plus()),
        CoarseOperatorKind::Diff => c.q().matmul(s).matmul(&c.q().transpose()),
        CoarseOperatorKind::Sym => c.q_plus().transpose().matmul(s).matmul(c.q_plus()),
        CoarseOperatorKind::Naive => build_propagation(&coarsen_adjacency(c, adjacency)?, prop)?,
        CoarseOperatorKind::Diag => {
            let a_c = coarsen_adjacency(c, adjacency)?;
            let sizes: Vec<f64> = c.cluster_sizes().iter().map(|&k| k as f64).collect();
            let m = a_c.add_scaled(1.0, &Csr::from_diagonal(&sizes), 1.0);
            let d: Vec<f64> = m.row_sums().iter().map(|&x| 1.0 / x.sqrt()).collect();
            m.scale(&d, &d)
        }
    })
}

/// `S^k X` by repeated sparse products.
pub fn propagate(s: &Csr, x: MatRef<'_, f64>, k: usize) -> Mat<f64> {
    let mut out = x.to_owned();
    for _ in 0..k {
        out = s.mul_dense(out.as_ref());
    }
    out
}

/// `||S^k x - Q^+ S_c^k Q x||_L` for every column `x` of `xs`.
pub fn mp_errors(
    s: &Csr,
    s_c: &Csr,
    c: &Coarsening,
    xs: MatRef<'_, f64>,
    k: usize,
    ctx: &SemiNormContext,
) -> Result<Vec<f64>> {
    if xs.nrows() != c.num_nodes() {
        return Err(Error::DimensionMismatch {
            what: "signal length",
            expected: c.num_nodes(),
            found: xs.nrows(),
        });
    }
    if s_c.nrows() != c.num_super() || s_c.ncols() != c.num_super() {
        return Err(Error::DimensionMismatch {
            what: "coarse operator",
            expected: c.num_super(),
            found: s_c.nrows(),
        });
    }
    let fine = propagate(s, xs, k);
    let coarse = propagate(s_c, c.coarsen_mat(xs).as_ref(), k);
    let diff = fine - c.lift_mat(coarse.as_ref());
    (0..diff.ncols()).map(|j| ctx.column_seminorm(diff.as_ref(), j)).collect()
}

pub fn mp_error(s: &Csr, s_c: &Csr, c: &Coarsening, x: &[f64], k: usize, ctx: &SemiNormContext) -> Result<f64> {
    Ok(mp_errors(s, s_c, c, col_vec(x).as_ref(), k, ctx)?[0])
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssumptionFlags {
    pub kernel_preserving_pi: bool,
    pub kernel_preserving_s: bool,
    #[serde(rename = "R_preserving_S")]
    pub r_preserving_s: bool,
}

impl AssumptionFlags {
    pub fn all(&self) -> bool {
        self.kernel_preserving_pi && self.kernel_preserving_s && self.r_preserving_s
    }
}

/// Measured `||(I - B B^T) M B||` for each preservation hypothesis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Leakages {
    pub kernel_pi: f64,
    pub kernel_s: f64,
    pub subspace_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub epsilon: f64,
    #[serde(rename = "C_S")]
    pub c_s: f64,
    #[serde(rename = "C_Pi")]
    pub c_pi: f64,
    #[serde(rename = "C_Pi_bar")]
    pub c_pi_bar: f64,
    pub assumption_flags: AssumptionFlags,
    pub leakages: Leakages,
}

fn preserved(leak: f64, scale: f64) -> bool {
    leak <= PRESERVING_TOL * scale.max(1.0)
}

impl BoundConstants {
    /// Computes `ε`, `||S||_L`, `||Π S||_L`, `||Π S Π||_L` and checks the
    /// preservation hypotheses. Uses dense `N x N` intermediates.
    pub fn compute(s: &Csr, c: &Coarsening, basis: &SpectralBasis, ctx: &SemiNormContext) -> Result<Self> {
        let epsilon = rsa_constant(c, basis, ctx)?.epsilon;
        Self::with_epsilon(epsilon, s, c, basis, ctx)
    }

    pub fn with_epsilon(
        epsilon: f64,
        s: &Csr,
        c: &Coarsening,
        basis: &SpectralBasis,
        ctx: &SemiNormContext,
    ) -> Result<Self> {
        let pi = c.pi();
        let pi_s = pi.matmul(s);
        let pi_s_pi = pi_s.matmul(&pi);
        let kernel = ctx.kernel_basis();
        let leakages = Leakages {
            kernel_pi: check_preserving(&pi, kernel),
            kernel_s: check_preserving(s, kernel),
            subspace_s: check_preserving(s, basis.vectors.as_ref()),
        };
        let assumption_flags = AssumptionFlags {
            kernel_preserving_pi: preserved(leakages.kernel_pi, pi.max_abs()),
            kernel_preserving_s: preserved(leakages.kernel_s, s.max_abs()),
            r_preserving_s: preserved(leakages.subspace_s, s.max_abs()),
        };
        Ok(Self {
            epsilon,
            c_s: ctx.operator_seminorm(s)?,
            c_pi: ctx.operator_seminorm(&pi_s)?,
            c_pi_bar: ctx.operator_seminorm(&pi_s_pi)?,
            assumption_flags,
            leakages,
        })
    }
}

/// `sum_{l=1..k} C̄_Π^{k-l} C_S^{l-1}`
fn depth_factor(c_s: f64, c_pi_bar: f64, k: usize) -> f64 {
    (1..=k)
        .map(|l| c_pi_bar.powi((k - l) as i32) * c_s.powi(l as i32 - 1))
        .sum()
}

/// `ε ||x||_L (C_S + C_Π)`
pub fn single_step_bound(consts: &BoundConstants, x_norm: f64) -> f64 {
    consts.epsilon * x_norm * (consts.c_s + consts.c_pi)
}

/// `ε ||x||_L (C_S + C_Π) sum_{l=1..k} C̄_Π^{k-l} C_S^{l-1}`
pub fn k_step_bound(consts: &BoundConstants, k: usize, x_norm: f64) -> Result<f64> {
    if k < 1 {
        return Err(Error::InvalidConfig("the k-step bound needs k >= 1".into()));
    }
    Ok(single_step_bound(consts, x_norm) * depth_factor(consts.c_s, consts.c_pi_bar, k))
}

/// Excess-risk bound `2 C_J C_σ^k C_Θ (C_S + C_Π) sum(...) ε ||X||_{:,L}`.
pub fn training_bound(
    consts: &BoundConstants,
    c_j: f64,
    c_sigma: f64,
    c_theta: f64,
    k: usize,
    x_cols_norm: f64,
) -> Result<f64> {
    Ok(2.0 * c_j * c_sigma.powi(k as i32) * c_theta * k_step_bound(consts, k, x_cols_norm)?)
}

/// Lipschitz constant of the mean softmax cross-entropy over `num_train`
/// rows w.r.t. `||.||_{:,L}`: each logit column of the gradient has
/// Euclidean norm at most `1/√m`, and `||.|| <= ||.||_L / √λ_min`.
pub fn cross_entropy_constant(num_train: usize, ctx: &SemiNormContext) -> Result<f64> {
    if num_train == 0 {
        return Err(Error::EmptyMask);
    }
    if ctx.kernel_dim() > 0 {
        return Err(Error::Unsupported(
            "the cross-entropy constant needs a positive definite Laplacian".into(),
        ));
    }
    Ok(1.0 / ((num_train as f64).sqrt() * ctx.lambda_min().sqrt()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub epsilon: f64,
    #[serde(rename = "C_S")]
    pub c_s: f64,
    #[serde(rename = "C_Pi")]
    pub c_pi: f64,
    #[serde(rename = "C_Pi_bar")]
    pub c_pi_bar: f64,
    pub k: usize,
    pub bound: f64,
    pub assumption_flags: AssumptionFlags,
    pub leakages: Leakages,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub warning: Option<String>,
}

impl BoundCertificate {
    pub fn new(consts: &BoundConstants, k: usize, x_norm: f64) -> Result<Self> {
        let warning = (!consts.assumption_flags.all()).then(|| {
            let f = consts.assumption_flags;
            let mut failed = Vec::new();
            if !f.kernel_preserving_pi {
                failed.push("Pi is not ker(L)-preserving");
            }
            if !f.kernel_preserving_s {
                failed.push("S is not ker(L)-preserving");
            }
            if !f.r_preserving_s {
                failed.push("S does not preserve the subspace");
            }
            format!("bound not claimed: {}", failed.join(", "))
        });
        Ok(Self {
            epsilon: consts.epsilon,
            c_s: consts.c_s,
            c_pi: consts.c_pi,
            c_pi_bar: consts.c_pi_bar,
            k,
            bound: k_step_bound(consts, k, x_norm)?,
            assumption_flags: consts.assumption_flags,
            leakages: consts.leakages,
            warning,
        })
    }

    pub fn claimed(&self) -> bool {
        self.warning.is_none()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ThetaConstants {
    /// `C_{θ,l}`: largest absolute row sum of layer `l`.
    pub per_layer: Vec<f64>,
    /// `C̄_{θ,l} = prod_{i<=l} C_{θ,i}`.
    pub products: Vec<f64>,
}

pub fn max_abs_row_sum(m: MatRef<'_, f64>) -> f64 {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)].abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn theta_constants(layers: &[MatRef<'_, f64>]) -> ThetaConstants {
    let per_layer: Vec<f64> = layers.iter().map(|m| max_abs_row_sum(*m)).collect();
    let products = per_layer
        .iter()
        .scan(1.0, |acc, &c| {
            *acc *= c;
            Some(*acc)
        })
        .collect();
    ThetaConstants { per_layer, products }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Identity,
    Relu,
}

impl Activation {
    fn apply(self, m: &mut Mat<f64>) {
        if self == Activation::Relu {
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    m[(i, j)] = m[(i, j)].max(0.0);
                }
            }
        }
    }
}

/// Per-layer errors `E_l` and norms `B_l` of a layered network run on the
/// full and on the coarse graph, with their theoretical counterparts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerwiseCertificate {
    /// `E_l` for `l = 1..k`.
    pub errors: Vec<f64>,
    /// `C_σ C_{θ,l} (ε (C_S + C_Π) B_{l-1} + C̄_Π E_{l-1})` with measured
    /// right-hand sides (`E_0` term absent since `H_c^0 = Q X`).
    pub error_recursion: Vec<f64>,
    /// The same recursion fed only with bounds, never measurements.
    pub error_bounds: Vec<f64>,
    /// `B_l` for `l = 0..k`.
    pub norms: Vec<f64>,
    /// `C̄_{θ,l} C_S^l C_σ^l ||X||_{:,L}` for `l = 0..k`.
    pub norm_bounds: Vec<f64>,
    pub c_sigma: f64,
    pub guaranteed: bool,
}

impl LayerwiseCertificate {
    /// True when every measured value sits under its bound up to `rtol`.
    pub fn holds(&self, rtol: f64) -> bool {
        let under = |v: f64, b: f64| v <= b + rtol * b.abs().max(1e-300) + 1e-14;
        self.errors
            .iter()
            .zip(&self.error_recursion)
            .chain(self.errors.iter().zip(&self.error_bounds))
            .chain(self.norms.iter().zip(&self.norm_bounds))
            .all(|(&v, &b)| under(v, b))
    }
}

/// Runs `H^l = σ(S H^{l-1} θ_l)` and `H_c^l = σ(S_c H_c^{l-1} θ_l)` from
/// `H^0 = X`, `H_c^0 = Q X` and measures the lifted error per layer.
#[allow(clippy::too_many_arguments)]
pub fn layerwise_error_certificate(
    s: &Csr,
    s_c: &Csr,
    c: &Coarsening,
    x: MatRef<'_, f64>,
    thetas: &[MatRef<'_, f64>],
    activation: Activation,
    consts: &BoundConstants,
    ctx: &SemiNormContext,
) -> Result<LayerwiseCertificate> {
    let c_sigma = match activation {
        Activation::Identity => 1.0,
        Activation::Relu => ctx.condition_sqrt(),
    };
    let theta = theta_constants(thetas);
    let x_norm = ctx.columns_seminorm(x)?;
    let mut h = x.to_owned();
    let mut h_c = c.coarsen_mat(x);
    let mut norms = vec![x_norm];
    let mut norm_bounds = vec![x_norm];
    let mut errors = Vec::new();
    let mut error_recursion = Vec::new();
    let mut error_bounds: Vec<f64> = Vec::new();
    let gain = consts.epsilon * (consts.c_s + consts.c_pi);

    for (l, th) in thetas.iter().enumerate() {
        if th.nrows() != h.ncols() {
            return Err(Error::DimensionMismatch {
                what: "layer input width",
                expected: h.ncols(),
                found: th.nrows(),
            });
        }
        let step = c_sigma * theta.per_layer[l];
        let prev_error = errors.last().copied().unwrap_or(0.0);
        let prev_error_bound = error_bounds.last().copied().unwrap_or(0.0);
        error_recursion.push(step * (gain * norms[l] + consts.c_pi_bar * prev_error));
        error_bounds.push(step * (gain * norm_bounds[l] + consts.c_pi_bar * prev_error_bound));

        h = s.mul_dense(h.as_ref()) * th;
        h_c = s_c.mul_dense(h_c.as_ref()) * th;
        activation.apply(&mut h);
        activation.apply(&mut h_c);

        let diff = &h - c.lift_mat(h_c.as_ref());
        errors.push(ctx.columns_seminorm(diff.as_ref())?);
        norms.push(ctx.columns_seminorm(h.as_ref())?);
        norm_bounds.push(theta.products[l] * (consts.c_s * c_sigma).powi(l as i32 + 1) * x_norm);
    }

    Ok(LayerwiseCertificate {
        errors,
        error_recursion,
        error_bounds,
        norms,
        norm_bounds,
        c_sigma,
        guaranteed: activation == Activation::Identity && consts.assumption_flags.all(),
    })
}

/// `Q^+ (Q S Q^+) Q`, which equals `Π S Π`.
pub fn lifted_mp(s: &Csr, c: &Coarsening) -> Csr {
    c.q_plus().matmul(&c.q().matmul(s).matmul(c.q_plus())).matmul(c.q())
}
