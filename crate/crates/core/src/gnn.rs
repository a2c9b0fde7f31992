//! SGC and two-layer GCN node classifiers with hand-written gradients,
//! trained with Adam on the full graph or on a coarsened graph whose
//! logits are lifted back to the original nodes.

use std::fmt;
use std::str::FromStr;

use faer::{Mat, MatRef};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::coarsening::Coarsening;
use crate::error::{Error, Result};
use crate::graph::SplitMasks;
use crate::mp::propagate;
use crate::sparse::Csr;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    /// L2 coefficient added to the gradient before the Adam update.
    pub weight_decay: f64,
    pub hidden: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            weight_decay: 0.01,
            hidden: 16,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.weight_decay >= 0.0) || self.hidden == 0 {
            return Err(Error::InvalidConfig(format!(
                "learning rate must be positive, weight decay non-negative and hidden width non-zero: {self:?}"
            )));
        }
        Ok(())
    }
}

/// Which architecture to build: `sgc:<k>` or `gcn:<hidden>`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelSpec {
    Sgc { k: usize },
    Gcn { hidden: usize },
}

impl fmt::Display for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Sgc { k } => write!(f, "sgc:{k}"),
            Self::Gcn { hidden } => write!(f, "gcn:{hidden}"),
        }
    }
}

impl FromStr for ModelSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidConfig(format!("model must look like sgc:<k> or gcn:<hidden>, got '{s}'"));
        let (name, arg) = s.split_once(':').unwrap_or((s, ""));
        match name.to_ascii_lowercase().as_str() {
            "sgc" => Ok(Self::Sgc {
                k: if arg.is_empty() { 2 } else { arg.parse().map_err(|_| bad())? },
            }),
            "gcn" => {
                let hidden = if arg.is_empty() { 16 } else { arg.parse().map_err(|_| bad())? };
                if hidden == 0 {
                    return Err(bad());
                }
                Ok(Self::Gcn { hidden })
            }
            _ => Err(bad()),
        }
    }
}

/// `logits = (S^k X) W`, no bias and no hidden non-linearity.
#[derive(Clone, Debug, PartialEq)]
pub struct SgcModel {
    pub k: usize,
    pub weights: Mat<f64>,
    pub trained: bool,
}

/// `logits = S ReLU(S X W1) W2`.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnModel {
    pub w1: Mat<f64>,
    pub w2: Mat<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Sgc(SgcModel),
    Gcn(GcnModel),
}

fn uniform_init(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    let bound = 1.0 / (rows as f64).sqrt();
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect();
    Mat::from_fn(rows, cols, |i, j| values[i * cols + j])
}

impl Model {
    /// Uniform `±1/√fan_in` initialization from a seeded ChaCha8 stream.
    pub fn init(spec: ModelSpec, in_dim: usize, num_classes: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        match spec {
            ModelSpec::Sgc { k } => Model::Sgc(SgcModel {
                k,
                weights: uniform_init(&mut rng, in_dim, num_classes),
                trained: false,
            }),
            ModelSpec::Gcn { hidden } => {
                let w1 = uniform_init(&mut rng, in_dim, hidden);
                let w2 = uniform_init(&mut rng, hidden, num_classes);
                Model::Gcn(GcnModel { w1, w2 })
            }
        }
    }

    pub fn spec(&self) -> ModelSpec {
        match self {
            Model::Sgc(m) => ModelSpec::Sgc { k: m.k },
            Model::Gcn(m) => ModelSpec::Gcn { hidden: m.w1.ncols() },
        }
    }

    pub fn params(&self) -> Vec<&Mat<f64>> {
        match self {
            Model::Sgc(m) => vec![&m.weights],
            Model::Gcn(m) => vec![&m.w1, &m.w2],
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Mat<f64>> {
        match self {
            Model::Sgc(m) => vec![&mut m.weights],
            Model::Gcn(m) => vec![&mut m.w1, &mut m.w2],
        }
    }

    /// Logits on the nodes of the graph that `op` acts on.
    pub fn forward(&self, op: &Csr, x: MatRef<'_, f64>) -> Mat<f64> {
        let pre = Prepared::new(self.spec(), op, x);
        self.logits(&pre)
    }

    fn logits(&self, pre: &Prepared) -> Mat<f64> {
        match self {
            Model::Sgc(m) => &pre.features * &m.weights,
            Model::Gcn(m) => {
                let mut h = &pre.features * &m.w1;
                relu(&mut h);
                pre.op.mul_dense((&h * &m.w2).as_ref())
            }
        }
    }

    /// Loss on the (lifted) logits and gradients w.r.t. every parameter.
    fn loss_and_grads(&self, pre: &Prepared, labels: &[usize], mask: &[bool]) -> Result<(f64, Vec<Mat<f64>>)> {
        let (logits, hidden) = match self {
            Model::Sgc(m) => (&pre.features * &m.weights, None),
            Model::Gcn(m) => {
                let z1 = &pre.features * &m.w1;
                let mut h = z1.clone();
                relu(&mut h);
                let logits = pre.op.mul_dense((&h * &m.w2).as_ref());
                (logits, Some((z1, h)))
            }
        };
        let lifted = pre.lift(logits);
        let (loss, g) = cross_entropy_masked(lifted.as_ref(), labels, mask)?;
        let g = pre.pull_back(g);
        let grads = match (self, hidden) {
            (Model::Sgc(_), _) => vec![pre.features.transpose() * &g],
            (Model::Gcn(m), Some((z1, h))) => {
                let st_g = pre.op_t.mul_dense(g.as_ref());
                let dw2 = h.transpose() * &st_g;
                let mut dz1 = &st_g * m.w2.transpose();
                for j in 0..dz1.ncols() {
                    for i in 0..dz1.nrows() {
                        if z1[(i, j)] <= 0.0 {
                            dz1[(i, j)] = 0.0;
                        }
                    }
                }
                let dw1 = pre.features.transpose() * &dz1;
                vec![dw1, dw2]
            }
            (Model::Gcn(_), None) => unreachable!("hidden activations are always kept for the GCN"),
        };
        Ok((loss, grads))
    }
}

fn relu(m: &mut Mat<f64>) {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if m[(i, j)] <= 0.0 {
                m[(i, j)] = 0.0;
            }
        }
    }
}

/// Everything that stays fixed across epochs: the propagated input
/// (`S^k X` for SGC, `S X` for GCN), `S^T`, and the optional lift.
struct Prepared<'a> {
    op: &'a Csr,
    op_t: Csr,
    features: Mat<f64>,
    lift: Option<(&'a Csr, Csr)>,
}

impl<'a> Prepared<'a> {
    fn new(spec: ModelSpec, op: &'a Csr, x: MatRef<'_, f64>) -> Self {
        let features = match spec {
            ModelSpec::Sgc { k } => propagate(op, x, k),
            ModelSpec::Gcn { .. } => op.mul_dense(x),
        };
        Self {
            op,
            op_t: op.transpose(),
            features,
            lift: None,
        }
    }

    fn with_lift(mut self, c: &'a Coarsening) -> Self {
        self.lift = Some((c.q_plus(), c.q_plus().transpose()));
        self
    }

    fn lift(&self, logits: Mat<f64>) -> Mat<f64> {
        match &self.lift {
            Some((q_plus, _)) => q_plus.mul_dense(logits.as_ref()),
            None => logits,
        }
    }

    fn pull_back(&self, g: Mat<f64>) -> Mat<f64> {
        match &self.lift {
            Some((_, q_plus_t)) => q_plus_t.mul_dense(g.as_ref()),
            None => g,
        }
    }
}

/// `S^k X` by repeated sparse-dense products.
pub fn sgc_precompute(s: &Csr, x: MatRef<'_, f64>, k: usize) -> Mat<f64> {
    propagate(s, x, k)
}

/// Mean softmax cross-entropy over the rows selected by `mask`, and its
/// gradient w.r.t. `logits` (zero on unselected rows).
pub fn cross_entropy_masked(logits: MatRef<'_, f64>, labels: &[usize], mask: &[bool]) -> Result<(f64, Mat<f64>)> {
    let (n, c) = (logits.nrows(), logits.ncols());
    if labels.len() != n || mask.len() != n {
        return Err(Error::DimensionMismatch {
            what: "labels or mask",
            expected: n,
            found: if labels.len() != n { labels.len() } else { mask.len() },
        });
    }
    let m = mask.iter().filter(|&&b| b).count();
    if m == 0 {
        return Err(Error::EmptyMask);
    }
    let inv_m = 1.0 / m as f64;
    let mut grad = Mat::zeros(n, c);
    let mut loss = 0.0;
    for i in (0..n).filter(|&i| mask[i]) {
        if labels[i] >= c {
            return Err(Error::InvalidConfig(format!("label {} of node {i} exceeds {c} classes", labels[i])));
        }
        let top = (0..c).map(|j| logits[(i, j)]).fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..c).map(|j| (logits[(i, j)] - top).exp()).sum();
        let log_denom = denom.ln();
        loss -= logits[(i, labels[i])] - top - log_denom;
        for j in 0..c {
            let p = (logits[(i, j)] - top - log_denom).exp();
            grad[(i, j)] = (p - if j == labels[i] { 1.0 } else { 0.0 }) * inv_m;
        }
    }
    Ok((loss * inv_m, grad))
}

/// Fraction of masked rows whose argmax (lowest index on ties) matches the
/// label; NaN on an empty mask.
pub fn accuracy(logits: MatRef<'_, f64>, labels: &[usize], mask: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in (0..logits.nrows()).filter(|&i| mask[i]) {
        let mut best = 0;
        for j in 1..logits.ncols() {
            if logits[(i, j)] > logits[(i, best)] {
                best = j;
            }
        }
        hits += usize::from(best == labels[i]);
        total += 1;
    }
    if total == 0 {
        f64::NAN
    } else {
        hits as f64 / total as f64
    }
}

/// Accuracy of `model` run on `op` and `x`, lifted by `lift` when given.
pub fn evaluate(
    model: &Model,
    op: &Csr,
    lift: Option<&Coarsening>,
    x: MatRef<'_, f64>,
    labels: &[usize],
    mask: &[bool],
) -> f64 {
    let logits = model.forward(op, x);
    let logits = match lift {
        Some(c) => c.lift_mat(logits.as_ref()),
        None => logits,
    };
    accuracy(logits.as_ref(), labels, mask)
}

/// Full-graph loss and gradient for an SGC model.
pub fn sgc_forward_backward(
    model: &SgcModel,
    s: &Csr,
    x: MatRef<'_, f64>,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, Mat<f64>)> {
    let wrapped = Model::Sgc(model.clone());
    let pre = Prepared::new(wrapped.spec(), s, x);
    let (loss, mut grads) = wrapped.loss_and_grads(&pre, labels, mask)?;
    Ok((loss, grads.remove(0)))
}

/// Full-graph loss and gradients `(dW1, dW2)` for a GCN model.
pub fn gcn_forward_backward(
    model: &GcnModel,
    s: &Csr,
    x: MatRef<'_, f64>,
    labels: &[usize],
    mask: &[bool],
) -> Result<(f64, Vec<Mat<f64>>)> {
    let wrapped = Model::Gcn(model.clone());
    let pre = Prepared::new(wrapped.spec(), s, x);
    wrapped.loss_and_grads(&pre, labels, mask)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    /// Parameters of the epoch with the best validation accuracy.
    pub model: Model,
    pub metrics: Vec<EpochMetrics>,
    /// 0 when no epoch beat the initialization.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
}

/// Metrics as CSV with an `epoch,loss,train_acc,val_acc,test_acc` header.
pub fn metrics_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,loss,train_acc,val_acc,test_acc\n");
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            m.epoch, m.loss, m.train_acc, m.val_acc, m.test_acc
        ));
    }
    out
}

struct Adam {
    first: Vec<Mat<f64>>,
    second: Vec<Mat<f64>>,
    step: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(params: &[&Mat<f64>]) -> Self {
        let zeros = || params.iter().map(|p| Mat::zeros(p.nrows(), p.ncols())).collect();
        Self {
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    fn update(&mut self, params: Vec<&mut Mat<f64>>, grads: &[Mat<f64>], lr: f64) {
        self.step += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.step);
        let c2 = 1.0 - Self::BETA2.powi(self.step);
        for (idx, p) in params.into_iter().enumerate() {
            let (m, v, g) = (&mut self.first[idx], &mut self.second[idx], &grads[idx]);
            for j in 0..p.ncols() {
                for i in 0..p.nrows() {
                    let gij = g[(i, j)];
                    m[(i, j)] = Self::BETA1 * m[(i, j)] + (1.0 - Self::BETA1) * gij;
                    v[(i, j)] = Self::BETA2 * v[(i, j)] + (1.0 - Self::BETA2) * gij * gij;
                    let m_hat = m[(i, j)] / c1;
                    let v_hat = v[(i, j)] / c2;
                    p[(i, j)] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
                }
            }
        }
    }
}

fn check_inputs(x: MatRef<'_, f64>, labels: &[usize], masks: &SplitMasks) -> Result<usize> {
    let n = x.nrows();
    if labels.len() != n || masks.len() != n {
        return Err(Error::DimensionMismatch {
            what: "labels or masks",
            expected: n,
            found: if labels.len() != n { labels.len() } else { masks.len() },
        });
    }
    masks.validate(n)?;
    Ok(labels.iter().max().map_or(0, |m| m + 1))
}

fn run_training(
    mut model: Model,
    pre: &Prepared,
    labels: &[usize],
    masks: &SplitMasks,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    let accuracies = |m: &Model| {
        let logits = pre.lift(m.logits(pre));
        (
            accuracy(logits.as_ref(), labels, &masks.train),
            accuracy(logits.as_ref(), labels, &masks.val),
            accuracy(logits.as_ref(), labels, &masks.test),
        )
    };
    let mut adam = Adam::new(&model.params());
    let mut best = model.clone();
    let (_, mut best_val, mut best_test) = accuracies(&model);
    let mut best_epoch = 0;
    let mut metrics = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let (loss, mut grads) = model.loss_and_grads(pre, labels, &masks.train)?;
        if !loss.is_finite() {
            let norms: Vec<f64> = model.params().iter().map(|p| p.norm_l2()).collect();
            return Err(Error::Diverged {
                epoch,
                loss,
                state: serde_json::json!({ "model": model.spec(), "param_norms": norms }).to_string(),
            });
        }
        if cfg.weight_decay > 0.0 {
            for (g, p) in grads.iter_mut().zip(model.params()) {
                *g += cfg.weight_decay * p;
            }
        }
        adam.update(model.params_mut(), &grads, cfg.learning_rate);

        let (train_acc, val_acc, test_acc) = accuracies(&model);
        metrics.push(EpochMetrics {
            epoch,
            loss,
            train_acc,
            val_acc,
            test_acc,
        });
        if val_acc > best_val || (best_val.is_nan() && !val_acc.is_nan()) {
            best_val = val_acc;
            best_test = test_acc;
            best_epoch = epoch;
            best = model.clone();
        }
    }
    if cfg.epochs > 0 && best_val.is_nan() {
        best = model;
        best_epoch = cfg.epochs;
        best_test = metrics.last().map_or(f64::NAN, |m| m.test_acc);
    }
    if let Model::Sgc(m) = &mut best {
        m.trained = cfg.epochs > 0;
    }
    Ok(TrainReport {
        model: best,
        metrics,
        best_epoch,
        best_val_acc: best_val,
        test_acc: best_test,
    })
}

/// Minimizes the masked cross-entropy of `model` on the full graph.
pub fn train_full(
    spec: ModelSpec,
    s: &Csr,
    x: MatRef<'_, f64>,
    labels: &[usize],
    masks: &SplitMasks,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let classes = check_inputs(x, labels, masks)?;
    let model = Model::init(spec, x.ncols(), classes, cfg.seed);
    let pre = Prepared::new(spec, s, x);
    run_training(model, &pre, labels, masks, cfg)
}

/// Runs the model on `(Q X, s_c)`, lifts its logits with `Q^+` and fits the
/// original labels on the original training nodes.
pub fn train_coarse(
    spec: ModelSpec,
    s_c: &Csr,
    c: &Coarsening,
    x: MatRef<'_, f64>,
    labels: &[usize],
    masks: &SplitMasks,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    let classes = check_inputs(x, labels, masks)?;
    if s_c.nrows() != c.num_super() || x.nrows() != c.num_nodes() {
        return Err(Error::DimensionMismatch {
            what: "coarse operator",
            expected: c.num_super(),
            found: s_c.nrows(),
        });
    }
    let model = Model::init(spec, x.ncols(), classes, cfg.seed);
    let x_c = c.coarsen_mat(x);
    let pre = Prepared::new(spec, s_c, x_c.as_ref()).with_lift(c);
    run_training(model, &pre, labels, masks, cfg)
}

/// Projects every row of `w` onto the ℓ1 ball of the given radius.
pub fn project_rows_l1(w: &mut Mat<f64>, radius: f64) {
    for i in 0..w.nrows() {
        let row: Vec<f64> = (0..w.ncols()).map(|j| w[(i, j)]).collect();
        if row.iter().map(|v| v.abs()).sum::<f64>() <= radius {
            continue;
        }
        let mut mags: Vec<f64> = row.iter().map(|v| v.abs()).collect();
        mags.sort_by(|a, b| b.total_cmp(a));
        let mut cumulative = 0.0;
        let mut tau = 0.0;
        for (idx, &m) in mags.iter().enumerate() {
            cumulative += m;
            let t = (cumulative - radius) / (idx + 1) as f64;
            if m > t {
                tau = t;
            }
        }
        for (j, v) in row.iter().enumerate() {
            w[(i, j)] = v.signum() * (v.abs() - tau).max(0.0);
        }
    }
}

/// Result of a constrained linear fit.
#[derive(Clone, Debug)]
pub struct ConstrainedFit {
    pub weights: Mat<f64>,
    pub loss: f64,
    pub iterations: usize,
}

/// Minimizes the masked cross-entropy of `features · W` over
/// `{W : every row has ℓ1 norm <= radius}` by projected gradient descent
/// with backtracking, stopping when the projected step moves less than
/// `tol`.
pub fn fit_linear_constrained(
    features: MatRef<'_, f64>,
    labels: &[usize],
    mask: &[bool],
    num_classes: usize,
    radius: f64,
    tol: f64,
    max_iter: usize,
) -> Result<ConstrainedFit> {
    let mut w = Mat::<f64>::zeros(features.ncols(), num_classes);
    let objective = |w: &Mat<f64>| cross_entropy_masked((features * w).as_ref(), labels, mask);
    let (mut loss, mut g_logits) = objective(&w)?;
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let grad = features.transpose() * &g_logits;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = &w - step * &grad;
            project_rows_l1(&mut cand, radius);
            let delta = &cand - &w;
            let (cand_loss, cand_g) = objective(&cand)?;
            let lin: f64 = (0..grad.ncols())
                .flat_map(|j| (0..grad.nrows()).map(move |i| (i, j)))
                .map(|(i, j)| grad[(i, j)] * delta[(i, j)])
                .sum();
            let sq = delta.norm_l2().powi(2);
            if cand_loss <= loss + lin + sq / (2.0 * step) + 1e-15 {
                accepted = Some((cand, cand_loss, cand_g, sq.sqrt()));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, cand_loss, cand_g, moved)) = accepted else {
            break;
        };
        w = cand;
        loss = cand_loss;
        g_logits = cand_g;
        if moved < tol {
            break;
        }
        step *= 1.5;
    }
    Ok(ConstrainedFit {
        weights: w,
        loss,
        iterations,
    })
}
