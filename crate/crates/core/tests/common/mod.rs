#![allow(dead_code)]

use std::collections::BTreeSet;

use coarsemp::{Csr, Graph};
use faer::Mat;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Connected unit-weight graph: a random recursive tree plus `extra` random
/// chords.
pub fn random_connected_graph(rng: &mut ChaCha8Rng, n: usize, extra: usize) -> Graph {
    let mut edges = BTreeSet::new();
    for i in 1..n {
        let j = rng.random_range(0..i);
        edges.insert((j, i));
    }
    if n > 2 {
        for _ in 0..extra {
            let a = rng.random_range(0..n);
            let b = rng.random_range(0..n);
            if a != b {
                edges.insert((a.min(b), a.max(b)));
            }
        }
    }
    let edges: Vec<_> = edges.into_iter().collect();
    Graph::from_edges(n, &edges).unwrap()
}

/// Surjective assignment of `n` nodes onto `num_super` super-nodes.
pub fn random_assignment(rng: &mut ChaCha8Rng, n: usize, num_super: usize) -> Vec<usize> {
    let mut assignment: Vec<usize> = (0..n)
        .map(|i| if i < num_super { i } else { rng.random_range(0..num_super) })
        .collect();
    assignment.shuffle(rng);
    assignment
}

/// `Π` of a uniform coarsening built straight from its assignment.
pub fn block_average(assignment: &[usize]) -> Mat<f64> {
    let n = assignment.len();
    let num_super = assignment.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; num_super];
    for &a in assignment {
        sizes[a] += 1;
    }
    Mat::from_fn(n, n, |i, j| {
        if assignment[i] == assignment[j] {
            1.0 / sizes[assignment[i]] as f64
        } else {
            0.0
        }
    })
}

pub fn dense(m: &Csr) -> Mat<f64> {
    let mut out = Mat::zeros(m.nrows(), m.ncols());
    for (i, j, v) in m.iter() {
        out[(i, j)] += v;
    }
    out
}

pub fn max_abs_diff(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    let mut worst: f64 = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            worst = worst.max((a[(i, j)] - b[(i, j)]).abs());
        }
    }
    worst
}

pub fn quad_form(m: &Mat<f64>, x: &[f64]) -> f64 {
    let n = x.len();
    (0..n)
        .map(|i| x[i] * (0..n).map(|j| m[(i, j)] * x[j]).sum::<f64>())
        .sum()
}

/// Mean softmax cross-entropy over masked rows via log-sum-exp.
pub fn mean_cross_entropy(logits: &Mat<f64>, labels: &[usize], mask: &[bool]) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in (0..logits.nrows()).filter(|&i| mask[i]) {
        let row: Vec<f64> = (0..logits.ncols()).map(|j| logits[(i, j)]).collect();
        let top = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = top + row.iter().map(|v| (v - top).exp()).sum::<f64>().ln();
        total += lse - row[labels[i]];
        count += 1;
    }
    total / count as f64
}

pub fn relu(m: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)].max(0.0))
}

pub fn gaussian_mat(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Mat<f64> {
    use rand_distr::StandardNormal;
    let values: Vec<f64> = (0..rows * cols).map(|_| rng.sample(StandardNormal)).collect();
    Mat::from_fn(rows, cols, |i, j| values[i * cols + j])
}

/// `||a - b||_F / max(||a||_F, ||b||_F)`, zero when both vanish.
pub fn rel_err(a: &Mat<f64>, b: &Mat<f64>) -> f64 {
    let scale = a.norm_l2().max(b.norm_l2());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).norm_l2() / scale
    }
}

/// Central finite-difference gradient of `f` at `w`.
pub fn fd_gradient(w: &Mat<f64>, h: f64, mut f: impl FnMut(&Mat<f64>) -> f64) -> Mat<f64> {
    let mut grad = Mat::zeros(w.nrows(), w.ncols());
    let mut probe = w.clone();
    for j in 0..w.ncols() {
        for i in 0..w.nrows() {
            let orig = probe[(i, j)];
            probe[(i, j)] = orig + h;
            let up = f(&probe);
            probe[(i, j)] = orig - h;
            let down = f(&probe);
            probe[(i, j)] = orig;
            grad[(i, j)] = (up - down) / (2.0 * h);
        }
    }
    grad
}
