mod common;

use coarsemp::mp::{coarse_operator, lifted_mp, propagate, CoarseOperatorKind};
use coarsemp::{
    coarse_laplacian_check, rsa_constant, Coarsening, Csr, Graph, LaplacianKind, PropagationKind, SemiNormContext,
};
use common::*;
use faer::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(seed: u64, n: usize) -> (ChaCha8Rng, Graph) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let extra = rng.random_range(0..2 * n);
    let g = random_connected_graph(&mut rng, n, extra);
    (rng, g)
}

fn random_coarsening(rng: &mut ChaCha8Rng, n: usize, weighted: bool) -> Coarsening {
    let num_super = rng.random_range(1..=n);
    let assignment = random_assignment(rng, n, num_super);
    let weights = weighted.then(|| (0..n).map(|_| rng.random_range(0.1..2.0)).collect());
    Coarsening::from_partition(assignment, weights).unwrap()
}

fn identity(n: usize) -> Mat<f64> {
    Mat::from_fn(n, n, |i, j| if i == j { 1.0 } else { 0.0 })
}

fn triplet_dense(rows: usize, cols: usize, triplets: &[(usize, usize, f64)]) -> Mat<f64> {
    let mut m = Mat::zeros(rows, cols);
    for &(i, j, v) in triplets {
        m[(i, j)] += v;
    }
    m
}

fn triplets(rows: usize, cols: usize) -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..rows, 0..cols, -4.0f64..4.0), 0..3 * rows * cols)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn csr_ops_match_dense(
        (rows, cols, a, b, x) in (1usize..9, 1usize..9).prop_flat_map(|(r, c)| (
            Just(r),
            Just(c),
            triplets(r, c),
            triplets(r, c),
            prop::collection::vec(-3.0f64..3.0, c),
        ))
    ) {
        let sa = Csr::from_triplets(rows, cols, &a);
        let sb = Csr::from_triplets(rows, cols, &b);
        let da = triplet_dense(rows, cols, &a);
        let db = triplet_dense(rows, cols, &b);
        prop_assert!(max_abs_diff(&sa.to_dense(), &da) <= 1e-12);
        prop_assert!(max_abs_diff(&sa.transpose().to_dense(), &da.transpose().to_owned()) <= 1e-12);
        prop_assert!(max_abs_diff(&sa.matmul(&sb.transpose()).to_dense(), &(&da * db.transpose())) <= 1e-10);
        prop_assert!(max_abs_diff(&sa.add_scaled(2.0, &sb, -0.5).to_dense(), &(2.0 * &da - 0.5 * &db)) <= 1e-12);
        let y = sa.mul_vec(&x);
        for i in 0..rows {
            let expected: f64 = (0..cols).map(|j| da[(i, j)] * x[j]).sum();
            prop_assert!((y[i] - expected).abs() <= 1e-10);
        }
    }

    #[test]
    fn coarsening_matrices_are_consistent(seed in any::<u64>(), n in 2usize..30, weighted in any::<bool>()) {
        let (mut rng, _) = instance(seed, n);
        let c = random_coarsening(&mut rng, n, weighted);
        let q = dense(c.q());
        let q_plus = dense(c.q_plus());
        let pi = dense(&c.pi());
        prop_assert!(max_abs_diff(&(&q * &q_plus), &identity(c.num_super())) <= 1e-12);
        prop_assert!(max_abs_diff(&(&pi * &pi), &pi) <= 1e-12);
        prop_assert!(max_abs_diff(&pi, &pi.transpose().to_owned()) <= 1e-12);
        if !weighted {
            prop_assert!(max_abs_diff(&pi, &block_average(c.assignment())) <= 1e-12);
        }
    }

    #[test]
    fn lifted_mp_operator_is_projected_propagation(seed in any::<u64>(), n in 2usize..30, weighted in any::<bool>()) {
        let (mut rng, g) = instance(seed, n);
        let c = random_coarsening(&mut rng, n, weighted);
        for prop in [PropagationKind::Adjacency, PropagationKind::MeanAgg, PropagationKind::GcnNorm] {
            let s = g.propagation(prop).unwrap();
            let s_mp = coarse_operator(&s, prop, g.adjacency(), &c, CoarseOperatorKind::Mp).unwrap();
            let pi = dense(&c.pi());
            let oracle = &pi * dense(&s) * &pi;
            let lifted = dense(&c.q_plus().matmul(&s_mp).matmul(c.q()));
            prop_assert!(max_abs_diff(&lifted, &oracle) <= 1e-10);
            prop_assert!(max_abs_diff(&dense(&lifted_mp(&s, &c)), &oracle) <= 1e-10);
        }
    }

    #[test]
    fn coarse_combinatorial_laplacian_is_projected(seed in any::<u64>(), n in 2usize..40) {
        let (mut rng, g) = instance(seed, n);
        let c = random_coarsening(&mut rng, n, false);
        let residual = coarse_laplacian_check(&c, g.adjacency(), LaplacianKind::Combinatorial).unwrap();
        prop_assert!(residual <= 1e-10);
    }

    #[test]
    fn epsilon_respects_finite_bound(seed in any::<u64>(), n in 4usize..30, comb in any::<bool>()) {
        let (mut rng, g) = instance(seed, n);
        let kind = if comb { LaplacianKind::Combinatorial } else { LaplacianKind::shifted() };
        let ctx = SemiNormContext::new(g.laplacian(kind).unwrap()).unwrap();
        let basis = ctx.preserved_subspace(rng.random_range(2..=n / 2)).unwrap();
        let c = random_coarsening(&mut rng, n, false);
        let report = rsa_constant(&c, &basis, &ctx).unwrap();
        prop_assert!(report.epsilon >= 0.0);
        prop_assert!(report.epsilon <= report.finite_bound + 1e-6);
        let identity = rsa_constant(&Coarsening::identity(n), &basis, &ctx).unwrap();
        prop_assert!(identity.epsilon <= 1e-7);
    }

    #[test]
    fn operator_seminorm_is_submultiplicative(seed in any::<u64>(), n in 2usize..20) {
        let (mut rng, g) = instance(seed, n);
        let ctx = SemiNormContext::new(g.laplacian(LaplacianKind::shifted()).unwrap()).unwrap();
        let m = gaussian_mat(&mut rng, n, n);
        let x = gaussian_mat(&mut rng, n, 1);
        let mx = &m * &x;
        let lhs = ctx.column_seminorm(mx.as_ref(), 0).unwrap();
        let rhs = ctx.operator_seminorm(&m).unwrap() * ctx.column_seminorm(x.as_ref(), 0).unwrap();
        prop_assert!(lhs <= rhs * (1.0 + 1e-9) + 1e-12);
    }

    #[test]
    fn composition_multiplies_coarsening_matrices(seed in any::<u64>(), n in 2usize..30, weighted in any::<bool>()) {
        let (mut rng, _) = instance(seed, n);
        let first = random_coarsening(&mut rng, n, weighted);
        let second = random_coarsening(&mut rng, first.num_super(), weighted);
        let chained = first.then(&second).unwrap();
        let oracle = dense(second.q()) * dense(first.q());
        prop_assert!(max_abs_diff(&dense(chained.q()), &oracle) <= 1e-12);
        prop_assert_eq!(chained.num_super(), second.num_super());
    }

    #[test]
    fn propagation_matches_dense_powers(seed in any::<u64>(), n in 2usize..30, k in 0usize..4) {
        let (mut rng, g) = instance(seed, n);
        let s = g.propagation(PropagationKind::GcnNorm).unwrap();
        let x = gaussian_mat(&mut rng, n, 3);
        let d = dense(&s);
        let mut oracle = x.clone();
        for _ in 0..k {
            oracle = &d * &oracle;
        }
        prop_assert!(max_abs_diff(&propagate(&s, x.as_ref(), k), &oracle) <= 1e-10);
    }
}
