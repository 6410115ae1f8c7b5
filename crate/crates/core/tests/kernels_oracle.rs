//! Structured kernels against dense products with materialized adjacency.

use ingnn::fixed::{quantize, FixedVal, Q12_12};
use ingnn::kernels::{aggregate_outer, dense_mmm, gather_b1_b2, reduction_report, OpCounter};
use ingnn::{make_adjacency, ColMatrix, GraphConfig, IntMatrix, Matrix};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_close(a: &Matrix, b: &Matrix) -> bool {
    a.rows() == b.rows()
        && a.cols() == b.cols()
        && a.as_slice().iter().zip(b.as_slice()).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300))
}

#[test]
fn real_kernels_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..60 {
        let (n_o, p, d_e) = (rng.gen_range(2..=50), rng.gen_range(1..=16), rng.gen_range(1..=16));
        let g = GraphConfig::new(n_o, p).unwrap();
        let adj = make_adjacency(g);
        let i: Matrix = ColMatrix::from_col_major(p, n_o, (0..p * n_o).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
        let (b1, b2) = gather_b1_b2(&i, &adj, &mut ()).unwrap();
        assert!(rel_close(&b1, &dense_mmm(&i, &adj.materialize_rr(0.0, 1.0), &mut ()).unwrap()));
        assert!(rel_close(&b2, &dense_mmm(&i, &adj.materialize_rs(0.0, 1.0), &mut ()).unwrap()));

        let e: Matrix =
            ColMatrix::from_col_major(d_e, g.n_e(), (0..d_e * g.n_e()).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap();
        let dense = dense_mmm(&e, &adj.materialize_rr(0.0, 1.0).transpose(), &mut ()).unwrap();
        assert!(rel_close(&aggregate_outer(&e, &adj, &mut ()).unwrap(), &dense));
    }
}

#[test]
fn integer_and_fixed_kernels_are_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..40 {
        let (n_o, p, d_e) = (rng.gen_range(2..=40), rng.gen_range(1..=8), rng.gen_range(1..=8));
        let g = GraphConfig::new(n_o, p).unwrap();
        let adj = make_adjacency(g);

        let e: IntMatrix =
            ColMatrix::from_col_major(d_e, g.n_e(), (0..d_e * g.n_e()).map(|_| rng.gen_range(-1000..1000)).collect()).unwrap();
        let dense = dense_mmm(&e, &adj.materialize_rr(0i64, 1).transpose(), &mut ()).unwrap();
        assert_eq!(aggregate_outer(&e, &adj, &mut ()).unwrap(), dense);

        let fx = |x: f64| quantize(x, Q12_12).unwrap();
        let i = ColMatrix::from_col_major(p, n_o, (0..p * n_o).map(|_| fx(rng.gen_range(-8.0..8.0))).collect()).unwrap();
        let (b1, _) = gather_b1_b2(&i, &adj, &mut ()).unwrap();
        let rr = adj.materialize_rr(FixedVal::zero(Q12_12), fx(1.0));
        assert_eq!(b1, dense_mmm(&i, &rr, &mut ()).unwrap());
    }
}

#[test]
fn aggregation_reads_sequentially() {
    let g = GraphConfig::new(30, 16).unwrap();
    let adj = make_adjacency(g);
    let e: Matrix = ColMatrix::filled(8, g.n_e(), 1.0);
    let mut c = OpCounter::new();
    aggregate_outer(&e, &adj, &mut c).unwrap();
    assert_eq!((c.additions, c.multiplications, c.nonsequential_reads), (6960, 0, 0));
    assert_eq!(c.reads, 6960);
}

#[test]
fn dense_counters_match_closed_form() {
    let g = GraphConfig::new(30, 16).unwrap();
    let adj = make_adjacency(g);
    let e: Matrix = ColMatrix::filled(8, g.n_e(), 1.0);
    let mut c = OpCounter::new();
    dense_mmm(&e, &adj.materialize_rr(0.0, 1.0).transpose(), &mut c).unwrap();
    assert_eq!(c.multiplications, 8 * 870 * 30);
    let r = reduction_report(g, 8);
    assert_eq!(c.multiplications, r.mmm3.dense_mults);
    assert_eq!(c.iterations, r.mmm3.dense_iterations);
}

proptest! {
    #[test]
    fn gather_columns_are_receiver_and_sender(n_o in 2usize..20, p in 1usize..5) {
        let g = GraphConfig::new(n_o, p).unwrap();
        let adj = make_adjacency(g);
        let i: IntMatrix = ColMatrix::from_col_major(p, n_o, (0..(p * n_o) as i64).collect()).unwrap();
        let (b1, b2) = gather_b1_b2(&i, &adj, &mut ()).unwrap();
        for e in 0..g.n_e() {
            prop_assert_eq!(b1.column(e), i.column(adj.receiver(e)));
            prop_assert_eq!(b2.column(e), i.column(adj.sender(e)));
        }
    }
}
